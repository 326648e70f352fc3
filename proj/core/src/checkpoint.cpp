#include "strucdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "strucdiff/config.hpp"
#include "strucdiff/errors.hpp"

namespace strucdiff {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "SDFCKPT1";
using json = nlohmann::ordered_json;

json cell_to_json(const Cell& c) {
  if (c.is_number()) return c.number();
  if (c.is_category()) return json{{"category", c.category()}};
  if (c.is_text()) return json{{"text", c.text()}};
  return nullptr;
}

Cell cell_from_json(const json& j) {
  if (j.is_null()) return Cell::missing();
  if (j.is_number()) return Cell::number(j.get<double>());
  if (j.is_object() && j.contains("category")) return Cell::category(j.at("category").get<int>());
  if (j.is_object() && j.contains("text")) return Cell::text(j.at("text").get<std::string>());
  throw SchemaError("checkpoint: malformed baseline cell");
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  json header;
  header["fingerprint"] = fingerprint_hex(ck.model.fingerprint());
  header["model_config"] = json::object();
  const Settings model_settings = to_settings(ck.model.config());
  for (const auto& [k, v] : model_settings.values()) header["model_config"][k] = v;
  header["schema"] = save_schema(ck.model.schema());
  header["train_settings"] = ck.train_settings;
  header["baseline"] = json::array();
  for (const auto& c : ck.baseline) header["baseline"].push_back(cell_to_json(c));
  header["tensors"] = json::array();
  std::size_t offset = 0;
  for (const auto& [name, p] : ck.model.parameters()) {
    header["tensors"].push_back({{"name", name}, {"rows", p.value.rows}, {"cols", p.value.cols}, {"offset", offset}});
    offset += p.value.data.size();
  }
  const std::string text = header.dump();

  std::string out(kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& [_, p] : ck.model.parameters())
    out.append(reinterpret_cast<const char*>(p.value.data.data()), p.value.data.size() * sizeof(double));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
    throw SchemaError("checkpoint: bad magic");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagic.size(), sizeof len);
  const std::size_t body = kMagic.size() + sizeof len;
  if (len > bytes.size() - body) throw SchemaError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(body, len));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  const std::string_view payload = bytes.substr(body + len);

  try {
    EntitySchema schema = load_schema(header.at("schema").get<std::string>());
    if (fingerprint_hex(schema_fingerprint(schema)) != header.at("fingerprint").get<std::string>())
      throw SchemaError("checkpoint: schema fingerprint mismatch");
    Settings settings;
    for (const auto& [k, v] : header.at("model_config").items()) settings.set(k, v.get<std::string>());
    ModelConfig config;
    apply(settings, config);

    std::map<std::string, Parameter> params;
    for (const auto& t : header.at("tensors")) {
      const int rows = t.at("rows").get<int>();
      const int cols = t.at("cols").get<int>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      Parameter p;
      p.name = t.at("name").get<std::string>();
      p.value = Tensor(rows, cols);
      const std::size_t nbytes = p.value.data.size() * sizeof(double);
      if (offset > payload.size() / sizeof(double) || nbytes > payload.size() - offset * sizeof(double))
        throw SchemaError("checkpoint: truncated tensor '" + p.name + "'");
      std::memcpy(p.value.data.data(), payload.data() + offset * sizeof(double), nbytes);
      params.emplace(p.name, std::move(p));
    }
    Checkpoint ck{Model::from_parameters(config, std::move(schema), std::move(params)), {}, header.value("train_settings", "")};
    for (const auto& c : header.at("baseline")) ck.baseline.push_back(cell_from_json(c));
    if (static_cast<int>(ck.baseline.size()) != ck.model.schema().size())
      throw SchemaError("checkpoint: baseline width does not match the schema");
    return ck;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace strucdiff
