#include "strucdiff/schema.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "strucdiff/errors.hpp"

namespace strucdiff {

using ojson = nlohmann::ordered_json;

std::string_view to_string(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::numerical: return "numerical";
    case PropertyKind::categorical: return "categorical";
    case PropertyKind::text: return "text";
    case PropertyKind::composite: return "composite";
  }
  return "unknown";
}

PropertyKind parse_kind(std::string_view name) {
  if (name == "numerical") return PropertyKind::numerical;
  if (name == "categorical") return PropertyKind::categorical;
  if (name == "text") return PropertyKind::text;
  if (name == "composite") return PropertyKind::composite;
  throw SchemaError("unknown property kind '" + std::string(name) + "'");
}

std::string default_text_vocab() {
  std::string v;
  for (char c = 32; c < 127; ++c) v.push_back(c);
  return v;
}

int PropertySpec::category_index(std::string_view label) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == label) return static_cast<int>(i);
  return -1;
}

namespace {

void validate_node(const PropertySpec& node) {
  if (node.kind == PropertyKind::composite) {
    if (node.children.empty()) throw SchemaError("composite property '" + node.path + "' has no children");
    return;
  }
  if (node.path.empty()) throw SchemaError("leaf property without a key");
  if (node.kind == PropertyKind::categorical) {
    if (node.categories.empty()) throw SchemaError("categorical property '" + node.path + "' has empty categories");
    std::set<std::string> seen;
    for (const auto& c : node.categories)
      if (!seen.insert(c).second) throw SchemaError("categorical property '" + node.path + "' repeats label '" + c + "'");
  }
  if (node.kind == PropertyKind::text) {
    if (node.text.max_length < 1) throw SchemaError("text property '" + node.path + "' needs max_length >= 1");
    std::set<char> seen(node.text.vocab.begin(), node.text.vocab.end());
    if (seen.size() != node.text.vocab.size() || seen.empty())
      throw SchemaError("text property '" + node.path + "' has an empty or repeating vocabulary");
  }
  if (node.kind == PropertyKind::numerical && node.normalizer.fitted && !(node.normalizer.max >= node.normalizer.min))
    throw SchemaError("numerical property '" + node.path + "' has max < min");
}

}  // namespace

EntitySchema::EntitySchema(PropertySpec root) : root_(std::move(root)) {
  enumerate(root_);
  if (leaves_.empty()) throw SchemaError("schema has no leaf properties");
}

void EntitySchema::enumerate(const PropertySpec& node) {
  validate_node(node);
  if (node.is_leaf()) {
    if (!index_.emplace(node.path, static_cast<int>(leaves_.size())).second)
      throw SchemaError("duplicate property path '" + node.path + "'");
    leaves_.push_back(node);
    return;
  }
  for (const auto& child : node.children) enumerate(child);
}

int EntitySchema::index_of(std::string_view path) const {
  auto it = index_.find(std::string(path));
  return it == index_.end() ? -1 : it->second;
}

const PropertySpec& EntitySchema::leaf(std::string_view path) const {
  const int i = index_of(path);
  if (i < 0) throw SchemaError("unknown property path '" + std::string(path) + "'");
  return leaves_[static_cast<std::size_t>(i)];
}

namespace {

PropertySpec* find_node(PropertySpec& node, std::string_view path) {
  if (node.is_leaf()) return node.path == path ? &node : nullptr;
  for (auto& child : node.children)
    if (PropertySpec* hit = find_node(child, path)) return hit;
  return nullptr;
}

}  // namespace

void EntitySchema::set_normalizer(int leaf_index, Normalizer n) {
  PropertySpec& leaf = leaves_.at(static_cast<std::size_t>(leaf_index));
  leaf.normalizer = n;
  if (PropertySpec* node = find_node(root_, leaf.path)) node->normalizer = n;
}

EntitySchema EntitySchema::permuted(std::span<const int> order) const {
  if (static_cast<int>(order.size()) != size()) throw SchemaError("permutation size mismatch");
  EntitySchema out;
  out.root_ = root_;
  for (int i : order) {
    const PropertySpec& leaf = leaves_.at(static_cast<std::size_t>(i));
    if (!out.index_.emplace(leaf.path, static_cast<int>(out.leaves_.size())).second)
      throw SchemaError("permutation repeats a leaf");
    out.leaves_.push_back(leaf);
  }
  return out;
}

int EntityInstance::count_present() const {
  int n = 0;
  for (const auto& c : values) n += c.is_present() ? 1 : 0;
  return n;
}

int EntityInstance::count_masked() const {
  int n = 0;
  for (const auto& c : values) n += c.is_masked() ? 1 : 0;
  return n;
}

int EntityInstance::count_missing() const {
  int n = 0;
  for (const auto& c : values) n += c.is_missing() ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------
// Schema documents

namespace {

PropertySpec node_from_json(const ojson& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SchemaError("property '" + path + "' must be an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw SchemaError("property '" + path + "' lacks a kind");
  PropertySpec spec;
  spec.key = key;
  spec.path = path;
  spec.kind = parse_kind(j["kind"].get<std::string>());
  switch (spec.kind) {
    case PropertyKind::composite: {
      if (!j.contains("children") || !j["children"].is_object())
        throw SchemaError("composite property '" + path + "' needs a children object");
      for (const auto& [child_key, child] : j["children"].items()) {
        if (child_key.empty() || child_key.find('.') != std::string::npos)
          throw SchemaError("invalid property key '" + child_key + "'");
        spec.children.push_back(node_from_json(child, child_key, path.empty() ? child_key : path + "." + child_key));
      }
      break;
    }
    case PropertyKind::categorical:
      if (!j.contains("categories") || !j["categories"].is_array())
        throw SchemaError("categorical property '" + path + "' needs categories");
      for (const auto& c : j["categories"]) spec.categories.push_back(c.get<std::string>());
      break;
    case PropertyKind::text:
      spec.text.vocab = default_text_vocab();
      if (j.contains("text")) {
        const auto& t = j["text"];
        if (t.contains("vocab")) spec.text.vocab = t["vocab"].get<std::string>();
        if (t.contains("max_length")) spec.text.max_length = t["max_length"].get<int>();
      }
      break;
    case PropertyKind::numerical:
      if (j.contains("normalizer")) {
        const auto& n = j["normalizer"];
        spec.normalizer.min = n.at("min").get<double>();
        spec.normalizer.max = n.at("max").get<double>();
        spec.normalizer.constant = n.value("constant", false);
        spec.normalizer.fitted = true;
      }
      break;
  }
  return spec;
}

ojson node_to_json(const PropertySpec& spec) {
  ojson j;
  j["kind"] = std::string(to_string(spec.kind));
  switch (spec.kind) {
    case PropertyKind::composite: {
      ojson children = ojson::object();
      for (const auto& c : spec.children) children[c.key] = node_to_json(c);
      j["children"] = std::move(children);
      break;
    }
    case PropertyKind::categorical: j["categories"] = spec.categories; break;
    case PropertyKind::text:
      j["text"] = ojson{{"max_length", spec.text.max_length}, {"vocab", spec.text.vocab}};
      break;
    case PropertyKind::numerical:
      if (spec.normalizer.fitted)
        j["normalizer"] = ojson{{"min", spec.normalizer.min}, {"max", spec.normalizer.max}, {"constant", spec.normalizer.constant}};
      break;
  }
  return j;
}

}  // namespace

EntitySchema load_schema(std::string_view document) {
  // Object keys are tracked per nesting level so that repeated keys, which
  // the parser would otherwise collapse, surface as duplicate paths.
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  auto cb = [&](int, nlohmann::json::parse_event_t ev, ojson& parsed) {
    using E = nlohmann::json::parse_event_t;
    if (ev == E::object_start) keys.emplace_back();
    if (ev == E::object_end && !keys.empty()) keys.pop_back();
    if (ev == E::key && !keys.empty() && !keys.back().insert(parsed.get<std::string>()).second && duplicate.empty())
      duplicate = parsed.get<std::string>();
    return true;
  };
  ojson doc;
  try {
    doc = ojson::parse(document.begin(), document.end(), cb);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema document: ") + e.what());
  }
  if (!duplicate.empty()) throw SchemaError("duplicate property path at key '" + duplicate + "'");
  try {
    PropertySpec root = node_from_json(doc, "", "");
    if (root.kind != PropertyKind::composite) throw SchemaError("schema root must be composite");
    return EntitySchema(std::move(root));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid schema document: ") + e.what());
  }
}

std::string save_schema(const EntitySchema& schema) { return node_to_json(schema.root()).dump(2) + "\n"; }

std::uint64_t schema_fingerprint(const EntitySchema& schema) {
  // FNV-1a over a canonical text rendering of the leaves.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& leaf : schema.leaves()) {
    feed(leaf.path);
    feed(to_string(leaf.kind));
    for (const auto& c : leaf.categories) feed(c);
    if (leaf.kind == PropertyKind::text) {
      feed(leaf.text.vocab);
      feed(std::to_string(leaf.text.max_length));
    }
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

void validate_entity(const EntityInstance& entity, const EntitySchema& schema) {
  if (static_cast<int>(entity.values.size()) != schema.size())
    throw DataError("entity has " + std::to_string(entity.values.size()) + " values, schema has " +
                    std::to_string(schema.size()) + " leaves");
  for (int i = 0; i < schema.size(); ++i) {
    const Cell& c = entity.values[static_cast<std::size_t>(i)];
    if (!c.is_present()) continue;
    const PropertySpec& leaf = schema.leaf(i);
    switch (leaf.kind) {
      case PropertyKind::numerical:
        if (!c.is_number() || !std::isfinite(c.number()))
          throw DataError("property '" + leaf.path + "' expects a finite number");
        break;
      case PropertyKind::categorical:
        if (!c.is_category() || c.category() < 0 || c.category() >= static_cast<int>(leaf.categories.size()))
          throw DataError("property '" + leaf.path + "' expects a category index");
        break;
      case PropertyKind::text:
        if (!c.is_text() || static_cast<int>(c.text().size()) > leaf.text.max_length)
          throw DataError("property '" + leaf.path + "' expects text of at most " + std::to_string(leaf.text.max_length) +
                          " characters");
        for (char ch : c.text())
          if (leaf.text.vocab.find(ch) == std::string::npos)
            throw DataError("property '" + leaf.path + "' contains a character outside its vocabulary");
        break;
      case PropertyKind::composite: break;
    }
  }
}

// ---------------------------------------------------------------------------
// Normalization

EntitySchema fit_normalizers(const EntitySchema& schema, const Dataset& train) {
  if (train.empty()) throw DataError("cannot fit normalizers on an empty dataset");
  EntitySchema out = schema;
  for (int i = 0; i < schema.size(); ++i) {
    const PropertySpec& leaf = schema.leaf(i);
    if (leaf.kind != PropertyKind::numerical) continue;
    Normalizer n;
    bool any = false;
    for (const auto& row : train) {
      const Cell& c = row.values.at(static_cast<std::size_t>(i));
      if (!c.is_present()) continue;
      const double x = c.number();
      if (!any) {
        n.min = n.max = x;
        any = true;
      } else {
        n.min = std::min(n.min, x);
        n.max = std::max(n.max, x);
      }
    }
    if (!any) throw DataError("numerical property '" + leaf.path + "' has no present values to fit");
    n.fitted = true;
    n.constant = n.max == n.min;
    out.set_normalizer(i, n);
  }
  return out;
}

double normalize_value(double x, const Normalizer& n) {
  if (!n.fitted) throw SchemaError("normalizer not fitted");
  if (n.constant) return 0.0;
  return (x - n.min) / (n.max - n.min);
}

double denormalize_value(double y, const Normalizer& n) {
  if (!n.fitted) throw SchemaError("normalizer not fitted");
  if (n.constant) return n.min;
  return n.min + y * (n.max - n.min);
}

namespace {

template <class F>
EntityInstance map_numbers(const EntityInstance& entity, const EntitySchema& schema, F f) {
  if (static_cast<int>(entity.values.size()) != schema.size()) throw DataError("entity/schema size mismatch");
  EntityInstance out = entity;
  for (int i = 0; i < schema.size(); ++i) {
    const PropertySpec& leaf = schema.leaf(i);
    Cell& c = out.values[static_cast<std::size_t>(i)];
    if (leaf.kind == PropertyKind::numerical && c.is_present()) c = Cell::number(f(c.number(), leaf.normalizer));
  }
  return out;
}

}  // namespace

EntityInstance normalize(const EntityInstance& entity, const EntitySchema& schema) {
  return map_numbers(entity, schema, normalize_value);
}

EntityInstance denormalize(const EntityInstance& entity, const EntitySchema& schema) {
  return map_numbers(entity, schema, denormalize_value);
}

Dataset normalize(const Dataset& rows, const EntitySchema& schema) {
  Dataset out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(normalize(r, schema));
  return out;
}

Dataset denormalize(const Dataset& rows, const EntitySchema& schema) {
  Dataset out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(denormalize(r, schema));
  return out;
}

std::vector<int> encode_text(const TextSpec& spec, std::string_view text) {
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (char c : text) {
    const auto pos = spec.vocab.find(c);
    if (pos == std::string::npos) throw DataError("character outside text vocabulary");
    tokens.push_back(TextSpec::kFirstChar + static_cast<int>(pos));
  }
  return tokens;
}

std::string decode_text(const TextSpec& spec, std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == TextSpec::kEnd) break;
    if (t < TextSpec::kFirstChar || t >= spec.token_count()) continue;
    out.push_back(spec.vocab[static_cast<std::size_t>(t - TextSpec::kFirstChar)]);
  }
  return out;
}

EntityInstance permute_entity(const EntityInstance& entity, std::span<const int> order) {
  EntityInstance out;
  out.values.reserve(order.size());
  for (int i : order) out.values.push_back(entity.values.at(static_cast<std::size_t>(i)));
  return out;
}

}  // namespace strucdiff
