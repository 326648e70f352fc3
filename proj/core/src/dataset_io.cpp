#include "strucdiff/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "strucdiff/errors.hpp"

namespace strucdiff {

using ojson = nlohmann::ordered_json;

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();

  CsvTable table;
  if (records.empty() || records.front().empty() || (records.front().size() == 1 && records.front()[0].empty()))
    throw DataError("csv: zero columns");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw DataError("csv: ragged row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

namespace {

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool is_missing_token(const std::string& s, const CsvOptions& opt) { return s.empty() || s == opt.missing_sentinel; }

void insert_leaf(PropertySpec& root, const std::string& path, PropertySpec leaf) {
  PropertySpec* node = &root;
  std::size_t start = 0;
  std::string prefix;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw SchemaError("invalid column path '" + path + "'");
    prefix = prefix.empty() ? key : prefix + "." + key;
    auto it = std::find_if(node->children.begin(), node->children.end(), [&](const PropertySpec& c) { return c.key == key; });
    if (dot == std::string::npos) {
      if (it != node->children.end()) throw SchemaError("duplicate property path '" + path + "'");
      leaf.key = key;
      leaf.path = path;
      node->children.push_back(std::move(leaf));
      return;
    }
    if (it == node->children.end()) {
      PropertySpec composite;
      composite.key = key;
      composite.path = prefix;
      composite.kind = PropertyKind::composite;
      node->children.push_back(std::move(composite));
      it = std::prev(node->children.end());
    } else if (it->kind != PropertyKind::composite) {
      throw SchemaError("path '" + path + "' descends into leaf '" + it->path + "'");
    }
    node = &*it;
    start = dot + 1;
  }
}

}  // namespace

std::string write_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out.push_back(',');
      out += quote_field(rec[i]);
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

std::string format_number(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw DataError("cannot format number");
  return std::string(buf, ptr);
}

EntitySchema infer_schema(const CsvTable& table, const CsvOptions& options) {
  if (table.header.empty()) throw DataError("csv: zero columns");
  PropertySpec root;
  root.kind = PropertyKind::composite;
  for (std::size_t col = 0; col < table.header.size(); ++col) {
    const std::string& name = table.header[col];
    PropertySpec leaf;
    std::vector<std::string> distinct;
    std::set<std::string> seen;
    bool all_numeric = true;
    std::size_t longest = 0;
    std::size_t present = 0;
    for (const auto& row : table.rows) {
      const std::string& cell = row[col];
      if (is_missing_token(cell, options)) continue;
      ++present;
      double v;
      if (!parse_number(cell, v)) all_numeric = false;
      if (seen.insert(cell).second) distinct.push_back(cell);
      longest = std::max(longest, cell.size());
    }
    auto hint = options.type_hints.find(name);
    if (hint != options.type_hints.end()) {
      leaf.kind = hint->second;
    } else if (present == 0) {
      throw DataError("csv: column '" + name + "' has no values; supply a type hint");
    } else if (all_numeric) {
      leaf.kind = PropertyKind::numerical;
    } else if (static_cast<int>(distinct.size()) <= options.categorical_cutoff) {
      leaf.kind = PropertyKind::categorical;
    } else {
      leaf.kind = PropertyKind::text;
    }
    if (leaf.kind == PropertyKind::composite) throw SchemaError("type hint for '" + name + "' cannot be composite");
    if (leaf.kind == PropertyKind::categorical) leaf.categories = distinct;
    if (leaf.kind == PropertyKind::text) {
      leaf.text.vocab = default_text_vocab();
      std::set<char> extra;
      for (const auto& s : distinct)
        for (char c : s)
          if (leaf.text.vocab.find(c) == std::string::npos) extra.insert(c);
      leaf.text.vocab.append(extra.begin(), extra.end());
      leaf.text.max_length = std::max(options.text_max_length, static_cast<int>(longest));
    }
    if (leaf.kind == PropertyKind::numerical && !all_numeric)
      throw DataError("csv: column '" + name + "' hinted numerical but holds non-numeric values");
    insert_leaf(root, name, std::move(leaf));
  }
  return EntitySchema(std::move(root));
}

EntitySchema infer_schema_from_csv(std::string_view text, const CsvOptions& options) {
  return infer_schema(parse_csv(text), options);
}

Dataset table_to_dataset(const CsvTable& table, const EntitySchema& schema, const CsvOptions& options) {
  std::vector<int> column_of(static_cast<std::size_t>(schema.size()), -1);
  for (std::size_t col = 0; col < table.header.size(); ++col) {
    const int leaf = schema.index_of(table.header[col]);
    if (leaf < 0) throw SchemaError("csv column '" + table.header[col] + "' is not a schema leaf");
    if (column_of[static_cast<std::size_t>(leaf)] >= 0) throw SchemaError("csv repeats column '" + table.header[col] + "'");
    column_of[static_cast<std::size_t>(leaf)] = static_cast<int>(col);
  }
  for (int i = 0; i < schema.size(); ++i)
    if (column_of[static_cast<std::size_t>(i)] < 0) throw SchemaError("csv lacks a column for '" + schema.leaf(i).path + "'");

  Dataset out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    EntityInstance e;
    e.values.resize(static_cast<std::size_t>(schema.size()));
    for (int i = 0; i < schema.size(); ++i) {
      const PropertySpec& leaf = schema.leaf(i);
      const std::string& cell = table.rows[r][static_cast<std::size_t>(column_of[static_cast<std::size_t>(i)])];
      Cell& dst = e.values[static_cast<std::size_t>(i)];
      if (is_missing_token(cell, options)) continue;
      switch (leaf.kind) {
        case PropertyKind::numerical: {
          double v;
          if (!parse_number(cell, v))
            throw DataError("row " + std::to_string(r + 1) + ": '" + leaf.path + "' is not a number: " + cell);
          dst = Cell::number(v);
          break;
        }
        case PropertyKind::categorical: {
          const int idx = leaf.category_index(cell);
          if (idx < 0) throw DataError("row " + std::to_string(r + 1) + ": unknown label '" + cell + "' for '" + leaf.path + "'");
          dst = Cell::category(idx);
          break;
        }
        case PropertyKind::text: dst = Cell::text(cell); break;
        case PropertyKind::composite: break;
      }
    }
    validate_entity(e, schema);
    out.push_back(std::move(e));
  }
  return out;
}

Dataset read_csv_dataset(std::string_view text, const EntitySchema& schema, const CsvOptions& options) {
  return table_to_dataset(parse_csv(text), schema, options);
}

std::string write_csv_dataset(const Dataset& rows, const EntitySchema& schema) {
  CsvTable table;
  for (const auto& leaf : schema.leaves()) table.header.push_back(leaf.path);
  for (const auto& e : rows) {
    std::vector<std::string> rec;
    for (int i = 0; i < schema.size(); ++i) {
      const Cell& c = e.values.at(static_cast<std::size_t>(i));
      if (!c.is_present()) {
        rec.emplace_back();
      } else if (c.is_number()) {
        rec.push_back(format_number(c.number()));
      } else if (c.is_category()) {
        rec.push_back(schema.leaf(i).categories.at(static_cast<std::size_t>(c.category())));
      } else {
        rec.push_back(c.text());
      }
    }
    table.rows.push_back(std::move(rec));
  }
  return write_csv(table);
}

namespace {

const ojson* lookup_path(const ojson& obj, const std::string& path) {
  const ojson* node = &obj;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

void fill_json(ojson& out, const PropertySpec& node, const EntityInstance& e, const EntitySchema& schema) {
  for (const auto& child : node.children) {
    if (!child.is_leaf()) {
      ojson sub = ojson::object();
      fill_json(sub, child, e, schema);
      if (!sub.empty()) out[child.key] = std::move(sub);
      continue;
    }
    const int i = schema.index_of(child.path);
    const Cell& c = e.values.at(static_cast<std::size_t>(i));
    if (!c.is_present()) continue;
    if (c.is_number()) {
      out[child.key] = c.number();
    } else if (c.is_category()) {
      out[child.key] = child.categories.at(static_cast<std::size_t>(c.category()));
    } else {
      out[child.key] = c.text();
    }
  }
}

}  // namespace

Dataset read_jsonl_dataset(std::string_view text, const EntitySchema& schema) {
  Dataset out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ojson obj;
    try {
      obj = ojson::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("jsonl line " + std::to_string(lineno) + ": " + ex.what());
    }
    EntityInstance e;
    e.values.resize(static_cast<std::size_t>(schema.size()));
    for (int i = 0; i < schema.size(); ++i) {
      const PropertySpec& leaf = schema.leaf(i);
      const ojson* v = lookup_path(obj, leaf.path);
      if (v == nullptr || v->is_null()) continue;
      Cell& dst = e.values[static_cast<std::size_t>(i)];
      if (leaf.kind == PropertyKind::numerical) {
        if (!v->is_number()) throw DataError("jsonl line " + std::to_string(lineno) + ": '" + leaf.path + "' is not a number");
        dst = Cell::number(v->get<double>());
      } else if (leaf.kind == PropertyKind::categorical) {
        const int idx = v->is_string() ? leaf.category_index(v->get<std::string>()) : -1;
        if (idx < 0) throw DataError("jsonl line " + std::to_string(lineno) + ": unknown label for '" + leaf.path + "'");
        dst = Cell::category(idx);
      } else {
        if (!v->is_string()) throw DataError("jsonl line " + std::to_string(lineno) + ": '" + leaf.path + "' is not a string");
        dst = Cell::text(v->get<std::string>());
      }
    }
    validate_entity(e, schema);
    out.push_back(std::move(e));
  }
  return out;
}

std::string write_jsonl_dataset(const Dataset& rows, const EntitySchema& schema) {
  std::string out;
  for (const auto& e : rows) {
    ojson obj = ojson::object();
    fill_json(obj, schema.root(), e, schema);
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace strucdiff
