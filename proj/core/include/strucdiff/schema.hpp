#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace strucdiff {

enum class PropertyKind { numerical, categorical, text, composite };

std::string_view to_string(PropertyKind kind);
PropertyKind parse_kind(std::string_view name);

// Min-max scaling fitted on training data. A constant column maps to 0.
struct Normalizer {
  double min = 0.0;
  double max = 0.0;
  bool fitted = false;
  bool constant = false;
};

// Character-level text vocabulary. Token ids: 0 pad, 1 end, 2 begin,
// 3 + i for vocab[i].
struct TextSpec {
  static constexpr int kPad = 0;
  static constexpr int kEnd = 1;
  static constexpr int kBegin = 2;
  static constexpr int kFirstChar = 3;

  std::string vocab;
  int max_length = 32;

  int token_count() const { return kFirstChar + static_cast<int>(vocab.size()); }
};

std::string default_text_vocab();

struct PropertySpec {
  std::string key;   // last path segment
  std::string path;  // dot-separated from the root
  PropertyKind kind = PropertyKind::numerical;
  std::vector<std::string> categories;
  TextSpec text;
  Normalizer normalizer;
  std::vector<PropertySpec> children;  // composite only

  bool is_leaf() const { return kind != PropertyKind::composite; }
  int category_index(std::string_view label) const;  // -1 if unknown
};

// Hierarchical entity layout. Leaves are enumerated depth-first in document
// order; that order defines the D dimensions.
class EntitySchema {
 public:
  EntitySchema() = default;
  explicit EntitySchema(PropertySpec root);

  const PropertySpec& root() const { return root_; }
  const std::vector<PropertySpec>& leaves() const { return leaves_; }
  const PropertySpec& leaf(int i) const { return leaves_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(leaves_.size()); }
  int index_of(std::string_view path) const;  // -1 if absent
  const PropertySpec& leaf(std::string_view path) const;

  void set_normalizer(int leaf, Normalizer n);

  // Same leaves (and per-leaf metadata) enumerated in a different order.
  // Used to check that nothing depends on serialization order.
  EntitySchema permuted(std::span<const int> order) const;

 private:
  void enumerate(const PropertySpec& node);

  PropertySpec root_;
  std::vector<PropertySpec> leaves_;
  std::unordered_map<std::string, int> index_;
};

struct Missing {
  bool operator==(const Missing&) const = default;
};
struct Masked {
  bool operator==(const Masked&) const = default;
};
struct Category {
  int index = 0;
  bool operator==(const Category&) const = default;
};

// One leaf value: Present(number | category | text), Missing, or Masked.
class Cell {
 public:
  using Storage = std::variant<Missing, Masked, double, Category, std::string>;

  Cell() = default;
  static Cell missing() { return Cell(Missing{}); }
  static Cell masked() { return Cell(Masked{}); }
  static Cell number(double x) { return Cell(x); }
  static Cell category(int index) { return Cell(Category{index}); }
  static Cell text(std::string s) { return Cell(std::move(s)); }

  bool is_missing() const { return std::holds_alternative<Missing>(v_); }
  bool is_masked() const { return std::holds_alternative<Masked>(v_); }
  bool is_present() const { return !is_missing() && !is_masked(); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_category() const { return std::holds_alternative<Category>(v_); }
  bool is_text() const { return std::holds_alternative<std::string>(v_); }

  double number() const { return std::get<double>(v_); }
  int category() const { return std::get<Category>(v_).index; }
  const std::string& text() const { return std::get<std::string>(v_); }

  const Storage& storage() const { return v_; }
  bool operator==(const Cell&) const = default;

 private:
  explicit Cell(Storage v) : v_(std::move(v)) {}
  Storage v_{Missing{}};
};

struct EntityInstance {
  std::vector<Cell> values;

  int count_present() const;
  int count_masked() const;
  int count_missing() const;
  // Non-Missing leaves: the dimensions that take part in the diffusion.
  int effective_size() const { return static_cast<int>(values.size()) - count_missing(); }
  bool operator==(const EntityInstance&) const = default;
};

using Dataset = std::vector<EntityInstance>;

EntitySchema load_schema(std::string_view document);
std::string save_schema(const EntitySchema& schema);

// Hash of the structural part of a schema (paths, kinds, categories, text
// vocabulary). Normalizer values are excluded.
std::uint64_t schema_fingerprint(const EntitySchema& schema);
std::string fingerprint_hex(std::uint64_t fp);

// Throws DataError if the entity does not conform to the schema.
void validate_entity(const EntityInstance& entity, const EntitySchema& schema);

EntitySchema fit_normalizers(const EntitySchema& schema, const Dataset& train);
EntityInstance normalize(const EntityInstance& entity, const EntitySchema& schema);
EntityInstance denormalize(const EntityInstance& entity, const EntitySchema& schema);
double normalize_value(double x, const Normalizer& n);
double denormalize_value(double y, const Normalizer& n);
Dataset normalize(const Dataset& rows, const EntitySchema& schema);
Dataset denormalize(const Dataset& rows, const EntitySchema& schema);

std::vector<int> encode_text(const TextSpec& spec, std::string_view text);
std::string decode_text(const TextSpec& spec, std::span<const int> tokens);

// Entity with the same shape as `entity` but a leaf permutation applied:
// result[i] = entity[order[i]].
EntityInstance permute_entity(const EntityInstance& entity, std::span<const int> order);

}  // namespace strucdiff
