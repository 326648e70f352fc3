#include "strucdiff/toy_data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "strucdiff/rng.hpp"

namespace strucdiff {

namespace {

PropertySpec numerical(std::string key) {
  PropertySpec s;
  s.key = s.path = std::move(key);
  s.kind = PropertyKind::numerical;
  return s;
}

PropertySpec categorical(std::string key, std::vector<std::string> labels) {
  PropertySpec s;
  s.key = s.path = std::move(key);
  s.kind = PropertyKind::categorical;
  s.categories = std::move(labels);
  return s;
}

PropertySpec composite(std::vector<PropertySpec> children) {
  PropertySpec s;
  s.kind = PropertyKind::composite;
  s.children = std::move(children);
  return s;
}

ToyDataset two_moons(int n, double noise, Rng& rng) {
  ToyDataset out{EntitySchema(composite({numerical("x"), numerical("y"), categorical("class", {"0", "1"})})), {}, "class", {}};
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    const double t = rng.uniform(0.0, std::numbers::pi);
    double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
    if (noise > 0.0) {
      x += rng.normal(0.0, noise);
      y += rng.normal(0.0, noise);
    }
    out.rows.push_back(EntityInstance{{Cell::number(x), Cell::number(y), Cell::category(cls)}});
  }
  return out;
}

ToyDataset copy_pair(int n, Rng& rng) {
  const std::vector<std::string> labels{"a", "b", "c", "d"};
  ToyDataset out{EntitySchema(composite({categorical("x", labels), categorical("y", labels)})), {}, "", {}};
  for (int i = 0; i < n; ++i) {
    const int v = rng.index(static_cast<int>(labels.size()));
    out.rows.push_back(EntityInstance{{Cell::category(v), Cell::category(v)}});
  }
  return out;
}

// a ~ N(0,1); b = 2a + N(0, 0.3); c is the tertile of a with 10% random
// relabels; d and e are independent; target = a + b/2 + [c = hi] + noise;
// label = target > 0.3.
ToyDataset correlated_table(int n, double noise, Rng& rng) {
  ToyDataset out{EntitySchema(composite({numerical("a"), numerical("b"), categorical("c", {"lo", "mid", "hi"}), numerical("d"),
                                         categorical("e", {"p", "q"}), numerical("target"), categorical("label", {"no", "yes"})})),
                 {},
                 "target",
                 {"label"}};
  constexpr double kTertile = 0.4307272992954576;
  for (int i = 0; i < n; ++i) {
    const double a = rng.normal();
    const double b = 2.0 * a + rng.normal(0.0, 0.3);
    int c = a < -kTertile ? 0 : (a > kTertile ? 2 : 1);
    if (rng.bernoulli(0.1)) c = rng.index(3);
    const double d = rng.normal();
    const int e = rng.index(2);
    const double target = a + 0.5 * b + (c == 2 ? 1.0 : 0.0) + rng.normal(0.0, noise);
    out.rows.push_back(EntityInstance{{Cell::number(a), Cell::number(b), Cell::category(c), Cell::number(d), Cell::category(e),
                                       Cell::number(target), Cell::category(target > 0.3 ? 1 : 0)}});
  }
  return out;
}

// Each entity is a row-major H x W grid holding one horizontal or vertical
// bar of ones, with independent bit flips.
ToyDataset binary_grid(int n, double flip, Rng& rng, int height = 4, int width = 4) {
  std::vector<PropertySpec> rows;
  for (int r = 0; r < height; ++r) {
    std::vector<PropertySpec> cells;
    for (int c = 0; c < width; ++c) cells.push_back(categorical("c" + std::to_string(c), {"0", "1"}));
    PropertySpec row = composite(std::move(cells));
    row.key = "r" + std::to_string(r);
    for (auto& cell : row.children) cell.path = row.key + "." + cell.key;
    row.path = row.key;
    rows.push_back(std::move(row));
  }
  ToyDataset out{EntitySchema(composite(std::move(rows))), {}, "", {}};
  for (int i = 0; i < n; ++i) {
    const bool horizontal = rng.bernoulli(0.5);
    const int bar = rng.index(horizontal ? height : width);
    EntityInstance e;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        int bit = (horizontal ? r : c) == bar ? 1 : 0;
        if (rng.bernoulli(flip)) bit = 1 - bit;
        e.values.push_back(Cell::category(bit));
      }
    out.rows.push_back(std::move(e));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& toy_names() {
  static const std::vector<std::string> names{"two_moons", "copy_pair", "correlated_table", "binary_grid"};
  return names;
}

ToyDataset make_toy(std::string_view name, int n, double noise, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("toy dataset size must be >= 1");
  Rng rng(seed);
  if (name == "two_moons") return two_moons(n, noise < 0 ? 0.05 : noise, rng);
  if (name == "copy_pair") return copy_pair(n, rng);
  if (name == "correlated_table") return correlated_table(n, noise < 0 ? 0.3 : noise, rng);
  if (name == "binary_grid") return binary_grid(n, noise < 0 ? 0.05 : noise, rng);
  throw std::invalid_argument("unknown toy dataset '" + std::string(name) + "'");
}

}  // namespace strucdiff
