#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "strucdiff/schema.hpp"

namespace strucdiff {

struct ToyDataset {
  EntitySchema schema;
  Dataset rows;
  std::string target;  // suggested downstream target leaf, empty if none
  std::vector<std::string> exclude;  // leaves derived from the target
};

const std::vector<std::string>& toy_names();

// Synthetic datasets with known structure. A negative `noise` selects the
// dataset's default: two_moons coordinate noise std 0.05, correlated_table
// target noise std 0.3, binary_grid flip probability 0.05. copy_pair ignores
// it. Throws std::invalid_argument on an unknown name or n < 1.
ToyDataset make_toy(std::string_view name, int n, double noise, std::uint64_t seed);

}  // namespace strucdiff
