#pragma once

#include <vector>

#include "strucdiff/rng.hpp"
#include "strucdiff/schema.hpp"
#include "strucdiff/tensor.hpp"

namespace strucdiff {

// Single-leaf forward kernel after masking probability `pi`. State 0 is the
// absorbing mask state, states 1..K-1 are the category values.
struct TransitionMatrix {
  double pi = 0.0;
  Tensor entries;

  int states() const { return entries.rows; }
};

TransitionMatrix transition_matrix(double pi, int states);

// A corrupted copy of an entity together with the quantities the loss weight
// is built from.
struct CorruptionSample {
  EntityInstance corrupted;
  double pi = 0.0;
  int d_eff = 0;
  int n_before = 0;         // masked by the independent step
  std::vector<int> masked;  // leaf indices masked in `corrupted`, ascending
  double weight = 0.0;
};

// Masks every non-Missing leaf independently with probability pi, redraws
// when all of them got masked, then masks one more leaf uniformly among the
// rest. Throws DataError when no leaf is eligible or a leaf is already Masked.
CorruptionSample corrupt(const EntityInstance& entity, double pi, Rng& rng);

// Fixed-rate masking with weight 1. Draws with nothing masked are rejected;
// draws with everything masked are rejected unless only one leaf is eligible.
CorruptionSample corrupt_fixed(const EntityInstance& entity, double rate, Rng& rng);

// D_eff (1 - n_before / D_eff) / ((1 - pi)(n_before + 1)).
double loss_weight(int d_eff, int n_before, double pi);

// Number of leaves still able to jump into the mask state.
int total_rate_proportion(int d_eff, int n_masked);

}  // namespace strucdiff
