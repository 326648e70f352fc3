#pragma once

#include <span>
#include <vector>

#include "strucdiff/autodiff.hpp"
#include "strucdiff/rng.hpp"

namespace strucdiff {

inline constexpr double kScaleFloor = 1e-3;

// A Gaussian mixture over one normalized numerical value.
struct GmmParams {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;

  int size() const { return static_cast<int>(weights.size()); }
  // Throws std::invalid_argument unless weights form a simplex and scales > 0.
  void validate() const;
};

// Unconstrained head output: weight logits, means, and pre-softplus scales.
struct GmmRaw {
  std::vector<double> logits;
  std::vector<double> means;
  std::vector<double> scale_raw;
};

struct GmmGrad {
  std::vector<double> logits;
  std::vector<double> means;
  std::vector<double> scale_raw;
};

// softmax(logits), means, softplus(scale_raw) + floor.
GmmParams gmm_from_raw(const GmmRaw& raw, double floor = kScaleFloor);

double gmm_nll(const GmmParams& params, double x);
// Same value computed from the raw head; fills `grad` when non-null.
double gmm_nll(const GmmRaw& raw, double x, GmmGrad* grad, double floor = kScaleFloor);
double gmm_sample(const GmmParams& params, Rng& rng);
double gmm_point(const GmmParams& params);

// Single component with the scale frozen at 1: 0.5 (mean - x)^2 + 0.5 ln 2 pi.
double unit_gaussian_nll(double mean, double x, double* dmean = nullptr);

enum class NumericEmbeddingKind { periodic, dice };

struct NumericEmbeddingConfig {
  NumericEmbeddingKind kind = NumericEmbeddingKind::periodic;
  int dim = 16;
  std::vector<double> frequencies;  // periodic: dim / 2 values
  double dice_min = 0.0;
  double dice_max = 1.0;
};

// periodic: [sin(f_1 x) .. sin(f_h x), cos(f_1 x) .. cos(f_h x)].
// dice: the angle pi (x - min) / (max - min) mapped onto a fixed plane of
// R^dim, so cosine similarity equals the cosine of the angle difference.
std::vector<double> embed_numeric(double x, const NumericEmbeddingConfig& cfg);

namespace ad {

// Per-row mixture NLL. `head` is [n x 3M] laid out as logits | means |
// scale_raw, or [n x M] means only when `unit_scale` (M must be 1 then).
// Returns [n x 1].
Var gmm_nll_rows(Var head, std::span<const double> targets, int components, bool unit_scale);

}  // namespace ad

// Splits row `r` of a head tensor into mixture parameters.
GmmParams gmm_params_from_head(std::span<const double> row, int components, bool unit_scale);

}  // namespace strucdiff
