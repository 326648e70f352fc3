#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strucdiff/generation.hpp"
#include "strucdiff/model.hpp"
#include "strucdiff/rng.hpp"
#include "strucdiff/schema.hpp"

namespace strucdiff {

// Metric names: "rmse" (numerical, original units), "error_rate"
// (categorical), "one_minus_word_iou" (text).
struct LeafMetric {
  std::string metric;
  double value = 0.0;
  double stderr_value = 0.0;
  int count = 0;
};

using LeafMetrics = std::map<std::string, LeafMetric>;  // keyed by leaf path

struct MetricReport {
  double masking_fraction = 0.0;
  LeafMetrics model;
  LeafMetrics baseline;
};

// Scores Present predictions against Present truths leaf by leaf. Pairs where
// either side is not Present are skipped; leaves with no pairs are omitted.
LeafMetrics compute_metrics(std::span<const EntityInstance> predictions, std::span<const EntityInstance> truths,
                            const EntitySchema& schema);

// 1 - |A n B| / |A u B| over lowercase whitespace-separated word sets.
double word_iou_error(const std::string& prediction, const std::string& truth);

// Training mean (numerical), mode (categorical) and most frequent string
// (text) per leaf, in original units. Leaves without data stay Missing.
std::vector<Cell> fit_constant_baseline(const EntitySchema& schema, const Dataset& train);

// Baseline values at every Masked leaf of `batch`, Missing elsewhere.
Dataset baseline_predictions(const std::vector<Cell>& baseline, std::span<const EntityInstance> batch);

// For each fraction f and trial, masks a uniformly random ceil(f * D_eff)
// subset (at least one leaf) of every test entity and scores point
// predictions of the masked leaves, pooled over trials, next to the constant
// baseline on the same cells.
std::vector<MetricReport> masking_sweep(const Model& model, const Dataset& test, std::span<const double> fractions, int trials,
                                        const std::vector<Cell>& baseline, const Rng& rng);

// Mask-one-leaf-at-a-time evaluation: every non-Missing leaf of every entity
// is predicted from all the others.
MetricReport leave_one_out_metrics(const Model& model, const Dataset& test, const std::vector<Cell>& baseline);

// log p(x) under the reverse process with uniformly random de-masking order,
// summed exactly over orders via the 2^D reveal patterns. Requires an
// all-categorical entity with at most `max_leaves` non-Missing leaves.
double exact_reverse_loglik(const Model& model, const EntityInstance& entity, int max_leaves = 8);

struct BoundEstimate {
  double mean = 0.0;
  double stderr_value = 0.0;
  int draws = 0;
};

// Monte-Carlo estimate of the weighted denoising objective for one entity:
// pi ~ U(0,1) clamped at `pi_max`, corruption, and the weighted sum of
// masked-leaf negative log-likelihoods.
BoundEstimate diffusion_bound(const Model& model, const EntityInstance& entity, int draws, const Rng& rng,
                              double pi_max = 1.0 - 1e-6);

// Fraction of rows whose leaves `x` and `y` agree (categorical pair).
double copy_match_rate(const Dataset& rows, const EntitySchema& schema);

// Distance from (x, y) to the nearer of the two half-circle arcs of the
// two-moons construction.
double moons_manifold_distance(double x, double y);
double moons_manifold_hit(const Dataset& rows, const EntitySchema& schema, double eps);

// Mean total-variation distance between the pairwise joint histograms of the
// categorical leaves in `a` and `b`, plus mean absolute difference of pairwise
// Pearson correlations of numerical leaves.
double dependence_gap(const Dataset& a, const Dataset& b, const EntitySchema& schema);

struct EfficacyTask {
  std::string target;
  std::vector<std::string> exclude;  // leaves not used as features
  int learner_seeds = 10;
};

struct EfficacyReport {
  std::string metric;  // "r2" or "macro_f1"
  double real_mean = 0.0;
  double real_std = 0.0;
  double synthetic_mean = 0.0;
  double synthetic_std = 0.0;
  std::vector<double> real_scores;
  std::vector<double> synthetic_scores;
};

// Trains the built-in gradient-boosting learner on `real_train` and on each
// synthetic set for every learner seed, scoring all of them on `real_test`.
EfficacyReport downstream_efficacy(const Dataset& real_train, std::span<const Dataset> synthetic, const Dataset& real_test,
                                   const EntitySchema& schema, const EfficacyTask& task);

struct AblationArm {
  int leap = 1;
  Dataset samples;
  std::optional<double> copy_match;
  std::optional<double> manifold_hit;
  double dependence = 0.0;
  std::optional<EfficacyReport> efficacy;
};

struct AblationReport {
  AblationArm stepwise;     // leap = 1
  AblationArm single_step;  // leap = D
};

// Generates one unconditional synthetic set per arm (same size as `reference`,
// same seeds) and scores each against `reference`. When `task` is given, the
// efficacy protocol runs with `reference` as the real training set and
// `test` as the held-out set.
AblationReport ablate_single_step_vs_diffusion(const Model& model, const Dataset& reference, const Rng& rng,
                                               const std::optional<EfficacyTask>& task = std::nullopt,
                                               const Dataset& test = {}, double manifold_eps = 0.15);

}  // namespace strucdiff
