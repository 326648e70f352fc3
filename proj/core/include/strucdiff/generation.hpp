#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "strucdiff/model.hpp"
#include "strucdiff/rng.hpp"

namespace strucdiff {

enum class NumericMode { sample, point };

struct SampleConfig {
  int leap = 1;              // leaves de-masked per network call
  double temperature = 1.0;  // categorical and text sampling
  NumericMode numeric_mode = NumericMode::sample;
};

struct SampleStats {
  int network_calls = 0;                // batched forward passes
  std::vector<int> entity_calls;        // forward passes each entity took part in
  std::vector<std::vector<int>> steps;  // per entity: leaves revealed at each step
};

// All entities are in original units. Masked cells are the targets, Present
// cells are copied through untouched, Missing cells stay Missing. Entity k
// draws from rng.split(k), so results do not depend on batch composition.
Dataset sample_batch(const Model& model, std::span<const EntityInstance> conditioning, const SampleConfig& config, const Rng& rng,
                     SampleStats* stats = nullptr);
EntityInstance sample_entity(const Model& model, const EntityInstance& conditioning, const SampleConfig& config, const Rng& rng,
                             SampleStats* stats = nullptr);

// One forward pass; every Masked leaf is drawn independently from its
// prediction, in leaf order, from the same per-entity streams.
Dataset masked_modeling_generate(const Model& model, std::span<const EntityInstance> conditioning, const SampleConfig& config,
                                 const Rng& rng);

// `n` entities with every leaf Masked.
Dataset unconditional_prompts(const EntitySchema& schema, int n);

// Fills every Masked leaf; point mode uses mixture means and argmax.
EntityInstance impute(const Model& model, const EntityInstance& partial, const SampleConfig& config, const Rng& rng);

// Draws one value for `leaf` from a prediction, in original units.
Cell draw_value(const Model& model, int leaf, const PropertyPrediction& prediction, const SampleConfig& config, Rng& rng);
// Deterministic prediction in original units: argmax, mixture mean, greedy text.
Cell point_value(const Model& model, int leaf, const PropertyPrediction& prediction);

// Point predictions for every Masked leaf of each entity (one pass each).
// Result k holds the predicted cells at entity k's Masked leaves and Missing
// elsewhere.
Dataset point_predict_masked(const Model& model, std::span<const EntityInstance> batch);

// Prediction for one target leaf, which must be Masked in `partial`.
Cell point_predict(const Model& model, const EntityInstance& partial, std::string_view target);

struct LoglikCurve {
  std::vector<std::pair<double, double>> points;  // (value, log-likelihood)
  double argmax = 0.0;
  double lower = 0.0;  // where the curve drops 1/2 below its maximum
  double upper = 0.0;
  double half_width = 0.0;
};

// Masks only `target` in a fully observed entity and evaluates the mixture
// log-density (normalized units) at each grid value given in original units.
LoglikCurve conditional_loglik_curve(const Model& model, const EntityInstance& entity, std::string_view target,
                                     std::span<const double> grid);

}  // namespace strucdiff
