#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "strucdiff/model.hpp"
#include "strucdiff/optim.hpp"
#include "strucdiff/rng.hpp"
#include "strucdiff/schema.hpp"

namespace strucdiff {

enum class MaskMode { diffusion, fixed_mask };

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view name);

struct TrainConfig {
  MaskMode mode = MaskMode::diffusion;
  double mask_rate = 0.5;  // fixed_mask only
  int batch_size = 64;
  int epochs = 50;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  double pi_max = 1.0 - 1e-6;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// One entity's contribution to a batch loss.
struct EntityLoss {
  double pi = 0.0;
  int d_eff = 0;
  int n_before = 0;
  double weight = 0.0;
  std::vector<std::pair<int, double>> leaf_losses;  // (leaf, unweighted loss)
};

struct LeafLoss {
  double loss = 0.0;  // unweighted sum
  int count = 0;
};

struct LossReport {
  double total = 0.0;  // sum_e weight_e * sum of leaf losses, over batch size
  std::map<std::string, LeafLoss> per_leaf;
  double weight_mean = 0.0;
  double weight_max = 0.0;
  double grad_norm = 0.0;
  std::vector<EntityLoss> entities;
};

// Negative log-likelihood of a Present truth under one leaf prediction.
double reconstruction_loss(const Model& model, int leaf, const PropertyPrediction& prediction, const Cell& truth);

// Owns the optimizer state for one model. Batches are normalized entities
// whose only non-Present cells are Missing.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig config, int total_steps);

  // Corrupts, evaluates the weighted objective, and applies one update.
  // Throws NumericalError (leaving parameters untouched) on a non-finite loss.
  LossReport step(std::span<const EntityInstance> batch, Rng& rng);

  // The same objective without dropout or update.
  LossReport evaluate(std::span<const EntityInstance> batch, Rng& rng) const;

  int steps_taken() const { return step_; }
  double current_lr() const;

 private:
  LossReport run(std::span<const EntityInstance> batch, Rng& rng, bool train);

  Model& model_;
  TrainConfig config_;
  AdamW optimizer_;
  int total_steps_;
  int step_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;  // NaN without a validation split
  double lr = 0.0;
};

struct FitResult {
  Model model;
  std::vector<EpochRecord> curve;
  MaskMode mode = MaskMode::diffusion;
};

// Called after every epoch with the model in its current state.
using EpochCallback = std::function<void(const EpochRecord&, const Model&)>;

// Trains on raw (unnormalized) rows. The schema's numerical normalizers must
// already be fitted. Holds out `validation_fraction` of the rows by seeded
// shuffle when at least ten rows are available.
FitResult fit(const Dataset& rows, const EntitySchema& schema, const ModelConfig& model_config, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

// Loss-curve table: epoch,train_loss,validation_loss,lr with a mode header.
std::string loss_curve_csv(const FitResult& result);

}  // namespace strucdiff
