#include "strucdiff/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "strucdiff/dataset_io.hpp"
#include "strucdiff/diffusion.hpp"
#include "strucdiff/errors.hpp"

namespace strucdiff {

std::string_view to_string(MaskMode mode) { return mode == MaskMode::diffusion ? "diffusion" : "fixed_mask"; }

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "diffusion") return MaskMode::diffusion;
  if (name == "fixed_mask") return MaskMode::fixed_mask;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (mode == MaskMode::fixed_mask && !(mask_rate > 0.0 && mask_rate < 1.0)) fail("mask_rate must lie in (0,1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(pi_max > 0.0 && pi_max < 1.0)) fail("pi_max must lie in (0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in [0,1)");
}

double reconstruction_loss(const Model& model, int leaf, const PropertyPrediction& prediction, const Cell& truth) {
  const PropertySpec& spec = model.schema().leaf(leaf);
  if (!truth.is_present()) throw DataError("reconstruction_loss: truth must be Present");
  switch (spec.kind) {
    case PropertyKind::categorical: {
      const auto* p = std::get_if<CategoricalPrediction>(&prediction);
      if (p == nullptr || !truth.is_category()) throw SchemaError("reconstruction_loss: kind mismatch for '" + spec.path + "'");
      const auto& z = p->logits;
      const double top = *std::max_element(z.begin(), z.end());
      double acc = 0.0;
      for (double v : z) acc += std::exp(v - top);
      return top + std::log(acc) - z.at(static_cast<std::size_t>(truth.category()));
    }
    case PropertyKind::numerical: {
      const auto* p = std::get_if<NumericPrediction>(&prediction);
      if (p == nullptr || !truth.is_number()) throw SchemaError("reconstruction_loss: kind mismatch for '" + spec.path + "'");
      return gmm_nll(p->gmm, truth.number());
    }
    case PropertyKind::text: {
      const auto* p = std::get_if<TextPrediction>(&prediction);
      if (p == nullptr || !truth.is_text()) throw SchemaError("reconstruction_loss: kind mismatch for '" + spec.path + "'");
      return model.text_nll(leaf, p->latent, truth.text());
    }
    case PropertyKind::composite: break;
  }
  throw SchemaError("reconstruction_loss: composite leaf");
}

Trainer::Trainer(Model& model, TrainConfig config, int total_steps)
    : model_(model),
      config_(std::move(config)),
      optimizer_(AdamConfig{config_.beta1, config_.beta2, config_.eps, config_.weight_decay}),
      total_steps_(total_steps) {
  config_.validate();
}

double Trainer::current_lr() const { return cosine_lr(config_.lr, step_, total_steps_); }

LossReport Trainer::step(std::span<const EntityInstance> batch, Rng& rng) { return run(batch, rng, true); }

LossReport Trainer::evaluate(std::span<const EntityInstance> batch, Rng& rng) const {
  // Evaluation never records gradients or touches the optimizer.
  return const_cast<Trainer*>(this)->run(batch, rng, false);
}

LossReport Trainer::run(std::span<const EntityInstance> batch, Rng& rng, bool train) {
  if (batch.empty()) throw DataError("training step: empty batch");
  const double b_count = static_cast<double>(batch.size());
  LossReport report;
  std::vector<EntityInstance> corrupted;
  corrupted.reserve(batch.size());
  for (const auto& e : batch) {
    CorruptionSample s;
    if (config_.mode == MaskMode::diffusion) {
      s = corrupt(e, std::min(rng.uniform(), config_.pi_max), rng);
    } else {
      s = corrupt_fixed(e, config_.mask_rate, rng);
    }
    report.entities.push_back(EntityLoss{s.pi, s.d_eff, s.n_before, s.weight, {}});
    report.weight_mean += s.weight / b_count;
    report.weight_max = std::max(report.weight_max, s.weight);
    corrupted.push_back(std::move(s.corrupted));
  }

  Tape tape(train);
  const ForwardOutput out = model_.forward(tape, corrupted, ForwardOptions{train, rng.next_u64()});
  Var total;
  bool have_total = false;
  for (const auto& lo : out.leaves) {
    Var losses = model_.leaf_loss(tape, lo, batch);
    std::vector<double> w;
    const PropertySpec& spec = model_.schema().leaf(lo.leaf);
    LeafLoss& agg = report.per_leaf[spec.path];
    for (std::size_t r = 0; r < lo.entities.size(); ++r) {
      EntityLoss& el = report.entities[static_cast<std::size_t>(lo.entities[r])];
      const double l = losses.value().data[r];
      el.leaf_losses.emplace_back(lo.leaf, l);
      agg.loss += l;
      ++agg.count;
      w.push_back(el.weight / b_count);
    }
    Var term = ad::weighted_sum(losses, w);
    total = have_total ? ad::add(total, term) : term;
    have_total = true;
  }
  if (!have_total) throw DataError("training step: nothing was masked");
  report.total = total.scalar();
  if (!std::isfinite(report.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step_ << " (max weight " << report.weight_max << ")";
    throw NumericalError(msg.str());
  }
  if (!train) return report;

  zero_grad(model_.parameters());
  tape.backward(total);
  report.grad_norm = clip_grad_norm(model_.parameters(), config_.clip_norm);
  if (!std::isfinite(report.grad_norm)) {
    zero_grad(model_.parameters());
    throw NumericalError("non-finite gradient at step " + std::to_string(step_));
  }
  optimizer_.step(model_.parameters(), current_lr());
  ++step_;
  return report;
}

FitResult fit(const Dataset& rows, const EntitySchema& schema, const ModelConfig& model_config, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  if (rows.empty()) throw DataError("fit: empty dataset");
  for (const auto& leaf : schema.leaves())
    if (leaf.kind == PropertyKind::numerical && !leaf.normalizer.fitted)
      throw SchemaError("fit: normalizer for '" + leaf.path + "' is not fitted");

  Dataset data;
  for (const auto& e : rows) {
    validate_entity(e, schema);
    if (e.count_masked() > 0) throw DataError("fit: training rows must not contain Masked cells");
    if (e.effective_size() > 0) data.push_back(normalize(e, schema));
  }
  if (data.empty()) throw DataError("fit: every row is entirely Missing");

  const Rng root(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = root.split(1);
  split_rng.shuffle(order.begin(), order.end());
  std::size_t n_val = 0;
  if (data.size() >= 10 && config.validation_fraction > 0.0)
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.validation_fraction * data.size())));
  Dataset validation, train;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_val ? validation : train).push_back(data[order[k]]);

  Rng init_rng = root.split(2);
  FitResult result{Model(model_config, schema, init_rng), {}, config.mode};
  const int bs = config.batch_size;
  const int per_epoch = static_cast<int>((train.size() + static_cast<std::size_t>(bs) - 1) / static_cast<std::size_t>(bs));
  Trainer trainer(result.model, config, per_epoch * config.epochs);

  Rng shuffle_rng = root.split(3);
  Rng step_rng = root.split(4);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(train.begin(), train.end());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = trainer.current_lr();
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(bs)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(bs), train.size() - start);
      const LossReport r = trainer.step(std::span<const EntityInstance>(train).subspan(start, len), step_rng);
      rec.train_loss += r.total * static_cast<double>(len) / static_cast<double>(train.size());
    }
    rec.validation_loss = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty()) {
      // Same corruption draws every epoch so the curve tracks the model only.
      Rng val_rng = root.split(5);
      double acc = 0.0;
      for (std::size_t start = 0; start < validation.size(); start += static_cast<std::size_t>(bs)) {
        const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(bs), validation.size() - start);
        acc += trainer.evaluate(std::span<const EntityInstance>(validation).subspan(start, len), val_rng).total * static_cast<double>(len);
      }
      rec.validation_loss = acc / static_cast<double>(validation.size());
    }
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec, result.model);
  }
  return result;
}

std::string loss_curve_csv(const FitResult& result) {
  std::string out = "# mode=" + std::string(to_string(result.mode)) + "\nepoch,train_loss,validation_loss,lr\n";
  for (const auto& r : result.curve) {
    out += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," +
           (std::isnan(r.validation_loss) ? std::string() : format_number(r.validation_loss)) + "," + format_number(r.lr) + "\n";
  }
  return out;
}

}  // namespace strucdiff
