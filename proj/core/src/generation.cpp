#include "strucdiff/generation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "strucdiff/errors.hpp"

namespace strucdiff {

namespace {

constexpr std::size_t kChunk = 256;

std::vector<std::map<int, PropertyPrediction>> predict_chunked(const Model& model, std::span<const EntityInstance> batch) {
  std::vector<std::map<int, PropertyPrediction>> out;
  out.reserve(batch.size());
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    auto part = model.predict(batch.subspan(start, std::min(kChunk, batch.size() - start)));
    for (auto& m : part) out.push_back(std::move(m));
  }
  return out;
}

Cell to_model_units(const Cell& raw, const PropertySpec& spec) {
  if (spec.kind == PropertyKind::numerical && raw.is_number()) return Cell::number(normalize_value(raw.number(), spec.normalizer));
  return raw;
}

std::vector<int> masked_leaves(const EntityInstance& e) {
  std::vector<int> out;
  for (std::size_t i = 0; i < e.values.size(); ++i)
    if (e.values[i].is_masked()) out.push_back(static_cast<int>(i));
  return out;
}

int argmax(const std::vector<double>& v) { return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()); }

void check_width(const Model& model, const EntityInstance& e) {
  if (static_cast<int>(e.values.size()) != model.schema().size()) throw DataError("entity width does not match the model schema");
}

}  // namespace

Cell point_value(const Model& model, int leaf, const PropertyPrediction& prediction) {
  const PropertySpec& spec = model.schema().leaf(leaf);
  if (const auto* c = std::get_if<CategoricalPrediction>(&prediction)) return Cell::category(argmax(c->logits));
  if (const auto* n = std::get_if<NumericPrediction>(&prediction))
    return Cell::number(denormalize_value(gmm_point(n->gmm), spec.normalizer));
  const auto& t = std::get<TextPrediction>(prediction);
  return Cell::text(model.decode_text(leaf, t.latent, 0.0, nullptr));
}

Cell draw_value(const Model& model, int leaf, const PropertyPrediction& prediction, const SampleConfig& config, Rng& rng) {
  if (config.numeric_mode == NumericMode::point) return point_value(model, leaf, prediction);
  const PropertySpec& spec = model.schema().leaf(leaf);
  if (const auto* c = std::get_if<CategoricalPrediction>(&prediction)) {
    if (config.temperature <= 0.0) return Cell::category(argmax(c->logits));
    const double top = *std::max_element(c->logits.begin(), c->logits.end());
    std::vector<double> w;
    w.reserve(c->logits.size());
    for (double z : c->logits) w.push_back(std::exp((z - top) / config.temperature));
    return Cell::category(rng.categorical(w));
  }
  if (const auto* n = std::get_if<NumericPrediction>(&prediction))
    return Cell::number(denormalize_value(gmm_sample(n->gmm, rng), spec.normalizer));
  const auto& t = std::get<TextPrediction>(prediction);
  return Cell::text(model.decode_text(leaf, t.latent, config.temperature, &rng));
}

Dataset sample_batch(const Model& model, std::span<const EntityInstance> conditioning, const SampleConfig& config, const Rng& rng,
                     SampleStats* stats) {
  if (config.leap < 1) throw std::invalid_argument("sample: leap must be >= 1");
  const EntitySchema& schema = model.schema();
  const std::size_t n = conditioning.size();
  Dataset out(conditioning.begin(), conditioning.end());
  Dataset work;
  work.reserve(n);
  std::vector<Rng> streams;
  std::vector<std::vector<int>> remaining;
  for (std::size_t k = 0; k < n; ++k) {
    check_width(model, out[k]);
    work.push_back(normalize(out[k], schema));
    streams.push_back(rng.split(k));
    remaining.push_back(masked_leaves(out[k]));
  }
  if (stats) {
    stats->network_calls = 0;
    stats->entity_calls.assign(n, 0);
    stats->steps.assign(n, {});
  }

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < n; ++k)
    if (!remaining[k].empty()) active.push_back(k);
  while (!active.empty()) {
    for (std::size_t start = 0; start < active.size(); start += kChunk) {
      const std::size_t len = std::min(kChunk, active.size() - start);
      Dataset batch;
      batch.reserve(len);
      for (std::size_t a = start; a < start + len; ++a) batch.push_back(work[active[a]]);
      const auto preds = model.predict(batch);
      if (stats) ++stats->network_calls;
      for (std::size_t a = start; a < start + len; ++a) {
        const std::size_t k = active[a];
        std::vector<int>& rem = remaining[k];
        Rng& r = streams[k];
        std::vector<int> chosen;
        if (static_cast<std::size_t>(config.leap) >= rem.size()) {
          chosen.swap(rem);
        } else {
          for (int g = 0; g < config.leap; ++g) {
            const int pick = r.index(static_cast<int>(rem.size()));
            chosen.push_back(rem[static_cast<std::size_t>(pick)]);
            rem.erase(rem.begin() + pick);
          }
          std::sort(chosen.begin(), chosen.end());
        }
        const auto& pred = preds[a - start];
        for (int leaf : chosen) {
          Cell v = draw_value(model, leaf, pred.at(leaf), config, r);
          work[k].values[static_cast<std::size_t>(leaf)] = to_model_units(v, schema.leaf(leaf));
          out[k].values[static_cast<std::size_t>(leaf)] = std::move(v);
        }
        if (stats) {
          ++stats->entity_calls[k];
          stats->steps[k].push_back(static_cast<int>(chosen.size()));
        }
      }
    }
    std::erase_if(active, [&](std::size_t k) { return remaining[k].empty(); });
  }
  return out;
}

EntityInstance sample_entity(const Model& model, const EntityInstance& conditioning, const SampleConfig& config, const Rng& rng,
                             SampleStats* stats) {
  return sample_batch(model, std::span<const EntityInstance>(&conditioning, 1), config, rng, stats).front();
}

Dataset masked_modeling_generate(const Model& model, std::span<const EntityInstance> conditioning, const SampleConfig& config,
                                 const Rng& rng) {
  const EntitySchema& schema = model.schema();
  Dataset out(conditioning.begin(), conditioning.end());
  Dataset work;
  for (const auto& e : out) {
    check_width(model, e);
    work.push_back(normalize(e, schema));
  }
  const auto preds = predict_chunked(model, work);
  for (std::size_t k = 0; k < out.size(); ++k) {
    Rng r = rng.split(k);
    for (int leaf : masked_leaves(out[k]))
      out[k].values[static_cast<std::size_t>(leaf)] = draw_value(model, leaf, preds[k].at(leaf), config, r);
  }
  return out;
}

Dataset unconditional_prompts(const EntitySchema& schema, int n) {
  EntityInstance prompt;
  prompt.values.assign(static_cast<std::size_t>(schema.size()), Cell::masked());
  return Dataset(static_cast<std::size_t>(std::max(n, 0)), prompt);
}

EntityInstance impute(const Model& model, const EntityInstance& partial, const SampleConfig& config, const Rng& rng) {
  return sample_entity(model, partial, config, rng);
}

Dataset point_predict_masked(const Model& model, std::span<const EntityInstance> batch) {
  const EntitySchema& schema = model.schema();
  Dataset work;
  work.reserve(batch.size());
  for (const auto& e : batch) {
    check_width(model, e);
    work.push_back(normalize(e, schema));
  }
  const auto preds = predict_chunked(model, work);
  Dataset out(batch.size(), EntityInstance{std::vector<Cell>(static_cast<std::size_t>(schema.size()))});
  for (std::size_t k = 0; k < batch.size(); ++k)
    for (const auto& [leaf, pred] : preds[k]) out[k].values[static_cast<std::size_t>(leaf)] = point_value(model, leaf, pred);
  return out;
}

Cell point_predict(const Model& model, const EntityInstance& partial, std::string_view target) {
  const int leaf = model.schema().index_of(target);
  if (leaf < 0) throw SchemaError("unknown target '" + std::string(target) + "'");
  check_width(model, partial);
  const Cell& c = partial.values[static_cast<std::size_t>(leaf)];
  if (c.is_present()) throw DataError("point_predict: target '" + std::string(target) + "' is Present");
  if (c.is_missing()) throw DataError("point_predict: target '" + std::string(target) + "' is Missing");
  const auto preds = model.predict(normalize(partial, model.schema()));
  return point_value(model, leaf, preds.at(leaf));
}

LoglikCurve conditional_loglik_curve(const Model& model, const EntityInstance& entity, std::string_view target,
                                     std::span<const double> grid) {
  const int leaf = model.schema().index_of(target);
  if (leaf < 0) throw SchemaError("unknown target '" + std::string(target) + "'");
  const PropertySpec& spec = model.schema().leaf(leaf);
  if (spec.kind != PropertyKind::numerical) throw SchemaError("loglik curve: '" + spec.path + "' is not numerical");
  if (grid.empty()) throw std::invalid_argument("loglik curve: empty grid");
  check_width(model, entity);
  EntityInstance probe = entity;
  probe.values[static_cast<std::size_t>(leaf)] = Cell::masked();
  const auto preds = model.predict(normalize(probe, model.schema()));
  const GmmParams& gmm = std::get<NumericPrediction>(preds.at(leaf)).gmm;

  LoglikCurve curve;
  for (double v : grid) curve.points.emplace_back(v, -gmm_nll(gmm, normalize_value(v, spec.normalizer)));
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].second > curve.points[best].second) best = i;
  curve.argmax = curve.points[best].first;
  const double cut = curve.points[best].second - 0.5;
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const auto [x0, y0] = curve.points[inside];
    const auto [x1, y1] = curve.points[outside];
    return x0 + (x1 - x0) * (y0 - cut) / (y0 - y1);
  };
  std::size_t lo = best;
  while (lo > 0 && curve.points[lo - 1].second >= cut) --lo;
  curve.lower = lo > 0 ? crossing(lo, lo - 1) : curve.points[lo].first;
  std::size_t hi = best;
  while (hi + 1 < curve.points.size() && curve.points[hi + 1].second >= cut) ++hi;
  curve.upper = hi + 1 < curve.points.size() ? crossing(hi, hi + 1) : curve.points[hi].first;
  curve.half_width = 0.5 * (curve.upper - curve.lower);
  return curve;
}

}  // namespace strucdiff
