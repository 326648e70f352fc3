#include "strucdiff/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "strucdiff/diffusion.hpp"
#include "strucdiff/errors.hpp"
#include "strucdiff/gbdt.hpp"
#include "strucdiff/training.hpp"

namespace strucdiff {

namespace {

struct Moments {
  double sum = 0.0;
  double sq = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  // Standard error of the mean.
  double stderr_mean() const {
    if (n < 2) return 0.0;
    const double var = std::max(0.0, (sq - sum * sum / n) / (n - 1));
    return std::sqrt(var / n);
  }
};

std::set<std::string> word_set(const std::string& s) {
  std::set<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(w);
  }
  return out;
}

std::vector<int> eligible(const EntityInstance& e) {
  std::vector<int> out;
  for (std::size_t i = 0; i < e.values.size(); ++i)
    if (!e.values[i].is_missing()) out.push_back(static_cast<int>(i));
  return out;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double word_iou_error(const std::string& prediction, const std::string& truth) {
  const auto a = word_set(prediction);
  const auto b = word_set(truth);
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  const std::size_t uni = a.size() + b.size() - inter;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

LeafMetrics compute_metrics(std::span<const EntityInstance> predictions, std::span<const EntityInstance> truths,
                            const EntitySchema& schema) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("compute_metrics: misaligned inputs");
  LeafMetrics out;
  for (int i = 0; i < schema.size(); ++i) {
    const PropertySpec& spec = schema.leaf(i);
    Moments m;
    for (std::size_t k = 0; k < truths.size(); ++k) {
      const Cell& t = truths[k].values.at(static_cast<std::size_t>(i));
      const Cell& p = predictions[k].values.at(static_cast<std::size_t>(i));
      if (!t.is_present() || !p.is_present()) continue;
      switch (spec.kind) {
        case PropertyKind::numerical: m.add((p.number() - t.number()) * (p.number() - t.number())); break;
        case PropertyKind::categorical: m.add(p.category() == t.category() ? 0.0 : 1.0); break;
        case PropertyKind::text: m.add(word_iou_error(p.text(), t.text())); break;
        case PropertyKind::composite: break;
      }
    }
    if (m.n == 0) continue;
    LeafMetric lm;
    lm.count = m.n;
    if (spec.kind == PropertyKind::numerical) {
      lm.metric = "rmse";
      lm.value = std::sqrt(m.mean());
      lm.stderr_value = lm.value > 0.0 ? m.stderr_mean() / (2.0 * lm.value) : 0.0;
    } else if (spec.kind == PropertyKind::categorical) {
      lm.metric = "error_rate";
      lm.value = m.mean();
      lm.stderr_value = std::sqrt(lm.value * (1.0 - lm.value) / m.n);
    } else {
      lm.metric = "one_minus_word_iou";
      lm.value = m.mean();
      lm.stderr_value = m.stderr_mean();
    }
    out.emplace(spec.path, lm);
  }
  return out;
}

std::vector<Cell> fit_constant_baseline(const EntitySchema& schema, const Dataset& train) {
  std::vector<Cell> out(static_cast<std::size_t>(schema.size()));
  for (int i = 0; i < schema.size(); ++i) {
    const PropertySpec& spec = schema.leaf(i);
    if (spec.kind == PropertyKind::numerical) {
      double sum = 0.0;
      int n = 0;
      for (const auto& e : train) {
        const Cell& c = e.values.at(static_cast<std::size_t>(i));
        if (c.is_number()) {
          sum += c.number();
          ++n;
        }
      }
      if (n > 0) out[static_cast<std::size_t>(i)] = Cell::number(sum / n);
    } else if (spec.kind == PropertyKind::categorical) {
      std::vector<int> counts(spec.categories.size(), 0);
      bool any = false;
      for (const auto& e : train) {
        const Cell& c = e.values.at(static_cast<std::size_t>(i));
        if (c.is_category()) {
          ++counts.at(static_cast<std::size_t>(c.category()));
          any = true;
        }
      }
      if (any) out[static_cast<std::size_t>(i)] = Cell::category(static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
    } else {
      std::map<std::string, int> counts;
      for (const auto& e : train) {
        const Cell& c = e.values.at(static_cast<std::size_t>(i));
        if (c.is_text()) ++counts[c.text()];
      }
      int best = 0;
      for (const auto& [s, n] : counts)
        if (n > best) {
          best = n;
          out[static_cast<std::size_t>(i)] = Cell::text(s);
        }
    }
  }
  return out;
}

Dataset baseline_predictions(const std::vector<Cell>& baseline, std::span<const EntityInstance> batch) {
  Dataset out;
  out.reserve(batch.size());
  for (const auto& e : batch) {
    EntityInstance p{std::vector<Cell>(e.values.size())};
    for (std::size_t i = 0; i < e.values.size(); ++i)
      if (e.values[i].is_masked()) p.values[i] = baseline.at(i);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

MetricReport score_masked(const Model& model, const Dataset& masked, const Dataset& truths, const std::vector<Cell>& baseline,
                          double fraction) {
  MetricReport report;
  report.masking_fraction = fraction;
  const Dataset preds = point_predict_masked(model, masked);
  report.model = compute_metrics(preds, truths, model.schema());
  report.baseline = compute_metrics(baseline_predictions(baseline, masked), truths, model.schema());
  return report;
}

}  // namespace

std::vector<MetricReport> masking_sweep(const Model& model, const Dataset& test, std::span<const double> fractions, int trials,
                                        const std::vector<Cell>& baseline, const Rng& rng) {
  if (trials < 1) throw std::invalid_argument("masking_sweep: trials must be >= 1");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) throw std::invalid_argument("masking_sweep: fractions must lie in [0,1)");
    if (i > 0 && fractions[i] < fractions[i - 1]) throw std::invalid_argument("masking_sweep: fractions must be sorted");
  }
  std::vector<MetricReport> out;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    Dataset masked, truths;
    for (int t = 0; t < trials; ++t) {
      Rng r = rng.split(fi).split(static_cast<std::uint64_t>(t));
      for (const auto& e : test) {
        std::vector<int> leaves = eligible(e);
        if (leaves.empty()) continue;
        const int d = static_cast<int>(leaves.size());
        const int k = std::clamp(static_cast<int>(std::ceil(fractions[fi] * d - 1e-12)), 1, d);
        r.shuffle(leaves.begin(), leaves.end());
        EntityInstance m = e;
        for (int j = 0; j < k; ++j) m.values[static_cast<std::size_t>(leaves[static_cast<std::size_t>(j)])] = Cell::masked();
        masked.push_back(std::move(m));
        truths.push_back(e);
      }
    }
    out.push_back(score_masked(model, masked, truths, baseline, fractions[fi]));
  }
  return out;
}

MetricReport leave_one_out_metrics(const Model& model, const Dataset& test, const std::vector<Cell>& baseline) {
  Dataset masked, truths;
  for (const auto& e : test) {
    for (int leaf : eligible(e)) {
      EntityInstance m = e;
      m.values[static_cast<std::size_t>(leaf)] = Cell::masked();
      masked.push_back(std::move(m));
      truths.push_back(e);
    }
  }
  return score_masked(model, masked, truths, baseline, 0.0);
}

double exact_reverse_loglik(const Model& model, const EntityInstance& entity, int max_leaves) {
  const EntitySchema& schema = model.schema();
  if (static_cast<int>(entity.values.size()) != schema.size()) throw DataError("exact_reverse_loglik: entity width mismatch");
  const std::vector<int> leaves = eligible(entity);
  const int m = static_cast<int>(leaves.size());
  if (m == 0) throw DataError("exact_reverse_loglik: entity has no observed leaf");
  if (m > max_leaves) throw std::invalid_argument("exact_reverse_loglik: too many leaves for exact enumeration");
  for (int leaf : leaves) {
    if (schema.leaf(leaf).kind != PropertyKind::categorical)
      throw SchemaError("exact_reverse_loglik: leaf '" + schema.leaf(leaf).path + "' is not categorical");
    if (!entity.values[static_cast<std::size_t>(leaf)].is_category()) throw DataError("exact_reverse_loglik: entity must be fully observed");
  }

  const std::uint32_t full = (1u << m) - 1u;
  // One prompt per reveal pattern S (bit j set: leaves[j] observed).
  Dataset prompts;
  for (std::uint32_t s = 0; s < full; ++s) {
    EntityInstance e = entity;
    for (int j = 0; j < m; ++j)
      if (!(s >> j & 1u)) e.values[static_cast<std::size_t>(leaves[static_cast<std::size_t>(j)])] = Cell::masked();
    prompts.push_back(std::move(e));
  }
  std::vector<std::map<int, PropertyPrediction>> preds;
  for (std::size_t start = 0; start < prompts.size(); start += 256) {
    auto part = model.predict(std::span<const EntityInstance>(prompts).subspan(start, std::min<std::size_t>(256, prompts.size() - start)));
    for (auto& p : part) preds.push_back(std::move(p));
  }

  // f(S): probability of revealing the remaining leaves given S, averaged
  // over the uniformly random order in which they are revealed.
  std::vector<double> f(full + 1u, 0.0);
  f[full] = 1.0;
  for (std::uint32_t s = full; s-- > 0;) {
    double acc = 0.0;
    int hidden = 0;
    for (int j = 0; j < m; ++j) {
      if (s >> j & 1u) continue;
      ++hidden;
      const int leaf = leaves[static_cast<std::size_t>(j)];
      const auto& logits = std::get<CategoricalPrediction>(preds[s].at(leaf)).logits;
      const double top = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - top);
      const int truth = entity.values[static_cast<std::size_t>(leaf)].category();
      acc += std::exp(logits[static_cast<std::size_t>(truth)] - top) / z * f[s | (1u << j)];
    }
    f[s] = acc / hidden;
  }
  return std::log(f[0]);
}

BoundEstimate diffusion_bound(const Model& model, const EntityInstance& entity, int draws, const Rng& rng, double pi_max) {
  if (draws < 1) throw std::invalid_argument("diffusion_bound: draws must be >= 1");
  const EntityInstance truth = normalize(entity, model.schema());
  Rng r = rng;
  Moments m;
  constexpr int kBatch = 512;
  for (int start = 0; start < draws; start += kBatch) {
    const int len = std::min(kBatch, draws - start);
    Dataset batch;
    std::vector<double> weights;
    for (int i = 0; i < len; ++i) {
      CorruptionSample s = corrupt(truth, std::min(r.uniform(), pi_max), r);
      weights.push_back(s.weight);
      batch.push_back(std::move(s.corrupted));
    }
    const auto preds = model.predict(batch);
    for (int i = 0; i < len; ++i) {
      double loss = 0.0;
      for (const auto& [leaf, pred] : preds[static_cast<std::size_t>(i)])
        loss += reconstruction_loss(model, leaf, pred, truth.values[static_cast<std::size_t>(leaf)]);
      m.add(weights[static_cast<std::size_t>(i)] * loss);
    }
  }
  return BoundEstimate{m.mean(), m.stderr_mean(), m.n};
}

double copy_match_rate(const Dataset& rows, const EntitySchema& schema) {
  const int x = schema.index_of("x"), y = schema.index_of("y");
  if (x < 0 || y < 0 || schema.leaf(x).kind != PropertyKind::categorical || schema.leaf(y).kind != PropertyKind::categorical)
    throw SchemaError("copy_match_rate: needs categorical leaves x and y");
  int hits = 0, n = 0;
  for (const auto& e : rows) {
    const Cell& a = e.values.at(static_cast<std::size_t>(x));
    const Cell& b = e.values.at(static_cast<std::size_t>(y));
    if (!a.is_category() || !b.is_category()) continue;
    ++n;
    hits += schema.leaf(x).categories[static_cast<std::size_t>(a.category())] == schema.leaf(y).categories[static_cast<std::size_t>(b.category())];
  }
  if (n == 0) throw DataError("copy_match_rate: no complete rows");
  return static_cast<double>(hits) / n;
}

double moons_manifold_distance(double x, double y) {
  auto arc = [](double px, double py, double cx, double cy, bool upper) {
    const bool on_side = upper ? py >= cy : py <= cy;
    if (on_side) return std::abs(std::hypot(px - cx, py - cy) - 1.0);
    return std::min(std::hypot(px - (cx - 1.0), py - cy), std::hypot(px - (cx + 1.0), py - cy));
  };
  return std::min(arc(x, y, 0.0, 0.0, true), arc(x, y, 1.0, 0.5, false));
}

double moons_manifold_hit(const Dataset& rows, const EntitySchema& schema, double eps) {
  const int x = schema.index_of("x"), y = schema.index_of("y");
  if (x < 0 || y < 0 || schema.leaf(x).kind != PropertyKind::numerical || schema.leaf(y).kind != PropertyKind::numerical)
    throw SchemaError("moons_manifold_hit: needs numerical leaves x and y");
  int hits = 0, n = 0;
  for (const auto& e : rows) {
    const Cell& a = e.values.at(static_cast<std::size_t>(x));
    const Cell& b = e.values.at(static_cast<std::size_t>(y));
    if (!a.is_number() || !b.is_number()) continue;
    ++n;
    hits += moons_manifold_distance(a.number(), b.number()) < eps;
  }
  if (n == 0) throw DataError("moons_manifold_hit: no complete rows");
  return static_cast<double>(hits) / n;
}

double dependence_gap(const Dataset& a, const Dataset& b, const EntitySchema& schema) {
  std::vector<int> cats, nums;
  for (int i = 0; i < schema.size(); ++i) {
    if (schema.leaf(i).kind == PropertyKind::categorical) cats.push_back(i);
    if (schema.leaf(i).kind == PropertyKind::numerical) nums.push_back(i);
  }
  auto joint = [&](const Dataset& rows, int i, int j) {
    const std::size_t ki = schema.leaf(i).categories.size(), kj = schema.leaf(j).categories.size();
    std::vector<double> h(ki * kj, 0.0);
    double n = 0.0;
    for (const auto& e : rows) {
      const Cell& u = e.values[static_cast<std::size_t>(i)];
      const Cell& v = e.values[static_cast<std::size_t>(j)];
      if (!u.is_category() || !v.is_category()) continue;
      h[static_cast<std::size_t>(u.category()) * kj + static_cast<std::size_t>(v.category())] += 1.0;
      n += 1.0;
    }
    if (n > 0)
      for (double& x : h) x /= n;
    return h;
  };
  auto corr = [&](const Dataset& rows, int i, int j) {
    Moments mi, mj;
    double cross = 0.0;
    for (const auto& e : rows) {
      const Cell& u = e.values[static_cast<std::size_t>(i)];
      const Cell& v = e.values[static_cast<std::size_t>(j)];
      if (!u.is_number() || !v.is_number()) continue;
      mi.add(u.number());
      mj.add(v.number());
      cross += u.number() * v.number();
    }
    if (mi.n < 2) return 0.0;
    const double n = mi.n;
    const double cov = cross / n - mi.mean() * mj.mean();
    const double vi = mi.sq / n - mi.mean() * mi.mean();
    const double vj = mj.sq / n - mj.mean() * mj.mean();
    return vi > 0 && vj > 0 ? cov / std::sqrt(vi * vj) : 0.0;
  };
  double cat_gap = 0.0, num_gap = 0.0;
  int cat_pairs = 0, num_pairs = 0;
  for (std::size_t p = 0; p < cats.size(); ++p)
    for (std::size_t q = p + 1; q < cats.size(); ++q) {
      const auto ha = joint(a, cats[p], cats[q]);
      const auto hb = joint(b, cats[p], cats[q]);
      double tv = 0.0;
      for (std::size_t k = 0; k < ha.size(); ++k) tv += std::abs(ha[k] - hb[k]);
      cat_gap += 0.5 * tv;
      ++cat_pairs;
    }
  for (std::size_t p = 0; p < nums.size(); ++p)
    for (std::size_t q = p + 1; q < nums.size(); ++q) {
      num_gap += std::abs(corr(a, nums[p], nums[q]) - corr(b, nums[p], nums[q]));
      ++num_pairs;
    }
  return (cat_pairs ? cat_gap / cat_pairs : 0.0) + (num_pairs ? num_gap / num_pairs : 0.0);
}

EfficacyReport downstream_efficacy(const Dataset& real_train, std::span<const Dataset> synthetic, const Dataset& real_test,
                                   const EntitySchema& schema, const EfficacyTask& task) {
  const int target = schema.index_of(task.target);
  if (target < 0) throw SchemaError("efficacy: unknown target '" + task.target + "'");
  const PropertySpec& tspec = schema.leaf(target);
  if (tspec.kind == PropertyKind::text || tspec.kind == PropertyKind::composite)
    throw SchemaError("efficacy: target must be numerical or categorical");
  if (task.learner_seeds < 1) throw std::invalid_argument("efficacy: learner_seeds must be >= 1");
  std::vector<int> features;
  for (int i = 0; i < schema.size(); ++i) {
    if (i == target || schema.leaf(i).kind == PropertyKind::text) continue;
    if (std::find(task.exclude.begin(), task.exclude.end(), schema.leaf(i).path) != task.exclude.end()) continue;
    features.push_back(i);
  }
  if (features.empty()) throw SchemaError("efficacy: no feature leaves");

  // Missing features are filled with the real training mean or mode.
  const std::vector<Cell> fill = fit_constant_baseline(schema, real_train);
  auto encode = [&](const Dataset& rows, std::vector<std::vector<double>>& x, std::vector<double>& y, bool require_target) {
    for (const auto& e : rows) {
      const Cell& t = e.values.at(static_cast<std::size_t>(target));
      if (!t.is_present()) {
        if (require_target) throw DataError("efficacy: target '" + task.target + "' is Missing in the test set");
        continue;
      }
      std::vector<double> row;
      for (int f : features) {
        const Cell& c = e.values.at(static_cast<std::size_t>(f));
        const Cell& v = c.is_present() ? c : fill[static_cast<std::size_t>(f)];
        row.push_back(v.is_number() ? v.number() : (v.is_category() ? static_cast<double>(v.category()) : 0.0));
      }
      x.push_back(std::move(row));
      y.push_back(t.is_number() ? t.number() : static_cast<double>(t.category()));
    }
  };
  std::vector<std::vector<double>> test_x;
  std::vector<double> test_y;
  encode(real_test, test_x, test_y, true);
  if (test_x.empty()) throw DataError("efficacy: empty test set");

  const bool regression = tspec.kind == PropertyKind::numerical;
  const int classes = static_cast<int>(tspec.categories.size());
  auto score = [&](const Dataset& train, int seed) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    encode(train, x, y, false);
    if (x.empty()) throw DataError("efficacy: training set has no labelled rows");
    GbdtConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    GradientBoosting model(cfg);
    if (regression) {
      model.fit_regression(x, y);
      std::vector<double> pred;
      for (const auto& r : test_x) pred.push_back(model.predict_value(r));
      return r2_score(test_y, pred);
    }
    std::vector<int> labels(y.begin(), y.end());
    model.fit_classification(x, labels, classes);
    std::vector<int> pred, truth(test_y.begin(), test_y.end());
    for (const auto& r : test_x) pred.push_back(model.predict_class(r));
    return macro_f1(truth, pred, classes);
  };

  EfficacyReport report;
  report.metric = regression ? "r2" : "macro_f1";
  for (int s = 0; s < task.learner_seeds; ++s) report.real_scores.push_back(score(real_train, s));
  for (const auto& syn : synthetic)
    for (int s = 0; s < task.learner_seeds; ++s) report.synthetic_scores.push_back(score(syn, s));
  report.real_mean = mean_of(report.real_scores);
  report.real_std = sample_std(report.real_scores);
  report.synthetic_mean = mean_of(report.synthetic_scores);
  report.synthetic_std = sample_std(report.synthetic_scores);
  return report;
}

AblationReport ablate_single_step_vs_diffusion(const Model& model, const Dataset& reference, const Rng& rng,
                                               const std::optional<EfficacyTask>& task, const Dataset& test, double manifold_eps) {
  const EntitySchema& schema = model.schema();
  const Dataset prompts = unconditional_prompts(schema, static_cast<int>(reference.size()));
  auto run = [&](int leap) {
    AblationArm arm;
    arm.leap = leap;
    SampleConfig cfg;
    cfg.leap = leap;
    arm.samples = sample_batch(model, prompts, cfg, rng);
    try {
      arm.copy_match = copy_match_rate(arm.samples, schema);
    } catch (const SchemaError&) {
    }
    try {
      arm.manifold_hit = moons_manifold_hit(arm.samples, schema, manifold_eps);
    } catch (const SchemaError&) {
    }
    arm.dependence = dependence_gap(arm.samples, reference, schema);
    if (task) arm.efficacy = downstream_efficacy(reference, std::span<const Dataset>(&arm.samples, 1), test, schema, *task);
    return arm;
  };
  return AblationReport{run(1), run(schema.size())};
}

}  // namespace strucdiff
