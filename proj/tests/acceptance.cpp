// Acceptance suite: one PASS/FAIL line per criterion. Each criterion also has
// a wall-clock budget; exceeding it counts as a failure. Trained models are
// shared between criteria and their training time is charged to the first
// criterion that needs them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "strucdiff/diffusion.hpp"
#include "strucdiff/evaluation.hpp"
#include "strucdiff/generation.hpp"
#include "strucdiff/numeric.hpp"
#include "strucdiff/toy_data.hpp"
#include "strucdiff/training.hpp"
#include "test_support.hpp"

using namespace strucdiff;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kTransitionTol = 1e-10;
constexpr double kWeightTol = 1e-12;
constexpr double kMeanMaskedTol = 0.5;
constexpr double kGmmValueTol = 1e-9;
constexpr double kGmmGradRelTol = 1e-4;
constexpr double kSigmas = 3.0;
constexpr double kCopyStepwiseMin = 0.9;
constexpr double kCopySingleStep = 0.25;
constexpr double kCopySingleStepTol = 0.03;
constexpr double kManifoldEps = 0.15;
constexpr double kManifoldStepwiseMin = 0.9;
constexpr double kManifoldGapMin = 0.15;
constexpr int kHistogramBins = 50;
constexpr double kModeFraction = 0.5;
constexpr double kValleyFraction = 0.4;
constexpr double kPermutationTol = 1e-6;
constexpr double kSweepSigmas = 2.0;
constexpr double kImputeRatioMax = 0.8;
constexpr double kEfficacyRatioMin = 0.9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared trained models.

const ToyDataset& copy_data() {
  static const ToyDataset d = make_toy("copy_pair", 2000, -1.0, 1);
  return d;
}

const Model& copy_model() {
  static const Model m = [] {
    ModelConfig mc;
    mc.model_dim = 32;
    mc.entity_layers = 1;
    mc.heads = 2;
    mc.property_layers = 1;
    mc.dropout = 0.0;
    TrainConfig tc;
    tc.epochs = 20;
    tc.lr = 3e-3;
    tc.seed = 3;
    return fit(copy_data().rows, copy_data().schema, mc, tc).model;
  }();
  return m;
}

const ToyDataset& moons_data() {
  static const ToyDataset d = make_toy("two_moons", 2000, -1.0, 1);
  return d;
}

Model train_moons(int components, bool unit_scale) {
  const EntitySchema schema = fit_normalizers(moons_data().schema, moons_data().rows);
  ModelConfig mc;
  mc.model_dim = 32;
  mc.entity_layers = 1;
  mc.heads = 2;
  mc.property_layers = 1;
  mc.dropout = 0.0;
  mc.gmm_components = components;
  mc.unit_scale = unit_scale;
  TrainConfig tc;
  tc.epochs = 150;
  tc.lr = 1e-3;
  tc.seed = 3;
  return fit(moons_data().rows, schema, mc, tc).model;
}

const Model& moons_mixture_model() {
  static const Model m = train_moons(256, false);
  return m;
}

const Model& moons_unit_model() {
  static const Model m = train_moons(1, true);
  return m;
}

struct TableFixture {
  ToyDataset train;
  ToyDataset test;
  EntitySchema schema;
  Model model;
  std::vector<Cell> baseline;
};

const TableFixture& table() {
  static const TableFixture f = [] {
    ToyDataset train = make_toy("correlated_table", 3000, -1.0, 1);
    ToyDataset test = make_toy("correlated_table", 1000, -1.0, 2);
    EntitySchema schema = fit_normalizers(train.schema, train.rows);
    ModelConfig mc;
    mc.model_dim = 32;
    mc.entity_layers = 2;
    mc.heads = 4;
    mc.property_layers = 1;
    mc.gmm_components = 16;
    mc.dropout = 0.0;
    TrainConfig tc;
    tc.epochs = 30;
    tc.lr = 2e-3;
    tc.seed = 3;
    Model model = fit(train.rows, schema, mc, tc).model;
    std::vector<Cell> baseline = fit_constant_baseline(schema, train.rows);
    return TableFixture{std::move(train), std::move(test), std::move(schema), std::move(model), std::move(baseline)};
  }();
  return f;
}

// Small all-categorical distributions with planted dependencies.
struct TinyTask {
  const char* name;
  int leaves;
  int labels;
  std::function<EntityInstance(Rng&)> draw;
};

std::vector<TinyTask> tiny_tasks() {
  auto noisy_copy = [](Rng& r, int v, int k, double keep) { return r.bernoulli(keep) ? v : r.index(k); };
  return {
      {"noisy_copy_d2k2", 2, 2,
       [=](Rng& r) {
         const int x = r.index(2);
         return EntityInstance{{Cell::category(x), Cell::category(noisy_copy(r, x, 2, 0.8))}};
       }},
      {"chain_d3k3", 3, 3,
       [=](Rng& r) {
         const int x = r.index(3);
         const int y = noisy_copy(r, x, 3, 0.8);
         return EntityInstance{{Cell::category(x), Cell::category(y), Cell::category(noisy_copy(r, y, 3, 0.8))}};
       }},
      {"skewed_d2k3", 2, 3,
       [](Rng& r) {
         return EntityInstance{{Cell::category(r.categorical({0.6, 0.3, 0.1})), Cell::category(r.categorical({0.2, 0.2, 0.6}))}};
       }},
      {"parity_d3k2", 3, 2,
       [](Rng& r) {
         const int x = r.index(2), y = r.index(2);
         return EntityInstance{{Cell::category(x), Cell::category(y), Cell::category(r.bernoulli(0.9) ? x ^ y : 1 - (x ^ y))}};
       }},
      {"single_d1k3", 1, 3, [](Rng& r) { return EntityInstance{{Cell::category(r.categorical({0.7, 0.2, 0.1}))}}; }},
  };
}

struct TinyModel {
  std::string name;
  Dataset rows;
  Model model;
};

const std::vector<TinyModel>& tiny_models() {
  static const std::vector<TinyModel> models = [] {
    std::vector<TinyModel> out;
    std::uint64_t seed = 1;
    for (const auto& task : tiny_tasks()) {
      Rng rng(seed);
      Dataset rows;
      for (int i = 0; i < 1000; ++i) rows.push_back(task.draw(rng));
      TrainConfig tc;
      tc.epochs = 15;
      tc.lr = 3e-3;
      tc.batch_size = 32;
      tc.seed = seed;
      Model m = fit(rows, strucdiff::testing::categorical_schema(task.leaves, task.labels), strucdiff::testing::tiny_config(16), tc).model;
      out.push_back(TinyModel{task.name, std::move(rows), std::move(m)});
      ++seed;
    }
    return out;
  }();
  return models;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome transition_suite() {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + rng.index(9);
    const double p1 = rng.uniform(), p2 = rng.uniform();
    const Tensor a = transition_matrix(p1, k).entries;
    const Tensor b = transition_matrix(p2, k).entries;
    const Tensor c = transition_matrix(1.0 - (1.0 - p1) * (1.0 - p2), k).entries;
    for (int i = 0; i < k; ++i) {
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        sum += a(i, j);
        double ab = 0.0;
        for (int m = 0; m < k; ++m) ab += a(i, m) * b(m, j);
        worst = std::max(worst, std::abs(ab - c(i, j)));
      }
      worst = std::max(worst, std::abs(sum - 1.0));
      for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(a(0, j) - (j == 0 ? 1.0 : 0.0)));
    }
  }
  return {worst <= kTransitionTol, "max deviation " + fmt("%.2e", worst)};
}

Outcome loss_weight_suite() {
  const double e1 = std::abs(loss_weight(3, 0, 0.0) - 3.0);
  const double e2 = std::abs(loss_weight(4, 2, 0.5) - 4.0 / 3.0);
  const double e3 = std::abs(loss_weight(10, 9, 0.5) - 0.2);
  const EntityInstance entity{std::vector<Cell>(100, Cell::category(1))};
  Rng rng(2);
  const int draws = 100000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) total += corrupt(entity, 0.3, rng).n_before;
  const double mean = total / draws;
  const bool pass = std::max({e1, e2, e3}) <= kWeightTol && std::abs(mean - 30.0) <= kMeanMaskedTol;
  return {pass, "weight error " + fmt("%.1e", std::max({e1, e2, e3})) + ", mean n_before " + fmt("%.4f", mean)};
}

Outcome gmm_suite() {
  const GmmParams unit{{1.0}, {0.0}, {1.0}};
  const double v0 = gmm_nll(unit, 0.0), v1 = gmm_nll(unit, 1.0);
  bool pass = std::abs(v0 - 0.918939) <= kGmmValueTol + 5e-7 && std::abs(v1 - 1.418939) <= kGmmValueTol + 5e-7;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  pass &= std::abs(v0 - half_log_2pi) <= kGmmValueTol && std::abs(v1 - (half_log_2pi + 0.5)) <= kGmmValueTol;

  Rng rng(3);
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + trial % 6;
    GmmRaw raw;
    for (int k = 0; k < m; ++k) {
      raw.logits.push_back(rng.normal());
      raw.means.push_back(rng.normal());
      raw.scale_raw.push_back(rng.normal(-0.5, 0.7));
    }
    const double x = rng.normal(0.0, 1.2);
    GmmGrad g;
    gmm_nll(raw, x, &g);
    auto check = [&](std::vector<double>& v, const std::vector<double>& analytic) {
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double keep = v[k];
        v[k] = keep + h;
        const double up = gmm_nll(raw, x, nullptr);
        v[k] = keep - h;
        const double down = gmm_nll(raw, x, nullptr);
        v[k] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[k] - fd) / std::max(1.0, std::abs(fd)));
      }
    };
    check(raw.logits, g.logits);
    check(raw.means, g.means);
    check(raw.scale_raw, g.scale_raw);
  }
  pass &= worst <= kGmmGradRelTol;
  return {pass, "nll(0)=" + fmt("%.9f", v0) + " nll(1)=" + fmt("%.9f", v1) + ", worst gradient error " + fmt("%.2e", worst)};
}

Outcome bound_direction() {
  std::string detail;
  bool pass = true;
  int checks = 0;
  for (const auto& tm : tiny_models()) {
    for (int i = 0; i < 3; ++i) {
      const EntityInstance& x = tm.rows[static_cast<std::size_t>(i)];
      const double nll = -exact_reverse_loglik(tm.model, x);
      const BoundEstimate b = diffusion_bound(tm.model, x, 100000, Rng(static_cast<std::uint64_t>(100 + checks)));
      const bool ok = b.mean >= nll - kSigmas * b.stderr_value;
      pass &= ok;
      if (i == 0) detail += tm.name + " bound " + fmt("%.3f", b.mean) + "+-" + fmt("%.3f", b.stderr_value) + " nll " + fmt("%.3f", nll) + "; ";
      ++checks;
    }
  }
  return {pass, std::to_string(checks) + " entities on " + std::to_string(tiny_models().size()) + " models: " + detail};
}

Outcome sampler_likelihood() {
  const Model& m = tiny_models().front().model;
  const int n = 100000;
  const Dataset out = sample_batch(m, unconditional_prompts(m.schema(), n), SampleConfig{1}, Rng(7));
  std::array<int, 4> counts{};
  for (const auto& e : out) ++counts[static_cast<std::size_t>(2 * e.values[0].category() + e.values[1].category())];
  bool pass = true;
  double worst = 0.0, mass = 0.0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const double p = std::exp(exact_reverse_loglik(m, EntityInstance{{Cell::category(x), Cell::category(y)}}));
      mass += p;
      const double z = (counts[static_cast<std::size_t>(2 * x + y)] - n * p) / std::sqrt(n * p * (1.0 - p));
      worst = std::max(worst, std::abs(z));
      pass &= std::abs(z) <= kSigmas;
    }
  return {pass, "max |z| " + fmt("%.2f", worst) + ", total exact probability " + fmt("%.12f", mass)};
}

Outcome leap_equivalence() {
  const ToyDataset t = make_toy("correlated_table", 200, -1.0, 4);
  const EntitySchema schema = fit_normalizers(t.schema, t.rows);
  Rng init(5);
  const Model m(strucdiff::testing::tiny_config(16), schema, init);
  bool pass = true;
  int total_calls = 0;

  const Dataset prompts = unconditional_prompts(schema, 100);
  SampleStats stats;
  const Dataset a = sample_batch(m, prompts, SampleConfig{schema.size()}, Rng(9), &stats);
  pass &= stats.network_calls == 1 && a == masked_modeling_generate(m, prompts, SampleConfig{schema.size()}, Rng(9));
  total_calls += stats.network_calls;

  // Three masked leaves among observed and Missing ones.
  Dataset partial;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EntityInstance e = t.rows[k];
    e.values[k % 7] = Cell::missing();
    for (int j = 1; j <= 3; ++j) e.values[(k + static_cast<std::size_t>(j)) % 7] = Cell::masked();
    partial.push_back(std::move(e));
  }
  const Dataset b = sample_batch(m, partial, SampleConfig{3}, Rng(10), &stats);
  pass &= stats.network_calls == 1 && b == masked_modeling_generate(m, partial, SampleConfig{3}, Rng(10));
  total_calls += stats.network_calls;
  return {pass, "network calls " + std::to_string(total_calls) + " over two batches, outputs identical: " + (pass ? "yes" : "no")};
}

Outcome ablation() {
  const ToyDataset ref = make_toy("copy_pair", 10000, -1.0, 2);
  const AblationReport copy = ablate_single_step_vs_diffusion(copy_model(), ref.rows, Rng(5));
  const double c1 = *copy.stepwise.copy_match, cd = *copy.single_step.copy_match;
  const AblationReport moons = ablate_single_step_vs_diffusion(moons_mixture_model(), moons_data().rows, Rng(5), std::nullopt, {}, kManifoldEps);
  const double m1 = *moons.stepwise.manifold_hit, md = *moons.single_step.manifold_hit;
  const bool pass = c1 >= kCopyStepwiseMin && std::abs(cd - kCopySingleStep) <= kCopySingleStepTol && m1 >= kManifoldStepwiseMin &&
                    md <= m1 - kManifoldGapMin;
  return {pass, "copy match leap=1 " + fmt("%.4f", c1) + " leap=D " + fmt("%.4f", cd) + "; manifold hit leap=1 " + fmt("%.3f", m1) +
                    " leap=D " + fmt("%.3f", md)};
}

// Two bins of at least half the peak mass separated by a bin holding less than
// 40% of it.
bool bimodal(const std::vector<int>& h, double* valley_ratio) {
  const int peak = *std::max_element(h.begin(), h.end());
  std::optional<std::size_t> last_mode;
  double best_valley = 1.0;
  bool found = false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] < kModeFraction * peak) continue;
    if (last_mode && i > *last_mode + 1) {
      const int low = *std::min_element(h.begin() + static_cast<long>(*last_mode) + 1, h.begin() + static_cast<long>(i));
      best_valley = std::min(best_valley, static_cast<double>(low) / peak);
      found |= low < kValleyFraction * peak;
    }
    last_mode = i;
  }
  if (valley_ratio) *valley_ratio = best_valley;
  return found;
}

std::vector<int> x_histogram(const Dataset& rows, double lo, double hi) {
  std::vector<int> h(kHistogramBins, 0);
  for (const auto& e : rows) {
    const double x = e.values[0].number();
    if (x < lo || x > hi) continue;
    const int b = std::min(kHistogramBins - 1, static_cast<int>((x - lo) / (hi - lo) * kHistogramBins));
    ++h[static_cast<std::size_t>(b)];
  }
  return h;
}

Outcome marginal_shape() {
  double lo = 1e300, hi = -1e300;
  for (const auto& e : moons_data().rows) {
    lo = std::min(lo, e.values[0].number());
    hi = std::max(hi, e.values[0].number());
  }
  const int n = 5000;
  auto valley = [&](const Model& m, bool& is_bimodal) {
    const Dataset s = sample_batch(m, unconditional_prompts(m.schema(), n), SampleConfig{1}, Rng(6));
    double v = 1.0;
    is_bimodal = bimodal(x_histogram(s, lo, hi), &v);
    return v;
  };
  bool mixture_bimodal = false, unit_bimodal = false;
  const double vm = valley(moons_mixture_model(), mixture_bimodal);
  const double vu = valley(moons_unit_model(), unit_bimodal);
  return {mixture_bimodal && !unit_bimodal, "mixture head deepest valley/peak " + fmt("%.2f", vm) + (mixture_bimodal ? " (bimodal)" : " (unimodal)") +
                                               ", unit-variance head " + fmt("%.2f", vu) + (unit_bimodal ? " (bimodal)" : " (unimodal)")};
}

Outcome permutation_invariance() {
  const EntitySchema schema = strucdiff::testing::mixed_schema();
  Rng init(11);
  const Model m(strucdiff::testing::tiny_config(16), schema, init);
  Rng rng(12);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    EntityInstance truth{{Cell::number(rng.uniform(0, 10)), Cell::number(rng.uniform(1, 31)), Cell::category(rng.index(3)),
                          Cell::text(std::string(static_cast<std::size_t>(1 + rng.index(6)), static_cast<char>('a' + rng.index(10))))}};
    truth = normalize(truth, schema);
    EntityInstance masked = truth;
    bool any = false;
    for (auto& c : masked.values)
      if (rng.bernoulli(0.5)) c = Cell::masked(), any = true;
    if (!any) masked.values[static_cast<std::size_t>(rng.index(4))] = Cell::masked();

    std::vector<int> order{0, 1, 2, 3};
    rng.shuffle(order.begin(), order.end());
    const EntitySchema permuted = schema.permuted(order);
    const Model pm = m.rebind(permuted);
    const EntityInstance ptruth = permute_entity(truth, order);
    const auto a = m.predict(masked);
    const auto b = pm.predict(permute_entity(masked, order));
    for (const auto& [leaf, pred] : a) {
      const int j = permuted.index_of(schema.leaf(leaf).path);
      const double la = reconstruction_loss(m, leaf, pred, truth.values[static_cast<std::size_t>(leaf)]);
      const double lb = reconstruction_loss(pm, j, b.at(j), ptruth.values[static_cast<std::size_t>(j)]);
      worst = std::max(worst, std::abs(la - lb));
    }
  }
  return {worst <= kPermutationTol, "max per-path loss difference " + fmt("%.2e", worst)};
}

Outcome sweep_shape() {
  const TableFixture& t = table();
  const std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 0.9};
  const auto reports = masking_sweep(t.model, t.test.rows, fractions, 3, t.baseline, Rng(4));
  const MetricReport& most = reports.front();  // one leaf masked
  const MetricReport& least = reports.back();  // every leaf masked
  bool pass = true;
  std::string detail = "rmse f=0 vs f=0.9:";
  for (const char* leaf : {"a", "b", "target"}) {
    const double hi = most.model.at(leaf).value, lo = least.model.at(leaf).value;
    pass &= hi < lo;
    detail += std::string(" ") + leaf + " " + fmt("%.3f", hi) + "/" + fmt("%.3f", lo);
  }
  double worst_z = 0.0;
  for (const auto& [leaf, lm] : least.model) {
    const double gap = std::abs(lm.value - least.baseline.at(leaf).value);
    pass &= gap <= kSweepSigmas * lm.stderr_value;
    if (lm.stderr_value > 0) worst_z = std::max(worst_z, gap / lm.stderr_value);
  }
  return {pass, detail + "; lowest-conditioning gap to baseline at most " + fmt("%.2f", worst_z) + " SE"};
}

Outcome imputation() {
  const TableFixture& t = table();
  const MetricReport r = leave_one_out_metrics(t.model, t.test.rows, t.baseline);
  bool pass = true;
  std::string detail = "model/baseline:";
  for (const char* leaf : {"a", "b", "c", "target", "label"}) {
    const double ratio = r.model.at(leaf).value / r.baseline.at(leaf).value;
    pass &= ratio <= kImputeRatioMax;
    detail += std::string(" ") + leaf + " " + fmt("%.3f", ratio);
  }
  return {pass, detail};
}

Outcome efficacy() {
  const TableFixture& t = table();
  std::vector<Dataset> synthetic;
  for (int s = 0; s < 5; ++s)
    synthetic.push_back(sample_batch(t.model, unconditional_prompts(t.schema, static_cast<int>(t.train.rows.size())), SampleConfig{1},
                                     Rng(static_cast<std::uint64_t>(100 + s))));
  const EfficacyReport r = downstream_efficacy(t.train.rows, synthetic, t.test.rows, t.schema, EfficacyTask{"target", {"label"}, 10});
  const double ratio = r.synthetic_mean / r.real_mean;
  return {ratio >= kEfficacyRatioMin && r.synthetic_scores.size() == 50u,
          r.metric + " real " + fmt("%.4f", r.real_mean) + " synthetic " + fmt("%.4f", r.synthetic_mean) + " ratio " + fmt("%.3f", ratio)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (entry.path().filename().string().find("manifest") != std::string::npos) {
      auto doc = nlohmann::json::parse(body);
      doc.erase("wall_clock_seconds");
      body = doc.dump();
    }
    files[fs::relative(entry.path(), dir).string()] = std::move(body);
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "strucdiff_acceptance_pipeline";
  auto pipeline = [&]() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::vector<std::vector<std::string>> steps{
        {"toy", "--name", "two_moons", "--n", "400", "--seed", "7", "-o", d + "/moons.csv"},
        {"train", "--data", d + "/moons.csv", "--schema", d + "/moons.schema.json", "--set", "model.dim=16", "--set", "model.heads=2", "--set",
         "model.entity_layers=1", "--set", "model.property_layers=1", "--set", "model.gmm_components=8", "--set", "train.epochs=5",
         "--seed", "7", "-o", d + "/run"},
        {"sample", "--ckpt", d + "/run/model.ckpt", "--n", "100", "--leap", "1", "--seed", "7", "-o", d + "/samples.jsonl"},
        {"evaluate", "--ckpt", d + "/run/model.ckpt", "--data", d + "/moons.csv", "--metrics", "leave_one_out,bound", "--draws", "200",
         "--max-entities", "20", "--seed", "7", "-o", d + "/report.json"}};
    for (const auto& step : steps) {
      std::vector<const char*> argv{"strucdiff"};
      for (const auto& a : step) argv.push_back(a.c_str());
      std::ostringstream out, err;
      const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
      if (code != 0) throw std::runtime_error(step[0] + " failed: " + err.str());
    }
    return snapshot(dir);
  };
  const auto first = pipeline();
  const auto second = pipeline();
  fs::remove_all(dir);
  int differing = 0;
  for (const auto& [name, body] : first) {
    auto it = second.find(name);
    differing += it == second.end() || it->second != body;
  }
  differing += static_cast<int>(second.size() > first.size() ? second.size() - first.size() : 0);
  return {differing == 0 && first.size() >= 10, std::to_string(first.size()) + " files compared, " + std::to_string(differing) + " differ"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "transition matrices", 1, transition_suite},
      {2, "loss weights and corruption", 10, loss_weight_suite},
      {3, "mixture likelihood and gradient", 30, gmm_suite},
      {4, "bound direction", 300, bound_direction},
      {5, "sampler-likelihood consistency", 120, sampler_likelihood},
      {6, "leap equivalence", 60, leap_equivalence},
      {7, "stepwise vs single-step ablation", 900, ablation},
      {8, "mixture head marginal shape", 900, marginal_shape},
      {9, "permutation invariance", 60, permutation_invariance},
      {10, "masking sweep shape", 600, sweep_shape},
      {11, "imputation vs constant baseline", 600, imputation},
      {12, "downstream efficacy", 1200, efficacy},
      {13, "end-to-end determinism", 600, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = elapsed <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s  [%2d] %-36s %7.2fs / %5.0fs  %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, elapsed, c.budget_seconds, o.detail.c_str(),
                in_budget ? "" : " (over budget)");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
