#include <benchmark/benchmark.h>

#include "strucdiff/diffusion.hpp"
#include "strucdiff/generation.hpp"
#include "strucdiff/numeric.hpp"
#include "strucdiff/toy_data.hpp"
#include "strucdiff/training.hpp"

using namespace strucdiff;

namespace {

struct Fixture {
  EntitySchema schema;
  Dataset rows;
  Model model;
};

Fixture make_fixture(int dim) {
  const ToyDataset toy = make_toy("correlated_table", 256, -1.0, 1);
  EntitySchema schema = fit_normalizers(toy.schema, toy.rows);
  ModelConfig mc;
  mc.model_dim = dim;
  mc.heads = 4;
  mc.gmm_components = 16;
  Rng rng(1);
  Model model(mc, schema, rng);
  return {schema, normalize(toy.rows, schema), std::move(model)};
}

void BM_GmmNll(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng(1);
  GmmRaw raw;
  for (int k = 0; k < m; ++k) {
    raw.logits.push_back(rng.normal());
    raw.means.push_back(rng.uniform());
    raw.scale_raw.push_back(rng.normal(-2.0, 0.5));
  }
  GmmGrad grad;
  double x = 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gmm_nll(raw, x, &grad));
    x = x < 1.0 ? x + 1e-3 : 0.0;
  }
}
BENCHMARK(BM_GmmNll)->Arg(1)->Arg(16)->Arg(256);

void BM_Corrupt(benchmark::State& state) {
  const EntityInstance entity{std::vector<Cell>(static_cast<std::size_t>(state.range(0)), Cell::category(1))};
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(corrupt(entity, rng.uniform(), rng));
}
BENCHMARK(BM_Corrupt)->Arg(8)->Arg(100);

void BM_Predict(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  Dataset batch(f.rows.begin(), f.rows.begin() + 64);
  Rng rng(3);
  for (auto& e : batch) e.values[static_cast<std::size_t>(rng.index(7))] = Cell::masked();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.predict(batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Predict)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Fixture f = make_fixture(static_cast<int>(state.range(0)));
  Trainer trainer(f.model, TrainConfig{}, 1 << 20);
  const std::span<const EntityInstance> batch(f.rows.data(), 64);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch, rng).total);
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// Unconditional generation of 64 entities; leap 1 versus all leaves at once.
void BM_Sample(benchmark::State& state) {
  const Fixture f = make_fixture(32);
  const Dataset prompts = unconditional_prompts(f.schema, 64);
  const SampleConfig cfg{static_cast<int>(state.range(0))};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_batch(f.model, prompts, cfg, Rng(seed++)));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Sample)->Arg(1)->Arg(7)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
