#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "strucdiff/autodiff.hpp"
#include "strucdiff/rng.hpp"

namespace strucdiff {
namespace {

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

Parameter random_param(const std::string& name, int rows, int cols, Rng& rng, double sd = 1.0) {
  Parameter p{name, Tensor(rows, cols), {}, 1.0, true};
  for (double& v : p.value.data) v = rng.normal(0, sd);
  return p;
}

// Compares tape gradients of a scalar function with central differences.
void check_gradients(std::vector<Parameter>& params, const Builder& build, double tol = 1e-6) {
  auto evaluate = [&](bool record) {
    Tape tape(record);
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    Var out = build(tape, vars);
    if (record) {
      for (auto& p : params) p.zero_grad();
      tape.backward(out);
    }
    return out.scalar();
  };
  evaluate(true);
  const double h = 1e-6;
  for (auto& p : params) {
    const Tensor analytic = p.grad;
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double keep = p.value.data[i];
      p.value.data[i] = keep + h;
      const double up = evaluate(false);
      p.value.data[i] = keep - h;
      const double down = evaluate(false);
      p.value.data[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(analytic.data[i], fd, tol * std::max(1.0, std::abs(fd))) << p.name << "[" << i << "]";
    }
  }
}

// A fixed random projection to a scalar so every output entry matters.
Var project(Tape& tape, Var x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.rows(), x.cols());
  for (double& v : w.data) v = rng.normal(0, 1);
  return ad::sum(ad::mul_const(x, w));
}

TEST(Autodiff, ElementwiseOps) {
  Rng rng(1);
  std::vector<Parameter> ps{random_param("a", 3, 4, rng), random_param("b", 3, 4, rng)};
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    Var x = ad::add(ad::mul(ad::sigmoid(v[0]), ad::tanh(v[1])), ad::sub(ad::sin(v[0]), ad::cos(v[1])));
    x = ad::add(x, ad::scale(ad::softplus(v[0]), 0.3));
    return project(t, x, 7);
  });
}

TEST(Autodiff, MatmulBiasAndRowScaling) {
  Rng rng(2);
  std::vector<Parameter> ps{random_param("x", 4, 3, rng), random_param("w", 3, 5, rng), random_param("b", 1, 5, rng)};
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    const std::vector<double> f{0.5, -1.0, 2.0, 0.0};
    return project(t, ad::scale_rows(ad::add_bias(ad::matmul(v[0], v[1]), v[2]), f), 8);
  });
}

TEST(Autodiff, ReluAwayFromKink) {
  Rng rng(3);
  std::vector<Parameter> ps{random_param("a", 2, 6, rng)};
  for (double& x : ps[0].value.data)
    if (std::abs(x) < 0.1) x = 0.5;
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) { return project(t, ad::relu(v[0]), 9); });
}

TEST(Autodiff, GluAndLayerNorm) {
  Rng rng(4);
  std::vector<Parameter> ps{random_param("x", 3, 8, rng), random_param("g", 1, 4, rng), random_param("b", 1, 4, rng)};
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) { return project(t, ad::layer_norm(ad::glu(v[0]), v[1], v[2]), 10); });
}

TEST(Autodiff, GatherScatterConcatSlice) {
  Rng rng(5);
  std::vector<Parameter> ps{random_param("a", 3, 2, rng), random_param("b", 2, 2, rng), random_param("c", 4, 3, rng)};
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    Var g = ad::gather_rows(v[0], {2, 0, 2, 1});
    const std::vector<Var> src{v[0], v[1]};
    const std::vector<std::vector<int>> idx{{0, 3, 1}, {3, 2}};
    Var s = ad::scatter_rows(src, idx, 4, 2);
    Var c = ad::concat_cols(ad::add(g, s), ad::slice_cols(v[2], 1, 2));
    return project(t, c, 11);
  });
}

TEST(Autodiff, MaskedAndCausalAttention) {
  Rng rng(6);
  std::vector<Parameter> ps{random_param("q", 6, 4, rng), random_param("k", 6, 4, rng), random_param("v", 6, 4, rng)};
  AttentionLayout masked{3, 2, false, 0.0, {1, 0, 1, 1, 1, 0}};
  check_gradients(ps, [&](Tape& t, std::vector<Var>& v) { return project(t, ad::attention(v[0], v[1], v[2], masked), 12); });
  AttentionLayout causal{6, 1, true, 0.3, {}};
  check_gradients(ps, [&](Tape& t, std::vector<Var>& v) { return project(t, ad::attention(v[0], v[1], v[2], causal), 13); });
}

TEST(Autodiff, AttentionIgnoresInvalidKeys) {
  Rng rng(7);
  Tensor q(3, 2), k(3, 2), v(3, 2);
  for (auto* t : {&q, &k, &v})
    for (double& x : t->data) x = rng.normal(0, 1);
  AttentionLayout layout{3, 1, false, 0.0, {1, 0, 1}};
  Tape tape(false);
  const Tensor before = ad::attention(tape.constant(q), tape.constant(k), tape.constant(v), layout).value();
  for (int c = 0; c < 2; ++c) {
    k(1, c) += 10.0;
    v(1, c) -= 7.0;
  }
  const Tensor after = ad::attention(tape.constant(q), tape.constant(k), tape.constant(v), layout).value();
  for (std::size_t i = 0; i < before.data.size(); ++i) EXPECT_NEAR(before.data[i], after.data[i], 1e-14);
}

TEST(Autodiff, CrossEntropyLosses) {
  Rng rng(8);
  std::vector<Parameter> ps{random_param("z", 3, 4, rng), random_param("s", 6, 5, rng)};
  check_gradients(ps, [](Tape&, std::vector<Var>& v) {
    const std::vector<int> targets{1, 3, 0};
    const std::vector<int> seq_targets{1, 2, 4, 0, 3, 3};
    const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1};
    Var a = ad::weighted_sum(ad::cross_entropy_rows(v[0], targets), std::vector<double>{1.0, 0.5, 2.0});
    Var b = ad::sum(ad::sequence_cross_entropy(v[1], seq_targets, valid, 3));
    return ad::add(a, b);
  });
}

TEST(Autodiff, UniformLogitsGiveLogK) {
  Tape tape(false);
  const std::vector<int> target{2};
  EXPECT_NEAR(ad::cross_entropy_rows(tape.constant(Tensor(1, 4)), target).scalar(), std::log(4.0), 1e-15);
}

TEST(Autodiff, DropoutIsSeededAndScaled) {
  Tape tape(false);
  Var x = tape.constant(Tensor(1, 1000, 1.0));
  const Tensor a = ad::dropout(x, 0.25, 42).value();
  const Tensor b = ad::dropout(x, 0.25, 42).value();
  EXPECT_EQ(a.data, b.data);
  int kept = 0;
  for (double v : a.data) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
    kept += v != 0.0;
  }
  EXPECT_NEAR(kept / 1000.0, 0.75, 0.05);
}

TEST(Autodiff, NonRecordingTapeLeavesGradientsAlone) {
  Rng rng(9);
  Parameter p = random_param("p", 2, 2, rng);
  p.zero_grad();
  Tape tape(false);
  Var out = ad::sum(ad::mul(tape.param(p), tape.param(p)));
  EXPECT_GT(out.scalar(), 0.0);
  for (double g : p.grad.data) EXPECT_EQ(g, 0.0);
}

}  // namespace
}  // namespace strucdiff
