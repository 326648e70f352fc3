#include "strucdiff/numeric.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace strucdiff {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("gmm: non-finite ") + what);
}

}  // namespace

void GmmParams::validate() const {
  const std::size_t m = weights.size();
  if (m == 0 || means.size() != m || scales.size() != m) throw std::invalid_argument("gmm: inconsistent component counts");
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    if (!(weights[k] >= 0.0)) throw std::invalid_argument("gmm: negative weight");
    if (!(scales[k] > 0.0)) throw std::invalid_argument("gmm: non-positive scale");
    check_finite(means[k], "mean");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("gmm: weights do not sum to 1");
}

GmmParams gmm_from_raw(const GmmRaw& raw, double floor) {
  const std::size_t m = raw.logits.size();
  if (raw.means.size() != m || raw.scale_raw.size() != m || m == 0) throw std::invalid_argument("gmm: inconsistent raw head");
  GmmParams p;
  p.weights.resize(m);
  double top = raw.logits[0];
  for (double z : raw.logits) top = std::max(top, z);
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) total += p.weights[k] = std::exp(raw.logits[k] - top);
  for (double& w : p.weights) w /= total;
  p.means = raw.means;
  p.scales.resize(m);
  for (std::size_t k = 0; k < m; ++k) p.scales[k] = softplus(raw.scale_raw[k]) + floor;
  return p;
}

double gmm_nll(const GmmParams& params, double x) {
  check_finite(x, "target");
  const int m = params.size();
  std::vector<double> terms(static_cast<std::size_t>(m));
  double top = -INFINITY;
  for (int k = 0; k < m; ++k) {
    const double z = (x - params.means[k]) / params.scales[k];
    const double w = params.weights[k];
    terms[k] = (w > 0 ? std::log(w) : -INFINITY) - 0.5 * z * z - std::log(params.scales[k]) - kHalfLog2Pi;
    top = std::max(top, terms[k]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return -(top + std::log(acc));
}

double gmm_nll(const GmmRaw& raw, double x, GmmGrad* grad, double floor) {
  check_finite(x, "target");
  const std::size_t m = raw.logits.size();
  if (raw.means.size() != m || raw.scale_raw.size() != m || m == 0) throw std::invalid_argument("gmm: inconsistent raw head");
  double ltop = raw.logits[0];
  for (double z : raw.logits) {
    check_finite(z, "logit");
    ltop = std::max(ltop, z);
  }
  double lsum = 0.0;
  for (double z : raw.logits) lsum += std::exp(z - ltop);
  const double log_norm = ltop + std::log(lsum);

  // log of w_k N(x; mu_k, s_k), then the mixture log-density by log-sum-exp.
  std::vector<double> comp(m), sigma(m), zs(m);
  double top = -INFINITY;
  for (std::size_t k = 0; k < m; ++k) {
    check_finite(raw.means[k], "mean");
    check_finite(raw.scale_raw[k], "scale");
    sigma[k] = softplus(raw.scale_raw[k]) + floor;
    zs[k] = (x - raw.means[k]) / sigma[k];
    comp[k] = raw.logits[k] - log_norm - 0.5 * zs[k] * zs[k] - std::log(sigma[k]) - kHalfLog2Pi;
    top = std::max(top, comp[k]);
  }
  double acc = 0.0;
  for (double c : comp) acc += std::exp(c - top);
  const double log_density = top + std::log(acc);

  if (grad) {
    grad->logits.assign(m, 0.0);
    grad->means.assign(m, 0.0);
    grad->scale_raw.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double resp = std::exp(comp[k] - log_density);
      const double weight = std::exp(raw.logits[k] - log_norm);
      grad->logits[k] = weight - resp;
      grad->means[k] = -resp * zs[k] / sigma[k];
      const double dsigma = resp * (1.0 - zs[k] * zs[k]) / sigma[k];
      grad->scale_raw[k] = dsigma * logistic(raw.scale_raw[k]);
    }
  }
  return -log_density;
}

double gmm_sample(const GmmParams& params, Rng& rng) {
  const int k = params.size() == 1 ? 0 : rng.categorical(params.weights);
  return params.means[k] + params.scales[k] * rng.normal();
}

double gmm_point(const GmmParams& params) {
  double acc = 0.0;
  for (int k = 0; k < params.size(); ++k) acc += params.weights[k] * params.means[k];
  return acc;
}

double unit_gaussian_nll(double mean, double x, double* dmean) {
  const double diff = mean - x;
  if (dmean) *dmean = diff;
  return 0.5 * diff * diff + kHalfLog2Pi;
}

std::vector<double> embed_numeric(double x, const NumericEmbeddingConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(cfg.dim), 0.0);
  if (cfg.kind == NumericEmbeddingKind::periodic) {
    const std::size_t half = static_cast<std::size_t>(cfg.dim / 2);
    if (cfg.dim % 2 != 0 || cfg.frequencies.size() != half)
      throw std::invalid_argument("embed_numeric: periodic needs an even dim and dim/2 frequencies");
    for (std::size_t i = 0; i < half; ++i) {
      out[i] = std::sin(cfg.frequencies[i] * x);
      out[half + i] = std::cos(cfg.frequencies[i] * x);
    }
    return out;
  }
  if (cfg.dim < 2) throw std::invalid_argument("embed_numeric: dice needs dim >= 2");
  if (!(cfg.dice_max > cfg.dice_min)) throw std::invalid_argument("embed_numeric: empty dice range");
  const double angle = std::numbers::pi * (x - cfg.dice_min) / (cfg.dice_max - cfg.dice_min);
  const double c = std::cos(angle), s = std::sin(angle);
  // Orthonormal plane: even coordinates carry the cosine, odd ones the sine.
  const double ce = 1.0 / std::sqrt(static_cast<double>((cfg.dim + 1) / 2));
  const double so = 1.0 / std::sqrt(static_cast<double>(cfg.dim / 2));
  for (int i = 0; i < cfg.dim; ++i) out[static_cast<std::size_t>(i)] = i % 2 == 0 ? c * ce : s * so;
  return out;
}

GmmParams gmm_params_from_head(std::span<const double> row, int components, bool unit_scale) {
  const std::size_t m = static_cast<std::size_t>(components);
  if (unit_scale) {
    if (components != 1 || row.size() != 1) throw std::invalid_argument("gmm: unit-scale head must have one component");
    return GmmParams{{1.0}, {row[0]}, {1.0}};
  }
  if (row.size() != 3 * m) throw std::invalid_argument("gmm: head width does not match component count");
  GmmRaw raw{{row.begin(), row.begin() + m}, {row.begin() + m, row.begin() + 2 * m}, {row.begin() + 2 * m, row.end()}};
  return gmm_from_raw(raw);
}

namespace ad {

Var gmm_nll_rows(Var head, std::span<const double> targets, int components, bool unit_scale) {
  const Tensor& h = head.value();
  if (static_cast<std::size_t>(h.rows) != targets.size()) throw std::invalid_argument("gmm_nll_rows: target count mismatch");
  const std::size_t m = static_cast<std::size_t>(components);
  if (unit_scale ? (components != 1 || h.cols != 1) : h.cols != 3 * components)
    throw std::invalid_argument("gmm_nll_rows: head width does not match component count");
  Tensor out(h.rows, 1);
  Tensor dhead(h.rows, h.cols);
  for (int r = 0; r < h.rows; ++r) {
    auto row = h.row(r);
    auto drow = dhead.row(r);
    const double x = targets[static_cast<std::size_t>(r)];
    if (unit_scale) {
      out(r, 0) = unit_gaussian_nll(row[0], x, &drow[0]);
      continue;
    }
    GmmRaw raw{{row.begin(), row.begin() + m}, {row.begin() + m, row.begin() + 2 * m}, {row.begin() + 2 * m, row.end()}};
    GmmGrad g;
    out(r, 0) = gmm_nll(raw, x, &g);
    std::copy(g.logits.begin(), g.logits.end(), drow.begin());
    std::copy(g.means.begin(), g.means.end(), drow.begin() + m);
    std::copy(g.scale_raw.begin(), g.scale_raw.end(), drow.begin() + 2 * m);
  }
  const int o = static_cast<int>(head.tape->size());
  return head.tape->push(std::move(out), {head}, [head, o, dhead = std::move(dhead)](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& gh = t.grad(head.id);
    for (int r = 0; r < gh.rows; ++r) {
      const double gr = g.data[static_cast<std::size_t>(r)];
      for (int c = 0; c < gh.cols; ++c) gh(r, c) += gr * dhead(r, c);
    }
  });
}

}  // namespace ad
}  // namespace strucdiff
