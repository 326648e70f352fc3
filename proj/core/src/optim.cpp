#include "strucdiff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace strucdiff {

void AdamW::step(std::map<std::string, Parameter>& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  for (auto& [name, p] : params) {
    if (!p.grad.same_shape(p.value)) continue;
    Moments& mom = state_[name];
    if (!mom.m.same_shape(p.value)) {
      mom.m = Tensor(p.value.rows, p.value.cols);
      mom.v = Tensor(p.value.rows, p.value.cols);
    }
    const double rate = lr * p.lr_scale;
    const double decay = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      double& m = mom.m.data[i];
      double& v = mom.v.data[i];
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
      const double update = (m / c1) / (std::sqrt(v / c2) + config_.eps);
      p.value.data[i] -= rate * (update + decay * p.value.data[i]);
    }
  }
}

double cosine_lr(double base, int step, int total, double floor_ratio) {
  if (total <= 0) return base;
  const double frac = std::clamp(static_cast<double>(step) / total, 0.0, 1.0);
  const double floor = base * floor_ratio;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_grad_norm(std::map<std::string, Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, p] : params)
    for (double g : p.grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, p] : params)
      for (double& g : p.grad.data) g *= s;
  }
  return norm;
}

void zero_grad(std::map<std::string, Parameter>& params) {
  for (auto& [_, p] : params) p.zero_grad();
}

}  // namespace strucdiff
