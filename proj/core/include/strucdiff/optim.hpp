#pragma once

#include <map>
#include <string>

#include "strucdiff/autodiff.hpp"

namespace strucdiff {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Moment buffers are keyed by parameter
// name, so the update order never depends on container layout.
class AdamW {
 public:
  explicit AdamW(AdamConfig config = {}) : config_(config) {}

  // Applies one update with learning rate `lr` (times each parameter's
  // lr_scale) and leaves gradients untouched.
  void step(std::map<std::string, Parameter>& params, double lr);
  int steps_taken() const { return t_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  int t_ = 0;
};

// Cosine annealing from `base` at step 0 to `base * floor_ratio` at `total`.
double cosine_lr(double base, int step, int total, double floor_ratio = 0.0);

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::map<std::string, Parameter>& params, double max_norm);

void zero_grad(std::map<std::string, Parameter>& params);

}  // namespace strucdiff
