#include "strucdiff/diffusion.hpp"

#include <stdexcept>
#include <string>

#include "strucdiff/errors.hpp"

namespace strucdiff {

TransitionMatrix transition_matrix(double pi, int states) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("transition_matrix: pi outside [0,1]");
  if (states < 2) throw std::invalid_argument("transition_matrix: need at least 2 states");
  TransitionMatrix m{pi, Tensor(states, states)};
  m.entries(0, 0) = 1.0;
  for (int i = 1; i < states; ++i) {
    m.entries(i, 0) = pi;
    m.entries(i, i) = 1.0 - pi;
  }
  return m;
}

double loss_weight(int d_eff, int n_before, double pi) {
  if (d_eff < 1 || n_before < 0 || n_before >= d_eff)
    throw std::invalid_argument("loss_weight: need 0 <= n_before < d_eff");
  if (!(pi >= 0.0 && pi < 1.0)) throw std::invalid_argument("loss_weight: pi must lie in [0,1)");
  const double d = d_eff;
  return d * (1.0 - n_before / d) / ((1.0 - pi) * (n_before + 1));
}

int total_rate_proportion(int d_eff, int n_masked) {
  if (n_masked < 0 || n_masked > d_eff) throw std::invalid_argument("total_rate_proportion: n_masked outside [0, d_eff]");
  return d_eff - n_masked;
}

namespace {

std::vector<int> eligible_leaves(const EntityInstance& entity) {
  std::vector<int> out;
  for (std::size_t i = 0; i < entity.values.size(); ++i) {
    const Cell& c = entity.values[i];
    if (c.is_masked()) throw DataError("corrupt: leaf " + std::to_string(i) + " is already Masked");
    if (!c.is_missing()) out.push_back(static_cast<int>(i));
  }
  if (out.empty()) throw DataError("corrupt: entity has no non-Missing leaf");
  return out;
}

CorruptionSample finish(const EntityInstance& entity, std::vector<std::uint8_t> hit, const std::vector<int>& leaves, double pi) {
  CorruptionSample s;
  s.corrupted = entity;
  s.pi = pi;
  s.d_eff = static_cast<int>(leaves.size());
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (!hit[k]) continue;
    s.corrupted.values[static_cast<std::size_t>(leaves[k])] = Cell::masked();
    s.masked.push_back(leaves[k]);
  }
  return s;
}

}  // namespace

CorruptionSample corrupt(const EntityInstance& entity, double pi, Rng& rng) {
  if (!(pi >= 0.0 && pi < 1.0)) throw std::invalid_argument("corrupt: pi must lie in [0,1)");
  const std::vector<int> leaves = eligible_leaves(entity);
  const int d = static_cast<int>(leaves.size());
  std::vector<std::uint8_t> hit(leaves.size());
  int n = 0;
  do {
    n = 0;
    for (auto& h : hit) {
      h = rng.bernoulli(pi);
      n += h;
    }
  } while (n == d);

  int pick = rng.index(d - n);
  for (std::size_t k = 0; k < hit.size(); ++k) {
    if (hit[k]) continue;
    if (pick-- == 0) {
      hit[k] = 1;
      break;
    }
  }
  CorruptionSample s = finish(entity, std::move(hit), leaves, pi);
  s.n_before = n;
  s.weight = loss_weight(d, n, pi);
  return s;
}

CorruptionSample corrupt_fixed(const EntityInstance& entity, double rate, Rng& rng) {
  if (!(rate > 0.0 && rate < 1.0)) throw std::invalid_argument("corrupt_fixed: rate must lie in (0,1)");
  const std::vector<int> leaves = eligible_leaves(entity);
  const int d = static_cast<int>(leaves.size());
  std::vector<std::uint8_t> hit(leaves.size());
  int n = 0;
  do {
    n = 0;
    for (auto& h : hit) {
      h = rng.bernoulli(rate);
      n += h;
    }
  } while (n == 0 || (n == d && d > 1));
  CorruptionSample s = finish(entity, std::move(hit), leaves, rate);
  s.n_before = n - 1;
  s.weight = 1.0;
  return s;
}

}  // namespace strucdiff
