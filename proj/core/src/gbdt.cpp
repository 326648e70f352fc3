#include "strucdiff/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "strucdiff/rng.hpp"

namespace strucdiff {

namespace {

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void check_matrix(const std::vector<std::vector<double>>& x, std::size_t n) {
  if (x.empty() || x.size() != n) throw std::invalid_argument("gbdt: feature/target size mismatch");
  for (const auto& r : x)
    if (r.size() != x.front().size()) throw std::invalid_argument("gbdt: ragged feature matrix");
}

}  // namespace

GradientBoosting::Tree GradientBoosting::fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& target,
                                                  std::uint64_t seed) const {
  Rng rng(seed);
  const std::size_t n = x.size();
  const int features = static_cast<int>(x.front().size());
  std::vector<int> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (config_.row_subsample >= 1.0 || rng.uniform() < config_.row_subsample) rows.push_back(static_cast<int>(i));
  if (rows.empty()) rows.push_back(0);
  std::vector<int> cols;
  for (int f = 0; f < features; ++f)
    if (config_.feature_subsample >= 1.0 || rng.uniform() < config_.feature_subsample) cols.push_back(f);
  if (cols.empty()) cols.push_back(rng.index(features));

  Tree tree;
  // Depth-first growth; each work item is (node id, sample rows, depth).
  struct Item {
    int node;
    std::vector<int> rows;
    int depth;
  };
  tree.push_back(Node{});
  std::vector<Item> stack{{0, std::move(rows), 0}};
  while (!stack.empty()) {
    Item item = std::move(stack.back());
    stack.pop_back();
    double sum = 0.0;
    for (int r : item.rows) sum += target[static_cast<std::size_t>(r)];
    const double count = static_cast<double>(item.rows.size());
    tree[static_cast<std::size_t>(item.node)].value = sum / count;
    if (item.depth >= config_.depth || static_cast<int>(item.rows.size()) < 2 * config_.min_leaf) continue;

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<int> order = item.rows;
    for (int f : cols) {
      auto feat = [&](int r) { return x[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)]; };
      std::sort(order.begin(), order.end(), [&](int a, int b) { return feat(a) < feat(b); });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left += target[static_cast<std::size_t>(order[i])];
        const double nl = static_cast<double>(i + 1);
        const double nr = count - nl;
        if (nl < config_.min_leaf || nr < config_.min_leaf) continue;
        if (feat(order[i]) == feat(order[i + 1])) continue;
        const double right = sum - left;
        const double gain = left * left / nl + right * right / nr - sum * sum / count;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (feat(order[i]) + feat(order[i + 1]));
        }
      }
    }
    if (best_feature < 0) continue;
    std::vector<int> lrows, rrows;
    for (int r : item.rows)
      (x[static_cast<std::size_t>(r)][static_cast<std::size_t>(best_feature)] <= best_threshold ? lrows : rrows).push_back(r);
    const int l = static_cast<int>(tree.size());
    tree.push_back(Node{});
    tree.push_back(Node{});
    Node& node = tree[static_cast<std::size_t>(item.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = l + 1;
    stack.push_back({l + 1, std::move(rrows), item.depth + 1});
    stack.push_back({l, std::move(lrows), item.depth + 1});
  }
  return tree;
}

double GradientBoosting::eval_tree(const Tree& tree, const std::vector<double>& row) {
  int i = 0;
  while (tree[static_cast<std::size_t>(i)].feature >= 0) {
    const Node& n = tree[static_cast<std::size_t>(i)];
    i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(i)].value;
}

double GradientBoosting::ensemble(int k, const std::vector<double>& row) const {
  double s = base_[static_cast<std::size_t>(k)];
  for (const auto& t : trees_[static_cast<std::size_t>(k)]) s += config_.learning_rate * eval_tree(t, row);
  return s;
}

void GradientBoosting::fit_regression(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  check_matrix(x, y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  base_ = {mean};
  trees_.assign(1, {});
  std::vector<double> pred(y.size(), mean), resid(y.size());
  for (int round = 0; round < config_.rounds; ++round) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - pred[i];
    Tree t = fit_tree(x, resid, mix_seed(config_.seed * 1000003ULL + static_cast<std::uint64_t>(round)));
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += config_.learning_rate * eval_tree(t, x[i]);
    trees_[0].push_back(std::move(t));
  }
}

void GradientBoosting::fit_classification(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes) {
  check_matrix(x, y.size());
  if (classes < 2) throw std::invalid_argument("gbdt: need at least two classes");
  base_.assign(static_cast<std::size_t>(classes), 0.0);
  trees_.assign(static_cast<std::size_t>(classes), {});
  const double n = static_cast<double>(y.size());
  for (int k = 0; k < classes; ++k) {
    double pos = 0.0;
    for (int v : y) pos += v == k ? 1.0 : 0.0;
    const double p = std::clamp(pos / n, 1e-6, 1.0 - 1e-6);
    base_[static_cast<std::size_t>(k)] = std::log(p / (1.0 - p));
    std::vector<double> score(y.size(), base_[static_cast<std::size_t>(k)]), grad(y.size());
    for (int round = 0; round < config_.rounds; ++round) {
      for (std::size_t i = 0; i < y.size(); ++i) grad[i] = (y[i] == k ? 1.0 : 0.0) - logistic(score[i]);
      Tree t = fit_tree(x, grad, mix_seed((config_.seed * 1000003ULL + static_cast<std::uint64_t>(round)) * 131ULL + static_cast<std::uint64_t>(k)));
      for (std::size_t i = 0; i < y.size(); ++i) score[i] += config_.learning_rate * eval_tree(t, x[i]);
      trees_[static_cast<std::size_t>(k)].push_back(std::move(t));
    }
  }
}

double GradientBoosting::predict_value(const std::vector<double>& row) const {
  if (trees_.size() != 1) throw std::logic_error("gbdt: not a regression model");
  return ensemble(0, row);
}

int GradientBoosting::predict_class(const std::vector<double>& row) const {
  if (trees_.size() < 2) throw std::logic_error("gbdt: not a classification model");
  int best = 0;
  double top = ensemble(0, row);
  for (int k = 1; k < static_cast<int>(trees_.size()); ++k) {
    const double s = ensemble(k, row);
    if (s > top) {
      top = s;
      best = k;
    }
  }
  return best;
}

double r2_score(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.empty() || truth.size() != pred.size()) throw std::invalid_argument("r2_score: size mismatch");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    tot += (truth[i] - mean) * (truth[i] - mean);
  }
  return tot > 0.0 ? 1.0 - res / tot : (res == 0.0 ? 1.0 : 0.0);
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  if (truth.empty() || truth.size() != pred.size()) throw std::invalid_argument("macro_f1: size mismatch");
  double acc = 0.0;
  int used = 0;
  for (int k = 0; k < classes; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == k && pred[i] == k;
      fp += truth[i] != k && pred[i] == k;
      fn += truth[i] == k && pred[i] != k;
    }
    if (tp + fp + fn == 0) continue;
    acc += 2 * tp / (2 * tp + fp + fn);
    ++used;
  }
  return used ? acc / used : 0.0;
}

}  // namespace strucdiff
