#pragma once

#include <cstdint>
#include <vector>

namespace strucdiff {

struct GbdtConfig {
  int rounds = 200;
  int depth = 3;
  double learning_rate = 0.1;
  double row_subsample = 0.8;
  double feature_subsample = 0.8;
  int min_leaf = 5;
  std::uint64_t seed = 0;
};

// Gradient-boosted regression trees over a dense feature matrix (one row per
// sample). Regression uses squared loss; classification fits one logistic
// ensemble per class and predicts the highest score.
class GradientBoosting {
 public:
  explicit GradientBoosting(GbdtConfig config = {}) : config_(config) {}

  void fit_regression(const std::vector<std::vector<double>>& x, const std::vector<double>& y);
  void fit_classification(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes);

  double predict_value(const std::vector<double>& row) const;
  int predict_class(const std::vector<double>& row) const;

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  Tree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& target, std::uint64_t seed) const;
  static double eval_tree(const Tree& tree, const std::vector<double>& row);
  double ensemble(int k, const std::vector<double>& row) const;

  GbdtConfig config_;
  std::vector<double> base_;            // per ensemble
  std::vector<std::vector<Tree>> trees_;  // per ensemble
};

double r2_score(const std::vector<double>& truth, const std::vector<double>& pred);
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int classes);

}  // namespace strucdiff
