#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "strucdiff/tensor.hpp"

namespace strucdiff {

// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  double lr_scale = 1.0;
  bool decay = true;

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.rows, value.cols);
    grad.fill(0.0);
  }
};

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  double scalar() const { return value().data.at(0); }
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, so reverse creation order is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor t);
  Var param(Parameter& p);

  // Appends an op result. `parents` decide whether the node needs a gradient;
  // `fn` is dropped when nothing upstream requires one.
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var push(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  Tensor& grad(int id);

  // Seeds d(root)/d(root) = 1 and propagates into every reachable Parameter.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
  bool record_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// Describes grouped multi-head attention over a [groups*length x dim] input.
struct AttentionLayout {
  int group_size = 1;
  int heads = 1;
  bool causal = false;
  double scale = 0.0;  // 0 means 1/sqrt(head_dim)
  // One flag per row; rows with 0 are never used as keys. Empty = all valid.
  std::vector<std::uint8_t> key_valid;
};

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
Var mul_const(Var a, const Tensor& c);
// Row r of a scaled by column vector factor[r].
Var scale_rows(Var a, std::span<const double> factor);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sin(Var a);
Var cos(Var a);
Var softplus(Var a);
// [n x 2h] -> [n x h]: first half gated by sigmoid of the second half.
Var glu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gather_rows(Var a, std::vector<int> index);
// Sum of row scatters: out[index_k[i]] += src_k[i].
Var scatter_rows(std::span<const Var> sources, std::span<const std::vector<int>> indices, int rows, int cols);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, int begin, int count);
Var attention(Var q, Var k, Var v, const AttentionLayout& layout);
Var sum(Var a);
// Scalar sum_i weights[i] * a[i, 0] for a column vector a.
Var weighted_sum(Var a, std::span<const double> weights);
// Per-row categorical cross-entropy, [n x K] logits -> [n x 1].
Var cross_entropy_rows(Var logits, std::span<const int> targets);
// Per-row mean token cross-entropy. logits is [n*steps x V]; targets and valid
// are indexed the same way; result is [n x 1].
Var sequence_cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> valid, int steps);
Var dropout(Var a, double rate, std::uint64_t seed);

}  // namespace ad
}  // namespace strucdiff
