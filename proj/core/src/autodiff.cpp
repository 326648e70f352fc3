#include "strucdiff/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "strucdiff/rng.hpp"

namespace strucdiff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(Tensor& t) { return MapMat(t.data.data(), t.rows, t.cols); }
ConstMapMat as_mat(const Tensor& t) { return ConstMapMat(t.data.data(), t.rows, t.cols); }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <class F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

double stable_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::constant(Tensor t) {
  nodes_.push_back(Node{std::move(t), {}, false, {}, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = record_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::push(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (nodes_[static_cast<std::size_t>(p.id)].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Var root) {
  require(root.tape == this, "backward: foreign variable");
  require(value(root.id).size() == 1, "backward: root must be a scalar");
  if (!needs_grad(root.id)) return;
  grad(root.id).data[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || !n.grad.same_shape(n.value)) continue;
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows, p.value.cols);
      add_into(p.grad, n.grad);
    } else if (n.backward) {
      n.backward(*this);
    }
  }
}

namespace ad {

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols == B.rows, "matmul: inner dimension mismatch");
  Tensor out(A.rows, B.cols);
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a, b}, [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.needs_grad(a.id)) as_mat(t.grad(a.id)).noalias() += as_mat(g) * as_mat(t.value(b.id)).transpose();
    if (t.needs_grad(b.id)) as_mat(t.grad(b.id)).noalias() += as_mat(t.value(a.id)).transpose() * as_mat(g);
  });
}

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor out = a.value();
  add_into(out, b.value());
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a, b}, [a, b, o](Tape& t) {
    if (t.needs_grad(a.id)) add_into(t.grad(a.id), t.grad(o));
    if (t.needs_grad(b.id)) add_into(t.grad(b.id), t.grad(o));
  });
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor out = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a, b}, [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.needs_grad(a.id)) add_into(t.grad(a.id), g);
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad(b.id);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  require(a.value().same_shape(b.value()), "mul: shape mismatch");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * B.data[i];
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a, b}, [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad(a.id);
      const Tensor& vb = t.value(b.id);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad(b.id);
      const Tensor& va = t.value(a.id);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double x) { return x * s; });
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, s, o](Tape& t) {
    Tensor& ga = t.grad(a.id);
    const Tensor& g = t.grad(o);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  require(b.rows == 1 && b.cols == A.cols, "add_bias: bias must be 1 x cols");
  Tensor out = A;
  for (int r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    for (int c = 0; c < out.cols; ++c) row[static_cast<std::size_t>(c)] += b.data[static_cast<std::size_t>(c)];
  }
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a, bias}, [a, bias, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.needs_grad(a.id)) add_into(t.grad(a.id), g);
    if (t.needs_grad(bias.id)) {
      Tensor& gb = t.grad(bias.id);
      for (int r = 0; r < g.rows; ++r) {
        auto row = g.row(r);
        for (int c = 0; c < g.cols; ++c) gb.data[static_cast<std::size_t>(c)] += row[static_cast<std::size_t>(c)];
      }
    }
  });
}

Var mul_const(Var a, const Tensor& c) {
  require(a.value().same_shape(c), "mul_const: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= c.data[i];
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, c, o](Tape& t) {
    Tensor& ga = t.grad(a.id);
    const Tensor& g = t.grad(o);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * c.data[i];
  });
}

Var scale_rows(Var a, std::span<const double> factor) {
  const Tensor& A = a.value();
  require(static_cast<int>(factor.size()) == A.rows, "scale_rows: factor length mismatch");
  std::vector<double> f(factor.begin(), factor.end());
  Tensor out = A;
  for (int r = 0; r < out.rows; ++r)
    for (double& x : out.row(r)) x *= f[static_cast<std::size_t>(r)];
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, f = std::move(f), o](Tape& t) {
    Tensor& ga = t.grad(a.id);
    const Tensor& g = t.grad(o);
    for (int r = 0; r < g.rows; ++r) {
      auto gr = g.row(r);
      auto dst = ga.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c] * f[static_cast<std::size_t>(r)];
    }
  });
}

namespace {

// Elementwise op where the derivative is a function of input and output.
template <class F, class D>
Var unary(Var a, F f, D dfdx) {
  Tensor out = map_values(a.value(), f);
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, o, dfdx](Tape& t) {
    Tensor& ga = t.grad(a.id);
    const Tensor& g = t.grad(o);
    const Tensor& x = t.value(a.id);
    const Tensor& y = t.value(o);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * dfdx(x.data[i], y.data[i]);
  });
}

}  // namespace

Var sigmoid(Var a) {
  return unary(a, logistic, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var softplus(Var a) {
  return unary(a, stable_softplus, [](double x, double) { return logistic(x); });
}

Var glu(Var a) {
  const Tensor& A = a.value();
  require(A.cols % 2 == 0, "glu: column count must be even");
  const int h = A.cols / 2;
  Tensor out(A.rows, h);
  for (int r = 0; r < A.rows; ++r) {
    for (int c = 0; c < h; ++c) out(r, c) = A(r, c) * logistic(A(r, c + h));
  }
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, o, h](Tape& t) {
    const Tensor& x = t.value(a.id);
    const Tensor& g = t.grad(o);
    Tensor& ga = t.grad(a.id);
    for (int r = 0; r < x.rows; ++r) {
      for (int c = 0; c < h; ++c) {
        const double s = logistic(x(r, c + h));
        ga(r, c) += g(r, c) * s;
        ga(r, c + h) += g(r, c) * x(r, c) * s * (1.0 - s);
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  const int n = X.rows;
  const int d = X.cols;
  require(gain.value().cols == d && bias.value().cols == d, "layer_norm: parameter width mismatch");
  Tensor normed(n, d);
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    auto row = X.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < d; ++c) normed(r, c) = (row[static_cast<std::size_t>(c)] - mean) * is;
  }
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor out(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) out(r, c) = normed(r, c) * G.data[static_cast<std::size_t>(c)] + B.data[static_cast<std::size_t>(c)];
  const int o = x.tape->size();
  return x.tape->push(std::move(out), {x, gain, bias},
                      [x, gain, bias, o, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t) {
                        const Tensor& g = t.grad(o);
                        const int n = g.rows;
                        const int d = g.cols;
                        if (t.needs_grad(gain.id) || t.needs_grad(bias.id)) {
                          Tensor& gg = t.grad(gain.id);
                          Tensor& gb = t.grad(bias.id);
                          for (int r = 0; r < n; ++r) {
                            for (int c = 0; c < d; ++c) {
                              gg.data[static_cast<std::size_t>(c)] += g(r, c) * normed(r, c);
                              gb.data[static_cast<std::size_t>(c)] += g(r, c);
                            }
                          }
                        }
                        if (!t.needs_grad(x.id)) return;
                        const Tensor& G = t.value(gain.id);
                        Tensor& gx = t.grad(x.id);
                        std::vector<double> gn(static_cast<std::size_t>(d));
                        for (int r = 0; r < n; ++r) {
                          double mean_gn = 0.0;
                          double mean_gn_x = 0.0;
                          for (int c = 0; c < d; ++c) {
                            gn[static_cast<std::size_t>(c)] = g(r, c) * G.data[static_cast<std::size_t>(c)];
                            mean_gn += gn[static_cast<std::size_t>(c)];
                            mean_gn_x += gn[static_cast<std::size_t>(c)] * normed(r, c);
                          }
                          mean_gn /= d;
                          mean_gn_x /= d;
                          const double is = inv_std[static_cast<std::size_t>(r)];
                          for (int c = 0; c < d; ++c)
                            gx(r, c) += is * (gn[static_cast<std::size_t>(c)] - mean_gn - normed(r, c) * mean_gn_x);
                        }
                      });
}

Var gather_rows(Var a, std::vector<int> index) {
  const Tensor& A = a.value();
  Tensor out(static_cast<int>(index.size()), A.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < A.rows, "gather_rows: index out of range");
    auto src = A.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, o, index = std::move(index)](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& ga = t.grad(a.id);
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto src = g.row(static_cast<int>(i));
      auto dst = ga.row(index[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var scatter_rows(std::span<const Var> sources, std::span<const std::vector<int>> indices, int rows, int cols) {
  require(sources.size() == indices.size(), "scatter_rows: sources/indices mismatch");
  require(!sources.empty(), "scatter_rows: no sources");
  Tensor out(rows, cols);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const Tensor& src = sources[s].value();
    require(src.cols == cols && src.rows == static_cast<int>(indices[s].size()), "scatter_rows: shape mismatch");
    for (std::size_t i = 0; i < indices[s].size(); ++i) {
      const int r = indices[s][i];
      require(r >= 0 && r < rows, "scatter_rows: index out of range");
      auto in = src.row(static_cast<int>(i));
      auto dst = out.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) dst[c] += in[c];
    }
  }
  std::vector<Var> srcs(sources.begin(), sources.end());
  std::vector<std::vector<int>> idx(indices.begin(), indices.end());
  Tape* tape = sources.front().tape;
  const int o = tape->size();
  return tape->push(std::move(out), std::span<const Var>(srcs), [srcs, idx = std::move(idx), o](Tape& t) {
    const Tensor& g = t.grad(o);
    for (std::size_t s = 0; s < srcs.size(); ++s) {
      if (!t.needs_grad(srcs[s].id)) continue;
      Tensor& gs = t.grad(srcs[s].id);
      for (std::size_t i = 0; i < idx[s].size(); ++i) {
        auto src = g.row(idx[s][i]);
        auto dst = gs.row(static_cast<int>(i));
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    }
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows == B.rows, "concat_cols: row mismatch");
  Tensor out(A.rows, A.cols + B.cols);
  for (int r = 0; r < A.rows; ++r) {
    auto dst = out.row(r);
    std::copy(A.row(r).begin(), A.row(r).end(), dst.begin());
    std::copy(B.row(r).begin(), B.row(r).end(), dst.begin() + A.cols);
  }
  const int o = a.tape->size();
  const int ac = A.cols;
  return a.tape->push(std::move(out), {a, b}, [a, b, o, ac](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad(a.id);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < ga.cols; ++c) ga(r, c) += g(r, c);
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad(b.id);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < gb.cols; ++c) gb(r, c) += g(r, c + ac);
    }
  });
}

Var slice_cols(Var a, int begin, int count) {
  const Tensor& A = a.value();
  require(begin >= 0 && count >= 0 && begin + count <= A.cols, "slice_cols: range out of bounds");
  Tensor out(A.rows, count);
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < count; ++c) out(r, c) = A(r, begin + c);
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, o, begin](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& ga = t.grad(a.id);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) ga(r, begin + c) += g(r, c);
  });
}

Var attention(Var q, Var k, Var v, const AttentionLayout& layout) {
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require(Q.same_shape(K) && Q.same_shape(V), "attention: q/k/v shape mismatch");
  const int n = Q.rows;
  const int d = Q.cols;
  const int L = layout.group_size;
  const int H = layout.heads;
  require(L > 0 && n % L == 0, "attention: rows must be a multiple of group_size");
  require(H > 0 && d % H == 0, "attention: width must be divisible by heads");
  require(layout.key_valid.empty() || static_cast<int>(layout.key_valid.size()) == n, "attention: key_valid size");
  const int dh = d / H;
  const double sc = layout.scale > 0.0 ? layout.scale : 1.0 / std::sqrt(static_cast<double>(dh));
  const int groups = n / L;
  auto valid = [&layout](int row) { return layout.key_valid.empty() || layout.key_valid[static_cast<std::size_t>(row)] != 0; };

  // probs[((g*H + h)*L + i)*L + j]
  std::vector<double> probs(static_cast<std::size_t>(groups) * H * L * L, 0.0);
  Tensor out(n, d);
  std::vector<double> scores(static_cast<std::size_t>(L));
  for (int g = 0; g < groups; ++g) {
    const int base = g * L;
    for (int h = 0; h < H; ++h) {
      const int off = h * dh;
      for (int i = 0; i < L; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        const int jmax = layout.causal ? i : L - 1;
        for (int j = 0; j <= jmax; ++j) {
          if (!valid(base + j)) continue;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += Q(base + i, off + c) * K(base + j, off + c);
          s *= sc;
          scores[static_cast<std::size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;  // no attendable key
        double* p = &probs[((static_cast<std::size_t>(g) * H + h) * L + i) * L];
        double z = 0.0;
        for (int j = 0; j <= jmax; ++j) {
          if (!valid(base + j)) continue;
          p[j] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
          z += p[j];
        }
        for (int j = 0; j <= jmax; ++j) p[j] /= z;
        for (int j = 0; j <= jmax; ++j) {
          if (p[j] == 0.0) continue;
          for (int c = 0; c < dh; ++c) out(base + i, off + c) += p[j] * V(base + j, off + c);
        }
      }
    }
  }
  const int o = q.tape->size();
  return q.tape->push(std::move(out), {q, k, v}, [q, k, v, o, L, H, dh, sc, groups, probs = std::move(probs)](Tape& t) {
    const Tensor& G = t.grad(o);
    const Tensor& Q = t.value(q.id);
    const Tensor& K = t.value(k.id);
    const Tensor& V = t.value(v.id);
    Tensor& gq = t.grad(q.id);
    Tensor& gk = t.grad(k.id);
    Tensor& gv = t.grad(v.id);
    std::vector<double> dp(static_cast<std::size_t>(L));
    for (int g = 0; g < groups; ++g) {
      const int base = g * L;
      for (int h = 0; h < H; ++h) {
        const int off = h * dh;
        for (int i = 0; i < L; ++i) {
          const double* p = &probs[((static_cast<std::size_t>(g) * H + h) * L + i) * L];
          double dot = 0.0;
          for (int j = 0; j < L; ++j) {
            if (p[j] == 0.0) {
              dp[static_cast<std::size_t>(j)] = 0.0;
              continue;
            }
            double s = 0.0;
            for (int c = 0; c < dh; ++c) {
              s += G(base + i, off + c) * V(base + j, off + c);
              gv(base + j, off + c) += p[j] * G(base + i, off + c);
            }
            dp[static_cast<std::size_t>(j)] = s;
            dot += p[j] * s;
          }
          for (int j = 0; j < L; ++j) {
            if (p[j] == 0.0) continue;
            const double ds = p[j] * (dp[static_cast<std::size_t>(j)] - dot) * sc;
            for (int c = 0; c < dh; ++c) {
              gq(base + i, off + c) += ds * K(base + j, off + c);
              gk(base + j, off + c) += ds * Q(base + i, off + c);
            }
          }
        }
      }
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data) s += x;
  Tensor out(1, 1, s);
  const int o = a.tape->size();
  return a.tape->push(std::move(out), {a}, [a, o](Tape& t) {
    const double g = t.grad(o).data[0];
    for (double& x : t.grad(a.id).data) x += g;
  });
}

Var weighted_sum(Var a, std::span<const double> weights) {
  const Tensor& A = a.value();
  require(A.cols == 1 && static_cast<int>(weights.size()) == A.rows, "weighted_sum: expects column vector");
  std::vector<double> w(weights.begin(), weights.end());
  double s = 0.0;
  for (int r = 0; r < A.rows; ++r) s += w[static_cast<std::size_t>(r)] * A.data[static_cast<std::size_t>(r)];
  const int o = a.tape->size();
  return a.tape->push(Tensor(1, 1, s), {a}, [a, o, w = std::move(w)](Tape& t) {
    const double g = t.grad(o).data[0];
    Tensor& ga = t.grad(a.id);
    for (std::size_t r = 0; r < w.size(); ++r) ga.data[r] += g * w[r];
  });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Tensor& X = logits.value();
  require(static_cast<int>(targets.size()) == X.rows, "cross_entropy_rows: target count mismatch");
  Tensor out(X.rows, 1);
  Tensor softmax(X.rows, X.cols);
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int r = 0; r < X.rows; ++r) {
    require(tgt[static_cast<std::size_t>(r)] >= 0 && tgt[static_cast<std::size_t>(r)] < X.cols, "cross_entropy_rows: target out of range");
    auto row = X.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (int c = 0; c < X.cols; ++c) {
      softmax(r, c) = std::exp(row[static_cast<std::size_t>(c)] - mx);
      z += softmax(r, c);
    }
    for (int c = 0; c < X.cols; ++c) softmax(r, c) /= z;
    out(r, 0) = -(row[static_cast<std::size_t>(tgt[static_cast<std::size_t>(r)])] - mx - std::log(z));
  }
  const int o = logits.tape->size();
  return logits.tape->push(std::move(out), {logits}, [logits, o, tgt = std::move(tgt), softmax = std::move(softmax)](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& gl = t.grad(logits.id);
    for (int r = 0; r < gl.rows; ++r) {
      const double gr = g.data[static_cast<std::size_t>(r)];
      for (int c = 0; c < gl.cols; ++c) gl(r, c) += gr * softmax(r, c);
      gl(r, tgt[static_cast<std::size_t>(r)]) -= gr;
    }
  });
}

Var sequence_cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> valid, int steps) {
  const Tensor& X = logits.value();
  require(steps > 0 && X.rows % steps == 0, "sequence_cross_entropy: rows must be a multiple of steps");
  require(static_cast<int>(targets.size()) == X.rows && valid.size() == targets.size(),
          "sequence_cross_entropy: target/valid size mismatch");
  const int n = X.rows / steps;
  Tensor out(n, 1);
  Tensor softmax(X.rows, X.cols);
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> row_weight(static_cast<std::size_t>(X.rows), 0.0);
  for (int s = 0; s < n; ++s) {
    int count = 0;
    for (int i = 0; i < steps; ++i) count += valid[static_cast<std::size_t>(s * steps + i)] ? 1 : 0;
    require(count > 0, "sequence_cross_entropy: sequence without valid targets");
    double total = 0.0;
    for (int i = 0; i < steps; ++i) {
      const int r = s * steps + i;
      if (!valid[static_cast<std::size_t>(r)]) continue;
      auto row = X.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (int c = 0; c < X.cols; ++c) {
        softmax(r, c) = std::exp(row[static_cast<std::size_t>(c)] - mx);
        z += softmax(r, c);
      }
      for (int c = 0; c < X.cols; ++c) softmax(r, c) /= z;
      total += -(row[static_cast<std::size_t>(tgt[static_cast<std::size_t>(r)])] - mx - std::log(z));
      row_weight[static_cast<std::size_t>(r)] = 1.0 / count;
    }
    out(s, 0) = total / count;
  }
  const int o = logits.tape->size();
  return logits.tape->push(std::move(out), {logits},
                           [logits, o, steps, tgt = std::move(tgt), softmax = std::move(softmax),
                            row_weight = std::move(row_weight)](Tape& t) {
                             const Tensor& g = t.grad(o);
                             Tensor& gl = t.grad(logits.id);
                             for (int r = 0; r < gl.rows; ++r) {
                               const double w = row_weight[static_cast<std::size_t>(r)];
                               if (w == 0.0) continue;
                               const double gr = g.data[static_cast<std::size_t>(r / steps)] * w;
                               for (int c = 0; c < gl.cols; ++c) gl(r, c) += gr * softmax(r, c);
                               gl(r, tgt[static_cast<std::size_t>(r)]) -= gr;
                             }
                           });
}

Var dropout(Var a, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return a;
  require(rate < 1.0, "dropout: rate must be < 1");
  Rng rng(seed);
  Tensor mask(a.rows(), a.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.data) m = rng.uniform() < rate ? 0.0 : keep;
  return mul_const(a, mask);
}

}  // namespace ad
}  // namespace strucdiff
