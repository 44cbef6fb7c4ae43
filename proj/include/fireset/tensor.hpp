#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fireset/errors.hpp"

namespace fireset {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

enum class Op {
  leaf,
  add,
  sub,
  mul,
  matmul,
  concat,
  gather,
  sum,
  mean,
  relu,
  sigmoid,
  inverse_sigmoid,
  softmax,
  log_softmax,
  layer_norm,
  abs,
  scale,
  reshape,  // structural; not dispatchable through kernel_set
};

// One recorded op in the autodiff graph. Values are immutable after the
// forward pass; parameter leaves keep their grad buffers across backward
// calls so gradient accumulation works.
template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;
  bool requires_grad = false;
  Op op = Op::leaf;
  std::string name;  // non-empty for named parameter leaves
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  bool is_leaf() const { return op == Op::leaf; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<S> value) {
    return Tensor(make(std::move(shape), std::move(value), false, ""));
  }

  static Tensor variable(Shape shape, std::vector<S> value, std::string name = "") {
    return Tensor(make(std::move(shape), std::move(value), true, std::move(name)));
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    return Tensor(make(Shape{}, std::vector<S>{v}, requires_grad, ""));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(make(std::move(shape), std::vector<S>(n, S(0)), requires_grad, ""));
  }

  static Tensor full(Shape shape, S v) {
    std::size_t n = numel(shape);
    return Tensor(make(std::move(shape), std::vector<S>(n, v), false, ""));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  bool requires_grad() const { return n_->requires_grad; }
  const std::string& name() const { return n_->name; }
  Op op() const { return n_->op; }

  const std::vector<S>& values() const { return n_->value; }
  // In-place mutation is only meaningful on leaves (optimizer updates);
  // graphs built from the old values must be considered stale afterwards.
  std::vector<S>& values_mut() { return n_->value; }

  const std::vector<S>& grad() const { return n_->grad; }
  std::vector<S>& grad_mut() {
    n_->ensure_grad();
    return n_->grad;
  }

  void zero_grad() { n_->grad.assign(n_->value.size(), S(0)); }

  S item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    return n_->value[0];
  }

  S at(std::size_t i) const { return n_->value.at(i); }

  std::shared_ptr<Node<S>> node() const { return n_; }

  explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

 private:
  static std::shared_ptr<Node<S>> make(Shape shape, std::vector<S> value, bool rg,
                                       std::string name) {
    if (numel(shape) != value.size())
      throw ShapeError("tensor data length " + std::to_string(value.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = rg;
    n->name = std::move(name);
    if (rg) n->ensure_grad();
    return n;
  }

  std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <typename S>
Tensor<S> make_op(Shape shape, std::vector<S> value, Op op,
                  std::vector<std::shared_ptr<Node<S>>> inputs,
                  std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Tensor<S>(n);
}

// rhs matches lhs exactly or is a trailing suffix of it (leading-batch expansion).
inline bool suffix_broadcastable(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <typename S>
void check_finite_all(const std::vector<S>& v, const char* what) {
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x))) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary kernels (add, sub, mul) with leading-batch expansion.
// ---------------------------------------------------------------------------

namespace detail {

template <typename S, typename Fwd, typename Bwd>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, Op op, Fwd fwd, Bwd bwd,
                    const char* opname) {
  if (!suffix_broadcastable(a.shape(), b.shape()))
    throw ShapeError(std::string(opname) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not conform");
  const std::size_t n = a.size(), bn = b.size();
  std::vector<S> out(n);
  const S* pa = a.values().data();
  const S* pb = b.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i % bn]);
  return make_op<S>(
      a.shape(), std::move(out), op, {a.node(), b.node()},
      [bwd](Node<S>& self) {
        Node<S>& A = *self.inputs[0];
        Node<S>& B = *self.inputs[1];
        const std::size_t n = self.value.size(), bn = B.value.size();
        if (A.requires_grad) {
          A.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            A.grad[i] += bwd(self.grad[i], A.value[i], B.value[i % bn], true);
        }
        if (B.requires_grad) {
          B.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            B.grad[i % bn] += bwd(self.grad[i], A.value[i], B.value[i % bn], false);
        }
      });
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, Op::add, [](S x, S y) { return x + y; },
      [](S g, S, S, bool) { return g; }, "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, Op::sub, [](S x, S y) { return x - y; },
      [](S g, S, S, bool lhs) { return lhs ? g : -g; }, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, Op::mul, [](S x, S y) { return x * y; },
      [](S g, S x, S y, bool lhs) { return lhs ? g * y : g * x; }, "mul");
}

// ---------------------------------------------------------------------------
// matmul: (n,k) x (k,m) -> (n,m)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeError("matmul: expects rank-2 operands");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner extents " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<S> out(n * m, S(0));
  {
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    S* po = out.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < k; ++l) {
        const S av = pa[i * k + l];
        const S* prow = pb + l * m;
        S* orow = po + i * m;
        for (std::size_t j = 0; j < m; ++j) orow[j] += av * prow[j];
      }
  }
  return detail::make_op<S>(
      Shape{n, m}, std::move(out), Op::matmul, {a.node(), b.node()},
      [n, k, m](Node<S>& self) {
        Node<S>& A = *self.inputs[0];
        Node<S>& B = *self.inputs[1];
        const S* g = self.grad.data();
        if (A.requires_grad) {
          A.ensure_grad();
          // dA[i,l] = sum_j g[i,j] * B[l,j]
          const S* pb = B.value.data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              S acc = 0;
              const S* grow = g + i * m;
              const S* brow = pb + l * m;
              for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
              A.grad[i * k + l] += acc;
            }
        }
        if (B.requires_grad) {
          B.ensure_grad();
          // dB[l,j] = sum_i A[i,l] * g[i,j]
          const S* pa = A.value.data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              const S av = pa[i * k + l];
              const S* grow = g + i * m;
              S* brow = B.grad.data() + l * m;
              for (std::size_t j = 0; j < m; ++j) brow[j] += av * grow[j];
            }
        }
      });
}

// ---------------------------------------------------------------------------
// concat along an axis
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = s0;
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d]) throw ShapeError("concat: extent mismatch");
    total_axis += s[axis];
  }
  out_shape[axis] = total_axis;

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<S> out(numel(out_shape));
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) chunk[p] = parts[p].shape()[axis] * inner;
  const std::size_t row = total_axis * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const S* src = parts[p].values().data() + o * chunk[p];
      std::copy(src, src + chunk[p], out.data() + off);
      off += chunk[p];
    }
  }

  std::vector<std::shared_ptr<Node<S>>> ins;
  for (const auto& p : parts) ins.push_back(p.node());
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), Op::concat, std::move(ins),
      [outer, row, chunk](Node<S>& self) {
        std::size_t base = 0;
        for (std::size_t p = 0; p < self.inputs.size(); ++p) {
          Node<S>& in = *self.inputs[p];
          if (in.requires_grad) {
            in.ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
              const S* g = self.grad.data() + o * row + base;
              S* dst = in.grad.data() + o * chunk[p];
              for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += g[i];
            }
          }
          base += chunk[p];
        }
      });
}

// ---------------------------------------------------------------------------
// gather: arbitrary data movement by flat element index; backward scatter-adds
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> gather(const Tensor<S>& a, std::vector<std::size_t> indices, Shape out_shape) {
  if (numel(out_shape) != indices.size())
    throw ShapeError("gather: index count does not match output shape");
  const std::size_t n = a.size();
  std::vector<S> out(indices.size());
  const S* pa = a.values().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw ShapeError("gather: index out of range");
    out[i] = pa[indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), Op::gather, {a.node()},
      [idx](Node<S>& self) {
        Node<S>& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        const auto& ix = *idx;
        for (std::size_t i = 0; i < ix.size(); ++i) A.grad[ix[i]] += self.grad[i];
      });
}

// Row gather on axis 0 of a rank-2 tensor.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, const std::vector<std::size_t>& rows) {
  if (a.shape().size() != 2) throw ShapeError("gather_rows: expects rank-2 input");
  const std::size_t d = a.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * d);
  for (std::size_t r : rows) {
    if (r >= a.dim(0)) throw ShapeError("gather_rows: row out of range");
    for (std::size_t j = 0; j < d; ++j) idx.push_back(r * d + j);
  }
  return gather(a, std::move(idx), Shape{rows.size(), d});
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& a) {
  if (a.shape().size() != 2) throw ShapeError("transpose2d: expects rank-2 input");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<std::size_t> idx(n * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i) idx[j * n + i] = i * m + j;
  return gather(a, std::move(idx), Shape{m, n});
}

// Columns [c0, c1) of a rank-2 tensor.
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, std::size_t c0, std::size_t c1) {
  if (a.shape().size() != 2) throw ShapeError("slice_cols: expects rank-2 input");
  const std::size_t n = a.dim(0), m = a.dim(1);
  if (c0 >= c1 || c1 > m) throw ShapeError("slice_cols: bad column range");
  std::vector<std::size_t> idx;
  idx.reserve(n * (c1 - c0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = c0; j < c1; ++j) idx.push_back(i * m + j);
  return gather(a, std::move(idx), Shape{n, c1 - c0});
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = 0;
  for (S v : a.values()) acc += v;
  return detail::make_op<S>(Shape{}, std::vector<S>{acc}, Op::sum, {a.node()},
                            [](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              const S g = self.grad[0];
                              for (auto& x : A.grad) x += g;
                            });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  S acc = 0;
  for (S v : a.values()) acc += v;
  const S inv = S(1) / static_cast<S>(a.size());
  return detail::make_op<S>(Shape{}, std::vector<S>{acc * inv}, Op::mean, {a.node()},
                            [inv](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              const S g = self.grad[0] * inv;
                              for (auto& x : A.grad) x += g;
                            });
}

// ---------------------------------------------------------------------------
// elementwise unary kernels
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] > S(0) ? a.values()[i] : S(0);
  return detail::make_op<S>(a.shape(), std::move(out), Op::relu, {a.node()},
                            [](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i)
                                if (A.value[i] > S(0)) A.grad[i] += self.grad[i];
                            });
}

template <typename S>
inline S sigmoid_scalar(S x) {
  if (x >= S(0)) {
    const S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid_scalar(a.values()[i]);
  return detail::make_op<S>(a.shape(), std::move(out), Op::sigmoid, {a.node()},
                            [](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i) {
                                const S y = self.value[i];
                                A.grad[i] += self.grad[i] * y * (S(1) - y);
                              }
                            });
}

inline constexpr double kInverseSigmoidEps = 1e-6;

// logit with inputs clamped to [eps, 1 - eps]; clamped region has zero gradient.
template <typename S>
Tensor<S> inverse_sigmoid(const Tensor<S>& a) {
  const S eps = static_cast<S>(kInverseSigmoidEps);
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    S x = std::clamp(a.values()[i], eps, S(1) - eps);
    out[i] = std::log(x / (S(1) - x));
  }
  return detail::make_op<S>(a.shape(), std::move(out), Op::inverse_sigmoid, {a.node()},
                            [eps](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i) {
                                const S x = A.value[i];
                                if (x > eps && x < S(1) - eps)
                                  A.grad[i] += self.grad[i] / (x * (S(1) - x));
                              }
                            });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a.values()[i]);
  return detail::make_op<S>(a.shape(), std::move(out), Op::abs, {a.node()},
                            [](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i) {
                                const S x = A.value[i];
                                if (x > S(0)) A.grad[i] += self.grad[i];
                                else if (x < S(0)) A.grad[i] -= self.grad[i];
                              }
                            });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * c;
  return detail::make_op<S>(a.shape(), std::move(out), Op::scale, {a.node()},
                            [c](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i)
                                A.grad[i] += self.grad[i] * c;
                            });
}

// ---------------------------------------------------------------------------
// line kernels: softmax / log_softmax along an axis, layer_norm over last axis
// ---------------------------------------------------------------------------

namespace detail {

struct LineIter {
  std::size_t outer, len, inner;
};

inline LineIter line_iter(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  LineIter it{1, s[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) it.outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) it.inner *= s[d];
  return it;
}

}  // namespace detail

template <typename S>
Tensor<S> softmax(const Tensor<S>& a, std::size_t axis) {
  const auto it = detail::line_iter(a.shape(), axis);
  std::vector<S> out(a.size());
  const S* pa = a.values().data();
  for (std::size_t o = 0; o < it.outer; ++o)
    for (std::size_t in = 0; in < it.inner; ++in) {
      const std::size_t base = o * it.len * it.inner + in;
      S mx = pa[base];
      for (std::size_t l = 1; l < it.len; ++l) mx = std::max(mx, pa[base + l * it.inner]);
      S z = 0;
      for (std::size_t l = 0; l < it.len; ++l) {
        const S e = std::exp(pa[base + l * it.inner] - mx);
        out[base + l * it.inner] = e;
        z += e;
      }
      const S inv = S(1) / z;
      for (std::size_t l = 0; l < it.len; ++l) out[base + l * it.inner] *= inv;
    }
  return detail::make_op<S>(a.shape(), std::move(out), Op::softmax, {a.node()},
                            [it](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              const S* y = self.value.data();
                              const S* g = self.grad.data();
                              for (std::size_t o = 0; o < it.outer; ++o)
                                for (std::size_t in = 0; in < it.inner; ++in) {
                                  const std::size_t base = o * it.len * it.inner + in;
                                  S dot = 0;
                                  for (std::size_t l = 0; l < it.len; ++l) {
                                    const std::size_t k = base + l * it.inner;
                                    dot += g[k] * y[k];
                                  }
                                  for (std::size_t l = 0; l < it.len; ++l) {
                                    const std::size_t k = base + l * it.inner;
                                    A.grad[k] += y[k] * (g[k] - dot);
                                  }
                                }
                            });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& a, std::size_t axis) {
  const auto it = detail::line_iter(a.shape(), axis);
  std::vector<S> out(a.size());
  const S* pa = a.values().data();
  for (std::size_t o = 0; o < it.outer; ++o)
    for (std::size_t in = 0; in < it.inner; ++in) {
      const std::size_t base = o * it.len * it.inner + in;
      S mx = pa[base];
      for (std::size_t l = 1; l < it.len; ++l) mx = std::max(mx, pa[base + l * it.inner]);
      S z = 0;
      for (std::size_t l = 0; l < it.len; ++l) z += std::exp(pa[base + l * it.inner] - mx);
      const S lse = mx + std::log(z);
      for (std::size_t l = 0; l < it.len; ++l)
        out[base + l * it.inner] = pa[base + l * it.inner] - lse;
    }
  return detail::make_op<S>(a.shape(), std::move(out), Op::log_softmax, {a.node()},
                            [it](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              const S* y = self.value.data();
                              const S* g = self.grad.data();
                              for (std::size_t o = 0; o < it.outer; ++o)
                                for (std::size_t in = 0; in < it.inner; ++in) {
                                  const std::size_t base = o * it.len * it.inner + in;
                                  S gsum = 0;
                                  for (std::size_t l = 0; l < it.len; ++l)
                                    gsum += g[base + l * it.inner];
                                  for (std::size_t l = 0; l < it.len; ++l) {
                                    const std::size_t k = base + l * it.inner;
                                    A.grad[k] += g[k] - std::exp(y[k]) * gsum;
                                  }
                                }
                            });
}

inline constexpr double kLayerNormEps = 1e-5;

// Pure normalization over the last axis; affine gain/bias are separate params.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& a, double eps = kLayerNormEps) {
  if (a.shape().empty()) throw ShapeError("layer_norm: needs at least rank 1");
  const std::size_t len = a.shape().back();
  const std::size_t rows = a.size() / len;
  std::vector<S> out(a.size());
  const S* pa = a.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* x = pa + r * len;
    S mu = 0;
    for (std::size_t i = 0; i < len; ++i) mu += x[i];
    mu /= static_cast<S>(len);
    S var = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const S d = x[i] - mu;
      var += d * d;
    }
    var /= static_cast<S>(len);
    const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
    for (std::size_t i = 0; i < len; ++i) out[r * len + i] = (x[i] - mu) * inv;
  }
  return detail::make_op<S>(
      a.shape(), std::move(out), Op::layer_norm, {a.node()},
      [len, rows, eps](Node<S>& self) {
        Node<S>& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        const S* y = self.value.data();
        const S* g = self.grad.data();
        const S* x = A.value.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * len;
          S mu = 0;
          for (std::size_t i = 0; i < len; ++i) mu += x[base + i];
          mu /= static_cast<S>(len);
          S var = 0;
          for (std::size_t i = 0; i < len; ++i) {
            const S d = x[base + i] - mu;
            var += d * d;
          }
          var /= static_cast<S>(len);
          const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
          S gmean = 0, gymean = 0;
          for (std::size_t i = 0; i < len; ++i) {
            gmean += g[base + i];
            gymean += g[base + i] * y[base + i];
          }
          gmean /= static_cast<S>(len);
          gymean /= static_cast<S>(len);
          for (std::size_t i = 0; i < len; ++i)
            A.grad[base + i] += inv * (g[base + i] - gmean - y[base + i] * gymean);
        }
      });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: size mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<S> out = a.values();
  return detail::make_op<S>(std::move(shape), std::move(out), Op::reshape, {a.node()},
                            [](Node<S>& self) {
                              Node<S>& A = *self.inputs[0];
                              if (!A.requires_grad) return;
                              A.ensure_grad();
                              for (std::size_t i = 0; i < self.value.size(); ++i)
                                A.grad[i] += self.grad[i];
                            });
}

// ---------------------------------------------------------------------------
// kernel_set: uniform dispatch over the supported kernel kinds
// ---------------------------------------------------------------------------

struct KernelAttrs {
  std::size_t axis = 0;
  double scalar = 1.0;
  std::vector<std::size_t> indices;  // gather
  Shape out_shape;                   // gather
  double eps = kLayerNormEps;        // layer_norm
};

template <typename S>
Tensor<S> kernel_set(Op op, std::span<const Tensor<S>> inputs, const KernelAttrs& attrs = {}) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw ShapeError("kernel expects " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
  };
  switch (op) {
    case Op::add: need(2); return add(inputs[0], inputs[1]);
    case Op::sub: need(2); return sub(inputs[0], inputs[1]);
    case Op::mul: need(2); return mul(inputs[0], inputs[1]);
    case Op::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case Op::concat: {
      if (inputs.empty()) throw ShapeError("concat: no inputs");
      return concat(std::vector<Tensor<S>>(inputs.begin(), inputs.end()), attrs.axis);
    }
    case Op::gather: need(1); return gather(inputs[0], attrs.indices, attrs.out_shape);
    case Op::sum: need(1); return sum(inputs[0]);
    case Op::mean: need(1); return mean(inputs[0]);
    case Op::relu: need(1); return relu(inputs[0]);
    case Op::sigmoid: need(1); return sigmoid(inputs[0]);
    case Op::inverse_sigmoid: need(1); return inverse_sigmoid(inputs[0]);
    case Op::softmax: need(1); return softmax(inputs[0], attrs.axis);
    case Op::log_softmax: need(1); return log_softmax(inputs[0], attrs.axis);
    case Op::layer_norm: need(1); return layer_norm(inputs[0], attrs.eps);
    case Op::abs: need(1); return abs(inputs[0]);
    case Op::scale: need(1); return scale(inputs[0], static_cast<S>(attrs.scalar));
    default:
      throw UnsupportedOp("kernel_set: op not in the supported kernel set");
  }
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Topologically ordered op records reachable from a root. With grad_only set,
// branches that do not require grad are pruned.
template <typename S>
struct Graph {
  std::vector<Node<S>*> order;  // every node's inputs precede it

  static Graph build(Node<S>* root, bool grad_only = true) {
    Graph g;
    std::unordered_set<Node<S>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    if (!grad_only || root->requires_grad) stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next == 0 && seen.count(node)) {
        stack.pop_back();
        continue;
      }
      bool descended = false;
      while (next < node->inputs.size()) {
        Node<S>* in = node->inputs[next++].get();
        if (seen.count(in)) continue;
        if (grad_only && !in->requires_grad) continue;
        stack.emplace_back(in, 0);
        descended = true;
        break;
      }
      if (!descended && next >= node->inputs.size()) {
        if (!seen.count(node)) {
          seen.insert(node);
          g.order.push_back(node);
        }
        stack.pop_back();
      }
    }
    return g;
  }
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// requires_grad leaf; interior grads are reset at the start of each call so
// re-running the same graph is reproducible.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
  Node<S>* root = loss.node().get();
  if (!root->requires_grad) return;
  Graph<S> g = Graph<S>::build(root, true);
  for (Node<S>* n : g.order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), S(0));
  root->ensure_grad();
  root->grad[0] = S(1);
  for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
    Node<S>* n = *it;
    if (!n->is_leaf() && n->backprop) n->backprop(*n);
  }
}

// backward plus a snapshot of gradients for every named leaf reached.
template <typename S>
std::map<std::string, std::vector<S>> backward_with_grads(const Tensor<S>& loss) {
  backward(loss);
  std::map<std::string, std::vector<S>> out;
  Graph<S> g = Graph<S>::build(loss.node().get(), true);
  for (Node<S>* n : g.order)
    if (n->is_leaf() && n->requires_grad && !n->name.empty()) out[n->name] = n->grad;
  return out;
}

// ---------------------------------------------------------------------------
// grad_check: central finite differences vs the analytic gradient
// ---------------------------------------------------------------------------

template <typename S>
double grad_check(const std::function<Tensor<S>()>& f, std::span<Tensor<S>> params,
                  double step) {
  for (auto& p : params) p.zero_grad();
  Tensor<S> loss = f();
  if (loss.size() != 1) throw ShapeError("grad_check: loss must be scalar");
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw NumericError("grad_check: non-finite loss");
  backward(loss);

  std::vector<std::vector<S>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    p.grad_mut();
    analytic.push_back(p.grad());
  }

  double max_rel = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const S orig = vals[i];
      vals[i] = orig + static_cast<S>(step);
      const double fp = static_cast<double>(f().item());
      vals[i] = orig - static_cast<S>(step);
      const double fm = static_cast<double>(f().item());
      vals[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite probe value");
      const double num = (fp - fm) / (2.0 * step);
      const double ana = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({1.0, std::fabs(ana), std::fabs(num)});
      max_rel = std::max(max_rel, std::fabs(ana - num) / denom);
    }
  }
  return max_rel;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace fireset
