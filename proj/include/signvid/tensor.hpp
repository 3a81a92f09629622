#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <utility>

#include "signvid/common.hpp"

namespace signvid {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += "x";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward contribution arrives
  bool requires_grad = false;
};

class Tape;

// Lightweight handle onto a shared node. Values are immutable after creation
// except through optimizer steps; see the concurrency notes in the README.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(Shape shape, double v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not match data size " +
                       std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& mutable_data() { return node_->value; }

  double operator[](std::size_t i) const { return node_->value[i]; }

  double item() const {
    if (size() != 1) throw ShapeError("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (node_->grad.empty()) throw StateError("Tensor::grad: no gradient accumulated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline void ensure_grad(const std::shared_ptr<TensorNode>& n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
}

inline void check_finite(const TensorNode& n, const char* op) {
  for (double v : n.value)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced non-finite value");
}

inline void check_input_finite(const Tensor& t, const char* op) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace detail

// Reverse-mode tape. Ops append themselves in creation order, which is a
// topological order by construction; backward() replays the closures once,
// in reverse. One tape per thread may be active at a time (nesting allowed).
class Tape {
 public:
  Tape() : prev_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ref(); }

  void record(std::function<void()> backward_op) { ops_.push_back(std::move(backward_op)); }

  std::size_t size() const { return ops_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Tensor& loss) {
    if (loss.size() != 1)
      throw ValueError("Tape::backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    detail::ensure_grad(loss.node());
    loss.node()->grad[0] = 1.0;
    for (std::size_t i = ops_.size(); i-- > 0;) ops_[i]();
  }

  void clear() { ops_.clear(); }

 private:
  static Tape*& active_ref() {
    thread_local Tape* t = nullptr;
    return t;
  }
  std::vector<std::function<void()>> ops_;
  Tape* prev_ = nullptr;
};

namespace detail {

inline bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor make_result(Shape shape, std::vector<double> value, bool requires_grad, const char* op) {
  Tensor out = Tensor::from(std::move(shape), std::move(value), requires_grad);
  check_finite(*out.node(), op);
  return out;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Elementwise arithmetic
// --------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "add");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        detail::ensure_grad(an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        detail::ensure_grad(bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "sub");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        detail::ensure_grad(an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        detail::ensure_grad(bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "mul");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        detail::ensure_grad(an);
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += bn->value[i] * on->grad[i];
      }
      if (bn->requires_grad) {
        detail::ensure_grad(bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += an->value[i] * on->grad[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "scale");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, c] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
    });
  }
  return out;
}

inline Tensor add_const(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericError("add_const: non-finite constant");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + c;
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "add_const");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

/// mat [m x n] + vec [n], broadcast over rows (the bias-add pattern).
inline Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
  if (mat.rank() != 2 || vec.rank() != 1 || mat.dim(1) != vec.dim(0))
    throw ShapeError("add_rowvec: want [m x n] + [n], got " + shape_str(mat.shape()) + " + " +
                     shape_str(vec.shape()));
  const std::size_t m = mat.dim(0), n = mat.dim(1);
  std::vector<double> v(mat.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = mat[r * n + c] + vec[c];
  const bool rg = detail::grad_enabled({&mat, &vec});
  Tensor out = detail::make_result(mat.shape(), std::move(v), rg, "add_rowvec");
  if (rg) {
    auto mn = mat.node(), vn = vec.node(), on = out.node();
    Tape::active()->record([mn, vn, on, m, n] {
      if (on->grad.empty()) return;
      if (mn->requires_grad) {
        detail::ensure_grad(mn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        detail::ensure_grad(vn);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) vn->grad[c] += on->grad[r * n + c];
      }
    });
  }
  return out;
}

/// x [N x C x H x W] + v [C], broadcast over batch and spatial axes.
inline Tensor add_chanvec(const Tensor& x, const Tensor& v) {
  if (x.rank() != 4 || v.rank() != 1 || x.dim(1) != v.dim(0))
    throw ShapeError("add_chanvec: want [N x C x H x W] + [C], got " + shape_str(x.shape()) + " + " +
                     shape_str(v.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double b = v[c];
      const std::size_t base = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) out[base + i] = x[base + i] + b;
    }
  const bool rg = detail::grad_enabled({&x, &v});
  Tensor res = detail::make_result(x.shape(), std::move(out), rg, "add_chanvec");
  if (rg) {
    auto xn = x.node(), vn = v.node(), on = res.node();
    Tape::active()->record([xn, vn, on, N, C, HW] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        detail::ensure_grad(xn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        detail::ensure_grad(vn);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * HW;
            double s = 0;
            for (std::size_t i = 0; i < HW; ++i) s += on->grad[base + i];
            vn->grad[c] += s;
          }
      }
    });
  }
  return res;
}

// --------------------------------------------------------------------------
// Matrix products
// --------------------------------------------------------------------------

namespace detail {

// c += a[m x k] * b[k x n], row-major, ikj order.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a^T[m x k] * b[m x n]  (result k x n)
inline void gemm_at_b(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

// c += a[m x k] * b^T[n x k]  (result m x n)
inline void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), v.data(), m, k, n);
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result({m, n}, std::move(v), rg, "matmul");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        detail::ensure_grad(an);
        // dA += dC * B^T
        detail::gemm_a_bt(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        detail::ensure_grad(bn);
        // dB += A^T * dC
        detail::gemm_at_b(an->value.data(), on->grad.data(), bn->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

/// Batched matmul: a [B x m x k] * b [B x k x n] -> [B x m x n].
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm: want [B x m x k] * [B x k x n], got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> v(B * m * n, 0.0);
  for (std::size_t t = 0; t < B; ++t)
    detail::gemm_acc(a.data().data() + t * m * k, b.data().data() + t * k * n, v.data() + t * m * n, m,
                     k, n);
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result({B, m, n}, std::move(v), rg, "bmm");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, B, m, k, n] {
      if (on->grad.empty()) return;
      for (std::size_t t = 0; t < B; ++t) {
        const double* g = on->grad.data() + t * m * n;
        if (an->requires_grad) {
          detail::ensure_grad(an);
          detail::gemm_a_bt(g, bn->value.data() + t * k * n, an->grad.data() + t * m * k, m, n, k);
        }
        if (bn->requires_grad) {
          detail::ensure_grad(bn);
          detail::gemm_at_b(an->value.data() + t * m * k, g, bn->grad.data() + t * k * n, m, k, n);
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Layout ops
// --------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape) +
                     " changes element count");
  const bool rg = detail::grad_enabled({&a});
  Tensor out = Tensor::from(std::move(new_shape), a.data(), rg);
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

/// Permute the axes of a rank-3 tensor.
inline Tensor permute3(const Tensor& a, std::size_t p0, std::size_t p1, std::size_t p2) {
  if (a.rank() != 3) throw ShapeError("permute3: expects rank-3 tensor, got " + shape_str(a.shape()));
  const std::size_t perm[3] = {p0, p1, p2};
  if ((1u << p0 | 1u << p1 | 1u << p2) != 0b111u) throw ValueError("permute3: invalid permutation");
  const std::size_t d[3] = {a.dim(0), a.dim(1), a.dim(2)};
  const Shape os = {d[perm[0]], d[perm[1]], d[perm[2]]};
  std::vector<double> v(a.size());
  const std::size_t in_stride[3] = {d[1] * d[2], d[2], 1};
  std::size_t out_stride_for_in_axis[3];
  {
    const std::size_t os_stride[3] = {os[1] * os[2], os[2], 1};
    for (std::size_t oa = 0; oa < 3; ++oa) out_stride_for_in_axis[perm[oa]] = os_stride[oa];
  }
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k)
        v[i * out_stride_for_in_axis[0] + j * out_stride_for_in_axis[1] + k * out_stride_for_in_axis[2]] =
            a[i * in_stride[0] + j * in_stride[1] + k * in_stride[2]];
  const bool rg = detail::grad_enabled({&a});
  Tensor out = Tensor::from(os, std::move(v), rg);
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    const std::size_t s0 = out_stride_for_in_axis[0], s1 = out_stride_for_in_axis[1],
                      s2 = out_stride_for_in_axis[2];
    const std::size_t d0 = d[0], d1 = d[1], d2 = d[2];
    Tape::active()->record([an, on, s0, s1, s2, d0, d1, d2] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d1; ++j)
          for (std::size_t k = 0; k < d2; ++k)
            an->grad[(i * d1 + j) * d2 + k] += on->grad[i * s0 + j * s1 + k * s2];
    });
  }
  return out;
}

/// Concatenate two rank-3 tensors along axis 1.
inline Tensor concat3_dim1(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw ShapeError("concat3_dim1: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t B = a.dim(0), ma = a.dim(1), mb = b.dim(1), n = a.dim(2);
  std::vector<double> v(B * (ma + mb) * n);
  for (std::size_t t = 0; t < B; ++t) {
    std::copy_n(a.data().data() + t * ma * n, ma * n, v.data() + t * (ma + mb) * n);
    std::copy_n(b.data().data() + t * mb * n, mb * n, v.data() + t * (ma + mb) * n + ma * n);
  }
  const bool rg = detail::grad_enabled({&a, &b});
  Tensor out = detail::make_result({B, ma + mb, n}, std::move(v), rg, "concat3_dim1");
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, B, ma, mb, n] {
      if (on->grad.empty()) return;
      for (std::size_t t = 0; t < B; ++t) {
        const double* g = on->grad.data() + t * (ma + mb) * n;
        if (an->requires_grad) {
          detail::ensure_grad(an);
          for (std::size_t i = 0; i < ma * n; ++i) an->grad[t * ma * n + i] += g[i];
        }
        if (bn->requires_grad) {
          detail::ensure_grad(bn);
          for (std::size_t i = 0; i < mb * n; ++i) bn->grad[t * mb * n + i] += g[ma * n + i];
        }
      }
    });
  }
  return out;
}

/// t [B x m x n] + mask [m x n], broadcast over the batch axis.
inline Tensor add_broadcast_batch(const Tensor& t, const Tensor& mask) {
  if (t.rank() != 3 || mask.rank() != 2 || t.dim(1) != mask.dim(0) || t.dim(2) != mask.dim(1))
    throw ShapeError("add_broadcast_batch: want [B x m x n] + [m x n], got " + shape_str(t.shape()) +
                     " + " + shape_str(mask.shape()));
  const std::size_t B = t.dim(0), mn = mask.size();
  std::vector<double> v(t.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < mn; ++i) v[b * mn + i] = t[b * mn + i] + mask[i];
  const bool rg = detail::grad_enabled({&t, &mask});
  Tensor out = detail::make_result(t.shape(), std::move(v), rg, "add_broadcast_batch");
  if (rg) {
    auto tn = t.node(), mk = mask.node(), on = out.node();
    Tape::active()->record([tn, mk, on, B, mn] {
      if (on->grad.empty()) return;
      if (tn->requires_grad) {
        detail::ensure_grad(tn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) tn->grad[i] += on->grad[i];
      }
      if (mk->requires_grad) {
        detail::ensure_grad(mk);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < mn; ++i) mk->grad[i] += on->grad[b * mn + i];
      }
    });
  }
  return out;
}

/// Rows [r0, r1) of a rank-3 tensor along axis 1.
inline Tensor slice3_dim1(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (a.rank() != 3) throw ShapeError("slice3_dim1: expects rank-3 tensor");
  if (r0 >= r1 || r1 > a.dim(1)) throw ValueError("slice3_dim1: bad range");
  const std::size_t B = a.dim(0), m = a.dim(1), n = a.dim(2), mo = r1 - r0;
  std::vector<double> v(B * mo * n);
  for (std::size_t t = 0; t < B; ++t)
    std::copy_n(a.data().data() + (t * m + r0) * n, mo * n, v.data() + t * mo * n);
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result({B, mo, n}, std::move(v), rg, "slice3_dim1");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, B, m, n, mo, r0] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t t = 0; t < B; ++t)
        for (std::size_t i = 0; i < mo * n; ++i) an->grad[(t * m + r0) * n + i] += on->grad[t * mo * n + i];
    });
  }
  return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("concat_rows: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Tensor a3 = reshape(a, {1, a.dim(0), a.dim(1)});
  Tensor b3 = reshape(b, {1, b.dim(0), b.dim(1)});
  Tensor c = concat3_dim1(a3, b3);
  return reshape(c, {a.dim(0) + b.dim(0), a.dim(1)});
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (a.rank() != 2) throw ShapeError("slice_rows: expects rank-2 tensor");
  Tensor a3 = reshape(a, {1, a.dim(0), a.dim(1)});
  Tensor s = slice3_dim1(a3, r0, r1);
  return reshape(s, {r1 - r0, a.dim(1)});
}

// --------------------------------------------------------------------------
// Reductions and losses
// --------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result({1}, {s}, rg, "sum");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      const double g = on->grad[0];
      for (double& d : an->grad) d += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ValueError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse_loss: shapes differ " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  const std::size_t n = pred.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  const bool rg = detail::grad_enabled({&pred, &target});
  Tensor out = detail::make_result({1}, {s / static_cast<double>(n)}, rg, "mse_loss");
  if (rg) {
    auto pn = pred.node(), tn = target.node(), on = out.node();
    Tape::active()->record([pn, tn, on, n] {
      if (on->grad.empty()) return;
      const double g = 2.0 * on->grad[0] / static_cast<double>(n);
      if (pn->requires_grad) {
        detail::ensure_grad(pn);
        for (std::size_t i = 0; i < n; ++i) pn->grad[i] += g * (pn->value[i] - tn->value[i]);
      }
      if (tn->requires_grad) {
        detail::ensure_grad(tn);
        for (std::size_t i = 0; i < n; ++i) tn->grad[i] -= g * (pn->value[i] - tn->value[i]);
      }
    });
  }
  return out;
}

/// Mean cross-entropy over rows: logits [m x n], one target index per row.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [rows x classes]");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  if (targets.size() != m) throw ValueError("cross_entropy: need one target per row");
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= n)
      throw ValueError("cross_entropy: target index " + std::to_string(t) + " out of range [0, " +
                       std::to_string(n) + ")");
  double total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = logits.data().data() + r * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double se = 0;
    for (std::size_t j = 0; j < n; ++j) se += std::exp(row[j] - mx);
    total += mx + std::log(se) - row[static_cast<std::size_t>(targets[r])];
  }
  const bool rg = detail::grad_enabled({&logits});
  Tensor out = detail::make_result({1}, {total / static_cast<double>(m)}, rg, "cross_entropy");
  if (rg) {
    auto ln = logits.node();
    auto on = out.node();
    auto tg = targets;
    Tape::active()->record([ln, on, tg, m, n] {
      if (on->grad.empty() || !ln->requires_grad) return;
      detail::ensure_grad(ln);
      const double g = on->grad[0] / static_cast<double>(m);
      for (std::size_t r = 0; r < m; ++r) {
        const double* row = ln->value.data() + r * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double se = 0;
        for (std::size_t j = 0; j < n; ++j) se += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < n; ++j) {
          double p = std::exp(row[j] - mx) / se;
          ln->grad[r * n + j] += g * (p - (j == static_cast<std::size_t>(tg[r]) ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Activations
// --------------------------------------------------------------------------

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid_scalar(a[i]);
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "sigmoid");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->value[i];
        an->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

inline Tensor silu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * sigmoid_scalar(a[i]);
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "silu");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double s = sigmoid_scalar(an->value[i]);
        an->grad[i] += on->grad[i] * (s * (1.0 + an->value[i] * (1.0 - s)));
      }
    });
  }
  return out;
}

inline Tensor gelu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] * M_SQRT1_2));
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "gelu");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double x = an->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        an->grad[i] += on->grad[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

/// Softmax over the last axis, any rank >= 1. Rows sum to 1 within 1e-12.
inline Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() < 1 || a.shape().back() == 0) throw ShapeError("softmax_lastdim: bad shape");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  std::vector<double> v(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * n;
    double* y = v.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= s;
  }
  const bool rg = detail::grad_enabled({&a});
  Tensor out = detail::make_result(a.shape(), std::move(v), rg, "softmax");
  if (rg) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, rows, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      detail::ensure_grad(an);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->value.data() + r * n;
        const double* g = on->grad.data() + r * n;
        double dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
        for (std::size_t j = 0; j < n; ++j) an->grad[r * n + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

/// LayerNorm over the last axis with learned gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (x.rank() < 1) throw ShapeError("layer_norm: bad input rank");
  const std::size_t n = x.shape().back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
  const std::size_t rows = x.size() / n;
  std::vector<double> v(x.size());
  std::vector<double> mu(rows), istd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * n;
    double m = 0;
    for (std::size_t j = 0; j < n; ++j) m += xr[j];
    m /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    mu[r] = m;
    istd[r] = is;
    for (std::size_t j = 0; j < n; ++j) v[r * n + j] = (xr[j] - m) * is * gain[j] + bias[j];
  }
  const bool rg = detail::grad_enabled({&x, &gain, &bias});
  Tensor out = detail::make_result(x.shape(), std::move(v), rg, "layer_norm");
  if (rg) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    Tape::active()->record([xn, gn, bn, on, rows, n, mu, istd] {
      if (on->grad.empty()) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xn->value.data() + r * n;
        const double* g = on->grad.data() + r * n;
        const double is = istd[r], m = mu[r];
        if (gn->requires_grad) {
          detail::ensure_grad(gn);
          for (std::size_t j = 0; j < n; ++j) gn->grad[j] += g[j] * (xr[j] - m) * is;
        }
        if (bn->requires_grad) {
          detail::ensure_grad(bn);
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += g[j];
        }
        if (xn->requires_grad) {
          detail::ensure_grad(xn);
          // dxhat = g * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * istd
          double s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dxh = g[j] * gn->value[j];
            const double xh = (xr[j] - m) * is;
            s1 += dxh;
            s2 += dxh * xh;
          }
          s1 /= static_cast<double>(n);
          s2 /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const double dxh = g[j] * gn->value[j];
            const double xh = (xr[j] - m) * is;
            xn->grad[r * n + j] += (dxh - s1 - xh * s2) * is;
          }
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Convolution (cross-correlation with zero padding) and nearest upsampling
// --------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t sh, std::size_t sw,
                     std::size_t ph, std::size_t pw) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [N x C x H x W], got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be [Co x Ci x kh x kw]");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
                     shape_str(w.shape()));
  if (sh < 1 || sw < 1) throw ValueError("conv2d: stride must be >= 1");
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (b.shape() != Shape{Co}) throw ShapeError("conv2d: bias must be [Co]");
  if (H + 2 * ph < kh || W + 2 * pw < kw)
    throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * ph - kh) / sh + 1;
  const std::size_t Wo = (W + 2 * pw - kw) / sw + 1;
  const std::size_t K = Ci * kh * kw;

  // im2col once per image, then one GEMM per image.
  std::vector<double> col(K * Ho * Wo);
  std::vector<double> v(N * Co * Ho * Wo, 0.0);
  auto fill_col = [&](const double* img) {
    std::size_t idx = 0;
    for (std::size_t c = 0; c < Ci; ++c)
      for (std::size_t dy = 0; dy < kh; ++dy)
        for (std::size_t dx = 0; dx < kw; ++dx) {
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * sh + dy) - static_cast<std::ptrdiff_t>(ph);
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * sw + dx) - static_cast<std::ptrdiff_t>(pw);
              col[idx++] = (iy >= 0 && iy < static_cast<std::ptrdiff_t>(H) && ix >= 0 &&
                            ix < static_cast<std::ptrdiff_t>(W))
                               ? img[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)]
                               : 0.0;
            }
          }
        }
  };
  for (std::size_t n = 0; n < N; ++n) {
    fill_col(x.data().data() + n * Ci * H * W);
    double* out_n = v.data() + n * Co * Ho * Wo;
    detail::gemm_acc(w.data().data(), col.data(), out_n, Co, K, Ho * Wo);
    for (std::size_t co = 0; co < Co; ++co) {
      const double bias_v = b[co];
      double* oc = out_n + co * Ho * Wo;
      for (std::size_t i = 0; i < Ho * Wo; ++i) oc[i] += bias_v;
    }
  }
  const bool rg = detail::grad_enabled({&x, &w, &b});
  Tensor out = detail::make_result({N, Co, Ho, Wo}, std::move(v), rg, "conv2d");
  if (rg) {
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    Tape::active()->record([xn, wn, bn, on, N, Ci, H, W, Co, kh, kw, sh, sw, ph, pw, Ho, Wo, K] {
      if (on->grad.empty()) return;
      std::vector<double> col(K * Ho * Wo);
      std::vector<double> dcol(K * Ho * Wo);
      for (std::size_t n = 0; n < N; ++n) {
        const double* g = on->grad.data() + n * Co * Ho * Wo;
        if (bn->requires_grad) {
          detail::ensure_grad(bn);
          for (std::size_t co = 0; co < Co; ++co) {
            double s = 0;
            for (std::size_t i = 0; i < Ho * Wo; ++i) s += g[co * Ho * Wo + i];
            bn->grad[co] += s;
          }
        }
        if (wn->requires_grad || xn->requires_grad) {
          // rebuild the column matrix for this image
          const double* img = xn->value.data() + n * Ci * H * W;
          std::size_t idx = 0;
          for (std::size_t c = 0; c < Ci; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx)
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  const std::ptrdiff_t iy =
                      static_cast<std::ptrdiff_t>(oy * sh + dy) - static_cast<std::ptrdiff_t>(ph);
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * sw + dx) - static_cast<std::ptrdiff_t>(pw);
                    col[idx++] = (iy >= 0 && iy < static_cast<std::ptrdiff_t>(H) && ix >= 0 &&
                                  ix < static_cast<std::ptrdiff_t>(W))
                                     ? img[(c * H + static_cast<std::size_t>(iy)) * W +
                                           static_cast<std::size_t>(ix)]
                                     : 0.0;
                  }
                }
          if (wn->requires_grad) {
            detail::ensure_grad(wn);
            // dW += g [Co x HoWo] * col^T [HoWo x K]
            detail::gemm_a_bt(g, col.data(), wn->grad.data(), Co, Ho * Wo, K);
          }
          if (xn->requires_grad) {
            detail::ensure_grad(xn);
            std::fill(dcol.begin(), dcol.end(), 0.0);
            // dcol += W^T [K x Co] * g [Co x HoWo]
            detail::gemm_at_b(wn->value.data(), g, dcol.data(), Co, K, Ho * Wo);
            double* dimg = xn->grad.data() + n * Ci * H * W;
            std::size_t idx2 = 0;
            for (std::size_t c = 0; c < Ci; ++c)
              for (std::size_t dy = 0; dy < kh; ++dy)
                for (std::size_t dx = 0; dx < kw; ++dx)
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * sh + dy) - static_cast<std::ptrdiff_t>(ph);
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const std::ptrdiff_t ix =
                          static_cast<std::ptrdiff_t>(ox * sw + dx) - static_cast<std::ptrdiff_t>(pw);
                      if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(H) && ix >= 0 &&
                          ix < static_cast<std::ptrdiff_t>(W))
                        dimg[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] +=
                            dcol[idx2];
                      ++idx2;
                    }
                  }
          }
        }
      }
    });
  }
  return out;
}

/// Nearest-neighbour upsampling by integer factors along H and W.
inline Tensor upsample_nearest(const Tensor& x, std::size_t fh, std::size_t fw) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest: input must be [N x C x H x W]");
  if (fh < 1 || fw < 1) throw ValueError("upsample_nearest: factors must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H * fh, Wo = W * fw;
  std::vector<double> v(N * C * Ho * Wo);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* in = x.data().data() + nc * H * W;
    double* out = v.data() + nc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xo = 0; xo < Wo; ++xo) out[y * Wo + xo] = in[(y / fh) * W + (xo / fw)];
  }
  const bool rg = detail::grad_enabled({&x});
  Tensor out = detail::make_result({N, C, Ho, Wo}, std::move(v), rg, "upsample_nearest");
  if (rg) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([xn, on, N, C, H, W, fh, fw] {
      if (on->grad.empty() || !xn->requires_grad) return;
      detail::ensure_grad(xn);
      const std::size_t Ho = H * fh, Wo = W * fw;
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* g = on->grad.data() + nc * Ho * Wo;
        double* dx = xn->grad.data() + nc * H * W;
        for (std::size_t y = 0; y < Ho; ++y)
          for (std::size_t xo = 0; xo < Wo; ++xo) dx[(y / fh) * W + (xo / fw)] += g[y * Wo + xo];
      }
    });
  }
  return out;
}

/// Repeat a [1 x ...] tensor n times along axis 0; backward sums the copies.
inline Tensor tile_batch(const Tensor& x, std::size_t n) {
  if (x.rank() < 1 || x.dim(0) != 1) throw ShapeError("tile_batch: leading axis must be 1");
  if (n < 1) throw ValueError("tile_batch: n must be >= 1");
  Shape os = x.shape();
  os[0] = n;
  const std::size_t sz = x.size();
  std::vector<double> v(sz * n);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.data().data(), sz, v.data() + i * sz);
  const bool rg = detail::grad_enabled({&x});
  Tensor out = detail::make_result(std::move(os), std::move(v), rg, "tile_batch");
  if (rg) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([xn, on, n, sz] {
      if (on->grad.empty() || !xn->requires_grad) return;
      detail::ensure_grad(xn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < sz; ++j) xn->grad[j] += on->grad[i * sz + j];
    });
  }
  return out;
}

/// Per-row selection between x and replacement (both [n x d]): rows where
/// mask is set come from `repl`, others from `x`. Gradients flow to each
/// source only through the rows it supplied.
inline Tensor masked_replace_rows(const Tensor& x, const std::vector<char>& mask, const Tensor& repl) {
  if (x.rank() != 2 || repl.shape() != x.shape())
    throw ShapeError("masked_replace_rows: x and repl must be equal rank-2 shapes");
  if (mask.size() != x.dim(0)) throw ValueError("masked_replace_rows: one mask entry per row");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> v(x.size());
  for (std::size_t r = 0; r < n; ++r) {
    const Tensor& src = mask[r] ? repl : x;
    std::copy_n(src.data().data() + r * d, d, v.data() + r * d);
  }
  const bool rg = detail::grad_enabled({&x, &repl});
  Tensor out = detail::make_result(x.shape(), std::move(v), rg, "masked_replace_rows");
  if (rg) {
    auto xn = x.node(), rn = repl.node(), on = out.node();
    auto m = mask;
    Tape::active()->record([xn, rn, on, m, n, d] {
      if (on->grad.empty()) return;
      for (std::size_t r = 0; r < n; ++r) {
        auto& src = m[r] ? rn : xn;
        if (!src->requires_grad) continue;
        detail::ensure_grad(src);
        for (std::size_t j = 0; j < d; ++j) src->grad[r * d + j] += on->grad[r * d + j];
      }
    });
  }
  return out;
}

/// Row gather from an embedding table [V x D]; backward scatter-adds.
inline Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding_rows: table must be [V x D]");
  const std::size_t V = table.dim(0), D = table.dim(1);
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw ValueError("embedding_rows: index " + std::to_string(id) + " out of range [0, " +
                       std::to_string(V) + ")");
  std::vector<double> v(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * D, D, v.data() + i * D);
  const bool rg = detail::grad_enabled({&table});
  Tensor out = detail::make_result({ids.size(), D}, std::move(v), rg, "embedding_rows");
  if (rg) {
    auto tn = table.node();
    auto on = out.node();
    auto idx = ids;
    Tape::active()->record([tn, on, idx, D] {
      if (on->grad.empty() || !tn->requires_grad) return;
      detail::ensure_grad(tn);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < D; ++j)
          tn->grad[static_cast<std::size_t>(idx[i]) * D + j] += on->grad[i * D + j];
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Tensor utilities (no autodiff involvement)
// --------------------------------------------------------------------------

inline Tensor randn(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Tensor clone_values(const Tensor& t, bool requires_grad = false) {
  return Tensor::from(t.shape(), t.data(), requires_grad);
}

}  // namespace signvid
