#pragma once

#include <string>
#include <unordered_map>
#include <utility>

#include "signvid/tensor.hpp"

namespace signvid {

/// Ordered list of (name, parameter) pairs; the unit of checkpointing.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline void append_param(NamedParams& out, const std::string& name, const Tensor& t) {
  out.emplace_back(name, t);
}

/// Uniform fan-in init, U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
inline Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform(std::move(shape), rng, -bound, bound, /*requires_grad=*/true);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  /// One update over all params that accumulated a gradient; clears grads.
  void step(const std::vector<Tensor>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const Tensor& p : params) {
      auto node = p.node().get();
      if (node->grad.empty()) continue;  // not reached by backward this step
      Slot& s = slots_[node];
      if (s.m.empty()) {
        s.m.assign(node->value.size(), 0.0);
        s.v.assign(node->value.size(), 0.0);
      }
      if (s.m.size() != node->value.size())
        throw ShapeError("Adam::step: state dimension mismatch for a parameter");
      for (std::size_t i = 0; i < node->value.size(); ++i) {
        const double g = node->grad[i];
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        node->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      node->grad.clear();
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::unordered_map<TensorNode*, Slot> slots_;
};

inline void zero_grads(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) p.node()->grad.clear();
}

inline std::vector<Tensor> param_tensors(const NamedParams& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : w(init_uniform_fan_in({in, out}, in, rng)), b(Tensor::zeros({out}, true)) {}

  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

  void params(NamedParams& out, const std::string& prefix) const {
    append_param(out, prefix + ".w", w);
    append_param(out, prefix + ".b", b);
  }
};

struct LayerNormLayer {
  Tensor gain, bias;

  LayerNormLayer() = default;
  explicit LayerNormLayer(std::size_t dim)
      : gain(Tensor::filled({dim}, 1.0, true)), bias(Tensor::zeros({dim}, true)) {}

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void params(NamedParams& out, const std::string& prefix) const {
    append_param(out, prefix + ".gain", gain);
    append_param(out, prefix + ".bias", bias);
  }
};

struct Conv2d {
  Tensor w;  // [Co x Ci x kh x kw]
  Tensor b;  // [Co]
  std::size_t sh = 1, sw = 1, ph = 0, pw = 0;

  Conv2d() = default;
  Conv2d(std::size_t ci, std::size_t co, std::size_t k, std::size_t stride_h, std::size_t stride_w,
         std::size_t pad, Rng& rng)
      : w(init_uniform_fan_in({co, ci, k, k}, ci * k * k, rng)),
        b(Tensor::zeros({co}, true)),
        sh(stride_h),
        sw(stride_w),
        ph(pad),
        pw(pad) {}

  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, sh, sw, ph, pw); }

  void params(NamedParams& out, const std::string& prefix) const {
    append_param(out, prefix + ".w", w);
    append_param(out, prefix + ".b", b);
  }
};

struct Embedding {
  Tensor table;  // [V x D]

  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t dim, Rng& rng)
      : table(init_uniform_fan_in({vocab, dim}, dim, rng)) {}

  Tensor forward(const std::vector<int>& ids) const { return embedding_rows(table, ids); }

  void params(NamedParams& out, const std::string& prefix) const {
    append_param(out, prefix + ".table", table);
  }
};

/// Single-head scaled dot-product attention. Queries come from `x`; keys and
/// values from `kv` (pass x itself for plain self-attention). Inputs are
/// [B x S x D]; an optional additive mask [Sq x Sk] is broadcast over batches.
struct Attention {
  Linear q, k, v, o;
  std::size_t dim = 0;

  Attention() = default;
  Attention(std::size_t d, Rng& rng) : q(d, d, rng), k(d, d, rng), v(d, d, rng), o(d, d, rng), dim(d) {}

  Tensor forward(const Tensor& x, const Tensor& kv, const Tensor* mask = nullptr) const {
    const std::size_t B = x.dim(0), Sq = x.dim(1), D = x.dim(2), Sk = kv.dim(1);
    Tensor qf = reshape(q.forward(reshape(x, {B * Sq, D})), {B, Sq, D});
    Tensor kf = reshape(k.forward(reshape(kv, {B * Sk, D})), {B, Sk, D});
    Tensor vf = reshape(v.forward(reshape(kv, {B * Sk, D})), {B, Sk, D});
    Tensor scores = scale(bmm(qf, permute3(kf, 0, 2, 1)), 1.0 / std::sqrt(static_cast<double>(D)));
    if (mask) scores = add_broadcast_batch(scores, *mask);
    Tensor attn = softmax_lastdim(scores);
    Tensor ctx = bmm(attn, vf);
    return reshape(o.forward(reshape(ctx, {B * Sq, D})), {B, Sq, D});
  }

  Tensor self_forward(const Tensor& x, const Tensor* mask = nullptr) const { return forward(x, x, mask); }

  void params(NamedParams& out, const std::string& prefix) const {
    q.params(out, prefix + ".q");
    k.params(out, prefix + ".k");
    v.params(out, prefix + ".v");
    o.params(out, prefix + ".o");
  }
};

/// Additive causal mask: 0 on/below the diagonal, -1e30 above.
inline Tensor causal_mask(std::size_t s) {
  std::vector<double> m(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) m[i * s + j] = -1e30;
  return Tensor::from({s, s}, std::move(m));
}

/// Sinusoidal timestep embedding of even dimension `dim`.
inline Tensor sinusoidal_embedding(std::size_t t, std::size_t dim) {
  if (dim % 2 != 0) throw ValueError("sinusoidal_embedding: dim must be even");
  std::vector<double> v(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[i] = std::sin(static_cast<double>(t) * freq);
    v[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return Tensor::from({1, dim}, std::move(v));
}

}  // namespace signvid
