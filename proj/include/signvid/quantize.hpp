#pragma once

#include "signvid/nn.hpp"
#include "signvid/tensor.hpp"

namespace signvid::quant {

/// Round half to even, declared explicitly so results are platform-stable.
inline double round_half_even(double x) {
  const double fl = std::floor(x);
  const double frac = x - fl;
  if (frac > 0.5) return fl + 1.0;
  if (frac < 0.5) return fl;
  return (std::fmod(fl, 2.0) == 0.0) ? fl : fl + 1.0;
}

/// Per-channel quantization levels. vocab_size() is the product of levels.
struct FsqSpec {
  std::vector<int> levels;

  explicit FsqSpec(std::vector<int> lv) : levels(std::move(lv)) {
    if (levels.empty()) throw ValueError("FsqSpec: need at least one channel");
    for (int l : levels)
      if (l < 2) throw ValueError("FsqSpec: every level must be >= 2");
  }

  std::size_t channels() const { return levels.size(); }

  std::size_t vocab_size() const {
    std::uint64_t v = 1;
    for (int l : levels) {
      v *= static_cast<std::uint64_t>(l);
      if (v > (1ull << 31)) throw ValueError("FsqSpec: vocabulary too large");
    }
    return static_cast<std::size_t>(v);
  }
};

/// Bounded map f(z; L) = (L-1) * sigmoid(z).
inline double fsq_bounded(double z, int level) {
  return (static_cast<double>(level) - 1.0) * sigmoid_scalar(z);
}

/// Quantize one scalar: rnd((L-1) * sigmoid(z)), codes in [0, L).
inline int fsq_quantize_scalar(double z, int level) {
  if (!std::isfinite(z)) throw NumericError("fsq_quantize: non-finite input");
  const int code = static_cast<int>(round_half_even(fsq_bounded(z, level)));
  return std::clamp(code, 0, level - 1);  // sigmoid bounds make this a no-op
}

/// Quantize the last axis of z (length == channels) to per-channel codes.
inline std::vector<int> fsq_quantize(const Tensor& z, const FsqSpec& spec) {
  const std::size_t d = spec.channels();
  if (z.rank() < 1 || z.shape().back() != d)
    throw ShapeError("fsq_quantize: last axis must have length " + std::to_string(d));
  std::vector<int> codes(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) codes[i] = fsq_quantize_scalar(z[i], spec.levels[i % d]);
  return codes;
}

/// Representative of a code in quantized-value space: v = code.
inline double fsq_dequantize_raw(int code, int level) {
  if (code < 0 || code >= level)
    throw ValueError("fsq_dequantize: code " + std::to_string(code) + " out of range [0, " +
                     std::to_string(level) + ")");
  return static_cast<double>(code);
}

/// Scale-stable representative: 2*code/(L-1) - 1, in [-1, 1]. Default for the
/// decoder input side.
inline double fsq_dequantize_normalized(int code, int level) {
  return 2.0 * fsq_dequantize_raw(code, level) / (static_cast<double>(level) - 1.0) - 1.0;
}

/// Pre-sigmoid point that maps back onto `code` under fsq_quantize. Boundary
/// codes use a clamped logit (the saturation ends of the sigmoid).
inline double fsq_logit_for_code(int code, int level) {
  const double p = fsq_dequantize_raw(code, level) / (static_cast<double>(level) - 1.0);
  const double eps = 1e-12;
  const double pc = std::clamp(p, eps, 1.0 - eps);
  return std::log(pc / (1.0 - pc));
}

/// Straight-through quantization: forward emits rnd(f(z; L)) as float values,
/// backward passes the gradient of f(z; L) (the rounding step is treated as
/// identity).
inline Tensor fsq_straight_through(const Tensor& z, const FsqSpec& spec) {
  const std::size_t d = spec.channels();
  if (z.rank() < 1 || z.shape().back() != d)
    throw ShapeError("fsq_straight_through: last axis must have length " + std::to_string(d));
  detail::check_input_finite(z, "fsq_straight_through");
  std::vector<double> v(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    v[i] = static_cast<double>(fsq_quantize_scalar(z[i], spec.levels[i % d]));
  const bool rg = detail::grad_enabled({&z});
  Tensor out = detail::make_result(z.shape(), std::move(v), rg, "fsq_straight_through");
  if (rg) {
    auto zn = z.node();
    auto on = out.node();
    auto levels = spec.levels;
    Tape::active()->record([zn, on, levels, d] {
      if (on->grad.empty() || !zn->requires_grad) return;
      detail::ensure_grad(zn);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double L = static_cast<double>(levels[i % d]);
        const double s = sigmoid_scalar(zn->value[i]);
        zn->grad[i] += on->grad[i] * (L - 1.0) * s * (1.0 - s);
      }
    });
  }
  return out;
}

/// Mixed-radix packing: index = sum_i codes[i] * prod_{j>i} L_j.
inline std::size_t pack(const std::vector<int>& codes, const FsqSpec& spec) {
  if (codes.size() != spec.channels()) throw ValueError("pack: wrong number of channel codes");
  std::size_t index = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int l = spec.levels[i];
    if (codes[i] < 0 || codes[i] >= l)
      throw ValueError("pack: code " + std::to_string(codes[i]) + " out of range for level " +
                       std::to_string(l));
    index = index * static_cast<std::size_t>(l) + static_cast<std::size_t>(codes[i]);
  }
  return index;
}

inline std::vector<int> unpack(std::size_t index, const FsqSpec& spec) {
  if (index >= spec.vocab_size())
    throw ValueError("unpack: index " + std::to_string(index) + " out of range [0, " +
                     std::to_string(spec.vocab_size()) + ")");
  std::vector<int> codes(spec.channels());
  for (std::size_t i = spec.channels(); i-- > 0;) {
    const auto l = static_cast<std::size_t>(spec.levels[i]);
    codes[i] = static_cast<int>(index % l);
    index /= l;
  }
  return codes;
}

/// Per-frame grid of packed vocabulary indices (frame-major layout).
struct TokenGrid {
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  std::vector<std::uint32_t> indices;

  std::uint32_t at(std::size_t frame, std::size_t pos) const {
    return indices[frame * tokens_per_frame + pos];
  }

  void validate(std::size_t vocab_size) const {
    if (indices.size() != frames * tokens_per_frame)
      throw ShapeError("TokenGrid: index count does not match frames * tokens_per_frame");
    for (std::uint32_t t : indices)
      if (t >= vocab_size)
        throw ValueError("TokenGrid: token " + std::to_string(t) + " outside vocabulary of " +
                         std::to_string(vocab_size));
  }
};

// ---------------------------------------------------------------------------
// Vector Quantization baseline
// ---------------------------------------------------------------------------

struct VqCodebook {
  Tensor entries;                    // [K x d], learnable
  std::vector<std::uint64_t> usage;  // per-entry hit counters

  VqCodebook() = default;
  VqCodebook(std::size_t k, std::size_t d, Rng& rng, double init_scale = 1.0)
      : entries(randn({k, d}, rng, /*requires_grad=*/true)), usage(k, 0) {
    for (double& v : entries.mutable_data()) v *= init_scale;
  }

  std::size_t size() const { return entries.defined() ? entries.dim(0) : 0; }
  std::size_t dim() const { return entries.dim(1); }

  void params(NamedParams& out, const std::string& prefix) const {
    append_param(out, prefix + ".entries", entries);
  }
};

/// Nearest entry by squared Euclidean distance; ties go to the lowest index.
inline std::size_t vq_nearest(const VqCodebook& book, const double* z) {
  if (book.size() == 0) throw StateError("vq_nearest: empty codebook");
  const std::size_t K = book.size(), d = book.dim();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const double* e = book.entries.data().data() + k * d;
    double dist = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = z[j] - e[j];
      dist += t * t;
    }
    if (dist < best_d) {
      best_d = dist;
      best = k;
    }
  }
  return best;
}

struct VqResult {
  std::vector<std::size_t> indices;  // one per row of z
  Tensor quantized;                  // straight-through values, shape of z
  Tensor commitment;                 // beta * || z - sg(e) ||^2
  Tensor loss;                       // codebook term + commitment, the training total
};

/// Quantize rows of z [n x d]. Emits the straight-through output (gradients
/// pass to z unchanged) plus the standard two-term VQ loss with the given
/// commitment weight beta. Usage counters are incremented per hit.
inline VqResult vq_quantize(const Tensor& z, VqCodebook& book, double beta = 0.25) {
  if (book.size() == 0) throw StateError("vq_quantize: empty codebook");
  if (z.rank() != 2 || z.dim(1) != book.dim())
    throw ShapeError("vq_quantize: z must be [n x d] with d == codebook dim");
  detail::check_input_finite(z, "vq_quantize");
  const std::size_t n = z.dim(0), d = z.dim(1);

  VqResult res;
  res.indices.resize(n);
  std::vector<int> idx_int(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.indices[i] = vq_nearest(book, z.data().data() + i * d);
    book.usage[res.indices[i]]++;
    idx_int[i] = static_cast<int>(res.indices[i]);
  }

  Tensor picked = embedding_rows(book.entries, idx_int);  // grads flow to entries
  Tensor z_const = clone_values(z);                       // stop-gradient copy of z
  Tensor picked_const = clone_values(picked);             // stop-gradient copy of entries

  // straight-through: value = e_k, gradient w.r.t. z = identity
  Tensor ste = add(z, sub(picked_const, clone_values(z)));
  res.quantized = ste;

  Tensor codebook_term = mse_loss(picked, z_const);            // || sg(z) - e ||^2
  res.commitment = scale(mse_loss(z, picked_const), beta);     // beta * || z - sg(e) ||^2
  res.loss = add(codebook_term, res.commitment);
  return res;
}

/// Fraction of the vocabulary observed at least once in the stream.
inline double codebook_usage(const std::vector<std::size_t>& stream, std::size_t vocab_size) {
  if (stream.empty()) throw ValueError("codebook_usage: empty stream");
  if (vocab_size == 0) throw ValueError("codebook_usage: vocab_size must be positive");
  std::vector<char> seen(vocab_size, 0);
  std::size_t distinct = 0;
  for (std::size_t c : stream) {
    if (c >= vocab_size) throw ValueError("codebook_usage: code out of range");
    if (!seen[c]) {
      seen[c] = 1;
      ++distinct;
    }
  }
  return static_cast<double>(distinct) / static_cast<double>(vocab_size);
}

/// Near-uniform level factorization whose product lands within the given
/// power-of-two bucket (used by the codebook-size sweep; exact vocab is
/// reported alongside).
inline std::vector<int> levels_for_vocab_bucket(std::size_t target_pow2) {
  switch (target_pow2) {
    case 128:  return {5, 5, 5};        // 125
    case 256:  return {6, 6, 7};        // 252
    case 512:  return {8, 8, 8};        // 512
    case 1024: return {4, 4, 8, 8};     // 1024
    case 2048: return {6, 6, 7, 8};     // 2016
    case 4096: return {8, 8, 8, 8};     // 4096
    default:
      throw ValueError("levels_for_vocab_bucket: unsupported bucket " + std::to_string(target_pow2));
  }
}

}  // namespace signvid::quant
