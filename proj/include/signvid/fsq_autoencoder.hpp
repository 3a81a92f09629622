#pragma once

#include "signvid/diffusion.hpp"
#include "signvid/quantize.hpp"

namespace signvid::fsqae {

using quant::FsqSpec;
using quant::TokenGrid;

struct FsqAeConfig {
  std::vector<int> levels{5, 5, 5, 5};
  std::size_t rate = 8;            // spatial compression factor
  std::size_t ch = 24;             // conv width
  std::size_t steps = 400;         // training steps (toy scale)
  double lr = 3e-3;
  std::uint64_t seed = 2;
  std::string quantizer = "fsq";   // "fsq" or "vq" (the baseline bottleneck)
  std::string dequant = "normalized";  // "normalized" ([-1,1]) or "raw" (code values)
};

/// Compression/quantization stage over frozen per-frame condition embeddings
/// e [F x D_e x h_e x w_e]. The spatial area shrinks by `rate` through
/// stride-2 stages that alternate between the two axes, so tokens-per-frame
/// is exactly (h_e * w_e) / rate for rate in {1, 2, 4, 8, 16}.
struct FsqAutoencoder {
  FsqAeConfig cfg;
  FsqSpec spec;
  std::size_t d_embed = 0;   // input channels D_e
  std::size_t h_in = 0, w_in = 0;
  std::size_t hq = 0, wq = 0;  // bottleneck raster

  Conv2d enc_in;
  std::vector<Conv2d> enc_down;  // one per factor-2 stage
  Conv2d enc_out;                // 1x1 to d channels
  Conv2d dec_in;                 // 1x1 from d channels
  std::vector<Conv2d> dec_up;
  Conv2d dec_out;
  std::vector<std::pair<std::size_t, std::size_t>> stage_strides;
  quant::VqCodebook vq;  // only for the "vq" bottleneck

  FsqAutoencoder(const FsqAeConfig& config, std::size_t d_embed_in, std::size_t h, std::size_t w,
                 Rng& rng)
      : cfg(config), spec(config.levels), d_embed(d_embed_in), h_in(h), w_in(w) {
    const std::size_t stages = [&] {
      switch (cfg.rate) {
        case 1: return std::size_t{0};
        case 2: return std::size_t{1};
        case 4: return std::size_t{2};
        case 8: return std::size_t{3};
        case 16: return std::size_t{4};
        default: throw ValueError("FsqAutoencoder: rate must be one of {1, 2, 4, 8, 16}");
      }
    }();
    hq = h;
    wq = w;
    for (std::size_t s = 0; s < stages; ++s) {
      const bool halve_h = (s % 2 == 0);
      if ((halve_h ? hq : wq) < 2)
        throw ValueError("FsqAutoencoder: rate exceeds the embedding raster");
      stage_strides.emplace_back(halve_h ? 2 : 1, halve_h ? 1 : 2);
      hq = halve_h ? hq / 2 : hq;
      wq = halve_h ? wq : wq / 2;
    }
    const std::size_t d = spec.channels();
    enc_in = Conv2d(d_embed, cfg.ch, 3, 1, 1, 1, rng);
    for (auto [sh, sw] : stage_strides) {
      Conv2d c(cfg.ch, cfg.ch, 3, 1, 1, 1, rng);
      c.sh = sh;
      c.sw = sw;
      enc_down.push_back(std::move(c));
    }
    enc_out = Conv2d(cfg.ch, d, 1, 1, 1, 0, rng);
    dec_in = Conv2d(d, cfg.ch, 1, 1, 1, 0, rng);
    for (std::size_t s = 0; s < stages; ++s) dec_up.emplace_back(cfg.ch, cfg.ch, 3, 1, 1, 1, rng);
    dec_out = Conv2d(cfg.ch, d_embed, 3, 1, 1, 1, rng);
    if (cfg.quantizer == "vq") vq = quant::VqCodebook(spec.vocab_size(), d, rng);
    else if (cfg.quantizer != "fsq") throw ValueError("FsqAutoencoder: unknown quantizer");
  }

  std::size_t tokens_per_frame() const { return hq * wq; }
  std::size_t vocab_size() const { return spec.vocab_size(); }

  /// Pre-quantization latent z [F x d x hq x wq].
  Tensor encode_continuous(const Tensor& e) const {
    if (e.rank() != 4 || e.dim(1) != d_embed || e.dim(2) != h_in || e.dim(3) != w_in)
      throw ShapeError("FsqAutoencoder: embedding shape does not match the trained config");
    Tensor h = silu(enc_in.forward(e));
    for (const Conv2d& c : enc_down) h = silu(c.forward(h));
    return enc_out.forward(h);
  }

  /// Channel-last view [F x S x d] of a [F x d x hq x wq] latent.
  Tensor to_channel_last(const Tensor& z) const {
    return permute3(reshape(z, {z.dim(0), spec.channels(), hq * wq}), 0, 2, 1);
  }

  Tensor from_channel_last(const Tensor& q, std::size_t frames) const {
    return reshape(permute3(q, 0, 2, 1), {frames, spec.channels(), hq, wq});
  }

  /// Map straight-through code values onto the decoder's input scale.
  Tensor codes_to_decoder_space(const Tensor& q) const {
    if (cfg.dequant == "raw") return q;
    std::vector<double> sc(q.size());
    const std::size_t d = spec.channels();
    for (std::size_t i = 0; i < sc.size(); ++i)
      sc[i] = 2.0 / (static_cast<double>(spec.levels[i % d]) - 1.0);
    return add_const(mul(q, Tensor::from(q.shape(), std::move(sc))), -1.0);
  }

  Tensor decode_from_values(const Tensor& values, std::size_t frames) const {
    Tensor h = silu(dec_in.forward(from_channel_last(values, frames)));
    for (std::size_t s = dec_up.size(); s-- > 0;) {
      auto [sh, sw] = stage_strides[s];
      h = silu(dec_up[dec_up.size() - 1 - s].forward(upsample_nearest(h, sh, sw)));
    }
    return dec_out.forward(h);
  }

  struct ForwardResult {
    Tensor recon;     // [F x D_e x h_e x w_e]
    Tensor aux_loss;  // VQ codebook/commitment terms (zero scalar for FSQ)
  };

  /// Differentiable training path (straight-through bottleneck).
  ForwardResult forward_train(const Tensor& e, quant::VqCodebook* vq_book = nullptr) {
    const std::size_t F = e.dim(0);
    Tensor z = to_channel_last(encode_continuous(e));  // [F x S x d]
    ForwardResult out;
    if (cfg.quantizer == "fsq") {
      Tensor q = quant::fsq_straight_through(z, spec);
      out.recon = decode_from_values(codes_to_decoder_space(q), F);
      out.aux_loss = Tensor::scalar(0.0);
    } else {
      quant::VqCodebook& book = vq_book ? *vq_book : vq;
      const std::size_t S = tokens_per_frame(), d = spec.channels();
      quant::VqResult vr = quant::vq_quantize(reshape(z, {F * S, d}), book);
      out.recon = decode_from_values(reshape(vr.quantized, {F, S, d}), F);
      out.aux_loss = vr.loss;
    }
    return out;
  }

  /// e -> packed vocabulary indices, deterministic (no tape involvement).
  TokenGrid encode_tokens(const Tensor& e) const {
    const std::size_t F = e.dim(0);
    Tensor z = to_channel_last(encode_continuous(e));
    TokenGrid grid;
    grid.frames = F;
    grid.tokens_per_frame = tokens_per_frame();
    grid.indices.reserve(F * grid.tokens_per_frame);
    const std::size_t d = spec.channels();
    if (cfg.quantizer == "fsq") {
      const std::vector<int> codes = quant::fsq_quantize(z, spec);
      for (std::size_t p = 0; p < F * grid.tokens_per_frame; ++p) {
        std::vector<int> cc(codes.begin() + static_cast<std::ptrdiff_t>(p * d),
                            codes.begin() + static_cast<std::ptrdiff_t>((p + 1) * d));
        grid.indices.push_back(static_cast<std::uint32_t>(quant::pack(cc, spec)));
      }
    } else {
      for (std::size_t p = 0; p < F * grid.tokens_per_frame; ++p)
        grid.indices.push_back(
            static_cast<std::uint32_t>(quant::vq_nearest(vq, z.data().data() + p * d)));
    }
    return grid;
  }

  /// Packed indices -> continuous embeddings in e-space.
  Tensor decode_tokens(const TokenGrid& grid) const {
    grid.validate(vocab_size());
    if (grid.tokens_per_frame != tokens_per_frame())
      throw ShapeError("decode_tokens: grid tokens-per-frame does not match the config");
    const std::size_t F = grid.frames, S = tokens_per_frame(), d = spec.channels();
    std::vector<double> vals(F * S * d);
    if (cfg.quantizer == "fsq") {
      for (std::size_t p = 0; p < F * S; ++p) {
        const std::vector<int> codes = quant::unpack(grid.indices[p], spec);
        for (std::size_t c = 0; c < d; ++c)
          vals[p * d + c] = cfg.dequant == "raw"
                                ? quant::fsq_dequantize_raw(codes[c], spec.levels[c])
                                : quant::fsq_dequantize_normalized(codes[c], spec.levels[c]);
      }
    } else {
      for (std::size_t p = 0; p < F * S; ++p)
        std::copy_n(vq.entries.data().data() + grid.indices[p] * d, d, vals.data() + p * d);
    }
    return decode_from_values(Tensor::from({F, S, d}, std::move(vals)), F);
  }

  NamedParams named_params() const {
    NamedParams out;
    enc_in.params(out, "fsqae.enc_in");
    for (std::size_t i = 0; i < enc_down.size(); ++i)
      enc_down[i].params(out, "fsqae.enc_down" + std::to_string(i));
    enc_out.params(out, "fsqae.enc_out");
    dec_in.params(out, "fsqae.dec_in");
    for (std::size_t i = 0; i < dec_up.size(); ++i)
      dec_up[i].params(out, "fsqae.dec_up" + std::to_string(i));
    dec_out.params(out, "fsqae.dec_out");
    if (cfg.quantizer == "vq") vq.params(out, "fsqae.vq");
    return out;
  }
};

// ---------------------------------------------------------------------------
// Training on frozen stage-I embeddings
// ---------------------------------------------------------------------------

/// Frozen embeddings for every corpus sample (computed forward-only).
inline std::vector<Tensor> frozen_embeddings(const diffusion::SignVideoDiffusion& stage1,
                                             const corpus::Corpus& data) {
  std::vector<Tensor> out;
  out.reserve(data.samples.size());
  for (const corpus::Sample& s : data.samples)
    out.push_back(stage1.encode_conditions(corpus::conditions_tensor(s.conditions)));
  return out;
}

struct FsqTrainResult {
  std::vector<double> losses;        // total objective per step
  std::vector<double> recon_losses;  // reconstruction term only
};

inline FsqTrainResult train_fsqae(FsqAutoencoder& model, const std::vector<Tensor>& embeddings,
                                  std::size_t steps, double lr) {
  if (embeddings.empty()) throw StateError("train_fsqae: no embeddings to train on");
  NamedParams np = model.named_params();
  auto params = param_tensors(np);
  Adam opt(lr);
  Rng rng = Rng(model.cfg.seed).split(0xae);
  FsqTrainResult res;
  res.losses.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    const Tensor& e = embeddings[rng.uniform_index(embeddings.size())];
    Tape tape;
    auto fwd = model.forward_train(e);
    Tensor recon_loss = mse_loss(fwd.recon, e);
    Tensor loss = add(recon_loss, fwd.aux_loss);
    res.losses.push_back(loss.item());
    res.recon_losses.push_back(recon_loss.item());
    tape.backward(loss);
    opt.step(params);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Token file format: u32 frame count, u32 tokens-per-frame, then packed
// vocabulary indices as little-endian u32, frame-major.
// ---------------------------------------------------------------------------

inline void write_tokens(const std::filesystem::path& path, const TokenGrid& grid) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_tokens: cannot open " + path.string());
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
  };
  put_u32(static_cast<std::uint32_t>(grid.frames));
  put_u32(static_cast<std::uint32_t>(grid.tokens_per_frame));
  for (std::uint32_t t : grid.indices) put_u32(t);
  if (!f) throw IoError("write_tokens: write failed");
}

inline TokenGrid read_tokens(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StateError("read_tokens: missing file " + path.string());
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw IoError("read_tokens: truncated file " + path.string());
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  };
  TokenGrid grid;
  grid.frames = get_u32();
  grid.tokens_per_frame = get_u32();
  grid.indices.resize(grid.frames * grid.tokens_per_frame);
  for (auto& t : grid.indices) t = get_u32();
  char extra;
  if (f.read(&extra, 1)) throw IoError("read_tokens: trailing bytes in " + path.string());
  return grid;
}

}  // namespace signvid::fsqae
