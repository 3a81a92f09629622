#pragma once

#include "signvid/corpus.hpp"
#include "signvid/nn.hpp"
#include "signvid/quantize.hpp"

namespace signvid::diffusion {

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

/// Linear-beta schedule; alpha_bar(t) is the cumulative product, with
/// alpha_bar(0) == 1 (the clean sample).
class NoiseSchedule {
 public:
  NoiseSchedule(std::size_t steps, double beta_min, double beta_max) : T_(steps) {
    if (steps < 1) throw ValueError("NoiseSchedule: need at least one step");
    if (beta_min <= 0 || beta_max >= 1 || beta_min > beta_max)
      throw ValueError("NoiseSchedule: betas must satisfy 0 < beta_min <= beta_max < 1");
    alpha_bar_.resize(steps + 1);
    alpha_bar_[0] = 1.0;
    for (std::size_t t = 1; t <= steps; ++t) {
      const double beta =
          beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) /
                         std::max<double>(1.0, static_cast<double>(steps - 1));
      alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta);
    }
  }

  std::size_t steps() const { return T_; }

  double alpha_bar(std::size_t t) const {
    if (t > T_) throw ValueError("NoiseSchedule: t out of range");
    return alpha_bar_[t];
  }

 private:
  std::size_t T_;
  std::vector<double> alpha_bar_;
};

/// Z_t = sqrt(alpha_bar_t) * Z_0 + sqrt(1 - alpha_bar_t) * eps, 1 <= t <= T.
inline Tensor add_noise(const Tensor& z0, const Tensor& eps, std::size_t t,
                        const NoiseSchedule& schedule) {
  if (z0.shape() != eps.shape()) throw ShapeError("add_noise: shapes differ");
  if (t < 1 || t > schedule.steps()) throw ValueError("add_noise: t out of range [1, T]");
  const double ab = schedule.alpha_bar(t);
  return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

// ---------------------------------------------------------------------------
// Attention wrappers over [F x C x H x W] feature maps
// ---------------------------------------------------------------------------

/// Self-attention across the spatial positions of each frame. When reference
/// tokens are supplied they are concatenated onto the keys/values (queries
/// still come from the frame itself).
inline Tensor spatial_attention(const Tensor& x, const Attention& attn, const Tensor* ref_tokens) {
  const std::size_t F = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor tokens = permute3(reshape(x, {F, C, HW}), 0, 2, 1);  // [F, HW, C]
  Tensor out;
  if (ref_tokens) {
    Tensor kv = concat3_dim1(tokens, *ref_tokens);
    out = attn.forward(tokens, kv);
  } else {
    out = attn.self_forward(tokens);
  }
  return add(x, reshape(permute3(out, 0, 2, 1), x.shape()));
}

/// Attention across the frame axis, independently at each spatial position.
inline Tensor temporal_attention(const Tensor& x, const Attention& attn) {
  const std::size_t F = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor tokens = permute3(reshape(x, {F, C, HW}), 2, 0, 1);  // [HW, F, C]
  Tensor out = attn.self_forward(tokens);
  return add(x, reshape(permute3(out, 1, 2, 0), x.shape()));
}

/// Feature map -> [F x HW x C] token view (for reference concatenation).
inline Tensor to_tokens(const Tensor& x) {
  return permute3(reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)}), 0, 2, 1);
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

struct ResnetBlock {
  Conv2d conv1, conv2;
  Linear temb_proj;  // timestep embedding -> per-channel shift

  ResnetBlock() = default;
  ResnetBlock(std::size_t ch, std::size_t temb_dim, Rng& rng)
      : conv1(ch, ch, 3, 1, 1, 1, rng), conv2(ch, ch, 3, 1, 1, 1, rng), temb_proj(temb_dim, ch, rng) {}

  Tensor forward(const Tensor& x, const Tensor& temb) const {
    Tensor h = conv1.forward(x);
    h = add_chanvec(h, reshape(temb_proj.forward(temb), {h.dim(1)}));
    h = silu(h);
    h = conv2.forward(h);
    return add(x, h);
  }

  void params(NamedParams& out, const std::string& prefix) const {
    conv1.params(out, prefix + ".conv1");
    conv2.params(out, prefix + ".conv2");
    temb_proj.params(out, prefix + ".temb");
  }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DiffusionConfig {
  std::size_t steps = 600;        // training steps (toy scale)
  double lr = 2e-3;               // toy-scale optimizer step
  std::size_t d_embed = 8;        // condition embedding channels
  std::size_t ch1 = 16;           // denoiser channels at 16x16
  std::size_t ch2 = 32;           // denoiser channels at 8x8
  std::size_t temb_dim = 32;
  std::size_t t_train = 1000;     // diffusion steps T
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  double cond_aug_p = 0.001;      // condition augmentation probability
  double cfg_dropout = 0.1;       // null-condition substitution rate
  std::uint64_t seed = 1;
  std::string video_ae = "identity";  // "identity" or "tiny"
};

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

/// Conv stack with SiLU activations; two of the four layers downsample, so
/// the raster shrinks 4x overall (16x16 conditions -> 4x4 embeddings).
struct MultiConditionEncoder {
  Conv2d c1, c2, c3, c4;
  std::size_t d_embed = 0;

  MultiConditionEncoder() = default;
  MultiConditionEncoder(std::size_t cond_channels, std::size_t ch, std::size_t d_out, Rng& rng)
      : c1(cond_channels, ch, 3, 1, 1, 1, rng),
        c2(ch, ch, 3, 2, 2, 1, rng),
        c3(ch, ch, 3, 1, 1, 1, rng),
        c4(ch, d_out, 3, 2, 2, 1, rng),
        d_embed(d_out) {}

  Tensor forward(const Tensor& cond) const {
    Tensor h = silu(c1.forward(cond));
    h = silu(c2.forward(h));
    h = silu(c3.forward(h));
    return c4.forward(h);  // linear output head
  }

  void params(NamedParams& out, const std::string& prefix) const {
    c1.params(out, prefix + ".c1");
    c2.params(out, prefix + ".c2");
    c3.params(out, prefix + ".c3");
    c4.params(out, prefix + ".c4");
  }
};

/// Reference feature extractor; emits token views at the two attention
/// resolutions, shared identically by every frame.
struct ReferenceEncoder {
  Conv2d c1, c2, c3;

  ReferenceEncoder() = default;
  ReferenceEncoder(std::size_t ch1, std::size_t ch2, Rng& rng)
      : c1(1, ch1, 3, 2, 2, 1, rng), c2(ch1, ch1, 3, 1, 1, 1, rng), c3(ch1, ch2, 3, 2, 2, 1, rng) {}

  struct Features {
    Tensor feat16;  // [1 x ch1 x 16 x 16]
    Tensor feat8;   // [1 x ch2 x 8 x 8]
  };

  Features forward(const Tensor& reference) const {
    Features f;
    Tensor h = silu(c1.forward(reference));
    f.feat16 = silu(c2.forward(h));
    f.feat8 = c3.forward(f.feat16);
    return f;
  }

  void params(NamedParams& out, const std::string& prefix) const {
    c1.params(out, prefix + ".c1");
    c2.params(out, prefix + ".c2");
    c3.params(out, prefix + ".c3");
  }
};

/// Guidance network over the condition embeddings: conv blocks plus temporal
/// attention, emitting features that are added into the denoiser's
/// downsampling blocks.
struct ConditionGuider {
  Conv2d in_conv, up8_conv, up16_conv;
  Attention tattn;

  ConditionGuider() = default;
  ConditionGuider(std::size_t d_embed, std::size_t ch1, std::size_t ch2, Rng& rng)
      : in_conv(d_embed, ch2, 3, 1, 1, 1, rng),
        up8_conv(ch2, ch2, 3, 1, 1, 1, rng),
        up16_conv(ch2, ch1, 3, 1, 1, 1, rng),
        tattn(ch2, rng) {}

  struct Features {
    Tensor g8;   // [F x ch2 x 8 x 8]
    Tensor g16;  // [F x ch1 x 16 x 16]
  };

  Features forward(const Tensor& e) const {
    Tensor h = silu(in_conv.forward(e));          // [F x ch2 x 4 x 4]
    h = temporal_attention(h, tattn);
    Features f;
    f.g8 = silu(up8_conv.forward(upsample_nearest(h, 2, 2)));
    f.g16 = up16_conv.forward(upsample_nearest(f.g8, 2, 2));
    return f;
  }

  void params(NamedParams& out, const std::string& prefix) const {
    in_conv.params(out, prefix + ".in");
    up8_conv.params(out, prefix + ".up8");
    up16_conv.params(out, prefix + ".up16");
    tattn.params(out, prefix + ".tattn");
  }
};

/// Two-level UNet denoiser. Each level runs a resnet block; the 8x8 level
/// adds spatial self-attention (with reference tokens concatenated onto the
/// keys/values) and temporal attention across frames.
struct DenoiserNet {
  Conv2d conv_in;         // 32x32, 1 -> ch1
  Conv2d down1;           // stride 2 -> 16x16
  ResnetBlock res16;
  Conv2d down2;           // stride 2 -> 8x8, ch1 -> ch2
  ResnetBlock res8;
  Attention sattn8, tattn8;
  ResnetBlock mid;
  Conv2d up_to16;         // ch2 -> ch1 after upsample
  ResnetBlock res16_up;
  Conv2d up_to32;         // ch1 -> ch1 after upsample
  Conv2d conv_out;        // ch1 -> 1
  Linear temb1, temb2;    // timestep MLP

  DenoiserNet() = default;
  DenoiserNet(std::size_t ch1, std::size_t ch2, std::size_t temb_dim, Rng& rng)
      : conv_in(1, ch1, 3, 1, 1, 1, rng),
        down1(ch1, ch1, 3, 2, 2, 1, rng),
        res16(ch1, temb_dim, rng),
        down2(ch1, ch2, 3, 2, 2, 1, rng),
        res8(ch2, temb_dim, rng),
        sattn8(ch2, rng),
        tattn8(ch2, rng),
        mid(ch2, temb_dim, rng),
        up_to16(ch2, ch1, 3, 1, 1, 1, rng),
        res16_up(ch1, temb_dim, rng),
        up_to32(ch1, ch1, 3, 1, 1, 1, rng),
        conv_out(ch1, 1, 3, 1, 1, 1, rng),
        temb1(temb_dim, temb_dim, rng),
        temb2(temb_dim, temb_dim, rng) {}

  Tensor timestep_embedding(std::size_t t, std::size_t dim) const {
    Tensor emb = sinusoidal_embedding(t, dim);
    return temb2.forward(silu(temb1.forward(emb)));
  }

  /// ref8_tokens: [F x 64 x ch2] reference tokens for the 8x8 attention.
  /// g16/g8: condition guidance features added into the down path.
  Tensor forward(const Tensor& z_t, std::size_t t, const Tensor& ref8_tokens, const Tensor& g16,
                 const Tensor& g8) const {
    const Tensor temb = timestep_embedding(t, temb1.w.dim(0));
    Tensor h0 = conv_in.forward(z_t);                     // [F x ch1 x 32 x 32]
    Tensor d1 = silu(down1.forward(h0));                  // [F x ch1 x 16 x 16]
    d1 = res16.forward(add(d1, g16), temb);
    Tensor d2 = silu(down2.forward(d1));                  // [F x ch2 x 8 x 8]
    d2 = res8.forward(add(d2, g8), temb);
    d2 = spatial_attention(d2, sattn8, &ref8_tokens);
    d2 = temporal_attention(d2, tattn8);
    d2 = mid.forward(d2, temb);
    Tensor u1 = silu(up_to16.forward(upsample_nearest(d2, 2, 2)));  // [F x ch1 x 16 x 16]
    u1 = res16_up.forward(add(u1, d1), temb);
    Tensor u0 = silu(up_to32.forward(upsample_nearest(u1, 2, 2)));  // [F x ch1 x 32 x 32]
    return conv_out.forward(add(u0, h0));
  }

  void params(NamedParams& out, const std::string& prefix) const {
    conv_in.params(out, prefix + ".conv_in");
    down1.params(out, prefix + ".down1");
    res16.params(out, prefix + ".res16");
    down2.params(out, prefix + ".down2");
    res8.params(out, prefix + ".res8");
    sattn8.params(out, prefix + ".sattn8");
    tattn8.params(out, prefix + ".tattn8");
    mid.params(out, prefix + ".mid");
    up_to16.params(out, prefix + ".up16");
    res16_up.params(out, prefix + ".res16up");
    up_to32.params(out, prefix + ".up32");
    conv_out.params(out, prefix + ".conv_out");
    temb1.params(out, prefix + ".temb1");
    temb2.params(out, prefix + ".temb2");
  }
};

/// Optional tiny video autoencoder (config flag); identity mode bypasses it.
struct VideoAutoencoder {
  Conv2d enc1, enc2, dec1, dec2;

  VideoAutoencoder() = default;
  explicit VideoAutoencoder(Rng& rng)
      : enc1(1, 8, 3, 2, 2, 1, rng),
        enc2(8, 4, 3, 1, 1, 1, rng),
        dec1(4, 8, 3, 1, 1, 1, rng),
        dec2(8, 1, 3, 1, 1, 1, rng) {}

  Tensor encode(const Tensor& x) const { return enc2.forward(silu(enc1.forward(x))); }
  Tensor decode(const Tensor& z) const {
    return dec2.forward(silu(dec1.forward(upsample_nearest(z, 2, 2))));
  }

  void params(NamedParams& out, const std::string& prefix) const {
    enc1.params(out, prefix + ".enc1");
    enc2.params(out, prefix + ".enc2");
    dec1.params(out, prefix + ".dec1");
    dec2.params(out, prefix + ".dec2");
  }
};

// ---------------------------------------------------------------------------
// Condition augmentation
// ---------------------------------------------------------------------------

/// Replace each frame of e [F x D...] with a uniformly drawn donor frame
/// with probability p. Donors are single-frame tensors of matching shape.
/// Gradients only flow through the frames that were kept.
inline Tensor condition_augment(const Tensor& e, double p, const std::vector<Tensor>& donors,
                                Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ValueError("condition_augment: p must be in [0, 1]");
  if (p == 0.0) return e;
  if (donors.empty()) throw StateError("condition_augment: empty donor pool");
  const std::size_t F = e.dim(0);
  const std::size_t row = e.size() / F;
  std::vector<char> mask(F, 0);
  std::vector<double> repl(e.size(), 0.0);
  bool any = false;
  for (std::size_t f = 0; f < F; ++f) {
    if (rng.uniform() < p) {
      mask[f] = 1;
      any = true;
      const Tensor& donor = donors[rng.uniform_index(donors.size())];
      if (donor.size() != row) throw ShapeError("condition_augment: donor frame shape mismatch");
      std::copy_n(donor.data().data(), row, repl.data() + f * row);
    }
  }
  if (!any) return e;
  Tensor flat = reshape(e, {F, row});
  Tensor out = masked_replace_rows(flat, mask, Tensor::from({F, row}, std::move(repl)));
  return reshape(out, e.shape());
}

// ---------------------------------------------------------------------------
// Full stage-I model
// ---------------------------------------------------------------------------

struct SignVideoDiffusion {
  DiffusionConfig cfg;
  MultiConditionEncoder cond_encoder;
  ConditionGuider guider;
  ReferenceEncoder ref_encoder;
  DenoiserNet denoiser;
  Tensor null_embedding;  // learned CFG null condition, [1 x D_e x 4 x 4]
  VideoAutoencoder video_ae;  // used only in "tiny" mode
  NoiseSchedule schedule;

  explicit SignVideoDiffusion(const DiffusionConfig& config, std::size_t cond_channels, Rng& rng)
      : cfg(config),
        cond_encoder(cond_channels, config.ch1, config.d_embed, rng),
        guider(config.d_embed, config.ch1, config.ch2, rng),
        ref_encoder(config.ch1, config.ch2, rng),
        denoiser(config.ch1, config.ch2, config.temb_dim, rng),
        null_embedding(randn({1, config.d_embed, 4, 4}, rng, true)),
        video_ae(rng),
        schedule(config.t_train, config.beta_min, config.beta_max) {}

  NamedParams named_params() const {
    NamedParams out;
    cond_encoder.params(out, "cond_encoder");
    guider.params(out, "guider");
    ref_encoder.params(out, "ref_encoder");
    denoiser.params(out, "denoiser");
    append_param(out, "null_embedding", null_embedding);
    if (cfg.video_ae == "tiny") video_ae.params(out, "video_ae");
    return out;
  }

  Tensor encode_conditions(const Tensor& cond) const { return cond_encoder.forward(cond); }

  Tensor encode_video(const Tensor& pixels) const {
    return cfg.video_ae == "tiny" ? video_ae.encode(pixels) : pixels;
  }

  Tensor decode_video(const Tensor& latents) const {
    return cfg.video_ae == "tiny" ? video_ae.decode(latents) : latents;
  }

  /// Noise prediction for F frames with reference conditioning and guidance.
  Tensor predict_noise(const Tensor& z_t, std::size_t t, const Tensor& reference,
                       const Tensor& e) const {
    const std::size_t F = z_t.dim(0);
    ReferenceEncoder::Features rf = ref_encoder.forward(reference);
    Tensor ref8 = tile_batch(to_tokens(rf.feat8), F);  // [F x 64 x ch2]
    ConditionGuider::Features gf = guider.forward(e);
    return denoiser.forward(z_t, t, ref8, gf.g16, gf.g8);
  }

  Tensor tiled_null(std::size_t frames) const { return tile_batch(null_embedding, frames); }
};

/// Extended denoising objective for one video: MSE between predicted and
/// true noise, with condition augmentation applied to the embeddings first.
inline Tensor denoising_loss(const SignVideoDiffusion& model, const Tensor& video_latents,
                             const Tensor& reference, const Tensor& cond_embeddings, std::size_t t,
                             const Tensor& eps, double aug_p, const std::vector<Tensor>& donors,
                             Rng& rng) {
  Tensor e = aug_p > 0.0 ? condition_augment(cond_embeddings, aug_p, donors, rng) : cond_embeddings;
  Tensor z_t = add_noise(video_latents, eps, t, model.schedule);
  Tensor pred = model.predict_noise(z_t, t, reference, e);
  return mse_loss(pred, eps);
}

// ---------------------------------------------------------------------------
// DDIM sampling with classifier-free guidance
// ---------------------------------------------------------------------------

/// Deterministic DDIM (eta = 0). The predictor maps (x_t, t) -> estimated
/// noise; sampling starts from seeded Gaussian noise.
inline Tensor ddim_sample_with(const NoiseSchedule& schedule, const Shape& shape, std::size_t steps,
                               const std::function<Tensor(const Tensor&, std::size_t)>& predictor,
                               Rng& rng) {
  const std::size_t T = schedule.steps();
  if (steps < 1 || steps > T) throw ValueError("ddim_sample: steps must be in [1, T]");
  Tensor x = randn(shape, rng);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = T - (i * T) / steps;
    const std::size_t t_prev = (i + 1 < steps) ? T - ((i + 1) * T) / steps : 0;
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    Tensor eps_hat = predictor(x, t);
    // x0 = (x - sqrt(1 - ab) * eps) / sqrt(ab); x_prev = sqrt(ab') x0 + sqrt(1 - ab') eps
    Tensor x0 = scale(sub(x, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
    x = add(scale(x0, std::sqrt(ab_prev)), scale(eps_hat, std::sqrt(1.0 - ab_prev)));
  }
  return x;
}

/// CFG combination: eps = eps_uncond + s * (eps_cond - eps_uncond).
inline Tensor ddim_sample(const SignVideoDiffusion& model, const Tensor& reference, const Tensor& e,
                          std::size_t steps, double guidance_scale, std::uint64_t seed) {
  if (guidance_scale < 0.0) throw ValueError("ddim_sample: guidance scale must be >= 0");
  const std::size_t F = e.dim(0);
  const std::size_t H = reference.dim(2), W = reference.dim(3);
  const Shape latent_shape = model.cfg.video_ae == "tiny" ? Shape{F, 4, H / 2, W / 2}
                                                          : Shape{F, 1, H, W};
  Tensor e_null = model.tiled_null(F);
  auto predictor = [&](const Tensor& x, std::size_t t) {
    Tensor eps_c = model.predict_noise(x, t, reference, e);
    if (guidance_scale == 1.0) return eps_c;
    Tensor eps_u = model.predict_noise(x, t, reference, e_null);
    return add(eps_u, scale(sub(eps_c, eps_u), guidance_scale));
  };
  Rng rng(seed);
  return ddim_sample_with(model.schedule, latent_shape, steps, predictor, rng);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  std::vector<double> losses;
};

/// One donor frame embedding drawn fresh from the whole dataset (encoded
/// forward-only, so donors are constants).
inline Tensor draw_donor_embedding(const SignVideoDiffusion& model, const corpus::Corpus& data,
                                   Rng& rng) {
  const corpus::Sample& s = data.samples[rng.uniform_index(data.samples.size())];
  const std::size_t f = rng.uniform_index(s.conditions.frames);
  const std::size_t chw = s.conditions.channels * s.conditions.h * s.conditions.w;
  Tensor one = Tensor::from({1, s.conditions.channels, s.conditions.h, s.conditions.w},
                            std::vector<double>(s.conditions.data.begin() + static_cast<std::ptrdiff_t>(f * chw),
                                                s.conditions.data.begin() + static_cast<std::ptrdiff_t>((f + 1) * chw)));
  return model.encode_conditions(one);
}

inline TrainResult train_diffusion(SignVideoDiffusion& model, const corpus::Corpus& data,
                                   std::size_t steps, double lr) {
  if (data.samples.empty()) throw StateError("train_diffusion: empty corpus");
  NamedParams np = model.named_params();
  auto params = param_tensors(np);
  Adam opt(lr);
  Rng rng = Rng(model.cfg.seed).split(0xd1ff);
  // augmentation draws live on their own per-step streams so that runs with
  // different cond_aug_p share identical sample/timestep/noise sequences
  Rng aug_master = Rng(model.cfg.seed).split(0xa06);
  TrainResult result;
  result.losses.reserve(steps);

  for (std::size_t step = 0; step < steps; ++step) {
    const corpus::Sample& s = data.samples[rng.uniform_index(data.samples.size())];
    const std::size_t F = s.video.frames;
    Tensor pixels = corpus::video_tensor(s.video);
    Tensor reference = corpus::video_tensor(s.reference);
    Tensor cond = corpus::conditions_tensor(s.conditions);
    const std::size_t t = 1 + rng.uniform_index(model.schedule.steps());

    Tape tape;
    Tensor z0 = model.encode_video(pixels);
    Tensor eps = randn(z0.shape(), rng);
    const bool null_branch = rng.uniform() < model.cfg.cfg_dropout;
    Tensor e = null_branch ? model.tiled_null(F) : model.encode_conditions(cond);
    const double aug_p = null_branch ? 0.0 : model.cfg.cond_aug_p;
    if (aug_p > 0.0) {
      Rng aug_rng = aug_master.split(step);
      Rng probe = aug_rng;  // same stream: peek whether any frame fires
      bool any = false;
      for (std::size_t f = 0; f < F; ++f) any = (probe.uniform() < aug_p) || any;
      if (any) {
        Rng donor_rng = aug_master.split(0xd000u + step);
        std::vector<Tensor> donors{draw_donor_embedding(model, data, donor_rng)};
        e = condition_augment(e, aug_p, donors, aug_rng);
      }
    }
    Tensor z_t = add_noise(z0, eps, t, model.schedule);
    Tensor loss = mse_loss(model.predict_noise(z_t, t, reference, e), eps);
    result.losses.push_back(loss.item());
    tape.backward(loss);
    opt.step(params);
  }
  return result;
}

/// Train the tiny video autoencoder alone (used when video_ae == "tiny").
inline std::vector<double> train_video_ae(VideoAutoencoder& ae, const corpus::Corpus& data,
                                          std::size_t steps, double lr, std::uint64_t seed) {
  NamedParams np;
  ae.params(np, "video_ae");
  auto params = param_tensors(np);
  Adam opt(lr);
  Rng rng(seed);
  std::vector<double> losses;
  for (std::size_t step = 0; step < steps; ++step) {
    const corpus::Sample& s = data.samples[rng.uniform_index(data.samples.size())];
    Tensor pixels = corpus::video_tensor(s.video);
    Tape tape;
    Tensor loss = mse_loss(ae.decode(ae.encode(pixels)), pixels);
    losses.push_back(loss.item());
    tape.backward(loss);
    opt.step(params);
  }
  return losses;
}

}  // namespace signvid::diffusion
