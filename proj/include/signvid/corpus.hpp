#pragma once

#include <numeric>

#include "signvid/checkpoint.hpp"
#include "signvid/tensor.hpp"

#include <json.hpp>

namespace signvid::corpus {

struct CorpusParams {
  std::uint64_t seed = 7;
  std::size_t v_gloss = 10;
  std::size_t n_sentences = 64;
  std::size_t n_identities = 3;
  std::size_t min_sentence = 1;
  std::size_t max_sentence = 3;
  std::size_t joints = 8;
  std::size_t hand_params = 4;
  std::size_t cond_size = 16;   // condition raster, h == w
  std::size_t video_size = 32;  // video raster, h == w
  std::size_t min_traj = 4;     // gloss trajectory length bounds (frames)
  std::size_t max_traj = 12;
  std::size_t blend_frames = 2;  // co-articulation blend between glosses
  double delta_max = 0.08;       // max per-frame joint displacement
  double blob_sigma_cond = 1.0;  // Gaussian blob stddev, condition pixels
  double blob_sigma_video = 1.6;
};

/// F frames x J joints x 2 normalized coordinates, plus H hand parameters
/// per frame. Coordinates live in [0, 1].
struct PoseSequence {
  std::size_t frames = 0, joints = 0, hands = 0;
  std::vector<double> xy;    // frames * joints * 2, (x, y) pairs
  std::vector<double> hand;  // frames * hands

  double x(std::size_t f, std::size_t j) const { return xy[(f * joints + j) * 2]; }
  double y(std::size_t f, std::size_t j) const { return xy[(f * joints + j) * 2 + 1]; }
};

/// F frames x C channels x h x w raster in [0, 1]. Pose channels carry one
/// Gaussian heatmap per joint; hand channels carry constant-valued patches.
struct ConditionSequence {
  std::size_t frames = 0, channels = 0, h = 0, w = 0;
  std::vector<double> data;
};

struct VideoClip {
  std::size_t frames = 0, h = 0, w = 0;
  std::vector<double> pixels;  // frames * h * w, single channel, [0, 1]
};

/// Appearance parameters: per-joint intensity and offset, background level,
/// hand-marker gain. Conditions never see any of this.
struct Identity {
  std::vector<double> gain;   // per joint, [0.55, 1.0]
  std::vector<double> off_x;  // per joint, normalized units
  std::vector<double> off_y;
  double background = 0.0;
  double hand_gain = 1.0;
};

struct Sample {
  std::vector<int> sentence;
  std::size_t identity_id = 0;
  PoseSequence poses;
  ConditionSequence conditions;
  VideoClip video;
  VideoClip reference;  // canonical rest pose rendered with the same identity
};

struct Corpus {
  CorpusParams params;
  std::vector<PoseSequence> gloss_bank;  // fixed trajectory per gloss
  std::vector<Identity> identities;
  std::vector<Sample> samples;
};

// ---------------------------------------------------------------------------
// Trajectory generation
// ---------------------------------------------------------------------------

namespace detail {

inline double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

/// Sample a closed-form spline through `ctrl` at n uniformly spaced params.
inline std::vector<double> spline_samples(const std::vector<double>& ctrl, std::size_t n) {
  const std::size_t segs = ctrl.size() - 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (n == 1) ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double s = std::min(u * static_cast<double>(segs), static_cast<double>(segs) - 1e-9);
    const std::size_t k = static_cast<std::size_t>(s);
    const double t = s - static_cast<double>(k);
    const double p0 = ctrl[k == 0 ? 0 : k - 1];
    const double p1 = ctrl[k];
    const double p2 = ctrl[k + 1];
    const double p3 = ctrl[std::min(k + 2, ctrl.size() - 1)];
    out[i] = catmull_rom(p0, p1, p2, p3, t);
  }
  return out;
}

inline void enforce_displacement_bound(PoseSequence& p, double delta_max) {
  if (p.frames < 2) return;
  double worst = 0.0;
  for (std::size_t f = 1; f < p.frames; ++f)
    for (std::size_t j = 0; j < p.joints; ++j) {
      const double dx = p.x(f, j) - p.x(f - 1, j);
      const double dy = p.y(f, j) - p.y(f - 1, j);
      worst = std::max(worst, std::hypot(dx, dy));
    }
  if (worst <= delta_max) return;
  const double k = 0.95 * delta_max / worst;
  // contract each joint path toward its temporal mean
  for (std::size_t j = 0; j < p.joints; ++j) {
    double mx = 0, my = 0;
    for (std::size_t f = 0; f < p.frames; ++f) {
      mx += p.x(f, j);
      my += p.y(f, j);
    }
    mx /= static_cast<double>(p.frames);
    my /= static_cast<double>(p.frames);
    for (std::size_t f = 0; f < p.frames; ++f) {
      p.xy[(f * p.joints + j) * 2] = mx + (p.x(f, j) - mx) * k;
      p.xy[(f * p.joints + j) * 2 + 1] = my + (p.y(f, j) - my) * k;
    }
  }
}

}  // namespace detail

/// Fixed smooth trajectory for one gloss: a seeded spline per joint plus a
/// slow sinusoid per hand parameter.
inline PoseSequence make_gloss_trajectory(const CorpusParams& params, Rng rng) {
  PoseSequence p;
  p.joints = params.joints;
  p.hands = params.hand_params;
  p.frames = static_cast<std::size_t>(
      rng.uniform_int(static_cast<int>(params.min_traj), static_cast<int>(params.max_traj)));
  p.xy.resize(p.frames * p.joints * 2);
  p.hand.resize(p.frames * p.hands);
  for (std::size_t j = 0; j < p.joints; ++j) {
    std::vector<double> cx(4), cy(4);
    for (int c = 0; c < 4; ++c) {
      cx[static_cast<std::size_t>(c)] = rng.uniform(0.2, 0.8);
      cy[static_cast<std::size_t>(c)] = rng.uniform(0.2, 0.8);
    }
    const auto sx = detail::spline_samples(cx, p.frames);
    const auto sy = detail::spline_samples(cy, p.frames);
    for (std::size_t f = 0; f < p.frames; ++f) {
      p.xy[(f * p.joints + j) * 2] = std::clamp(sx[f], 0.05, 0.95);
      p.xy[(f * p.joints + j) * 2 + 1] = std::clamp(sy[f], 0.05, 0.95);
    }
  }
  detail::enforce_displacement_bound(p, params.delta_max);
  for (std::size_t hset = 0; hset < p.hands; ++hset) {
    const double omega = rng.uniform(0.2, 0.9);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t f = 0; f < p.frames; ++f)
      p.hand[f * p.hands + hset] = 0.5 + 0.45 * std::sin(omega * static_cast<double>(f) + phase);
  }
  return p;
}

/// Concatenate gloss trajectories with linear blend frames between them.
inline PoseSequence concat_with_blends(const std::vector<PoseSequence>& parts, std::size_t blend) {
  if (parts.empty()) throw ValueError("concat_with_blends: empty sentence");
  PoseSequence out;
  out.joints = parts[0].joints;
  out.hands = parts[0].hands;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.frames;
  total += blend * (parts.size() - 1);
  out.frames = total;
  out.xy.reserve(total * out.joints * 2);
  out.hand.reserve(total * out.hands);

  auto push_frame = [&](const PoseSequence& src, std::size_t f) {
    out.xy.insert(out.xy.end(), src.xy.begin() + static_cast<std::ptrdiff_t>(f * src.joints * 2),
                  src.xy.begin() + static_cast<std::ptrdiff_t>((f + 1) * src.joints * 2));
    out.hand.insert(out.hand.end(), src.hand.begin() + static_cast<std::ptrdiff_t>(f * src.hands),
                    src.hand.begin() + static_cast<std::ptrdiff_t>((f + 1) * src.hands));
  };

  for (std::size_t s = 0; s < parts.size(); ++s) {
    const PoseSequence& p = parts[s];
    for (std::size_t f = 0; f < p.frames; ++f) push_frame(p, f);
    if (s + 1 < parts.size()) {
      const PoseSequence& q = parts[s + 1];
      for (std::size_t b = 1; b <= blend; ++b) {
        const double a = static_cast<double>(b) / static_cast<double>(blend + 1);
        for (std::size_t j = 0; j < out.joints; ++j) {
          const double x = (1.0 - a) * p.x(p.frames - 1, j) + a * q.x(0, j);
          const double y = (1.0 - a) * p.y(p.frames - 1, j) + a * q.y(0, j);
          out.xy.push_back(x);
          out.xy.push_back(y);
        }
        for (std::size_t hh = 0; hh < out.hands; ++hh)
          out.hand.push_back((1.0 - a) * p.hand[(p.frames - 1) * p.hands + hh] + a * q.hand[hh]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline void splat_blob(double* img, std::size_t h, std::size_t w, double cx, double cy, double sigma,
                       double amp) {
  // cx, cy in pixel units
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t yy = 0; yy < h; ++yy)
    for (std::size_t xx = 0; xx < w; ++xx) {
      const double dx = static_cast<double>(xx) - cx;
      const double dy = static_cast<double>(yy) - cy;
      img[yy * w + xx] += amp * std::exp(-(dx * dx + dy * dy) * inv);
    }
}

}  // namespace detail

/// Appearance-free rasterization: joint heatmap channels + hand patch
/// channels. Identity never enters here.
inline ConditionSequence render_conditions(const PoseSequence& poses, const CorpusParams& params) {
  ConditionSequence c;
  c.frames = poses.frames;
  c.channels = params.joints + params.hand_params;
  c.h = c.w = params.cond_size;
  c.data.assign(c.frames * c.channels * c.h * c.w, 0.0);
  const double px = static_cast<double>(params.cond_size - 1);
  for (std::size_t f = 0; f < c.frames; ++f) {
    for (std::size_t j = 0; j < params.joints; ++j) {
      double* ch = c.data.data() + ((f * c.channels + j) * c.h) * c.w;
      detail::splat_blob(ch, c.h, c.w, poses.x(f, j) * px, poses.y(f, j) * px,
                         params.blob_sigma_cond, 1.0);
    }
    // hand channel i: centered patch filled with the parameter value
    const std::size_t p0 = params.cond_size / 4, p1 = params.cond_size - params.cond_size / 4;
    for (std::size_t i = 0; i < params.hand_params; ++i) {
      double* ch = c.data.data() + ((f * c.channels + params.joints + i) * c.h) * c.w;
      const double v = poses.hand[f * poses.hands + i];
      for (std::size_t yy = p0; yy < p1; ++yy)
        for (std::size_t xx = p0; xx < p1; ++xx) ch[yy * c.w + xx] = v;
    }
  }
  for (double& v : c.data) v = std::clamp(v, 0.0, 1.0);
  return c;
}

inline Identity make_identity(Rng rng, const CorpusParams& params) {
  Identity id;
  id.gain.resize(params.joints);
  id.off_x.resize(params.joints);
  id.off_y.resize(params.joints);
  for (std::size_t j = 0; j < params.joints; ++j) {
    id.gain[j] = rng.uniform(0.55, 1.0);
    id.off_x[j] = rng.uniform(-0.04, 0.04);
    id.off_y[j] = rng.uniform(-0.04, 0.04);
  }
  id.background = rng.uniform(0.0, 0.08);
  id.hand_gain = rng.uniform(0.5, 1.0);
  return id;
}

/// Deterministic renderer: blobs at identity-offset joint positions with
/// identity-dependent intensity, plus hand markers in the four corners.
inline VideoClip render_video(const PoseSequence& poses, const Identity& id,
                              const CorpusParams& params) {
  VideoClip v;
  v.frames = poses.frames;
  v.h = v.w = params.video_size;
  v.pixels.assign(v.frames * v.h * v.w, id.background);
  const double px = static_cast<double>(params.video_size - 1);
  const double inset = 0.12 * px;
  for (std::size_t f = 0; f < v.frames; ++f) {
    double* img = v.pixels.data() + f * v.h * v.w;
    for (std::size_t j = 0; j < poses.joints; ++j) {
      const double cx = std::clamp(poses.x(f, j) + id.off_x[j], 0.0, 1.0) * px;
      const double cy = std::clamp(poses.y(f, j) + id.off_y[j], 0.0, 1.0) * px;
      detail::splat_blob(img, v.h, v.w, cx, cy, params.blob_sigma_video, id.gain[j]);
    }
    const double corners[4][2] = {{inset, inset},
                                  {px - inset, inset},
                                  {inset, px - inset},
                                  {px - inset, px - inset}};
    for (std::size_t i = 0; i < poses.hands && i < 4; ++i)
      detail::splat_blob(img, v.h, v.w, corners[i][0], corners[i][1], params.blob_sigma_video,
                         id.hand_gain * poses.hand[f * poses.hands + i]);
  }
  for (double& p : v.pixels) p = std::clamp(p, 0.0, 1.0);
  return v;
}

/// Canonical rest pose: joints on a circle, hands at mid value.
inline PoseSequence rest_pose(const CorpusParams& params) {
  PoseSequence p;
  p.frames = 1;
  p.joints = params.joints;
  p.hands = params.hand_params;
  p.xy.resize(p.joints * 2);
  p.hand.assign(p.hands, 0.5);
  for (std::size_t j = 0; j < p.joints; ++j) {
    const double a = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(p.joints);
    p.xy[j * 2] = 0.5 + 0.3 * std::cos(a);
    p.xy[j * 2 + 1] = 0.5 + 0.3 * std::sin(a);
  }
  return p;
}

inline VideoClip render_reference(const Identity& id, const CorpusParams& params) {
  return render_video(rest_pose(params), id, params);
}

// ---------------------------------------------------------------------------
// Corpus assembly
// ---------------------------------------------------------------------------

inline Corpus build_corpus(const CorpusParams& params) {
  if (params.v_gloss < 2) throw ValueError("build_corpus: need at least 2 glosses");
  if (params.min_sentence < 1 || params.max_sentence < params.min_sentence)
    throw ValueError("build_corpus: bad sentence length bounds");
  Corpus c;
  c.params = params;
  Rng master(params.seed);

  Rng gloss_rng = master.split(1);
  c.gloss_bank.reserve(params.v_gloss);
  for (std::size_t g = 0; g < params.v_gloss; ++g)
    c.gloss_bank.push_back(make_gloss_trajectory(params, gloss_rng.split(g)));

  Rng id_rng = master.split(2);
  for (std::size_t i = 0; i < params.n_identities; ++i)
    c.identities.push_back(make_identity(id_rng.split(i), params));

  Rng sent_rng = master.split(3);
  c.samples.reserve(params.n_sentences);
  for (std::size_t s = 0; s < params.n_sentences; ++s) {
    Rng r = sent_rng.split(s);
    Sample smp;
    const std::size_t len = static_cast<std::size_t>(
        r.uniform_int(static_cast<int>(params.min_sentence), static_cast<int>(params.max_sentence)));
    std::vector<PoseSequence> parts;
    for (std::size_t i = 0; i < len; ++i) {
      const int g = static_cast<int>(r.uniform_index(params.v_gloss));
      smp.sentence.push_back(g);
      parts.push_back(c.gloss_bank[static_cast<std::size_t>(g)]);
    }
    smp.identity_id = s % params.n_identities;
    smp.poses = concat_with_blends(parts, params.blend_frames);
    smp.conditions = render_conditions(smp.poses, params);
    smp.video = render_video(smp.poses, c.identities[smp.identity_id], params);
    smp.reference = render_reference(c.identities[smp.identity_id], params);
    c.samples.push_back(std::move(smp));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Perturbation operators
// ---------------------------------------------------------------------------

/// Per-keypoint-coordinate standard deviation across all frames of the
/// corpus (used by the variance-scaled spatial perturbation mode).
inline std::vector<double> per_keypoint_std(const Corpus& c) {
  const std::size_t J = c.params.joints;
  std::vector<double> sum(J * 2, 0.0), sumsq(J * 2, 0.0);
  std::size_t n = 0;
  for (const Sample& s : c.samples) {
    for (std::size_t f = 0; f < s.poses.frames; ++f)
      for (std::size_t j = 0; j < J; ++j) {
        sum[j * 2] += s.poses.x(f, j);
        sumsq[j * 2] += s.poses.x(f, j) * s.poses.x(f, j);
        sum[j * 2 + 1] += s.poses.y(f, j);
        sumsq[j * 2 + 1] += s.poses.y(f, j) * s.poses.y(f, j);
      }
    n += s.poses.frames;
  }
  std::vector<double> out(J * 2);
  for (std::size_t k = 0; k < J * 2; ++k) {
    const double mean = sum[k] / static_cast<double>(n);
    out[k] = std::sqrt(std::max(0.0, sumsq[k] / static_cast<double>(n) - mean * mean));
  }
  return out;
}

/// Additive Gaussian bias on every keypoint coordinate, clipped to [0, 1].
/// With `scale` given (per-keypoint stds, 2J entries), the bias for
/// coordinate k is N(0, (sigma * scale[k])^2); otherwise plain N(0, sigma^2).
/// Noise is drawn as unit normals scaled by sigma, so a fixed seed yields
/// displacement linear in sigma across levels.
inline PoseSequence perturb_spatial(const PoseSequence& poses, double sigma, Rng rng,
                                    const std::vector<double>* scale = nullptr) {
  if (sigma < 0.0) throw ValueError("perturb_spatial: sigma must be >= 0");
  if (scale && scale->size() != poses.joints * 2)
    throw ValueError("perturb_spatial: scale must have 2*J entries");
  PoseSequence out = poses;
  for (std::size_t f = 0; f < out.frames; ++f)
    for (std::size_t j = 0; j < out.joints; ++j)
      for (std::size_t c = 0; c < 2; ++c) {
        const double unit = rng.normal();
        const double s = scale ? (*scale)[j * 2 + c] : 1.0;
        double& v = out.xy[(f * out.joints + j) * 2 + c];
        v = std::clamp(v + sigma * s * unit, 0.0, 1.0);
      }
  return out;
}

enum class TemporalOp { kDelete, kRepeat, kDuplicate };

/// Randomly delete, repeat, or duplicate ceil(p * F) frames. Victims are the
/// first ceil(p * F) entries of a seeded permutation and each victim's op is
/// derived from its own frame index, so smaller ratios select a subset of a
/// larger ratio's edits under the same seed.
inline PoseSequence perturb_temporal(const PoseSequence& poses, double ratio, Rng rng) {
  if (ratio < 0.0 || ratio > 1.0) throw ValueError("perturb_temporal: ratio must be in [0, 1]");
  const std::size_t F = poses.frames;
  const std::size_t count = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(F)));
  if (count == 0) return poses;

  std::vector<std::size_t> perm(F);
  std::iota(perm.begin(), perm.end(), 0);
  Rng perm_rng = rng.split(0xa11ce);
  for (std::size_t i = F; i-- > 1;) std::swap(perm[i], perm[perm_rng.uniform_index(i + 1)]);

  std::vector<int> op(F, -1);
  for (std::size_t i = 0; i < count; ++i) {
    Rng op_rng = rng.split(0xbeef ^ perm[i]);
    op[perm[i]] = static_cast<int>(op_rng.uniform_index(3));
  }

  PoseSequence out;
  out.joints = poses.joints;
  out.hands = poses.hands;
  auto emit = [&](std::size_t f) {
    out.xy.insert(out.xy.end(), poses.xy.begin() + static_cast<std::ptrdiff_t>(f * poses.joints * 2),
                  poses.xy.begin() + static_cast<std::ptrdiff_t>((f + 1) * poses.joints * 2));
    out.hand.insert(out.hand.end(), poses.hand.begin() + static_cast<std::ptrdiff_t>(f * poses.hands),
                    poses.hand.begin() + static_cast<std::ptrdiff_t>((f + 1) * poses.hands));
    ++out.frames;
  };
  for (std::size_t f = 0; f < F; ++f) {
    switch (op[f]) {
      case -1:
        emit(f);
        break;
      case static_cast<int>(TemporalOp::kDelete):
        break;
      case static_cast<int>(TemporalOp::kRepeat):
        emit(f);
        emit(f);
        break;
      case static_cast<int>(TemporalOp::kDuplicate):
        emit(f);
        emit(f);
        break;
    }
  }
  if (out.frames == 0) emit(0);  // at least one frame survives
  return out;
}

// ---------------------------------------------------------------------------
// Corpus directory I/O: manifest.json + one tensor file per sample in the
// checkpoint encoding.
// ---------------------------------------------------------------------------

inline Tensor conditions_tensor(const ConditionSequence& c) {
  return Tensor::from({c.frames, c.channels, c.h, c.w}, c.data);
}

inline Tensor video_tensor(const VideoClip& v) {
  return Tensor::from({v.frames, 1, v.h, v.w}, v.pixels);
}

inline VideoClip video_from_tensor(const Tensor& t) {
  if (t.rank() != 4 || t.dim(1) != 1) throw ShapeError("video_from_tensor: want [F x 1 x H x W]");
  VideoClip v;
  v.frames = t.dim(0);
  v.h = t.dim(2);
  v.w = t.dim(3);
  v.pixels = t.data();
  return v;
}

inline nlohmann::json params_to_json(const CorpusParams& p) {
  return nlohmann::json{{"seed", p.seed},
                        {"v_gloss", p.v_gloss},
                        {"n_sentences", p.n_sentences},
                        {"n_identities", p.n_identities},
                        {"min_sentence", p.min_sentence},
                        {"max_sentence", p.max_sentence},
                        {"joints", p.joints},
                        {"hand_params", p.hand_params},
                        {"cond_size", p.cond_size},
                        {"video_size", p.video_size},
                        {"min_traj", p.min_traj},
                        {"max_traj", p.max_traj},
                        {"blend_frames", p.blend_frames},
                        {"delta_max", p.delta_max},
                        {"blob_sigma_cond", p.blob_sigma_cond},
                        {"blob_sigma_video", p.blob_sigma_video}};
}

inline CorpusParams params_from_json(const nlohmann::json& j) {
  CorpusParams p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.v_gloss = j.at("v_gloss").get<std::size_t>();
  p.n_sentences = j.at("n_sentences").get<std::size_t>();
  p.n_identities = j.at("n_identities").get<std::size_t>();
  p.min_sentence = j.at("min_sentence").get<std::size_t>();
  p.max_sentence = j.at("max_sentence").get<std::size_t>();
  p.joints = j.at("joints").get<std::size_t>();
  p.hand_params = j.at("hand_params").get<std::size_t>();
  p.cond_size = j.at("cond_size").get<std::size_t>();
  p.video_size = j.at("video_size").get<std::size_t>();
  p.min_traj = j.at("min_traj").get<std::size_t>();
  p.max_traj = j.at("max_traj").get<std::size_t>();
  p.blend_frames = j.at("blend_frames").get<std::size_t>();
  p.delta_max = j.at("delta_max").get<double>();
  p.blob_sigma_cond = j.at("blob_sigma_cond").get<double>();
  p.blob_sigma_video = j.at("blob_sigma_video").get<double>();
  return p;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["params"] = params_to_json(c.params);
  manifest["sentences"] = nlohmann::json::array();
  manifest["identity_ids"] = nlohmann::json::array();
  manifest["files"] = nlohmann::json::array();
  manifest["identities"] = nlohmann::json::array();
  for (const Identity& id : c.identities)
    manifest["identities"].push_back({{"gain", id.gain},
                                      {"off_x", id.off_x},
                                      {"off_y", id.off_y},
                                      {"background", id.background},
                                      {"hand_gain", id.hand_gain}});
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const Sample& s = c.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu.svt", i);
    manifest["sentences"].push_back(s.sentence);
    manifest["identity_ids"].push_back(s.identity_id);
    manifest["files"].push_back(name);
    NamedParams tensors;
    tensors.emplace_back("poses.xy", Tensor::from({s.poses.frames, s.poses.joints, 2}, s.poses.xy));
    tensors.emplace_back("poses.hand", Tensor::from({s.poses.frames, s.poses.hands}, s.poses.hand));
    tensors.emplace_back("conditions", conditions_tensor(s.conditions));
    tensors.emplace_back("video", video_tensor(s.video));
    tensors.emplace_back("reference", video_tensor(s.reference));
    save_checkpoint(dir / name, tensors);
  }
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("save_corpus: cannot write manifest");
  f << manifest.dump(2) << "\n";
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw StateError("load_corpus: missing manifest at " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  f >> manifest;
  Corpus c;
  c.params = params_from_json(manifest.at("params"));
  Rng master(c.params.seed);
  Rng gloss_rng = master.split(1);
  for (std::size_t g = 0; g < c.params.v_gloss; ++g)
    c.gloss_bank.push_back(make_gloss_trajectory(c.params, gloss_rng.split(g)));
  for (const auto& jid : manifest.at("identities")) {
    Identity id;
    id.gain = jid.at("gain").get<std::vector<double>>();
    id.off_x = jid.at("off_x").get<std::vector<double>>();
    id.off_y = jid.at("off_y").get<std::vector<double>>();
    id.background = jid.at("background").get<double>();
    id.hand_gain = jid.at("hand_gain").get<double>();
    c.identities.push_back(std::move(id));
  }
  const auto& files = manifest.at("files");
  for (std::size_t i = 0; i < files.size(); ++i) {
    Sample s;
    s.sentence = manifest.at("sentences")[i].get<std::vector<int>>();
    s.identity_id = manifest.at("identity_ids")[i].get<std::size_t>();
    NamedParams tensors = load_checkpoint(dir / files[i].get<std::string>());
    Tensor pxy = find_tensor(tensors, "poses.xy");
    Tensor ph = find_tensor(tensors, "poses.hand");
    s.poses.frames = pxy.dim(0);
    s.poses.joints = pxy.dim(1);
    s.poses.hands = ph.dim(1);
    s.poses.xy = pxy.data();
    s.poses.hand = ph.data();
    Tensor cond = find_tensor(tensors, "conditions");
    s.conditions.frames = cond.dim(0);
    s.conditions.channels = cond.dim(1);
    s.conditions.h = cond.dim(2);
    s.conditions.w = cond.dim(3);
    s.conditions.data = cond.data();
    s.video = video_from_tensor(find_tensor(tensors, "video"));
    s.reference = video_from_tensor(find_tensor(tensors, "reference"));
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace signvid::corpus
