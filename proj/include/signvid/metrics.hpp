#pragma once

#include <functional>

#include "signvid/corpus.hpp"

namespace signvid::metrics {

using Sequence = std::vector<std::vector<double>>;

struct DtwResult {
  double cost = 0.0;        // optimal alignment cost
  double normalized = 0.0;  // cost / path length
  std::vector<std::pair<std::size_t, std::size_t>> path;  // index pairs, start to end
};

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("dtw: vectors of unequal dimension");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Classic dynamic-time-warping alignment with steps (up, right, diagonal)
/// and L2 step cost. Among minimum-cost alignments the shortest path is
/// selected (lexicographic (cost, length) minimization), which makes the
/// normalized distance well-defined; the divisor is that path length.
inline DtwResult dtw(const Sequence& a, const Sequence& b,
                     const std::function<double(const std::vector<double>&, const std::vector<double>&)>&
                         cost_fn = l2_distance) {
  if (a.empty() || b.empty()) throw ValueError("dtw: sequences must be nonempty");
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> cost(n * m, 0.0);
  std::vector<std::size_t> len(n * m, 0);
  std::vector<signed char> from(n * m, -1);  // 0 = diag, 1 = left, 2 = up

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double local = cost_fn(a[i], b[j]);
      if (i == 0 && j == 0) {
        cost[0] = local;
        len[0] = 1;
        continue;
      }
      double best_c = std::numeric_limits<double>::infinity();
      std::size_t best_l = 0;
      signed char best_f = -1;
      auto consider = [&](std::size_t pi, std::size_t pj, signed char f) {
        const double c = cost[pi * m + pj];
        const std::size_t l = len[pi * m + pj] + 1;
        if (c < best_c || (c == best_c && l < best_l)) {
          best_c = c;
          best_l = l;
          best_f = f;
        }
      };
      if (i > 0 && j > 0) consider(i - 1, j - 1, 0);
      if (j > 0) consider(i, j - 1, 1);
      if (i > 0) consider(i - 1, j, 2);
      cost[i * m + j] = best_c + local;
      len[i * m + j] = best_l;
      from[i * m + j] = best_f;
    }

  DtwResult res;
  res.cost = cost[n * m - 1];
  const std::size_t plen = len[n * m - 1];
  res.normalized = res.cost / static_cast<double>(plen);
  res.path.resize(plen);
  std::size_t i = n - 1, j = m - 1;
  for (std::size_t k = plen; k-- > 0;) {
    res.path[k] = {i, j};
    switch (from[i * m + j]) {
      case 0: --i; --j; break;
      case 1: --j; break;
      case 2: --i; break;
      default: break;  // start cell
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Frame metrics
// ---------------------------------------------------------------------------

/// Video-level MSE over all pixels.
inline double video_mse(const corpus::VideoClip& x, const corpus::VideoClip& y) {
  if (x.frames != y.frames || x.h != y.h || x.w != y.w)
    throw ShapeError("video metrics: clip shapes differ");
  if (x.pixels.empty()) throw ValueError("video metrics: empty clip");
  double s = 0;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = x.pixels[i] - y.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(x.pixels.size());
}

/// PSNR in dB for pixel range [0, 1]: 10*log10(1 / MSE). Identical inputs
/// return +infinity (the documented sentinel).
inline double psnr(const corpus::VideoClip& x, const corpus::VideoClip& y) {
  const double mse = video_mse(x, y);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Mean SSIM over all valid window positions of all frames. Uniform window,
/// stabilizers C1 = 0.01^2, C2 = 0.03^2.
inline double ssim(const corpus::VideoClip& x, const corpus::VideoClip& y, std::size_t window = 7) {
  if (x.frames != y.frames || x.h != y.h || x.w != y.w)
    throw ShapeError("ssim: clip shapes differ");
  if (window < 1 || window > x.h || window > x.w) throw ValueError("ssim: bad window size");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double wn = static_cast<double>(window * window);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < x.frames; ++f) {
    const double* xf = x.pixels.data() + f * x.h * x.w;
    const double* yf = y.pixels.data() + f * x.h * x.w;
    for (std::size_t oy = 0; oy + window <= x.h; ++oy)
      for (std::size_t ox = 0; ox + window <= x.w; ++ox) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const double xv = xf[(oy + dy) * x.w + ox + dx];
            const double yv = yf[(oy + dy) * x.w + ox + dx];
            sx += xv;
            sy += yv;
            sxx += xv * xv;
            syy += yv * yv;
            sxy += xv * yv;
          }
        const double mx = sx / wn, my = sy / wn;
        const double vx = sxx / wn - mx * mx;
        const double vy = syy / wn - my * my;
        const double cxy = sxy / wn - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Order-preserving perturbation report
// ---------------------------------------------------------------------------

/// Maps a condition raster onto a per-frame embedding sequence (the stage-I
/// encoder, supplied as a callback so metrics stays model-agnostic).
using ConditionEmbedder = std::function<Sequence(const corpus::ConditionSequence&)>;

struct OrderPreservingRow {
  std::string axis;  // "spatial_sigma" or "temporal_ratio"
  double level = 0.0;
  double dtw_distance = 0.0;  // normalized DTW vs clean embeddings
  double psnr_db = 0.0;       // re-rendered video vs clean video
};

/// For every perturbation level: perturb ground-truth poses, re-render the
/// conditions, embed, and compare to the clean embeddings (normalized DTW);
/// also report re-rendered video PSNR. Sigma uses the variance-scaled mode.
/// Values are averaged over the corpus. PSNR averaging skips exact-zero
/// perturbations only in the sense of the +inf sentinel.
inline std::vector<OrderPreservingRow> order_preserving_report(const corpus::Corpus& corpus_data,
                                                               const ConditionEmbedder& embed,
                                                               const std::vector<double>& sigma_grid,
                                                               const std::vector<double>& p_grid,
                                                               std::uint64_t seed) {
  const std::vector<double> kp_std = corpus::per_keypoint_std(corpus_data);
  std::vector<OrderPreservingRow> rows;

  auto eval_axis = [&](const std::string& axis, const std::vector<double>& grid) {
    for (double level : grid) {
      double dtw_sum = 0;
      double psnr_sum = 0;
      bool psnr_inf = false;
      for (std::size_t si = 0; si < corpus_data.samples.size(); ++si) {
        const corpus::Sample& s = corpus_data.samples[si];
        // one fixed noise stream per sample: levels share the same unit draws
        Rng rng(splitmix64(seed ^ (0x5151u + si)));
        corpus::PoseSequence perturbed =
            axis == "spatial_sigma"
                ? corpus::perturb_spatial(s.poses, level, rng, &kp_std)
                : corpus::perturb_temporal(s.poses, level, rng);
        corpus::ConditionSequence cond = corpus::render_conditions(perturbed, corpus_data.params);
        Sequence emb = embed(cond);
        Sequence clean = embed(s.conditions);
        dtw_sum += dtw(emb, clean).normalized;
        corpus::VideoClip vid =
            corpus::render_video(perturbed, corpus_data.identities[s.identity_id], corpus_data.params);
        if (vid.frames == s.video.frames) {
          const double p = psnr(vid, s.video);
          if (std::isinf(p))
            psnr_inf = true;
          else
            psnr_sum += p;
        }
      }
      OrderPreservingRow row;
      row.axis = axis;
      row.level = level;
      row.dtw_distance = dtw_sum / static_cast<double>(corpus_data.samples.size());
      row.psnr_db = psnr_inf ? std::numeric_limits<double>::infinity()
                             : psnr_sum / static_cast<double>(corpus_data.samples.size());
      rows.push_back(std::move(row));
    }
  };
  eval_axis("spatial_sigma", sigma_grid);
  eval_axis("temporal_ratio", p_grid);
  return rows;
}

}  // namespace signvid::metrics
