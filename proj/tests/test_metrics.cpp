#include <catch2/catch_amalgamated.hpp>

#include "signvid/metrics.hpp"
#include "test_support.hpp"

using namespace signvid;
using namespace signvid::metrics;

namespace {

// Brute-force oracle: enumerate every monotone alignment path and take the
// lexicographic (cost, length) minimum. Exponential, fine for len <= 6.
struct BruteResult {
  double cost = std::numeric_limits<double>::infinity();
  std::size_t length = 0;
};

void brute_walk(const Sequence& a, const Sequence& b, std::size_t i, std::size_t j, double acc,
                std::size_t steps, BruteResult& best) {
  acc += l2_distance(a[i], b[j]);
  ++steps;
  if (i == a.size() - 1 && j == b.size() - 1) {
    if (acc < best.cost || (acc == best.cost && steps < best.length)) {
      best.cost = acc;
      best.length = steps;
    }
    return;
  }
  if (i + 1 < a.size() && j + 1 < b.size()) brute_walk(a, b, i + 1, j + 1, acc, steps, best);
  if (j + 1 < b.size()) brute_walk(a, b, i, j + 1, acc, steps, best);
  if (i + 1 < a.size()) brute_walk(a, b, i + 1, j, acc, steps, best);
}

BruteResult brute_dtw(const Sequence& a, const Sequence& b) {
  BruteResult best;
  brute_walk(a, b, 0, 0, 0.0, 0, best);
  return best;
}

Sequence random_sequence(Rng& rng, std::size_t max_len, std::size_t dim) {
  const std::size_t len = 1 + rng.uniform_index(max_len);
  Sequence s(len, std::vector<double>(dim));
  for (auto& v : s)
    for (double& x : v) x = rng.normal();
  return s;
}

corpus::VideoClip make_clip(std::size_t frames, std::size_t hw, double base) {
  corpus::VideoClip v;
  v.frames = frames;
  v.h = v.w = hw;
  v.pixels.assign(frames * hw * hw, base);
  return v;
}

}  // namespace

TEST_CASE("dtw identity and single-cell anchors", "[metrics]") {
  Sequence a = {{1.0, 2.0}, {3.0, 4.0}, {0.0, 0.0}};
  DtwResult r = dtw(a, a);
  REQUIRE(r.cost == 0.0);
  REQUIRE(r.normalized == 0.0);

  Sequence x = {{0.0}};
  Sequence y = {{3.0}};
  DtwResult s = dtw(x, y);
  REQUIRE(s.cost == 3.0);
  REQUIRE(s.path.size() == 1);
  REQUIRE(s.normalized == 3.0);

  REQUIRE_THROWS_AS(dtw({}, y), ValueError);
  REQUIRE_THROWS_AS(dtw(x, {}), ValueError);
}

TEST_CASE("dtw matches brute-force path enumeration on 250 random pairs", "[metrics][oracle]") {
  Rng rng(7001);
  for (int trial = 0; trial < 250; ++trial) {
    Sequence a = random_sequence(rng, 6, 2);
    Sequence b = random_sequence(rng, 6, 2);
    DtwResult fast = dtw(a, b);
    BruteResult slow = brute_dtw(a, b);
    REQUIRE(fast.cost == slow.cost);
    REQUIRE(fast.path.size() == slow.length);
    REQUIRE(fast.normalized == slow.cost / static_cast<double>(slow.length));
  }
}

TEST_CASE("dtw symmetry under the symmetric cost", "[metrics]") {
  Rng rng(7002);
  for (int trial = 0; trial < 50; ++trial) {
    Sequence a = random_sequence(rng, 5, 3);
    Sequence b = random_sequence(rng, 5, 3);
    REQUIRE(dtw(a, b).cost == dtw(b, a).cost);
  }
}

TEST_CASE("dtw of a frame-duplicated sequence is zero", "[metrics]") {
  Rng rng(7003);
  Sequence a = random_sequence(rng, 5, 4);
  Sequence doubled;
  for (const auto& v : a) {
    doubled.push_back(v);
    doubled.push_back(v);
  }
  DtwResult r = dtw(a, doubled);
  REQUIRE(r.cost == 0.0);
  REQUIRE(r.normalized == 0.0);
}

TEST_CASE("dtw path is monotone and boundary-anchored", "[metrics]") {
  Rng rng(7004);
  Sequence a = random_sequence(rng, 6, 2);
  Sequence b = random_sequence(rng, 6, 2);
  DtwResult r = dtw(a, b);
  REQUIRE(r.path.front() == std::pair<std::size_t, std::size_t>{0, 0});
  REQUIRE(r.path.back() == std::pair<std::size_t, std::size_t>{a.size() - 1, b.size() - 1});
  for (std::size_t k = 1; k < r.path.size(); ++k) {
    const auto [pi, pj] = r.path[k - 1];
    const auto [ci, cj] = r.path[k];
    REQUIRE(ci >= pi);
    REQUIRE(cj >= pj);
    REQUIRE(ci - pi <= 1);
    REQUIRE(cj - pj <= 1);
    REQUIRE(ci + cj > pi + pj);
  }
}

TEST_CASE("psnr anchors and mse consistency", "[metrics]") {
  corpus::VideoClip x = make_clip(3, 8, 0.4);
  corpus::VideoClip y = make_clip(3, 8, 0.5);  // +0.1 everywhere
  REQUIRE_THAT(psnr(x, y), Catch::Matchers::WithinAbs(20.0, 1e-9));
  REQUIRE(std::isinf(psnr(x, x)));
  // psnr = 10*log10(1/mse) exactly
  Rng rng(7005);
  corpus::VideoClip a = make_clip(2, 8, 0.0);
  corpus::VideoClip b = make_clip(2, 8, 0.0);
  for (double& p : a.pixels) p = rng.uniform();
  for (double& p : b.pixels) p = rng.uniform();
  REQUIRE(psnr(a, b) == 10.0 * std::log10(1.0 / video_mse(a, b)));
  corpus::VideoClip wrong = make_clip(2, 4, 0.0);
  REQUIRE_THROWS_AS(psnr(a, wrong), ShapeError);
}

TEST_CASE("ssim anchors", "[metrics]") {
  Rng rng(7006);
  corpus::VideoClip x = make_clip(2, 16, 0.0);
  for (double& p : x.pixels) p = rng.uniform();
  REQUIRE_THAT(ssim(x, x), Catch::Matchers::WithinAbs(1.0, 1e-12));

  corpus::VideoClip neg = x;
  for (double& p : neg.pixels) p = 1.0 - p;
  REQUIRE(ssim(x, neg) < ssim(x, x));
  REQUIRE(ssim(x, neg) >= -1.0);
  REQUIRE_THROWS_AS(ssim(x, x, 0), ValueError);
  REQUIRE_THROWS_AS(ssim(x, x, 17), ValueError);
}

TEST_CASE("order-preserving report is monotone with a fixed embedder", "[metrics]") {
  corpus::CorpusParams params;
  params.seed = 404;
  params.v_gloss = 5;
  params.n_sentences = 6;
  corpus::Corpus c = corpus::build_corpus(params);

  // model-free embedder: mean-pool each condition frame to a small vector
  ConditionEmbedder embed = [](const corpus::ConditionSequence& cond) {
    Sequence out(cond.frames, std::vector<double>(cond.channels, 0.0));
    const std::size_t hw = cond.h * cond.w;
    for (std::size_t f = 0; f < cond.frames; ++f)
      for (std::size_t ch = 0; ch < cond.channels; ++ch) {
        double s = 0;
        const double* p = cond.data.data() + (f * cond.channels + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        out[f][ch] = s / static_cast<double>(hw);
      }
    return out;
  };

  auto rows = order_preserving_report(c, embed, {0.0, 0.05, 0.1, 0.2}, {0.0, 0.1, 0.2, 0.4}, 11);
  REQUIRE(rows.size() == 8);
  // sigma = 0 and p = 0 rows: DTW 0, PSNR +inf
  REQUIRE(rows[0].dtw_distance == 0.0);
  REQUIRE(std::isinf(rows[0].psnr_db));
  REQUIRE(rows[4].dtw_distance == 0.0);
  // non-decreasing DTW along each axis, strictly ordered at the endpoints
  for (int k = 1; k < 4; ++k) REQUIRE(rows[k].dtw_distance >= rows[k - 1].dtw_distance - 1e-12);
  REQUIRE(rows[3].dtw_distance > rows[0].dtw_distance);
  for (int k = 5; k < 8; ++k) REQUIRE(rows[k].dtw_distance >= rows[k - 1].dtw_distance - 1e-12);
  REQUIRE(rows[7].dtw_distance > rows[4].dtw_distance);
}
