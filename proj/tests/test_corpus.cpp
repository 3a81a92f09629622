#include <catch2/catch_amalgamated.hpp>

#include "signvid/corpus.hpp"
#include "test_support.hpp"

using namespace signvid;
using namespace signvid::corpus;

TEST_CASE("corpus generation is bit-deterministic", "[corpus]") {
  CorpusParams p;
  p.seed = 31337;
  p.v_gloss = 6;
  p.n_sentences = 8;
  Corpus a = build_corpus(p);
  Corpus b = build_corpus(p);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    REQUIRE(a.samples[i].sentence == b.samples[i].sentence);
    REQUIRE(a.samples[i].poses.xy == b.samples[i].poses.xy);
    REQUIRE(a.samples[i].video.pixels == b.samples[i].video.pixels);
    REQUIRE(a.samples[i].conditions.data == b.samples[i].conditions.data);
  }
}

TEST_CASE("single-gloss sentences have the gloss trajectory length", "[corpus]") {
  CorpusParams p;
  p.seed = 5;
  p.v_gloss = 4;
  p.n_sentences = 10;
  p.min_sentence = p.max_sentence = 1;
  Corpus c = build_corpus(p);
  for (const Sample& s : c.samples) {
    REQUIRE(s.sentence.size() == 1);
    REQUIRE(s.poses.frames == c.gloss_bank[static_cast<std::size_t>(s.sentence[0])].frames);
  }
}

TEST_CASE("all gloss trajectories satisfy the displacement bound", "[corpus]") {
  CorpusParams p;
  p.seed = 99;
  p.v_gloss = 20;
  p.n_sentences = 1;
  Corpus c = build_corpus(p);
  REQUIRE(c.gloss_bank.size() == 20);
  for (const PoseSequence& traj : c.gloss_bank) {
    REQUIRE(traj.frames >= p.min_traj);
    REQUIRE(traj.frames <= p.max_traj);
    for (std::size_t f = 1; f < traj.frames; ++f)
      for (std::size_t j = 0; j < traj.joints; ++j) {
        const double d = std::hypot(traj.x(f, j) - traj.x(f - 1, j), traj.y(f, j) - traj.y(f - 1, j));
        REQUIRE(d <= p.delta_max + 1e-12);
      }
  }
}

TEST_CASE("sentence frame count is the sum of parts plus blends", "[corpus]") {
  CorpusParams p;
  p.seed = 17;
  p.v_gloss = 5;
  p.n_sentences = 12;
  p.min_sentence = 2;
  p.max_sentence = 3;
  Corpus c = build_corpus(p);
  for (const Sample& s : c.samples) {
    std::size_t expect = p.blend_frames * (s.sentence.size() - 1);
    for (int g : s.sentence) expect += c.gloss_bank[static_cast<std::size_t>(g)].frames;
    REQUIRE(s.poses.frames == expect);
    REQUIRE(s.conditions.frames == expect);
    REQUIRE(s.video.frames == expect);
  }
}

TEST_CASE("conditions are appearance-free; videos are identity-dependent", "[corpus]") {
  CorpusParams p;
  p.seed = 23;
  p.v_gloss = 4;
  p.n_sentences = 2;
  Corpus c = build_corpus(p);
  const PoseSequence& poses = c.samples[0].poses;

  ConditionSequence c1 = render_conditions(poses, p);
  ConditionSequence c2 = render_conditions(poses, p);
  REQUIRE(c1.data == c2.data);  // conditions never see identity

  VideoClip v1 = render_video(poses, c.identities[0], p);
  VideoClip v2 = render_video(poses, c.identities[1], p);
  REQUIRE(v1.pixels != v2.pixels);
  double diff = 0;
  for (std::size_t i = 0; i < v1.pixels.size(); ++i) diff += std::abs(v1.pixels[i] - v2.pixels[i]);
  REQUIRE(diff / static_cast<double>(v1.pixels.size()) > 1e-4);
}

TEST_CASE("renderer injectivity: distinct equal-length sentences differ", "[corpus]") {
  CorpusParams p;
  p.seed = 29;
  p.v_gloss = 8;
  p.n_sentences = 24;
  p.min_sentence = p.max_sentence = 2;
  Corpus c = build_corpus(p);
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    for (std::size_t j = i + 1; j < c.samples.size(); ++j) {
      const Sample& a = c.samples[i];
      const Sample& b = c.samples[j];
      if (a.sentence == b.sentence || a.video.pixels.size() != b.video.pixels.size()) continue;
      double dist = 0;
      for (std::size_t k = 0; k < a.video.pixels.size(); ++k)
        dist += std::abs(a.video.pixels[k] - b.video.pixels[k]);
      REQUIRE(dist / static_cast<double>(a.video.pixels.size()) > 0.0);
    }
}

TEST_CASE("raster values stay in [0, 1]", "[corpus]") {
  CorpusParams p;
  p.seed = 31;
  p.v_gloss = 5;
  p.n_sentences = 4;
  Corpus c = build_corpus(p);
  for (const Sample& s : c.samples) {
    for (double v : s.conditions.data) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
    for (double v : s.video.pixels) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("spatial perturbation: identity at zero, bounded output, displacement scale", "[corpus]") {
  CorpusParams p;
  p.seed = 37;
  p.v_gloss = 3;
  p.n_sentences = 1;
  Corpus c = build_corpus(p);
  const PoseSequence& poses = c.samples[0].poses;

  PoseSequence same = perturb_spatial(poses, 0.0, Rng(1));
  REQUIRE(same.xy == poses.xy);

  REQUIRE_THROWS_AS(perturb_spatial(poses, -0.1, Rng(1)), ValueError);

  PoseSequence wild = perturb_spatial(poses, 5.0, Rng(2));
  for (double v : wild.xy) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }

  // mean absolute displacement for sigma = 0.1 is near sigma * sqrt(2/pi)
  PoseSequence big;
  big.frames = 700;
  big.joints = 8;
  big.hands = 1;
  big.xy.assign(big.frames * big.joints * 2, 0.5);
  big.hand.assign(big.frames, 0.5);
  PoseSequence bumped = perturb_spatial(big, 0.1, Rng(3));
  double mad = 0;
  for (std::size_t i = 0; i < big.xy.size(); ++i) mad += std::abs(bumped.xy[i] - big.xy[i]);
  mad /= static_cast<double>(big.xy.size());  // > 10^4 coordinates
  REQUIRE(mad > 0.06);
  REQUIRE(mad < 0.10);
}

TEST_CASE("spatial perturbation displacement grows with sigma", "[corpus]") {
  PoseSequence base;
  base.frames = 625;
  base.joints = 8;
  base.hands = 1;
  base.xy.assign(base.frames * base.joints * 2, 0.5);
  base.hand.assign(base.frames, 0.5);
  double prev = 0.0;
  for (double sigma : {0.02, 0.05, 0.1}) {
    PoseSequence out = perturb_spatial(base, sigma, Rng(77));
    double mad = 0;
    for (std::size_t i = 0; i < base.xy.size(); ++i) mad += std::abs(out.xy[i] - base.xy[i]);
    mad /= static_cast<double>(base.xy.size());
    REQUIRE(mad > prev);
    prev = mad;
  }
}

TEST_CASE("temporal perturbation: identity, length bounds, determinism, survivor", "[corpus]") {
  CorpusParams p;
  p.seed = 41;
  p.v_gloss = 3;
  p.n_sentences = 1;
  p.min_sentence = p.max_sentence = 2;
  Corpus c = build_corpus(p);
  const PoseSequence& poses = c.samples[0].poses;

  PoseSequence same = perturb_temporal(poses, 0.0, Rng(9));
  REQUIRE(same.xy == poses.xy);
  REQUIRE_THROWS_AS(perturb_temporal(poses, 1.5, Rng(9)), ValueError);

  PoseSequence ten;
  ten.frames = 10;
  ten.joints = 2;
  ten.hands = 1;
  ten.xy.resize(10 * 2 * 2);
  ten.hand.resize(10);
  for (std::size_t i = 0; i < ten.xy.size(); ++i) ten.xy[i] = static_cast<double>(i) / 100.0;
  for (int trial = 0; trial < 20; ++trial) {
    PoseSequence out = perturb_temporal(ten, 0.2, Rng(static_cast<std::uint64_t>(trial)));
    REQUIRE(out.frames >= 8);
    REQUIRE(out.frames <= 12);
  }

  PoseSequence a = perturb_temporal(ten, 0.3, Rng(55));
  PoseSequence b = perturb_temporal(ten, 0.3, Rng(55));
  REQUIRE(a.xy == b.xy);
  REQUIRE(a.frames == b.frames);

  // deleting everything is guarded: at least one frame survives
  PoseSequence one;
  one.frames = 1;
  one.joints = 1;
  one.hands = 1;
  one.xy = {0.5, 0.5};
  one.hand = {0.5};
  for (int s = 0; s < 30; ++s) {
    PoseSequence out = perturb_temporal(one, 1.0, Rng(static_cast<std::uint64_t>(s)));
    REQUIRE(out.frames >= 1);
  }
}

TEST_CASE("corpus directory round-trips through manifest and tensor files", "[corpus]") {
  CorpusParams p;
  p.seed = 43;
  p.v_gloss = 4;
  p.n_sentences = 5;
  Corpus c = build_corpus(p);
  auto dir = testsup::temp_dir("corpus");
  save_corpus(c, dir);
  Corpus back = load_corpus(dir);
  REQUIRE(back.samples.size() == c.samples.size());
  REQUIRE(back.identities.size() == c.identities.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    REQUIRE(back.samples[i].sentence == c.samples[i].sentence);
    REQUIRE(back.samples[i].identity_id == c.samples[i].identity_id);
    REQUIRE(back.samples[i].poses.xy == c.samples[i].poses.xy);
    REQUIRE(back.samples[i].conditions.data == c.samples[i].conditions.data);
    REQUIRE(back.samples[i].video.pixels == c.samples[i].video.pixels);
    REQUIRE(back.samples[i].reference.pixels == c.samples[i].reference.pixels);
  }
  std::filesystem::remove_all(dir);
}
