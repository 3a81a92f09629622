#include <catch2/catch_amalgamated.hpp>

#include "signvid/nn.hpp"
#include "test_support.hpp"

using namespace signvid;

TEST_CASE("layer norm normalizes rows", "[nn]") {
  Rng rng(3);
  LayerNormLayer ln(8);
  Tensor x = randn({5, 8}, rng);
  Tensor y = ln.forward(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y[r * 8 + c];
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y[r * 8 + c] - m) * (y[r * 8 + c] - m);
    v /= 8;
    REQUIRE_THAT(m, Catch::Matchers::WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(v, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }
}

TEST_CASE("sinusoidal embedding is bounded and distinct over t", "[nn]") {
  Tensor a = sinusoidal_embedding(1, 16);
  Tensor b = sinusoidal_embedding(900, 16);
  for (double v : a.data()) REQUIRE(std::abs(v) <= 1.0);
  REQUIRE(a.data() != b.data());
  REQUIRE_THROWS_AS(sinusoidal_embedding(3, 7), ValueError);
}

TEST_CASE("adam skips parameters without gradients", "[nn]") {
  Rng rng(4);
  Tensor used = randn({3}, rng, true);
  Tensor unused = randn({3}, rng, true);
  const std::vector<double> before = unused.data();
  Adam opt(0.1);
  {
    Tape tape;
    Tensor loss = sum(mul(used, used));
    tape.backward(loss);
    opt.step({used, unused});
  }
  REQUIRE(unused.data() == before);
}

TEST_CASE("uniform fan-in init stays within its bound", "[nn]") {
  Rng rng(5);
  Tensor w = init_uniform_fan_in({64, 32}, 64, rng);
  const double bound = 1.0 / std::sqrt(64.0);
  for (double v : w.data()) {
    REQUIRE(v <= bound);
    REQUIRE(v >= -bound);
  }
  REQUIRE(w.requires_grad());
}

TEST_CASE("embedding layer gathers the right rows", "[nn]") {
  Rng rng(6);
  Embedding emb(10, 4, rng);
  Tensor out = emb.forward({7, 2});
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE(out[j] == emb.table[7 * 4 + j]);
    REQUIRE(out[4 + j] == emb.table[2 * 4 + j]);
  }
  REQUIRE_THROWS_AS(emb.forward({10}), ValueError);
}
