#include <catch2/catch_amalgamated.hpp>

#include "signvid/fsq_autoencoder.hpp"
#include "test_support.hpp"

using namespace signvid;
using namespace signvid::fsqae;

namespace {

// independent naive convolution, used as the reimplementation oracle
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t ci, std::size_t h,
                               std::size_t w, const Tensor& weight, const Tensor& bias,
                               std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw,
                               std::size_t& ho, std::size_t& wo) {
  const std::size_t co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  ho = (h + 2 * ph - kh) / sh + 1;
  wo = (w + 2 * pw - kw) / sw + 1;
  std::vector<double> out(co * ho * wo, 0.0);
  for (std::size_t oc = 0; oc < co; ++oc)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = bias[oc];
        for (std::size_t ic = 0; ic < ci; ++ic)
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * sh + dy) -
                                        static_cast<std::ptrdiff_t>(ph);
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * sw + dx) -
                                        static_cast<std::ptrdiff_t>(pw);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                  ix >= static_cast<std::ptrdiff_t>(w))
                continue;
              acc += weight[((oc * ci + ic) * kh + dy) * kw + dx] *
                     x[(ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
  return out;
}

Tensor random_embeddings(Rng& rng, std::size_t frames, std::size_t d, std::size_t hw) {
  return randn({frames, d, hw, hw}, rng);
}

}  // namespace

TEST_CASE("compression accounting is exact across the rate grid", "[fsqae]") {
  Rng rng(200);
  std::size_t prev = 32;
  for (std::size_t rate : {1u, 2u, 4u, 8u, 16u}) {
    FsqAeConfig cfg;
    cfg.rate = rate;
    FsqAutoencoder ae(cfg, 8, 4, 4, rng);
    REQUIRE(ae.tokens_per_frame() == 16 / rate);
    if (rate > 1) REQUIRE(ae.tokens_per_frame() * 2 == prev);
    prev = ae.tokens_per_frame();
    // shape contract end to end
    Tensor e = random_embeddings(rng, 3, 8, 4);
    TokenGrid grid = ae.encode_tokens(e);
    REQUIRE(grid.frames == 3);
    REQUIRE(grid.tokens_per_frame == 16 / rate);
    Tensor back = ae.decode_tokens(grid);
    REQUIRE(back.shape() == e.shape());
  }
  FsqAeConfig bad;
  bad.rate = 3;
  REQUIRE_THROWS_AS(FsqAutoencoder(bad, 8, 4, 4, rng), ValueError);
  FsqAeConfig too_deep;
  too_deep.rate = 16;
  REQUIRE_THROWS_AS(FsqAutoencoder(too_deep, 8, 2, 2, rng), ValueError);
}

TEST_CASE("token emission: determinism, vocabulary bound, frame constancy on zero input", "[fsqae]") {
  Rng rng(201);
  FsqAeConfig cfg;
  FsqAutoencoder ae(cfg, 8, 4, 4, rng);

  Tensor e = random_embeddings(rng, 5, 8, 4);
  TokenGrid a = ae.encode_tokens(e);
  TokenGrid b = ae.encode_tokens(e);
  REQUIRE(a.indices == b.indices);
  a.validate(ae.vocab_size());
  for (std::uint32_t t : a.indices) REQUIRE(t < 625);

  // identical frames produce identical token rows
  Tensor zero = Tensor::zeros({4, 8, 4, 4});
  TokenGrid zg = ae.encode_tokens(zero);
  for (std::size_t f = 1; f < 4; ++f)
    for (std::size_t p = 0; p < zg.tokens_per_frame; ++p) REQUIRE(zg.at(f, p) == zg.at(0, p));
}

TEST_CASE("decode_tokens: shape, finiteness, purity, range errors", "[fsqae]") {
  Rng rng(202);
  FsqAeConfig cfg;
  FsqAutoencoder ae(cfg, 8, 4, 4, rng);

  TokenGrid zeros;
  zeros.frames = 3;
  zeros.tokens_per_frame = ae.tokens_per_frame();
  zeros.indices.assign(3 * ae.tokens_per_frame(), 0);
  Tensor d1 = ae.decode_tokens(zeros);
  REQUIRE(d1.shape() == Shape{3, 8, 4, 4});
  for (double v : d1.data()) REQUIRE(std::isfinite(v));
  Tensor d2 = ae.decode_tokens(zeros);
  REQUIRE(d1.data() == d2.data());  // pure function

  TokenGrid bad = zeros;
  bad.indices[0] = 625;
  REQUIRE_THROWS_AS(ae.decode_tokens(bad), ValueError);
  TokenGrid mismatched = zeros;
  mismatched.tokens_per_frame += 1;
  REQUIRE_THROWS_AS(ae.decode_tokens(mismatched), Error);
}

TEST_CASE("encode_tokens matches an independently coded forward pass", "[fsqae][oracle]") {
  Rng rng(203);
  FsqAeConfig cfg;
  cfg.rate = 4;
  FsqAutoencoder ae(cfg, 6, 4, 4, rng);

  Tensor e = random_embeddings(rng, 100, 6, 4);
  TokenGrid got = ae.encode_tokens(e);

  auto silu_vec = [](std::vector<double> v) {
    for (double& x : v) x = x / (1.0 + std::exp(-x));
    return v;
  };
  const std::size_t d = ae.spec.channels();
  for (std::size_t f = 0; f < 100; ++f) {
    std::vector<double> x(e.data().begin() + static_cast<std::ptrdiff_t>(f * 6 * 16),
                          e.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * 6 * 16));
    std::size_t h = 4, w = 4, ho, wo;
    x = silu_vec(naive_conv(x, 6, h, w, ae.enc_in.w, ae.enc_in.b, 1, 1, 1, 1, ho, wo));
    std::size_t c = ae.cfg.ch;
    for (const Conv2d& down : ae.enc_down) {
      x = silu_vec(naive_conv(x, c, ho, wo, down.w, down.b, down.sh, down.sw, 1, 1, ho, wo));
    }
    x = naive_conv(x, c, ho, wo, ae.enc_out.w, ae.enc_out.b, 1, 1, 0, 0, ho, wo);
    // channel-last, quantize, pack
    for (std::size_t p = 0; p < ho * wo; ++p) {
      std::vector<int> codes(d);
      for (std::size_t ch = 0; ch < d; ++ch)
        codes[ch] = quant::fsq_quantize_scalar(x[ch * ho * wo + p], ae.spec.levels[ch]);
      REQUIRE(got.at(f, p) == quant::pack(codes, ae.spec));
    }
  }
}

TEST_CASE("training reconstructs held-out embeddings", "[fsqae][training]") {
  Rng rng(204);
  // frozen encoder embeddings stand-in: smooth random fields
  std::vector<Tensor> train_set, held_out;
  for (int i = 0; i < 12; ++i) train_set.push_back(randn({6, 8, 4, 4}, rng));
  for (int i = 0; i < 3; ++i) held_out.push_back(randn({6, 8, 4, 4}, rng));

  FsqAeConfig cfg;
  cfg.rate = 1;  // easiest configuration must train
  cfg.seed = 205;
  FsqAutoencoder ae(cfg, 8, 4, 4, rng);
  FsqTrainResult res = train_fsqae(ae, train_set, 500, 3e-3);
  REQUIRE(res.losses.size() == 500);

  // descent smoke
  const auto mean_of = [&](const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s / static_cast<double>(hi - lo);
  };
  REQUIRE(mean_of(res.losses, 450, 500) < mean_of(res.losses, 0, 50));

  // windowed reconstruction loss is non-increasing (5% slack per window)
  for (std::size_t w0 = 0; w0 + 100 <= res.recon_losses.size(); w0 += 50) {
    if (w0 + 150 > res.recon_losses.size()) break;
    const double a = mean_of(res.recon_losses, w0, w0 + 50);
    const double b = mean_of(res.recon_losses, w0 + 50, w0 + 100);
    REQUIRE(b <= a * 1.05);
  }

  REQUIRE_THROWS_AS(train_fsqae(ae, {}, 10, 1e-3), StateError);
}

TEST_CASE("vq bottleneck variant trains and emits tokens", "[fsqae][training]") {
  Rng rng(206);
  std::vector<Tensor> train_set;
  for (int i = 0; i < 8; ++i) train_set.push_back(randn({4, 8, 4, 4}, rng));
  FsqAeConfig cfg;
  cfg.quantizer = "vq";
  cfg.levels = {5, 5, 5, 5};  // K = 625 entries at dim 4
  cfg.rate = 8;
  cfg.seed = 207;
  FsqAutoencoder ae(cfg, 8, 4, 4, rng);
  REQUIRE(ae.vq.size() == 625);
  FsqTrainResult res = train_fsqae(ae, train_set, 150, 3e-3);
  const auto window = [&](std::size_t lo, std::size_t hi) {
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += res.losses[i];
    return s / static_cast<double>(hi - lo);
  };
  REQUIRE(window(120, 150) < window(0, 30));
  TokenGrid g = ae.encode_tokens(train_set[0]);
  g.validate(625);
  Tensor back = ae.decode_tokens(g);
  REQUIRE(back.shape() == train_set[0].shape());
}

TEST_CASE("token files round-trip and reject corruption", "[fsqae]") {
  TokenGrid g;
  g.frames = 3;
  g.tokens_per_frame = 2;
  g.indices = {0, 624, 17, 81, 200, 5};
  auto dir = testsup::temp_dir("tokens");
  const auto path = dir / "sent.tok";
  write_tokens(path, g);
  TokenGrid back = read_tokens(path);
  REQUIRE(back.frames == 3);
  REQUIRE(back.tokens_per_frame == 2);
  REQUIRE(back.indices == g.indices);

  // truncated file
  std::filesystem::resize_file(path, 10);
  REQUIRE_THROWS_AS(read_tokens(path), IoError);
  REQUIRE_THROWS_AS(read_tokens(dir / "missing.tok"), StateError);
  std::filesystem::remove_all(dir);
}
