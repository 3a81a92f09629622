#include <catch2/catch_amalgamated.hpp>

#include "signvid/nn.hpp"
#include "signvid/tensor.hpp"
#include "test_support.hpp"

using namespace signvid;
using testsup::check_gradients;

TEST_CASE("matmul identity and shapes", "[tensor]") {
  Tensor I = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor A = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor C = matmul(I, A);
  REQUIRE(C.data() == std::vector<double>{1, 2, 3, 4});
  REQUIRE_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradient of sum(A*B) wrt A equals row sums of B^T", "[tensor]") {
  Rng rng(11);
  Tensor A = randn({2, 3}, rng, true);
  Tensor B = randn({3, 2}, rng);
  Tape tape;
  Tensor loss = sum(matmul(A, B));
  tape.backward(loss);
  // d/dA sum(AB) = 1 * B^T, i.e. dA[i][k] = sum_j B[k][j]
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      double want = 0;
      for (std::size_t j = 0; j < 2; ++j) want += B[k * 2 + j];
      REQUIRE_THAT(A.grad()[i * 3 + k], Catch::Matchers::WithinAbs(want, 1e-12));
    }
}

TEST_CASE("matmul backward matches finite differences", "[tensor][gradcheck]") {
  Rng rng(5);
  Tensor A = randn({3, 4}, rng, true);
  Tensor B = randn({4, 2}, rng, true);
  Tensor W = randn({3, 2}, rng);
  auto loss = [&] { return sum(mul(matmul(A, B), W)); };
  auto res = check_gradients(loss, {A, B}, 12, rng);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("conv2d identity with 1x1 unit kernel", "[tensor]") {
  Rng rng(7);
  Tensor x = randn({1, 1, 5, 5}, rng);
  Tensor w = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 1, 0, 0);
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  REQUIRE(y.data() == x.data());
}

TEST_CASE("conv2d zero input gives zero output with zero bias", "[tensor]") {
  Rng rng(8);
  Tensor x = Tensor::zeros({2, 2, 6, 6});
  Tensor w = randn({3, 2, 3, 3}, rng);
  Tensor b = Tensor::zeros({3});
  Tensor y = conv2d(x, w, b, 1, 1, 1, 1);
  for (double v : y.data()) REQUIRE(v == 0.0);
}

TEST_CASE("conv2d output dims and kernel-too-large error", "[tensor]") {
  Rng rng(9);
  Tensor x = randn({1, 1, 8, 8}, rng);
  Tensor w = randn({2, 1, 3, 3}, rng);
  Tensor b = Tensor::zeros({2});
  Tensor y = conv2d(x, w, b, 2, 2, 1, 1);
  REQUIRE(y.shape() == Shape{1, 2, 4, 4});  // floor((8+2-3)/2)+1 = 4
  Tensor big = randn({1, 1, 9, 9}, rng);
  REQUIRE_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), big, Tensor::zeros({1}), 1, 1, 0, 0),
                    ShapeError);
}

TEST_CASE("conv2d gradient check", "[tensor][gradcheck]") {
  Rng rng(13);
  Tensor x = randn({1, 2, 8, 8}, rng, true);
  Tensor w = randn({3, 2, 3, 3}, rng, true);
  Tensor b = randn({3}, rng, true);
  Tensor W = randn({1, 3, 4, 4}, rng);
  auto loss = [&] { return sum(mul(conv2d(x, w, b, 2, 2, 1, 1), W)); };
  auto res = check_gradients(loss, {x, w, b}, 10, rng);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("activation fixed points", "[tensor]") {
  REQUIRE(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  Tensor v = Tensor::filled({6}, 3.7);
  Tensor s = softmax_lastdim(v);
  for (double p : s.data()) REQUIRE_THAT(p, Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
}

TEST_CASE("softmax rows sum to one within 1e-12", "[tensor]") {
  Rng rng(21);
  Tensor x = randn({7, 11}, rng);
  Tensor s = softmax_lastdim(x);
  for (std::size_t r = 0; r < 7; ++r) {
    double acc = 0;
    for (std::size_t c = 0; c < 11; ++c) acc += s[r * 11 + c];
    REQUIRE_THAT(acc, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("GELU gradient matches finite differences at 17 random points", "[tensor][gradcheck]") {
  Rng rng(17);
  Tensor x = randn({17}, rng, true);
  Tensor w = randn({17}, rng);
  auto loss = [&] { return sum(mul(gelu(x), w)); };
  auto res = check_gradients(loss, {x}, 17, rng);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("losses: analytic anchors", "[tensor]") {
  Rng rng(23);
  Tensor x = randn({4, 5}, rng);
  REQUIRE(mse_loss(x, clone_values(x)).item() == 0.0);

  // uniform logits over 625 classes -> ln(625) for any target
  Tensor logits = Tensor::filled({1, 625}, 0.123);
  Tensor ce = cross_entropy(logits, {77});
  REQUIRE_THAT(ce.item(), Catch::Matchers::WithinAbs(std::log(625.0), 1e-9));
  REQUIRE_THAT(ce.item(), Catch::Matchers::WithinAbs(6.4378, 2e-4));

  REQUIRE_THROWS_AS(cross_entropy(logits, {625}), ValueError);
  REQUIRE_THROWS_AS(mse_loss(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("cross entropy gradient check", "[tensor][gradcheck]") {
  Rng rng(29);
  Tensor logits = randn({3, 6}, rng, true);
  auto loss = [&] { return cross_entropy(logits, {1, 5, 0}); };
  auto res = check_gradients(loss, {logits}, 12, rng);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("backward of sum gives all-ones gradient", "[tensor]") {
  Rng rng(31);
  Tensor x = randn({3, 4}, rng, true);
  Tape tape;
  Tensor loss = sum(x);
  tape.backward(loss);
  for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward requires scalar loss", "[tensor]") {
  Tensor x = Tensor::zeros({2, 2}, true);
  Tape tape;
  Tensor y = add(x, x);
  REQUIRE_THROWS_AS(tape.backward(y), ValueError);
}

TEST_CASE("whole-graph backward equals manual chain rule on a 3-op graph", "[tensor]") {
  Rng rng(37);
  Tensor x = randn({4}, rng, true);
  Tensor w = randn({4}, rng);

  // graph: y = silu(x); z = mul(y, w); loss = sum(z)
  {
    Tape tape;
    Tensor loss = sum(mul(silu(x), w));
    tape.backward(loss);
  }
  std::vector<double> whole = x.grad();
  x.zero_grad();

  // manual chain: dL/dz = 1; dL/dy = w; dL/dx = w * silu'(x)
  for (std::size_t i = 0; i < 4; ++i) {
    const double s = sigmoid_scalar(x[i]);
    const double dsilu = s * (1.0 + x[i] * (1.0 - s));
    REQUIRE_THAT(whole[i], Catch::Matchers::WithinAbs(w[i] * dsilu, 1e-12));
  }
}

TEST_CASE("Adam descends on w^2 and trains a small MLP", "[tensor][optim]") {
  // one step from w=1 with lr=0.1 decreases w
  Tensor w = Tensor::scalar(1.0, true);
  Adam opt(0.1);
  {
    Tape tape;
    Tensor loss = mul(w, w);
    tape.backward(loss);
    opt.step({w});
  }
  REQUIRE(w.item() < 1.0);

  // two-layer MLP on 8 samples: loss strictly decreases over 50 steps
  Rng rng(41);
  Tensor X = randn({8, 3}, rng);
  Tensor Y = randn({8, 2}, rng);
  Linear l1(3, 16, rng), l2(16, 2, rng);
  NamedParams np;
  l1.params(np, "l1");
  l2.params(np, "l2");
  auto params = param_tensors(np);
  Adam mlp_opt(1e-2);
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    Tensor pred = l2.forward(silu(l1.forward(X)));
    Tensor loss = mse_loss(pred, Y);
    if (step == 0) first = loss.item();
    last = loss.item();
    tape.backward(loss);
    mlp_opt.step(params);
  }
  REQUIRE(last < first);
}

TEST_CASE("determinism: same seed, bit-identical forward and trained params", "[tensor]") {
  auto run = [] {
    Rng rng(123);
    Tensor X = randn({4, 3}, rng);
    Tensor Y = randn({4, 2}, rng);
    Linear l(3, 2, rng);
    Adam opt(1e-2);
    NamedParams np;
    l.params(np, "l");
    auto params = param_tensors(np);
    for (int i = 0; i < 10; ++i) {
      Tape tape;
      Tensor loss = mse_loss(l.forward(X), Y);
      tape.backward(loss);
      opt.step(params);
    }
    return l.w.data();
  };
  REQUIRE(run() == run());
}

TEST_CASE("non-finite values are detected, not propagated", "[tensor]") {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  Tensor inf = Tensor::from({2}, {1.0, std::numeric_limits<double>::infinity()});
  // overflow inside an op must be caught
  Tensor big = Tensor::filled({2}, 1e200);
  REQUIRE_THROWS_AS(mul(big, big), NumericError);
  REQUIRE_THROWS_AS(add(x, inf), NumericError);
  REQUIRE_THROWS_AS(scale(x, std::numeric_limits<double>::quiet_NaN()), NumericError);
}

TEST_CASE("gradient battery over remaining differentiable ops", "[tensor][gradcheck]") {
  Rng rng(53);

  SECTION("elementwise and broadcast") {
    Tensor a = randn({3, 4}, rng, true);
    Tensor b = randn({3, 4}, rng, true);
    Tensor v = randn({4}, rng, true);
    Tensor w = randn({3, 4}, rng);
    auto l1 = [&] { return sum(mul(add(a, b), w)); };
    REQUIRE(check_gradients(l1, {a, b}, 10, rng).max_rel_err < 1e-4);
    auto l2 = [&] { return sum(mul(sub(a, b), w)); };
    REQUIRE(check_gradients(l2, {a, b}, 10, rng).max_rel_err < 1e-4);
    auto l3 = [&] { return sum(mul(add_rowvec(a, v), w)); };
    REQUIRE(check_gradients(l3, {a, v}, 10, rng).max_rel_err < 1e-4);
    auto l4 = [&] { return sum(mul(scale(add_const(a, 0.7), 1.3), w)); };
    REQUIRE(check_gradients(l4, {a}, 10, rng).max_rel_err < 1e-4);
    auto l5 = [&] { return mean(mul(a, b)); };
    REQUIRE(check_gradients(l5, {a, b}, 10, rng).max_rel_err < 1e-4);
  }

  SECTION("channel broadcast and upsample") {
    Tensor x = randn({2, 3, 4, 4}, rng, true);
    Tensor c = randn({3}, rng, true);
    Tensor w = randn({2, 3, 4, 4}, rng);
    auto l1 = [&] { return sum(mul(add_chanvec(x, c), w)); };
    REQUIRE(check_gradients(l1, {x, c}, 10, rng).max_rel_err < 1e-4);
    Tensor w2 = randn({2, 3, 8, 8}, rng);
    auto l2 = [&] { return sum(mul(upsample_nearest(x, 2, 2), w2)); };
    REQUIRE(check_gradients(l2, {x}, 10, rng).max_rel_err < 1e-4);
  }

  SECTION("bmm, permute, concat, slice, mask broadcast") {
    Tensor a = randn({2, 3, 4}, rng, true);
    Tensor b = randn({2, 4, 5}, rng, true);
    Tensor w = randn({2, 3, 5}, rng);
    auto l1 = [&] { return sum(mul(bmm(a, b), w)); };
    REQUIRE(check_gradients(l1, {a, b}, 12, rng).max_rel_err < 1e-4);

    Tensor wp = randn({4, 2, 3}, rng);
    auto l2 = [&] { return sum(mul(permute3(a, 2, 0, 1), wp)); };
    REQUIRE(check_gradients(l2, {a}, 10, rng).max_rel_err < 1e-4);

    Tensor c = randn({2, 2, 4}, rng, true);
    Tensor wc = randn({2, 5, 4}, rng);
    auto l3 = [&] { return sum(mul(concat3_dim1(a, c), wc)); };
    REQUIRE(check_gradients(l3, {a, c}, 10, rng).max_rel_err < 1e-4);

    Tensor ws = randn({2, 2, 4}, rng);
    auto l4 = [&] { return sum(mul(slice3_dim1(a, 1, 3), ws)); };
    REQUIRE(check_gradients(l4, {a}, 10, rng).max_rel_err < 1e-4);

    Tensor m = randn({3, 4}, rng, true);
    auto l5 = [&] { return sum(mul(add_broadcast_batch(a, m), reshape(wp, {2, 3, 4}))); };
    REQUIRE(check_gradients(l5, {a, m}, 10, rng).max_rel_err < 1e-4);
  }

  SECTION("activations, norm, softmax, embeddings") {
    Tensor x = randn({4, 6}, rng, true);
    Tensor w = randn({4, 6}, rng);
    auto l1 = [&] { return sum(mul(sigmoid(x), w)); };
    REQUIRE(check_gradients(l1, {x}, 10, rng).max_rel_err < 1e-4);
    auto l2 = [&] { return sum(mul(silu(x), w)); };
    REQUIRE(check_gradients(l2, {x}, 10, rng).max_rel_err < 1e-4);
    auto l3 = [&] { return sum(mul(softmax_lastdim(x), w)); };
    REQUIRE(check_gradients(l3, {x}, 10, rng).max_rel_err < 1e-4);

    Tensor g = randn({6}, rng, true);
    Tensor bb = randn({6}, rng, true);
    auto l4 = [&] { return sum(mul(layer_norm(x, g, bb), w)); };
    REQUIRE(check_gradients(l4, {x, g, bb}, 12, rng).max_rel_err < 1e-4);

    Tensor table = randn({9, 5}, rng, true);
    Tensor we = randn({4, 5}, rng);
    std::vector<int> ids{3, 1, 3, 8};
    auto l5 = [&] { return sum(mul(embedding_rows(table, ids), we)); };
    REQUIRE(check_gradients(l5, {table}, 10, rng).max_rel_err < 1e-4);

    Tensor wr = randn({24}, rng);
    auto l6 = [&] { return sum(mul(reshape(x, {24}), wr)); };
    REQUIRE(check_gradients(l6, {x}, 8, rng).max_rel_err < 1e-4);
  }

  SECTION("mse both sides") {
    Tensor p = randn({5}, rng, true);
    Tensor t = randn({5}, rng, true);
    auto l = [&] { return mse_loss(p, t); };
    REQUIRE(check_gradients(l, {p, t}, 10, rng).max_rel_err < 1e-4);
  }

  SECTION("tile_batch and masked_replace_rows") {
    Tensor x = randn({1, 3, 2}, rng, true);
    Tensor w = randn({4, 3, 2}, rng);
    auto l1 = [&] { return sum(mul(tile_batch(x, 4), w)); };
    REQUIRE(check_gradients(l1, {x}, 10, rng).max_rel_err < 1e-4);

    Tensor a = randn({4, 3}, rng, true);
    Tensor r = randn({4, 3}, rng, true);
    std::vector<char> mask{0, 1, 0, 1};
    Tensor wm = randn({4, 3}, rng);
    auto l2 = [&] { return sum(mul(masked_replace_rows(a, mask, r), wm)); };
    REQUIRE(check_gradients(l2, {a, r}, 10, rng).max_rel_err < 1e-4);
    // replaced rows: zero grad to x; kept rows: zero grad to repl
    {
      Tape tape;
      tape.backward(sum(masked_replace_rows(a, mask, r)));
      for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE(a.grad()[0 * 3 + j] == 1.0);
        REQUIRE(a.grad()[1 * 3 + j] == 0.0);
        REQUIRE(r.grad()[1 * 3 + j] == 1.0);
        REQUIRE(r.grad()[0 * 3 + j] == 0.0);
      }
      a.zero_grad();
      r.zero_grad();
    }
  }
}

TEST_CASE("attention composite gradient check", "[tensor][gradcheck]") {
  Rng rng(59);
  Attention attn(6, rng);
  Tensor x = randn({2, 3, 6}, rng, true);
  Tensor mask = causal_mask(3);
  Tensor w = randn({2, 3, 6}, rng);
  auto loss = [&] { return sum(mul(attn.self_forward(x, &mask), w)); };
  std::vector<Tensor> inputs{x, attn.q.w, attn.k.w, attn.v.w, attn.o.w, attn.q.b};
  REQUIRE(check_gradients(loss, inputs, 8, rng).max_rel_err < 1e-4);
}

TEST_CASE("causal mask blocks attention to the future", "[tensor]") {
  Rng rng(61);
  Attention attn(4, rng);
  Tensor mask = causal_mask(3);
  Tensor x = randn({1, 3, 4}, rng);
  Tensor y1 = attn.self_forward(x, &mask);
  // perturb the last position; earlier outputs must not move
  Tensor x2 = clone_values(x);
  for (std::size_t j = 0; j < 4; ++j) x2.mutable_data()[2 * 4 + j] += 1.0;
  Tensor y2 = attn.self_forward(x2, &mask);
  for (std::size_t i = 0; i < 2 * 4; ++i) REQUIRE(y1[i] == y2[i]);
}
