#include <catch2/catch_amalgamated.hpp>

#include "signvid/checkpoint.hpp"
#include "test_support.hpp"

using namespace signvid;

TEST_CASE("checkpoint round-trip is bit exact", "[checkpoint]") {
  Rng rng(99);
  NamedParams params;
  params.emplace_back("enc.w", randn({3, 4, 2}, rng));
  params.emplace_back("enc.b", Tensor::from({2}, {std::nextafter(0.1, 1.0), -0.0}));
  params.emplace_back("scalar", Tensor::scalar(1e-308));

  auto dir = testsup::temp_dir("ckpt");
  const auto path = dir / "model.svck";
  save_checkpoint(path, params);
  NamedParams back = load_checkpoint(path);

  REQUIRE(back.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(back[i].first == params[i].first);
    REQUIRE(back[i].second.shape() == params[i].second.shape());
    // bit-exact, including signed zero
    for (std::size_t j = 0; j < params[i].second.size(); ++j)
      REQUIRE(std::bit_cast<std::uint64_t>(back[i].second[j]) ==
              std::bit_cast<std::uint64_t>(params[i].second[j]));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint header layout: magic, version, count", "[checkpoint]") {
  NamedParams params;
  params.emplace_back("t", Tensor::scalar(2.0));
  const std::string bytes = serialize_checkpoint(params);
  REQUIRE(bytes.size() >= 16);
  REQUIRE(bytes.substr(0, 4) == "SVIP");
  // version 1, little-endian u32
  REQUIRE(static_cast<unsigned char>(bytes[4]) == 1);
  REQUIRE(static_cast<unsigned char>(bytes[5]) == 0);
  // count 1, little-endian u64
  REQUIRE(static_cast<unsigned char>(bytes[8]) == 1);
}

TEST_CASE("checkpoint rejects corrupt input", "[checkpoint]") {
  NamedParams params;
  params.emplace_back("t", Tensor::from({3}, {1, 2, 3}));
  std::string bytes = serialize_checkpoint(params);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  REQUIRE_THROWS_AS(parse_checkpoint(bad_magic), IoError);

  std::string truncated = bytes.substr(0, bytes.size() - 5);
  REQUIRE_THROWS_AS(parse_checkpoint(truncated), IoError);

  std::string trailing = bytes + "zz";
  REQUIRE_THROWS_AS(parse_checkpoint(trailing), IoError);

  REQUIRE_THROWS_AS(load_checkpoint("/nonexistent/path/x.svck"), StateError);
}

TEST_CASE("assign_params loads values and checks shapes", "[checkpoint]") {
  Rng rng(7);
  Linear l(3, 2, rng);
  NamedParams model;
  l.params(model, "lin");

  NamedParams file;
  file.emplace_back("lin.w", Tensor::filled({3, 2}, 0.5));
  file.emplace_back("lin.b", Tensor::filled({2}, -1.0));
  file.emplace_back("extra.meta", Tensor::scalar(9.0));  // extras are fine
  assign_params(model, file);
  for (double v : l.w.data()) REQUIRE(v == 0.5);
  for (double v : l.b.data()) REQUIRE(v == -1.0);

  NamedParams wrong;
  wrong.emplace_back("lin.w", Tensor::filled({2, 2}, 0.0));
  wrong.emplace_back("lin.b", Tensor::filled({2}, 0.0));
  REQUIRE_THROWS_AS(assign_params(model, wrong), ShapeError);

  NamedParams missing;
  missing.emplace_back("lin.w", Tensor::filled({3, 2}, 0.0));
  REQUIRE_THROWS_AS(assign_params(model, missing), StateError);
}
