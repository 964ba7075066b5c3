#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "qda/embed_store.hpp"
#include "qda/error.hpp"
#include "qda/random.hpp"
#include "../support/scratch.hpp"

using namespace qda;
using namespace qda::embed;
using qda::testing::read_file;
using qda::testing::scratch_dir;
using qda::testing::write_file;

namespace {

std::string header(std::uint64_t n, std::uint32_t d, const std::string& tag) {
  std::string h = "QDAE";
  auto put = [&](const void* p, std::size_t bytes) { h.append(static_cast<const char*>(p), bytes); };
  const std::uint32_t version = 1;
  const auto tag_len = static_cast<std::uint16_t>(tag.size());
  put(&version, 4);
  put(&n, 8);
  put(&d, 4);
  put(&tag_len, 2);
  h += tag;
  return h;
}

}  // namespace

TEST_SUITE("embed_store") {
  TEST_CASE("3x4 round trip") {
    const auto dir = scratch_dir("embed_rt");
    std::vector<float> data(12);
    for (std::size_t i = 0; i < 12; ++i) data[i] = static_cast<float>(i) * 0.5f - 2.0f;
    const EmbeddingMatrix m(3, 4, data, "all-mpnet-base-v2");
    write_qdae(dir / "m.qdae", m);
    const auto bytes = read_file(dir / "m.qdae");
    CHECK(bytes.size() == header(3, 4, "all-mpnet-base-v2").size() + 48);
    CHECK(bytes.substr(0, header(3, 4, "all-mpnet-base-v2").size()) == header(3, 4, "all-mpnet-base-v2"));
    const auto back = load_embeddings(dir / "m.qdae");
    CHECK(back == m);
    CHECK(back.model_tag() == "all-mpnet-base-v2");
  }

  TEST_CASE("random matrices round trip bit-exactly") {
    const auto dir = scratch_dir("embed_random");
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = 1 + rng.below(50);
      const std::size_t d = 2 + rng.below(30);
      std::vector<float> data(n * d);
      for (auto& x : data) x = static_cast<float>(rng.normal() * 1e3);
      const EmbeddingMatrix m(n, d, data, "t" + std::to_string(trial));
      write_qdae(dir / "r.qdae", m);
      const auto back = load_embeddings(dir / "r.qdae");
      REQUIRE(back.rows() == n);
      CHECK(std::memcmp(back.data().data(), data.data(), data.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("short payload is a truncated file") {
    const auto dir = scratch_dir("embed_trunc");
    write_file(dir / "t.qdae", header(3, 4, "") + std::string(40, '\0'));
    CHECK_THROWS_WITH_AS(load_embeddings(dir / "t.qdae"), doctest::Contains("truncated file"), FormatError);
    write_file(dir / "h.qdae", std::string("QDAE\x01\x00", 6));
    CHECK_THROWS_WITH_AS(load_embeddings(dir / "h.qdae"), doctest::Contains("truncated file"), FormatError);
  }

  TEST_CASE("bad magic, trailing bytes, missing file") {
    const auto dir = scratch_dir("embed_bad");
    write_file(dir / "x.qdae", "NOPE" + std::string(40, '\0'));
    CHECK_THROWS_WITH_AS(load_embeddings(dir / "x.qdae"), doctest::Contains("not an embedding file"), FormatError);
    write_file(dir / "y.qdae", header(1, 2, "") + std::string(12, '\0'));
    CHECK_THROWS_AS(load_embeddings(dir / "y.qdae"), FormatError);
    CHECK_THROWS_WITH(load_embeddings(dir / "absent.qdae"), doctest::Contains("embedding file not found"));
  }

  TEST_CASE("non-finite value names its row") {
    const auto dir = scratch_dir("embed_nan");
    std::string body = header(3, 2, "");
    const float values[6] = {0, 1, 2, 3, std::numeric_limits<float>::quiet_NaN(), 5};
    body.append(reinterpret_cast<const char*>(values), sizeof values);
    write_file(dir / "n.qdae", body);
    CHECK_THROWS_WITH_AS(load_embeddings(dir / "n.qdae"), doctest::Contains("invalid vector at row 2"), FormatError);
  }

  TEST_CASE("csv fallback") {
    const auto m = parse_csv("1.0,0.0\n0.0,1.0");
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m.row(0)[0] == 1.0f);
    CHECK(m.row(0)[1] == 0.0f);
    CHECK(m.row(1)[1] == 1.0f);
    const auto dir = scratch_dir("embed_csv");
    write_file(dir / "e.csv", "1,2,3\n4,5,6\n");
    CHECK(load_embeddings(dir / "e.csv").rows() == 2);
    CHECK_THROWS_AS(parse_csv("1,2\n3\n"), FormatError);
    CHECK_THROWS_AS(parse_csv("1\n2\n"), FormatError);
  }

  TEST_CASE("alignment") {
    const EmbeddingMatrix nine(9, 2, std::vector<float>(18, 1.0f));
    CHECK_NOTHROW(validate_alignment(9, nine));
    CHECK_THROWS_WITH(validate_alignment(10, nine), "embedding rows 9 ≠ sentences 10");
    CHECK_THROWS(validate_alignment(0, EmbeddingMatrix()));
  }

  TEST_CASE("cosine similarity") {
    const std::vector<float> e1 = {1, 0};
    const std::vector<float> e2 = {0, 1};
    const std::vector<float> d = {1, 1};
    const std::vector<float> zero = {0, 0};
    CHECK(cosine_similarity(std::span<const float>(e1), std::span<const float>(e1)) == doctest::Approx(1.0));
    CHECK(cosine_similarity(std::span<const float>(e1), std::span<const float>(e2)) == 0.0);
    CHECK(std::abs(cosine_similarity(std::span<const float>(d), std::span<const float>(e1)) - 0.70710678) < 1e-8);
    CHECK_THROWS_AS(cosine_similarity(std::span<const float>(zero), std::span<const float>(e1)), DomainError);

    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      std::vector<float> u(8);
      std::vector<float> v(8);
      for (auto& x : u) x = static_cast<float>(rng.normal());
      for (auto& x : v) x = static_cast<float>(rng.normal());
      CHECK(std::abs(cosine_similarity(std::span<const float>(u), std::span<const float>(u)) - 1.0) < 1e-6);
      CHECK(cosine_similarity(std::span<const float>(u), std::span<const float>(v)) ==
            cosine_similarity(std::span<const float>(v), std::span<const float>(u)));
    }
  }
}
