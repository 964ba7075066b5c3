#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "qda/error.hpp"
#include "qda/evaluation.hpp"
#include "qda/random.hpp"
#include "../support/metric_oracles.hpp"

using namespace qda;
using namespace qda::eval;
using namespace qda::testing;

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("counts") {
    const std::vector<int> labels = {0, -1, 2, 2, -1, 5};
    CHECK(count_outliers(labels) == 2);
    CHECK(count_topics(labels) == 3);
    CHECK(count_topics(std::vector<int>{-1}) == 0);
  }

  TEST_CASE("gini examples") {
    CHECK(gini(std::vector<std::int64_t>{4, 4, 4, 4}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(gini(std::vector<std::int64_t>{10, 0, 0, 0}) - 0.75) < 1e-12);
    CHECK(gini(std::vector<std::int64_t>{7}) == 0.0);
    CHECK(gini(std::vector<std::int64_t>{}) == 0.0);
    CHECK(gini(std::vector<std::int64_t>{0, 0}) == 0.0);
  }

  TEST_CASE("gini matches the pairwise definition") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::int64_t> x(2 + rng.below(40));
      for (auto& v : x) v = static_cast<std::int64_t>(rng.below(500));
      x[0] += 1;
      const double g = gini(x);
      CHECK(std::abs(g - gini_pairs(x)) < 1e-12);
      CHECK(g >= 0.0);
      CHECK(g < 1.0);
    }
  }

  TEST_CASE("silhouette matches the quadratic reference") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 3 + rng.below(60);
      const int k = 2 + static_cast<int>(rng.below(4));
      std::vector<double> xy;
      std::vector<int> labels;
      for (std::size_t i = 0; i < n; ++i) {
        const int l = static_cast<int>(rng.below(static_cast<std::uint64_t>(k + 1))) - 1;
        labels.push_back(l);
        xy.push_back(5.0 * std::max(l, 0) + rng.normal());
        xy.push_back(rng.normal());
      }
      labels[0] = 0;
      labels[1] = 1;
      const double got = silhouette(clustering::Points{xy, 2}, labels);
      CHECK(std::abs(got - silhouette_reference(xy, labels)) < 1e-9);
    }
  }

  TEST_CASE("silhouette edge cases and sampling") {
    const std::vector<double> xy = {0, 0, 1, 0, 10, 0, 11, 0};
    CHECK(std::isnan(silhouette(clustering::Points{xy, 2}, std::vector<int>{0, 0, -1, -1})));
    CHECK(std::isnan(silhouette(clustering::Points{xy, 2}, std::vector<int>{-1, -1, -1, -1})));
    CHECK(silhouette(clustering::Points{xy, 2}, std::vector<int>{0, 0, 1, 1}) > 0.8);

    Rng rng(9);
    std::vector<double> big;
    std::vector<int> labels;
    for (int i = 0; i < 3000; ++i) {
      labels.push_back(i % 3);
      big.push_back(8.0 * (i % 3) + rng.normal());
      big.push_back(rng.normal());
    }
    const clustering::Points p{big, 2};
    const double full = silhouette(p, labels, 0);
    const double a = silhouette(p, labels, 1000, 4);
    CHECK(a == silhouette(p, labels, 1000, 4));
    CHECK(std::abs(a - full) < 0.02);
  }

  TEST_CASE("ngram score") {
    std::vector<topics::Topic> ts(2);
    for (int i = 0; i < 10; ++i) {
      ts[0].keywords.push_back({{"w" + std::to_string(i)}, 1.0});
      ts[1].keywords.push_back({i < 3 ? topics::Term{"a", std::to_string(i)} : topics::Term{"b" + std::to_string(i)}, 1.0});
    }
    CHECK(ngram_score(ts) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(std::isnan(ngram_score({})));

    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<topics::Topic> r(1 + rng.below(5));
      std::size_t multi = 0, total = 0;
      for (auto& t : r) {
        for (std::size_t k = 0; k < 1 + rng.below(10); ++k) {
          const std::size_t len = 1 + rng.below(3);
          t.keywords.push_back({topics::Term(len, "x"), 0.0});
          multi += len >= 2;
          ++total;
        }
      }
      CHECK(ngram_score(r) == doctest::Approx(static_cast<double>(multi) / static_cast<double>(total)));
    }
  }

  TEST_CASE("coherence of always co-occurring keywords") {
    std::vector<std::vector<std::string>> texts;
    for (int i = 0; i < 30; ++i) texts.push_back(i % 3 == 0 ? split("alpha beta gamma") : split("delta epsilon"));
    const double c = coherence_cv({{{"alpha"}, {"beta"}, {"gamma"}}}, texts, 110);
    CHECK(c >= 0.99);
  }

  TEST_CASE("coherence of never co-occurring keywords") {
    std::vector<std::vector<std::string>> texts;
    for (int i = 0; i < 40; ++i) texts.push_back(i % 2 ? split("alpha x y") : split("beta z w"));
    const double c = coherence_cv({{{"alpha"}, {"beta"}}}, texts, 110);
    CHECK(c <= 0.05);
  }

  TEST_CASE("coherence matches the direct formula") {
    Rng rng(21);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<std::vector<std::string>> texts;
      for (std::size_t t = 0; t < 10 + rng.below(20); ++t) {
        std::vector<std::string> text;
        for (std::size_t k = 0; k < 3 + rng.below(25); ++k) text.push_back(vocab[rng.below(6 + trial % 4)]);
        texts.push_back(text);
      }
      texts.push_back(vocab);  // every term occurs somewhere, but not everywhere
      std::vector<std::vector<topics::Term>> topics(1 + rng.below(3));
      for (auto& t : topics) {
        std::set<topics::Term> chosen;
        const std::size_t m = 2 + rng.below(5);
        while (chosen.size() < m) {
          topics::Term term{vocab[rng.below(vocab.size())]};
          if (rng.uniform() < 0.2) term.push_back(vocab[rng.below(vocab.size())]);
          chosen.insert(term);
        }
        t.assign(chosen.begin(), chosen.end());
      }
      const std::size_t window = 4 + rng.below(12);
      const double got = coherence_cv(topics, texts, window);
      const double want = coherence_reference(topics, texts, window);
      if (std::isnan(want)) {
        CHECK(std::isnan(got));
      } else {
        CHECK(std::abs(got - want) < 1e-6);
      }
    }
  }

  TEST_CASE("coherence degenerate inputs are NaN") {
    const std::vector<std::vector<std::string>> texts = {split("a b c"), split("d e")};
    CHECK(std::isnan(coherence_cv({}, texts)));
    CHECK(std::isnan(coherence_cv({{{"a"}}}, texts)));
    CHECK(std::isnan(coherence_cv({{{"a"}, {"zzz"}}}, texts)));
    CHECK(std::isnan(coherence_cv({{{"a"}, {"b"}}}, {})));
  }

  TEST_CASE("report csv") {
    MetricsReport r{12, 4, 0.25, 1.0 / 3.0, std::nan(""), -0.0001, 0.52345};
    CHECK(csv_header() == "model,outliers,topics,ngram_score,gini,coherence_cv,silhouette,time_min");
    CHECK(csv_row("mpnet", r) == "mpnet,12,4,0.250,0.333,NaN,0.000,0.523");
    std::stringstream s;
    write_csv(s, compare_runs({{"a", r}, {"b", MetricsReport{}}}));
    const auto back = read_csv(s);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].model_tag == "a");
    CHECK(back.rows[0].report.gini == doctest::Approx(0.333));
    CHECK(std::isnan(back.rows[0].report.coherence_cv));
    CHECK_THROWS_AS(compare_runs({}), DomainError);
    std::stringstream bad("model,x\n");
    CHECK_THROWS_AS(read_csv(bad), FormatError);
    std::stringstream shortrow(csv_header() + "\na,1,2\n");
    CHECK_THROWS_AS(read_csv(shortrow), FormatError);

    std::ostringstream text;
    write_text(text, compare_runs({{"a", r}}));
    CHECK(text.str().find("Coherence (C_V)") != std::string::npos);
    CHECK(text.str().find("NaN") != std::string::npos);
  }

  TEST_CASE("summary over runs") {
    MetricsReport a{10, 3, 0.1, 0.2, 0.5, 0.4, 1.0};
    MetricsReport b{14, 5, 0.3, 0.2, std::nan(""), 0.6, 2.0};
    const auto s = summarize({a, b});
    REQUIRE(s.size() == 7);
    CHECK(s[0].metric == "outliers");
    CHECK(s[0].mean == 12.0);
    CHECK(s[0].stdev == doctest::Approx(std::sqrt(8.0)));
    CHECK(s[3].metric == "gini");
    CHECK(s[3].stdev == 0.0);
    CHECK(s[4].defined == 1);
    CHECK(s[4].stdev == 0.0);
    const auto one = summarize({a});
    for (const auto& m : one) CHECK(m.stdev == 0.0);
    std::ostringstream out;
    write_summary_csv(out, s);
    CHECK(out.str().rfind("metric,mean,stdev,runs\noutliers,12.000,2.828,2\n", 0) == 0);
  }
}
