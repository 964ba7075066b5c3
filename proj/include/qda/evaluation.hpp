#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qda/clustering.hpp"
#include "qda/lexical.hpp"
#include "qda/topic_model.hpp"

namespace qda::eval {

// Undefined metrics hold NaN.
struct MetricsReport {
  std::int64_t outliers = 0;
  std::int64_t topics = 0;
  double ngram_score = 0.0;
  double gini = 0.0;
  double coherence_cv = 0.0;
  double silhouette = 0.0;
  double time_minutes = 0.0;
};

struct ComparisonRow {
  std::string model_tag;
  MetricsReport report;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

struct EvalOptions {
  std::size_t coherence_window = 110;
  std::size_t silhouette_sample_cap = 10'000;
  std::uint64_t seed = 0;
};

std::int64_t count_outliers(std::span<const int> labels);
std::int64_t count_topics(std::span<const int> labels);

// Share of keywords with two or more tokens, over all topics; NaN when the
// topics carry no keywords.
double ngram_score(const std::vector<topics::Topic>& topics);

// sum_i sum_j |x_i - x_j| / (2 n^2 mean); 0 for n <= 1 or an all-zero vector.
double gini(std::span<const std::int64_t> sizes);

// C_V coherence: boolean sliding windows over each text, NPMI with
// smoothing epsilon, one-set indirect cosine segmentation. A keyword with
// several tokens occurs in a window when its tokens appear contiguously.
// NaN when there are no topics, a topic has fewer than two keywords, a
// keyword never occurs, or a context vector is zero.
double coherence_cv(const std::vector<std::vector<topics::Term>>& topic_keywords,
                    const std::vector<std::vector<lexical::Token>>& texts, std::size_t window = 110,
                    double epsilon = 1e-12);

// Mean silhouette over non-outlier points. Above sample_cap scored points a
// seeded uniform sample is scored against itself. NaN with fewer than two
// clusters.
double silhouette(const clustering::Points& points, std::span<const int> labels, std::size_t sample_cap = 10'000,
                  std::uint64_t seed = 0);

// All metrics for the model's current topics over `points` (the clustering
// space). `minutes` is the externally timed pipeline duration.
MetricsReport evaluate(const topics::TopicModel& model, const topics::TopicContext& context,
                       const clustering::Points& points, double minutes, const EvalOptions& options = {});

// Throws DomainError on an empty input.
ComparisonTable compare_runs(std::vector<ComparisonRow> rows);

// Header: model,outliers,topics,ngram_score,gini,coherence_cv,silhouette,time_min.
// Reals carry three decimals, undefined values print as NaN.
std::string csv_header();
std::string csv_row(const std::string& model_tag, const MetricsReport& r);
void write_csv(std::ostream& out, const ComparisonTable& table);
void write_text(std::ostream& out, const ComparisonTable& table);
ComparisonTable read_csv(std::istream& in);

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t defined = 0;
};

// Mean and sample standard deviation of every metric over several runs;
// undefined values are skipped.
std::vector<MetricSummary> summarize(const std::vector<MetricsReport>& reports);
void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary);

}  // namespace qda::eval
