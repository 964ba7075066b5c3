#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qda/clustering.hpp"
#include "qda/corpus.hpp"
#include "qda/embed_store.hpp"
#include "qda/lexical.hpp"

namespace qda::topics {

using Term = lexical::NGram;
using TermWeights = std::map<Term, double>;

struct Keyword {
  Term term;
  double weight = 0.0;

  bool operator==(const Keyword&) const = default;
};

struct Topic {
  int topic_id = 0;
  std::string label;
  std::int64_t size = 0;
  std::vector<Keyword> keywords;  // weight descending
  std::vector<std::int64_t> representatives;
  bool selected = false;

  bool operator==(const Topic&) const = default;
};

struct KeywordOptions {
  std::size_t max_n = 2;
  std::size_t top_k = 10;
  std::size_t representatives = 3;
};

// Read-only inputs shared by every model operation: per-sentence keyword
// tokens (lowercased, stopwords removed) and the vectors used to pick
// representative sentences.
struct TopicContext {
  std::vector<std::vector<lexical::Token>> tokens;
  const embed::EmbeddingMatrix* vectors = nullptr;
  KeywordOptions options;

  static TopicContext from_sentences(const std::vector<corpus::Sentence>& sentences,
                                     const lexical::StopwordList& stopwords, const embed::EmbeddingMatrix* vectors,
                                     KeywordOptions options = {});
};

// Class-based TF-IDF. Each non-negative label is one class whose document is
// the concatenation of its sentences; terms are n-grams of 1..max_n tokens.
// W(t, c) = tf(t, c) * ln(1 + A / f(t)), f(t) the total count of t over all
// classes and A the mean number of term occurrences per class. Outliers (-1)
// take no part. Throws DomainError("nothing to model") when no class exists.
std::map<int, TermWeights> ctfidf(const std::vector<std::vector<lexical::Token>>& tokens,
                                  const std::vector<int>& labels, std::size_t max_n = 2);

// The k heaviest terms, ties in lexicographic term order.
std::vector<Keyword> top_keywords(const TermWeights& weights, std::size_t k = 10);

// Members closest (cosine) to their centroid, ties to the smaller sent_id.
std::vector<std::int64_t> representative_sentences(const std::vector<std::int64_t>& members,
                                                   const embed::EmbeddingMatrix& vectors, std::size_t k = 3);

struct RefinementAction {
  enum class Kind { merge, rename, select };
  Kind kind = Kind::merge;
  std::vector<int> ids;
  std::string label;  // rename
  int result_id = -1;  // merge

  bool operator==(const RefinementAction&) const = default;
};

class TopicModel {
 public:
  const std::vector<Topic>& topics() const { return topics_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<double>& strength() const { return strength_; }
  const std::vector<RefinementAction>& refinement_log() const { return log_; }
  const std::vector<int>& retired_ids() const { return retired_; }
  const nlohmann::json& run_config() const { return run_config_; }
  std::int64_t revision() const { return static_cast<std::int64_t>(log_.size()); }
  int next_id() const { return next_id_; }

  const Topic* find(int topic_id) const;
  std::vector<std::int64_t> members(int topic_id) const;
  std::vector<const Topic*> selected_topics() const;
  std::int64_t outlier_count() const;

  clustering::ClusterAssignment assignment() const { return {labels_, strength_}; }

  // Assembles topics from a cluster assignment: one topic per label with
  // keywords and representatives, default label "topic_<id>".
  static TopicModel build(const TopicContext& context, const clustering::ClusterAssignment& assignment,
                          nlohmann::json run_config = nlohmann::json::object());

  // Merges >= 2 distinct existing topics into a new topic with a fresh id;
  // keywords of every topic are recomputed. Throws DomainError("unknown
  // topic") or DomainError on -1 / fewer than two distinct ids.
  TopicModel merge(const TopicContext& context, const std::vector<int>& ids) const;
  // Label must be 1..120 characters.
  TopicModel rename(int topic_id, const std::string& label) const;
  // Marks exactly `ids` as selected.
  TopicModel select(const std::vector<int>& ids) const;

  TopicModel apply(const TopicContext& context, const RefinementAction& action) const;
  // Re-applies `log` to this model.
  TopicModel replay(const TopicContext& context, const std::vector<RefinementAction>& log) const;

  nlohmann::json to_json() const;
  // Restores refinement state from JSON and the base assignment. Topics
  // are recomputed by replaying the stored log on the base model.
  static TopicModel from_json(const nlohmann::json& j, const TopicContext& context,
                              const clustering::ClusterAssignment& base_assignment);

  // FNV-1a over the canonical JSON dump.
  std::string hash() const;

  bool operator==(const TopicModel&) const = default;

 private:
  void refresh_keywords(const TopicContext& context);
  Topic& topic_ref(int topic_id);

  std::vector<Topic> topics_;  // ascending topic_id
  std::vector<int> labels_;
  std::vector<double> strength_;
  std::vector<RefinementAction> log_;
  std::vector<int> retired_;
  nlohmann::json run_config_ = nlohmann::json::object();
  int next_id_ = 0;
};

nlohmann::json to_json(const RefinementAction& a);
RefinementAction action_from_json(const nlohmann::json& j);
std::string fnv1a_hex(const std::string& data);

}  // namespace qda::topics
