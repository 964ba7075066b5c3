#include "qda/topic_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "qda/error.hpp"

namespace qda::topics {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxLabelChars = 120;

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string default_label(int id) { return "topic_" + std::to_string(id); }

const char* kind_name(RefinementAction::Kind k) {
  switch (k) {
    case RefinementAction::Kind::merge: return "merge";
    case RefinementAction::Kind::rename: return "rename";
    case RefinementAction::Kind::select: return "select";
  }
  return "?";
}

}  // namespace

TopicContext TopicContext::from_sentences(const std::vector<corpus::Sentence>& sentences,
                                          const lexical::StopwordList& stopwords,
                                          const embed::EmbeddingMatrix* vectors, KeywordOptions options) {
  TopicContext ctx;
  ctx.vectors = vectors;
  ctx.options = options;
  ctx.tokens.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto tokens = lexical::tokenize(s.text);
    std::erase_if(tokens, [&](const lexical::Token& t) { return stopwords.contains(t); });
    ctx.tokens.push_back(std::move(tokens));
  }
  return ctx;
}

std::map<int, TermWeights> ctfidf(const std::vector<std::vector<lexical::Token>>& tokens,
                                  const std::vector<int>& labels, std::size_t max_n) {
  if (tokens.size() != labels.size()) throw DomainError("ctfidf: tokens and labels differ in length");
  if (max_n < 1) throw ConfigError("ngram range upper bound must be >= 1");

  std::map<int, std::map<Term, std::int64_t>> tf;
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    if (labels[s] < 0) continue;
    auto& counts = tf[labels[s]];
    const auto& sent = tokens[s];
    for (std::size_t n = 1; n <= max_n; ++n) {
      for (std::size_t i = 0; i + n <= sent.size(); ++i) {
        ++counts[Term(sent.begin() + static_cast<std::ptrdiff_t>(i), sent.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
    }
  }
  if (tf.empty()) throw DomainError("nothing to model");

  std::map<Term, std::int64_t> total;
  std::int64_t occurrences = 0;
  for (const auto& [label, counts] : tf) {
    for (const auto& [term, c] : counts) {
      total[term] += c;
      occurrences += c;
    }
  }
  const double avg = static_cast<double>(occurrences) / static_cast<double>(tf.size());

  std::map<int, TermWeights> weights;
  for (const auto& [label, counts] : tf) {
    auto& w = weights[label];
    for (const auto& [term, c] : counts) {
      w[term] = static_cast<double>(c) * std::log(1.0 + avg / static_cast<double>(total[term]));
    }
  }
  return weights;
}

std::vector<Keyword> top_keywords(const TermWeights& weights, std::size_t k) {
  std::vector<Keyword> all;
  all.reserve(weights.size());
  for (const auto& [term, w] : weights) all.push_back(Keyword{term, w});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Keyword& a, const Keyword& b) {
                      return a.weight != b.weight ? a.weight > b.weight : a.term < b.term;
                    });
  all.resize(keep);
  return all;
}

std::vector<std::int64_t> representative_sentences(const std::vector<std::int64_t>& members,
                                                   const embed::EmbeddingMatrix& vectors, std::size_t k) {
  const std::size_t dims = vectors.cols();
  std::vector<double> centroid(dims, 0.0);
  for (auto id : members) {
    const auto row = vectors.row(static_cast<std::size_t>(id));
    for (std::size_t d = 0; d < dims; ++d) centroid[d] += row[d];
  }
  for (double& x : centroid) x /= static_cast<double>(std::max<std::size_t>(members.size(), 1));

  double centroid_norm = 0.0;
  for (double x : centroid) centroid_norm += x * x;
  std::vector<std::pair<double, std::int64_t>> scored;
  scored.reserve(members.size());
  for (auto id : members) {
    double sim = -2.0;  // below any cosine, used for zero vectors
    if (centroid_norm > 0.0) {
      std::vector<double> row(vectors.row(static_cast<std::size_t>(id)).begin(),
                              vectors.row(static_cast<std::size_t>(id)).end());
      try {
        sim = embed::cosine_similarity(std::span<const double>(row), std::span<const double>(centroid));
      } catch (const DomainError&) {
      }
    }
    scored.emplace_back(sim, id);
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
  return out;
}

const Topic* TopicModel::find(int topic_id) const {
  auto it = std::lower_bound(topics_.begin(), topics_.end(), topic_id,
                             [](const Topic& t, int id) { return t.topic_id < id; });
  return (it != topics_.end() && it->topic_id == topic_id) ? &*it : nullptr;
}

Topic& TopicModel::topic_ref(int topic_id) {
  const Topic* t = find(topic_id);
  if (t == nullptr) throw DomainError("unknown topic");
  return const_cast<Topic&>(*t);
}

std::vector<std::int64_t> TopicModel::members(int topic_id) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == topic_id) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

std::vector<const Topic*> TopicModel::selected_topics() const {
  std::vector<const Topic*> out;
  for (const auto& t : topics_) {
    if (t.selected) out.push_back(&t);
  }
  return out;
}

std::int64_t TopicModel::outlier_count() const {
  return static_cast<std::int64_t>(std::count(labels_.begin(), labels_.end(), -1));
}

void TopicModel::refresh_keywords(const TopicContext& context) {
  if (topics_.empty()) return;
  const auto weights = ctfidf(context.tokens, labels_, context.options.max_n);
  for (auto& t : topics_) {
    auto it = weights.find(t.topic_id);
    t.keywords = it == weights.end() ? std::vector<Keyword>{} : top_keywords(it->second, context.options.top_k);
  }
}

TopicModel TopicModel::build(const TopicContext& context, const clustering::ClusterAssignment& assignment,
                             json run_config) {
  if (assignment.labels.size() != context.tokens.size()) {
    throw DomainError("assignment covers " + std::to_string(assignment.labels.size()) + " sentences, corpus has " +
                      std::to_string(context.tokens.size()));
  }
  TopicModel model;
  model.labels_ = assignment.labels;
  model.strength_ = assignment.strength;
  if (model.strength_.size() != model.labels_.size()) {
    model.strength_.assign(model.labels_.size(), 0.0);
    for (std::size_t i = 0; i < model.labels_.size(); ++i) model.strength_[i] = model.labels_[i] < 0 ? 0.0 : 1.0;
  }
  model.run_config_ = std::move(run_config);

  std::map<int, std::int64_t> sizes;
  for (int l : model.labels_) {
    if (l >= 0) ++sizes[l];
  }
  for (const auto& [id, size] : sizes) {
    Topic t;
    t.topic_id = id;
    t.label = default_label(id);
    t.size = size;
    if (context.vectors != nullptr) {
      t.representatives = representative_sentences(model.members(id), *context.vectors, context.options.representatives);
    }
    model.topics_.push_back(std::move(t));
  }
  model.next_id_ = sizes.empty() ? 0 : sizes.rbegin()->first + 1;
  model.refresh_keywords(context);
  return model;
}

TopicModel TopicModel::merge(const TopicContext& context, const std::vector<int>& ids) const {
  std::set<int> distinct;
  for (int id : ids) {
    if (id < 0) throw DomainError("cannot merge the outlier class");
    if (find(id) == nullptr) throw DomainError("unknown topic");
    distinct.insert(id);
  }
  if (distinct.size() < 2) throw DomainError("merge needs at least two distinct topics");

  TopicModel next = *this;
  Topic merged;
  merged.topic_id = next.next_id_++;
  merged.label = default_label(merged.topic_id);
  for (int id : distinct) {
    const Topic* t = find(id);
    merged.size += t->size;
    merged.selected = merged.selected || t->selected;
    next.retired_.push_back(id);
  }
  for (int& l : next.labels_) {
    if (l >= 0 && distinct.contains(l)) l = merged.topic_id;
  }
  std::erase_if(next.topics_, [&](const Topic& t) { return distinct.contains(t.topic_id); });
  if (context.vectors != nullptr) {
    merged.representatives =
        representative_sentences(next.members(merged.topic_id), *context.vectors, context.options.representatives);
  }
  next.topics_.push_back(std::move(merged));
  next.refresh_keywords(context);
  next.log_.push_back(RefinementAction{RefinementAction::Kind::merge, std::vector<int>(distinct.begin(), distinct.end()),
                                       {}, next.topics_.back().topic_id});
  return next;
}

TopicModel TopicModel::rename(int topic_id, const std::string& label) const {
  if (label.empty() || utf8_length(label) > kMaxLabelChars) {
    throw DomainError("label must be 1-" + std::to_string(kMaxLabelChars) + " characters");
  }
  TopicModel next = *this;
  next.topic_ref(topic_id).label = label;
  next.log_.push_back(RefinementAction{RefinementAction::Kind::rename, {topic_id}, label, -1});
  return next;
}

TopicModel TopicModel::select(const std::vector<int>& ids) const {
  std::set<int> chosen(ids.begin(), ids.end());
  for (int id : chosen) {
    if (find(id) == nullptr) throw DomainError("unknown topic");
  }
  TopicModel next = *this;
  for (auto& t : next.topics_) t.selected = chosen.contains(t.topic_id);
  next.log_.push_back(RefinementAction{RefinementAction::Kind::select, std::vector<int>(chosen.begin(), chosen.end()),
                                       {}, -1});
  return next;
}

TopicModel TopicModel::apply(const TopicContext& context, const RefinementAction& action) const {
  switch (action.kind) {
    case RefinementAction::Kind::merge: {
      TopicModel next = merge(context, action.ids);
      if (action.result_id >= 0 && next.log_.back().result_id != action.result_id) {
        throw FormatError("refinement log replay diverged: merge produced topic " +
                          std::to_string(next.log_.back().result_id) + ", log records " +
                          std::to_string(action.result_id));
      }
      return next;
    }
    case RefinementAction::Kind::rename:
      if (action.ids.size() != 1) throw FormatError("rename action must name one topic");
      return rename(action.ids.front(), action.label);
    case RefinementAction::Kind::select:
      return select(action.ids);
  }
  throw FormatError("unknown refinement action");
}

TopicModel TopicModel::replay(const TopicContext& context, const std::vector<RefinementAction>& log) const {
  TopicModel model = *this;
  for (const auto& action : log) model = model.apply(context, action);
  return model;
}

json to_json(const RefinementAction& a) {
  json j{{"op", kind_name(a.kind)}, {"ids", a.ids}};
  if (a.kind == RefinementAction::Kind::rename) j["label"] = a.label;
  if (a.kind == RefinementAction::Kind::merge) j["result_id"] = a.result_id;
  return j;
}

RefinementAction action_from_json(const json& j) {
  RefinementAction a;
  const std::string op = j.at("op").get<std::string>();
  if (op == "merge") {
    a.kind = RefinementAction::Kind::merge;
    a.result_id = j.value("result_id", -1);
  } else if (op == "rename") {
    a.kind = RefinementAction::Kind::rename;
    a.label = j.at("label").get<std::string>();
  } else if (op == "select") {
    a.kind = RefinementAction::Kind::select;
  } else {
    throw FormatError("unknown refinement op \"" + op + "\"");
  }
  a.ids = j.at("ids").get<std::vector<int>>();
  return a;
}

json TopicModel::to_json() const {
  json topics = json::array();
  for (const auto& t : topics_) {
    json keywords = json::array();
    for (const auto& k : t.keywords) {
      keywords.push_back({{"term", lexical::join_ngram(k.term)}, {"tokens", k.term}, {"weight", k.weight}});
    }
    topics.push_back({{"topic_id", t.topic_id},
                      {"label", t.label},
                      {"size", t.size},
                      {"keywords", keywords},
                      {"representatives", t.representatives},
                      {"selected", t.selected}});
  }
  json log = json::array();
  for (const auto& a : log_) log.push_back(topics::to_json(a));
  return json{{"run_config", run_config_},
              {"topics", topics},
              {"outliers", outlier_count()},
              {"next_id", next_id_},
              {"retired_ids", retired_},
              {"refinement_log", log},
              {"revision", revision()}};
}

TopicModel TopicModel::from_json(const json& j, const TopicContext& context,
                                 const clustering::ClusterAssignment& base_assignment) {
  const TopicModel base = build(context, base_assignment, j.value("run_config", json::object()));
  std::vector<RefinementAction> log;
  for (const auto& a : j.value("refinement_log", json::array())) log.push_back(action_from_json(a));
  TopicModel model = base.replay(context, log);

  if (j.contains("revision") && j["revision"].get<std::int64_t>() != model.revision()) {
    throw FormatError("model revision does not match its refinement log");
  }
  if (j.contains("topics")) {
    json stored = j;
    json rebuilt = model.to_json();
    if (stored["topics"].dump() != rebuilt["topics"].dump()) {
      throw FormatError("stored topics differ from the replayed refinement log");
    }
  }
  return model;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string TopicModel::hash() const { return fnv1a_hex(to_json().dump()); }

}  // namespace qda::topics
