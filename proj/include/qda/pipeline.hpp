#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qda/clustering.hpp"
#include "qda/corpus.hpp"
#include "qda/embed_store.hpp"
#include "qda/error.hpp"
#include "qda/evaluation.hpp"
#include "qda/reduction.hpp"
#include "qda/topic_model.hpp"

namespace qda::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  std::vector<std::string> corpus;
  corpus::InputFormat format = corpus::InputFormat::plain_text;
  std::string embeddings;
  std::int64_t min_tokens = 5;
  std::string stopwords;  // empty: bundled list
  reduction::ReductionConfig reduction;
  clustering::ClusterConfig clustering;
  std::size_t ngram_max = 2;  // keywords are n-grams of 1..ngram_max tokens
  std::size_t keywords = 10;
  std::size_t representatives = 3;
  std::uint64_t seed = 42;  // drives the reduction and silhouette sampling
  std::string out_dir = "out";

  void validate() const;
  topics::KeywordOptions keyword_options() const { return {ngram_max, keywords, representatives}; }
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected. Relative
// paths are resolved against `base_dir` when it is non-empty.
RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
RunConfig load_config(const fs::path& path);

enum class Stage { config, ingest, lexical, embeddings, reduce, cluster, topics, evaluate, write };
const char* stage_name(Stage s);

// Failure inside a pipeline stage; what() is "<stage>: <cause>".
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& cause);
  Stage stage() const { return stage_; }
  const std::string& cause() const { return cause_; }

 private:
  Stage stage_;
  std::string cause_;
};

// File names inside a run directory. Empty paths are omitted from model.json.
struct Artifacts {
  fs::path sentences = "sentences.jsonl";
  fs::path assignment = "assignment.csv";
  fs::path reduced = "reduced.qdae";
  fs::path report = "report.csv";
};

inline constexpr const char* kModelFile = "model.json";

struct RunResult {
  std::vector<corpus::Sentence> sentences;
  embed::EmbeddingMatrix embeddings;
  reduction::ReducedEmbedding reduced;
  clustering::ClusterAssignment assignment;
  topics::TopicModel model;
  eval::MetricsReport report;
};

// ingest, lexical, reduce, cluster, topics, evaluate; then writes the
// artifacts under config.out_dir when `write` is set. The reported time
// covers reduce, cluster and keyword extraction only.
RunResult run_pipeline(const RunConfig& config, bool write = true);

// model.json body: the model plus artifact file names relative to it.
nlohmann::json model_document(const topics::TopicModel& model, const Artifacts& artifacts = {});

// Everything needed to refine and evaluate a stored model.
struct Workspace {
  RunConfig config;
  fs::path model_path;
  std::vector<corpus::Sentence> sentences;
  embed::EmbeddingMatrix embeddings;
  reduction::ReducedEmbedding reduced;
  clustering::ClusterAssignment base_assignment;
  topics::TopicContext context;
  topics::TopicModel model;
  std::optional<double> run_minutes;  // from the stored report, if any

  Workspace() = default;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  clustering::Points points() const { return {reduced.coords, reduced.dims}; }
  eval::MetricsReport evaluate(const topics::TopicModel& m) const;
};

// Loads model.json and the artifacts it names. `points` overrides the
// stored reduced coordinates.
std::unique_ptr<Workspace> load_workspace(const fs::path& model_path,
                                          const std::optional<fs::path>& points = std::nullopt);

// Selected topics with their sentences, plus metrics over the refined
// assignment. An empty selection yields an empty list and a warning.
nlohmann::json export_final_report(const Workspace& ws, const topics::TopicModel& model);

struct SweepResult {
  std::vector<std::string> tags;
  std::vector<eval::MetricsReport> reports;
  std::vector<eval::MetricSummary> summary;
};

// One full run per config, each written to its own out_dir.
SweepResult sweep(const std::vector<RunConfig>& configs, bool write = true);

// Undefined metrics become null.
nlohmann::json metrics_json(const eval::MetricsReport& r);

// Writes through a temporary file and a rename.
void write_text_file(const fs::path& path, const std::string& body);

}  // namespace qda::pipeline
