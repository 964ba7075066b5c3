#include "qda/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "qda/lexical.hpp"

namespace qda::pipeline {
namespace {

using nlohmann::json;

std::string format_name(corpus::InputFormat f) { return f == corpus::InputFormat::jsonl ? "jsonl" : "txt"; }

corpus::InputFormat parse_format(const std::string& s) {
  if (s == "txt" || s == "text") return corpus::InputFormat::plain_text;
  if (s == "jsonl") return corpus::InputFormat::jsonl;
  throw ConfigError("format must be txt or jsonl, got \"" + s + "\"");
}

std::string metric_name(reduction::Metric m) { return m == reduction::Metric::cosine ? "cosine" : "euclidean"; }

reduction::Metric parse_metric(const std::string& s) {
  if (s == "cosine") return reduction::Metric::cosine;
  if (s == "euclidean") return reduction::Metric::euclidean;
  throw ConfigError("metric must be cosine or euclidean, got \"" + s + "\"");
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs, corpus::InputFormat format) {
  const std::string ext = format == corpus::InputFormat::jsonl ? ".jsonl" : ".txt";
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
      }
    } else {
      files.emplace_back(in);
    }
  }
  return files;
}

lexical::StopwordList stopwords_for(const RunConfig& c) {
  return c.stopwords.empty() ? lexical::default_stopwords() : lexical::load_stopwords(c.stopwords);
}

template <typename F>
auto in_stage(Stage stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

json config_for_model(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  return j;
}

std::string model_tag(const RunConfig& c, const embed::EmbeddingMatrix& m) {
  if (!m.model_tag().empty()) return m.model_tag();
  return fs::path(c.embeddings).stem().string();
}

}  // namespace

void RunConfig::validate() const {
  if (min_tokens < 1) throw ConfigError("min_tokens must be >= 1");
  if (ngram_max < 1) throw ConfigError("ngram_range upper bound must be >= 1");
  if (keywords < 1) throw ConfigError("keywords must be >= 1");
  reduction.validate();
  clustering.validate();
}

json to_json(const RunConfig& c) {
  json min_samples = c.clustering.min_samples ? json(*c.clustering.min_samples) : json(nullptr);
  return json{{"corpus", c.corpus},
              {"format", format_name(c.format)},
              {"embeddings", c.embeddings},
              {"min_tokens", c.min_tokens},
              {"stopwords", c.stopwords},
              {"reduction",
               {{"n_neighbors", c.reduction.n_neighbors},
                {"min_dist", c.reduction.min_dist},
                {"spread", c.reduction.spread},
                {"epochs", c.reduction.epochs},
                {"metric", metric_name(c.reduction.metric)},
                {"n_components", c.reduction.n_components},
                {"negative_sample_rate", c.reduction.negative_sample_rate}}},
              {"clustering", {{"min_cluster_size", c.clustering.min_cluster_size}, {"min_samples", min_samples}}},
              {"ngram_range", {1, c.ngram_max}},
              {"keywords", c.keywords},
              {"representatives", c.representatives},
              {"seed", c.seed},
              {"out_dir", c.out_dir}};
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"corpus", "format", "embeddings", "min_tokens", "stopwords", "reduction", "clustering",
                  "ngram_range", "keywords", "representatives", "seed", "out_dir"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("corpus")) {
      const auto& corpus = j["corpus"];
      if (corpus.is_string()) {
        c.corpus = {corpus.get<std::string>()};
      } else {
        c.corpus = corpus.get<std::vector<std::string>>();
      }
    }
    for (auto& p : c.corpus) p = resolve(p, base_dir);
    if (j.contains("format")) c.format = parse_format(j["format"].get<std::string>());
    c.embeddings = resolve(j.value("embeddings", c.embeddings), base_dir);
    c.min_tokens = j.value("min_tokens", c.min_tokens);
    c.stopwords = resolve(j.value("stopwords", c.stopwords), base_dir);
    if (j.contains("reduction")) {
      const auto& r = j["reduction"];
      reject_unknown(r,
                     {"n_neighbors", "min_dist", "spread", "epochs", "metric", "n_components",
                      "negative_sample_rate"},
                     "reduction");
      c.reduction.n_neighbors = r.value("n_neighbors", c.reduction.n_neighbors);
      c.reduction.min_dist = r.value("min_dist", c.reduction.min_dist);
      c.reduction.spread = r.value("spread", c.reduction.spread);
      c.reduction.epochs = r.value("epochs", c.reduction.epochs);
      if (r.contains("metric")) c.reduction.metric = parse_metric(r["metric"].get<std::string>());
      c.reduction.n_components = r.value("n_components", c.reduction.n_components);
      c.reduction.negative_sample_rate = r.value("negative_sample_rate", c.reduction.negative_sample_rate);
    }
    if (j.contains("clustering")) {
      const auto& k = j["clustering"];
      reject_unknown(k, {"min_cluster_size", "min_samples"}, "clustering");
      c.clustering.min_cluster_size = k.value("min_cluster_size", c.clustering.min_cluster_size);
      if (k.contains("min_samples") && !k["min_samples"].is_null()) {
        c.clustering.min_samples = k["min_samples"].get<std::size_t>();
      }
    }
    if (j.contains("ngram_range")) {
      const auto range = j["ngram_range"].get<std::vector<std::size_t>>();
      if (range.size() != 2 || range[0] != 1 || range[1] < 1) {
        throw ConfigError("ngram_range must be [1, n] with n >= 1");
      }
      c.ngram_max = range[1];
    }
    c.keywords = j.value("keywords", c.keywords);
    c.representatives = j.value("representatives", c.representatives);
    c.seed = j.value("seed", c.seed);
    c.out_dir = resolve(j.value("out_dir", c.out_dir), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.reduction.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::ingest: return "ingest";
    case Stage::lexical: return "lexical";
    case Stage::embeddings: return "embeddings";
    case Stage::reduce: return "reduce";
    case Stage::cluster: return "cluster";
    case Stage::topics: return "topics";
    case Stage::evaluate: return "evaluate";
    case Stage::write: return "write";
  }
  return "unknown";
}

StageError::StageError(Stage stage, const std::string& cause)
    : Error(std::string(stage_name(stage)) + ": " + cause), stage_(stage), cause_(cause) {}

json metrics_json(const eval::MetricsReport& r) {
  auto real = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  return json{{"outliers", r.outliers},
              {"topics", r.topics},
              {"ngram_score", real(r.ngram_score)},
              {"gini", real(r.gini)},
              {"coherence_cv", real(r.coherence_cv)},
              {"silhouette", real(r.silhouette)},
              {"time_min", real(r.time_minutes)}};
}

void write_text_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << body;
    out.flush();
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json model_document(const topics::TopicModel& model, const Artifacts& artifacts) {
  json doc = model.to_json();
  json refs = json::object();
  auto add = [&](const char* key, const fs::path& p) {
    if (!p.empty()) refs[key] = p.generic_string();
  };
  add("sentences", artifacts.sentences);
  add("assignment", artifacts.assignment);
  add("reduced", artifacts.reduced);
  add("report", artifacts.report);
  doc["artifacts"] = refs;
  doc["assignment_ref"] = refs.value("assignment", "");
  return doc;
}

RunResult run_pipeline(const RunConfig& input, bool write) {
  RunConfig config = input;
  in_stage(Stage::config, [&] {
    config.reduction.seed = config.seed;
    config.validate();
    if (config.corpus.empty()) throw ConfigError("no corpus paths");
    if (config.embeddings.empty()) throw ConfigError("no embeddings path");
  });

  RunResult r;
  r.sentences = in_stage(Stage::ingest, [&] {
    const auto doc_set = corpus::ingest_corpus(expand_inputs(config.corpus, config.format), config.format);
    return corpus::segment_corpus(doc_set, corpus::default_abbreviations(), config.min_tokens,
                                  std::max(1u, std::thread::hardware_concurrency()));
  });
  const auto stopwords = in_stage(Stage::lexical, [&] { return stopwords_for(config); });

  r.embeddings = in_stage(Stage::embeddings, [&] {
    auto m = embed::load_embeddings(config.embeddings);
    embed::validate_alignment(r.sentences.size(), m);
    return m;
  });
  const auto context = in_stage(Stage::lexical, [&] {
    return topics::TopicContext::from_sentences(r.sentences, stopwords, &r.embeddings, config.keyword_options());
  });

  const auto start = std::chrono::steady_clock::now();
  r.reduced = in_stage(Stage::reduce, [&] { return reduction::reduce(r.embeddings, config.reduction); });
  const clustering::Points points{r.reduced.coords, r.reduced.dims};
  r.assignment = in_stage(Stage::cluster, [&] { return clustering::hdbscan(points, config.clustering); });
  r.model = in_stage(Stage::topics,
                     [&] { return topics::TopicModel::build(context, r.assignment, config_for_model(config)); });
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

  r.report = in_stage(Stage::evaluate, [&] {
    return eval::evaluate(r.model, context, points, minutes, eval::EvalOptions{110, 10'000, config.seed});
  });

  if (write) {
    in_stage(Stage::write, [&] {
      const fs::path dir = config.out_dir;
      const Artifacts names;
      fs::create_directories(dir);
      corpus::write_sentences_jsonl(dir / names.sentences, r.sentences);
      embed::write_qdae(dir / names.reduced, reduction::to_matrix(r.reduced));
      std::ostringstream assignment;
      clustering::write_assignment_csv(assignment, r.assignment);
      write_text_file(dir / names.assignment, assignment.str());
      std::ostringstream report;
      eval::write_csv(report, eval::compare_runs({{model_tag(config, r.embeddings), r.report}}));
      write_text_file(dir / names.report, report.str());
      write_text_file(dir / kModelFile, model_document(r.model, names).dump(2) + "\n");
    });
  }
  return r;
}

eval::MetricsReport Workspace::evaluate(const topics::TopicModel& m) const {
  if (reduced.n != sentences.size()) {
    throw ConfigError("no reduced coordinates for this model; pass them explicitly");
  }
  return eval::evaluate(m, context, points(), run_minutes.value_or(std::nan("")),
                        eval::EvalOptions{110, 10'000, config.seed});
}

std::unique_ptr<Workspace> load_workspace(const fs::path& model_path, const std::optional<fs::path>& points) {
  std::ifstream in(model_path);
  if (!in) throw ConfigError("cannot read model " + model_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("model " + model_path.string() + " is not valid JSON: " + e.what());
  }

  auto ws = std::make_unique<Workspace>();
  ws->model_path = model_path;
  ws->config = config_from_json(doc.value("run_config", json::object()));
  const fs::path dir = fs::absolute(model_path).parent_path();
  const json refs = doc.value("artifacts", json::object());
  auto ref = [&](const char* key) -> std::optional<fs::path> {
    if (!refs.contains(key)) return std::nullopt;
    fs::path p = refs[key].get<std::string>();
    return p.is_absolute() ? p : dir / p;
  };

  const auto sentences = ref("sentences");
  const auto assignment = ref("assignment");
  if (!sentences || !assignment) throw FormatError("model does not name its sentences and assignment");
  ws->sentences = corpus::read_sentences_jsonl(*sentences);
  {
    std::ifstream a(*assignment);
    if (!a) throw ConfigError("cannot read assignment " + assignment->string());
    ws->base_assignment = clustering::read_assignment_csv(a);
  }
  if (ws->base_assignment.size() != ws->sentences.size()) {
    throw FormatError("assignment rows " + std::to_string(ws->base_assignment.size()) + " ≠ sentences " +
                      std::to_string(ws->sentences.size()));
  }
  ws->embeddings = embed::load_embeddings(ws->config.embeddings);
  embed::validate_alignment(ws->sentences.size(), ws->embeddings);

  const auto reduced = points ? points : ref("reduced");
  if (reduced) {
    ws->reduced = reduction::from_matrix(embed::load_embeddings(*reduced));
    if (ws->reduced.n != ws->sentences.size()) {
      throw FormatError("reduced rows " + std::to_string(ws->reduced.n) + " ≠ sentences " +
                        std::to_string(ws->sentences.size()));
    }
  }
  if (const auto report = ref("report"); report && fs::exists(*report)) {
    std::ifstream r(*report);
    const auto table = eval::read_csv(r);
    if (!table.rows.empty() && !std::isnan(table.rows.front().report.time_minutes)) {
      ws->run_minutes = table.rows.front().report.time_minutes;
    }
  }

  ws->context = topics::TopicContext::from_sentences(ws->sentences, stopwords_for(ws->config), &ws->embeddings,
                                                     ws->config.keyword_options());
  ws->model = topics::TopicModel::from_json(doc, ws->context, ws->base_assignment);
  return ws;
}

json export_final_report(const Workspace& ws, const topics::TopicModel& model) {
  json topics = json::array();
  json warnings = json::array();
  for (const auto* t : model.selected_topics()) {
    json keywords = json::array();
    for (const auto& k : t->keywords) keywords.push_back(lexical::join_ngram(k.term));
    json reps = json::array();
    for (auto id : t->representatives) {
      reps.push_back({{"sent_id", id}, {"text", ws.sentences.at(static_cast<std::size_t>(id)).text}});
    }
    topics.push_back({{"topic_id", t->topic_id},
                      {"label", t->label},
                      {"size", t->size},
                      {"keywords", keywords},
                      {"representatives", reps}});
  }
  if (topics.empty()) warnings.push_back("no topics selected");
  json metrics = ws.reduced.n == ws.sentences.size() ? metrics_json(ws.evaluate(model)) : json(nullptr);
  if (metrics.is_null()) warnings.push_back("metrics unavailable without reduced coordinates");
  return json{{"revision", model.revision()},
              {"topic_count", topics.size()},
              {"topics", topics},
              {"metrics", metrics},
              {"warnings", warnings}};
}

SweepResult sweep(const std::vector<RunConfig>& configs, bool write) {
  if (configs.empty()) throw ConfigError("sweep needs at least one config");
  SweepResult out;
  for (const auto& c : configs) {
    const auto r = run_pipeline(c, write);
    out.tags.push_back(fs::path(c.out_dir).filename().string());
    out.reports.push_back(r.report);
  }
  out.summary = eval::summarize(out.reports);
  return out;
}

}  // namespace qda::pipeline
