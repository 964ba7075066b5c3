#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "qda/clustering.hpp"
#include "qda/corpus.hpp"
#include "qda/embed_store.hpp"
#include "qda/evaluation.hpp"
#include "qda/lexical.hpp"
#include "qda/pipeline.hpp"
#include "qda/reduction.hpp"
#include "qda/service.hpp"
#include "qda/topic_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qda;

namespace {

// Error raised by a named command stage; mapped to exit code 2.
struct Failure {
  std::string stage;
  std::string message;
};

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const pipeline::StageError& e) {
    throw Failure{pipeline::stage_name(e.stage()), e.cause()};
  } catch (const std::exception& e) {
    throw Failure{name, e.what()};
  }
}

void emit(const std::string& out_path, const std::string& body) {
  if (out_path.empty() || out_path == "-") {
    std::cout << body;
  } else {
    pipeline::write_text_file(out_path, body);
  }
}

corpus::InputFormat format_of(const std::string& s) {
  if (s == "jsonl") return corpus::InputFormat::jsonl;
  return corpus::InputFormat::plain_text;
}

reduction::Metric metric_of(const std::string& s) {
  return s == "euclidean" ? reduction::Metric::euclidean : reduction::Metric::cosine;
}

lexical::StopwordList stopwords_of(const std::string& path) {
  return path.empty() ? lexical::default_stopwords() : lexical::load_stopwords(path);
}

std::string stats_text(const corpus::CorpusStats& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "Total Sentences," << s.total_sentences << '\n'
      << "Average Sentence Length," << s.avg_length << '\n'
      << "Minimum Sentence Length," << s.min_length << '\n'
      << "Maximum Sentence Length," << s.max_length << '\n'
      << "Sentences < 5 Tokens," << s.under_5 << '\n'
      << "Sentences > 25 Tokens," << s.over_25 << '\n';
  return out.str();
}

std::string report_csv(const std::string& tag, const eval::MetricsReport& r) {
  std::ostringstream out;
  eval::write_csv(out, eval::compare_runs({{tag, r}}));
  return out.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative discourse analysis: corpus statistics and topic modelling over precomputed embeddings"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Segment documents into sentences");
  std::vector<std::string> ingest_paths;
  std::string ingest_format = "txt";
  std::int64_t ingest_min_tokens = 5;
  std::string ingest_out;
  std::string ingest_stats;
  ingest->add_option("paths", ingest_paths, "Input files or directories")->required();
  ingest->add_option("--format", ingest_format, "txt or jsonl")->check(CLI::IsMember({"txt", "jsonl"}));
  ingest->add_option("--min-tokens", ingest_min_tokens, "Drop shorter sentences");
  ingest->add_option("--out", ingest_out, "sentences.jsonl path (default stdout)");
  ingest->add_option("--stats", ingest_stats, "Write the sentence-length summary CSV here ('-' for stdout)");

  // lexical
  auto* lex = app.add_subcommand("lexical", "N-gram and lemma frequency tables");
  std::string lex_sentences;
  int lex_arity = 1;
  std::string lex_query;
  std::string lex_lemma;
  std::size_t lex_top = 0;
  bool lex_keep = false;
  std::string lex_stopwords;
  std::string lex_out;
  lex->add_option("--sentences", lex_sentences, "sentences.jsonl")->required();
  lex->add_option("--arity", lex_arity, "1, 2 or 3")->check(CLI::Range(1, 3));
  lex->add_option("--query", lex_query, "Only n-grams containing this substring");
  lex->add_option("--lemma", lex_lemma, "Report the total of lemmas containing this fragment");
  lex->add_option("--top", lex_top, "Only the N most frequent n-grams");
  lex->add_flag("--keep-stopwords", lex_keep, "Keep stopwords in the table");
  lex->add_option("--stopwords", lex_stopwords, "Stopword list (default: bundled)");
  lex->add_option("--out", lex_out, "CSV path (default stdout)");

  // reduce
  auto* reduce = app.add_subcommand("reduce", "Project embeddings to low dimension");
  std::string red_embeddings;
  std::string red_out;
  reduction::ReductionConfig red_cfg;
  std::string red_metric = "cosine";
  reduce->add_option("--embeddings", red_embeddings, "QDAE or CSV embeddings")->required();
  reduce->add_option("--out", red_out, "reduced.qdae")->required();
  reduce->add_option("--neighbors", red_cfg.n_neighbors);
  reduce->add_option("--min-dist", red_cfg.min_dist);
  reduce->add_option("--spread", red_cfg.spread);
  reduce->add_option("--epochs", red_cfg.epochs);
  reduce->add_option("--components", red_cfg.n_components);
  reduce->add_option("--metric", red_metric)->check(CLI::IsMember({"cosine", "euclidean"}));
  reduce->add_option("--seed", red_cfg.seed);

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Density clustering of reduced points");
  std::string cl_points;
  std::string cl_out;
  clustering::ClusterConfig cl_cfg;
  std::size_t cl_min_samples = 0;
  cluster->add_option("--points", cl_points, "reduced.qdae")->required();
  cluster->add_option("--out", cl_out, "assignment.csv (default stdout)");
  cluster->add_option("--min-cluster-size", cl_cfg.min_cluster_size);
  cluster->add_option("--min-samples", cl_min_samples, "Defaults to the minimum cluster size");

  // topics
  auto* topics_cmd = app.add_subcommand("topics", "Build a topic model from a cluster assignment");
  std::string tp_sentences;
  std::string tp_assignment;
  std::string tp_embeddings;
  std::string tp_points;
  std::string tp_stopwords;
  std::string tp_out;
  pipeline::RunConfig tp_cfg;
  topics_cmd->add_option("--sentences", tp_sentences)->required();
  topics_cmd->add_option("--assignment", tp_assignment)->required();
  topics_cmd->add_option("--embeddings", tp_embeddings)->required();
  topics_cmd->add_option("--points", tp_points, "Reduced coordinates, recorded for evaluation");
  topics_cmd->add_option("--stopwords", tp_stopwords);
  topics_cmd->add_option("--ngram-max", tp_cfg.ngram_max);
  topics_cmd->add_option("--keywords", tp_cfg.keywords);
  topics_cmd->add_option("--out", tp_out, "model.json")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compute the evaluation metrics of a model");
  std::string ev_model;
  std::string ev_points;
  std::string ev_out;
  std::string ev_tag;
  evaluate->add_option("--model", ev_model)->required();
  evaluate->add_option("--points", ev_points, "Reduced coordinates (default: the model's own)");
  evaluate->add_option("--out", ev_out, "report.csv (default stdout)");
  evaluate->add_option("--tag", ev_tag, "Model column value");

  // compare
  auto* compare = app.add_subcommand("compare", "Tabulate several report CSVs");
  std::vector<std::string> cmp_inputs;
  std::string cmp_out;
  compare->add_option("reports", cmp_inputs)->required();
  compare->add_option("--out", cmp_out, "Also write the combined CSV here");

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from a JSON config");
  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::string run_out;
  run->add_option("--config", run_config)->required();
  run->add_option("--seed", run_seed);
  run->add_option("--out", run_out, "Output directory (overrides the config)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Repeat the pipeline over several seeds");
  std::string sw_config;
  std::string sw_seeds = "1,2,3";
  std::string sw_out;
  sweep->add_option("--config", sw_config)->required();
  sweep->add_option("--seeds", sw_seeds, "Comma-separated seeds");
  sweep->add_option("--out", sw_out, "Output directory (overrides the config)");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a model over HTTP for refinement");
  std::string sv_model;
  std::string sv_host = "127.0.0.1";
  int sv_port = 8080;
  std::string sv_session;
  serve->add_option("--model", sv_model)->required();
  serve->add_option("--host", sv_host);
  serve->add_option("--port", sv_port);
  serve->add_option("--session", sv_session, "Session file (default: session.json next to the model)");

  // report
  auto* report = app.add_subcommand("report", "Export the final report of a refinement session");
  std::string rp_model;
  std::string rp_session;
  std::string rp_out;
  report->add_option("--model", rp_model)->required();
  report->add_option("--session", rp_session);
  report->add_option("--out", rp_out, "JSON path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto sentences = stage("ingest", [&] {
        std::vector<fs::path> paths;
        for (const auto& p : ingest_paths) {
          if (fs::is_directory(p)) {
            const std::string ext = ingest_format == "jsonl" ? ".jsonl" : ".txt";
            for (const auto& e : fs::directory_iterator(p)) {
              if (e.is_regular_file() && e.path().extension() == ext) paths.push_back(e.path());
            }
          } else {
            paths.emplace_back(p);
          }
        }
        const auto docs = corpus::ingest_corpus(paths, format_of(ingest_format));
        return corpus::segment_corpus(docs, corpus::default_abbreviations(), ingest_min_tokens,
                                      std::max(1u, std::thread::hardware_concurrency()));
      });
      stage("write", [&] {
        std::ostringstream out;
        corpus::write_sentences_jsonl(out, sentences);
        emit(ingest_out, out.str());
        if (!ingest_stats.empty()) emit(ingest_stats, stats_text(corpus::corpus_stats(sentences)));
      });
    } else if (*lex) {
      stage("lexical", [&] {
        const auto sentences = corpus::read_sentences_jsonl(lex_sentences);
        const auto stopwords = stopwords_of(lex_stopwords);
        const auto policy = lex_keep ? lexical::StopwordPolicy::keep : lexical::StopwordPolicy::drop;
        if (!lex_lemma.empty()) {
          const auto lexicon = lexical::LemmaLexicon::load_default();
          const auto table = lexical::build_lemma_table(sentences, lexicon, policy, stopwords);
          const auto total = lexical::lemma_total_containing(table, lex_lemma);
          std::ostringstream out;
          out << "fragment,total,percentile,significant\n" << lex_lemma << ',' << total << ',';
          if (total > 0) {
            const double p = lexical::percentile_rank(table, total);
            out << std::setprecision(10) << p << ',' << (lexical::significance_flag(p) ? "true" : "false");
          } else {
            out << "NaN,false";
          }
          out << '\n';
          emit(lex_out, out.str());
          return;
        }
        const auto table = lexical::build_frequency_table(sentences, lex_arity, policy, stopwords);
        std::ostringstream out;
        if (!lex_query.empty()) {
          lexical::write_table_csv(out, table, lexical::search_terms(table, lex_query));
        } else if (lex_top > 0) {
          lexical::write_table_csv(out, table, lexical::top_items(table, lex_top));
        } else {
          lexical::write_table_csv(out, table);
        }
        emit(lex_out, out.str());
      });
    } else if (*reduce) {
      const auto m = stage("embeddings", [&] { return embed::load_embeddings(red_embeddings); });
      red_cfg.metric = metric_of(red_metric);
      const auto r = stage("reduce", [&] { return reduction::reduce(m, red_cfg); });
      stage("write", [&] { embed::write_qdae(red_out, reduction::to_matrix(r)); });
    } else if (*cluster) {
      const auto r = stage("cluster", [&] { return reduction::from_matrix(embed::load_embeddings(cl_points)); });
      if (cl_min_samples > 0) cl_cfg.min_samples = cl_min_samples;
      const auto a = stage("cluster", [&] {
        return clustering::hdbscan(clustering::Points{r.coords, r.dims}, cl_cfg);
      });
      stage("write", [&] {
        std::ostringstream out;
        clustering::write_assignment_csv(out, a);
        emit(cl_out, out.str());
      });
      std::cerr << a.cluster_count() << " clusters, "
                << std::count(a.labels.begin(), a.labels.end(), -1) << " outliers\n";
    } else if (*topics_cmd) {
      stage("topics", [&] {
        const auto sentences = corpus::read_sentences_jsonl(tp_sentences);
        std::ifstream a(tp_assignment);
        if (!a) throw ConfigError("cannot read assignment " + tp_assignment);
        const auto assignment = clustering::read_assignment_csv(a);
        if (assignment.size() != sentences.size()) throw FormatError("assignment and sentences differ in length");
        tp_cfg.embeddings = fs::absolute(tp_embeddings).string();
        tp_cfg.stopwords = tp_stopwords.empty() ? "" : fs::absolute(tp_stopwords).string();
        const auto vectors = embed::load_embeddings(tp_cfg.embeddings);
        embed::validate_alignment(sentences.size(), vectors);
        const auto ctx = topics::TopicContext::from_sentences(sentences, stopwords_of(tp_cfg.stopwords), &vectors,
                                                              tp_cfg.keyword_options());
        json config = pipeline::to_json(tp_cfg);
        config.erase("out_dir");
        const auto model = topics::TopicModel::build(ctx, assignment, config);
        pipeline::Artifacts refs;
        refs.sentences = fs::absolute(tp_sentences);
        refs.assignment = fs::absolute(tp_assignment);
        refs.reduced = tp_points.empty() ? fs::path() : fs::absolute(tp_points);
        refs.report = fs::path();
        pipeline::write_text_file(tp_out, pipeline::model_document(model, refs).dump(2) + "\n");
        std::cerr << model.topics().size() << " topics\n";
      });
    } else if (*evaluate) {
      stage("evaluate", [&] {
        const auto ws = pipeline::load_workspace(ev_model, ev_points.empty() ? std::nullopt
                                                                             : std::optional<fs::path>(ev_points));
        const auto r = ws->evaluate(ws->model);
        const std::string tag = ev_tag.empty() ? (ws->embeddings.model_tag().empty()
                                                      ? fs::path(ws->config.embeddings).stem().string()
                                                      : ws->embeddings.model_tag())
                                               : ev_tag;
        emit(ev_out, report_csv(tag, r));
      });
    } else if (*compare) {
      stage("compare", [&] {
        std::vector<eval::ComparisonRow> rows;
        for (const auto& path : cmp_inputs) {
          std::ifstream in(path);
          if (!in) throw ConfigError("cannot read report " + path);
          for (auto& row : eval::read_csv(in).rows) rows.push_back(std::move(row));
        }
        const auto table = eval::compare_runs(std::move(rows));
        eval::write_text(std::cout, table);
        if (!cmp_out.empty()) {
          std::ostringstream out;
          eval::write_csv(out, table);
          emit(cmp_out, out.str());
        }
      });
    } else if (*run) {
      auto config = stage("config", [&] { return pipeline::load_config(run_config); });
      if (run_seed) config.seed = *run_seed;
      if (!run_out.empty()) config.out_dir = run_out;
      const auto r = stage("run", [&] { return pipeline::run_pipeline(config); });
      std::cerr << r.model.topics().size() << " topics, " << r.report.outliers << " outliers, "
                << std::fixed << std::setprecision(3) << r.report.time_minutes << " min; artifacts in "
                << config.out_dir << '\n';
    } else if (*sweep) {
      const auto base = stage("config", [&] { return pipeline::load_config(sw_config); });
      const fs::path root = sw_out.empty() ? fs::path(base.out_dir) : fs::path(sw_out);
      std::vector<pipeline::RunConfig> configs;
      for (auto seed : stage("config", [&] { return parse_seeds(sw_seeds); })) {
        auto c = base;
        c.seed = seed;
        c.out_dir = (root / ("seed_" + std::to_string(seed))).string();
        configs.push_back(c);
      }
      const auto result = stage("run", [&] { return pipeline::sweep(configs); });
      stage("write", [&] {
        std::vector<eval::ComparisonRow> rows;
        for (std::size_t i = 0; i < result.reports.size(); ++i) rows.push_back({result.tags[i], result.reports[i]});
        const auto table = eval::compare_runs(rows);
        std::ostringstream csv;
        eval::write_csv(csv, table);
        pipeline::write_text_file(root / "runs.csv", csv.str());
        std::ostringstream summary;
        eval::write_summary_csv(summary, result.summary);
        pipeline::write_text_file(root / "summary.csv", summary.str());
        eval::write_text(std::cout, table);
        std::cout << '\n' << summary.str();
      });
    } else if (*serve) {
      auto svc = stage("serve", [&] {
        return std::make_unique<service::TopicService>(
            sv_model, sv_session.empty() ? std::nullopt : std::optional<fs::path>(sv_session));
      });
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      service::Server server(*svc);
      const int port = stage("serve", [&] { return server.bind(sv_host, sv_port); });
      std::cerr << "serving " << sv_model << " on http://" << sv_host << ':' << port << " (session "
                << svc->session_file().string() << ")\n";
      std::thread listener([&] { server.run(); });
      int received = 0;
      sigwait(&signals, &received);
      server.stop();
      listener.join();
    } else if (*report) {
      stage("report", [&] {
        service::TopicService svc(rp_model, rp_session.empty() ? std::nullopt : std::optional<fs::path>(rp_session));
        const auto r = svc.report();
        if (r.status != 200) throw Error(r.body.value("error", "report failed"));
        for (const auto& w : r.body["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
        emit(rp_out, r.body.dump(2) + "\n");
      });
    }
  } catch (const Failure& f) {
    std::cerr << "qda: " << f.stage << " failed: " << f.message << '\n';
    return 2;
  }
  return 0;
}
