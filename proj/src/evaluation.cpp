#include "qda/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "qda/error.hpp"
#include "qda/random.hpp"

namespace qda::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fixed3(double x) {
  if (std::isnan(x)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

double parse_real(const std::string& s) {
  if (s == "NaN" || s == "nan") return kNaN;
  std::size_t used = 0;
  const double x = std::stod(s, &used);
  if (used != s.size()) throw FormatError("bad number \"" + s + "\"");
  return x;
}

// Start positions of `term` as a contiguous phrase in `text`.
std::vector<std::size_t> occurrences(const std::vector<lexical::Token>& text, const topics::Term& term) {
  std::vector<std::size_t> starts;
  if (term.empty() || term.size() > text.size()) return starts;
  for (std::size_t i = 0; i + term.size() <= text.size(); ++i) {
    if (std::equal(term.begin(), term.end(), text.begin() + static_cast<std::ptrdiff_t>(i))) starts.push_back(i);
  }
  return starts;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return kNaN;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

}  // namespace

std::int64_t count_outliers(std::span<const int> labels) {
  return static_cast<std::int64_t>(std::count(labels.begin(), labels.end(), -1));
}

std::int64_t count_topics(std::span<const int> labels) {
  std::set<int> distinct;
  for (int l : labels) {
    if (l >= 0) distinct.insert(l);
  }
  return static_cast<std::int64_t>(distinct.size());
}

double ngram_score(const std::vector<topics::Topic>& topics) {
  std::size_t total = 0;
  std::size_t multi = 0;
  for (const auto& t : topics) {
    for (const auto& k : t.keywords) {
      ++total;
      if (k.term.size() >= 2) ++multi;
    }
  }
  return total == 0 ? kNaN : static_cast<double>(multi) / static_cast<double>(total);
}

double gini(std::span<const std::int64_t> sizes) {
  const std::size_t n = sizes.size();
  if (n <= 1) return 0.0;
  std::vector<std::int64_t> sorted(sizes.begin(), sizes.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (total == 0.0) return 0.0;
  // sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n + 1) x_(i) over ascending order.
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weighted += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * static_cast<double>(sorted[i]);
  }
  return weighted / (static_cast<double>(n) * total);
}

double coherence_cv(const std::vector<std::vector<topics::Term>>& topic_keywords,
                    const std::vector<std::vector<lexical::Token>>& texts, std::size_t window, double epsilon) {
  if (topic_keywords.empty() || window == 0) return kNaN;

  // Distinct keyword terms and, per topic, the index of each of its words.
  std::map<topics::Term, std::size_t> term_index;
  std::vector<std::vector<std::size_t>> topic_terms;
  for (const auto& words : topic_keywords) {
    if (words.size() < 2) return kNaN;
    std::vector<std::size_t> ids;
    for (const auto& w : words) ids.push_back(term_index.emplace(w, term_index.size()).first->second);
    topic_terms.push_back(std::move(ids));
  }
  std::vector<const topics::Term*> terms(term_index.size());
  for (const auto& [term, id] : term_index) terms[id] = &term;

  std::vector<std::int64_t> single(terms.size(), 0);
  std::vector<std::map<std::pair<std::size_t, std::size_t>, std::int64_t>> joint(topic_terms.size());
  std::int64_t windows = 0;
  std::vector<char> present(terms.size(), 0);

  for (const auto& text : texts) {
    std::vector<std::vector<std::size_t>> starts(terms.size());
    for (std::size_t t = 0; t < terms.size(); ++t) starts[t] = occurrences(text, *terms[t]);
    const std::size_t span = std::min(window, text.size());
    const std::size_t count = text.size() <= window ? 1 : text.size() - window + 1;
    for (std::size_t w = 0; w < count; ++w) {
      ++windows;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        present[t] = 0;
        for (std::size_t s : starts[t]) {
          if (s >= w && s + terms[t]->size() <= w + span) {
            present[t] = 1;
            break;
          }
        }
        single[t] += present[t];
      }
      for (std::size_t k = 0; k < topic_terms.size(); ++k) {
        const auto& ids = topic_terms[k];
        for (std::size_t a = 0; a < ids.size(); ++a) {
          if (!present[ids[a]]) continue;
          for (std::size_t b = a + 1; b < ids.size(); ++b) {
            if (present[ids[b]]) ++joint[k][{a, b}];
          }
        }
      }
    }
  }
  if (windows == 0) return kNaN;

  const double total = static_cast<double>(windows);
  double sum = 0.0;
  for (std::size_t k = 0; k < topic_terms.size(); ++k) {
    const auto& ids = topic_terms[k];
    const std::size_t m = ids.size();
    for (std::size_t id : ids) {
      if (single[id] == 0) return kNaN;
    }
    std::vector<std::vector<double>> npmi(m, std::vector<double>(m));
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        const double pa = static_cast<double>(single[ids[a]]) / total;
        const double pb = static_cast<double>(single[ids[b]]) / total;
        double co;
        if (a == b) {
          co = pa;
        } else {
          auto it = joint[k].find({std::min(a, b), std::max(a, b)});
          co = it == joint[k].end() ? 0.0 : static_cast<double>(it->second) / total;
        }
        npmi[a][b] = std::log((co + epsilon) / (pa * pb)) / -std::log(co + epsilon);
      }
    }
    std::vector<double> whole(m, 0.0);
    for (const auto& row : npmi) {
      for (std::size_t b = 0; b < m; ++b) whole[b] += row[b];
    }
    double topic_score = 0.0;
    for (const auto& row : npmi) {
      const double c = cosine(row, whole);
      if (std::isnan(c)) return kNaN;
      topic_score += c;
    }
    sum += topic_score / static_cast<double>(m);
  }
  return sum / static_cast<double>(topic_terms.size());
}

double silhouette(const clustering::Points& points, std::span<const int> labels, std::size_t sample_cap,
                  std::uint64_t seed) {
  std::vector<std::size_t> scored;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) scored.push_back(i);
  }
  if (sample_cap > 0 && scored.size() > sample_cap) {
    Rng rng(seed);
    for (std::size_t i = 0; i < sample_cap; ++i) {
      std::swap(scored[i], scored[i + rng.below(scored.size() - i)]);
    }
    scored.resize(sample_cap);
    std::sort(scored.begin(), scored.end());
  }

  std::map<int, std::size_t> cluster_of;
  for (std::size_t i : scored) cluster_of.emplace(labels[i], cluster_of.size());
  if (cluster_of.size() < 2) return kNaN;
  std::size_t next = 0;
  for (auto& [label, slot] : cluster_of) slot = next++;

  const std::size_t c = cluster_of.size();
  std::vector<std::size_t> slot(scored.size());
  std::vector<std::size_t> members(c, 0);
  for (std::size_t a = 0; a < scored.size(); ++a) {
    slot[a] = cluster_of[labels[scored[a]]];
    ++members[slot[a]];
  }

  double total = 0.0;
  std::vector<double> sums(c);
  for (std::size_t a = 0; a < scored.size(); ++a) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t b = 0; b < scored.size(); ++b) {
      if (a != b) sums[slot[b]] += clustering::euclidean(points[scored[a]], points[scored[b]]);
    }
    const std::size_t own = slot[a];
    if (members[own] <= 1) continue;  // singleton clusters score 0
    const double intra = sums[own] / static_cast<double>(members[own] - 1);
    double inter = INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      if (k != own) inter = std::min(inter, sums[k] / static_cast<double>(members[k]));
    }
    const double denom = std::max(intra, inter);
    if (denom > 0.0) total += (inter - intra) / denom;
  }
  return total / static_cast<double>(scored.size());
}

MetricsReport evaluate(const topics::TopicModel& model, const topics::TopicContext& context,
                       const clustering::Points& points, double minutes, const EvalOptions& options) {
  MetricsReport r;
  const auto& labels = model.labels();
  r.outliers = count_outliers(labels);
  r.topics = count_topics(labels);
  r.ngram_score = ngram_score(model.topics());
  std::vector<std::int64_t> sizes;
  std::vector<std::vector<topics::Term>> keywords;
  for (const auto& t : model.topics()) {
    sizes.push_back(t.size);
    std::vector<topics::Term> words;
    for (const auto& k : t.keywords) words.push_back(k.term);
    keywords.push_back(std::move(words));
  }
  r.gini = gini(sizes);
  r.coherence_cv = coherence_cv(keywords, context.tokens, options.coherence_window);
  r.silhouette = silhouette(points, labels, options.silhouette_sample_cap, options.seed);
  r.time_minutes = minutes;
  return r;
}

ComparisonTable compare_runs(std::vector<ComparisonRow> rows) {
  if (rows.empty()) throw DomainError("compare_runs needs at least one report");
  return ComparisonTable{std::move(rows)};
}

std::string csv_header() { return "model,outliers,topics,ngram_score,gini,coherence_cv,silhouette,time_min"; }

std::string csv_row(const std::string& model_tag, const MetricsReport& r) {
  std::ostringstream out;
  out << model_tag << ',' << r.outliers << ',' << r.topics << ',' << fixed3(r.ngram_score) << ',' << fixed3(r.gini)
      << ',' << fixed3(r.coherence_cv) << ',' << fixed3(r.silhouette) << ',' << fixed3(r.time_minutes);
  return out.str();
}

void write_csv(std::ostream& out, const ComparisonTable& table) {
  out << csv_header() << '\n';
  for (const auto& row : table.rows) out << csv_row(row.model_tag, row.report) << '\n';
}

void write_text(std::ostream& out, const ComparisonTable& table) {
  const std::vector<std::string> head = {"Model", "Outliers", "Topics (n)", "N-gram Score", "Gini Score",
                                         "Coherence (C_V)", "Silhouette (Avg)", "Time (min)"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : table.rows) {
    const auto& r = row.report;
    cells.push_back({row.model_tag, std::to_string(r.outliers), std::to_string(r.topics), fixed3(r.ngram_score),
                     fixed3(r.gini), fixed3(r.coherence_cv), fixed3(r.silhouette), fixed3(r.time_minutes)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out << "  ";
      const std::size_t pad = width[c] - line[c].size();
      if (c == 0) {
        out << line[c] << std::string(pad, ' ');
      } else {
        out << std::string(pad, ' ') << line[c];
      }
    }
    out << '\n';
  };
  emit(head);
  std::size_t rule = 2 * (head.size() - 1);
  for (auto w : width) rule += w;
  out << std::string(rule, '-') << '\n';
  for (const auto& line : cells) emit(line);
}

ComparisonTable read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) throw FormatError("report CSV must start with " + csv_header());
  ComparisonTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw FormatError("report CSV line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      MetricsReport r;
      r.outliers = std::stoll(f[1]);
      r.topics = std::stoll(f[2]);
      r.ngram_score = parse_real(f[3]);
      r.gini = parse_real(f[4]);
      r.coherence_cv = parse_real(f[5]);
      r.silhouette = parse_real(f[6]);
      r.time_minutes = parse_real(f[7]);
      table.rows.push_back(ComparisonRow{f[0], r});
    } catch (const std::logic_error& e) {
      throw FormatError("report CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

std::vector<MetricSummary> summarize(const std::vector<MetricsReport>& reports) {
  const std::vector<std::pair<std::string, double MetricsReport::*>> reals = {
      {"ngram_score", &MetricsReport::ngram_score}, {"gini", &MetricsReport::gini},
      {"coherence_cv", &MetricsReport::coherence_cv}, {"silhouette", &MetricsReport::silhouette},
      {"time_min", &MetricsReport::time_minutes}};
  auto summary_of = [](const std::string& name, const std::vector<double>& values) {
    MetricSummary s{name, kNaN, kNaN, 0};
    std::vector<double> defined;
    for (double v : values) {
      if (!std::isnan(v)) defined.push_back(v);
    }
    s.defined = defined.size();
    if (defined.empty()) return s;
    s.mean = std::accumulate(defined.begin(), defined.end(), 0.0) / static_cast<double>(defined.size());
    double ss = 0.0;
    for (double v : defined) ss += (v - s.mean) * (v - s.mean);
    s.stdev = defined.size() > 1 ? std::sqrt(ss / static_cast<double>(defined.size() - 1)) : 0.0;
    return s;
  };

  std::vector<MetricSummary> out;
  std::vector<double> outliers;
  std::vector<double> topic_counts;
  for (const auto& r : reports) {
    outliers.push_back(static_cast<double>(r.outliers));
    topic_counts.push_back(static_cast<double>(r.topics));
  }
  out.push_back(summary_of("outliers", outliers));
  out.push_back(summary_of("topics", topic_counts));
  for (const auto& [name, member] : reals) {
    std::vector<double> values;
    for (const auto& r : reports) values.push_back(r.*member);
    out.push_back(summary_of(name, values));
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary) {
  out << "metric,mean,stdev,runs\n";
  for (const auto& s : summary) out << s.metric << ',' << fixed3(s.mean) << ',' << fixed3(s.stdev) << ',' << s.defined << '\n';
}

}  // namespace qda::eval
