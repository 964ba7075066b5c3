#include "qda/lexical.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "qda/data_files.hpp"
#include "qda/error.hpp"
#include "text_util.hpp"

namespace qda::lexical {
namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool has_vowel(std::string_view s) {
  return s.find_first_of("aeiouy") != std::string_view::npos;
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

// "runn" -> "run", "stopp" -> "stop"; l, s and z doublings are kept ("fall", "pass").
std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      std::string_view("lsz").find(stem[n - 1]) == std::string_view::npos) {
    stem.pop_back();
  }
  return stem;
}

// One suffix-stripping step, or empty when no rule applies. Every rule
// shortens the word, so repeated application terminates.
std::string strip_suffix(const std::string& w) {
  const std::string_view v(w);
  if (ends_with(v, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(v, "sses")) return w.substr(0, w.size() - 2);
  if ((ends_with(v, "xes") || ends_with(v, "ches") || ends_with(v, "shes")) && w.size() > 4) {
    return w.substr(0, w.size() - 2);
  }
  if (ends_with(v, "s") && w.size() > 3 && !ends_with(v, "ss") && !ends_with(v, "us") &&
      !ends_with(v, "is")) {
    return w.substr(0, w.size() - 1);
  }
  if (ends_with(v, "ied") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(v, "ing") && w.size() >= 6 && has_vowel(v.substr(0, w.size() - 3))) {
    return undouble(w.substr(0, w.size() - 3));
  }
  if (ends_with(v, "ed") && w.size() >= 5 && !ends_with(v, "eed") && has_vowel(v.substr(0, w.size() - 2))) {
    return undouble(w.substr(0, w.size() - 2));
  }
  return {};
}

template <typename Map>
double percentile_of(const Map& items, std::int64_t count) {
  if (items.empty()) throw DomainError("percentile of an empty table");
  if (count < 1) throw DomainError("percentile query count must be >= 1");
  std::size_t below = 0;
  for (const auto& [key, c] : items) {
    if (c < count) ++below;
  }
  return 100.0 * static_cast<double>(below) / static_cast<double>(items.size());
}

// Sorted counts of a table, for repeated strict-less-than rank queries.
std::vector<std::int64_t> sorted_counts(const FrequencyTable& table) {
  std::vector<std::int64_t> counts;
  counts.reserve(table.items.size());
  for (const auto& [key, c] : table.items) counts.push_back(c);
  std::sort(counts.begin(), counts.end());
  return counts;
}

double rank_in(const std::vector<std::int64_t>& counts, std::int64_t count) {
  const auto below = std::lower_bound(counts.begin(), counts.end(), count) - counts.begin();
  return 100.0 * static_cast<double>(below) / static_cast<double>(counts.size());
}

bool by_count_then_key(const TermStat& a, const TermStat& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.key < b.key;
}

std::vector<Token> content_tokens(const std::string& text, StopwordPolicy policy, const StopwordList& stopwords) {
  std::vector<Token> tokens = tokenize(text);
  if (policy == StopwordPolicy::drop) {
    std::erase_if(tokens, [&](const Token& t) { return stopwords.contains(t); });
  }
  return tokens;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text, TokenizeOptions options) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_space(text[i])) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !detail::is_space(text[i])) ++i;
    if (begin == i) break;
    std::string_view chunk = text.substr(begin, i - begin);

    std::size_t lead = 0;
    while (lead < chunk.size() && detail::is_punct(chunk[lead])) ++lead;
    std::size_t tail = chunk.size();
    while (tail > lead && detail::is_punct(chunk[tail - 1])) --tail;

    auto push = [&](std::string_view piece) {
      tokens.push_back(options.lowercase ? detail::to_lower(piece) : std::string(piece));
    };
    if (options.strip_punct) {
      if (tail > lead) push(chunk.substr(lead, tail - lead));
      continue;
    }
    for (std::size_t k = 0; k < lead; ++k) push(chunk.substr(k, 1));
    if (tail > lead) push(chunk.substr(lead, tail - lead));
    for (std::size_t k = std::max(tail, lead); k < chunk.size(); ++k) push(chunk.substr(k, 1));
  }
  return tokens;
}

StopwordList load_stopwords(const std::filesystem::path& path) { return load_word_list(path); }

StopwordList default_stopwords() { return load_stopwords(default_data_dir() / "stopwords.txt"); }

void LemmaLexicon::add(std::string surface, std::string lemma) {
  surface = detail::to_lower(surface);
  lemma = detail::to_lower(lemma);
  if (auto it = entries_.find(lemma); it != entries_.end() && it->second != lemma) {
    throw FormatError("lexicon lemma \"" + lemma + "\" is itself mapped to \"" + it->second + "\"");
  }
  if (lemmas_.contains(surface) && surface != lemma) {
    throw FormatError("lexicon maps lemma \"" + surface + "\" to \"" + lemma + "\"");
  }
  if (auto it = entries_.find(surface); it != entries_.end() && it->second != lemma) {
    throw FormatError("conflicting lexicon entries for \"" + surface + "\"");
  }
  entries_[surface] = lemma;
  lemmas_.insert(std::move(lemma));
}

LemmaLexicon LemmaLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read lemma lexicon: " + path.string());
  LemmaLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::istringstream fields{std::string(trimmed)};
    std::string surface;
    std::string lemma;
    std::string extra;
    if (!(fields >> surface >> lemma) || (fields >> extra)) {
      throw FormatError("malformed lexicon line " + path.string() + ":" + std::to_string(line_no));
    }
    lexicon.add(std::move(surface), std::move(lemma));
  }
  return lexicon;
}

LemmaLexicon LemmaLexicon::load_default() { return load(default_data_dir() / "lemmas.tsv"); }

std::string LemmaLexicon::lemmatize(std::string_view token) const {
  std::string word = detail::to_lower(token);
  while (true) {
    if (auto it = entries_.find(word); it != entries_.end()) return it->second;
    if (lemmas_.contains(word)) return word;
    std::string next = strip_suffix(word);
    if (next.empty()) return word;
    word = std::move(next);
  }
}

std::vector<std::string> LemmaLexicon::lemmatize(const std::vector<Token>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lemmatize(t));
  return out;
}

double FrequencyTable::normalized(std::int64_t count) const {
  return total_tokens == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total_tokens);
}

FrequencyTable count_ngrams(const std::vector<std::vector<Token>>& token_lists, int arity) {
  if (arity < 1 || arity > 3) throw ConfigError("arity must be 1, 2 or 3");
  FrequencyTable table;
  table.arity = arity;
  const auto n = static_cast<std::size_t>(arity);
  for (const auto& tokens : token_lists) {
    table.total_tokens += static_cast<std::int64_t>(tokens.size());
    if (tokens.size() < n) continue;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      ++table.items[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
  }
  return table;
}

FrequencyTable build_frequency_table(const std::vector<corpus::Sentence>& sentences, int arity,
                                     StopwordPolicy policy, const StopwordList& stopwords) {
  if (sentences.empty()) throw DomainError("empty corpus");
  std::vector<std::vector<Token>> lists;
  lists.reserve(sentences.size());
  for (const auto& s : sentences) lists.push_back(content_tokens(s.text, policy, stopwords));
  return count_ngrams(lists, arity);
}

LemmaTable build_lemma_table(const std::vector<corpus::Sentence>& sentences, const LemmaLexicon& lexicon,
                             StopwordPolicy policy, const StopwordList& stopwords) {
  if (sentences.empty()) throw DomainError("empty corpus");
  LemmaTable table;
  for (const auto& s : sentences) {
    for (const auto& t : content_tokens(s.text, policy, stopwords)) ++table.lemmas[lexicon.lemmatize(t)];
  }
  return table;
}

std::int64_t lemma_total_containing(const LemmaTable& table, std::string_view fragment) {
  std::int64_t total = 0;
  for (const auto& [lemma, count] : table.lemmas) {
    if (lemma.find(fragment) != std::string::npos) total += count;
  }
  return total;
}

double percentile_rank(const FrequencyTable& table, std::int64_t count) {
  return percentile_of(table.items, count);
}

double percentile_rank(const LemmaTable& table, std::int64_t count) {
  return percentile_of(table.lemmas, count);
}

bool significance_flag(double percentile, double threshold) { return percentile >= threshold; }

std::vector<TermStat> search_terms(const FrequencyTable& table, std::string_view query) {
  std::vector<TermStat> hits;
  const auto counts = sorted_counts(table);
  for (const auto& [key, count] : table.items) {
    if (std::find(key.begin(), key.end(), query) != key.end()) {
      hits.push_back(TermStat{key, count, rank_in(counts, count)});
    }
  }
  std::sort(hits.begin(), hits.end(), by_count_then_key);
  return hits;
}

std::vector<TermStat> top_items(const FrequencyTable& table, std::size_t k) {
  if (k == 0) throw DomainError("k must be >= 1");
  std::vector<TermStat> all;
  all.reserve(table.items.size());
  for (const auto& [key, count] : table.items) all.push_back(TermStat{key, count, 0.0});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_count_then_key);
  all.resize(keep);
  const auto counts = sorted_counts(table);
  for (auto& row : all) row.percentile = rank_in(counts, row.count);
  return all;
}

std::string join_ngram(const NGram& key, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i > 0) out += sep;
    out += key[i];
  }
  return out;
}

void write_table_csv(std::ostream& out, const FrequencyTable& table, const std::vector<TermStat>& rows) {
  out << "ngram,count,normalized,percentile\n";
  const auto old_precision = out.precision(10);
  for (const auto& row : rows) {
    std::string key = join_ngram(row.key);
    if (key.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : key) quoted += (c == '"') ? std::string("\"\"") : std::string(1, c);
      key = quoted + "\"";
    }
    out << key << ',' << row.count << ',' << table.normalized(row.count) << ',' << row.percentile << '\n';
  }
  out.precision(old_precision);
}

void write_table_csv(std::ostream& out, const FrequencyTable& table) {
  std::vector<TermStat> rows;
  for (const auto& [key, count] : table.items) rows.push_back(TermStat{key, count, 0.0});
  std::sort(rows.begin(), rows.end(), by_count_then_key);
  const auto counts = sorted_counts(table);
  for (auto& r : rows) r.percentile = rank_in(counts, r.count);
  write_table_csv(out, table, rows);
}

}  // namespace qda::lexical
