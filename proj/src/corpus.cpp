#include "qda/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "qda/data_files.hpp"
#include "qda/error.hpp"
#include "qda/lexical.hpp"
#include "text_util.hpp"

namespace qda::corpus {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw FormatError("error while reading file: " + path.string());
  return buf.str();
}

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// The whitespace-delimited word ending at `dot` (inclusive), lowercased and
// without leading brackets or quotes.
std::string word_ending_at(const std::string& text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && !detail::is_space(text[begin - 1])) --begin;
  while (begin < dot && (text[begin] == '(' || text[begin] == '[' || text[begin] == '"' ||
                         text[begin] == '\'')) {
    ++begin;
  }
  return detail::to_lower(std::string_view(text).substr(begin, dot - begin + 1));
}

bool guarded(const std::string& word, const AbbreviationList& guard) {
  if (guard.contains(word)) return true;
  // Single-letter initials such as "J." in "J. Smith".
  return word.size() == 2 && std::isalpha(static_cast<unsigned char>(word[0])) != 0;
}

}  // namespace

AbbreviationList load_abbreviations(const std::filesystem::path& path) {
  return load_word_list(path);
}

AbbreviationList default_abbreviations() {
  return load_abbreviations(default_data_dir() / "abbreviations.txt");
}

Corpus ingest_corpus(std::vector<std::filesystem::path> paths, InputFormat format) {
  std::sort(paths.begin(), paths.end());
  Corpus corpus;
  std::unordered_set<std::string> seen;
  auto add = [&](Document doc, const std::string& where) {
    if (detail::trim(doc.text).empty()) throw FormatError("empty document text at " + where);
    if (!seen.insert(doc.doc_id).second) {
      throw FormatError("duplicate doc_id \"" + doc.doc_id + "\" at " + where);
    }
    corpus.documents.push_back(std::move(doc));
  };

  for (const auto& path : paths) {
    const std::string content = read_file(path);
    if (format == InputFormat::plain_text) {
      add(Document{path.stem().string(), path.string(), content}, path.string());
      continue;
    }
    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      const std::string where = path.string() + ":" + std::to_string(line_no);
      json record;
      try {
        record = json::parse(line);
      } catch (const json::parse_error& e) {
        throw FormatError("malformed JSONL record at " + where + ": " + e.what());
      }
      if (!record.is_object() || !record.contains("id") || !record.contains("text") ||
          !record["text"].is_string()) {
        throw FormatError("malformed JSONL record at " + where + ": expected {\"id\", \"text\"}");
      }
      std::string id;
      if (record["id"].is_string()) {
        id = record["id"].get<std::string>();
      } else if (record["id"].is_number_integer()) {
        id = std::to_string(record["id"].get<std::int64_t>());
      } else {
        throw FormatError("malformed JSONL record at " + where + ": id must be a string");
      }
      add(Document{std::move(id), path.string(), record["text"].get<std::string>()}, where);
    }
  }
  return corpus;
}

std::int64_t count_tokens(const std::string& text) {
  return static_cast<std::int64_t>(lexical::tokenize(text).size());
}

std::vector<Sentence> segment_sentences(const Document& doc, const AbbreviationList& guard,
                                        std::int64_t min_tokens, std::int64_t first_id) {
  std::vector<Sentence> out;
  const std::string& text = doc.text;
  std::size_t start = 0;

  auto emit = [&](std::size_t end) {
    std::string sentence = detail::normalize_whitespace(std::string_view(text).substr(start, end - start));
    start = end;
    if (sentence.empty()) return;
    const std::int64_t tokens = count_tokens(sentence);
    if (tokens < min_tokens) return;
    out.push_back(Sentence{first_id + static_cast<std::int64_t>(out.size()), doc.doc_id,
                           std::move(sentence), tokens});
  };

  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_terminal(text[j])) ++j;
    const bool single_period = (j - i == 1 && text[i] == '.');
    while (j < text.size() && is_closer(text[j])) ++j;
    const bool at_break = (j == text.size() || detail::is_space(text[j]));
    if (at_break && !(single_period && guarded(word_ending_at(text, i), guard))) {
      emit(j);
    }
    i = j;
  }
  emit(text.size());
  return out;
}

std::vector<Sentence> segment_corpus(const Corpus& corpus, const AbbreviationList& guard,
                                     std::int64_t min_tokens, unsigned workers) {
  const std::size_t n = corpus.documents.size();
  std::vector<std::vector<Sentence>> per_doc(n);
  workers = std::max(1u, workers);

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t d = begin; d < n; d += stride) {
      per_doc[d] = segment_sentences(corpus.documents[d], guard, min_tokens, 0);
    }
  };
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w) jobs.push_back(std::async(std::launch::async, work, w, workers));
    for (auto& job : jobs) job.get();
  }

  std::vector<Sentence> sentences;
  for (auto& doc_sentences : per_doc) {
    for (auto& s : doc_sentences) {
      s.sent_id = static_cast<std::int64_t>(sentences.size());
      sentences.push_back(std::move(s));
    }
  }
  return sentences;
}

CorpusStats corpus_stats(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw DomainError("empty corpus");
  CorpusStats stats;
  stats.total_sentences = static_cast<std::int64_t>(sentences.size());
  stats.min_length = sentences.front().token_count;
  stats.max_length = sentences.front().token_count;
  std::int64_t sum = 0;
  for (const auto& s : sentences) {
    sum += s.token_count;
    stats.min_length = std::min(stats.min_length, s.token_count);
    stats.max_length = std::max(stats.max_length, s.token_count);
    if (s.token_count < 5) ++stats.under_5;
    if (s.token_count > 25) ++stats.over_25;
  }
  stats.avg_length = static_cast<double>(sum) / static_cast<double>(stats.total_sentences);
  return stats;
}

void write_sentences_jsonl(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) {
    out << json{{"sent_id", s.sent_id}, {"doc_id", s.doc_id}, {"text", s.text}, {"token_count", s.token_count}}.dump()
        << '\n';
  }
}

void write_sentences_jsonl(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_sentences_jsonl(out, sentences);
}

std::vector<Sentence> read_sentences_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read file: " + path.string());
  std::vector<Sentence> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Sentence s{j.at("sent_id").get<std::int64_t>(), j.at("doc_id").get<std::string>(),
                 j.at("text").get<std::string>(), j.at("token_count").get<std::int64_t>()};
      if (s.sent_id != static_cast<std::int64_t>(sentences.size())) {
        throw FormatError("non-contiguous sent_id");
      }
      sentences.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw FormatError("malformed sentence record at " + path.string() + ":" + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  return sentences;
}

}  // namespace qda::corpus
