#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <vector>

namespace qda::corpus {

struct Document {
  std::string doc_id;
  std::string source_path;
  std::string text;
};

struct Sentence {
  std::int64_t sent_id = 0;
  std::string doc_id;
  std::string text;
  std::int64_t token_count = 0;

  bool operator==(const Sentence&) const = default;
};

struct Corpus {
  std::vector<Document> documents;
};

enum class InputFormat { plain_text, jsonl };

// Sentence-length summary over token counts. under_5 / over_25 count
// sentences with fewer than 5 and more than 25 tokens.
struct CorpusStats {
  std::int64_t total_sentences = 0;
  double avg_length = 0.0;
  std::int64_t min_length = 0;
  std::int64_t max_length = 0;
  std::int64_t under_5 = 0;
  std::int64_t over_25 = 0;
};

// Words such as "mr." after which a period does not end a sentence.
using AbbreviationList = std::unordered_set<std::string>;

AbbreviationList load_abbreviations(const std::filesystem::path& path);
AbbreviationList default_abbreviations();

// Reads documents ordered by path (sorted), then record index within a file.
// Plain-text files become one document each with the file stem as doc_id.
// Throws FormatError naming the path (and line, for JSONL) on bad input.
Corpus ingest_corpus(std::vector<std::filesystem::path> paths, InputFormat format);

// Splits on terminal punctuation (. ! ?) followed by whitespace or end of
// text, unless the word carrying the period is a guarded abbreviation or a
// single-letter initial. Whitespace inside each sentence is collapsed.
// Sentences shorter than min_tokens are dropped. The returned sent_ids are
// numbered from first_id.
std::vector<Sentence> segment_sentences(const Document& doc, const AbbreviationList& guard,
                                        std::int64_t min_tokens = 5, std::int64_t first_id = 0);

// Segments every document and assigns dense corpus-wide sent_ids in document
// order. Documents are split on up to `workers` threads; the output does not
// depend on the worker count.
std::vector<Sentence> segment_corpus(const Corpus& corpus, const AbbreviationList& guard,
                                     std::int64_t min_tokens = 5, unsigned workers = 1);

// Number of tokens the shared tokenizer yields (lowercase, punctuation stripped).
std::int64_t count_tokens(const std::string& text);

CorpusStats corpus_stats(const std::vector<Sentence>& sentences);

void write_sentences_jsonl(std::ostream& out, const std::vector<Sentence>& sentences);
void write_sentences_jsonl(const std::filesystem::path& path, const std::vector<Sentence>& sentences);
std::vector<Sentence> read_sentences_jsonl(const std::filesystem::path& path);

}  // namespace qda::corpus
