#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "qda/corpus.hpp"

namespace qda::lexical {

using Token = std::string;
using NGram = std::vector<Token>;
using StopwordList = std::unordered_set<std::string>;

struct TokenizeOptions {
  bool lowercase = true;
  bool strip_punct = true;
};

// Splits on whitespace. With strip_punct, leading and trailing ASCII
// punctuation is removed from each chunk and empty chunks vanish; internal
// punctuation ("co-operative", "union's") is kept. Without it, the edge
// punctuation characters are emitted as separate one-character tokens.
std::vector<Token> tokenize(std::string_view text, TokenizeOptions options = {});

StopwordList load_stopwords(const std::filesystem::path& path);
StopwordList default_stopwords();

// Dictionary of surface form -> lemma, plus the suffix rules used for words
// the dictionary does not list.
class LemmaLexicon {
 public:
  LemmaLexicon() = default;

  // Two whitespace-separated columns per line: surface form, lemma.
  // Throws ConfigError when the file is missing, and FormatError on a
  // malformed line or when a lemma is itself listed with a different lemma.
  static LemmaLexicon load(const std::filesystem::path& path);
  static LemmaLexicon load_default();

  void add(std::string surface, std::string lemma);

  std::string lemmatize(std::string_view token) const;
  std::vector<std::string> lemmatize(const std::vector<Token>& tokens) const;

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::unordered_set<std::string> lemmas_;
};

enum class StopwordPolicy { keep, drop };

// Counts of n-grams of one arity. Keys are ordered lexicographically.
struct FrequencyTable {
  std::map<NGram, std::int64_t> items;
  // Tokens that entered n-gram formation (after stopword filtering).
  std::int64_t total_tokens = 0;
  int arity = 1;

  double normalized(std::int64_t count) const;
};

struct LemmaTable {
  std::map<std::string, std::int64_t> lemmas;
};

struct TermStat {
  NGram key;
  std::int64_t count = 0;
  double percentile = 0.0;
};

// Sliding-window counts within each token list; windows never span lists.
FrequencyTable count_ngrams(const std::vector<std::vector<Token>>& token_lists, int arity);

// Tokenizes each sentence, applies the stopword policy, then counts n-grams
// of the given arity (1..3). Throws on an empty sentence list or bad arity.
FrequencyTable build_frequency_table(const std::vector<corpus::Sentence>& sentences, int arity,
                                     StopwordPolicy policy, const StopwordList& stopwords);

LemmaTable build_lemma_table(const std::vector<corpus::Sentence>& sentences,
                             const LemmaLexicon& lexicon, StopwordPolicy policy,
                             const StopwordList& stopwords);

// Sum of lemma counts whose lemma contains `fragment` ("apprentice" matches
// "apprentice" and "apprenticeship").
std::int64_t lemma_total_containing(const LemmaTable& table, std::string_view fragment);

// Share of distinct keys whose count is strictly below `count`, in percent.
double percentile_rank(const FrequencyTable& table, std::int64_t count);
double percentile_rank(const LemmaTable& table, std::int64_t count);

bool significance_flag(double percentile, double threshold = 95.0);

// Keys containing `query` as one of their tokens, count descending, ties by key.
std::vector<TermStat> search_terms(const FrequencyTable& table, std::string_view query);

// The k most frequent keys, ties by key.
std::vector<TermStat> top_items(const FrequencyTable& table, std::size_t k);

std::string join_ngram(const NGram& key, std::string_view sep = " ");

// Columns: ngram,count,normalized,percentile.
void write_table_csv(std::ostream& out, const FrequencyTable& table, const std::vector<TermStat>& rows);
void write_table_csv(std::ostream& out, const FrequencyTable& table);

}  // namespace qda::lexical
