#include "qda/data_files.hpp"

#include <cstdlib>
#include <fstream>

#include "qda/error.hpp"
#include "text_util.hpp"

namespace qda {

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("QDA_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return QDA_SOURCE_DATA_DIR;
}

std::unordered_set<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read word list: " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const std::string entry = detail::to_lower(detail::trim(line));
    if (entry.empty() || entry.front() == '#') continue;
    words.insert(entry);
  }
  return words;
}

}  // namespace qda
