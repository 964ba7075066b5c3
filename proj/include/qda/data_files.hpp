#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>

namespace qda {

// Directory holding the shipped word lists. Honors $QDA_DATA_DIR, otherwise
// the data/ directory of the source tree the binary was built from.
std::filesystem::path default_data_dir();

// One entry per line; blank lines and lines starting with '#' are skipped.
// Entries are lowercased. Throws ConfigError if the file cannot be read.
std::unordered_set<std::string> load_word_list(const std::filesystem::path& path);

}  // namespace qda
