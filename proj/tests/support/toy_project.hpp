#pragma once

// A small on-disk project: themed plain-text documents, matching sentence
// embeddings and a run config. Every generated sentence survives
// segmentation unchanged, so embedding row i belongs to sentence i.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qda/embed_store.hpp"
#include "qda/random.hpp"

namespace qda::testing {

struct ToyProject {
  std::filesystem::path root;
  std::filesystem::path config;
  std::filesystem::path embeddings;
  std::vector<int> theme;  // per sentence
  std::vector<std::string> sentences;
};

inline const std::vector<std::vector<std::string>>& toy_vocabulary() {
  static const std::vector<std::vector<std::string>> words = {
      {"apprentice", "employer", "wage", "training", "workshop", "trade", "placement", "mentor"},
      {"school", "teacher", "pupil", "classroom", "curriculum", "exam", "lesson", "homework"},
      {"housing", "rent", "landlord", "tenant", "mortgage", "estate", "council", "flat"},
      {"hospital", "nurse", "patient", "clinic", "doctor", "ward", "surgery", "treatment"},
      {"farm", "harvest", "tractor", "cattle", "field", "barley", "orchard", "dairy"},
      {"river", "bridge", "ferry", "harbour", "boat", "canal", "dock", "quay"},
  };
  return words;
}

inline const std::vector<std::string>& toy_phrases() {
  static const std::vector<std::string> phrases = {"skills gap",      "exam results",   "social housing",
                                                   "waiting list",    "crop rotation",  "shipping lane"};
  return phrases;
}

inline ToyProject make_toy_project(const std::filesystem::path& root, std::size_t per_theme = 40,
                                   std::uint64_t seed = 7, std::size_t themes = 6) {
  namespace fs = std::filesystem;
  fs::remove_all(root);
  fs::create_directories(root / "docs");
  ToyProject p;
  p.root = root;
  Rng rng(seed);
  const auto& vocab = toy_vocabulary();
  const auto& phrases = toy_phrases();
  const std::vector<std::string> fillers = {"the", "a", "of", "and", "with", "for", "in", "on"};

  for (std::size_t t = 0; t < themes; ++t) {
    for (std::size_t i = 0; i < per_theme; ++i) p.theme.push_back(static_cast<int>(t));
  }
  for (std::size_t i = p.theme.size(); i > 1; --i) std::swap(p.theme[i - 1], p.theme[rng.below(i)]);

  for (int t : p.theme) {
    const auto& words = vocab[static_cast<std::size_t>(t)];
    std::string s;
    const std::size_t length = 5 + 2 * rng.below(3);
    for (std::size_t w = 0; w < length; ++w) {
      if (!s.empty()) s += ' ';
      if (w % 2 == 1) {
        s += fillers[rng.below(fillers.size())];
      } else {
        s += words[rng.below(words.size())];
      }
    }
    if (rng.uniform() < 0.5) s += " " + phrases[static_cast<std::size_t>(t)];
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    p.sentences.push_back(s + ".");
  }

  const std::size_t per_doc = 25;
  for (std::size_t d = 0; d * per_doc < p.sentences.size(); ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "doc_%03zu.txt", d);
    std::ofstream out(root / "docs" / name);
    for (std::size_t i = d * per_doc; i < std::min(p.sentences.size(), (d + 1) * per_doc); ++i) {
      out << p.sentences[i] << (i % 3 == 2 ? "\n\n" : " ");
    }
  }

  const std::size_t dims = 16;
  std::vector<std::vector<double>> centers(themes, std::vector<double>(dims));
  for (auto& c : centers) {
    for (double& x : c) x = rng.uniform(-5.0, 5.0);
  }
  std::vector<float> data;
  for (int t : p.theme) {
    for (std::size_t k = 0; k < dims; ++k) {
      data.push_back(static_cast<float>(centers[static_cast<std::size_t>(t)][k] + 0.4 * rng.normal()));
    }
  }
  p.embeddings = root / "embeddings.qdae";
  embed::write_qdae(p.embeddings, embed::EmbeddingMatrix(p.theme.size(), dims, std::move(data), "toy-embed"));

  nlohmann::json config = {{"corpus", {"docs"}},
                           {"format", "txt"},
                           {"embeddings", "embeddings.qdae"},
                           {"reduction", {{"n_neighbors", 10}, {"epochs", 120}}},
                           {"clustering", {{"min_cluster_size", 10}}},
                           {"seed", seed},
                           {"out_dir", "out"}};
  p.config = root / "config.json";
  std::ofstream(p.config) << config.dump(2);
  return p;
}

}  // namespace qda::testing
