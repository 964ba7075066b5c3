#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qda/embed_store.hpp"

namespace qda::reduction {

enum class Metric { cosine, euclidean };

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// Exact k nearest neighbors of every row; self excluded, ascending distance,
// equal distances ordered by index.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> neighbors;
};

// Per-row calibration of neighbor distances into membership strengths.
struct SmoothWeights {
  double rho = 0.0;
  double sigma = 0.0;
  std::vector<double> weights;
};

struct Edge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  double weight = 0.0;
};

// Undirected weighted graph, edges sorted by (i, j), weights in (0, 1].
struct FuzzyGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;

  double weight(std::size_t a, std::size_t b) const;
};

struct ReductionConfig {
  std::size_t n_neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  std::size_t epochs = 200;
  std::uint64_t seed = 42;
  Metric metric = Metric::cosine;
  std::size_t n_components = 2;
  std::size_t negative_sample_rate = 5;

  void validate() const;
};

struct ReducedEmbedding {
  std::size_t n = 0;
  std::size_t dims = 2;
  std::vector<double> coords;  // row-major n x dims
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  // Mean cross-entropy per positive sample for every epoch.
  std::vector<double> loss_trace;

  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dims, dims}; }
};

double distance(std::span<const float> u, std::span<const float> v, Metric metric);

// Throws ConfigError when k >= n or k == 0.
KnnGraph knn_graph(const embed::EmbeddingMatrix& m, std::size_t k, Metric metric);

// `distances` ascending. sigma is found by bisection so that
// sum_j exp(-max(0, d_j - rho) / sigma) = log2(k); sigma >= 1e-3.
SmoothWeights smooth_knn_weights(std::span<const double> distances);

// Symmetrizes directed weights (row i of `knn` weighted by calibrations[i])
// with w + w' - w * w'.
FuzzyGraph fuzzy_union(const KnnGraph& knn, const std::vector<SmoothWeights>& calibrations);

// Least-squares fit of 1 / (1 + a * x^(2b)) to the target curve implied by
// min_dist and spread.
std::pair<double, double> fit_ab(double min_dist, double spread);

// Spectral layout of the normalized graph Laplacian, per connected
// component; components are placed at seeded positions. Returns an empty
// vector if the computation fails to produce finite coordinates.
std::vector<double> spectral_layout(const FuzzyGraph& g, std::size_t dims, std::uint64_t seed);

// Seeded SGD on the fuzzy cross-entropy. Single-threaded and bit-identical
// for a fixed seed.
ReducedEmbedding optimize_layout(const FuzzyGraph& g, const ReductionConfig& config);

// knn_graph -> smooth_knn_weights -> fuzzy_union -> optimize_layout.
ReducedEmbedding reduce(const embed::EmbeddingMatrix& m, const ReductionConfig& config);

// Float copy with model_tag "reduced:<seed>", for QDAE persistence.
embed::EmbeddingMatrix to_matrix(const ReducedEmbedding& r);
ReducedEmbedding from_matrix(const embed::EmbeddingMatrix& m);

}  // namespace qda::reduction
