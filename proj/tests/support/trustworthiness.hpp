#pragma once

// Brute-force trustworthiness of a low-dimensional layout: penalizes points
// that are near in the layout but far in the input, by input-space rank.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "qda/embed_store.hpp"
#include "qda/reduction.hpp"

namespace qda::testing {

inline double trustworthiness(const embed::EmbeddingMatrix& high, const reduction::ReducedEmbedding& low,
                              std::size_t k) {
  const std::size_t n = high.rows();
  auto high_dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < high.cols(); ++d) {
      const double diff = static_cast<double>(high.row(a)[d]) - static_cast<double>(high.row(b)[d]);
      s += diff * diff;
    }
    return s;
  };
  auto low_dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < low.dims; ++d) {
      const double diff = low.point(a)[d] - low.point(b)[d];
      s += diff * diff;
    }
    return s;
  };

  double penalty = 0.0;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> rank(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = j == i ? -1.0 : high_dist(i, j);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;  // self has rank 0

    for (std::size_t j = 0; j < n; ++j) dist[j] = j == i ? -1.0 : low_dist(i, j);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    for (std::size_t r = 1; r <= k; ++r) {
      const std::size_t j = order[r];
      if (rank[j] > k) penalty += static_cast<double>(rank[j] - k);
    }
  }
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

}  // namespace qda::testing
