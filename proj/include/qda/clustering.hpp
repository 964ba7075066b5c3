#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace qda::clustering {

// Row-major view of n points in `dims` dimensions.
struct Points {
  std::span<const double> coords;
  std::size_t dims = 2;

  std::size_t size() const { return dims == 0 ? 0 : coords.size() / dims; }
  std::span<const double> operator[](std::size_t i) const { return coords.subspan(i * dims, dims); }
};

double euclidean(std::span<const double> u, std::span<const double> v);

struct ClusterConfig {
  std::size_t min_cluster_size = 15;
  // Defaults to min_cluster_size.
  std::optional<std::size_t> min_samples;

  std::size_t effective_min_samples() const { return min_samples.value_or(min_cluster_size); }
  void validate() const;
};

struct MstEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

// One row per (parent cluster -> child) relation. Clusters are numbered from
// n (the root); a child below n is a point that falls out of `parent` at
// `lambda`, otherwise a cluster born at `lambda` holding child_size points.
struct CondensedRow {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

struct CondensedTree {
  std::size_t n = 0;
  std::vector<CondensedRow> rows;

  std::size_t root() const { return n; }
  std::size_t cluster_count() const;
};

// labels: -1 for outliers, else 0..T-1 with 0 the largest cluster.
// strength is 0 exactly for outliers and in (0, 1] otherwise.
struct ClusterAssignment {
  std::vector<int> labels;
  std::vector<double> strength;

  std::size_t size() const { return labels.size(); }
  std::size_t cluster_count() const;
};

// Distance to the min_samples-th nearest other point.
// Throws ConfigError when min_samples is 0 or >= n.
std::vector<double> core_distances(const Points& points, std::size_t min_samples);

inline double mutual_reachability(double d, double core_i, double core_j) {
  return std::max({d, core_i, core_j});
}

// Prim's algorithm from vertex 0 over the implicit complete graph. The next
// vertex is the one with the smallest connecting weight, ties to the smaller
// vertex index; a vertex keeps its earliest-found parent among equal
// weights unless a smaller-index parent offers the same weight.
std::vector<MstEdge> build_mst(std::size_t n, const std::function<double(std::size_t, std::size_t)>& weight);
std::vector<MstEdge> build_mst(const Points& points, std::span<const double> core);

// Single-linkage hierarchy from the MST, condensed so that splits leaving a
// side smaller than min_cluster_size shed points instead of forming clusters.
CondensedTree condense_tree(std::vector<MstEdge> mst, std::size_t n, std::size_t min_cluster_size);

// Stability of every cluster (index = cluster id - n).
std::vector<double> cluster_stabilities(const CondensedTree& tree);

// Excess-of-mass selection. The root is only selected when it never splits
// into two clusters and holds at least min_cluster_size points. Returned
// labels are already renumbered by descending size (ties: smallest point).
ClusterAssignment extract_clusters_eom(const CondensedTree& tree, std::size_t min_cluster_size);

// Selected cluster ids (tree numbering) of the last EOM pass, for tests of
// the antichain property.
std::vector<std::size_t> select_clusters_eom(const CondensedTree& tree, std::size_t min_cluster_size);

ClusterAssignment hdbscan(const Points& points, const ClusterConfig& config);

// CSV: sent_id,label,strength
void write_assignment_csv(std::ostream& out, const ClusterAssignment& a);
ClusterAssignment read_assignment_csv(std::istream& in);

}  // namespace qda::clustering
