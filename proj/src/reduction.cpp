#include "qda/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qda/error.hpp"
#include "qda/random.hpp"

namespace qda::reduction {
namespace {

constexpr double kSigmaFloor = 1e-3;
constexpr double kSmoothTolerance = 1e-5;
constexpr int kSmoothIterations = 64;
constexpr double kGradientClip = 4.0;

double squared_norm(std::span<const float> u) {
  double s = 0.0;
  for (float x : u) s += static_cast<double>(x) * x;
  return s;
}

double pair_distance(std::span<const float> u, std::span<const float> v, double nu, double nv, Metric metric) {
  if (metric == Metric::euclidean) {
    double s = 0.0;
    for (std::size_t d = 0; d < u.size(); ++d) {
      const double diff = static_cast<double>(u[d]) - v[d];
      s += diff * diff;
    }
    return std::sqrt(s);
  }
  if (nu == 0.0 && nv == 0.0) return 0.0;
  if (nu == 0.0 || nv == 0.0) return 1.0;
  double dot = 0.0;
  for (std::size_t d = 0; d < u.size(); ++d) dot += static_cast<double>(u[d]) * v[d];
  return std::max(0.0, 1.0 - dot / std::sqrt(nu * nv));
}

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
}

double clip(double g) { return std::clamp(g, -kGradientClip, kGradientClip); }

// Connected components of g, labelled in order of smallest member.
std::vector<std::size_t> components(const FuzzyGraph& g, std::size_t& count) {
  std::vector<std::size_t> parent(g.n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) {
    const std::size_t a = find(e.i);
    const std::size_t b = find(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> label(g.n, g.n);
  std::vector<std::size_t> root_label(g.n, g.n);
  count = 0;
  for (std::size_t v = 0; v < g.n; ++v) {
    const std::size_t r = find(v);
    if (root_label[r] == g.n) root_label[r] = count++;
    label[v] = root_label[r];
  }
  return label;
}

// Leading non-trivial eigenvectors of D^-1/2 W D^-1/2 on one component by
// orthogonal iteration on the shifted operator (I + M) / 2.
std::vector<double> component_spectral(const std::vector<std::size_t>& members,
                                       const std::vector<std::vector<std::pair<std::size_t, double>>>& adj,
                                       const std::vector<std::size_t>& local, std::size_t dims, Rng& rng) {
  const std::size_t m = members.size();
  std::vector<double> degree(m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (const auto& [nb, w] : adj[members[a]]) degree[a] += w;
  }
  std::vector<double> trivial(m);
  double tn = 0.0;
  for (std::size_t a = 0; a < m; ++a) tn += degree[a];
  for (std::size_t a = 0; a < m; ++a) trivial[a] = std::sqrt(degree[a] / tn);

  std::vector<std::vector<double>> basis(dims, std::vector<double>(m));
  for (auto& col : basis) {
    for (double& x : col) x = rng.uniform(-1.0, 1.0);
  }
  auto orthonormalize = [&] {
    for (std::size_t c = 0; c < dims; ++c) {
      auto& col = basis[c];
      auto remove = [&](const std::vector<double>& q) {
        const double proj = std::inner_product(col.begin(), col.end(), q.begin(), 0.0);
        for (std::size_t a = 0; a < m; ++a) col[a] -= proj * q[a];
      };
      remove(trivial);
      for (std::size_t p = 0; p < c; ++p) remove(basis[p]);
      const double norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
      if (!(norm > 1e-300)) return false;
      for (double& x : col) x /= norm;
    }
    return true;
  };
  if (!orthonormalize()) return {};

  const std::size_t iterations = 300;
  std::vector<double> next(m);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (auto& col : basis) {
      for (std::size_t a = 0; a < m; ++a) {
        double s = 0.0;
        for (const auto& [nb, w] : adj[members[a]]) {
          const std::size_t b = local[nb];
          s += w * col[b] / std::sqrt(degree[a] * degree[b]);
        }
        next[a] = 0.5 * (col[a] + s);
      }
      col.swap(next);
    }
    if (!orthonormalize()) return {};
  }

  std::vector<double> coords(m * dims);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t c = 0; c < dims; ++c) coords[a * dims + c] = basis[c][a];
  }
  return coords;
}

void rescale(std::vector<double>& coords, double extent) {
  double max_abs = 0.0;
  for (double x : coords) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs > 0.0) {
    for (double& x : coords) x *= extent / max_abs;
  }
}

}  // namespace

double FuzzyGraph::weight(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b}, [](const Edge& e, const auto& key) {
    return std::pair{e.i, e.j} < key;
  });
  return (it != edges.end() && it->i == a && it->j == b) ? it->weight : 0.0;
}

void ReductionConfig::validate() const {
  if (n_neighbors < 2) throw ConfigError("n_neighbors must be >= 2");
  if (!(min_dist >= 0.0)) throw ConfigError("min_dist must be >= 0");
  if (!(spread > 0.0)) throw ConfigError("spread must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (n_components < 1) throw ConfigError("n_components must be >= 1");
}

double distance(std::span<const float> u, std::span<const float> v, Metric metric) {
  return pair_distance(u, v, squared_norm(u), squared_norm(v), metric);
}

KnnGraph knn_graph(const embed::EmbeddingMatrix& m, std::size_t k, Metric metric) {
  const std::size_t n = m.rows();
  if (k == 0 || k >= n) {
    throw ConfigError("k-NN requires 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = squared_norm(m.row(i));

  KnnGraph graph;
  graph.k = k;
  graph.neighbors.resize(n);
  std::vector<Neighbor> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      candidates[c++] = Neighbor{j, pair_distance(m.row(i), m.row(j), norms[i], norms[j], metric)};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      closer);
    graph.neighbors[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return graph;
}

SmoothWeights smooth_knn_weights(std::span<const double> distances) {
  const std::size_t k = distances.size();
  if (k < 2) throw ConfigError("smooth_knn_weights requires k >= 2");
  const double target = std::log2(static_cast<double>(k));
  const double rho = distances.front();

  auto total = [&](double sigma) {
    double s = 0.0;
    for (double d : distances) s += std::exp(-std::max(0.0, d - rho) / sigma);
    return s;
  };

  double lo = 0.0;
  double hi = INFINITY;
  double mid = 1.0;
  for (int it = 0; it < kSmoothIterations; ++it) {
    const double residual = total(mid) - target;
    if (std::abs(residual) < kSmoothTolerance) break;
    if (residual > 0.0) {
      hi = mid;
      mid = 0.5 * (lo + hi);
    } else {
      lo = mid;
      mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
    }
  }

  SmoothWeights out;
  out.rho = rho;
  out.sigma = std::max(mid, kSigmaFloor);
  out.weights.reserve(k);
  for (double d : distances) out.weights.push_back(std::exp(-std::max(0.0, d - rho) / out.sigma));
  return out;
}

FuzzyGraph fuzzy_union(const KnnGraph& knn, const std::vector<SmoothWeights>& calibrations) {
  struct Directed {
    std::size_t lo, hi;
    double w;
    bool forward;  // true when the source row is `lo`
  };
  std::vector<Directed> entries;
  for (std::size_t i = 0; i < knn.neighbors.size(); ++i) {
    const auto& row = knn.neighbors[i];
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t j = row[c].index;
      const double w = calibrations[i].weights[c];
      if (w <= 0.0 || i == j) continue;
      entries.push_back(Directed{std::min(i, j), std::max(i, j), w, i < j});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Directed& a, const Directed& b) {
    return std::tie(a.lo, a.hi, a.forward) < std::tie(b.lo, b.hi, b.forward);
  });

  FuzzyGraph g;
  g.n = knn.neighbors.size();
  for (std::size_t e = 0; e < entries.size();) {
    double forward = 0.0;
    double backward = 0.0;
    std::size_t f = e;
    for (; f < entries.size() && entries[f].lo == entries[e].lo && entries[f].hi == entries[e].hi; ++f) {
      (entries[f].forward ? forward : backward) = entries[f].w;
    }
    g.edges.push_back(Edge{entries[e].lo, entries[e].hi, forward + backward - forward * backward});
    e = f;
  }
  return g;
}

std::pair<double, double> fit_ab(double min_dist, double spread) {
  constexpr std::size_t kSamples = 300;
  std::vector<double> xs(kSamples);
  std::vector<double> ys(kSamples);
  for (std::size_t s = 0; s < kSamples; ++s) {
    xs[s] = 3.0 * spread * static_cast<double>(s) / static_cast<double>(kSamples - 1);
    ys[s] = xs[s] < min_dist ? 1.0 : std::exp(-(xs[s] - min_dist) / spread);
  }
  auto sse = [&](double a, double b) {
    double e = 0.0;
    for (std::size_t s = 0; s < kSamples; ++s) {
      const double r = 1.0 / (1.0 + a * std::pow(xs[s], 2.0 * b)) - ys[s];
      e += r * r;
    }
    return e;
  };

  // Levenberg-Marquardt on the two parameters.
  double a = 1.0;
  double b = 1.0;
  double lambda = 1e-3;
  double err = sse(a, b);
  for (int it = 0; it < 500; ++it) {
    double jtj[2][2] = {{0, 0}, {0, 0}};
    double jtr[2] = {0, 0};
    for (std::size_t s = 0; s < kSamples; ++s) {
      const double x = xs[s];
      const double u = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
      const double f = 1.0 / (1.0 + a * u);
      const double r = f - ys[s];
      const double da = -u * f * f;
      const double db = x > 0.0 ? -a * u * 2.0 * std::log(x) * f * f : 0.0;
      jtj[0][0] += da * da;
      jtj[0][1] += da * db;
      jtj[1][1] += db * db;
      jtr[0] += da * r;
      jtr[1] += db * r;
    }
    bool improved = false;
    while (lambda < 1e12) {
      const double m00 = jtj[0][0] * (1.0 + lambda);
      const double m11 = jtj[1][1] * (1.0 + lambda);
      const double det = m00 * m11 - jtj[0][1] * jtj[0][1];
      const double step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
      const double step_b = -(m00 * jtr[1] - jtj[0][1] * jtr[0]) / det;
      const double na = a + step_a;
      const double nb = b + step_b;
      const double nerr = (na > 0.0 && nb > 0.0) ? sse(na, nb) : INFINITY;
      if (nerr < err) {
        const bool converged = err - nerr < 1e-15 * std::max(1.0, err);
        a = na;
        b = nb;
        err = nerr;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = !converged;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return {a, b};
}

std::vector<double> spectral_layout(const FuzzyGraph& g, std::size_t dims, std::uint64_t seed) {
  Rng rng(seed ^ 0x5eed5eed5eedULL);
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(g.n);
  for (const auto& e : g.edges) {
    adj[e.i].emplace_back(e.j, e.weight);
    adj[e.j].emplace_back(e.i, e.weight);
  }
  std::size_t count = 0;
  const auto label = components(g, count);
  std::vector<std::vector<std::size_t>> members(count);
  for (std::size_t v = 0; v < g.n; ++v) members[label[v]].push_back(v);
  std::vector<std::size_t> local(g.n);
  for (const auto& group : members) {
    for (std::size_t a = 0; a < group.size(); ++a) local[group[a]] = a;
  }

  std::vector<double> coords(g.n * dims, 0.0);
  for (std::size_t c = 0; c < count; ++c) {
    const auto& group = members[c];
    std::vector<double> layout;
    if (group.size() > dims + 1) layout = component_spectral(group, adj, local, dims, rng);
    if (layout.empty()) {
      layout.resize(group.size() * dims);
      for (double& x : layout) x = rng.uniform(-1.0, 1.0);
    }
    rescale(layout, count == 1 ? 10.0 : 1.0);
    std::vector<double> center(dims, 0.0);
    if (count > 1) {
      for (double& x : center) x = rng.uniform(-10.0, 10.0);
    }
    for (std::size_t a = 0; a < group.size(); ++a) {
      for (std::size_t d = 0; d < dims; ++d) coords[group[a] * dims + d] = center[d] + layout[a * dims + d];
    }
  }
  for (double x : coords) {
    if (!std::isfinite(x)) return {};
  }
  return coords;
}

ReducedEmbedding optimize_layout(const FuzzyGraph& g, const ReductionConfig& config) {
  config.validate();
  const std::size_t n = g.n;
  const std::size_t dims = config.n_components;
  const std::size_t epochs = config.epochs;
  const auto [a, b] = fit_ab(config.min_dist, config.spread);
  Rng rng(config.seed);

  ReducedEmbedding out;
  out.n = n;
  out.dims = dims;
  out.seed = config.seed;
  out.epochs = epochs;

  out.coords = spectral_layout(g, dims, config.seed);
  if (out.coords.empty()) {
    out.coords.resize(n * dims);
    for (double& x : out.coords) x = rng.uniform(-10.0, 10.0);
  } else {
    rescale(out.coords, 10.0);
    for (double& x : out.coords) x += 1e-4 * rng.normal();
  }
  if (n < 2 || g.edges.empty()) return out;

  // Both directions of every edge, as in the symmetric adjacency matrix.
  double max_w = 0.0;
  for (const auto& e : g.edges) max_w = std::max(max_w, e.weight);
  std::vector<std::size_t> head;
  std::vector<std::size_t> tail;
  std::vector<double> epochs_per_sample;
  for (const auto& e : g.edges) {
    if (e.weight < max_w / static_cast<double>(epochs)) continue;
    const double eps = max_w / e.weight;
    head.push_back(e.i);
    tail.push_back(e.j);
    epochs_per_sample.push_back(eps);
    head.push_back(e.j);
    tail.push_back(e.i);
    epochs_per_sample.push_back(eps);
  }
  const std::size_t m = head.size();
  const double neg_rate = static_cast<double>(config.negative_sample_rate);
  std::vector<double> epochs_per_negative(m);
  std::vector<double> next_sample = epochs_per_sample;
  std::vector<double> next_negative(m);
  for (std::size_t e = 0; e < m; ++e) {
    epochs_per_negative[e] = epochs_per_sample[e] / neg_rate;
    next_negative[e] = epochs_per_negative[e];
  }

  auto q_of = [&](double dist_sq) { return 1.0 / (1.0 + a * std::pow(dist_sq, b)); };
  out.loss_trace.reserve(epochs);
  double* y = out.coords.data();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double alpha = 1.0 - static_cast<double>(epoch) / static_cast<double>(epochs);
    const double now = static_cast<double>(epoch);
    double loss = 0.0;
    std::size_t positives = 0;
    for (std::size_t e = 0; e < m; ++e) {
      if (next_sample[e] > now) continue;
      double* current = y + head[e] * dims;
      double* other = y + tail[e] * dims;

      double dist_sq = 0.0;
      for (std::size_t d = 0; d < dims; ++d) dist_sq += (current[d] - other[d]) * (current[d] - other[d]);
      loss += -std::log(std::max(q_of(dist_sq), 1e-12));
      ++positives;
      double coeff = 0.0;
      if (dist_sq > 0.0) {
        coeff = -2.0 * a * b * std::pow(dist_sq, b - 1.0) / (a * std::pow(dist_sq, b) + 1.0);
      }
      for (std::size_t d = 0; d < dims; ++d) {
        const double grad = clip(coeff * (current[d] - other[d]));
        current[d] += grad * alpha;
        other[d] -= grad * alpha;
      }
      next_sample[e] += epochs_per_sample[e];

      const auto negatives = static_cast<std::size_t>((now - next_negative[e]) / epochs_per_negative[e]);
      for (std::size_t p = 0; p < negatives; ++p) {
        const std::size_t k = rng.below(n);
        if (k == head[e]) continue;
        const double* neg = y + k * dims;
        double nd = 0.0;
        for (std::size_t d = 0; d < dims; ++d) nd += (current[d] - neg[d]) * (current[d] - neg[d]);
        loss += -std::log(std::max(1.0 - q_of(nd), 1e-12));
        if (nd <= 0.0) continue;
        const double rep = 2.0 * b / ((0.001 + nd) * (a * std::pow(nd, b) + 1.0));
        for (std::size_t d = 0; d < dims; ++d) current[d] += clip(rep * (current[d] - neg[d])) * alpha;
      }
      next_negative[e] += static_cast<double>(negatives) * epochs_per_negative[e];
    }
    out.loss_trace.push_back(positives > 0 ? loss / static_cast<double>(positives) : 0.0);
  }
  return out;
}

ReducedEmbedding reduce(const embed::EmbeddingMatrix& m, const ReductionConfig& config) {
  config.validate();
  const std::size_t n = m.rows();
  if (n < 2) throw ConfigError("reduction needs at least 2 points");
  // Tiny inputs cannot supply n_neighbors neighbors; use all other points.
  const std::size_t k = std::min(config.n_neighbors, n - 1);
  const KnnGraph knn = knn_graph(m, k, config.metric);
  std::vector<SmoothWeights> calibrations;
  calibrations.reserve(n);
  std::vector<double> row;
  for (const auto& neighbors : knn.neighbors) {
    row.clear();
    for (const auto& nb : neighbors) row.push_back(nb.distance);
    if (row.size() >= 2) {
      calibrations.push_back(smooth_knn_weights(row));
    } else {
      calibrations.push_back(SmoothWeights{row.front(), kSigmaFloor, {1.0}});
    }
  }
  return optimize_layout(fuzzy_union(knn, calibrations), config);
}

embed::EmbeddingMatrix to_matrix(const ReducedEmbedding& r) {
  std::vector<float> data(r.coords.begin(), r.coords.end());
  return embed::EmbeddingMatrix(r.n, r.dims, std::move(data), "reduced:" + std::to_string(r.seed));
}

ReducedEmbedding from_matrix(const embed::EmbeddingMatrix& m) {
  ReducedEmbedding r;
  r.n = m.rows();
  r.dims = m.cols();
  r.coords.assign(m.data().begin(), m.data().end());
  const std::string& tag = m.model_tag();
  if (tag.starts_with("reduced:")) {
    try {
      r.seed = std::stoull(tag.substr(8));
    } catch (const std::exception&) {
      r.seed = 0;
    }
  }
  return r;
}

}  // namespace qda::reduction
