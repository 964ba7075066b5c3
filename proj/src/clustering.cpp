#include "qda/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "qda/error.hpp"

namespace qda::clustering {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

double to_lambda(double distance) { return distance > 0.0 ? 1.0 / distance : INFINITY; }

// lambda_point - lambda_birth, treating equal values (including two
// infinities) as zero excess.
double excess(double lambda, double birth) { return lambda == birth ? 0.0 : lambda - birth; }

struct Dendrogram {
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<double> distance;
  std::vector<std::size_t> size;  // indexed by node id; points have size 1
};

Dendrogram single_linkage(std::vector<MstEdge> mst, std::size_t n) {
  for (auto& e : mst) {
    if (e.a > e.b) std::swap(e.a, e.b);
  }
  std::sort(mst.begin(), mst.end(), [](const MstEdge& x, const MstEdge& y) {
    return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
  });
  Dendrogram d;
  d.size.assign(2 * n - 1, 1);
  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t next = n;
  for (const auto& e : mst) {
    const std::size_t ra = find(e.a);
    const std::size_t rb = find(e.b);
    if (ra == rb) throw FormatError("MST contains a cycle");
    d.left.push_back(ra);
    d.right.push_back(rb);
    d.distance.push_back(e.weight);
    d.size[next] = d.size[ra] + d.size[rb];
    parent[ra] = parent[rb] = next;
    ++next;
  }
  if (next != 2 * n - 1) throw FormatError("MST does not span all points");
  return d;
}

// Points (node ids < n) below `node` in the dendrogram.
void collect_points(const Dendrogram& d, std::size_t n, std::size_t node, std::vector<std::size_t>& out) {
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t x = stack.back();
    stack.pop_back();
    if (x < n) {
      out.push_back(x);
    } else {
      stack.push_back(d.right[x - n]);
      stack.push_back(d.left[x - n]);
    }
  }
}

}  // namespace

double euclidean(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t d = 0; d < u.size(); ++d) s += (u[d] - v[d]) * (u[d] - v[d]);
  return std::sqrt(s);
}

void ClusterConfig::validate() const {
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
  if (min_samples && *min_samples < 1) throw ConfigError("min_samples must be >= 1");
}

std::size_t CondensedTree::cluster_count() const {
  std::size_t max_id = n;
  for (const auto& r : rows) max_id = std::max(max_id, std::max(r.parent, r.child));
  return max_id - n + 1;
}

std::size_t ClusterAssignment::cluster_count() const {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return static_cast<std::size_t>(top + 1);
}

std::vector<double> core_distances(const Points& points, std::size_t min_samples) {
  const std::size_t n = points.size();
  if (min_samples == 0 || min_samples >= n) {
    throw ConfigError("min_samples must satisfy 1 <= min_samples < n (min_samples=" + std::to_string(min_samples) +
                      ", n=" + std::to_string(n) + ")");
  }
  std::vector<double> core(n);
  std::vector<double> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist[c++] = euclidean(points[i], points[j]);
    }
    auto nth = dist.begin() + static_cast<std::ptrdiff_t>(min_samples - 1);
    std::nth_element(dist.begin(), nth, dist.end());
    core[i] = *nth;
  }
  return core;
}

std::vector<MstEdge> build_mst(std::size_t n, const std::function<double(std::size_t, std::size_t)>& weight) {
  if (n < 2) throw DomainError("MST requires at least 2 points");
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, INFINITY);
  std::vector<std::size_t> parent(n, kNone);
  std::vector<MstEdge> edges;
  edges.reserve(n - 1);

  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = kNone;
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double w = weight(current, v);
      if (w < best[v] || (w == best[v] && current < parent[v])) {
        best[v] = w;
        parent[v] = current;
      }
      if (next == kNone || best[v] < best[next]) next = v;
    }
    in_tree[next] = true;
    edges.push_back(MstEdge{parent[next], next, best[next]});
    current = next;
  }
  return edges;
}

std::vector<MstEdge> build_mst(const Points& points, std::span<const double> core) {
  return build_mst(points.size(), [&](std::size_t i, std::size_t j) {
    return mutual_reachability(euclidean(points[i], points[j]), core[i], core[j]);
  });
}

CondensedTree condense_tree(std::vector<MstEdge> mst, std::size_t n, std::size_t min_cluster_size) {
  if (n < 2) throw DomainError("condense_tree requires at least 2 points");
  const Dendrogram d = single_linkage(std::move(mst), n);
  const std::size_t top = 2 * n - 2;

  CondensedTree tree;
  tree.n = n;
  std::vector<std::size_t> relabel(2 * n - 1, kNone);
  relabel[top] = n;
  std::size_t next_label = n + 1;
  std::vector<std::size_t> fallen;

  auto shed = [&](std::size_t node, std::size_t cluster, double lambda) {
    fallen.clear();
    collect_points(d, n, node, fallen);
    for (std::size_t p : fallen) tree.rows.push_back(CondensedRow{cluster, p, lambda, 1});
  };

  std::deque<std::size_t> queue{top};
  while (!queue.empty()) {
    const std::size_t node = queue.front();
    queue.pop_front();
    if (node < n) continue;
    const std::size_t left = d.left[node - n];
    const std::size_t right = d.right[node - n];
    const double lambda = to_lambda(d.distance[node - n]);
    const std::size_t cluster = relabel[node];
    const bool left_big = d.size[left] >= min_cluster_size;
    const bool right_big = d.size[right] >= min_cluster_size;

    if (left_big && right_big) {
      for (std::size_t child : {left, right}) {
        relabel[child] = next_label++;
        tree.rows.push_back(CondensedRow{cluster, relabel[child], lambda, d.size[child]});
        queue.push_back(child);
      }
    } else if (!left_big && !right_big) {
      shed(left, cluster, lambda);
      shed(right, cluster, lambda);
    } else {
      const std::size_t big = left_big ? left : right;
      const std::size_t small = left_big ? right : left;
      shed(small, cluster, lambda);
      relabel[big] = cluster;
      queue.push_back(big);
    }
  }
  return tree;
}

std::vector<double> cluster_stabilities(const CondensedTree& tree) {
  const std::size_t count = tree.cluster_count();
  std::vector<double> birth(count, 0.0);
  for (const auto& r : tree.rows) {
    if (r.child >= tree.n) birth[r.child - tree.n] = r.lambda;
  }
  std::vector<double> stability(count, 0.0);
  for (const auto& r : tree.rows) {
    const std::size_t c = r.parent - tree.n;
    stability[c] += excess(r.lambda, birth[c]) * static_cast<double>(r.child_size);
  }
  return stability;
}

std::vector<std::size_t> select_clusters_eom(const CondensedTree& tree, std::size_t min_cluster_size) {
  const std::size_t n = tree.n;
  const std::size_t count = tree.cluster_count();
  std::vector<double> stability = cluster_stabilities(tree);
  std::vector<std::vector<std::size_t>> children(count);
  for (const auto& r : tree.rows) {
    if (r.child >= n) children[r.parent - n].push_back(r.child - n);
  }

  std::vector<bool> selected(count, true);
  // Children always carry larger ids than their parent.
  for (std::size_t c = count; c-- > 1;) {
    double subtree = 0.0;
    for (std::size_t ch : children[c]) subtree += stability[ch];
    if (subtree > stability[c]) {
      selected[c] = false;
      stability[c] = subtree;
    } else {
      std::vector<std::size_t> stack(children[c]);
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = false;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    }
  }
  selected[0] = children[0].empty() && n >= min_cluster_size;

  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < count; ++c) {
    if (selected[c]) ids.push_back(c + n);
  }
  return ids;
}

ClusterAssignment extract_clusters_eom(const CondensedTree& tree, std::size_t min_cluster_size) {
  const std::size_t n = tree.n;
  const std::size_t count = tree.cluster_count();
  const auto chosen = select_clusters_eom(tree, min_cluster_size);

  std::vector<std::size_t> cluster_parent(count, kNone);
  std::vector<std::size_t> fell_from(n, kNone);
  std::vector<double> point_lambda(n, 0.0);
  for (const auto& r : tree.rows) {
    if (r.child >= n) {
      cluster_parent[r.child - n] = r.parent - n;
    } else {
      fell_from[r.child] = r.parent - n;
      point_lambda[r.child] = r.lambda;
    }
  }
  std::vector<std::size_t> owner(count, kNone);
  for (std::size_t id : chosen) owner[id - n] = id - n;
  for (std::size_t c = 1; c < count; ++c) {
    if (owner[c] == kNone) owner[c] = owner[cluster_parent[c]];
  }

  // Size-descending order, ties to the cluster holding the smallest point.
  std::vector<std::size_t> size(count, 0);
  std::vector<std::size_t> first_point(count, kNone);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t o = owner[fell_from[p]];
    if (o == kNone) continue;
    ++size[o];
    first_point[o] = std::min(first_point[o], p);
  }
  std::vector<std::size_t> order;
  for (std::size_t id : chosen) order.push_back(id - n);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return size[x] != size[y] ? size[x] > size[y] : first_point[x] < first_point[y];
  });
  std::vector<int> final_label(count, -1);
  for (std::size_t rank = 0; rank < order.size(); ++rank) final_label[order[rank]] = static_cast<int>(rank);

  ClusterAssignment out;
  out.labels.assign(n, -1);
  out.strength.assign(n, 0.0);
  std::vector<double> max_lambda(count, 0.0);
  std::vector<double> max_finite(count, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t o = owner[fell_from[p]];
    if (o == kNone) continue;
    max_lambda[o] = std::max(max_lambda[o], point_lambda[p]);
    if (std::isfinite(point_lambda[p])) max_finite[o] = std::max(max_finite[o], point_lambda[p]);
  }
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t o = owner[fell_from[p]];
    if (o == kNone) continue;
    out.labels[p] = final_label[o];
    const double lp = point_lambda[p];
    double s = 1.0;
    if (std::isfinite(lp)) {
      const double ref = std::isfinite(max_lambda[o]) ? max_lambda[o] : max_finite[o];
      s = ref > 0.0 ? lp / ref : 1.0;
    }
    out.strength[p] = std::clamp(s, std::numeric_limits<double>::min(), 1.0);
  }
  return out;
}

ClusterAssignment hdbscan(const Points& points, const ClusterConfig& config) {
  config.validate();
  const std::size_t n = points.size();
  const auto core = core_distances(points, config.effective_min_samples());
  auto tree = condense_tree(build_mst(points, core), n, config.min_cluster_size);
  return extract_clusters_eom(tree, config.min_cluster_size);
}

void write_assignment_csv(std::ostream& out, const ClusterAssignment& a) {
  out << "sent_id,label,strength\n";
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < a.labels.size(); ++i) out << i << ',' << a.labels[i] << ',' << a.strength[i] << '\n';
  out.precision(old);
}

ClusterAssignment read_assignment_csv(std::istream& in) {
  ClusterAssignment a;
  std::string line;
  if (!std::getline(in, line) || line.rfind("sent_id,label,strength", 0) != 0) {
    throw FormatError("assignment CSV must start with header sent_id,label,strength");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string id, label, strength;
    if (!std::getline(row, id, ',') || !std::getline(row, label, ',') || !std::getline(row, strength)) {
      throw FormatError("malformed assignment row at line " + std::to_string(line_no));
    }
    try {
      if (std::stoull(id) != a.labels.size()) throw FormatError("non-contiguous sent_id");
      a.labels.push_back(std::stoi(label));
      a.strength.push_back(std::stod(strength));
    } catch (const std::exception& e) {
      throw FormatError("malformed assignment row at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return a;
}

}  // namespace qda::clustering
