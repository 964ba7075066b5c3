#pragma once

// Deliberately slow reference for density clustering, written from the
// definitions: an all-pairs mutual reachability matrix, Prim by exhaustive
// scan over every (tree, non-tree) pair, a top-down condensation that
// repeatedly cuts the heaviest remaining tree edge, and excess-of-mass
// selection as a recursion over the condensed hierarchy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <vector>

namespace qda::testing {

struct NaiveEdge {
  double w;
  std::size_t a;  // tree side
  std::size_t b;  // vertex added
};

struct NaiveCluster {
  double birth = 0.0;
  std::vector<std::size_t> children;
  std::vector<std::pair<std::size_t, double>> fallen;  // point, lambda
  double stability = 0.0;
};

class NaiveHdbscan {
 public:
  NaiveHdbscan(const std::vector<std::vector<double>>& pts, std::size_t min_cluster_size, std::size_t min_samples)
      : n_(pts.size()), mcs_(min_cluster_size) {
    std::vector<std::vector<double>> d(n_, std::vector<double>(n_, 0.0));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < pts[i].size(); ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
        d[i][j] = std::sqrt(s);
      }
    }
    core_.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      std::vector<double> others;
      for (std::size_t j = 0; j < n_; ++j) {
        if (j != i) others.push_back(d[i][j]);
      }
      std::sort(others.begin(), others.end());
      core_[i] = others[min_samples - 1];
    }
    mr_.assign(n_, std::vector<double>(n_, 0.0));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) mr_[i][j] = std::max({d[i][j], core_[i], core_[j]});
    }
    prim();
    std::vector<std::size_t> all(n_);
    for (std::size_t i = 0; i < n_; ++i) all[i] = i;
    clusters_.push_back(NaiveCluster{0.0, {}, {}, 0.0});
    condense(0, all, mst_);
    for (auto& c : clusters_) {
      for (const auto& [p, lambda] : c.fallen) c.stability += excess(lambda, c.birth);
      for (std::size_t ch : c.children) {
        c.stability += excess(clusters_[ch].birth, c.birth) * static_cast<double>(size_of(ch));
      }
    }
    select();
  }

  const std::vector<NaiveEdge>& mst() const { return mst_; }
  const std::vector<double>& core() const { return core_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t cluster_count() const { return clusters_.size(); }

  double mst_weight() const {
    double s = 0.0;
    for (const auto& e : mst_) s += e.w;
    return s;
  }

 private:
  static double lambda_of(double w) { return w > 0.0 ? 1.0 / w : std::numeric_limits<double>::infinity(); }
  static double excess(double lambda, double birth) { return lambda == birth ? 0.0 : lambda - birth; }

  void prim() {
    std::vector<bool> in(n_, false);
    in[0] = true;
    for (std::size_t step = 1; step < n_; ++step) {
      std::tuple<double, std::size_t, std::size_t> best{std::numeric_limits<double>::infinity(), n_, n_};
      for (std::size_t u = 0; u < n_; ++u) {
        if (!in[u]) continue;
        for (std::size_t v = 0; v < n_; ++v) {
          if (in[v]) continue;
          const std::tuple<double, std::size_t, std::size_t> cand{mr_[u][v], v, u};
          if (cand < best) best = cand;
        }
      }
      const auto [w, v, u] = best;
      in[v] = true;
      mst_.push_back(NaiveEdge{w, u, v});
    }
  }

  std::size_t size_of(std::size_t cluster) const {
    std::size_t s = clusters_[cluster].fallen.size();
    for (std::size_t ch : clusters_[cluster].children) s += size_of(ch);
    return s;
  }

  // Points of `pts` reachable from `start` over `edges`.
  static std::vector<std::size_t> component(std::size_t start, const std::vector<NaiveEdge>& edges) {
    std::set<std::size_t> seen{start};
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& e : edges) {
        if (seen.contains(e.a) != seen.contains(e.b)) {
          seen.insert(e.a);
          seen.insert(e.b);
          grew = true;
        }
      }
    }
    return {seen.begin(), seen.end()};
  }

  static std::vector<NaiveEdge> within(const std::vector<std::size_t>& pts, const std::vector<NaiveEdge>& edges) {
    const std::set<std::size_t> s(pts.begin(), pts.end());
    std::vector<NaiveEdge> out;
    for (const auto& e : edges) {
      if (s.contains(e.a) && s.contains(e.b)) out.push_back(e);
    }
    return out;
  }

  void condense(std::size_t cluster, std::vector<std::size_t> pts, std::vector<NaiveEdge> edges) {
    while (pts.size() > 1) {
      // Equal weights are cut in descending (w, lower endpoint, upper endpoint).
      auto key = [](const NaiveEdge& e) { return std::make_tuple(e.w, std::min(e.a, e.b), std::max(e.a, e.b)); };
      auto heaviest = std::max_element(edges.begin(), edges.end(),
                                       [&](const NaiveEdge& x, const NaiveEdge& y) { return key(x) < key(y); });
      const NaiveEdge cut = *heaviest;
      edges.erase(heaviest);
      const double lambda = lambda_of(cut.w);
      const auto left = component(cut.a, edges);
      const auto right = component(cut.b, edges);
      const bool left_big = left.size() >= mcs_;
      const bool right_big = right.size() >= mcs_;
      if (left_big && right_big) {
        for (const auto* side : {&left, &right}) {
          const std::size_t id = clusters_.size();
          clusters_.push_back(NaiveCluster{lambda, {}, {}, 0.0});
          clusters_[cluster].children.push_back(id);
          condense(id, *side, within(*side, edges));
        }
        return;
      }
      if (!left_big && !right_big) {
        for (std::size_t p : left) clusters_[cluster].fallen.emplace_back(p, lambda);
        for (std::size_t p : right) clusters_[cluster].fallen.emplace_back(p, lambda);
        return;
      }
      const auto& small = left_big ? right : left;
      for (std::size_t p : small) clusters_[cluster].fallen.emplace_back(p, lambda);
      pts = left_big ? left : right;
      edges = within(pts, edges);
    }
  }

  // Best antichain below (and including) c, with c kept on ties.
  double best(std::size_t c, std::vector<std::size_t>& chosen) const {
    std::vector<std::size_t> below;
    double sum = 0.0;
    for (std::size_t ch : clusters_[c].children) sum += best(ch, below);
    if (!clusters_[c].children.empty() && sum > clusters_[c].stability) {
      chosen.insert(chosen.end(), below.begin(), below.end());
      return sum;
    }
    chosen.push_back(c);
    return clusters_[c].stability;
  }

  void select() {
    std::vector<std::size_t> chosen;
    if (clusters_[0].children.empty()) {
      if (n_ >= mcs_) chosen.push_back(0);
    } else {
      for (std::size_t ch : clusters_[0].children) best(ch, chosen);
    }
    // Every point's cluster is where it fell out; its label comes from the
    // chosen cluster at or above that one.
    std::vector<std::size_t> parent(clusters_.size(), clusters_.size());
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      for (std::size_t ch : clusters_[c].children) parent[ch] = c;
    }
    const std::set<std::size_t> picked(chosen.begin(), chosen.end());
    std::vector<long> owner_of_point(n_, -1);
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      long owner = -1;
      for (std::size_t x = c; x < clusters_.size(); x = parent[x]) {
        if (picked.contains(x)) {
          owner = static_cast<long>(x);
          break;
        }
      }
      for (const auto& [p, lambda] : clusters_[c].fallen) owner_of_point[p] = owner;
    }
    std::map<long, std::pair<std::size_t, std::size_t>> stats;  // owner -> (size, first point)
    for (std::size_t p = 0; p < n_; ++p) {
      if (owner_of_point[p] < 0) continue;
      auto& s = stats.try_emplace(owner_of_point[p], 0, p).first->second;
      ++s.first;
    }
    std::vector<std::pair<std::pair<long, std::size_t>, long>> order;
    for (const auto& [owner, s] : stats) order.push_back({{-static_cast<long>(s.first), s.second}, owner});
    std::sort(order.begin(), order.end());
    std::map<long, int> final_label;
    for (std::size_t r = 0; r < order.size(); ++r) final_label[order[r].second] = static_cast<int>(r);
    labels_.assign(n_, -1);
    for (std::size_t p = 0; p < n_; ++p) {
      if (owner_of_point[p] >= 0) labels_[p] = final_label[owner_of_point[p]];
    }
  }

  std::size_t n_;
  std::size_t mcs_;
  std::vector<double> core_;
  std::vector<std::vector<double>> mr_;
  std::vector<NaiveEdge> mst_;
  std::vector<NaiveCluster> clusters_;
  std::vector<int> labels_;
};

}  // namespace qda::testing
