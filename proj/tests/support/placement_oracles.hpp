#pragma once

// Reference planners for placement tests. `naive_ffd` re-derives node loads
// from the partial assignment on every probe instead of tracking free
// capacity; `exhaustive_max` finds the largest feasible set by subset DP.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rap/placement/placement.hpp"

namespace rap::testing {

inline bool oracle_allowed(const placement::SessionSpec& s, const placement::NodeSpec& n) {
  for (const auto& t : n.taints) {
    if (std::find(s.tolerations.begin(), s.tolerations.end(), t) == s.tolerations.end()) return false;
  }
  return !s.needs_gpu || n.gpus > 0;
}

// Members of `group` (indices into sessions) fit together on node n.
inline bool oracle_fits(const std::vector<placement::SessionSpec>& sessions, const std::vector<int>& group,
                        const placement::NodeSpec& n) {
  std::int64_t cpu = 0, mem = 0;
  int gpu = 0;
  for (int i : group) {
    if (!oracle_allowed(sessions[i], n)) return false;
    cpu += sessions[i].cpu_millis;
    mem += sessions[i].mem_mb;
    gpu += sessions[i].needs_gpu ? 1 : 0;
  }
  return cpu <= n.cpu_millis && mem <= n.mem_mb && gpu <= 2;
}

/// Number of sessions first-fit-decreasing places.
inline int naive_ffd(std::vector<placement::NodeSpec> nodes, const std::vector<placement::SessionSpec>& sessions) {
  std::vector<int> order(sessions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto &x = sessions[a], &y = sessions[b];
    if (x.cpu_millis != y.cpu_millis) return x.cpu_millis > y.cpu_millis;
    if (x.mem_mb != y.mem_mb) return x.mem_mb > y.mem_mb;
    return x.name < y.name;
  });
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  std::vector<std::vector<int>> on(nodes.size());
  int placed = 0;
  for (int i : order) {
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      auto trial = on[n];
      trial.push_back(i);
      if (oracle_fits(sessions, trial, nodes[n])) {
        on[n] = trial;
        ++placed;
        break;
      }
    }
  }
  return placed;
}

/// Largest number of sessions any valid plan can place (sessions <= 16).
inline int exhaustive_max(const std::vector<placement::NodeSpec>& nodes,
                          const std::vector<placement::SessionSpec>& sessions) {
  const int m = static_cast<int>(sessions.size());
  const std::uint32_t full = (1u << m);
  std::vector<char> reach(full, 0);
  reach[0] = 1;
  for (const auto& node : nodes) {
    std::vector<char> ok(full, 0);
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      std::vector<int> group;
      for (int i = 0; i < m; ++i) {
        if (mask & (1u << i)) group.push_back(i);
      }
      ok[mask] = oracle_fits(sessions, group, node);
    }
    std::vector<char> next(full, 0);
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      // next[mask] if mask splits into a reachable part and a part this node holds
      for (std::uint32_t sub = mask;; sub = (sub - 1) & mask) {
        if (ok[sub] && reach[mask ^ sub]) {
          next[mask] = 1;
          break;
        }
        if (sub == 0) break;
      }
    }
    reach.swap(next);
  }
  int best = 0;
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    if (reach[mask]) best = std::max(best, __builtin_popcount(mask));
  }
  return best;
}

struct PlacementInstance {
  std::vector<placement::NodeSpec> nodes;
  std::vector<placement::SessionSpec> sessions;
};

inline PlacementInstance random_instance(std::mt19937_64& rng, int max_nodes = 6, int max_sessions = 12) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  static const char* taints[] = {"gpu-lab", "teaching", "infra"};
  PlacementInstance inst;
  const int n_nodes = pick(1, max_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    placement::NodeSpec n;
    n.name = "node" + std::string(1, static_cast<char>('a' + pick(0, 25))) + std::to_string(i);
    n.cpu_millis = 1000 * pick(2, 16);
    n.mem_mb = 1024 * pick(4, 64);
    n.gpus = pick(0, 1);
    if (pick(0, 2) == 0) n.taints.insert(taints[pick(0, 2)]);
    if (n.gpus && pick(0, 1)) n.taints.insert("gpu-lab");
    inst.nodes.push_back(n);
  }
  const int n_sessions = pick(0, max_sessions);
  for (int i = 0; i < n_sessions; ++i) {
    placement::SessionSpec s;
    s.name = "s" + std::to_string(i);
    s.cpu_millis = 500 * pick(1, 12);
    s.mem_mb = 1024 * pick(1, 24);
    s.needs_gpu = pick(0, 2) == 0;
    for (const char* t : taints) {
      if (pick(0, 1)) s.tolerations.insert(t);
    }
    inst.sessions.push_back(s);
  }
  return inst;
}

}  // namespace rap::testing
