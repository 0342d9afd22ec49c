#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rap::placement {

/// Most GPU sessions a single GPU node may host at once.
inline constexpr int kMaxGpuSessionsPerNode = 2;

struct NodeSpec {
  std::string name;
  std::int64_t cpu_millis = 0;
  std::int64_t mem_mb = 0;
  int gpus = 0;
  std::set<std::string> taints;
};

struct SessionSpec {
  std::string name;
  std::int64_t cpu_millis = 0;
  std::int64_t mem_mb = 0;
  bool needs_gpu = false;
  std::set<std::string> tolerations;
};

enum class UnplacedReason { NoToleratedNode, InsufficientCpu, InsufficientMem, GpuCapExceeded };
std::string_view to_string(UnplacedReason r);

struct Unplaced {
  std::string session;
  UnplacedReason reason;

  bool operator==(const Unplaced&) const = default;
};

struct PlacementPlan {
  std::map<std::string, std::string> assignment;  // session -> node
  std::vector<Unplaced> unplaced;                 // in placement order

  bool operator==(const PlacementPlan&) const = default;
};

enum class Policy { first_fit_decreasing, best_fit };
std::string_view to_string(Policy p);
/// "ffd" / "first_fit_decreasing" / "best_fit" / "bf". Throws std::invalid_argument.
Policy parse_policy(std::string_view s);

/// Throws std::invalid_argument on non-positive capacities or requests,
/// gpus outside {0, 1}, or duplicate names.
void validate(const std::vector<NodeSpec>& nodes, const std::vector<SessionSpec>& sessions);

/// Sessions are taken by cpu request descending, then memory descending,
/// then name. First fit walks nodes in name order; best fit picks the node
/// left with the least spare cpu (then memory, then name). A node only hosts
/// sessions that tolerate every one of its taints, GPU sessions only land on
/// GPU nodes, and a GPU node never hosts more than two GPU sessions.
PlacementPlan plan(const std::vector<NodeSpec>& nodes, const std::vector<SessionSpec>& sessions,
                   Policy policy = Policy::first_fit_decreasing);

enum class ViolationKind {
  UnknownNode,
  UnknownSession,
  CpuOvercommit,
  MemOvercommit,
  GpuCapExceeded,
  TaintNotTolerated,
  NoGpu,
  NotAccounted,  // session neither assigned nor listed as unplaced
  DoubleBooked,  // session both assigned and listed as unplaced
};
std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::string node;
  std::string session;
};

/// Independent checker; an empty result means the plan is valid.
std::vector<Violation> verify(const PlacementPlan& plan, const std::vector<NodeSpec>& nodes,
                              const std::vector<SessionSpec>& sessions);

/// Largest number of copies of `session_template` that plan() places
/// without leaving any unplaced.
int capacity_report(const std::vector<NodeSpec>& nodes, const SessionSpec& session_template,
                    Policy policy = Policy::first_fit_decreasing);

// YAML files: a list of mappings (or a mapping with a "nodes"/"sessions"
// key holding one) using the field names above. Throw std::invalid_argument.
std::vector<NodeSpec> parse_nodes_yaml(const std::string& text);
std::vector<SessionSpec> parse_sessions_yaml(const std::string& text);
std::vector<NodeSpec> load_nodes(const std::string& path);
std::vector<SessionSpec> load_sessions(const std::string& path);
/// {"assignment": {...}, "unplaced": [{"session", "reason"}]}
std::string plan_to_json(const PlacementPlan& plan);
PlacementPlan plan_from_json(const std::string& text);

}  // namespace rap::placement
