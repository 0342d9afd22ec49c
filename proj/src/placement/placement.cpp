#include "rap/placement/placement.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace rap::placement {

std::string_view to_string(UnplacedReason r) {
  switch (r) {
    case UnplacedReason::NoToleratedNode: return "NoToleratedNode";
    case UnplacedReason::InsufficientCpu: return "InsufficientCpu";
    case UnplacedReason::InsufficientMem: return "InsufficientMem";
    case UnplacedReason::GpuCapExceeded: return "GpuCapExceeded";
  }
  return "?";
}

std::string_view to_string(Policy p) {
  return p == Policy::best_fit ? "best_fit" : "first_fit_decreasing";
}

Policy parse_policy(std::string_view s) {
  if (s == "ffd" || s == "first_fit_decreasing") return Policy::first_fit_decreasing;
  if (s == "bf" || s == "best_fit") return Policy::best_fit;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::UnknownNode: return "UnknownNode";
    case ViolationKind::UnknownSession: return "UnknownSession";
    case ViolationKind::CpuOvercommit: return "CpuOvercommit";
    case ViolationKind::MemOvercommit: return "MemOvercommit";
    case ViolationKind::GpuCapExceeded: return "GpuCapExceeded";
    case ViolationKind::TaintNotTolerated: return "TaintNotTolerated";
    case ViolationKind::NoGpu: return "NoGpu";
    case ViolationKind::NotAccounted: return "NotAccounted";
    case ViolationKind::DoubleBooked: return "DoubleBooked";
  }
  return "?";
}

void validate(const std::vector<NodeSpec>& nodes, const std::vector<SessionSpec>& sessions) {
  std::set<std::string> names;
  for (const auto& n : nodes) {
    if (n.name.empty() || !names.insert(n.name).second) throw std::invalid_argument("bad or duplicate node name '" + n.name + "'");
    if (n.cpu_millis <= 0 || n.mem_mb <= 0) throw std::invalid_argument("node " + n.name + ": capacities must be positive");
    if (n.gpus < 0 || n.gpus > 1) throw std::invalid_argument("node " + n.name + ": gpus must be 0 or 1");
  }
  names.clear();
  for (const auto& s : sessions) {
    if (s.name.empty() || !names.insert(s.name).second) throw std::invalid_argument("bad or duplicate session name '" + s.name + "'");
    if (s.cpu_millis <= 0 || s.mem_mb <= 0) throw std::invalid_argument("session " + s.name + ": requests must be positive");
  }
}

namespace {

bool tolerates(const SessionSpec& s, const NodeSpec& n) {
  return std::includes(s.tolerations.begin(), s.tolerations.end(), n.taints.begin(), n.taints.end());
}

struct NodeState {
  const NodeSpec* spec;
  std::int64_t cpu_free;
  std::int64_t mem_free;
  int gpu_sessions = 0;
};

}  // namespace

PlacementPlan plan(const std::vector<NodeSpec>& nodes, const std::vector<SessionSpec>& sessions, Policy policy) {
  validate(nodes, sessions);
  std::vector<NodeState> state;
  for (const auto& n : nodes) state.push_back({&n, n.cpu_millis, n.mem_mb});
  std::sort(state.begin(), state.end(), [](const NodeState& a, const NodeState& b) { return a.spec->name < b.spec->name; });

  std::vector<const SessionSpec*> order;
  for (const auto& s : sessions) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const SessionSpec* a, const SessionSpec* b) {
    return std::tuple(-a->cpu_millis, -a->mem_mb, a->name) < std::tuple(-b->cpu_millis, -b->mem_mb, b->name);
  });

  PlacementPlan out;
  for (const auto* s : order) {
    NodeState* chosen = nullptr;
    bool any_tolerated = false, any_uncapped = false, any_cpu = false;
    for (auto& n : state) {
      if (!tolerates(*s, *n.spec) || (s->needs_gpu && n.spec->gpus < 1)) continue;
      any_tolerated = true;
      if (s->needs_gpu && n.gpu_sessions >= kMaxGpuSessionsPerNode) continue;
      any_uncapped = true;
      if (n.cpu_free < s->cpu_millis) continue;
      any_cpu = true;
      if (n.mem_free < s->mem_mb) continue;
      if (policy == Policy::first_fit_decreasing) {
        chosen = &n;
        break;
      }
      auto key = [&](const NodeState& x) { return std::tuple(x.cpu_free - s->cpu_millis, x.mem_free - s->mem_mb); };
      if (!chosen || key(n) < key(*chosen)) chosen = &n;  // name order breaks ties
    }
    if (chosen) {
      chosen->cpu_free -= s->cpu_millis;
      chosen->mem_free -= s->mem_mb;
      if (s->needs_gpu) ++chosen->gpu_sessions;
      out.assignment[s->name] = chosen->spec->name;
      continue;
    }
    UnplacedReason why = !any_tolerated  ? UnplacedReason::NoToleratedNode
                         : !any_uncapped ? UnplacedReason::GpuCapExceeded
                         : !any_cpu      ? UnplacedReason::InsufficientCpu
                                         : UnplacedReason::InsufficientMem;
    out.unplaced.push_back({s->name, why});
  }
  return out;
}

std::vector<Violation> verify(const PlacementPlan& p, const std::vector<NodeSpec>& nodes,
                              const std::vector<SessionSpec>& sessions) {
  std::vector<Violation> out;
  std::map<std::string, const NodeSpec*> node_by_name;
  for (const auto& n : nodes) node_by_name[n.name] = &n;
  std::map<std::string, const SessionSpec*> session_by_name;
  for (const auto& s : sessions) session_by_name[s.name] = &s;

  struct Load {
    std::int64_t cpu = 0, mem = 0;
    int gpu = 0;
  };
  std::map<std::string, Load> load;
  for (const auto& [sname, nname] : p.assignment) {
    auto si = session_by_name.find(sname);
    auto ni = node_by_name.find(nname);
    if (si == session_by_name.end()) out.push_back({ViolationKind::UnknownSession, nname, sname});
    if (ni == node_by_name.end()) out.push_back({ViolationKind::UnknownNode, nname, sname});
    if (si == session_by_name.end() || ni == node_by_name.end()) continue;
    const auto& s = *si->second;
    const auto& n = *ni->second;
    for (const auto& t : n.taints) {
      if (!s.tolerations.count(t)) {
        out.push_back({ViolationKind::TaintNotTolerated, nname, sname});
        break;
      }
    }
    if (s.needs_gpu && n.gpus < 1) out.push_back({ViolationKind::NoGpu, nname, sname});
    auto& l = load[nname];
    l.cpu += s.cpu_millis;
    l.mem += s.mem_mb;
    if (s.needs_gpu) ++l.gpu;
  }
  for (const auto& [nname, l] : load) {
    const auto& n = *node_by_name.at(nname);
    if (l.cpu > n.cpu_millis) out.push_back({ViolationKind::CpuOvercommit, nname, ""});
    if (l.mem > n.mem_mb) out.push_back({ViolationKind::MemOvercommit, nname, ""});
    if (l.gpu > kMaxGpuSessionsPerNode) out.push_back({ViolationKind::GpuCapExceeded, nname, ""});
  }
  std::set<std::string> unplaced;
  for (const auto& u : p.unplaced) {
    if (!session_by_name.count(u.session)) out.push_back({ViolationKind::UnknownSession, "", u.session});
    if (p.assignment.count(u.session) || !unplaced.insert(u.session).second) {
      out.push_back({ViolationKind::DoubleBooked, "", u.session});
    }
  }
  for (const auto& s : sessions) {
    if (!p.assignment.count(s.name) && !unplaced.count(s.name)) out.push_back({ViolationKind::NotAccounted, "", s.name});
  }
  return out;
}

int capacity_report(const std::vector<NodeSpec>& nodes, const SessionSpec& tpl, Policy policy) {
  validate(nodes, {tpl});
  std::int64_t total_cpu = 0;
  for (const auto& n : nodes) total_cpu += n.cpu_millis;
  const auto limit = static_cast<int>(total_cpu / tpl.cpu_millis);
  std::vector<SessionSpec> batch;
  int placed = 0;
  for (int k = 1; k <= limit; ++k) {
    SessionSpec s = tpl;
    s.name = tpl.name + "-" + std::to_string(k);
    batch.push_back(s);
    if (!plan(nodes, batch, policy).unplaced.empty()) break;
    placed = k;
  }
  return placed;
}

// ---- files --------------------------------------------------------------------

namespace {

std::set<std::string> string_set(const YAML::Node& n) {
  std::set<std::string> out;
  if (!n || n.IsNull()) return out;
  if (n.IsScalar()) {
    out.insert(n.as<std::string>());
    return out;
  }
  for (const auto& x : n) out.insert(x.as<std::string>());
  return out;
}

YAML::Node records(const std::string& text, const char* key) {
  auto root = YAML::Load(text);
  if (root.IsMap() && root[key]) root = root[key];
  if (root.IsNull()) return YAML::Node(YAML::NodeType::Sequence);
  if (!root.IsSequence()) throw std::invalid_argument(std::string("expected a list of ") + key);
  return root;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("yaml: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<NodeSpec> parse_nodes_yaml(const std::string& text) {
  return guarded([&] {
    std::vector<NodeSpec> out;
    for (const auto& r : records(text, "nodes")) {
      NodeSpec n;
      for (auto it : r) {
        const auto key = it.first.as<std::string>();
        if (key == "name") n.name = it.second.as<std::string>();
        else if (key == "cpu_millis") n.cpu_millis = it.second.as<std::int64_t>();
        else if (key == "mem_mb") n.mem_mb = it.second.as<std::int64_t>();
        else if (key == "gpus") n.gpus = it.second.as<int>();
        else if (key == "taints") n.taints = string_set(it.second);
        else throw std::invalid_argument("unknown node key '" + key + "'");
      }
      out.push_back(std::move(n));
    }
    validate(out, {});
    return out;
  });
}

std::vector<SessionSpec> parse_sessions_yaml(const std::string& text) {
  return guarded([&] {
    std::vector<SessionSpec> out;
    for (const auto& r : records(text, "sessions")) {
      SessionSpec s;
      for (auto it : r) {
        const auto key = it.first.as<std::string>();
        if (key == "name") s.name = it.second.as<std::string>();
        else if (key == "cpu_millis") s.cpu_millis = it.second.as<std::int64_t>();
        else if (key == "mem_mb") s.mem_mb = it.second.as<std::int64_t>();
        else if (key == "needs_gpu") s.needs_gpu = it.second.as<bool>();
        else if (key == "tolerations") s.tolerations = string_set(it.second);
        else throw std::invalid_argument("unknown session key '" + key + "'");
      }
      out.push_back(std::move(s));
    }
    validate({}, out);
    return out;
  });
}

std::vector<NodeSpec> load_nodes(const std::string& path) { return parse_nodes_yaml(read_file(path)); }
std::vector<SessionSpec> load_sessions(const std::string& path) { return parse_sessions_yaml(read_file(path)); }

std::string plan_to_json(const PlacementPlan& p) {
  nlohmann::ordered_json j;
  j["assignment"] = nlohmann::ordered_json::object();
  for (const auto& [s, n] : p.assignment) j["assignment"][s] = n;
  j["unplaced"] = nlohmann::ordered_json::array();
  for (const auto& u : p.unplaced) j["unplaced"].push_back({{"session", u.session}, {"reason", to_string(u.reason)}});
  return j.dump(2);
}

PlacementPlan plan_from_json(const std::string& text) {
  PlacementPlan p;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& [s, n] : j.at("assignment").items()) p.assignment[s] = n.get<std::string>();
    for (const auto& u : j.at("unplaced")) {
      const auto reason = u.at("reason").get<std::string>();
      std::optional<UnplacedReason> r;
      for (auto c : {UnplacedReason::NoToleratedNode, UnplacedReason::InsufficientCpu, UnplacedReason::InsufficientMem,
                     UnplacedReason::GpuCapExceeded}) {
        if (to_string(c) == reason) r = c;
      }
      if (!r) throw std::invalid_argument("unknown unplaced reason '" + reason + "'");
      p.unplaced.push_back({u.at("session").get<std::string>(), *r});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("plan json: ") + e.what());
  }
  return p;
}

}  // namespace rap::placement
