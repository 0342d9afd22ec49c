#include "rap/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace rap::metrics {

using nlohmann::json;

Percentiles percentiles(std::vector<double> samples) {
  Percentiles p;
  p.count = samples.size();
  if (samples.empty()) return p;
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
  };
  p.p50_ms = rank(0.50);
  p.p95_ms = rank(0.95);
  p.p99_ms = rank(0.99);
  p.max_ms = samples.back();
  return p;
}

void check_invariants(RunReport& r) {
  r.violations.clear();
  for (const auto& [name, t] : r.topics) {
    if (!t.balanced()) {
      r.violations.push_back(name + ": sent " + std::to_string(t.sent) + " != delivered " + std::to_string(t.delivered) +
                             " + lost_disconnect " + std::to_string(t.lost_disconnect) + " + dropped_queue " +
                             std::to_string(t.dropped_queue));
    }
    const auto& l = t.latency;
    if (!(l.p50_ms <= l.p95_ms && l.p95_ms <= l.p99_ms && l.p99_ms <= l.max_ms)) {
      r.violations.push_back(name + ": latency percentiles not monotone");
    }
    if (t.order_violations) r.violations.push_back(name + ": " + std::to_string(t.order_violations) + " out-of-order");
    if (t.payload_mismatches) {
      r.violations.push_back(name + ": " + std::to_string(t.payload_mismatches) + " payloads changed in transit");
    }
  }
  if (r.duct_listening_sockets != 0) r.violations.push_back("duct holds a listening socket");
}

void write_table(std::ostream& out, const RunReport& r) {
  out << "scenario " << r.scenario << "  seed " << r.seed << "  encoding " << r.encoding << "  traffic " << r.traffic
      << "  clock " << r.clock << "  duration " << r.duration_s << " s\n\n";
  out << std::left << std::setw(16) << "topic" << std::right << std::setw(5) << "dir" << std::setw(9) << "sent"
      << std::setw(10) << "deliv" << std::setw(9) << "lost_dc" << std::setw(9) << "drop_q" << std::setw(10) << "p50 ms"
      << std::setw(10) << "p95 ms" << std::setw(10) << "p99 ms" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& [name, t] : r.topics) {
    out << std::left << std::setw(16) << name << std::right << std::setw(5) << t.direction << std::setw(9) << t.sent
        << std::setw(10) << t.delivered << std::setw(9) << t.lost_disconnect << std::setw(9) << t.dropped_queue
        << std::setw(10) << t.latency.p50_ms << std::setw(10) << t.latency.p95_ms << std::setw(10) << t.latency.p99_ms
        << '\n';
  }
  out << '\n';
  if (r.traffic == "nav") {
    out << "scan rate delivered " << r.scan_fps << " /s (configured " << r.scan_hz_configured
        << " Hz; message-rate analog of a frame rate)\n";
    out << "rtf mean " << std::setprecision(3) << r.rtf_mean << " over " << r.rtf.size() << " windows\n"
        << std::setprecision(2);
  }
  out << "sessions " << r.sessions << "  reconnects " << r.reconnects << "  downtime " << r.downtime_s << " s  final "
      << (r.final_live ? "live" : "NOT live") << '\n';
  out << "bytes on wire " << r.bytes_on_wire << " in " << r.frames_on_wire << " frames\n";
  out << "listening sockets " << r.listening_sockets << " (duct " << r.duct_listening_sockets << ")\n";
  out.unsetf(std::ios::floatfield);
  if (r.violations.empty()) {
    out << "invariants ok\n";
  } else {
    for (const auto& v : r.violations) out << "VIOLATION " << v << '\n';
  }
}

namespace {

json to_json(const Percentiles& p) {
  return {{"count", p.count}, {"p50_ms", p.p50_ms}, {"p95_ms", p.p95_ms}, {"p99_ms", p.p99_ms}, {"max_ms", p.max_ms}};
}

Percentiles percentiles_from(const json& j) {
  Percentiles p;
  p.count = j.at("count").get<std::size_t>();
  p.p50_ms = j.at("p50_ms").get<double>();
  p.p95_ms = j.at("p95_ms").get<double>();
  p.p99_ms = j.at("p99_ms").get<double>();
  p.max_ms = j.at("max_ms").get<double>();
  return p;
}

}  // namespace

void write_jsonl(std::ostream& out, const RunReport& r) {
  json run = {{"record", "run"},
              {"scenario", r.scenario},
              {"seed", r.seed},
              {"encoding", r.encoding},
              {"traffic", r.traffic},
              {"clock", r.clock},
              {"duration_s", r.duration_s},
              {"scan_fps", r.scan_fps},
              {"scan_hz_configured", r.scan_hz_configured},
              {"rtf_mean", r.rtf_mean},
              {"sessions", r.sessions},
              {"reconnects", r.reconnects},
              {"downtime_s", r.downtime_s},
              {"final_live", r.final_live},
              {"bytes_on_wire", r.bytes_on_wire},
              {"frames_on_wire", r.frames_on_wire},
              {"listening_sockets", r.listening_sockets},
              {"duct_listening_sockets", r.duct_listening_sockets},
              {"violations", r.violations}};
  out << run.dump() << '\n';
  for (const auto& [name, t] : r.topics) {
    json j = {{"record", "topic"},
              {"topic", name},
              {"direction", t.direction},
              {"sent", t.sent},
              {"delivered", t.delivered},
              {"lost_disconnect", t.lost_disconnect},
              {"dropped_queue", t.dropped_queue},
              {"lost_in_flight", t.lost_in_flight},
              {"throttled", t.throttled},
              {"loss_bound", t.loss_bound},
              {"payload_mismatches", t.payload_mismatches},
              {"order_violations", t.order_violations},
              {"registrations", t.registrations},
              {"latency", to_json(t.latency)}};
    out << j.dump() << '\n';
  }
  for (std::size_t i = 0; i < r.rtf.size(); ++i) {
    out << json{{"record", "rtf"}, {"window", i}, {"rtf", r.rtf[i]}}.dump() << '\n';
  }
}

RunReport read_jsonl(std::istream& in) {
  RunReport r;
  bool have_run = false;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "run") {
        have_run = true;
        r.scenario = j.at("scenario").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.encoding = j.at("encoding").get<std::string>();
        r.traffic = j.at("traffic").get<std::string>();
        r.clock = j.at("clock").get<std::string>();
        r.duration_s = j.at("duration_s").get<double>();
        r.scan_fps = j.at("scan_fps").get<double>();
        r.scan_hz_configured = j.at("scan_hz_configured").get<double>();
        r.rtf_mean = j.at("rtf_mean").get<double>();
        r.sessions = j.at("sessions").get<std::uint64_t>();
        r.reconnects = j.at("reconnects").get<std::uint64_t>();
        r.downtime_s = j.at("downtime_s").get<double>();
        r.final_live = j.at("final_live").get<bool>();
        r.bytes_on_wire = j.at("bytes_on_wire").get<std::uint64_t>();
        r.frames_on_wire = j.at("frames_on_wire").get<std::uint64_t>();
        r.listening_sockets = j.at("listening_sockets").get<std::size_t>();
        r.duct_listening_sockets = j.at("duct_listening_sockets").get<std::size_t>();
        r.violations = j.at("violations").get<std::vector<std::string>>();
      } else if (kind == "topic") {
        TopicReport t;
        t.direction = j.at("direction").get<std::string>();
        t.sent = j.at("sent").get<std::uint64_t>();
        t.delivered = j.at("delivered").get<std::uint64_t>();
        t.lost_disconnect = j.at("lost_disconnect").get<std::uint64_t>();
        t.dropped_queue = j.at("dropped_queue").get<std::uint64_t>();
        t.lost_in_flight = j.at("lost_in_flight").get<std::uint64_t>();
        t.throttled = j.at("throttled").get<std::uint64_t>();
        t.loss_bound = j.at("loss_bound").get<std::uint64_t>();
        t.payload_mismatches = j.at("payload_mismatches").get<std::uint64_t>();
        t.order_violations = j.at("order_violations").get<std::uint64_t>();
        t.registrations = j.at("registrations").get<std::uint64_t>();
        t.latency = percentiles_from(j.at("latency"));
        r.topics[j.at("topic").get<std::string>()] = t;
      } else if (kind == "rtf") {
        r.rtf.push_back(j.at("rtf").get<double>());
      } else {
        throw std::invalid_argument("report: unknown record " + kind);
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  if (!have_run) throw std::invalid_argument("report: no run record");
  return r;
}

std::vector<Delta> compare(const RunReport& a, const RunReport& b) {
  if (a.scenario != b.scenario) {
    throw std::invalid_argument("compare: scenarios differ (" + a.scenario + " vs " + b.scenario + ")");
  }
  if (a.seed != b.seed) {
    throw std::invalid_argument("compare: seeds differ (" + std::to_string(a.seed) + " vs " + std::to_string(b.seed) +
                                ")");
  }
  auto d = [](std::string m, double x, double y) { return Delta{std::move(m), x, y}; };
  std::vector<Delta> out{
      d("bytes_on_wire", static_cast<double>(a.bytes_on_wire), static_cast<double>(b.bytes_on_wire)),
      d("frames_on_wire", static_cast<double>(a.frames_on_wire), static_cast<double>(b.frames_on_wire)),
      d("reconnects", static_cast<double>(a.reconnects), static_cast<double>(b.reconnects)),
      d("downtime_s", a.downtime_s, b.downtime_s),
      d("scan_fps", a.scan_fps, b.scan_fps),
      d("rtf_mean", a.rtf_mean, b.rtf_mean),
  };
  std::map<std::string, std::pair<TopicReport, TopicReport>> both;
  for (const auto& [n, t] : a.topics) both[n].first = t;
  for (const auto& [n, t] : b.topics) both[n].second = t;
  for (const auto& [n, tt] : both) {
    const auto& [x, y] = tt;
    auto u = [](std::uint64_t v) { return static_cast<double>(v); };
    out.push_back(d(n + ".sent", u(x.sent), u(y.sent)));
    out.push_back(d(n + ".delivered", u(x.delivered), u(y.delivered)));
    out.push_back(d(n + ".lost_disconnect", u(x.lost_disconnect), u(y.lost_disconnect)));
    out.push_back(d(n + ".dropped_queue", u(x.dropped_queue), u(y.dropped_queue)));
    out.push_back(d(n + ".p50_ms", x.latency.p50_ms, y.latency.p50_ms));
    out.push_back(d(n + ".p95_ms", x.latency.p95_ms, y.latency.p95_ms));
    out.push_back(d(n + ".p99_ms", x.latency.p99_ms, y.latency.p99_ms));
  }
  return out;
}

void write_deltas(std::ostream& out, const std::vector<Delta>& deltas) {
  out << std::left << std::setw(28) << "metric" << std::right << std::setw(16) << "a" << std::setw(16) << "b"
      << std::setw(16) << "b - a" << std::setw(10) << "b / a" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& x : deltas) {
    out << std::left << std::setw(28) << x.metric << std::right << std::setw(16) << x.a << std::setw(16) << x.b
        << std::setw(16) << x.delta() << std::setw(10) << x.ratio() << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace rap::metrics
