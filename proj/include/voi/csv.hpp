#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "voi/config.hpp"
#include "voi/version.hpp"

// Results emission. CSV bodies are deterministic functions of the results;
// floats carry 17 significant digits so parsing them back is exact. Every
// output directory gets a metadata sidecar with the full config, seed, code
// version and index mode.

namespace voi {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TrajectoryRow {
  std::string experiment;
  std::string policy;
  std::uint64_t replication = 0;
  Slot slot = 0;
  double e2 = 0.0;
  std::optional<std::uint64_t> decision_packet;
  int delivered = 0;
};

struct SummaryRow {
  std::string experiment;
  std::string policy;
  std::size_t n_reps = 0;
  double mean_cost = 0.0;
  double std_error = 0.0;
};

struct VerificationRow {
  std::string instance;
  std::string check;
  bool passed = false;
  std::string detail;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

inline constexpr const char* kTrajectoryHeader =
    "experiment,policy,replication,slot,e2,decision_packet,delivered";

inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<TrajectoryRow>& rows) {
  auto out = open_out(path);
  out << kTrajectoryHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.policy << ',' << r.replication << ',' << r.slot
        << ',' << format_g17(r.e2) << ',';
    if (r.decision_packet) out << *r.decision_packet;
    out << ',' << r.delivered << '\n';
  }
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "experiment,policy,n_reps,mean_cost,std_error\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << r.policy << ',' << r.n_reps << ','
        << format_g17(r.mean_cost) << ',' << format_g17(r.std_error) << '\n';
}

inline void write_verification_csv(const std::string& path,
                                   const std::vector<VerificationRow>& rows) {
  auto out = open_out(path);
  out << "instance,check,passed,detail\n";
  for (const auto& r : rows)
    out << r.instance << ',' << r.check << ',' << (r.passed ? 1 : 0) << ',' << r.detail
        << '\n';
}

inline void write_metadata(const std::string& path, const ExperimentSpec& spec) {
  json meta;
  meta["version"] = kVersion;
  meta["seed"] = spec.seed;
  meta["mode"] = spec.mode == IndexMode::paper ? "paper" : "exact";
  meta["config"] = emit_config(spec);
  auto out = open_out(path);
  out << meta.dump(2) << '\n';
}

// Rows for one finished episode.
inline void append_episode_rows(std::vector<TrajectoryRow>& rows,
                                const std::string& experiment, const std::string& policy,
                                std::uint64_t replication, const EpisodeResult& res) {
  std::vector<int> delivered_at(res.e2.size() + 1, 0);
  for (const auto& a : res.attempts)
    if (a.success) delivered_at[static_cast<std::size_t>(a.slot)] = 1;
  for (std::size_t i = 0; i < res.e2.size(); ++i) {
    TrajectoryRow r;
    r.experiment = experiment;
    r.policy = policy;
    r.replication = replication;
    r.slot = static_cast<Slot>(i + 1);
    r.e2 = res.e2[i];
    if (i < res.decisions.size()) r.decision_packet = res.decisions[i];
    r.delivered = delivered_at[i + 1];
    rows.push_back(std::move(r));
  }
}

}  // namespace voi
