#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "voi/engine.hpp"
#include "voi/spsa.hpp"

// Experiment configuration: strict JSON parsing with typed error codes, all
// model invariants checked up front, and a round-trippable emitter.

namespace voi {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  enum class Code { schema = 1, assumption = 2, simplex = 3 };
  ConfigError(Code code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class ExperimentKind { single, compare, multiproc, spsa, verify };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single: return "single";
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::multiproc: return "multiproc";
    case ExperimentKind::spsa: return "spsa";
    case ExperimentKind::verify: return "verify";
  }
  return "?";
}

struct SpsaSettings {
  std::size_t iterations = 200;
  std::size_t measure_reps = 100;
  std::optional<SpsaGains> gains;
};

struct VerifySettings {
  std::size_t instances = 200;      // small-instance optimality checks
  std::size_t pairs = 1000;         // order-invariance packet pairs
  std::size_t margins = 10000;      // interchange margin instances/patterns
  std::size_t coupled_runs = 100000;
  std::size_t mc_samples = 1000000;
  std::size_t k_steps = 20;         // gain grid per a^2 point
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::single;
  std::uint64_t seed = 1;
  std::size_t reps = 100;
  IndexMode mode = IndexMode::paper;
  int arrival_lag = 0;
  std::vector<PolicyKind> policies;  // single uses the first entry
  std::optional<EpisodeConfig> episode;
  std::optional<MultiProcessConfig> multi;
  SpsaSettings spsa;
  VerifySettings verify;
};

namespace cfgdetail {

[[noreturn]] inline void fail_schema(const std::string& path, const std::string& what) {
  throw ConfigError(ConfigError::Code::schema, "config error at " + path + ": " + what);
}

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail_schema(path, "expected an object");
}

inline void reject_unknown(const json& j, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) fail_schema(path + "/" + it.key(), "unknown key");
  }
}

inline double get_number(const json& j, const std::string& path, const char* key,
                         std::optional<double> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    fail_schema(path + "/" + key, "missing required number");
  }
  if (!j[key].is_number()) fail_schema(path + "/" + key, "expected a number");
  return j[key].get<double>();
}

inline std::int64_t get_int(const json& j, const std::string& path, const char* key,
                            std::optional<std::int64_t> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    fail_schema(path + "/" + key, "missing required integer");
  }
  if (!j[key].is_number_integer()) fail_schema(path + "/" + key, "expected an integer");
  return j[key].get<std::int64_t>();
}

inline std::string get_string(const json& j, const std::string& path, const char* key,
                              std::optional<std::string> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    fail_schema(path + "/" + key, "missing required string");
  }
  if (!j[key].is_string()) fail_schema(path + "/" + key, "expected a string");
  return j[key].get<std::string>();
}

inline ProcessParams parse_process(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"a", "sigma2"});
  ProcessParams pp;
  pp.a = get_number(j, path, "a");
  pp.sigma2 = get_number(j, path, "sigma2");
  if (!(std::abs(pp.a) < 1.0))
    throw ConfigError(ConfigError::Code::assumption,
                      "Assumption 1 violated at " + path + "/a: |a| = " +
                          std::to_string(std::abs(pp.a)) + " must be < 1");
  if (!(pp.sigma2 > 0.0)) fail_schema(path + "/sigma2", "must be > 0");
  return pp;
}

inline FilterParams parse_filter(const json& j, const std::string& path,
                                 const ProcessParams& pp) {
  expect_object(j, path);
  reject_unknown(j, path, {"K"});
  const double K = get_number(j, path, "K");
  if (K < 0.0) fail_schema(path + "/K", "must be >= 0");
  const FilterParams fp = make_filter_params(K, pp);
  const double bound = gain_bound(pp.a);
  if (K > bound) {
    std::ostringstream msg;
    msg << "Assumption 1 violated at " << path << "/K: K = " << K
        << " exceeds (1 - a^2)/a^2 = " << bound;
    throw ConfigError(ConfigError::Code::assumption, msg.str());
  }
  if (!(std::abs(fp.a_c) < 1.0))
    throw ConfigError(ConfigError::Code::assumption,
                      "Assumption 1 violated at " + path +
                          "/K: closed-loop gain |a(1-K)| must be < 1");
  return fp;
}

inline std::vector<SourceProfile> parse_sources(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail_schema(path, "expected a non-empty array");
  std::vector<SourceProfile> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "/" + std::to_string(i);
    expect_object(j[i], p);
    reject_unknown(j[i], p, {"id", "sigma2_s", "arrival_rate"});
    SourceProfile s;
    s.source_id = static_cast<int>(get_int(j[i], p, "id", static_cast<std::int64_t>(i + 1)));
    s.sigma2_s = get_number(j[i], p, "sigma2_s");
    s.arrival_rate = get_number(j[i], p, "arrival_rate", 0.0);
    if (s.source_id < 1) fail_schema(p + "/id", "must be >= 1");
    if (s.sigma2_s < 0.0) fail_schema(p + "/sigma2_s", "must be >= 0");
    if (s.arrival_rate < 0.0 || s.arrival_rate > 1.0)
      fail_schema(p + "/arrival_rate", "must be in [0, 1]");
    out.push_back(s);
  }
  return out;
}

inline std::vector<ScriptedPacket> parse_initial_queue(const json& j,
                                                       const std::string& path,
                                                       Slot horizon) {
  if (!j.is_array()) fail_schema(path, "expected an array");
  std::vector<ScriptedPacket> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "/" + std::to_string(i);
    expect_object(j[i], p);
    reject_unknown(j[i], p, {"t_gen", "sigma2_s", "source_id"});
    ScriptedPacket sp;
    sp.t_gen = get_int(j[i], p, "t_gen", 1);
    sp.sigma2_s = get_number(j[i], p, "sigma2_s");
    sp.source_id = static_cast<int>(get_int(j[i], p, "source_id", 0));
    if (sp.t_gen < 1 || sp.t_gen > horizon)
      fail_schema(p + "/t_gen", "must be in [1, horizon]");
    if (sp.sigma2_s < 0.0) fail_schema(p + "/sigma2_s", "must be >= 0");
    out.push_back(sp);
  }
  return out;
}

inline ChannelParams parse_channel(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"p"});
  ChannelParams ch;
  ch.p = get_number(j, path, "p");
  if (!(ch.p > 0.0 && ch.p <= 1.0)) fail_schema(path + "/p", "must be in (0, 1]");
  return ch;
}

inline ProcessBlock parse_block(const json& j, const std::string& path, Slot horizon) {
  ProcessBlock b;
  if (!j.contains("process")) fail_schema(path + "/process", "missing required object");
  b.process = parse_process(j["process"], path + "/process");
  if (!j.contains("filter")) fail_schema(path + "/filter", "missing required object");
  b.filter = parse_filter(j["filter"], path + "/filter", b.process);
  if (!j.contains("sources")) fail_schema(path + "/sources", "missing required array");
  b.sources = parse_sources(j["sources"], path + "/sources");
  if (j.contains("initial_queue"))
    b.initial_queue = parse_initial_queue(j["initial_queue"], path + "/initial_queue", horizon);
  b.e0 = get_number(j, path, "e0", 0.0);
  if (!std::isfinite(b.e0)) fail_schema(path + "/e0", "must be finite");
  b.noise_history = static_cast<std::size_t>(get_int(j, path, "noise_history", 64));
  if (b.noise_history == 0) fail_schema(path + "/noise_history", "must be > 0");
  return b;
}

inline void check_simplex(const std::vector<double>& v, const std::string& path) {
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) {
      std::ostringstream msg;
      msg << "simplex violation at " << path << "/" << i << ": negative entry " << v[i];
      throw ConfigError(ConfigError::Code::simplex, msg.str());
    }
    sum += v[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "simplex violation at " << path << ": entries sum to " << sum << ", not 1";
    throw ConfigError(ConfigError::Code::simplex, msg.str());
  }
}

}  // namespace cfgdetail

inline ExperimentSpec parse_config_json(const json& root) {
  using namespace cfgdetail;
  expect_object(root, "/");
  reject_unknown(root, "",
                 {"experiment", "seed", "reps", "mode", "arrival_lag", "policy",
                  "policies", "episode", "multi", "spsa", "verify"});
  ExperimentSpec spec;

  const std::string kind = get_string(root, "", "experiment");
  if (kind == "single") spec.kind = ExperimentKind::single;
  else if (kind == "compare") spec.kind = ExperimentKind::compare;
  else if (kind == "multiproc") spec.kind = ExperimentKind::multiproc;
  else if (kind == "spsa") spec.kind = ExperimentKind::spsa;
  else if (kind == "verify") spec.kind = ExperimentKind::verify;
  else fail_schema("/experiment", "must be one of single|compare|multiproc|spsa|verify");

  const std::int64_t seed = get_int(root, "", "seed", 1);
  if (seed < 0) fail_schema("/seed", "must be >= 0");
  spec.seed = static_cast<std::uint64_t>(seed);
  const std::int64_t reps = get_int(root, "", "reps", 100);
  if (reps < 1) fail_schema("/reps", "must be >= 1");
  if (spec.kind == ExperimentKind::compare && reps < 2)
    fail_schema("/reps", "compare needs reps >= 2");
  spec.reps = static_cast<std::size_t>(reps);

  const std::string mode = get_string(root, "", "mode", "paper");
  if (mode == "paper") spec.mode = IndexMode::paper;
  else if (mode == "exact") spec.mode = IndexMode::exact;
  else fail_schema("/mode", "must be paper or exact");

  const std::int64_t lag = get_int(root, "", "arrival_lag", 0);
  if (lag != 0 && lag != 1) fail_schema("/arrival_lag", "must be 0 or 1");
  spec.arrival_lag = static_cast<int>(lag);

  auto parse_policy_name = [](const std::string& name, const std::string& path) {
    auto kind = parse_policy(name);
    if (!kind)
      fail_schema(path, "unknown policy '" + name +
                            "' (use index-voi|freshest-first|fifo|best-sensor|random)");
    return *kind;
  };
  if (root.contains("policies")) {
    if (!root["policies"].is_array() || root["policies"].empty())
      fail_schema("/policies", "expected a non-empty array");
    for (std::size_t i = 0; i < root["policies"].size(); ++i) {
      if (!root["policies"][i].is_string())
        fail_schema("/policies/" + std::to_string(i), "expected a string");
      spec.policies.push_back(parse_policy_name(
          root["policies"][i].get<std::string>(), "/policies/" + std::to_string(i)));
    }
  } else if (root.contains("policy")) {
    spec.policies.push_back(
        parse_policy_name(get_string(root, "", "policy"), "/policy"));
  } else if (spec.kind == ExperimentKind::compare) {
    spec.policies = {PolicyKind::index_voi, PolicyKind::freshest_first,
                     PolicyKind::oldest_first, PolicyKind::best_sensor,
                     PolicyKind::random_pick};
  } else {
    spec.policies = {PolicyKind::index_voi};
  }

  if (spec.kind == ExperimentKind::single || spec.kind == ExperimentKind::compare) {
    if (!root.contains("episode"))
      fail_schema("/episode", "required for single/compare experiments");
    const json& e = root["episode"];
    expect_object(e, "/episode");
    reject_unknown(e, "/episode",
                   {"horizon", "process", "filter", "sources", "channel", "e0",
                    "initial_queue", "noise_history"});
    EpisodeConfig cfg;
    cfg.horizon = get_int(e, "/episode", "horizon");
    if (cfg.horizon < 2) fail_schema("/episode/horizon", "must be >= 2");
    if (!e.contains("process")) fail_schema("/episode/process", "missing required object");
    if (!e.contains("channel")) fail_schema("/episode/channel", "missing required object");
    cfg.block = parse_block(e, "/episode", cfg.horizon);
    cfg.channel = parse_channel(e["channel"], "/episode/channel");
    cfg.seed = spec.seed;
    cfg.arrival_lag = spec.arrival_lag;
    cfg.mode = spec.mode;
    spec.episode = std::move(cfg);
  }

  if (spec.kind == ExperimentKind::multiproc || spec.kind == ExperimentKind::spsa) {
    if (!root.contains("multi"))
      fail_schema("/multi", "required for multiproc/spsa experiments");
    const json& m = root["multi"];
    expect_object(m, "/multi");
    reject_unknown(m, "/multi", {"horizon", "channel", "access", "processes"});
    MultiProcessConfig cfg;
    cfg.horizon = get_int(m, "/multi", "horizon");
    if (cfg.horizon < 2) fail_schema("/multi/horizon", "must be >= 2");
    if (!m.contains("channel")) fail_schema("/multi/channel", "missing required object");
    cfg.channel = parse_channel(m["channel"], "/multi/channel");
    if (!m.contains("processes") || !m["processes"].is_array() || m["processes"].empty())
      fail_schema("/multi/processes", "expected a non-empty array");
    for (std::size_t i = 0; i < m["processes"].size(); ++i) {
      const std::string p = "/multi/processes/" + std::to_string(i);
      expect_object(m["processes"][i], p);
      reject_unknown(m["processes"][i], p,
                     {"process", "filter", "sources", "e0", "initial_queue",
                      "noise_history"});
      cfg.processes.push_back(parse_block(m["processes"][i], p, cfg.horizon));
    }
    if (!m.contains("access")) fail_schema("/multi/access", "missing required array");
    if (!m["access"].is_array()) fail_schema("/multi/access", "expected an array");
    for (const auto& v : m["access"]) {
      if (!v.is_number()) fail_schema("/multi/access", "expected numbers");
      cfg.access.push_back(v.get<double>());
    }
    if (cfg.access.size() != cfg.processes.size())
      fail_schema("/multi/access", "length must equal the number of processes");
    check_simplex(cfg.access, "/multi/access");
    cfg.seed = spec.seed;
    cfg.arrival_lag = spec.arrival_lag;
    cfg.mode = spec.mode;
    spec.multi = std::move(cfg);
  }

  if (root.contains("spsa")) {
    const json& s = root["spsa"];
    expect_object(s, "/spsa");
    reject_unknown(s, "/spsa", {"iterations", "measure_reps", "gains"});
    spec.spsa.iterations =
        static_cast<std::size_t>(get_int(s, "/spsa", "iterations", 200));
    if (spec.spsa.iterations < 1) fail_schema("/spsa/iterations", "must be >= 1");
    spec.spsa.measure_reps =
        static_cast<std::size_t>(get_int(s, "/spsa", "measure_reps", 100));
    if (spec.spsa.measure_reps < 2) fail_schema("/spsa/measure_reps", "must be >= 2");
    if (s.contains("gains")) {
      const json& gj = s["gains"];
      expect_object(gj, "/spsa/gains");
      reject_unknown(gj, "/spsa/gains", {"a0", "A", "alpha", "c0", "gamma"});
      SpsaGains g;
      g.a0 = get_number(gj, "/spsa/gains", "a0");
      g.A = get_number(gj, "/spsa/gains", "A");
      g.alpha = get_number(gj, "/spsa/gains", "alpha", 0.602);
      g.c0 = get_number(gj, "/spsa/gains", "c0", 0.1);
      g.gamma = get_number(gj, "/spsa/gains", "gamma", 0.101);
      if (!(g.a0 > 0.0 && g.A > 0.0 && g.alpha > 0.0 && g.c0 > 0.0 && g.gamma > 0.0))
        fail_schema("/spsa/gains", "gains must be positive");
      spec.spsa.gains = g;
    }
  }

  if (root.contains("verify")) {
    const json& v = root["verify"];
    expect_object(v, "/verify");
    reject_unknown(v, "/verify",
                   {"instances", "pairs", "margins", "coupled_runs", "mc_samples",
                    "k_steps"});
    auto positive = [&](const char* key, std::size_t def) {
      const std::int64_t x = get_int(v, "/verify", key, static_cast<std::int64_t>(def));
      if (x < 1) fail_schema(std::string("/verify/") + key, "must be >= 1");
      return static_cast<std::size_t>(x);
    };
    spec.verify.instances = positive("instances", spec.verify.instances);
    spec.verify.pairs = positive("pairs", spec.verify.pairs);
    spec.verify.margins = positive("margins", spec.verify.margins);
    spec.verify.coupled_runs = positive("coupled_runs", spec.verify.coupled_runs);
    spec.verify.mc_samples = positive("mc_samples", spec.verify.mc_samples);
    if (spec.verify.mc_samples < 10'000)
      fail_schema("/verify/mc_samples", "must be >= 1e4");
    spec.verify.k_steps = positive("k_steps", spec.verify.k_steps);
  }

  return spec;
}

// Parses config text; syntax errors report line and column.
inline ExperimentSpec parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < err.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream msg;
    msg << "config syntax error at line " << line << ", column " << col << ": "
        << err.what();
    throw ConfigError(ConfigError::Code::schema, msg.str());
  }
  return parse_config_json(root);
}

inline json emit_config(const ExperimentSpec& spec) {
  json root;
  root["experiment"] = to_string(spec.kind);
  root["seed"] = spec.seed;
  root["reps"] = spec.reps;
  root["mode"] = spec.mode == IndexMode::paper ? "paper" : "exact";
  root["arrival_lag"] = spec.arrival_lag;
  json pols = json::array();
  for (PolicyKind k : spec.policies) pols.push_back(to_string(k));
  root["policies"] = pols;

  auto block_json = [](const ProcessBlock& b) {
    json j;
    j["process"] = {{"a", b.process.a}, {"sigma2", b.process.sigma2}};
    j["filter"] = {{"K", b.filter.K}};
    json sources = json::array();
    for (const auto& s : b.sources)
      sources.push_back({{"id", s.source_id},
                         {"sigma2_s", s.sigma2_s},
                         {"arrival_rate", s.arrival_rate}});
    j["sources"] = sources;
    json iq = json::array();
    for (const auto& sp : b.initial_queue)
      iq.push_back({{"t_gen", sp.t_gen},
                    {"sigma2_s", sp.sigma2_s},
                    {"source_id", sp.source_id}});
    j["initial_queue"] = iq;
    j["e0"] = b.e0;
    j["noise_history"] = b.noise_history;
    return j;
  };

  if (spec.episode) {
    json e = block_json(spec.episode->block);
    e["horizon"] = spec.episode->horizon;
    e["channel"] = {{"p", spec.episode->channel.p}};
    root["episode"] = e;
  }
  if (spec.multi) {
    json m;
    m["horizon"] = spec.multi->horizon;
    m["channel"] = {{"p", spec.multi->channel.p}};
    m["access"] = spec.multi->access;
    json procs = json::array();
    for (const auto& b : spec.multi->processes) procs.push_back(block_json(b));
    m["processes"] = procs;
    root["multi"] = m;
  }
  if (spec.kind == ExperimentKind::spsa) {
    json s;
    s["iterations"] = spec.spsa.iterations;
    s["measure_reps"] = spec.spsa.measure_reps;
    if (spec.spsa.gains) {
      s["gains"] = {{"a0", spec.spsa.gains->a0},
                    {"A", spec.spsa.gains->A},
                    {"alpha", spec.spsa.gains->alpha},
                    {"c0", spec.spsa.gains->c0},
                    {"gamma", spec.spsa.gains->gamma}};
    }
    root["spsa"] = s;
  }
  if (spec.kind == ExperimentKind::verify) {
    root["verify"] = {{"instances", spec.verify.instances},
                      {"pairs", spec.verify.pairs},
                      {"margins", spec.verify.margins},
                      {"coupled_runs", spec.verify.coupled_runs},
                      {"mc_samples", spec.verify.mc_samples},
                      {"k_steps", spec.verify.k_steps}};
  }
  return root;
}

}  // namespace voi
