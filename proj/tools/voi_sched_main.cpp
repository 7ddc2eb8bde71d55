// voi-sched: value-of-information packet scheduling experiments.
//
// Subcommands: run | compare | multiproc | spsa | verify, all driven by a
// JSON config. Results land in --out as CSV plus a metadata sidecar.
// Exit codes: 0 success, 2 config error, 3 verification failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voi/csv.hpp"
#include "voi/engine.hpp"
#include "voi/spsa.hpp"
#include "voi/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw voi::ConfigError(voi::ConfigError::Code::schema,
                                  "cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> reps;
  std::optional<std::string> mode;
  std::optional<int> arrival_lag;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file")->required();
  cmd->add_option("--out", opts.out_dir, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "override the root seed");
  cmd->add_option("--reps", opts.reps, "override the replication count");
  cmd->add_option("--mode", opts.mode, "index formula variant: paper|exact");
  cmd->add_option("--arrival-lag", opts.arrival_lag,
                  "0: packets are schedulable in their generation slot; 1: next slot");
}

voi::ExperimentSpec load_spec(const CommonOpts& opts, voi::ExperimentKind expected) {
  voi::ExperimentSpec spec = voi::parse_config(read_file(opts.config_path));
  if (spec.kind != expected)
    throw voi::ConfigError(voi::ConfigError::Code::schema,
                           std::string("config experiment is '") +
                               voi::to_string(spec.kind) + "' but the subcommand needs '" +
                               voi::to_string(expected) + "'");
  if (opts.seed) {
    if (*opts.seed < 0)
      throw voi::ConfigError(voi::ConfigError::Code::schema, "--seed must be >= 0");
    spec.seed = static_cast<std::uint64_t>(*opts.seed);
  }
  if (opts.reps) {
    if (*opts.reps < 1)
      throw voi::ConfigError(voi::ConfigError::Code::schema, "--reps must be >= 1");
    spec.reps = static_cast<std::size_t>(*opts.reps);
  }
  if (opts.mode) {
    if (*opts.mode == "paper") spec.mode = voi::IndexMode::paper;
    else if (*opts.mode == "exact") spec.mode = voi::IndexMode::exact;
    else
      throw voi::ConfigError(voi::ConfigError::Code::schema,
                             "--mode must be paper or exact");
  }
  if (opts.arrival_lag) {
    if (*opts.arrival_lag != 0 && *opts.arrival_lag != 1)
      throw voi::ConfigError(voi::ConfigError::Code::schema,
                             "--arrival-lag must be 0 or 1");
    spec.arrival_lag = *opts.arrival_lag;
  }
  // propagate overrides into the embedded configs
  if (spec.episode) {
    spec.episode->seed = spec.seed;
    spec.episode->mode = spec.mode;
    spec.episode->arrival_lag = spec.arrival_lag;
  }
  if (spec.multi) {
    spec.multi->seed = spec.seed;
    spec.multi->mode = spec.mode;
    spec.multi->arrival_lag = spec.arrival_lag;
  }
  fs::create_directories(opts.out_dir);
  return spec;
}

std::string out_path(const CommonOpts& opts, const char* name) {
  return (fs::path(opts.out_dir) / name).string();
}

// Runs `reps` episodes of one policy with shared replication seeds and
// appends trajectory rows in replication order.
voi::McSummary run_policy_block(const voi::EpisodeConfig& cfg, voi::PolicyKind kind,
                                std::size_t reps, const std::string& experiment,
                                std::vector<voi::TrajectoryRow>& rows) {
  std::vector<voi::EpisodeResult> results(reps);
  voi::parallel_for(reps, [&](std::size_t r) {
    results[r] = voi::run_episode(cfg, kind, r);
  });
  voi::McSummary summary;
  summary.n_reps = reps;
  summary.mean_e2.assign(static_cast<std::size_t>(cfg.horizon), 0.0);
  std::vector<double> costs(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    costs[r] = results[r].cumulative_cost;
    voi::append_episode_rows(rows, experiment, voi::to_string(kind), r, results[r]);
    for (std::size_t i = 0; i < results[r].e2.size(); ++i)
      summary.mean_e2[i] += results[r].e2[i];
  }
  double sum = 0.0;
  for (double c : costs) sum += c;
  summary.mean_cost = sum / static_cast<double>(reps);
  for (double& v : summary.mean_e2) v /= static_cast<double>(reps);
  double ss = 0.0;
  for (double c : costs) ss += (c - summary.mean_cost) * (c - summary.mean_cost);
  summary.std_error =
      reps > 1 ? std::sqrt(ss / (static_cast<double>(reps - 1) * static_cast<double>(reps)))
               : 0.0;
  return summary;
}

int cmd_run(const CommonOpts& opts, voi::ExperimentKind kind) {
  const voi::ExperimentSpec spec = load_spec(opts, kind);
  const std::string name = voi::to_string(kind);
  std::vector<voi::TrajectoryRow> rows;
  std::vector<voi::SummaryRow> summaries;
  const auto& cfg = *spec.episode;
  const auto policies = spec.kind == voi::ExperimentKind::single
                            ? std::vector<voi::PolicyKind>{spec.policies.front()}
                            : spec.policies;
  for (voi::PolicyKind p : policies) {
    const voi::McSummary s = run_policy_block(cfg, p, spec.reps, name, rows);
    summaries.push_back(
        voi::SummaryRow{name, voi::to_string(p), s.n_reps, s.mean_cost, s.std_error});
    std::cout << name << " " << voi::to_string(p) << ": mean cost " << s.mean_cost
              << " (se " << s.std_error << ", n=" << s.n_reps << ")\n";
  }
  voi::write_trajectories_csv(out_path(opts, "trajectories.csv"), rows);
  voi::write_summary_csv(out_path(opts, "summary.csv"), summaries);
  voi::write_metadata(out_path(opts, "metadata.json"), spec);
  return 0;
}

int cmd_multiproc(const CommonOpts& opts) {
  const voi::ExperimentSpec spec = load_spec(opts, voi::ExperimentKind::multiproc);
  const auto& cfg = *spec.multi;
  const voi::PolicyKind kind = spec.policies.front();
  std::vector<voi::MultiRunResult> results(spec.reps);
  voi::parallel_for(spec.reps, [&](std::size_t r) {
    results[r] = voi::run_multiprocess(cfg, kind, r);
  });
  std::vector<voi::TrajectoryRow> rows;
  std::vector<voi::SummaryRow> summaries;
  const std::size_t n = cfg.processes.size();
  std::vector<double> proc_sum(n, 0.0), proc_ss(n, 0.0);
  double total_sum = 0.0, total_ss = 0.0;
  for (std::size_t r = 0; r < spec.reps; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string label =
          std::string(voi::to_string(kind)) + "/p" + std::to_string(i);
      voi::append_episode_rows(rows, "multiproc", label, r, results[r].per_process[i]);
      proc_sum[i] += results[r].per_process[i].cumulative_cost;
    }
    total_sum += results[r].total_cost;
  }
  for (std::size_t r = 0; r < spec.reps; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d =
          results[r].per_process[i].cumulative_cost - proc_sum[i] / spec.reps;
      proc_ss[i] += d * d;
    }
    const double d = results[r].total_cost - total_sum / spec.reps;
    total_ss += d * d;
  }
  auto se = [&](double ss) {
    return spec.reps > 1 ? std::sqrt(ss / (static_cast<double>(spec.reps - 1) *
                                           static_cast<double>(spec.reps)))
                         : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i)
    summaries.push_back(voi::SummaryRow{
        "multiproc", std::string(voi::to_string(kind)) + "/p" + std::to_string(i),
        spec.reps, proc_sum[i] / spec.reps, se(proc_ss[i])});
  summaries.push_back(voi::SummaryRow{"multiproc",
                                      std::string(voi::to_string(kind)) + "/total",
                                      spec.reps, total_sum / spec.reps, se(total_ss)});
  std::cout << "multiproc total mean cost " << total_sum / spec.reps << " over "
            << spec.reps << " reps\n";
  voi::write_trajectories_csv(out_path(opts, "trajectories.csv"), rows);
  voi::write_summary_csv(out_path(opts, "summary.csv"), summaries);
  voi::write_metadata(out_path(opts, "metadata.json"), spec);
  return 0;
}

int cmd_spsa(const CommonOpts& opts) {
  const voi::ExperimentSpec spec = load_spec(opts, voi::ExperimentKind::spsa);
  voi::SpsaOptions sopt;
  sopt.iterations = spec.spsa.iterations;
  sopt.measure_reps = spec.spsa.measure_reps;
  sopt.gains = spec.spsa.gains;
  sopt.policy = spec.policies.front();
  const voi::SpsaResult res = voi::spsa_optimize(*spec.multi, sopt);

  std::vector<voi::SummaryRow> summaries;
  summaries.push_back(voi::SummaryRow{"spsa",
                                      std::string(voi::to_string(sopt.policy)) + "@initial",
                                      sopt.measure_reps, res.initial_cost, res.initial_se});
  summaries.push_back(voi::SummaryRow{"spsa",
                                      std::string(voi::to_string(sopt.policy)) + "@final",
                                      sopt.measure_reps, res.final_cost, res.final_se});
  voi::write_summary_csv(out_path(opts, "summary.csv"), summaries);

  auto trace = voi::open_out(out_path(opts, "spsa_trace.csv"));
  trace << "iteration,cost";
  for (std::size_t i = 0; i < res.access.size(); ++i) trace << ",p" << i;
  trace << '\n';
  for (std::size_t k = 0; k < res.cost_trace.size(); ++k) {
    trace << k << ',' << voi::format_g17(res.cost_trace[k]);
    for (double v : res.access_trace[k]) trace << ',' << voi::format_g17(v);
    trace << '\n';
  }
  voi::write_metadata(out_path(opts, "metadata.json"), spec);
  std::cout << "spsa: initial cost " << res.initial_cost << " -> final cost "
            << res.final_cost << "; access (";
  for (std::size_t i = 0; i < res.access.size(); ++i)
    std::cout << (i ? ", " : "") << res.access[i];
  std::cout << ")\n";
  return 0;
}

int cmd_verify(const CommonOpts& opts) {
  const voi::ExperimentSpec spec = load_spec(opts, voi::ExperimentKind::verify);
  const auto& v = spec.verify;
  std::vector<voi::VerificationRow> rows;
  bool all_ok = true;
  auto absorb = [&](const char* label, voi::BatteryOutcome outcome) {
    all_ok = all_ok && outcome.passed;
    std::cout << (outcome.passed ? "[PASS] " : "[FAIL] ") << label << " ("
              << outcome.seconds << " s)\n";
    for (auto& r : outcome.rows) rows.push_back(std::move(r));
  };
  absorb("small-instance optimality",
         voi::check_small_instance_optimality(v.instances, spec.seed));
  absorb("order invariance / delta scaling",
         voi::check_order_invariance(v.pairs, 10, spec.seed));
  absorb("stopping-time ordering", voi::check_stopping_times(v.coupled_runs, spec.seed));
  absorb("first-failure cost equality",
         voi::check_first_failure_equality(v.coupled_runs, spec.seed));
  absorb("interchange margin", voi::check_interchange_margins(v.margins, spec.seed));
  absorb("gain-margin grid", voi::check_lemma5_grid(v.k_steps));
  absorb("noise-variance adjudication",
         voi::check_mc_adjudication(v.mc_samples, spec.seed));
  voi::write_verification_csv(out_path(opts, "verification.csv"), rows);
  voi::write_metadata(out_path(opts, "metadata.json"), spec);
  std::cout << (all_ok ? "verification passed" : "verification FAILED") << "\n";
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-of-information packet scheduling toolkit"};
  app.require_subcommand(1);

  CommonOpts run_opts, compare_opts, multi_opts, spsa_opts, verify_opts;
  auto* run_cmd = app.add_subcommand("run", "single-policy episodes");
  add_common(run_cmd, run_opts);
  auto* compare_cmd = app.add_subcommand("compare", "policy comparison with paired seeds");
  add_common(compare_cmd, compare_opts);
  auto* multi_cmd = app.add_subcommand("multiproc", "shared-channel multi-process runs");
  add_common(multi_cmd, multi_opts);
  auto* spsa_cmd = app.add_subcommand("spsa", "tune the channel-access vector");
  add_common(spsa_cmd, spsa_opts);
  auto* verify_cmd = app.add_subcommand("verify", "oracle verification battery");
  add_common(verify_cmd, verify_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run_opts, voi::ExperimentKind::single);
    if (compare_cmd->parsed()) return cmd_run(compare_opts, voi::ExperimentKind::compare);
    if (multi_cmd->parsed()) return cmd_multiproc(multi_opts);
    if (spsa_cmd->parsed()) return cmd_spsa(spsa_opts);
    if (verify_cmd->parsed()) return cmd_verify(verify_opts);
  } catch (const voi::ConfigError& err) {
    std::cerr << "config error (" << static_cast<int>(err.code()) << "): " << err.what()
              << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
