#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "voi/index.hpp"
#include "voi/model.hpp"
#include "voi/policy.hpp"
#include "voi/rng.hpp"

// Discrete-time episode engine. One episode runs slots t = 1..T with the
// starting state (e(0), Q(0)) at t = 0; the slot-0 transition happens before
// the first decision, decisions happen at t = 1..T-1, and e^2(t) is recorded
// for t = 1..T. Per slot: arrivals join the queue, the policy picks a packet,
// the channel decides success (ACK known immediately), the filter applies the
// delivered packet or the empty branch, and the process evolves.
//
// Every stochastic draw comes from a named per-(process, replication) stream
// so coupled experiments can share all randomness except the decision rule.

namespace voi {

struct ChannelParams {
  double p = 1.0;  // per-attempt success probability, 0 < p <= 1
};

struct ScriptedPacket {
  Slot t_gen = 1;
  double sigma2_s = 0.0;
  int source_id = 0;  // 0 = scripted, not tied to a Bernoulli source
};

struct ProcessBlock {
  ProcessParams process;
  FilterParams filter;
  std::vector<SourceProfile> sources;
  std::vector<ScriptedPacket> initial_queue;  // deterministic arrivals at t_gen
  double e0 = 0.0;                            // error at t = 0
  std::size_t noise_history = 64;
};

struct EpisodeConfig {
  Slot horizon = 2;  // T
  ProcessBlock block;
  ChannelParams channel;
  std::uint64_t seed = 1;
  int arrival_lag = 0;  // 0: packets generated at t are schedulable at t
  IndexMode mode = IndexMode::paper;
};

struct MultiProcessConfig {
  Slot horizon = 2;
  ChannelParams channel;
  std::vector<ProcessBlock> processes;
  std::vector<double> access;  // point on the N-simplex
  std::uint64_t seed = 1;
  int arrival_lag = 0;
  IndexMode mode = IndexMode::paper;
};

struct Attempt {
  Slot slot = 0;
  std::uint64_t packet_id = 0;
  bool success = false;
};

struct InnovationRecord {
  Slot slot = 0;
  double coeff = 0.0;
  std::optional<double> noise;
  double e_before = 0.0;
  double e_after = 0.0;
};

struct EpisodeResult {
  std::vector<double> e2;  // e^2(t), index i holds slot i+1, size T
  double cumulative_cost = 0.0;
  std::vector<Attempt> attempts;  // every transmission attempt with its outcome
  std::vector<std::optional<std::uint64_t>> decisions;  // slots 1..T-1
  std::uint64_t deliveries = 0;         // successful attempts
  std::uint64_t filter_deliveries = 0;  // non-empty filter updates
  std::uint64_t queue_removals = 0;     // packets removed from the queue
  std::vector<InnovationRecord> innovations;  // when requested
  // draw traces, recorded when requested (coupling diagnostics)
  std::vector<double> w_trace;
  std::vector<int> channel_trace;
  std::vector<int> arrival_trace;
  std::vector<double> obs_trace;
};

struct RunFlags {
  bool record_innovations = false;
  bool record_trace = false;
};

struct RunHooks {
  std::optional<std::uint64_t> slot1_packet;  // overrides the slot-1 decision
  std::optional<bool> force_first_channel;    // overrides the slot-1 channel outcome
};

inline void validate_process_block(const ProcessBlock& b, Slot horizon) {
  if (!process_params_valid(b.process))
    throw std::invalid_argument("invalid process params (need |a| < 1, sigma2 >= 0)");
  if (!filter_params_valid(b.filter, b.process))
    throw std::invalid_argument("invalid filter params (need |a_c| < 1, 0 <= K <= (1-a^2)/a^2)");
  if (b.sources.empty()) throw std::invalid_argument("need at least one source");
  for (const auto& s : b.sources)
    if (!source_profile_valid(s)) throw std::invalid_argument("invalid source profile");
  for (const auto& sp : b.initial_queue) {
    if (sp.t_gen < 1 || sp.t_gen > horizon)
      throw std::invalid_argument("scripted packet t_gen out of [1, horizon]");
    if (sp.sigma2_s < 0.0) throw std::invalid_argument("scripted packet sigma2_s < 0");
  }
  if (!std::isfinite(b.e0)) throw std::invalid_argument("e0 not finite");
  if (b.noise_history == 0) throw std::invalid_argument("noise_history must be > 0");
}

inline void validate_episode_config(const EpisodeConfig& cfg) {
  if (cfg.horizon < 2) throw std::invalid_argument("horizon must be >= 2");
  if (!(cfg.channel.p > 0.0 && cfg.channel.p <= 1.0))
    throw std::invalid_argument("channel reliability must be in (0, 1]");
  if (cfg.arrival_lag != 0 && cfg.arrival_lag != 1)
    throw std::invalid_argument("arrival_lag must be 0 or 1");
  validate_process_block(cfg.block, cfg.horizon);
}

inline void validate_multi_config(const MultiProcessConfig& cfg) {
  if (cfg.horizon < 2) throw std::invalid_argument("horizon must be >= 2");
  if (!(cfg.channel.p > 0.0 && cfg.channel.p <= 1.0))
    throw std::invalid_argument("channel reliability must be in (0, 1]");
  if (cfg.processes.empty()) throw std::invalid_argument("need at least one process");
  for (const auto& b : cfg.processes) validate_process_block(b, cfg.horizon);
  if (cfg.access.size() != cfg.processes.size())
    throw std::invalid_argument("access vector length must equal process count");
  double sum = 0.0;
  for (double v : cfg.access) {
    if (!(v >= 0.0)) throw std::invalid_argument("access vector has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("access vector does not sum to 1");
}

// Single-process state machine; the drivers below sequence one or many of
// these through the shared slot loop. Draw order within a slot is fixed:
// scripted observations, then per-source (arrival Bernoulli, observation),
// then policy randomness, then channel, then process noise.
class EpisodeRunner {
 public:
  EpisodeRunner(const ProcessBlock& block, Slot horizon, int arrival_lag,
                IndexMode mode, std::uint64_t seed, std::uint64_t process_index,
                std::uint64_t replication, RunFlags flags = {})
      : block_(block),
        horizon_(horizon),
        arrival_lag_(arrival_lag),
        flags_(flags),
        queue_(block.process, block.filter, mode),
        history_(block.noise_history),
        arrivals_rng_(derive_seed(seed, Stream::arrivals, process_index, replication)),
        obs_rng_(derive_seed(seed, Stream::observation, process_index, replication)),
        process_rng_(derive_seed(seed, Stream::process_noise, process_index, replication)),
        channel_rng_(derive_seed(seed, Stream::channel, process_index, replication)),
        policy_rng_(derive_seed(seed, Stream::policy, process_index, replication)) {
    est_ = EstimatorState{0.0, -block.e0, block.e0, 0};
    scripted_order_.resize(block.initial_queue.size());
    for (std::size_t i = 0; i < scripted_order_.size(); ++i) scripted_order_[i] = i;
    std::stable_sort(scripted_order_.begin(), scripted_order_.end(),
                     [&](std::size_t a, std::size_t b) {
                       return block.initial_queue[a].t_gen < block.initial_queue[b].t_gen;
                     });
    next_id_ = block.initial_queue.size() + 1;
    result_.e2.reserve(static_cast<std::size_t>(horizon));
    result_.decisions.reserve(static_cast<std::size_t>(horizon - 1));
  }

  // Scripted packets present at slot 1, ascending by ordering key. Packet ids
  // are positions in the initial_queue list plus one.
  static std::vector<std::uint64_t> initial_ranks(const ProcessBlock& block,
                                                  IndexMode mode) {
    std::vector<Packet> pkts;
    for (std::size_t i = 0; i < block.initial_queue.size(); ++i) {
      const auto& sp = block.initial_queue[i];
      if (sp.t_gen != 1) continue;
      Packet p;
      p.packet_id = i + 1;
      p.source_id = sp.source_id;
      p.t_gen = sp.t_gen;
      p.sigma2_s = sp.sigma2_s;
      pkts.push_back(p);
    }
    std::sort(pkts.begin(), pkts.end(), [&](const Packet& a, const Packet& b) {
      return key_less(order_key(a, block.process, block.filter, mode),
                      order_key(b, block.process, block.filter, mode));
    });
    std::vector<std::uint64_t> ids(pkts.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = pkts[i].packet_id;
    return ids;
  }

  // Slot-0 transition: no decision is possible before t = 1.
  void begin() {
    const double w = draw_process_noise();
    history_.push(0, w);
    est_ = step_estimator(est_, std::nullopt, block_.filter, block_.process, w);
  }

  void record_error() { result_.e2.push_back(est_.e * est_.e); }

  void arrival_phase(Slot t) {
    for (auto& pkt : staged_) queue_.enqueue(pkt);
    staged_.clear();
    // scripted packets join exactly at their generation slot
    while (scripted_pos_ < scripted_order_.size() &&
           block_.initial_queue[scripted_order_[scripted_pos_]].t_gen == t) {
      const std::size_t idx = scripted_order_[scripted_pos_];
      const auto& sp = block_.initial_queue[idx];
      const double noise = obs_rng_.gaussian();
      if (flags_.record_trace) result_.obs_trace.push_back(noise);
      SourceProfile src{sp.source_id, sp.sigma2_s, 0.0};
      queue_.enqueue(generate_packet(src, est_.x, t, noise, idx + 1));
      ++scripted_pos_;
    }
    for (const auto& src : block_.sources) {
      const bool arrived = arrivals_rng_.bernoulli(src.arrival_rate);
      if (flags_.record_trace) result_.arrival_trace.push_back(arrived ? 1 : 0);
      if (!arrived) continue;
      const double noise = obs_rng_.gaussian();
      if (flags_.record_trace) result_.obs_trace.push_back(noise);
      Packet pkt = generate_packet(src, est_.x, t, noise, next_id_++);
      if (arrival_lag_ == 1)
        staged_.push_back(pkt);
      else
        queue_.enqueue(pkt);
    }
  }

  ScheduleDecision policy_decision(PolicyKind kind, Slot t) {
    return decide(kind, queue_, t, block_.process, block_.filter, policy_rng_);
  }

  bool draw_channel(double p) {
    const bool ok = channel_rng_.bernoulli(p);
    if (flags_.record_trace) result_.channel_trace.push_back(ok ? 1 : 0);
    return ok;
  }

  std::optional<Packet> remove(std::uint64_t packet_id) {
    const Packet* found = queue_.find(packet_id);
    if (!found) return std::nullopt;
    Packet out = *found;
    queue_.erase(packet_id);
    ++result_.queue_removals;
    return out;
  }

  // Applies the delivered packet (or the empty branch), then evolves the
  // process by one slot.
  void advance(Slot t, const std::optional<Packet>& delivered) {
    const double w = draw_process_noise();
    history_.push(t, w);
    if (delivered) ++result_.filter_deliveries;
    const double e_before = est_.e;
    est_ = step_estimator(est_, delivered, block_.filter, block_.process, w);
    if (flags_.record_innovations) {
      Innovation inn =
          innovation_step(delivered, t, block_.filter, block_.process, history_);
      result_.innovations.push_back(
          InnovationRecord{t, inn.coeff, inn.noise, e_before, est_.e});
    }
  }

  void log_decision(const std::optional<std::uint64_t>& id) {
    result_.decisions.push_back(id);
  }

  void log_attempt(Slot t, std::uint64_t id, bool success) {
    result_.attempts.push_back(Attempt{t, id, success});
    if (success) ++result_.deliveries;
  }

  const OrderedQueue& queue() const { return queue_; }
  const EstimatorState& state() const { return est_; }

  EpisodeResult finish() {
    double sum = 0.0;
    for (double v : result_.e2) sum += v;
    result_.cumulative_cost = sum;
    return std::move(result_);
  }

 private:
  double draw_process_noise() {
    const double w = process_rng_.gaussian() * std::sqrt(block_.process.sigma2);
    if (flags_.record_trace) result_.w_trace.push_back(w);
    return w;
  }

  ProcessBlock block_;
  Slot horizon_;
  int arrival_lag_;
  RunFlags flags_;
  OrderedQueue queue_;
  NoiseHistory history_;
  RandomStream arrivals_rng_, obs_rng_, process_rng_, channel_rng_, policy_rng_;
  EstimatorState est_;
  std::vector<std::size_t> scripted_order_;
  std::size_t scripted_pos_ = 0;
  std::vector<Packet> staged_;
  std::uint64_t next_id_ = 1;
  EpisodeResult result_;
};

inline EpisodeResult run_episode_hooked(const EpisodeConfig& cfg, PolicyKind kind,
                                        std::uint64_t replication, RunHooks hooks,
                                        RunFlags flags = {}) {
  validate_episode_config(cfg);
  EpisodeRunner runner(cfg.block, cfg.horizon, cfg.arrival_lag, cfg.mode, cfg.seed,
                       /*process_index=*/0, replication, flags);
  runner.begin();
  for (Slot t = 1; t <= cfg.horizon; ++t) {
    runner.record_error();
    if (t == cfg.horizon) break;
    runner.arrival_phase(t);
    ScheduleDecision d;
    if (t == 1 && hooks.slot1_packet)
      d.packet_id = hooks.slot1_packet;
    else
      d = runner.policy_decision(kind, t);
    const bool drawn = runner.draw_channel(cfg.channel.p);
    const bool success =
        (t == 1 && hooks.force_first_channel) ? *hooks.force_first_channel : drawn;
    std::optional<Packet> delivered;
    if (d.packet_id) {
      runner.log_attempt(t, *d.packet_id, success);
      if (success) {
        delivered = runner.remove(*d.packet_id);
        if (!delivered)
          throw std::logic_error("decision referenced a packet not in the queue");
      }
    }
    runner.log_decision(d.packet_id);
    runner.advance(t, delivered);
  }
  return runner.finish();
}

inline EpisodeResult run_episode(const EpisodeConfig& cfg, PolicyKind kind,
                                 std::uint64_t replication = 0, RunFlags flags = {}) {
  return run_episode_hooked(cfg, kind, replication, RunHooks{}, flags);
}

// Runs fn(i) for i in [0, n) on worker threads; results landing is the
// caller's business (index-addressed buffers keep it deterministic).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         std::size_t n_threads = 0) {
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (std::size_t w = 0; w < n_threads; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : workers) th.join();
}

struct McSummary {
  double mean_cost = 0.0;
  double std_error = 0.0;
  std::vector<double> mean_e2;  // per-slot mean error curve
  std::size_t n_reps = 0;
};

// Replication r uses streams derived from (seed, stream, r); the reduction
// runs in replication order regardless of thread scheduling.
inline McSummary run_monte_carlo(const EpisodeConfig& cfg, PolicyKind kind,
                                 std::size_t n_reps, std::size_t n_threads = 0) {
  if (n_reps < 2) throw std::invalid_argument("run_monte_carlo needs n_reps >= 2");
  validate_episode_config(cfg);
  std::vector<double> costs(n_reps);
  std::vector<std::vector<double>> curves(n_reps);
  parallel_for(
      n_reps,
      [&](std::size_t r) {
        EpisodeResult res = run_episode(cfg, kind, r);
        costs[r] = res.cumulative_cost;
        curves[r] = std::move(res.e2);
      },
      n_threads);
  McSummary s;
  s.n_reps = n_reps;
  s.mean_e2.assign(static_cast<std::size_t>(cfg.horizon), 0.0);
  double sum = 0.0;
  for (std::size_t r = 0; r < n_reps; ++r) {
    sum += costs[r];
    for (std::size_t i = 0; i < curves[r].size(); ++i) s.mean_e2[i] += curves[r][i];
  }
  s.mean_cost = sum / static_cast<double>(n_reps);
  for (double& v : s.mean_e2) v /= static_cast<double>(n_reps);
  double ss = 0.0;
  for (std::size_t r = 0; r < n_reps; ++r) {
    const double d = costs[r] - s.mean_cost;
    ss += d * d;
  }
  s.std_error = std::sqrt(ss / (static_cast<double>(n_reps - 1) * static_cast<double>(n_reps)));
  return s;
}

enum class ForceFirst { none, success, failure };

struct CoupledRunResult {
  std::optional<Slot> t1;     // delivery slot of psi2 under the index policy
  std::optional<Slot> t2;     // delivery slot of psi1 under the swapped policy
  double cost_index = 0.0;
  double cost_swapped = 0.0;
  bool first_success = false;
  std::uint64_t psi1_id = 0, psi2_id = 0;
};

// Runs the index policy and the one-decision deviation (serve psi2 at t = 1,
// index policy afterwards) on common random numbers. swap_ranks picks
// (psi1, psi2) by position in the key-ascending order of the slot-1 queue.
inline CoupledRunResult coupled_run(const EpisodeConfig& cfg,
                                    std::pair<std::size_t, std::size_t> swap_ranks,
                                    ForceFirst force = ForceFirst::none,
                                    std::uint64_t replication = 0) {
  validate_episode_config(cfg);
  const auto ranks = EpisodeRunner::initial_ranks(cfg.block, cfg.mode);
  if (ranks.size() < 2) throw std::invalid_argument("coupled_run needs >= 2 initial packets");
  if (swap_ranks.first >= ranks.size() || swap_ranks.second >= ranks.size())
    throw std::invalid_argument("swap rank out of range");
  CoupledRunResult out;
  out.psi1_id = ranks[swap_ranks.first];
  out.psi2_id = ranks[swap_ranks.second];
  RunHooks hooks;
  if (force == ForceFirst::success) hooks.force_first_channel = true;
  if (force == ForceFirst::failure) hooks.force_first_channel = false;
  EpisodeResult a = run_episode_hooked(cfg, PolicyKind::index_voi, replication, hooks);
  RunHooks swapped = hooks;
  swapped.slot1_packet = out.psi2_id;
  EpisodeResult b =
      run_episode_hooked(cfg, PolicyKind::index_voi, replication, swapped);
  out.cost_index = a.cumulative_cost;
  out.cost_swapped = b.cumulative_cost;
  for (const auto& at : a.attempts)
    if (at.success && at.packet_id == out.psi2_id) {
      out.t1 = at.slot;
      break;
    }
  for (const auto& at : b.attempts)
    if (at.success && at.packet_id == out.psi1_id) {
      out.t2 = at.slot;
      break;
    }
  if (!a.attempts.empty() && a.attempts.front().slot == 1)
    out.first_success = a.attempts.front().success;
  return out;
}

struct MultiRunResult {
  std::vector<EpisodeResult> per_process;
  double total_cost = 0.0;
};

// Each slot draws the served process u1(t) from the access vector, i.i.d. and
// independent of the queues; the selected process runs its own policy
// instance while the others take the empty filter branch.
inline MultiRunResult run_multiprocess(const MultiProcessConfig& cfg, PolicyKind kind,
                                       std::uint64_t replication = 0,
                                       RunFlags flags = {}) {
  validate_multi_config(cfg);
  const std::size_t n = cfg.processes.size();
  std::vector<EpisodeRunner> runners;
  runners.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    runners.emplace_back(cfg.processes[i], cfg.horizon, cfg.arrival_lag, cfg.mode,
                         cfg.seed, i, replication, flags);
  RandomStream access_rng(derive_seed(cfg.seed, Stream::access, 0, replication));
  for (auto& r : runners) r.begin();
  for (Slot t = 1; t <= cfg.horizon; ++t) {
    for (auto& r : runners) r.record_error();
    if (t == cfg.horizon) break;
    for (auto& r : runners) r.arrival_phase(t);
    const double u = access_rng.uniform01();
    std::size_t selected = n - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += cfg.access[i];
      if (u < acc) {
        selected = i;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<Packet> delivered;
      if (i == selected) {
        ScheduleDecision d = runners[i].policy_decision(kind, t);
        const bool success = runners[i].draw_channel(cfg.channel.p);
        if (d.packet_id) {
          runners[i].log_attempt(t, *d.packet_id, success);
          if (success) delivered = runners[i].remove(*d.packet_id);
        }
        runners[i].log_decision(d.packet_id);
      } else {
        runners[i].log_decision(std::nullopt);
      }
      runners[i].advance(t, delivered);
    }
  }
  MultiRunResult out;
  out.per_process.reserve(n);
  for (auto& r : runners) {
    out.per_process.push_back(r.finish());
    out.total_cost += out.per_process.back().cumulative_cost;
  }
  return out;
}

}  // namespace voi
