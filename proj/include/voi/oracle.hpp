#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "voi/index.hpp"
#include "voi/model.hpp"
#include "voi/rng.hpp"

// Exhaustive and closed-form oracles over small scheduling instances. These
// work in the uncorrelated cost model: attempting packet psi at slot t gives
//   E e^2(t+1) = p (a_c^2 E e^2(t) + W2_psi(t+1)) + (1-p)(a^2 E e^2(t) + sigma2)
// with the no-attempt branch a^2 E e^2(t) + sigma2, starting from
// E e^2(1) = e0^2 and summing E e^2(t) over t = 1..T. Policies are
// non-idling: an attempt happens whenever an undelivered packet has arrived,
// and a failed packet stays available for retransmission.

namespace voi {

struct OraclePacket {
  Slot t_gen = 1;
  double sigma2_s = 0.0;
};

struct SmallInstance {
  Slot horizon = 2;  // T <= 6
  std::vector<OraclePacket> packets;
  ProcessParams process;
  FilterParams filter;
  double p = 1.0;
  double e0_sq = 0.0;
  IndexMode mode = IndexMode::paper;
};

inline std::uint64_t factorial(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

inline void validate_instance(const SmallInstance& inst) {
  if (inst.horizon < 2 || inst.horizon > 6)
    throw std::invalid_argument("instance horizon must be in [2, 6]");
  if (inst.packets.size() > 4)
    throw std::invalid_argument("instance limited to 4 packets");
  if (!process_params_valid(inst.process) ||
      !filter_params_valid(inst.filter, inst.process))
    throw std::invalid_argument("instance violates the stability assumption");
  if (!(inst.p > 0.0 && inst.p <= 1.0))
    throw std::invalid_argument("instance channel reliability must be in (0, 1]");
  if (inst.e0_sq < 0.0) throw std::invalid_argument("instance e0^2 must be >= 0");
  for (const auto& pkt : inst.packets) {
    if (pkt.t_gen < 1 || pkt.t_gen > inst.horizon)
      throw std::invalid_argument("packet t_gen out of [1, horizon]");
    if (pkt.sigma2_s < 0.0) throw std::invalid_argument("packet sigma2_s < 0");
  }
  const std::uint64_t states =
      factorial(inst.packets.size()) * (std::uint64_t{1} << (inst.horizon - 1));
  if (states >= 10'000'000ull) throw std::invalid_argument("instance too large");
}

// Index charged when a packet attempted at slot t is delivered: its combined
// noise variance one slot later.
inline double delivery_w2(const SmallInstance& inst, std::size_t pkt, Slot attempt_slot) {
  const Slot age_next = attempt_slot + 1 - inst.packets[pkt].t_gen;
  return packet_index_for(inst.packets[pkt].sigma2_s, age_next, inst.process,
                          inst.filter, inst.mode)
      .w2;
}

inline Packet as_packet(const SmallInstance& inst, std::size_t i) {
  Packet p;
  p.packet_id = i + 1;
  p.t_gen = inst.packets[i].t_gen;
  p.sigma2_s = inst.packets[i].sigma2_s;
  return p;
}

// Key-ascending ranks of the instance packets.
inline std::vector<std::size_t> key_order(const SmallInstance& inst) {
  std::vector<std::size_t> order(inst.packets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return key_less(order_key(as_packet(inst, a), inst.process, inst.filter, inst.mode),
                    order_key(as_packet(inst, b), inst.process, inst.filter, inst.mode));
  });
  return order;
}

// Running products alpha(s, t) = prod_{m=s..t} a^2(m) over a realized
// delivery pattern; empty ranges give 1.
struct AlphaSeq {
  std::vector<double> a2_by_slot;  // index 0 holds slot 1, size T-1

  double alpha(Slot s, Slot t) const {
    double prod = 1.0;
    for (Slot m = s; m <= t; ++m) prod *= a2_by_slot[static_cast<std::size_t>(m - 1)];
    return prod;
  }
};

// Cost of a fully specified attempt schedule under a realized success
// pattern. attempt_by_slot[t-1] names the packet attempted at slot t (or
// nothing); pattern[t-1] is the channel outcome at slot t.
inline double schedule_cost(const SmallInstance& inst,
                            const std::vector<std::optional<std::size_t>>& attempt_by_slot,
                            const std::vector<bool>& pattern) {
  const double a2 = inst.process.a * inst.process.a;
  const double ac2 = inst.filter.a_c * inst.filter.a_c;
  double x = inst.e0_sq;
  double cost = x;
  for (Slot t = 1; t < inst.horizon; ++t) {
    const auto& att = attempt_by_slot[static_cast<std::size_t>(t - 1)];
    if (att && pattern[static_cast<std::size_t>(t - 1)])
      x = ac2 * x + delivery_w2(inst, *att, t);
    else
      x = a2 * x + inst.process.sigma2;
    cost += x;
  }
  return cost;
}

namespace detail {

// Translates a serve-in-this-order rule into per-slot attempts under a given
// channel pattern: at each slot, attempt the first packet in `order` that is
// undelivered and has arrived; idle if there is none.
inline std::vector<std::optional<std::size_t>> order_schedule(
    const SmallInstance& inst, std::span<const std::size_t> order,
    const std::vector<bool>& pattern) {
  std::vector<bool> delivered(inst.packets.size(), false);
  std::vector<std::optional<std::size_t>> schedule(
      static_cast<std::size_t>(inst.horizon - 1));
  for (Slot t = 1; t < inst.horizon; ++t) {
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t pkt = order[pos];
      if (delivered[pkt] || inst.packets[pkt].t_gen > t) continue;
      schedule[static_cast<std::size_t>(t - 1)] = pkt;
      if (pattern[static_cast<std::size_t>(t - 1)]) delivered[pkt] = true;
      break;
    }
  }
  return schedule;
}

}  // namespace detail

// Expected cumulative cost of serving packets in the given order (prefixes
// allowed; slots with nothing available idle), averaging exactly over all
// 2^(T-1) channel-outcome sequences.
inline double expected_cost_fixed_order(const SmallInstance& inst,
                                        std::span<const std::size_t> order) {
  validate_instance(inst);
  const Slot slots = inst.horizon - 1;
  const std::uint64_t n_patterns = std::uint64_t{1} << slots;
  double total = 0.0;
  for (std::uint64_t bits = 0; bits < n_patterns; ++bits) {
    std::vector<bool> pattern(static_cast<std::size_t>(slots));
    double weight = 1.0;
    for (Slot s = 0; s < slots; ++s) {
      const bool ok = (bits >> s) & 1;
      pattern[static_cast<std::size_t>(s)] = ok;
      weight *= ok ? inst.p : 1.0 - inst.p;
    }
    if (weight == 0.0) continue;
    total += weight * schedule_cost(inst, detail::order_schedule(inst, order, pattern),
                                    pattern);
  }
  return total;
}

namespace detail {

// Expectimax over channel-outcome-adapted, non-idling strategies. Actions at
// each slot are the arrived undelivered packets; idle only when none exists.
// Returns expected remaining cost given E e^2(t) = x. When `policy_order` is
// non-null the action is forced to the first available packet in that order
// (used to evaluate the index policy inside the same cost model).
inline double adapted_cost(const SmallInstance& inst, Slot t, double x,
                           unsigned delivered_mask,
                           const std::vector<std::size_t>* policy_order,
                           std::vector<std::size_t>* first_path) {
  double cost = x;
  if (t == inst.horizon) return cost;
  const double a2 = inst.process.a * inst.process.a;
  const double ac2 = inst.filter.a_c * inst.filter.a_c;
  const double idle_x = a2 * x + inst.process.sigma2;

  std::vector<std::size_t> actions;
  if (policy_order) {
    for (std::size_t pkt : *policy_order)
      if (!(delivered_mask & (1u << pkt)) && inst.packets[pkt].t_gen <= t) {
        actions.push_back(pkt);
        break;  // forced single action
      }
  } else {
    for (std::size_t pkt = 0; pkt < inst.packets.size(); ++pkt)
      if (!(delivered_mask & (1u << pkt)) && inst.packets[pkt].t_gen <= t)
        actions.push_back(pkt);
  }

  if (actions.empty())
    return cost + adapted_cost(inst, t + 1, idle_x, delivered_mask, policy_order,
                               nullptr);

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_action = actions.front();
  for (std::size_t pkt : actions) {
    const double succ_x = ac2 * x + delivery_w2(inst, pkt, t);
    double value = inst.p * adapted_cost(inst, t + 1, succ_x,
                                         delivered_mask | (1u << pkt), policy_order,
                                         nullptr);
    if (inst.p < 1.0)
      value += (1.0 - inst.p) *
               adapted_cost(inst, t + 1, idle_x, delivered_mask, policy_order, nullptr);
    if (value < best) {
      best = value;
      best_action = pkt;
    }
  }
  if (first_path) {
    first_path->push_back(best_action);
    // descend the all-success branch to report the greedy attempt order
    const double succ_x = ac2 * x + delivery_w2(inst, best_action, t);
    adapted_cost(inst, t + 1, succ_x, delivered_mask | (1u << best_action),
                 policy_order, first_path);
    return cost + best;
  }
  return cost + best;
}

}  // namespace detail

struct BruteForceResult {
  std::vector<std::size_t> best_order;  // attempts along the all-success path
  double best_cost = 0.0;
};

// Minimum expected cost over all channel-outcome-adapted attempt orders.
inline BruteForceResult brute_force_optimal(const SmallInstance& inst) {
  validate_instance(inst);
  BruteForceResult out;
  out.best_cost =
      detail::adapted_cost(inst, 1, inst.e0_sq, 0u, nullptr, &out.best_order);
  return out;
}

// Index-policy cost inside the same cost model: serve the least ordering key
// among arrived undelivered packets, retrying on failure.
inline double index_policy_expected_cost(const SmallInstance& inst) {
  validate_instance(inst);
  const auto order = key_order(inst);
  return detail::adapted_cost(inst, 1, inst.e0_sq, 0u, &order, nullptr);
}

inline std::vector<std::size_t> index_policy_order(const SmallInstance& inst) {
  validate_instance(inst);
  const auto order = key_order(inst);
  std::vector<std::size_t> path;
  detail::adapted_cost(inst, 1, inst.e0_sq, 0u, &order, &path);
  return path;
}

struct InterchangeDetail {
  double margin = 0.0;        // cost(swap-mirrored index) - cost(deviation)
  std::optional<Slot> t2;     // delivery slot of psi1 under the deviation
  double delta_at_2 = 0.0;    // index difference at slot 2
  std::vector<std::optional<std::size_t>> schedule_dev;   // the deviation's attempts
  std::vector<std::optional<std::size_t>> schedule_mirror;
};

// Bracketed cost difference of the interchange argument on one realized
// success pattern. The deviation serves psi2 at t = 1 and the least key
// afterwards; its mirror swaps psi1 and psi2 slot by slot. Requires
// psi1 <= psi2 in key order, both generated at t = 1, and a slot-1 success.
inline InterchangeDetail interchange_margin_detail(const SmallInstance& inst,
                                                   std::size_t psi1, std::size_t psi2,
                                                   const std::vector<bool>& pattern) {
  validate_instance(inst);
  if (psi1 >= inst.packets.size() || psi2 >= inst.packets.size())
    throw std::invalid_argument("packet index out of range");
  if (pattern.size() != static_cast<std::size_t>(inst.horizon - 1))
    throw std::invalid_argument("pattern length must be horizon - 1");
  if (inst.packets[psi1].t_gen != 1 || inst.packets[psi2].t_gen != 1)
    throw std::invalid_argument("swapped packets must be in the initial queue");
  if (!pattern[0])
    throw std::invalid_argument("the analysis conditions on a slot-1 success");
  const Packet p1 = as_packet(inst, psi1);
  const Packet p2 = as_packet(inst, psi2);
  if (key_less(order_key(p2, inst.process, inst.filter, inst.mode),
               order_key(p1, inst.process, inst.filter, inst.mode)))
    throw std::invalid_argument("psi1 must not exceed psi2 in key order");

  InterchangeDetail out;
  out.delta_at_2 = delta(p1, p2, 2, inst.process, inst.filter, inst.mode);

  // deviation schedule: psi2 first, least-key-first afterwards
  const auto ranks = key_order(inst);
  std::vector<bool> delivered(inst.packets.size(), false);
  out.schedule_dev.resize(static_cast<std::size_t>(inst.horizon - 1));
  AlphaSeq alpha;
  alpha.a2_by_slot.assign(static_cast<std::size_t>(inst.horizon - 1),
                          inst.process.a * inst.process.a);
  const double ac2 = inst.filter.a_c * inst.filter.a_c;
  for (Slot t = 1; t < inst.horizon; ++t) {
    std::optional<std::size_t> attempt;
    if (t == 1 && !delivered[psi2]) {
      attempt = psi2;
    } else {
      for (std::size_t pkt : ranks)
        if (!delivered[pkt] && inst.packets[pkt].t_gen <= t) {
          attempt = pkt;
          break;
        }
    }
    out.schedule_dev[static_cast<std::size_t>(t - 1)] = attempt;
    if (attempt && pattern[static_cast<std::size_t>(t - 1)]) {
      delivered[*attempt] = true;
      alpha.a2_by_slot[static_cast<std::size_t>(t - 1)] = ac2;
      if (*attempt == psi1 && !out.t2) out.t2 = t;
    }
  }
  // mirror: swap psi1 and psi2 slot by slot
  out.schedule_mirror = out.schedule_dev;
  for (auto& att : out.schedule_mirror) {
    if (!att) continue;
    if (*att == psi1)
      att = psi2;
    else if (*att == psi2)
      att = psi1;
  }

  const double a2 = inst.process.a * inst.process.a;
  const Slot T = inst.horizon;
  if (out.t2) {
    const Slot t2 = *out.t2;
    double s1 = 0.0;
    for (Slot t = 2; t <= t2; ++t) s1 += alpha.alpha(2, t - 1);
    double s2 = 0.0;
    for (Slot t = t2 + 1; t <= T; ++t) s2 += alpha.alpha(t2 + 1, t - 1);
    out.margin =
        out.delta_at_2 * (s1 + (alpha.alpha(2, t2) - ipow(a2, t2 - 1)) * s2);
  } else {
    double s1 = 0.0;
    for (Slot t = 2; t <= T; ++t) s1 += alpha.alpha(2, t - 1);
    out.margin = out.delta_at_2 * s1;
  }
  return out;
}

inline double interchange_margin(const SmallInstance& inst, std::size_t psi1,
                                 std::size_t psi2, const std::vector<bool>& pattern) {
  return interchange_margin_detail(inst, psi1, psi2, pattern).margin;
}

struct Lemma5Result {
  double simple_margin = 0.0;          // 1 + a_c^2 - a^2/(1-a^2)
  bool sufficient_condition_holds = false;  // a^2 K (2-K) <= 1 - a^2
};

inline Lemma5Result lemma5_margin(double a, double K) {
  const ProcessParams pp{a, 1.0};
  const FilterParams fp = make_filter_params(K, pp);
  if (std::abs(a) >= 1.0 || std::abs(fp.a_c) >= 1.0 || K < 0.0 || K > gain_bound(a))
    throw std::invalid_argument("stability assumption violated");
  const double a2 = a * a;
  Lemma5Result out;
  out.simple_margin = 1.0 + fp.a_c * fp.a_c - a2 / (1.0 - a2);
  out.sufficient_condition_holds = a2 * K * (2.0 - K) <= 1.0 - a2;
  return out;
}

struct McVarianceResult {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

// Sample variance of the delivered-packet innovation noise, rebuilt from raw
// draws:  w_0 + a K sum_{l=1..tau} a^{l-1} w_l - a^{tau+1} K s n.
// The statistic is Gaussian, so SE(s^2) = s^2 sqrt(2/(n-1)).
inline McVarianceResult mc_variance_oracle(Slot tau, double sigma2_s,
                                           const ProcessParams& pp,
                                           const FilterParams& fp,
                                           std::size_t n_samples,
                                           std::uint64_t seed = 1) {
  if (tau < 0) throw std::invalid_argument("age must be >= 0");
  if (n_samples < 10'000) throw std::invalid_argument("need n_samples >= 1e4");
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 7, 0));
  const double s_proc = std::sqrt(pp.sigma2);
  const double s_obs = std::sqrt(sigma2_s);
  const double obs_coeff = ipow(pp.a, tau + 1) * fp.K;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 1; i <= n_samples; ++i) {
    double nu = rng.gaussian() * s_proc;
    double coeff = pp.a * fp.K;
    for (Slot l = 1; l <= tau; ++l) {
      nu += coeff * rng.gaussian() * s_proc;
      coeff *= pp.a;
    }
    nu -= obs_coeff * s_obs * rng.gaussian();
    const double d = nu - mean;
    mean += d / static_cast<double>(i);
    m2 += d * (nu - mean);
  }
  McVarianceResult out;
  out.n_samples = n_samples;
  out.estimate = m2 / static_cast<double>(n_samples - 1);
  out.std_error = out.estimate * std::sqrt(2.0 / static_cast<double>(n_samples - 1));
  return out;
}

}  // namespace voi
