#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "voi/csv.hpp"
#include "voi/engine.hpp"
#include "voi/oracle.hpp"

// Verification battery: certifies the index-policy optimality claims and the
// noise-variance bookkeeping against brute-force and closed-form oracles.

namespace voi {

struct BatteryOutcome {
  std::vector<VerificationRow> rows;
  bool passed = true;
  double seconds = 0.0;

  void add(VerificationRow row) {
    passed = passed && row.passed;
    rows.push_back(std::move(row));
  }
};

namespace verifydetail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Draws (a, K) inside the certified region: the stability assumption plus
// a^2 K (2-K) <= 1 - a^2.
inline void draw_certified_gains(RandomStream& rng, double& a, double& K) {
  for (;;) {
    a = rng.uniform(0.15, 0.85) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    const double a2 = a * a;
    double k_cap = std::min(gain_bound(a), 1.9);
    if (a2 > 0.5) {
      const double room = 1.0 - (1.0 - a2) / a2;
      k_cap = std::min(k_cap, 1.0 - std::sqrt(std::max(0.0, room)));
    }
    K = rng.uniform(0.0, k_cap * 0.999);
    const double a_c = a * (1.0 - K);
    if (std::abs(a_c) >= 1.0) continue;
    if (K > gain_bound(a)) continue;
    if (a2 * K * (2.0 - K) > 1.0 - a2) continue;
    return;
  }
}

inline SmallInstance random_certified_instance(RandomStream& rng) {
  SmallInstance inst;
  double a = 0.0, K = 0.0;
  draw_certified_gains(rng, a, K);
  inst.process = ProcessParams{a, rng.uniform(0.2, 2.0)};
  inst.filter = make_filter_params(K, inst.process);
  inst.horizon = 2 + static_cast<Slot>(rng.uniform_int(3));  // T in {2,3,4}
  inst.p = rng.bernoulli(0.5) ? 0.5 : 1.0;
  inst.e0_sq = rng.uniform(0.0, 2.0);
  const std::size_t n = 1 + rng.uniform_int(3);  // 1..3 packets
  for (std::size_t i = 0; i < n; ++i) {
    OraclePacket pkt;
    pkt.t_gen = 1 + static_cast<Slot>(rng.uniform_int(
                        static_cast<std::uint64_t>(inst.horizon - 1)));
    pkt.sigma2_s = rng.bernoulli(0.1) ? 0.0 : rng.uniform(0.0, 4.0);
    inst.packets.push_back(pkt);
  }
  return inst;
}

}  // namespace verifydetail

// Criterion: on certified instances the brute-force minimum matches the
// index-policy cost to 1e-9 relative.
inline BatteryOutcome check_small_instance_optimality(std::size_t n_instances,
                                                      std::uint64_t seed,
                                                      double rel_tol = 1e-9) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 1, 0));
  double worst = 0.0;
  for (std::size_t i = 0; i < n_instances; ++i) {
    const SmallInstance inst = random_certified_instance(rng);
    const BruteForceResult bf = brute_force_optimal(inst);
    const double idx_cost = index_policy_expected_cost(inst);
    const double rel = std::abs(idx_cost - bf.best_cost) / std::abs(bf.best_cost);
    worst = std::max(worst, rel);
    VerificationRow row;
    row.instance = "small-" + std::to_string(i);
    row.check = "index_matches_brute_force";
    row.passed = rel <= rel_tol;
    row.detail = "a=" + fmt(inst.process.a) + " K=" + fmt(inst.filter.K) +
                 " T=" + std::to_string(inst.horizon) + " n=" +
                 std::to_string(inst.packets.size()) + " p=" + fmt(inst.p) +
                 " rel_gap=" + fmt(rel);
    out.add(std::move(row));
  }
  VerificationRow agg;
  agg.instance = "small-all";
  agg.check = "max_rel_gap";
  agg.passed = worst <= rel_tol;
  agg.detail = fmt(worst);
  out.add(std::move(agg));
  out.seconds = watch.seconds();
  return out;
}

// Criterion: pairwise comparisons never flip across slots and index
// differences scale as a^{2(t2-t1)} (checked in log space).
inline BatteryOutcome check_order_invariance(std::size_t pairs,
                                             std::size_t slot_pairs,
                                             std::uint64_t seed,
                                             double rel_tol = 1e-12) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 2, 0));
  for (std::size_t i = 0; i < pairs; ++i) {
    ProcessParams pp;
    FilterParams fp;
    Packet p1, p2;
    for (;;) {
      pp.a = rng.uniform(0.2, 0.9) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      pp.sigma2 = rng.uniform(0.3, 2.0);
      const double k_cap = std::min(gain_bound(pp.a), 1.9);
      fp = make_filter_params(rng.uniform(0.05, k_cap), pp);
      if (std::abs(fp.a_c) >= 1.0) continue;
      p1 = Packet{1, 1, 1 + static_cast<Slot>(rng.uniform_int(40)), 0.0,
                  std::exp(rng.uniform(std::log(0.05), std::log(5.0))), 0.0};
      p2 = Packet{2, 2, 1 + static_cast<Slot>(rng.uniform_int(40)), 0.0,
                  std::exp(rng.uniform(std::log(0.05), std::log(5.0))), 0.0};
      // keep the pair away from a key tie so the sign and the log-ratio are
      // numerically meaningful
      const double a2 = pp.a * pp.a;
      const double g1 = ipow(a2, -p1.t_gen) * detail::key_bracket(p1.sigma2_s, pp, IndexMode::paper);
      const double g2 = ipow(a2, -p2.t_gen) * detail::key_bracket(p2.sigma2_s, pp, IndexMode::paper);
      const double gap = std::abs(g1 - g2) / std::max(std::abs(g1), std::abs(g2));
      if (gap > 1e-2) break;
    }
    const bool key_order = key_less(order_key(p1, pp, fp), order_key(p2, pp, fp));
    bool consistent = true;
    double worst_log = 0.0;
    const Slot base = std::max(p1.t_gen, p2.t_gen);
    for (std::size_t s = 0; s < slot_pairs; ++s) {
      const Slot t1 = base + 1 + static_cast<Slot>(rng.uniform_int(100));
      Slot t2 = base + 1 + static_cast<Slot>(rng.uniform_int(100));
      if (t2 == t1) t2 = t1 + 1;
      const double d1 = delta(p1, p2, t1, pp, fp);
      const double d2 = delta(p1, p2, t2, pp, fp);
      if ((d1 < 0.0) != key_order || (d2 < 0.0) != key_order) consistent = false;
      if ((d1 < 0.0) != (d2 < 0.0)) consistent = false;
      const double lhs = std::log(std::abs(d2)) - std::log(std::abs(d1));
      const double rhs = 2.0 * static_cast<double>(t2 - t1) * std::log(std::abs(pp.a));
      const double err = std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs));
      worst_log = std::max(worst_log, err);
    }
    VerificationRow row;
    row.instance = "pair-" + std::to_string(i);
    row.check = "order_invariance_and_delta_scaling";
    row.passed = consistent && worst_log <= rel_tol;
    row.detail = "a=" + fmt(pp.a) + " log_err=" + fmt(worst_log) +
                 (consistent ? "" : " ORDER-FLIP");
    out.add(std::move(row));
  }
  out.seconds = watch.seconds();
  return out;
}

namespace verifydetail {

// Family of coupled-run configs: three initial packets with distinct source
// variances, Bernoulli arrivals during the run.
inline EpisodeConfig coupled_family_config(RandomStream& rng, std::uint64_t seed) {
  EpisodeConfig cfg;
  cfg.horizon = 16;
  cfg.seed = seed;
  cfg.block.process = ProcessParams{0.6, 1.0};
  cfg.block.filter = make_filter_params(0.3, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.4, 0.3}, SourceProfile{2, 1.5, 0.3}};
  cfg.channel.p = 0.6;
  for (int i = 0; i < 3; ++i) {
    ScriptedPacket sp;
    sp.t_gen = 1;
    sp.sigma2_s = rng.uniform(0.05, 3.0);
    cfg.block.initial_queue.push_back(sp);
  }
  return cfg;
}

}  // namespace verifydetail

// Criterion: with the first transmission forced to succeed, the deviation
// delivers psi1 no later than the index policy delivers psi2, on every
// coupled sample path where both deliveries happen.
inline BatteryOutcome check_stopping_times(std::size_t runs, std::uint64_t seed,
                                           std::size_t chunk = 10000) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 3, 0));
  std::size_t done = 0, realized = 0, violations = 0, chunk_id = 0;
  std::size_t chunk_realized = 0, chunk_violations = 0, chunk_n = 0;
  auto flush = [&]() {
    VerificationRow row;
    row.instance = "coupled-chunk-" + std::to_string(chunk_id++);
    row.check = "t2_le_t1_forced_success";
    row.passed = chunk_violations == 0;
    row.detail = "runs=" + std::to_string(chunk_n) +
                 " realized=" + std::to_string(chunk_realized) +
                 " violations=" + std::to_string(chunk_violations);
    out.add(std::move(row));
    chunk_realized = chunk_violations = chunk_n = 0;
  };
  while (done < runs) {
    EpisodeConfig cfg = coupled_family_config(rng, seed);
    const std::size_t j = 1 + rng.uniform_int(2);
    const CoupledRunResult res =
        coupled_run(cfg, {0, j}, ForceFirst::success, done);
    ++done;
    ++chunk_n;
    if (res.t1 && res.t2) {
      ++realized;
      ++chunk_realized;
      if (*res.t2 > *res.t1) {
        ++violations;
        ++chunk_violations;
      }
    }
    if (chunk_n == chunk) flush();
  }
  if (chunk_n > 0) flush();
  VerificationRow agg;
  agg.instance = "coupled-all";
  agg.check = "t2_le_t1_summary";
  agg.passed = violations == 0;
  agg.detail = "runs=" + std::to_string(done) + " realized=" +
               std::to_string(realized) + " violations=" + std::to_string(violations);
  out.add(std::move(agg));
  out.seconds = watch.seconds();
  return out;
}

// Criterion: with the first transmission forced to fail, the index policy and
// the deviation have bit-identical cumulative costs.
inline BatteryOutcome check_first_failure_equality(std::size_t runs,
                                                   std::uint64_t seed,
                                                   std::size_t chunk = 10000) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 4, 0));
  std::size_t done = 0, mismatches = 0, chunk_id = 0, chunk_n = 0, chunk_bad = 0;
  auto flush = [&]() {
    VerificationRow row;
    row.instance = "forced-failure-chunk-" + std::to_string(chunk_id++);
    row.check = "costs_bit_identical_forced_failure";
    row.passed = chunk_bad == 0;
    row.detail = "runs=" + std::to_string(chunk_n) +
                 " mismatches=" + std::to_string(chunk_bad);
    out.add(std::move(row));
    chunk_n = chunk_bad = 0;
  };
  while (done < runs) {
    EpisodeConfig cfg = coupled_family_config(rng, seed + 1);
    const std::size_t j = 1 + rng.uniform_int(2);
    const CoupledRunResult res =
        coupled_run(cfg, {0, j}, ForceFirst::failure, done);
    ++done;
    ++chunk_n;
    if (res.cost_index != res.cost_swapped) {
      ++mismatches;
      ++chunk_bad;
    }
    if (chunk_n == chunk) flush();
  }
  if (chunk_n > 0) flush();
  VerificationRow agg;
  agg.instance = "forced-failure-all";
  agg.check = "costs_bit_identical_summary";
  agg.passed = mismatches == 0;
  agg.detail = "runs=" + std::to_string(done) +
               " mismatches=" + std::to_string(mismatches);
  out.add(std::move(agg));
  out.seconds = watch.seconds();
  return out;
}

// Criterion: the interchange margin is nonpositive on certified instances and
// agrees with the directly propagated cost difference.
inline BatteryOutcome check_interchange_margins(std::size_t n, std::uint64_t seed,
                                                double margin_tol = 1e-12,
                                                double rel_tol = 1e-9) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  RandomStream rng(derive_seed(seed, Stream::instance_gen, 5, 0));
  double worst_margin = -std::numeric_limits<double>::infinity();
  double worst_rel = 0.0;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < n; ++i) {
    SmallInstance inst;
    std::size_t psi1 = 0, psi2 = 1;
    for (;;) {
      inst = random_certified_instance(rng);
      if (inst.horizon < 3) inst.horizon = 3 + static_cast<Slot>(rng.uniform_int(4));
      while (inst.packets.size() < 2) {
        OraclePacket pkt;
        pkt.t_gen = 1;
        pkt.sigma2_s = rng.uniform(0.0, 4.0);
        inst.packets.push_back(pkt);
      }
      inst.packets[0].t_gen = 1;
      inst.packets[1].t_gen = 1;
      const Packet a = as_packet(inst, 0), b = as_packet(inst, 1);
      psi1 = 0;
      psi2 = 1;
      if (key_less(order_key(b, inst.process, inst.filter, inst.mode),
                   order_key(a, inst.process, inst.filter, inst.mode)))
        std::swap(psi1, psi2);
      // avoid key near-ties; they make the relative cross-check meaningless
      const double a2 = inst.process.a * inst.process.a;
      const double g1 = detail::key_bracket(inst.packets[0].sigma2_s, inst.process, inst.mode);
      const double g2 = detail::key_bracket(inst.packets[1].sigma2_s, inst.process, inst.mode);
      const double gap = std::abs(g1 - g2) / std::max({std::abs(g1), std::abs(g2), 1e-12});
      if (inst.filter.K > 1e-3 && a2 > 1e-4 && gap > 1e-4) break;
    }
    std::vector<bool> pattern(static_cast<std::size_t>(inst.horizon - 1));
    pattern[0] = true;
    for (std::size_t s = 1; s < pattern.size(); ++s) pattern[s] = rng.bernoulli(0.6);

    const InterchangeDetail det = interchange_margin_detail(inst, psi1, psi2, pattern);

    // forward difference recursion over the two schedules (independent route)
    const double a2 = inst.process.a * inst.process.a;
    const double ac2 = inst.filter.a_c * inst.filter.a_c;
    double diff_state = 0.0, diff_total = 0.0;
    for (Slot t = 1; t < inst.horizon; ++t) {
      const auto& am = det.schedule_mirror[static_cast<std::size_t>(t - 1)];
      const auto& ad = det.schedule_dev[static_cast<std::size_t>(t - 1)];
      const bool ok = pattern[static_cast<std::size_t>(t - 1)];
      double inject = 0.0;
      if (ok && am && ad && *am != *ad)
        inject = delivery_w2(inst, *am, t) - delivery_w2(inst, *ad, t);
      diff_state = (ok && ad ? ac2 : a2) * diff_state + inject;
      diff_total += diff_state;
    }
    // coarse third route through the absolute costs
    const double cost_mirror = schedule_cost(inst, det.schedule_mirror, pattern);
    const double cost_dev = schedule_cost(inst, det.schedule_dev, pattern);

    const double rel = std::abs(det.margin - diff_total) /
                       std::max({std::abs(det.margin), std::abs(diff_total), 1e-12});
    const bool coarse_ok = std::abs(det.margin - (cost_mirror - cost_dev)) <=
                           1e-9 * std::max(1.0, std::abs(cost_dev));
    const bool ok = det.margin <= margin_tol && rel <= rel_tol && coarse_ok;
    worst_margin = std::max(worst_margin, det.margin);
    worst_rel = std::max(worst_rel, rel);
    if (!ok) {
      ++failures;
      VerificationRow row;
      row.instance = "margin-" + std::to_string(i);
      row.check = "interchange_margin";
      row.passed = false;
      row.detail = "margin=" + fmt(det.margin) + " rel=" + fmt(rel);
      out.add(std::move(row));
    }
  }
  VerificationRow agg;
  agg.instance = "margin-all";
  agg.check = "interchange_margin_summary";
  agg.passed = failures == 0;
  agg.detail = "n=" + std::to_string(n) + " worst_margin=" + fmt(worst_margin) +
               " worst_rel=" + fmt(worst_rel);
  out.add(std::move(agg));
  out.seconds = watch.seconds();
  return out;
}

// Criterion: 1 + a_c^2 - a^2/(1-a^2) >= 0 across a^2 in {0.05..0.50} and the
// admissible gain grid.
inline BatteryOutcome check_lemma5_grid(std::size_t k_steps = 20) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  for (int ai = 1; ai <= 10; ++ai) {
    const double a2 = 0.05 * ai;
    double a = std::sqrt(a2);
    while (a * a > a2) a = std::nextafter(a, 0.0);  // keep a^2 inside the grid cell
    const double k_cap =
        std::min(gain_bound(a), (1.0 + 1.0 / a) * (1.0 - 1e-9));
    for (std::size_t ki = 0; ki < k_steps; ++ki) {
      // fraction first so the top grid point is exactly k_cap
      const double frac =
          static_cast<double>(ki) / static_cast<double>(k_steps - 1);
      const double K = k_cap * frac;
      const Lemma5Result res = lemma5_margin(a, K);
      VerificationRow row;
      row.instance = "a2=" + fmt(a2) + ";K=" + fmt(K);
      row.check = "lemma5_simple_margin_nonnegative";
      row.passed = res.simple_margin >= 0.0;
      row.detail = "margin=" + fmt(res.simple_margin) +
                   " sufficient=" + (res.sufficient_condition_holds ? "1" : "0");
      out.add(std::move(row));
    }
  }
  out.seconds = watch.seconds();
  return out;
}

struct AdjudicationSetting {
  Slot tau;
  double sigma2_s;
  double a;
  double K;
  double sigma2 = 1.0;
};

inline std::vector<AdjudicationSetting> default_adjudication_settings() {
  return {
      {0, 0.5, 0.9, 0.2}, {1, 0.5, 0.7, 1.0}, {2, 0.5, 0.9, 0.2},
      {3, 2.0, 0.7, 1.0}, {6, 0.25, 0.7, 1.0},
  };
}

// Criterion: the simulated innovation variance singles out exactly one of the
// two index formulas for ages >= 1 (both coincide at age 0).
inline BatteryOutcome check_mc_adjudication(std::size_t n_samples, std::uint64_t seed) {
  using namespace verifydetail;
  Stopwatch watch;
  BatteryOutcome out;
  const auto settings = default_adjudication_settings();
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const auto& s = settings[i];
    const ProcessParams pp{s.a, s.sigma2};
    const FilterParams fp = make_filter_params(s.K, pp);
    const McVarianceResult res =
        mc_variance_oracle(s.tau, s.sigma2_s, pp, fp, n_samples, seed + i);
    const double w2_paper =
        packet_index_for(s.sigma2_s, s.tau, pp, fp, IndexMode::paper).w2;
    const double w2_exact =
        packet_index_for(s.sigma2_s, s.tau, pp, fp, IndexMode::exact).w2;
    const bool in_paper = std::abs(res.estimate - w2_paper) <= 3.0 * res.std_error;
    const bool in_exact = std::abs(res.estimate - w2_exact) <= 3.0 * res.std_error;
    VerificationRow row;
    row.instance = "tau=" + std::to_string(s.tau) + ";s2s=" + fmt(s.sigma2_s) +
                   ";a=" + fmt(s.a) + ";K=" + fmt(s.K);
    row.check = "variance_adjudication";
    row.passed = s.tau == 0 ? (in_paper && in_exact) : (in_paper != in_exact);
    row.detail = "estimate=" + fmt(res.estimate) + " se=" + fmt(res.std_error) +
                 " paper=" + fmt(w2_paper) + (in_paper ? "(in)" : "(out)") +
                 " exact=" + fmt(w2_exact) + (in_exact ? "(in)" : "(out)");
    out.add(std::move(row));
  }
  out.seconds = watch.seconds();
  return out;
}

}  // namespace voi
