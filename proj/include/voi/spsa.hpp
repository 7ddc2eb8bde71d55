#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "voi/engine.hpp"

// Two-measurement SPSA over the channel-access vector. The N-th coordinate is
// eliminated (p_N = 1 - sum of the rest), perturbations are symmetric +-1
// Bernoulli on the free coordinates, the +- pair of cost measurements shares
// replication seeds, and every candidate point is pulled back onto the
// simplex by Euclidean projection.

namespace voi {

// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_to_simplex(std::vector<double> v) {
  const std::size_t n = v.size();
  bool finite = true;
  for (double x : v)
    if (!std::isfinite(x)) finite = false;
  if (n == 0 || !finite) return std::vector<double>(std::max<std::size_t>(n, 1), 1.0 / std::max<std::size_t>(n, 1));
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double theta = 0.0;
  std::size_t rho = 0;
  for (std::size_t j = 0; j < n; ++j) {
    cumsum += u[j];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) {
      rho = j + 1;
      theta = candidate;
    }
  }
  if (rho == 0) return std::vector<double>(n, 1.0 / static_cast<double>(n));  // degenerate
  double sum = 0.0;
  for (double& x : v) {
    x = std::max(0.0, x - theta);
    sum += x;
  }
  if (sum <= 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  return v;
}

struct SpsaGains {
  double a0 = 0.0;
  double A = 0.0;
  double alpha = 0.602;
  double c0 = 0.1;
  double gamma = 0.101;
};

struct SpsaOptions {
  std::size_t iterations = 200;
  std::size_t measure_reps = 100;
  std::optional<SpsaGains> gains;  // auto-scaled when absent
  PolicyKind policy = PolicyKind::index_voi;
  std::size_t threads = 0;
};

struct SpsaResult {
  std::vector<double> initial_access;
  std::vector<double> access;
  std::vector<double> cost_trace;  // mean of the +- pair per iteration
  std::vector<std::vector<double>> access_trace;
  double initial_cost = 0.0, initial_se = 0.0;
  double final_cost = 0.0, final_se = 0.0;
  SpsaGains gains_used;
};

namespace detail {

inline double measure_access_cost(const MultiProcessConfig& base,
                                  const std::vector<double>& access, PolicyKind kind,
                                  std::size_t reps, std::uint64_t rep_base,
                                  std::size_t threads, double* se_out = nullptr) {
  MultiProcessConfig cfg = base;
  cfg.access = access;
  std::vector<double> costs(reps);
  parallel_for(
      reps,
      [&](std::size_t r) {
        costs[r] = run_multiprocess(cfg, kind, rep_base + r).total_cost;
      },
      threads);
  double sum = 0.0;
  for (double c : costs) sum += c;
  const double mean = sum / static_cast<double>(reps);
  if (se_out) {
    double ss = 0.0;
    for (double c : costs) ss += (c - mean) * (c - mean);
    *se_out = reps > 1 ? std::sqrt(ss / (static_cast<double>(reps - 1) *
                                         static_cast<double>(reps)))
                       : 0.0;
  }
  return mean;
}

inline std::vector<double> full_vector(const std::vector<double>& free_coords) {
  std::vector<double> v(free_coords.size() + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < free_coords.size(); ++i) {
    v[i] = free_coords[i];
    sum += free_coords[i];
  }
  v.back() = 1.0 - sum;
  return v;
}

}  // namespace detail

inline SpsaResult spsa_optimize(const MultiProcessConfig& mcfg, const SpsaOptions& opt) {
  validate_multi_config(mcfg);
  if (opt.iterations < 1) throw std::invalid_argument("spsa needs iterations >= 1");
  if (opt.measure_reps < 2) throw std::invalid_argument("spsa needs measure_reps >= 2");
  const std::size_t n = mcfg.processes.size();
  SpsaResult out;
  out.initial_access = mcfg.access;
  out.access = mcfg.access;

  const std::uint64_t final_block =
      static_cast<std::uint64_t>(opt.iterations + 2) * opt.measure_reps;
  if (n == 1) {
    // no free coordinate: the vector stays (1)
    out.initial_cost = detail::measure_access_cost(mcfg, out.access, opt.policy,
                                                   opt.measure_reps, final_block,
                                                   opt.threads, &out.initial_se);
    out.final_cost = out.initial_cost;
    out.final_se = out.initial_se;
    return out;
  }

  SpsaGains g = opt.gains.value_or(SpsaGains{});
  if (!opt.gains || g.A <= 0.0)
    g.A = std::max(1.0, 0.1 * static_cast<double>(opt.iterations));
  RandomStream rng(derive_seed(mcfg.seed, Stream::spsa, 0, 0));

  std::vector<double> theta(mcfg.access.begin(), mcfg.access.end() - 1);

  auto measure_theta = [&](const std::vector<double>& th, std::uint64_t rep_base,
                           double* se) {
    return detail::measure_access_cost(mcfg, project_to_simplex(detail::full_vector(th)),
                                       opt.policy, opt.measure_reps, rep_base,
                                       opt.threads, se);
  };

  if (!opt.gains || g.a0 <= 0.0) {
    // probe the gradient scale at the start to size the first step (~0.05)
    std::vector<double> delta(n - 1);
    for (auto& d : delta) d = rng.bernoulli(0.5) ? 1.0 : -1.0;
    std::vector<double> plus = theta, minus = theta;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      plus[i] += g.c0 * delta[i];
      minus[i] -= g.c0 * delta[i];
    }
    const double jp = measure_theta(plus, 0, nullptr);
    const double jm = measure_theta(minus, 0, nullptr);
    double gmax = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i)
      gmax = std::max(gmax, std::abs((jp - jm) / (2.0 * g.c0 * delta[i])));
    g.a0 = 0.05 * std::pow(g.A + 1.0, g.alpha) / std::max(gmax, 1e-9);
  }
  out.gains_used = g;

  out.initial_cost = detail::measure_access_cost(mcfg, project_to_simplex(detail::full_vector(theta)),
                                                 opt.policy, opt.measure_reps,
                                                 final_block, opt.threads,
                                                 &out.initial_se);

  for (std::size_t k = 0; k < opt.iterations; ++k) {
    const double ck = g.c0 / std::pow(static_cast<double>(k + 1), g.gamma);
    const double ak = g.a0 / std::pow(g.A + static_cast<double>(k) + 1.0, g.alpha);
    std::vector<double> delta(n - 1);
    for (auto& d : delta) d = rng.bernoulli(0.5) ? 1.0 : -1.0;
    std::vector<double> plus = theta, minus = theta;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      plus[i] += ck * delta[i];
      minus[i] -= ck * delta[i];
    }
    const std::uint64_t rep_base = static_cast<std::uint64_t>(k + 1) * opt.measure_reps;
    const double jp = measure_theta(plus, rep_base, nullptr);
    const double jm = measure_theta(minus, rep_base, nullptr);
    for (std::size_t i = 0; i + 1 < n; ++i)
      theta[i] -= ak * (jp - jm) / (2.0 * ck * delta[i]);
    const auto projected = project_to_simplex(detail::full_vector(theta));
    theta.assign(projected.begin(), projected.end() - 1);
    out.cost_trace.push_back(0.5 * (jp + jm));
    out.access_trace.push_back(projected);
  }

  out.access = project_to_simplex(detail::full_vector(theta));
  out.final_cost = detail::measure_access_cost(mcfg, out.access, opt.policy,
                                               opt.measure_reps, final_block,
                                               opt.threads, &out.final_se);
  return out;
}

}  // namespace voi
