#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

// Scalar Gauss-Markov process x(t+1) = a x(t) + w(t), heterogeneous-precision
// packet sources, and the constant-gain linear filter that consumes delayed
// time-stamped observations.

namespace voi {

using Slot = std::int64_t;

// Integer power by squaring; handles negative bases exactly.
inline double ipow(double base, std::int64_t exp) {
  if (exp < 0) return 1.0 / ipow(base, -exp);
  double result = 1.0;
  double b = base;
  std::uint64_t e = static_cast<std::uint64_t>(exp);
  while (e != 0) {
    if (e & 1) result *= b;
    b *= b;
    e >>= 1;
  }
  return result;
}

struct ProcessParams {
  double a = 0.0;       // dynamics coefficient, |a| < 1
  double sigma2 = 1.0;  // process-noise variance
};

struct FilterParams {
  double K = 0.0;    // constant filter gain
  double a_c = 0.0;  // closed-loop gain a(1-K)
};

inline FilterParams make_filter_params(double K, const ProcessParams& pp) {
  return FilterParams{K, pp.a * (1.0 - K)};
}

// Admissible gain bound (1-a^2)/a^2; infinite when a = 0.
inline double gain_bound(double a) {
  const double a2 = a * a;
  if (a2 == 0.0) return std::numeric_limits<double>::infinity();
  return (1.0 - a2) / a2;
}

inline bool process_params_valid(const ProcessParams& pp) {
  return std::abs(pp.a) < 1.0 && pp.sigma2 >= 0.0 && std::isfinite(pp.sigma2);
}

inline bool filter_params_valid(const FilterParams& fp, const ProcessParams& pp) {
  return fp.K >= 0.0 && std::abs(fp.a_c) < 1.0 && fp.K <= gain_bound(pp.a) &&
         fp.a_c == pp.a * (1.0 - fp.K);
}

struct SourceProfile {
  int source_id = 1;          // small integer in [1, M]
  double sigma2_s = 0.0;      // observation-noise variance of this source
  double arrival_rate = 0.0;  // per-slot Bernoulli generation probability
};

inline bool source_profile_valid(const SourceProfile& s) {
  return s.sigma2_s >= 0.0 && s.arrival_rate >= 0.0 && s.arrival_rate <= 1.0;
}

struct Packet {
  std::uint64_t packet_id = 0;  // unique, monotone within an episode
  int source_id = 0;
  Slot t_gen = 1;       // generation slot
  double y = 0.0;       // observation value
  double sigma2_s = 0.0;
  double obs_noise = 0.0;  // raw standard-normal draw behind y, kept so the
                           // innovation decomposition can be reconstructed
};

inline Slot packet_age(const Packet& pkt, Slot t) { return t - pkt.t_gen; }

struct EstimatorState {
  double x = 0.0;      // true state
  double x_hat = 0.0;  // estimate
  double e = 0.0;      // x - x_hat, maintained exactly
  Slot t = 0;          // current slot
};

// x(t+1) = a x(t) + w(t)
inline double evolve_process(double x, const ProcessParams& pp, double w) {
  return pp.a * x + w;
}

// y = x(t_gen) + sqrt(sigma2_s) * noise; sigma2_s is stored as a variance and
// scales a unit-variance draw by its square root.
inline Packet generate_packet(const SourceProfile& src, double x, Slot t,
                              double noise, std::uint64_t packet_id) {
  if (t < 1) throw std::invalid_argument("generate_packet: slot must be >= 1");
  Packet pkt;
  pkt.packet_id = packet_id;
  pkt.source_id = src.source_id;
  pkt.t_gen = t;
  pkt.sigma2_s = src.sigma2_s;
  pkt.obs_noise = noise;
  pkt.y = x + std::sqrt(src.sigma2_s) * noise;
  return pkt;
}

// Estimate map for one slot. Delivered packet of age tau = t_now - t_gen:
//   x_hat' = a x_hat + a K (a^tau y - x_hat)
// (the observation is weighted by a^{tau+1}, i.e. its age at the next slot);
// no delivery:
//   x_hat' = a x_hat.
inline double filter_update(double x_hat, const std::optional<Packet>& delivered,
                            Slot t_now, const FilterParams& fp,
                            const ProcessParams& pp) {
  if (!delivered) return pp.a * x_hat;
  const Slot tau = t_now - delivered->t_gen;
  if (tau < 0) throw std::invalid_argument("filter_update: packet from the future");
  const double weighted_y = ipow(pp.a, tau) * delivered->y;
  return pp.a * x_hat + pp.a * fp.K * (weighted_y - x_hat);
}

// Ring buffer of recent process-noise samples, slot-addressed. Packets older
// than the retained window are still schedulable, just not reconstructable.
class NoiseHistory {
 public:
  explicit NoiseHistory(std::size_t capacity = 64)
      : buf_(capacity, 0.0), cap_(capacity) {}

  void push(Slot slot, double w) {
    buf_[static_cast<std::size_t>(slot % static_cast<Slot>(cap_))] = w;
    newest_ = slot;
  }

  std::optional<double> at(Slot slot) const {
    if (newest_ < 0 || slot > newest_ || slot <= newest_ - static_cast<Slot>(cap_))
      return std::nullopt;
    if (slot < 0) return std::nullopt;
    return buf_[static_cast<std::size_t>(slot % static_cast<Slot>(cap_))];
  }

  std::size_t capacity() const { return cap_; }

 private:
  std::vector<double> buf_;
  std::size_t cap_;
  Slot newest_ = -1;
};

struct Innovation {
  double coeff = 0.0;                  // a_c on delivery, a otherwise
  std::optional<double> noise;         // e(t+1) - coeff * e(t), when reconstructable
};

// Decomposes the error update e(t+1) = coeff * e(t) + noise. The noise term is
// rebuilt from the stored process-noise window and the packet's raw
// observation draw:
//   delivered: w(t) + a K sum_{l=1..tau} a^{l-1} w(t-l) - a^{tau+1} K s n
//   empty:     w(t)
// where s = sqrt(sigma2_s). Requires w(t) to be in the history already.
inline Innovation innovation_step(const std::optional<Packet>& delivered, Slot t,
                                  const FilterParams& fp, const ProcessParams& pp,
                                  const NoiseHistory& history) {
  Innovation out;
  out.coeff = delivered ? fp.a_c : pp.a;
  const auto w_t = history.at(t);
  if (!w_t) return out;
  if (!delivered) {
    out.noise = *w_t;
    return out;
  }
  const Slot tau = t - delivered->t_gen;
  if (tau < 0) throw std::invalid_argument("innovation_step: packet from the future");
  double acc = *w_t;
  double coeff_l = pp.a * fp.K;  // a K a^{l-1} at l = 1
  for (Slot l = 1; l <= tau; ++l) {
    const auto w = history.at(t - l);
    if (!w) return out;  // window too short for this age
    acc += coeff_l * (*w);
    coeff_l *= pp.a;
  }
  acc -= ipow(pp.a, tau + 1) * fp.K * std::sqrt(delivered->sigma2_s) *
         delivered->obs_noise;
  out.noise = acc;
  return out;
}

// Full estimator step used by the engine: applies the filter map, evolves the
// true state with process noise w, and recomputes e = x - x_hat exactly.
inline EstimatorState step_estimator(const EstimatorState& est,
                                     const std::optional<Packet>& delivered,
                                     const FilterParams& fp, const ProcessParams& pp,
                                     double w) {
  EstimatorState next;
  next.x_hat = filter_update(est.x_hat, delivered, est.t, fp, pp);
  next.x = evolve_process(est.x, pp, w);
  next.e = next.x - next.x_hat;
  next.t = est.t + 1;
  return next;
}

}  // namespace voi
