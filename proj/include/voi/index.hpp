#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "voi/model.hpp"

// Per-packet scheduling index and the ordered shared queue.
//
// The index of a packet of age tau is the variance of the noise it would
// inject into the estimate if delivered now:
//   W2_s = a^2 K^2 a^{2 tau} sigma2_s                       (sensing part)
//   W2_p = a^2 K^2 sigma2 (a^{2 tau} - 1)/(a^2 - 1) + sigma2 (process part)
// The alternate "exact" mode replaces the geometric sum by
// sum_{l=1..tau} a^{2l}, i.e. one extra a^2 inside.
//
// Because W2(t) = a^2 K^2 (a^{2t} key - sigma2/(a^2-1)) + sigma2 with
//   key = a^{-2 t_gen} (sigma2_s + sigma2/(a^2-1)),
// the packet order never changes with t and the queue can be kept sorted by
// the time-invariant key alone.

namespace voi {

enum class IndexMode { paper, exact };

struct PacketIndex {
  double w2_s = 0.0;
  double w2_p = 0.0;
  double w2 = 0.0;
};

namespace detail {

// sigma2_s + sigma2/(a^2-1) in paper mode, sigma2_s + a^2 sigma2/(a^2-1) in
// exact mode.
inline double key_bracket(double sigma2_s, const ProcessParams& pp, IndexMode mode) {
  const double a2 = pp.a * pp.a;
  const double geo = pp.sigma2 / (a2 - 1.0);
  return sigma2_s + (mode == IndexMode::exact ? a2 * geo : geo);
}

}  // namespace detail

inline PacketIndex packet_index_for(double sigma2_s, Slot tau,
                                    const ProcessParams& pp, const FilterParams& fp,
                                    IndexMode mode = IndexMode::paper) {
  if (tau < 0) throw std::invalid_argument("packet_index: age is negative");
  const double a2 = pp.a * pp.a;
  const double a2k2 = a2 * fp.K * fp.K;
  const double a2tau = ipow(a2, tau);
  PacketIndex idx;
  idx.w2_s = a2k2 * a2tau * sigma2_s;
  // (a^{2 tau} - 1)/(a^2 - 1) is the geometric sum 1 + a^2 + ... + a^{2(tau-1)};
  // evaluate it as a sum-free ratio (a=0 gives -1/-1 per term, still finite).
  double geo = (tau == 0) ? 0.0 : (a2tau - 1.0) / (a2 - 1.0);
  if (mode == IndexMode::exact) geo *= a2;
  idx.w2_p = a2k2 * pp.sigma2 * geo + pp.sigma2;
  idx.w2 = idx.w2_s + idx.w2_p;
  return idx;
}

inline PacketIndex packet_index(const Packet& pkt, Slot t, const ProcessParams& pp,
                                const FilterParams& fp,
                                IndexMode mode = IndexMode::paper) {
  if (t < pkt.t_gen)
    throw std::invalid_argument("packet_index: slot precedes generation time");
  return packet_index_for(pkt.sigma2_s, packet_age(pkt, t), pp, fp, mode);
}

// Index of the empty packet: (0, sigma2).
inline PacketIndex empty_packet_index(const ProcessParams& pp) {
  return PacketIndex{0.0, pp.sigma2, pp.sigma2};
}

// Time-invariant ordering key, stored as (sign, log magnitude) because
// a^{-2 t_gen} overflows doubles for long horizons. Packet-independent
// degenerate cases (K = 0 or a = 0, where every index is equal) compare as
// sign 0 so that ties resolve by (t_gen, source_id, packet_id).
struct OrderKey {
  int sign = 0;          // sign of the key; 0 collapses to tiebreak-only
  double log_mag = 0.0;  // log |key| when sign != 0
  double key = 0.0;      // raw scalar, may be +-inf; reporting only
  Slot t_gen = 0;
  int source_id = 0;
  std::uint64_t packet_id = 0;
};

inline OrderKey order_key(const Packet& pkt, const ProcessParams& pp,
                          const FilterParams& fp,
                          IndexMode mode = IndexMode::paper) {
  OrderKey k;
  k.t_gen = pkt.t_gen;
  k.source_id = pkt.source_id;
  k.packet_id = pkt.packet_id;
  if (pp.a == 0.0 || fp.K == 0.0) return k;  // degenerate: all indices equal
  const double bracket = detail::key_bracket(pkt.sigma2_s, pp, mode);
  if (bracket == 0.0) return k;
  k.sign = bracket > 0.0 ? 1 : -1;
  const double a2 = pp.a * pp.a;
  k.log_mag = std::log(std::abs(bracket)) -
              2.0 * static_cast<double>(pkt.t_gen) * std::log(std::abs(pp.a));
  k.key = ipow(a2, -pkt.t_gen) * bracket;
  return k;
}

// Strict weak order: key value ascending, then (t_gen, source_id, packet_id).
inline bool key_less(const OrderKey& lhs, const OrderKey& rhs) {
  if (lhs.sign != rhs.sign) return lhs.sign < rhs.sign;
  if (lhs.sign != 0 && lhs.log_mag != rhs.log_mag) {
    // positive keys: smaller magnitude first; negative: larger magnitude first
    return lhs.sign > 0 ? lhs.log_mag < rhs.log_mag : lhs.log_mag > rhs.log_mag;
  }
  return std::tie(lhs.t_gen, lhs.source_id, lhs.packet_id) <
         std::tie(rhs.t_gen, rhs.source_id, rhs.packet_id);
}

// Index difference W2_a(t) - W2_b(t), evaluated in the factored form
// a^2 K^2 (a^{2 tau_a} B_a - a^{2 tau_b} B_b) so that the a^{2t} scaling law
// holds to full precision and the +sigma2 constants cancel exactly.
inline double delta(const Packet& psi_a, const Packet& psi_b, Slot t,
                    const ProcessParams& pp, const FilterParams& fp,
                    IndexMode mode = IndexMode::paper) {
  if (t < psi_a.t_gen || t < psi_b.t_gen)
    throw std::invalid_argument("delta: slot precedes a generation time");
  const double a2 = pp.a * pp.a;
  const double a2k2 = a2 * fp.K * fp.K;
  const double term_a = ipow(a2, packet_age(psi_a, t)) *
                        detail::key_bracket(psi_a.sigma2_s, pp, mode);
  const double term_b = ipow(a2, packet_age(psi_b, t)) *
                        detail::key_bracket(psi_b.sigma2_s, pp, mode);
  return a2k2 * (term_a - term_b);
}

// Shared ordered queue. Insertion and min-extraction are tree operations
// (O(log n) comparisons); comparisons are counted for the scaling benchmark.
class OrderedQueue {
 public:
  OrderedQueue(const ProcessParams& pp, const FilterParams& fp,
               IndexMode mode = IndexMode::paper)
      : pp_(pp), fp_(fp), mode_(mode),
        counter_(std::make_shared<std::uint64_t>(0)),
        set_(Cmp{counter_}) {}

  void enqueue(const Packet& pkt) {
    if (by_id_.count(pkt.packet_id) != 0)
      throw std::invalid_argument("enqueue: duplicate packet_id");
    auto it = set_.insert(Entry{order_key(pkt, pp_, fp_, mode_), pkt});
    by_id_.emplace(pkt.packet_id, it);
  }

  const Packet* peek_min() const {
    return set_.empty() ? nullptr : &set_.begin()->pkt;
  }

  std::optional<Packet> pop_min() {
    if (set_.empty()) return std::nullopt;
    Packet out = set_.begin()->pkt;
    by_id_.erase(out.packet_id);
    set_.erase(set_.begin());
    return out;
  }

  bool erase(std::uint64_t packet_id) {
    auto it = by_id_.find(packet_id);
    if (it == by_id_.end()) return false;
    set_.erase(it->second);
    by_id_.erase(it);
    return true;
  }

  const Packet* find(std::uint64_t packet_id) const {
    auto it = by_id_.find(packet_id);
    return it == by_id_.end() ? nullptr : &it->second->pkt;
  }

  std::size_t size() const { return set_.size(); }
  bool empty() const { return set_.empty(); }

  std::uint64_t comparisons() const { return *counter_; }
  void reset_comparisons() { *counter_ = 0; }

  struct Entry {
    OrderKey key;
    Packet pkt;
  };

  // Key-ascending traversal.
  auto begin() const { return set_.begin(); }
  auto end() const { return set_.end(); }

 private:
  struct Cmp {
    std::shared_ptr<std::uint64_t> counter;
    bool operator()(const Entry& a, const Entry& b) const {
      ++*counter;
      return key_less(a.key, b.key);
    }
  };

  ProcessParams pp_;
  FilterParams fp_;
  IndexMode mode_;
  std::shared_ptr<std::uint64_t> counter_;
  std::multiset<Entry, Cmp> set_;
  std::unordered_map<std::uint64_t, std::multiset<Entry, Cmp>::iterator> by_id_;
};

}  // namespace voi
