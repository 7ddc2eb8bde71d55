#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "voi/index.hpp"
#include "voi/rng.hpp"

// Scheduling policies over the shared queue. All are non-idling: they return
// idle only on an empty queue.

namespace voi {

enum class PolicyKind { index_voi, freshest_first, oldest_first, best_sensor, random_pick };

inline const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::index_voi: return "index-voi";
    case PolicyKind::freshest_first: return "freshest-first";
    case PolicyKind::oldest_first: return "fifo";
    case PolicyKind::best_sensor: return "best-sensor";
    case PolicyKind::random_pick: return "random";
  }
  return "?";
}

inline std::optional<PolicyKind> parse_policy(const std::string& name) {
  if (name == "index-voi") return PolicyKind::index_voi;
  if (name == "freshest-first") return PolicyKind::freshest_first;
  if (name == "fifo") return PolicyKind::oldest_first;
  if (name == "best-sensor") return PolicyKind::best_sensor;
  if (name == "random") return PolicyKind::random_pick;
  return std::nullopt;
}

struct ScheduleDecision {
  std::optional<std::uint64_t> packet_id;  // empty means idle
};

// Picks the packet to attempt at slot t. Only random_pick consumes rng.
// Tie handling is deterministic: freshest/oldest break ties by
// (source_id, packet_id); best_sensor breaks ties by freshest then ids.
inline ScheduleDecision decide(PolicyKind kind, const OrderedQueue& q, Slot /*t*/,
                               const ProcessParams& /*pp*/, const FilterParams& /*fp*/,
                               RandomStream& rng) {
  ScheduleDecision out;
  if (q.empty()) return out;
  switch (kind) {
    case PolicyKind::index_voi:
      out.packet_id = q.peek_min()->packet_id;
      break;
    case PolicyKind::freshest_first: {
      const Packet* best = nullptr;
      for (const auto& entry : q) {
        const Packet& p = entry.pkt;
        if (!best ||
            std::tuple(-p.t_gen, p.source_id, p.packet_id) <
                std::tuple(-best->t_gen, best->source_id, best->packet_id))
          best = &p;
      }
      out.packet_id = best->packet_id;
      break;
    }
    case PolicyKind::oldest_first: {
      const Packet* best = nullptr;
      for (const auto& entry : q) {
        const Packet& p = entry.pkt;
        if (!best ||
            std::tuple(p.t_gen, p.source_id, p.packet_id) <
                std::tuple(best->t_gen, best->source_id, best->packet_id))
          best = &p;
      }
      out.packet_id = best->packet_id;
      break;
    }
    case PolicyKind::best_sensor: {
      const Packet* best = nullptr;
      for (const auto& entry : q) {
        const Packet& p = entry.pkt;
        if (!best ||
            std::tuple(p.sigma2_s, -p.t_gen, p.source_id, p.packet_id) <
                std::tuple(best->sigma2_s, -best->t_gen, best->source_id,
                           best->packet_id))
          best = &p;
      }
      out.packet_id = best->packet_id;
      break;
    }
    case PolicyKind::random_pick: {
      std::uint64_t pick = rng.uniform_int(q.size());
      for (const auto& entry : q) {
        if (pick-- == 0) {
          out.packet_id = entry.pkt.packet_id;
          break;
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace voi
