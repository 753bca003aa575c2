#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sdlab/param_space.h"

namespace sdlab {

struct ReceiveEvent {
  std::size_t fragment = 0;
  long send_step = 0;

  bool operator==(const ReceiveEvent&) const = default;
};

// Deterministic send/receive timeline over steps 1..T.
//
// Fragment p is sent at every t in [1, T] with t >= H and (t - t_p) mod H == 0.
// Replica m receives that send at t + tau_m, or at T when t + tau_m > T so
// nothing is in flight after the last step.
class SyncCalendar {
 public:
  SyncCalendar() = default;
  SyncCalendar(FragmentSpec spec, long total_steps, std::vector<long> taus);

  const FragmentSpec& spec() const { return spec_; }
  long total_steps() const { return total_steps_; }
  long period() const { return spec_.period; }
  const std::vector<long>& taus() const { return taus_; }
  std::size_t num_replicas() const { return taus_.size(); }

  const std::map<long, std::vector<std::size_t>>& sends() const { return sends_; }
  const std::map<long, std::vector<ReceiveEvent>>& receives(std::size_t replica) const {
    return receives_.at(replica);
  }

  // Fragments sent at step t (empty if none).
  const std::vector<std::size_t>& sends_at(long t) const;
  const std::vector<ReceiveEvent>& receives_at(std::size_t replica, long t) const;

  std::size_t num_send_events() const { return num_send_events_; }
  // Earliest send step of fragment p that is >= t, possibly beyond T.
  long next_send(std::size_t p, long t) const;

 private:
  FragmentSpec spec_;
  long total_steps_ = 0;
  std::vector<long> taus_;
  std::map<long, std::vector<std::size_t>> sends_;
  std::vector<std::map<long, std::vector<ReceiveEvent>>> receives_;
  std::size_t num_send_events_ = 0;
};

// Validates tau_m < H and builds the calendar. `spec` must carry offsets.
SyncCalendar build_calendar(const FragmentSpec& spec, long total_steps,
                            const std::vector<long>& taus);

// L / |p|: how much smaller the largest single transfer is compared with a
// full-model synchronization.
double peak_bandwidth_reduction(std::size_t num_blocks, std::size_t fragment_size);

// JSON document describing the fragments, offsets and every event.
std::string calendar_to_json(const SyncCalendar& calendar);

}  // namespace sdlab
