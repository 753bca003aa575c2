#include "sdlab/schedule.h"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sdlab/errors.h"

namespace sdlab {

SyncCalendar::SyncCalendar(FragmentSpec spec, long total_steps, std::vector<long> taus)
    : spec_(std::move(spec)), total_steps_(total_steps), taus_(std::move(taus)) {
  if (!spec_.has_offsets()) throw ScheduleError("calendar needs fragment offsets");
  if (total_steps_ < 1) throw ConfigError("T must be >= 1");
  if (taus_.empty()) throw ConfigError("at least one replica is required");
  const long H = spec_.period;
  for (std::size_t m = 0; m < taus_.size(); ++m) {
    if (taus_[m] < 0 || taus_[m] >= H) {
      std::ostringstream os;
      os << "tau for replica " << m << " is " << taus_[m]
         << "; the overlap delay must satisfy 0 <= tau < H (H=" << H << ")";
      throw ConfigError(os.str());
    }
  }
  receives_.resize(taus_.size());
  for (std::size_t p = 0; p < spec_.num_fragments(); ++p) {
    for (long t = spec_.first_send(p); t <= total_steps_; t += H) {
      sends_[t].push_back(p);
      ++num_send_events_;
      for (std::size_t m = 0; m < taus_.size(); ++m) {
        const long r = std::min(t + taus_[m], total_steps_);
        receives_[m][r].push_back({p, t});
      }
    }
  }
  for (auto& [t, ps] : sends_) std::sort(ps.begin(), ps.end());
  for (auto& per_replica : receives_)
    for (auto& [t, evs] : per_replica)
      std::sort(evs.begin(), evs.end(), [](const ReceiveEvent& a, const ReceiveEvent& b) {
        return a.send_step != b.send_step ? a.send_step < b.send_step : a.fragment < b.fragment;
      });
}

const std::vector<std::size_t>& SyncCalendar::sends_at(long t) const {
  static const std::vector<std::size_t> kNone;
  auto it = sends_.find(t);
  return it == sends_.end() ? kNone : it->second;
}

const std::vector<ReceiveEvent>& SyncCalendar::receives_at(std::size_t replica, long t) const {
  static const std::vector<ReceiveEvent> kNone;
  const auto& per = receives_.at(replica);
  auto it = per.find(t);
  return it == per.end() ? kNone : it->second;
}

long SyncCalendar::next_send(std::size_t p, long t) const {
  const long first = spec_.first_send(p);
  if (t <= first) return first;
  const long H = spec_.period;
  return first + ((t - first + H - 1) / H) * H;
}

SyncCalendar build_calendar(const FragmentSpec& spec, long total_steps,
                            const std::vector<long>& taus) {
  return SyncCalendar(spec, total_steps, taus);
}

double peak_bandwidth_reduction(std::size_t num_blocks, std::size_t fragment_size) {
  if (fragment_size == 0 || num_blocks % fragment_size != 0) {
    std::ostringstream os;
    os << "fragment_size " << fragment_size << " must divide num_blocks " << num_blocks;
    throw ConfigError(os.str());
  }
  return static_cast<double>(num_blocks) / static_cast<double>(fragment_size);
}

std::string calendar_to_json(const SyncCalendar& calendar) {
  using nlohmann::json;
  const FragmentSpec& spec = calendar.spec();
  json doc;
  doc["T"] = calendar.total_steps();
  doc["H"] = calendar.period();
  doc["taus"] = calendar.taus();
  doc["pattern"] = to_string(spec.pattern);
  doc["fragment_size"] = spec.fragment_size;
  doc["fragments"] = spec.fragments;
  doc["offsets"] = spec.offsets;
  json sends = json::array();
  for (const auto& [t, ps] : calendar.sends()) sends.push_back({{"step", t}, {"fragments", ps}});
  doc["sends"] = std::move(sends);
  json receives = json::array();
  for (std::size_t m = 0; m < calendar.num_replicas(); ++m) {
    json events = json::array();
    for (const auto& [t, evs] : calendar.receives(m))
      for (const ReceiveEvent& e : evs)
        events.push_back({{"step", t}, {"fragment", e.fragment}, {"send_step", e.send_step}});
    receives.push_back({{"replica", m}, {"events", std::move(events)}});
  }
  doc["receives"] = std::move(receives);
  return doc.dump(2) + "\n";
}

}  // namespace sdlab
