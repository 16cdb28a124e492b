#pragma once

// Domain types shared by every stage: events, incidents, subsystem classes,
// lookback windows, and trace slicing.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "railcause/error.hpp"
#include "railcause/time.hpp"

namespace railcause {

using json = nlohmann::json;

inline constexpr int kMaxLookbackMinutes = 240;

// ---------------------------------------------------------------------------
// Subsystem classes

enum class SubsystemClass : std::uint8_t {
  ETCS,
  HighOrLowVoltage,
  Couplings,
  Doors,
  Brakes,
  Communication,
  AirProduction,
  Cabling,
  Body,
  Traction,
  Sanitaries,
  Others,
};

inline constexpr std::size_t kClassCount = 12;

template <class T>
using PerClass = std::array<T, kClassCount>;

inline constexpr std::array<std::string_view, kClassCount> kClassNames = {
    "ETCS",          "HighOrLowVoltage", "Couplings", "Doors",    "Brakes",     "Communication",
    "AirProduction", "Cabling",          "Body",      "Traction", "Sanitaries", "Others",
};

inline constexpr std::size_t index_of(SubsystemClass c) { return static_cast<std::size_t>(c); }
inline constexpr SubsystemClass class_at(std::size_t i) { return static_cast<SubsystemClass>(i); }

inline std::string_view to_string(SubsystemClass c) { return kClassNames[index_of(c)]; }

inline std::optional<SubsystemClass> try_parse_class(std::string_view s) {
  for (std::size_t i = 0; i < kClassCount; ++i)
    if (kClassNames[i] == s) return class_at(i);
  return std::nullopt;
}

inline SubsystemClass parse_class(std::string_view s) {
  if (auto c = try_parse_class(s)) return *c;
  throw Error(ErrorKind::InvalidClass, "'" + std::string(s) + "' is not a subsystem class");
}

enum class LabelSource : std::uint8_t { Technician, ExpertFeedback, SyntheticGroundTruth };

inline std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::Technician: return "technician";
    case LabelSource::ExpertFeedback: return "expert_feedback";
    case LabelSource::SyntheticGroundTruth: return "synthetic_ground_truth";
  }
  return "technician";
}

inline LabelSource parse_label_source(std::string_view s) {
  if (s == "technician") return LabelSource::Technician;
  if (s == "expert_feedback") return LabelSource::ExpertFeedback;
  if (s == "synthetic_ground_truth") return LabelSource::SyntheticGroundTruth;
  throw Error(ErrorKind::InvalidRecord, "unknown label_source '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Records

struct Event {
  std::string vehicle_id;
  Instant timestamp;
  std::string code;
  std::map<std::string, std::string> context;

  bool operator==(const Event&) const = default;
};

// Total order used for every trace: timestamp, then vehicle, then code.
// Context is the last key so that permuted inputs sort byte-identically.
inline bool event_before(const Event& a, const Event& b) {
  return std::tie(a.timestamp, a.vehicle_id, a.code, a.context) <
         std::tie(b.timestamp, b.vehicle_id, b.code, b.context);
}

struct Incident {
  std::string id;
  Instant timestamp;
  std::vector<std::string> composition;
  std::string fleet;
  std::optional<SubsystemClass> label;
  LabelSource label_source = LabelSource::Technician;

  bool operator==(const Incident&) const = default;
};

class WindowSpec {
 public:
  explicit WindowSpec(int length_minutes) : length_minutes_(length_minutes) {
    if (length_minutes <= 0 || length_minutes > kMaxLookbackMinutes)
      throw Error(ErrorKind::InvalidWindow,
                  "window length " + std::to_string(length_minutes) + " min outside (0, 240]");
  }

  int length_minutes() const noexcept { return length_minutes_; }
  milliseconds length() const noexcept { return minutes{length_minutes_}; }

  auto operator<=>(const WindowSpec&) const = default;

 private:
  int length_minutes_;
};

struct IncidentTrace {
  Incident incident;
  std::vector<Event> events;  // sorted by event_before, all <= incident.timestamp
  bool operator==(const IncidentTrace&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

struct RetentionPolicy {
  Instant earliest = from_epoch_ms(946'684'800'000);  // 2000-01-01
  Instant latest = from_epoch_ms(4'102'444'800'000);  // 2100-01-01
};

namespace detail {

inline const json* find_field(const json& raw, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = raw.find(n);
    if (it != raw.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

inline Instant parse_timestamp_field(const json& v, std::string_view field) {
  std::optional<Instant> t;
  if (v.is_number_integer()) t = from_epoch_ms(v.get<std::int64_t>());
  else if (v.is_string()) t = parse_instant(v.get_ref<const std::string&>());
  if (!t) throw Error(ErrorKind::UnparseableTimestamp, std::string(field) + ": " + v.dump());
  return *t;
}

inline std::string string_field(const json& v, std::string_view field) {
  if (!v.is_string()) throw Error(ErrorKind::InvalidRecord, std::string(field) + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Builds an Event from a record map. "vehicle" and "ts" are accepted as
// short aliases of vehicle_id and timestamp.
inline Event validate_event(const json& raw, const RetentionPolicy& retention = {}) {
  if (!raw.is_object()) throw Error(ErrorKind::InvalidRecord, "event record must be an object");
  const json* vehicle = detail::find_field(raw, {"vehicle_id", "vehicle"});
  const json* ts = detail::find_field(raw, {"timestamp", "ts"});
  const json* code = detail::find_field(raw, {"code"});
  if (!vehicle) throw Error(ErrorKind::MissingField, "vehicle_id");
  if (!ts) throw Error(ErrorKind::MissingField, "timestamp");
  if (!code) throw Error(ErrorKind::MissingField, "code");

  Event e;
  e.vehicle_id = detail::string_field(*vehicle, "vehicle_id");
  if (e.vehicle_id.empty()) throw Error(ErrorKind::InvalidRecord, "vehicle_id is empty");
  e.timestamp = detail::parse_timestamp_field(*ts, "timestamp");
  if (e.timestamp < retention.earliest || e.timestamp >= retention.latest)
    throw Error(ErrorKind::OutOfRetention, format_instant(e.timestamp));
  e.code = detail::string_field(*code, "code");
  if (e.code.empty()) throw Error(ErrorKind::EmptyCode, "code is empty");

  if (const json* ctx = detail::find_field(raw, {"context"})) {
    if (!ctx->is_object()) throw Error(ErrorKind::InvalidRecord, "context must be a flat object");
    for (auto& [k, v] : ctx->items())
      e.context.emplace(k, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return e;
}

inline json to_json(const Event& e) {
  json j = {{"vehicle_id", e.vehicle_id}, {"timestamp", format_instant(e.timestamp)}, {"code", e.code}};
  if (!e.context.empty()) j["context"] = e.context;
  return j;
}

inline Incident validate_incident(const json& raw) {
  if (!raw.is_object()) throw Error(ErrorKind::InvalidRecord, "incident record must be an object");
  const json* id = detail::find_field(raw, {"id"});
  const json* ts = detail::find_field(raw, {"timestamp", "ts"});
  const json* comp = detail::find_field(raw, {"composition"});
  if (!id) throw Error(ErrorKind::MissingField, "id");
  if (!ts) throw Error(ErrorKind::MissingField, "timestamp");
  if (!comp) throw Error(ErrorKind::MissingField, "composition");

  Incident inc;
  inc.id = detail::string_field(*id, "id");
  if (inc.id.empty()) throw Error(ErrorKind::InvalidRecord, "id is empty");
  inc.timestamp = detail::parse_timestamp_field(*ts, "timestamp");
  if (!comp->is_array() || comp->empty())
    throw Error(ErrorKind::InvalidRecord, "composition must be a non-empty array");
  for (const auto& v : *comp) inc.composition.push_back(detail::string_field(v, "composition[]"));
  if (const json* fleet = detail::find_field(raw, {"fleet"})) inc.fleet = detail::string_field(*fleet, "fleet");
  if (const json* label = detail::find_field(raw, {"label"}))
    inc.label = parse_class(detail::string_field(*label, "label"));
  if (const json* src = detail::find_field(raw, {"label_source"}))
    inc.label_source = parse_label_source(detail::string_field(*src, "label_source"));
  return inc;
}

inline json to_json(const Incident& inc) {
  json j = {{"id", inc.id},
            {"timestamp", format_instant(inc.timestamp)},
            {"composition", inc.composition},
            {"fleet", inc.fleet}};
  if (inc.label) {
    j["label"] = std::string(to_string(*inc.label));
    j["label_source"] = std::string(to_string(inc.label_source));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Slicing

inline bool in_window(const Event& e, const Incident& incident, WindowSpec window) {
  return e.timestamp <= incident.timestamp && e.timestamp > incident.timestamp - window.length();
}

// Events of the composition's vehicles in (t - w, t], sorted by event_before.
inline std::vector<Event> slice_trace(std::span<const Event> events, const Incident& incident,
                                      WindowSpec window) {
  std::vector<Event> out;
  for (const Event& e : events) {
    if (!in_window(e, incident, window)) continue;
    if (std::find(incident.composition.begin(), incident.composition.end(), e.vehicle_id) ==
        incident.composition.end())
      continue;
    out.push_back(e);
  }
  std::sort(out.begin(), out.end(), event_before);
  return out;
}

// Per-vehicle time index over an event stream; slice() returns the same
// result as slice_trace() without scanning the whole stream.
class TraceIndex {
 public:
  explicit TraceIndex(std::span<const Event> events) {
    for (const Event& e : events) by_vehicle_[e.vehicle_id].push_back(e);
    for (auto& [_, list] : by_vehicle_) std::sort(list.begin(), list.end(), event_before);
  }

  std::vector<Event> slice(const Incident& incident, WindowSpec window) const {
    std::vector<Event> out;
    const Instant lo = incident.timestamp - window.length();
    for (const auto& vehicle : unique_vehicles(incident.composition)) {
      auto it = by_vehicle_.find(vehicle);
      if (it == by_vehicle_.end()) continue;
      const auto& list = it->second;
      auto first = std::partition_point(list.begin(), list.end(),
                                        [&](const Event& e) { return e.timestamp <= lo; });
      auto last = std::partition_point(first, list.end(),
                                       [&](const Event& e) { return e.timestamp <= incident.timestamp; });
      out.insert(out.end(), first, last);
    }
    std::sort(out.begin(), out.end(), event_before);
    return out;
  }

  IncidentTrace trace(const Incident& incident, WindowSpec window = WindowSpec{kMaxLookbackMinutes}) const {
    return IncidentTrace{incident, slice(incident, window)};
  }

 private:
  static std::vector<std::string> unique_vehicles(const std::vector<std::string>& composition) {
    std::vector<std::string> v = composition;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  std::unordered_map<std::string, std::vector<Event>> by_vehicle_;
};

// Trace events with t - far < timestamp <= t - near, in trace order. The
// trace is sorted, so this is a contiguous range.
inline std::span<const Event> lookback_band(const IncidentTrace& trace, minutes near, minutes far) {
  const Instant upper = trace.incident.timestamp - near;
  const Instant lower = trace.incident.timestamp - far;
  auto first = std::partition_point(trace.events.begin(), trace.events.end(),
                                    [&](const Event& e) { return e.timestamp <= lower; });
  auto last = std::partition_point(first, trace.events.end(),
                                   [&](const Event& e) { return e.timestamp <= upper; });
  return {first, last};
}

// Events inside (t - w, t].
inline std::span<const Event> window_suffix(const IncidentTrace& trace, WindowSpec window) {
  return lookback_band(trace, minutes{0}, minutes{window.length_minutes()});
}

inline SubsystemClass label_of(const IncidentTrace& trace) {
  if (!trace.incident.label)
    throw Error(ErrorKind::UnlabeledTrace, "incident " + trace.incident.id + " has no label");
  return *trace.incident.label;
}

}  // namespace railcause
