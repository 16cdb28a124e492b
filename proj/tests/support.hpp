#pragma once

// Shared fixtures for the test binaries.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "railcause/core.hpp"
#include "railcause/synthfleet.hpp"

namespace testsupport {

using namespace railcause;
using std::chrono::seconds;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "railcause") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline Instant t0() { return from_epoch_ms(1'700'000'000'000); }

inline Instant at_seconds(std::int64_t s) { return t0() + seconds{s}; }

inline Event ev(const std::string& vehicle, Instant ts, const std::string& code) { return Event{vehicle, ts, code, {}}; }

inline Incident incident(const std::string& id, Instant ts, std::vector<std::string> composition,
                         std::optional<SubsystemClass> label = std::nullopt) {
  Incident inc;
  inc.id = id;
  inc.timestamp = ts;
  inc.composition = std::move(composition);
  inc.fleet = "T";
  inc.label = label;
  return inc;
}

// A labeled trace whose codes sit `minutes_before` the incident, one second apart.
inline IncidentTrace trace_of(const std::string& id, SubsystemClass label, const std::vector<std::string>& codes,
                              int minutes_before = 1) {
  IncidentTrace t;
  t.incident = incident(id, t0(), {"V1"}, label);
  Instant ts = t0() - minutes{minutes_before};
  for (const auto& c : codes) {
    t.events.push_back(ev("V1", ts, c));
    ts += seconds{1};
  }
  return t;
}

// A small planted fleet, quick enough for unit tests.
inline synthfleet::FleetSpec small_spec(std::uint64_t seed = 7) {
  auto s = synthfleet::FleetSpec::desk_default();
  s.seed = seed;
  s.n_vehicles = 8;
  s.duration_days = 120;
  s.n_incidents = 240;
  return s;
}

inline std::vector<IncidentTrace> traces_of(const synthfleet::GeneratedFleet& fleet) {
  TraceIndex index(fleet.events);
  std::vector<IncidentTrace> out;
  for (const auto& inc : fleet.incidents) out.push_back(index.trace(inc));
  return out;
}

}  // namespace testsupport
