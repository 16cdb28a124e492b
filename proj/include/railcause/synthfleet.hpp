#pragma once

// Deterministic synthetic fleet: background noise events on every vehicle,
// incidents with imbalanced subsystem classes, and planted ordered event
// signatures that serve as ground truth for every pipeline stage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "railcause/core.hpp"

namespace railcause::synthfleet {

struct SignatureSpec {
  std::vector<std::string> codes;
  int placement_minutes = 5;  // codes land in (t - placement, t]
  double emission_probability = 0.9;

  bool operator==(const SignatureSpec&) const = default;
};

struct FleetSpec {
  std::uint64_t seed = 42;
  std::string fleet = "SYN";
  std::size_t n_vehicles = 20;
  int duration_days = 540;
  std::size_t n_incidents = 900;
  double events_per_vehicle_per_day = 15.0;  // background rate before bursts
  std::size_t noise_codes = 60;
  PerClass<double> class_distribution{};
  PerClass<std::vector<SignatureSpec>> signatures{};
  double burst_rate = 0.3;  // probability that an emitted code repeats in a burst
  int burst_max = 200;      // burst lengths are drawn from [2, burst_max] with P(L) ~ 1/L^2
  int composition_min = 1;
  int composition_max = 3;
  // Signatures of another class emitted far from the incident: noise whose
  // harm grows with lookback.
  double decoy_rate = 0.0;
  int decoy_min_minutes = 30;
  int decoy_max_minutes = 240;
  Instant start = from_epoch_ms(1'672'531'200'000);  // 2023-01-01

  static FleetSpec desk_default();
  static FleetSpec lookback_noise();
  static FleetSpec confusable();

  std::vector<std::string> noise_vocabulary() const {
    std::vector<std::string> out;
    char buf[32];
    for (std::size_t i = 0; i < noise_codes; ++i) {
      std::snprintf(buf, sizeof buf, "INFO-%04zu", i + 1);
      out.emplace_back(buf);
    }
    return out;
  }

  std::vector<std::string> signal_vocabulary() const {
    std::vector<std::string> out;
    for (const auto& per_class : signatures)
      for (const auto& s : per_class) out.insert(out.end(), s.codes.begin(), s.codes.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidSpec, m); };
    if (n_vehicles == 0) fail("n_vehicles must be positive");
    if (duration_days <= 0) fail("duration_days must be positive");
    if (events_per_vehicle_per_day < 0) fail("events_per_vehicle_per_day must be >= 0");
    if (burst_rate < 0 || burst_rate > 1) fail("burst_rate must be in [0,1]");
    if (burst_max < 2) fail("burst_max must be >= 2");
    if (composition_min < 1 || composition_max < composition_min ||
        static_cast<std::size_t>(composition_max) > n_vehicles)
      fail("composition bounds must satisfy 1 <= min <= max <= n_vehicles");
    if (decoy_rate < 0 || decoy_rate > 1) fail("decoy_rate must be in [0,1]");
    if (decoy_min_minutes < 0 || decoy_max_minutes > kMaxLookbackMinutes || decoy_min_minutes + 5 >= decoy_max_minutes)
      fail("decoy window must satisfy 0 <= min, min + 5 < max <= 240");
    double sum = 0;
    for (auto p : class_distribution) {
      if (p < 0) fail("class_distribution entries must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("class_distribution must sum to 1");
    const auto noise = noise_vocabulary();
    for (std::size_t j = 0; j < kClassCount; ++j) {
      if (signatures[j].size() > 3) fail(std::string(kClassNames[j]) + " has more than 3 signatures");
      for (const auto& s : signatures[j]) {
        if (s.codes.size() < 2 || s.codes.size() > 5) fail("signature length must be in [2,5]");
        if (s.placement_minutes <= 0 || s.placement_minutes > kMaxLookbackMinutes)
          fail("placement window must be in (0, 240] minutes");
        if (s.emission_probability < 0 || s.emission_probability > 1) fail("emission probability outside [0,1]");
        for (std::size_t i = 0; i < s.codes.size(); ++i) {
          if (s.codes[i].empty()) fail("empty signature code");
          if (std::binary_search(noise.begin(), noise.end(), s.codes[i]))
            fail("signature code " + s.codes[i] + " collides with a noise code");
          if (i > 0 && s.codes[i] == s.codes[i - 1]) fail("signature has adjacent repeated codes");
        }
      }
    }
  }

  bool operator==(const FleetSpec&) const = default;
};

// Imbalanced default: the most common classes take most incidents, a few are
// rare (Traction ~2%).
inline PerClass<double> default_class_distribution() {
  return {0.22, 0.16, 0.13, 0.12, 0.09, 0.07, 0.06, 0.04, 0.04, 0.02, 0.03, 0.02};
}

inline FleetSpec FleetSpec::desk_default() {
  FleetSpec spec;
  spec.class_distribution = default_class_distribution();
  static constexpr int kPlacements[] = {5, 10, 15};
  for (std::size_t j = 0; j < kClassCount; ++j) {
    const double share = spec.class_distribution[j];
    const std::size_t count = share >= 0.10 ? 3 : share >= 0.05 ? 2 : 1;
    for (std::size_t s = 0; s < count; ++s) {
      SignatureSpec sig;
      const std::size_t length = 2 + (j + s) % 4;
      for (std::size_t i = 0; i < length; ++i)
        sig.codes.push_back("SIG-" + std::string(kClassNames[j]) + "-" + std::to_string(s + 1) +
                            static_cast<char>('a' + i));
      sig.placement_minutes = kPlacements[(j + s) % 3];
      sig.emission_probability = 0.9;
      spec.signatures[j].push_back(std::move(sig));
    }
  }
  return spec;
}

inline FleetSpec FleetSpec::lookback_noise() {
  FleetSpec spec = desk_default();
  spec.decoy_rate = 0.2;
  spec.decoy_min_minutes = 20;
  spec.decoy_max_minutes = 240;
  return spec;
}

// Traction's first signature starts with Cabling's first signature.
inline FleetSpec FleetSpec::confusable() {
  FleetSpec spec = desk_default();
  auto& cabling = spec.signatures[index_of(SubsystemClass::Cabling)].front();
  auto& traction = spec.signatures[index_of(SubsystemClass::Traction)].front();
  std::vector<std::string> codes(cabling.codes.begin(), cabling.codes.begin() + 2);
  codes.push_back("SIG-Traction-1x");
  traction.codes = codes;
  return spec;
}

// ---------------------------------------------------------------------------

struct PlantedSignature {
  SubsystemClass cls;
  std::size_t scenario = 0;
  std::vector<std::string> codes;
  std::string vehicle_id;

  bool operator==(const PlantedSignature&) const = default;
};

struct IncidentTruth {
  std::string incident_id;
  SubsystemClass cls;
  std::optional<PlantedSignature> signature;  // absent when emission failed or the class has none
  std::optional<PlantedSignature> decoy;

  bool operator==(const IncidentTruth&) const = default;
};

struct GroundTruth {
  PerClass<std::vector<SignatureSpec>> signatures;
  std::vector<std::string> signal_codes;
  std::vector<std::string> noise_codes;
  std::vector<IncidentTruth> incidents;

  bool operator==(const GroundTruth&) const = default;
};

struct GeneratedFleet {
  std::vector<Event> events;  // sorted by event_before
  std::vector<Incident> incidents;  // sorted by timestamp
  GroundTruth truth;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per (vehicle, day).
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t vehicle, std::uint64_t day) {
  return splitmix64(splitmix64(master ^ 0x6E6F697365ULL) ^ splitmix64((vehicle << 32) | day));
}

inline std::discrete_distribution<int> burst_length_distribution(int burst_max) {
  std::vector<double> w(static_cast<std::size_t>(burst_max + 1), 0.0);
  for (int l = 2; l <= burst_max; ++l) w[static_cast<std::size_t>(l)] = 1.0 / (static_cast<double>(l) * l);
  return std::discrete_distribution<int>(w.begin(), w.end());
}

inline std::string vehicle_name(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "V%03zu", v + 1);
  return buf;
}

}  // namespace detail

inline GeneratedFleet generate(const FleetSpec& spec) {
  spec.validate();
  GeneratedFleet out;
  out.truth.signatures = spec.signatures;
  out.truth.signal_codes = spec.signal_vocabulary();
  out.truth.noise_codes = spec.noise_vocabulary();
  const auto& noise = out.truth.noise_codes;

  std::vector<std::string> vehicles;
  for (std::size_t v = 0; v < spec.n_vehicles; ++v) vehicles.push_back(detail::vehicle_name(v));

  auto burst_len = detail::burst_length_distribution(spec.burst_max);
  const std::int64_t day_ms = 86'400'000;
  const std::int64_t begin = to_epoch_ms(spec.start);
  const std::int64_t end = begin + spec.duration_days * day_ms;

  // Incidents and their planted signatures come from the master stream.
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::int64_t> times(spec.n_incidents);
  {
    std::uniform_int_distribution<std::int64_t> when(begin + 4 * 3'600'000, end - 1);
    for (auto& t : times) t = when(rng);
    std::sort(times.begin(), times.end());
  }
  std::discrete_distribution<int> class_dist(spec.class_distribution.begin(), spec.class_distribution.end());
  std::uniform_int_distribution<int> comp_size(spec.composition_min, spec.composition_max);

  auto emit_with_bursts = [&](const std::vector<std::string>& codes, std::vector<std::int64_t> at,
                              const std::string& vehicle, std::int64_t upper) {
    for (std::size_t i = 0; i < codes.size(); ++i) {
      out.events.push_back({vehicle, from_epoch_ms(at[i]), codes[i], {}});
      if (unit(rng) >= spec.burst_rate) continue;
      // Repeats stay strictly before the next code of the signature.
      const std::int64_t hi = (i + 1 < codes.size() ? at[i + 1] : upper + 1) - 1;
      std::uniform_int_distribution<std::int64_t> rep(at[i], std::max(at[i], hi));
      const int extra = burst_len(rng) - 1;
      for (int r = 0; r < extra; ++r) out.events.push_back({vehicle, from_epoch_ms(rep(rng)), codes[i], {}});
    }
  };

  auto distinct_offsets = [&](std::size_t k, std::int64_t lo_ms, std::int64_t hi_ms) {
    // k distinct offsets in [lo_ms, hi_ms), sorted descending (earliest event first)
    std::uniform_int_distribution<std::int64_t> d(lo_ms, hi_ms - 1);
    std::vector<std::int64_t> off;
    while (off.size() < k) {
      auto o = d(rng);
      if (std::find(off.begin(), off.end(), o) == off.end()) off.push_back(o);
    }
    std::sort(off.rbegin(), off.rend());
    return off;
  };

  std::vector<std::size_t> classes_with_signatures;
  for (std::size_t j = 0; j < kClassCount; ++j)
    if (!spec.signatures[j].empty()) classes_with_signatures.push_back(j);

  for (std::size_t i = 0; i < spec.n_incidents; ++i) {
    Incident inc;
    char id[32];
    std::snprintf(id, sizeof id, "INC-%06zu", i + 1);
    inc.id = id;
    inc.timestamp = from_epoch_ms(times[i]);
    inc.fleet = spec.fleet;
    const auto cls = class_at(static_cast<std::size_t>(class_dist(rng)));
    inc.label = cls;
    inc.label_source = LabelSource::SyntheticGroundTruth;
    std::vector<std::size_t> pool(spec.n_vehicles);
    for (std::size_t v = 0; v < pool.size(); ++v) pool[v] = v;
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto size = static_cast<std::size_t>(comp_size(rng));
    for (std::size_t v = 0; v < size; ++v) inc.composition.push_back(vehicles[pool[v]]);

    IncidentTruth truth{inc.id, cls, std::nullopt, std::nullopt};
    const auto& sigs = spec.signatures[index_of(cls)];
    if (!sigs.empty()) {
      const auto s = std::uniform_int_distribution<std::size_t>(0, sigs.size() - 1)(rng);
      if (unit(rng) < sigs[s].emission_probability) {
        const auto off = distinct_offsets(sigs[s].codes.size(), 0, sigs[s].placement_minutes * 60'000LL);
        std::vector<std::int64_t> at;
        for (auto o : off) at.push_back(times[i] - o);
        emit_with_bursts(sigs[s].codes, at, inc.composition.front(), times[i]);
        truth.signature = PlantedSignature{cls, s, sigs[s].codes, inc.composition.front()};
      }
    }

    if (spec.decoy_rate > 0 && classes_with_signatures.size() > 1 && unit(rng) < spec.decoy_rate) {
      std::size_t other;
      do {
        other = classes_with_signatures[std::uniform_int_distribution<std::size_t>(
            0, classes_with_signatures.size() - 1)(rng)];
      } while (other == index_of(cls));
      const auto& osigs = spec.signatures[other];
      const auto s = std::uniform_int_distribution<std::size_t>(0, osigs.size() - 1)(rng);
      // Whole decoy within a 5-minute span somewhere in [min, max) minutes back.
      const std::int64_t start_off = std::uniform_int_distribution<std::int64_t>(
          (spec.decoy_min_minutes + 5) * 60'000LL, spec.decoy_max_minutes * 60'000LL - 1)(rng);
      const auto off = distinct_offsets(osigs[s].codes.size(), start_off - 5 * 60'000LL, start_off);
      const auto& vehicle = inc.composition[std::uniform_int_distribution<std::size_t>(0, size - 1)(rng)];
      for (std::size_t c = 0; c < off.size(); ++c)
        out.events.push_back({vehicle, from_epoch_ms(times[i] - off[c]), osigs[s].codes[c], {}});
      truth.decoy = PlantedSignature{class_at(other), s, osigs[s].codes, vehicle};
    }

    out.incidents.push_back(std::move(inc));
    out.truth.incidents.push_back(std::move(truth));
  }

  // Background noise, one stream per (vehicle, day).
  if (!noise.empty() && spec.events_per_vehicle_per_day > 0) {
    for (std::size_t v = 0; v < spec.n_vehicles; ++v)
      for (int d = 0; d < spec.duration_days; ++d) {
        std::mt19937_64 local(detail::stream_seed(spec.seed, v, static_cast<std::uint64_t>(d)));
        std::poisson_distribution<int> count(spec.events_per_vehicle_per_day);
        std::uniform_int_distribution<std::int64_t> when(0, day_ms - 1);
        std::uniform_int_distribution<std::size_t> which(0, noise.size() - 1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int n = count(local);
        const std::int64_t day_start = begin + d * day_ms;
        for (int e = 0; e < n; ++e) {
          const std::int64_t t = day_start + when(local);
          const auto& code = noise[which(local)];
          out.events.push_back({vehicles[v], from_epoch_ms(t), code, {}});
          if (u(local) < spec.burst_rate) {
            const int extra = burst_len(local) - 1;
            std::uniform_int_distribution<std::int64_t> rep(t, t + 120'000);
            for (int r = 0; r < extra; ++r) out.events.push_back({vehicles[v], from_epoch_ms(rep(local)), code, {}});
          }
        }
      }
  }

  std::sort(out.events.begin(), out.events.end(), event_before);
  return out;
}

// Distinct planted scenarios actually emitted at least once.
inline std::vector<PlantedSignature> planted_scenarios(const GroundTruth& truth) {
  std::vector<PlantedSignature> out;
  for (const auto& inc : truth.incidents) {
    if (!inc.signature) continue;
    const auto& s = *inc.signature;
    bool seen = std::any_of(out.begin(), out.end(),
                            [&](const PlantedSignature& p) { return p.cls == s.cls && p.scenario == s.scenario; });
    if (!seen) out.push_back({s.cls, s.scenario, s.codes, ""});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const SignatureSpec& s) {
  return {{"codes", s.codes}, {"placement_minutes", s.placement_minutes},
          {"emission_probability", s.emission_probability}};
}

inline SignatureSpec signature_from_json(const json& j) {
  SignatureSpec s;
  s.codes = j.at("codes").get<std::vector<std::string>>();
  s.placement_minutes = j.value("placement_minutes", 5);
  s.emission_probability = j.value("emission_probability", 0.9);
  return s;
}

inline json signatures_to_json(const PerClass<std::vector<SignatureSpec>>& sigs) {
  json out = json::object();
  for (std::size_t j = 0; j < kClassCount; ++j) {
    json list = json::array();
    for (const auto& s : sigs[j]) list.push_back(to_json(s));
    out[std::string(kClassNames[j])] = list;
  }
  return out;
}

inline json to_json(const FleetSpec& s) {
  json dist = json::object();
  for (std::size_t j = 0; j < kClassCount; ++j) dist[std::string(kClassNames[j])] = s.class_distribution[j];
  return {{"seed", s.seed},
          {"fleet", s.fleet},
          {"n_vehicles", s.n_vehicles},
          {"duration_days", s.duration_days},
          {"n_incidents", s.n_incidents},
          {"events_per_vehicle_per_day", s.events_per_vehicle_per_day},
          {"noise_codes", s.noise_codes},
          {"class_distribution", dist},
          {"signatures", signatures_to_json(s.signatures)},
          {"burst_rate", s.burst_rate},
          {"burst_max", s.burst_max},
          {"composition_min", s.composition_min},
          {"composition_max", s.composition_max},
          {"decoy_rate", s.decoy_rate},
          {"decoy_min_minutes", s.decoy_min_minutes},
          {"decoy_max_minutes", s.decoy_max_minutes},
          {"start", format_instant(s.start)}};
}

// Missing fields keep their desk_default() values, so a spec file only needs
// the fields it changes. "preset" selects the base: default, lookback_noise,
// confusable.
inline FleetSpec fleet_spec_from_json(const json& j) {
  const std::string preset = j.value("preset", "default");
  FleetSpec s = preset == "lookback_noise" ? FleetSpec::lookback_noise()
                : preset == "confusable"   ? FleetSpec::confusable()
                : preset == "default"      ? FleetSpec::desk_default()
                                           : throw Error(ErrorKind::InvalidSpec, "unknown preset " + preset);
  try {
    s.seed = j.value("seed", s.seed);
    s.fleet = j.value("fleet", s.fleet);
    s.n_vehicles = j.value("n_vehicles", s.n_vehicles);
    s.duration_days = j.value("duration_days", s.duration_days);
    s.n_incidents = j.value("n_incidents", s.n_incidents);
    s.events_per_vehicle_per_day = j.value("events_per_vehicle_per_day", s.events_per_vehicle_per_day);
    s.noise_codes = j.value("noise_codes", s.noise_codes);
    if (j.contains("class_distribution")) {
      s.class_distribution.fill(0.0);
      for (auto& [name, v] : j.at("class_distribution").items())
        s.class_distribution[index_of(parse_class(name))] = v.get<double>();
    }
    if (j.contains("signatures")) {
      for (auto& list : s.signatures) list.clear();
      for (auto& [name, list] : j.at("signatures").items())
        for (const auto& sj : list) s.signatures[index_of(parse_class(name))].push_back(signature_from_json(sj));
    }
    if (j.contains("emission_probability"))
      for (auto& list : s.signatures)
        for (auto& sig : list) sig.emission_probability = j.at("emission_probability").get<double>();
    s.burst_rate = j.value("burst_rate", s.burst_rate);
    s.burst_max = j.value("burst_max", s.burst_max);
    s.composition_min = j.value("composition_min", s.composition_min);
    s.composition_max = j.value("composition_max", s.composition_max);
    s.decoy_rate = j.value("decoy_rate", s.decoy_rate);
    s.decoy_min_minutes = j.value("decoy_min_minutes", s.decoy_min_minutes);
    s.decoy_max_minutes = j.value("decoy_max_minutes", s.decoy_max_minutes);
    if (j.contains("start")) {
      auto t = parse_instant(j.at("start").get<std::string>());
      if (!t) throw Error(ErrorKind::InvalidSpec, "unparseable start");
      s.start = *t;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

inline json to_json(const PlantedSignature& p) {
  return {{"class", std::string(to_string(p.cls))}, {"scenario", p.scenario}, {"codes", p.codes},
          {"vehicle_id", p.vehicle_id}};
}

inline json to_json(const GroundTruth& g) {
  json incidents = json::array();
  for (const auto& i : g.incidents) {
    json r = {{"incident_id", i.incident_id}, {"class", std::string(to_string(i.cls))}};
    r["signature"] = i.signature ? to_json(*i.signature) : json(nullptr);
    r["decoy"] = i.decoy ? to_json(*i.decoy) : json(nullptr);
    incidents.push_back(std::move(r));
  }
  return {{"signatures", signatures_to_json(g.signatures)},
          {"signal_codes", g.signal_codes},
          {"noise_codes", g.noise_codes},
          {"incidents", incidents}};
}

// events.jsonl, incidents.jsonl, ground_truth.json, spec.json
inline void write_fleet(const GeneratedFleet& fleet, const FleetSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::StorageFailure, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("events.jsonl");
    for (const auto& e : fleet.events) f << to_json(e).dump() << '\n';
  }
  {
    auto f = open("incidents.jsonl");
    for (const auto& i : fleet.incidents) f << to_json(i).dump() << '\n';
  }
  open("ground_truth.json") << to_json(fleet.truth).dump(1) << '\n';
  open("spec.json") << to_json(spec).dump(2) << '\n';
}

}  // namespace railcause::synthfleet
