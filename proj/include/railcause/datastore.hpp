#pragma once

// Persistence: line-delimited record files plus a per-fleet model registry.
//
//   <root>/events/<fleet>/<YYYY-MM-DD>.jsonl
//   <root>/incidents/<fleet>.jsonl
//   <root>/feedback/<fleet>.jsonl
//   <root>/suggestions/<fleet>.jsonl
//   <root>/models/<fleet>/<version>/artifact.json
//   <root>/models/<fleet>/registry.json

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "railcause/artifact.hpp"
#include "railcause/core.hpp"
#include "railcause/suggestion.hpp"

namespace railcause {

namespace fs = std::filesystem;

struct FeedbackRecord {
  std::string incident_id;
  std::string fleet;
  SubsystemClass expert_label = SubsystemClass::Others;
  std::optional<SubsystemClass> technician_label;
  std::optional<Suggestion> suggestion;  // model output the expert was looking at
  std::string rationale;
  Instant recorded_at{};
  std::int64_t version = 0;  // per-fleet sequence number, assigned on write

  bool operator==(const FeedbackRecord&) const = default;
};

struct RegistryEntry {
  std::int64_t version = 0;
  std::string fleet;
  Instant created_at{};
  std::string content_hash;
  std::string config;  // ensemble label, e.g. "ensemble[5,10,15]"
  std::int64_t sample_count = 0;
  Instant first_incident{};
  Instant last_incident{};
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  double classified_fraction = 0.0;
};

// Inclusive on both ends; an absent bound is unbounded.
struct TimeRange {
  std::optional<Instant> from;
  std::optional<Instant> to;

  bool contains(Instant t) const { return (!from || t >= *from) && (!to || t <= *to); }
};

inline json to_json(const FeedbackRecord& f) {
  return {{"incident_id", f.incident_id},
          {"fleet", f.fleet},
          {"expert_label", std::string(to_string(f.expert_label))},
          {"technician_label", f.technician_label ? json(std::string(to_string(*f.technician_label))) : json(nullptr)},
          {"suggestion", f.suggestion ? to_json(*f.suggestion) : json(nullptr)},
          {"rationale", f.rationale},
          {"recorded_at", format_instant(f.recorded_at)},
          {"version", f.version}};
}

inline FeedbackRecord feedback_from_json(const json& j) {
  FeedbackRecord f;
  f.incident_id = j.at("incident_id").get<std::string>();
  f.fleet = j.value("fleet", "");
  f.expert_label = parse_class(j.at("expert_label").get<std::string>());
  if (j.contains("technician_label") && !j["technician_label"].is_null())
    f.technician_label = parse_class(j["technician_label"].get<std::string>());
  if (j.contains("suggestion") && !j["suggestion"].is_null()) f.suggestion = suggestion_from_json(j["suggestion"]);
  f.rationale = j.value("rationale", "");
  f.recorded_at = parse_instant(j.value("recorded_at", "0")).value_or(Instant{});
  f.version = j.value("version", std::int64_t{0});
  return f;
}

inline json to_json(const RegistryEntry& e) {
  return {{"version", e.version},
          {"fleet", e.fleet},
          {"created_at", format_instant(e.created_at)},
          {"content_hash", e.content_hash},
          {"config", e.config},
          {"sample_count", e.sample_count},
          {"first_incident", format_instant(e.first_incident)},
          {"last_incident", format_instant(e.last_incident)},
          {"weighted_f1", e.weighted_f1},
          {"macro_f1", e.macro_f1},
          {"classified_fraction", e.classified_fraction}};
}

inline RegistryEntry registry_entry_from_json(const json& j) {
  RegistryEntry e;
  e.version = j.at("version").get<std::int64_t>();
  e.fleet = j.at("fleet").get<std::string>();
  e.created_at = parse_instant(j.at("created_at").get<std::string>()).value_or(Instant{});
  e.content_hash = j.at("content_hash").get<std::string>();
  e.config = j.value("config", "");
  e.sample_count = j.value("sample_count", std::int64_t{0});
  e.first_incident = parse_instant(j.value("first_incident", "0")).value_or(Instant{});
  e.last_incident = parse_instant(j.value("last_incident", "0")).value_or(Instant{});
  e.weighted_f1 = j.value("weighted_f1", 0.0);
  e.macro_f1 = j.value("macro_f1", 0.0);
  e.classified_fraction = j.value("classified_fraction", 0.0);
  return e;
}

inline RegistryEntry registry_entry_of(const ModelArtifact& a) {
  RegistryEntry e;
  e.version = a.version;
  e.fleet = a.fleet;
  e.created_at = a.created_at;
  e.content_hash = content_hash(a);
  e.config = a.ensemble.config().label();
  e.sample_count = a.fingerprint.sample_count;
  e.first_incident = a.fingerprint.first_incident;
  e.last_incident = a.fingerprint.last_incident;
  e.weighted_f1 = a.eval_summary.weighted_f1;
  e.macro_f1 = a.eval_summary.macro_f1;
  e.classified_fraction = a.eval_summary.classified_fraction;
  return e;
}

// Effective label: latest expert feedback, else the incident's own label.
inline std::optional<std::pair<SubsystemClass, LabelSource>> effective_label(
    const Incident& incident, const FeedbackRecord* latest_feedback) {
  if (latest_feedback) return std::pair{latest_feedback->expert_label, LabelSource::ExpertFeedback};
  if (incident.label) return std::pair{*incident.label, incident.label_source};
  return std::nullopt;
}

class Store {
 public:
  virtual ~Store() = default;

  virtual std::size_t append_events(const std::string& fleet, std::span<const Event> batch) = 0;
  virtual std::string record_incident(const Incident& incident) = 0;
  virtual std::int64_t record_feedback(FeedbackRecord record) = 0;
  virtual void record_suggestion(const std::string& fleet, const Suggestion& suggestion) = 0;

  virtual std::vector<std::string> fleets() const = 0;
  virtual std::optional<Incident> find_incident(const std::string& id) const = 0;
  virtual std::vector<Incident> incidents(const std::string& fleet) const = 0;
  virtual std::vector<FeedbackRecord> feedback_history(const std::string& incident_id) const = 0;
  virtual std::optional<FeedbackRecord> effective_feedback(const std::string& incident_id) const = 0;
  virtual std::optional<Suggestion> latest_suggestion(const std::string& incident_id) const = 0;

  // Events of `vehicles` (all vehicles when empty) with from < ts <= to.
  virtual std::vector<Event> events_for(const std::string& fleet, std::span<const std::string> vehicles, Instant from,
                                        Instant to) const = 0;
  virtual IncidentTrace trace_for(const Incident& incident) const = 0;
  virtual std::vector<IncidentTrace> export_training_set(const std::string& fleet, const TimeRange& range = {}) const = 0;

  virtual std::int64_t save_model(ModelArtifact artifact) = 0;
  virtual ModelArtifact load_model(const std::string& fleet, std::optional<std::int64_t> version = {}) const = 0;
  virtual std::vector<RegistryEntry> list_models(const std::string& fleet) const = 0;
};

class FileStore final : public Store {
 public:
  explicit FileStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot create " + root_.string() + ": " + ec.message());
    load_records();
  }

  const fs::path& root() const noexcept { return root_; }

  std::size_t append_events(const std::string& fleet, std::span<const Event> batch) override {
    check_fleet(fleet);
    std::map<std::string, std::string> by_date;
    for (const auto& e : batch) by_date[format_date(e.timestamp)] += to_json(e).dump() + '\n';
    std::unique_lock lock(mu_);
    const auto dir = root_ / "events" / fleet;
    make_dirs(dir);
    for (const auto& [date, lines] : by_date) append_text(dir / (date + ".jsonl"), lines);
    return batch.size();
  }

  std::string record_incident(const Incident& incident) override {
    check_fleet(incident.fleet);
    std::unique_lock lock(mu_);
    if (incident_fleet_.contains(incident.id))
      throw Error(ErrorKind::DuplicateIncidentId, "incident " + incident.id + " already recorded");
    make_dirs(root_ / "incidents");
    append_text(root_ / "incidents" / (incident.fleet + ".jsonl"), to_json(incident).dump() + '\n');
    incident_fleet_[incident.id] = incident.fleet;
    incidents_[incident.fleet].push_back(incident);
    incident_pos_[incident.id] = incidents_[incident.fleet].size() - 1;
    return incident.id;
  }

  std::int64_t record_feedback(FeedbackRecord record) override {
    std::unique_lock lock(mu_);
    auto it = incident_fleet_.find(record.incident_id);
    if (it == incident_fleet_.end())
      throw Error(ErrorKind::UnknownIncident, "no incident " + record.incident_id);
    record.fleet = it->second;
    record.version = ++feedback_seq_[record.fleet];
    make_dirs(root_ / "feedback");
    append_text(root_ / "feedback" / (record.fleet + ".jsonl"), to_json(record).dump() + '\n');
    feedback_[record.incident_id].push_back(record);
    return record.version;
  }

  void record_suggestion(const std::string& fleet, const Suggestion& suggestion) override {
    check_fleet(fleet);
    std::unique_lock lock(mu_);
    make_dirs(root_ / "suggestions");
    append_text(root_ / "suggestions" / (fleet + ".jsonl"), to_json(suggestion).dump() + '\n');
    suggestions_[suggestion.incident_id] = suggestion;
  }

  std::vector<std::string> fleets() const override {
    std::shared_lock lock(mu_);
    std::set<std::string> out;
    for (const auto& [fleet, _] : incidents_) out.insert(fleet);
    for (const char* sub : {"events", "models"}) {
      std::error_code ec;
      for (const auto& d : fs::directory_iterator(root_ / sub, ec))
        if (d.is_directory()) out.insert(d.path().filename().string());
    }
    return {out.begin(), out.end()};
  }

  std::optional<Incident> find_incident(const std::string& id) const override {
    std::shared_lock lock(mu_);
    auto it = incident_fleet_.find(id);
    if (it == incident_fleet_.end()) return std::nullopt;
    return incidents_.at(it->second)[incident_pos_.at(id)];
  }

  std::vector<Incident> incidents(const std::string& fleet) const override {
    std::shared_lock lock(mu_);
    auto it = incidents_.find(fleet);
    return it == incidents_.end() ? std::vector<Incident>{} : it->second;
  }

  std::vector<FeedbackRecord> feedback_history(const std::string& incident_id) const override {
    std::shared_lock lock(mu_);
    auto it = feedback_.find(incident_id);
    return it == feedback_.end() ? std::vector<FeedbackRecord>{} : it->second;
  }

  std::optional<FeedbackRecord> effective_feedback(const std::string& incident_id) const override {
    std::shared_lock lock(mu_);
    auto it = feedback_.find(incident_id);
    if (it == feedback_.end() || it->second.empty()) return std::nullopt;
    return it->second.back();
  }

  std::optional<Suggestion> latest_suggestion(const std::string& incident_id) const override {
    std::shared_lock lock(mu_);
    auto it = suggestions_.find(incident_id);
    if (it == suggestions_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Event> events_for(const std::string& fleet, std::span<const std::string> vehicles, Instant from,
                                Instant to) const override {
    std::shared_lock lock(mu_);
    return read_events(fleet, vehicles, from, to);
  }

  IncidentTrace trace_for(const Incident& incident) const override {
    const auto events = events_for(incident.fleet, incident.composition,
                                   incident.timestamp - minutes{kMaxLookbackMinutes}, incident.timestamp);
    return IncidentTrace{incident, slice_trace(events, incident, WindowSpec{kMaxLookbackMinutes})};
  }

  std::vector<IncidentTrace> export_training_set(const std::string& fleet, const TimeRange& range = {}) const override {
    std::shared_lock lock(mu_);
    std::vector<Incident> labeled;
    if (auto it = incidents_.find(fleet); it != incidents_.end()) {
      for (const auto& inc : it->second) {
        if (!range.contains(inc.timestamp)) continue;
        const FeedbackRecord* fb = nullptr;
        if (auto f = feedback_.find(inc.id); f != feedback_.end() && !f->second.empty()) fb = &f->second.back();
        auto label = effective_label(inc, fb);
        if (!label) continue;
        Incident copy = inc;
        copy.label = label->first;
        copy.label_source = label->second;
        labeled.push_back(std::move(copy));
      }
    }
    std::sort(labeled.begin(), labeled.end(), [](const Incident& a, const Incident& b) {
      return std::tie(a.timestamp, a.id) < std::tie(b.timestamp, b.id);
    });

    // Each day file is read once, however many incidents it serves.
    std::set<std::string> dates;
    for (const auto& inc : labeled) {
      dates.insert(format_date(inc.timestamp - minutes{kMaxLookbackMinutes}));
      dates.insert(format_date(inc.timestamp));
    }
    std::vector<Event> events;
    for (const auto& date : dates) read_day(fleet, date, {}, std::nullopt, std::nullopt, events);
    TraceIndex index(events);

    std::vector<IncidentTrace> out;
    out.reserve(labeled.size());
    for (const auto& inc : labeled) out.push_back(index.trace(inc));
    return out;
  }

  std::int64_t save_model(ModelArtifact artifact) override {
    check_fleet(artifact.fleet);
    std::unique_lock lock(mu_);
    const auto dir = root_ / "models" / artifact.fleet;
    make_dirs(dir);
    auto registry = read_registry(artifact.fleet);
    std::int64_t next = 1;
    for (const auto& e : registry) next = std::max(next, e.version + 1);
    std::error_code ec;
    for (const auto& d : fs::directory_iterator(dir, ec)) {
      const auto name = d.path().filename().string();
      if (!name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; }))
        next = std::max<std::int64_t>(next, std::stoll(name) + 1);
    }
    artifact.version = next;
    if (artifact.created_at == Instant{})
      artifact.created_at = std::chrono::time_point_cast<milliseconds>(std::chrono::system_clock::now());

    // Write into a staging directory, then publish by rename.
    const auto staging = dir / (".staging-" + std::to_string(next));
    fs::remove_all(staging, ec);
    make_dirs(staging);
    write_text(staging / "artifact.json", to_json(artifact).dump());
    fs::rename(staging, dir / std::to_string(next), ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot publish model: " + ec.message());

    registry.push_back(registry_entry_of(artifact));
    json j = json::array();
    for (const auto& e : registry) j.push_back(to_json(e));
    write_atomic(dir / "registry.json", j.dump(2));
    return next;
  }

  ModelArtifact load_model(const std::string& fleet, std::optional<std::int64_t> version = {}) const override {
    std::shared_lock lock(mu_);
    const auto registry = read_registry(fleet);
    std::optional<std::int64_t> v = version;
    if (!v) {
      for (const auto& e : registry) v = std::max(v.value_or(e.version), e.version);
    } else if (std::none_of(registry.begin(), registry.end(), [&](const RegistryEntry& e) { return e.version == *v; })) {
      v.reset();
    }
    if (!v)
      throw Error(ErrorKind::VersionNotFound,
                  "fleet " + fleet + " has no model" + (version ? " version " + std::to_string(*version) : ""));
    const auto path = root_ / "models" / fleet / std::to_string(*v) / "artifact.json";
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::StorageFailure, "cannot read " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::StorageFailure, path.string() + ": " + e.what());
    }
    return artifact_from_json(j);
  }

  std::vector<RegistryEntry> list_models(const std::string& fleet) const override {
    std::shared_lock lock(mu_);
    auto r = read_registry(fleet);
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.version < b.version; });
    return r;
  }

 private:
  static void check_fleet(const std::string& fleet) {
    if (fleet.empty()) throw Error(ErrorKind::InvalidRecord, "fleet is empty");
    if (fleet.find_first_of("/\\") != std::string::npos || fleet == "." || fleet == "..")
      throw Error(ErrorKind::InvalidRecord, "fleet '" + fleet + "' is not a valid partition name");
  }

  static void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());
  }

  static void append_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::StorageFailure, "cannot append to " + path.string());
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::StorageFailure, "cannot write " + path.string());
  }

  static void write_atomic(const fs::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    write_text(tmp, text);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "cannot publish " + path.string() + ": " + ec.message());
  }

  template <class F>
  static void for_each_line(const fs::path& path, F&& f) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        f(json::parse(line));
      } catch (const json::exception& e) {
        throw Error(ErrorKind::StorageFailure, path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  void load_records() {
    std::error_code ec;
    for (const auto& d : fs::directory_iterator(root_ / "incidents", ec)) {
      if (d.path().extension() != ".jsonl") continue;
      const auto fleet = d.path().stem().string();
      for_each_line(d.path(), [&](const json& j) {
        auto inc = validate_incident(j);
        inc.fleet = fleet;
        incident_fleet_[inc.id] = fleet;
        incidents_[fleet].push_back(std::move(inc));
        incident_pos_[incidents_[fleet].back().id] = incidents_[fleet].size() - 1;
      });
    }
    for (const auto& d : fs::directory_iterator(root_ / "feedback", ec)) {
      if (d.path().extension() != ".jsonl") continue;
      const auto fleet = d.path().stem().string();
      for_each_line(d.path(), [&](const json& j) {
        auto f = feedback_from_json(j);
        feedback_seq_[fleet] = std::max(feedback_seq_[fleet], f.version);
        feedback_[f.incident_id].push_back(std::move(f));
      });
    }
    for (const auto& d : fs::directory_iterator(root_ / "suggestions", ec)) {
      if (d.path().extension() != ".jsonl") continue;
      for_each_line(d.path(), [&](const json& j) {
        auto s = suggestion_from_json(j);
        suggestions_[s.incident_id] = std::move(s);
      });
    }
  }

  void read_day(const std::string& fleet, const std::string& date, std::span<const std::string> vehicles,
                std::optional<Instant> from, std::optional<Instant> to, std::vector<Event>& out) const {
    const auto path = root_ / "events" / fleet / (date + ".jsonl");
    for_each_line(path, [&](const json& j) {
      Event e = validate_event(j);
      if (from && e.timestamp <= *from) return;
      if (to && e.timestamp > *to) return;
      if (!vehicles.empty() && std::find(vehicles.begin(), vehicles.end(), e.vehicle_id) == vehicles.end()) return;
      out.push_back(std::move(e));
    });
  }

  std::vector<Event> read_events(const std::string& fleet, std::span<const std::string> vehicles, Instant from,
                                 Instant to) const {
    std::vector<Event> out;
    if (to < from) return out;
    for (auto day = std::chrono::floor<std::chrono::days>(from); day <= std::chrono::floor<std::chrono::days>(to);
         day += std::chrono::days{1})
      read_day(fleet, format_date(Instant{day}), vehicles, from, to, out);
    return out;
  }

  std::vector<RegistryEntry> read_registry(const std::string& fleet) const {
    std::vector<RegistryEntry> out;
    const auto path = root_ / "models" / fleet / "registry.json";
    std::ifstream in(path);
    if (!in) return out;
    try {
      for (const auto& e : json::parse(in)) out.push_back(registry_entry_from_json(e));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::StorageFailure, path.string() + ": " + e.what());
    }
    return out;
  }

  fs::path root_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<Incident>> incidents_;
  std::map<std::string, std::string> incident_fleet_;
  std::map<std::string, std::size_t> incident_pos_;
  std::map<std::string, std::vector<FeedbackRecord>> feedback_;
  std::map<std::string, std::int64_t> feedback_seq_;
  std::map<std::string, Suggestion> suggestions_;
};

}  // namespace railcause
