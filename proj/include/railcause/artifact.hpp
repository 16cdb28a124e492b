#pragma once

// Versioned, serialized trained ensemble.

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "railcause/cascade.hpp"
#include "railcause/evalkit.hpp"
#include "railcause/feateng.hpp"

namespace railcause {

inline constexpr int kArtifactSchemaVersion = 1;

// FNV-1a, 64 bit. Content fingerprints only.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001B3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::int64_t v) { return update(std::string_view(reinterpret_cast<const char*>(&v), sizeof v)); }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

struct TrainingFingerprint {
  Instant first_incident{};
  Instant last_incident{};
  std::int64_t sample_count = 0;
  std::string content_hash;
  std::vector<std::pair<std::string, SubsystemClass>> incidents;  // id and effective label

  bool operator==(const TrainingFingerprint&) const = default;
};

inline TrainingFingerprint fingerprint_of(std::span<const IncidentTrace> dataset) {
  TrainingFingerprint fp;
  Fnv1a h;
  for (const auto& t : dataset) {
    const auto label = label_of(t);
    h.update(t.incident.id).update(std::string_view("\x1f")).update(to_string(label));
    h.update(to_epoch_ms(t.incident.timestamp));
    for (const auto& e : t.events) {
      h.update(to_epoch_ms(e.timestamp)).update(e.vehicle_id).update(std::string_view("\x1f")).update(e.code);
      h.update(std::string_view("\x1e"));
    }
    fp.incidents.emplace_back(t.incident.id, label);
    if (fp.sample_count == 0 || t.incident.timestamp < fp.first_incident) fp.first_incident = t.incident.timestamp;
    if (fp.sample_count == 0 || t.incident.timestamp > fp.last_incident) fp.last_incident = t.incident.timestamp;
    ++fp.sample_count;
  }
  fp.content_hash = h.hex();
  return fp;
}

struct ModelArtifact {
  std::int64_t version = 0;
  std::string fleet;
  cascade::Ensemble ensemble;
  feateng::FeatureSelection selection;
  TrainingFingerprint fingerprint;
  Instant created_at{};
  evalkit::EvalReport eval_summary;  // out-of-fold report of the chosen configuration
  json tuning = json::object();      // threshold curve, OaT and grid reports

  double threshold() const { return selection.threshold; }
  double beta() const { return ensemble.config().beta; }

  Suggestion predict(const IncidentTrace& trace, Instant produced_at = {}) const {
    return ensemble.predict(trace, version, produced_at);
  }
};

inline json to_json(const nbayes::CountTable& t) {
  return {{"vocabulary_size", t.vocabulary_size()}, {"beta", t.beta()},
          {"priors", std::string(nbayes::to_string(t.prior_mode()))},
          {"class_counts", t.class_counts()}, {"cards", t.cards()}};
}

inline nbayes::CountTable count_table_from_json(const json& j) {
  return nbayes::CountTable::from_counts(j.at("vocabulary_size").get<std::size_t>(), j.at("beta").get<double>(),
                                         nbayes::parse_prior_mode(j.at("priors").get<std::string>()),
                                         j.at("class_counts").get<PerClass<std::int64_t>>(),
                                         j.at("cards").get<std::vector<PerClass<std::int64_t>>>());
}

inline json to_json(const TrainingFingerprint& fp) {
  json incidents = json::array();
  for (const auto& [id, label] : fp.incidents) incidents.push_back({id, std::string(to_string(label))});
  return {{"first_incident", format_instant(fp.first_incident)},
          {"last_incident", format_instant(fp.last_incident)},
          {"sample_count", fp.sample_count},
          {"content_hash", fp.content_hash},
          {"incidents", incidents}};
}

inline TrainingFingerprint fingerprint_from_json(const json& j) {
  TrainingFingerprint fp;
  fp.first_incident = parse_instant(j.at("first_incident").get<std::string>()).value();
  fp.last_incident = parse_instant(j.at("last_incident").get<std::string>()).value();
  fp.sample_count = j.at("sample_count").get<std::int64_t>();
  fp.content_hash = j.at("content_hash").get<std::string>();
  for (const auto& r : j.at("incidents"))
    fp.incidents.emplace_back(r.at(0).get<std::string>(), parse_class(r.at(1).get<std::string>()));
  return fp;
}

inline json to_json(const ModelArtifact& a) {
  json vocabulary = json::array();
  for (const auto& f : a.ensemble.vocabulary()) vocabulary.push_back(setminer::to_json(f));
  json tables = json::array();
  for (const auto& t : a.ensemble.tables()) tables.push_back(to_json(t));
  return {{"schema_version", kArtifactSchemaVersion},
          {"version", a.version},
          {"fleet", a.fleet},
          {"created_at", format_instant(a.created_at)},
          {"config", cascade::to_json(a.ensemble.config())},
          {"selection", feateng::to_json(a.selection)},
          {"vocabulary", vocabulary},
          {"tables", tables},
          {"fingerprint", to_json(a.fingerprint)},
          {"eval_summary", evalkit::to_json(a.eval_summary)},
          {"tuning", a.tuning}};
}

inline ModelArtifact artifact_from_json(const json& j) {
  try {
    const int schema = j.at("schema_version").get<int>();
    if (schema != kArtifactSchemaVersion)
      throw Error(ErrorKind::SchemaMismatch, "artifact schema " + std::to_string(schema) + " is not supported");
    ModelArtifact a;
    a.version = j.at("version").get<std::int64_t>();
    a.fleet = j.at("fleet").get<std::string>();
    a.created_at = parse_instant(j.at("created_at").get<std::string>()).value_or(Instant{});
    std::vector<setminer::EventSetFeature> vocabulary;
    for (const auto& f : j.at("vocabulary")) vocabulary.push_back(setminer::feature_from_json(f));
    std::vector<nbayes::CountTable> tables;
    for (const auto& t : j.at("tables")) tables.push_back(count_table_from_json(t));
    a.ensemble = cascade::Ensemble(cascade::ensemble_config_from_json(j.at("config")), std::move(vocabulary),
                                   std::move(tables));
    a.selection = feateng::feature_selection_from_json(j.at("selection"));
    a.fingerprint = fingerprint_from_json(j.at("fingerprint"));
    a.eval_summary = evalkit::eval_report_from_json(j.at("eval_summary"));
    a.tuning = j.value("tuning", json::object());
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, e.what());
  }
}

// Hash of everything that determines predictions and reports; excludes the
// registry version and the creation instant.
inline std::string content_hash(const ModelArtifact& a) {
  json j = to_json(a);
  j.erase("version");
  j.erase("created_at");
  return Fnv1a{}.update(j.dump()).hex();
}

}  // namespace railcause
