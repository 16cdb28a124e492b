#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "railcause/core.hpp"

namespace railcause {

struct Classification {
  SubsystemClass cls;
  std::size_t window_index = 0;  // position of the answering classifier in the cascade
  int window_minutes = 0;
  std::vector<std::uint32_t> matched_feature_ids;
  std::vector<std::vector<std::string>> matched_features;  // explanation: the event sets found
  double log_score = 0.0;

  bool operator==(const Classification&) const = default;
};

// Classified when `classification` holds a value, Unclassified otherwise.
struct Suggestion {
  std::string incident_id;
  std::optional<Classification> classification;
  std::int64_t model_version = 0;
  Instant produced_at{};

  bool classified() const noexcept { return classification.has_value(); }
  std::optional<SubsystemClass> predicted() const {
    return classification ? std::optional{classification->cls} : std::nullopt;
  }

  bool operator==(const Suggestion&) const = default;
};

inline json to_json(const Suggestion& s) {
  json j = {{"incident_id", s.incident_id},
            {"model_version", s.model_version},
            {"produced_at", format_instant(s.produced_at)}};
  if (s.classification) {
    const auto& c = *s.classification;
    j["outcome"] = "classified";
    j["class"] = std::string(to_string(c.cls));
    j["window_index"] = c.window_index;
    j["window_minutes"] = c.window_minutes;
    j["matched_feature_ids"] = c.matched_feature_ids;
    j["matched_features"] = c.matched_features;
    j["log_score"] = c.log_score;
  } else {
    j["outcome"] = "unclassified";
  }
  return j;
}

inline Suggestion suggestion_from_json(const json& j) {
  Suggestion s;
  s.incident_id = j.at("incident_id").get<std::string>();
  s.model_version = j.at("model_version").get<std::int64_t>();
  s.produced_at = parse_instant(j.at("produced_at").get<std::string>()).value_or(Instant{});
  if (j.at("outcome").get<std::string>() == "classified") {
    Classification c;
    c.cls = parse_class(j.at("class").get<std::string>());
    c.window_index = j.at("window_index").get<std::size_t>();
    c.window_minutes = j.at("window_minutes").get<int>();
    c.matched_feature_ids = j.at("matched_feature_ids").get<std::vector<std::uint32_t>>();
    c.matched_features = j.at("matched_features").get<std::vector<std::vector<std::string>>>();
    c.log_score = j.at("log_score").get<double>();
    s.classification = std::move(c);
  }
  return s;
}

}  // namespace railcause
