#pragma once

// Stratified folds, F1/coverage scoring, confusion matrices and temporal
// splits.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "railcause/core.hpp"
#include "railcause/suggestion.hpp"

namespace railcause::evalkit {

struct CVConfig {
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

// nullopt means Unclassified.
using Outcome = std::optional<SubsystemClass>;

// Classes with fewer than k samples are relabeled Others, so that every
// stratum can be spread over k folds.
inline std::vector<SubsystemClass> fold_rare_classes(std::span<const SubsystemClass> labels, std::size_t k) {
  PerClass<std::size_t> counts{};
  for (auto c : labels) ++counts[index_of(c)];
  std::vector<SubsystemClass> out(labels.begin(), labels.end());
  for (auto& c : out)
    if (counts[index_of(c)] < k) c = SubsystemClass::Others;
  // The merged bucket itself can still be short; lend it to the largest stratum.
  const auto others = static_cast<std::size_t>(std::count(out.begin(), out.end(), SubsystemClass::Others));
  if (others > 0 && others < k) {
    PerClass<std::size_t> merged{};
    for (auto c : out) ++merged[index_of(c)];
    merged[index_of(SubsystemClass::Others)] = 0;
    const auto largest = class_at(static_cast<std::size_t>(std::max_element(merged.begin(), merged.end()) - merged.begin()));
    if (merged[index_of(largest)] > 0)
      for (auto& c : out)
        if (c == SubsystemClass::Others) c = largest;
  }
  return out;
}

// Test-index partitions. Within every class the per-fold counts differ by at
// most one; classes are dealt round-robin continuing where the previous class
// stopped, so whole folds also differ by at most one.
inline std::vector<std::vector<std::size_t>> stratified_folds(std::span<const SubsystemClass> labels,
                                                              const CVConfig& cv) {
  if (cv.k < 2) throw Error(ErrorKind::InvalidConfig, "k must be >= 2");
  PerClass<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[index_of(labels[i])].push_back(i);
  for (std::size_t j = 0; j < kClassCount; ++j)
    if (!members[j].empty() && members[j].size() < cv.k)
      throw Error(ErrorKind::ClassTooSmall, std::string(kClassNames[j]) + " has " +
                                                std::to_string(members[j].size()) + " samples, fewer than k=" +
                                                std::to_string(cv.k));

  std::mt19937_64 rng(cv.seed);
  std::vector<std::vector<std::size_t>> folds(cv.k);
  std::size_t cursor = 0;
  for (auto& m : members) {
    std::shuffle(m.begin(), m.end(), rng);
    for (auto idx : m) {
      folds[cursor].push_back(idx);
      cursor = (cursor + 1) % cv.k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// Complement of one fold.
inline std::vector<std::size_t> train_indices(const std::vector<std::vector<std::size_t>>& folds, std::size_t fold,
                                              std::size_t n) {
  std::vector<bool> held(n, false);
  for (auto i : folds[fold]) held[i] = true;
  std::vector<std::size_t> out;
  out.reserve(n - folds[fold].size());
  for (std::size_t i = 0; i < n; ++i)
    if (!held[i]) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;    // classified samples whose truth is this class
  std::int64_t predicted = 0;  // classified samples predicted as this class

  bool operator==(const ClassMetrics&) const = default;
};

inline constexpr std::size_t kUnclassifiedColumn = kClassCount;

struct EvalReport {
  PerClass<ClassMetrics> per_class{};
  double weighted_f1 = 0.0;  // headline
  double macro_f1 = 0.0;
  double micro_accuracy = 0.0;
  std::int64_t total = 0;
  std::int64_t classified_count = 0;
  double classified_fraction = 0.0;
  // rows: truth, columns: predicted class, then Unclassified
  std::array<std::array<std::int64_t, kClassCount + 1>, kClassCount> confusion{};

  bool operator==(const EvalReport&) const = default;
};

// F1 is computed over classified samples only; Unclassified samples show up
// in the coverage figures and in the confusion matrix's last column.
inline EvalReport score_outcomes(std::span<const Outcome> predicted, std::span<const SubsystemClass> truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorKind::IdMismatch, "prediction and truth counts differ");
  EvalReport r;
  r.total = static_cast<std::int64_t>(truth.size());
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = index_of(truth[i]);
    if (!predicted[i]) {
      ++r.confusion[t][kUnclassifiedColumn];
      continue;
    }
    const auto p = index_of(*predicted[i]);
    ++r.confusion[t][p];
    ++r.classified_count;
    ++r.per_class[t].support;
    ++r.per_class[p].predicted;
    if (t == p) ++correct;
  }
  r.classified_fraction = r.total ? static_cast<double>(r.classified_count) / static_cast<double>(r.total) : 0.0;
  r.micro_accuracy = r.classified_count ? static_cast<double>(correct) / static_cast<double>(r.classified_count) : 0.0;

  double weighted = 0.0, macro = 0.0;
  std::size_t macro_n = 0;
  for (std::size_t j = 0; j < kClassCount; ++j) {
    auto& m = r.per_class[j];
    const double tp = static_cast<double>(r.confusion[j][j]);
    m.precision = m.predicted ? tp / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.support ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    weighted += static_cast<double>(m.support) * m.f1;
    if (m.support > 0 || m.predicted > 0) {
      macro += m.f1;
      ++macro_n;
    }
  }
  r.weighted_f1 = r.classified_count ? weighted / static_cast<double>(r.classified_count) : 0.0;
  r.macro_f1 = macro_n ? macro / static_cast<double>(macro_n) : 0.0;
  return r;
}

// Scores suggestions against (incident id, true label) pairs. The two lists
// must cover the same incidents; order does not matter.
inline EvalReport score(std::span<const Suggestion> predictions,
                        std::span<const std::pair<std::string, SubsystemClass>> truth) {
  if (predictions.size() != truth.size())
    throw Error(ErrorKind::IdMismatch, std::to_string(predictions.size()) + " predictions for " +
                                           std::to_string(truth.size()) + " labels");
  std::unordered_map<std::string, SubsystemClass> by_id;
  for (const auto& [id, label] : truth)
    if (!by_id.emplace(id, label).second) throw Error(ErrorKind::IdMismatch, "duplicate truth id " + id);
  std::vector<Outcome> outcomes;
  std::vector<SubsystemClass> labels;
  std::unordered_map<std::string, bool> used;
  for (const auto& s : predictions) {
    auto it = by_id.find(s.incident_id);
    if (it == by_id.end()) throw Error(ErrorKind::IdMismatch, "no label for incident " + s.incident_id);
    if (!used.emplace(s.incident_id, true).second)
      throw Error(ErrorKind::IdMismatch, "duplicate prediction for " + s.incident_id);
    outcomes.push_back(s.predicted());
    labels.push_back(it->second);
  }
  return score_outcomes(outcomes, labels);
}

// Aggregate over cross-validation folds.
struct CVSummary {
  double mean_f1 = 0.0;  // mean of per-fold weighted F1
  double mean_macro_f1 = 0.0;
  double mean_classified_count = 0.0;
  double mean_classified_fraction = 0.0;
  EvalReport pooled;  // out-of-fold predictions scored together

  bool operator==(const CVSummary&) const = default;
};

inline CVSummary summarize_folds(std::span<const EvalReport> folds, const EvalReport& pooled) {
  CVSummary s;
  s.pooled = pooled;
  if (folds.empty()) return s;
  for (const auto& f : folds) {
    s.mean_f1 += f.weighted_f1;
    s.mean_macro_f1 += f.macro_f1;
    s.mean_classified_count += static_cast<double>(f.classified_count);
    s.mean_classified_fraction += f.classified_fraction;
  }
  const double k = static_cast<double>(folds.size());
  s.mean_f1 /= k;
  s.mean_macro_f1 /= k;
  s.mean_classified_count /= k;
  s.mean_classified_fraction /= k;
  return s;
}

// Runs `predict(train_idx, test_idx)` on every fold. The callback returns one
// Outcome per test index; scoring uses `truth`.
template <class FoldPredictor>
CVSummary cross_validate(std::span<const SubsystemClass> truth, const std::vector<std::vector<std::size_t>>& folds,
                         FoldPredictor&& predict) {
  std::vector<EvalReport> reports;
  std::vector<Outcome> pooled(truth.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto train = train_indices(folds, f, truth.size());
    const std::vector<Outcome> out = predict(train, folds[f]);
    std::vector<SubsystemClass> fold_truth;
    for (std::size_t i = 0; i < folds[f].size(); ++i) {
      fold_truth.push_back(truth[folds[f][i]]);
      pooled[folds[f][i]] = out[i];
    }
    reports.push_back(score_outcomes(out, fold_truth));
  }
  return summarize_folds(reports, score_outcomes(pooled, truth));
}

// ---------------------------------------------------------------------------

// Incidents at or before train_end go to training, later ones to validation.
template <class Item, class TimeOf>
std::pair<std::vector<Item>, std::vector<Item>> temporal_split(std::vector<Item> dataset, Instant train_end,
                                                               TimeOf time_of) {
  std::pair<std::vector<Item>, std::vector<Item>> out;
  for (auto& item : dataset) (time_of(item) <= train_end ? out.first : out.second).push_back(std::move(item));
  if (out.first.empty()) throw Error(ErrorKind::EmptySide, "no incident at or before " + format_instant(train_end));
  if (out.second.empty()) throw Error(ErrorKind::EmptySide, "no incident after " + format_instant(train_end));
  return out;
}

inline std::pair<std::vector<IncidentTrace>, std::vector<IncidentTrace>> temporal_split(
    std::vector<IncidentTrace> dataset, Instant train_end) {
  return temporal_split(std::move(dataset), train_end,
                        [](const IncidentTrace& t) { return t.incident.timestamp; });
}

// ---------------------------------------------------------------------------

inline json to_json(const EvalReport& r) {
  json per_class = json::array();
  for (std::size_t j = 0; j < kClassCount; ++j) {
    const auto& m = r.per_class[j];
    per_class.push_back({{"class", std::string(kClassNames[j])},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support},
                         {"predicted", m.predicted}});
  }
  json labels = json::array();
  for (auto n : kClassNames) labels.push_back(std::string(n));
  json columns = labels;
  columns.push_back("Unclassified");
  return {{"weighted_f1", r.weighted_f1},
          {"macro_f1", r.macro_f1},
          {"micro_accuracy", r.micro_accuracy},
          {"total", r.total},
          {"classified_count", r.classified_count},
          {"classified_fraction", r.classified_fraction},
          {"per_class", per_class},
          {"confusion", {{"rows", labels}, {"columns", columns}, {"counts", r.confusion}}}};
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.micro_accuracy = j.at("micro_accuracy").get<double>();
  r.total = j.at("total").get<std::int64_t>();
  r.classified_count = j.at("classified_count").get<std::int64_t>();
  r.classified_fraction = j.at("classified_fraction").get<double>();
  for (const auto& m : j.at("per_class")) {
    auto& out = r.per_class[index_of(parse_class(m.at("class").get<std::string>()))];
    out.precision = m.at("precision").get<double>();
    out.recall = m.at("recall").get<double>();
    out.f1 = m.at("f1").get<double>();
    out.support = m.at("support").get<std::int64_t>();
    out.predicted = m.at("predicted").get<std::int64_t>();
  }
  const auto& counts = j.at("confusion").at("counts");
  if (counts.size() != kClassCount) throw Error(ErrorKind::SchemaMismatch, "confusion matrix needs 12 rows");
  for (std::size_t a = 0; a < kClassCount; ++a) {
    if (counts[a].size() != kClassCount + 1) throw Error(ErrorKind::SchemaMismatch, "confusion row needs 13 columns");
    for (std::size_t b = 0; b <= kClassCount; ++b) r.confusion[a][b] = counts[a][b].get<std::int64_t>();
  }
  return r;
}

inline json to_json(const CVSummary& s) {
  return {{"mean_f1", s.mean_f1},
          {"mean_macro_f1", s.mean_macro_f1},
          {"mean_classified_count", s.mean_classified_count},
          {"mean_classified_fraction", s.mean_classified_fraction},
          {"pooled", to_json(s.pooled)}};
}

inline std::string to_table(const EvalReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "weighted F1 %.4f  macro F1 %.4f  classified %lld/%lld (%.4f)\n", r.weighted_f1,
                r.macro_f1, static_cast<long long>(r.classified_count), static_cast<long long>(r.total),
                r.classified_fraction);
  out += buf;
  out += "class              precision  recall     f1  support\n";
  for (std::size_t j = 0; j < kClassCount; ++j) {
    const auto& m = r.per_class[j];
    std::snprintf(buf, sizeof buf, "%-18s %9.4f %7.4f %6.4f %8lld\n", std::string(kClassNames[j]).c_str(),
                  m.precision, m.recall, m.f1, static_cast<long long>(m.support));
    out += buf;
  }
  out += "confusion (rows truth, columns predicted, last column Unclassified)\n";
  out += "                  ";
  for (std::size_t b = 0; b <= kClassCount; ++b) {
    std::snprintf(buf, sizeof buf, " %5.5s", b < kClassCount ? std::string(kClassNames[b]).c_str() : "Uncl");
    out += buf;
  }
  out += "\n";
  for (std::size_t a = 0; a < kClassCount; ++a) {
    std::snprintf(buf, sizeof buf, "%-18s", std::string(kClassNames[a]).c_str());
    out += buf;
    for (std::size_t b = 0; b <= kClassCount; ++b) {
      std::snprintf(buf, sizeof buf, " %5lld", static_cast<long long>(r.confusion[a][b]));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace railcause::evalkit
