#pragma once

// First-stage feature filtering: per-event relevance, threshold tuning by
// cross-validated F1, and one-at-a-time recovery of discarded events.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "railcause/core.hpp"
#include "railcause/evalkit.hpp"
#include "railcause/nbayes.hpp"

namespace railcause::feateng {

// Optional per-code predicate on event context; an event whose code has a
// predicate only counts when the predicate holds. None ship by default.
using ContextFilters = std::map<std::string, std::function<bool(const Event&)>>;

inline bool passes(const Event& e, const ContextFilters& filters) {
  auto it = filters.find(e.code);
  return it == filters.end() || it->second(e);
}

struct ClassifierOptions {
  double beta = 0.01;
  nbayes::PriorMode priors = nbayes::PriorMode::Empirical;
};

struct RelevanceRow {
  PerClass<std::int64_t> per_class{};  // traces of each class containing the code
  std::int64_t total = 0;
  double relevance = 0.0;  // max_c per_class[c] / total

  bool operator==(const RelevanceRow&) const = default;
};

struct RelevanceTable {
  std::map<std::string, RelevanceRow> rows;
  std::size_t classes_present = 0;

  double relevance(const std::string& code) const {
    auto it = rows.find(code);
    return it == rows.end() ? 0.0 : it->second.relevance;
  }
};

// Distinct codes present in a trace; a burst counts once.
inline std::set<std::string> present_codes(const IncidentTrace& trace, const ContextFilters& filters = {}) {
  std::set<std::string> out;
  for (const auto& e : trace.events)
    if (passes(e, filters)) out.insert(e.code);
  return out;
}

inline RelevanceTable compute_relevance(std::span<const IncidentTrace> dataset, const ContextFilters& filters = {}) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "relevance needs at least one labeled trace");
  RelevanceTable table;
  PerClass<bool> seen{};
  for (const auto& trace : dataset) {
    const auto label = index_of(label_of(trace));
    seen[label] = true;
    for (const auto& code : present_codes(trace, filters)) {
      auto& row = table.rows[code];
      ++row.per_class[label];
      ++row.total;
    }
  }
  for (auto& [_, row] : table.rows)
    row.relevance = static_cast<double>(*std::max_element(row.per_class.begin(), row.per_class.end())) /
                    static_cast<double>(row.total);
  table.classes_present = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  return table;
}

// ---------------------------------------------------------------------------

// Codes of every trace interned once, so candidate subsets can be evaluated
// without touching strings.
struct CodePresence {
  std::vector<std::string> codes;                     // id -> code
  std::unordered_map<std::string, std::uint32_t> ids;  // code -> id
  std::vector<std::vector<std::uint32_t>> per_trace;  // sorted ids
  std::vector<SubsystemClass> labels;
};

inline CodePresence encode_presence(std::span<const IncidentTrace> dataset, const ContextFilters& filters = {}) {
  CodePresence p;
  for (const auto& trace : dataset) {
    std::vector<std::uint32_t> ids;
    for (const auto& code : present_codes(trace, filters)) {
      auto [it, inserted] = p.ids.try_emplace(code, static_cast<std::uint32_t>(p.codes.size()));
      if (inserted) p.codes.push_back(code);
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    p.per_trace.push_back(std::move(ids));
    p.labels.push_back(label_of(trace));
  }
  return p;
}

// Cross-validated single-window (widest window) classifier restricted to the
// codes flagged in `selected` (indexed by code id).
inline evalkit::CVSummary evaluate_code_subset(const CodePresence& presence, const std::vector<bool>& selected,
                                               const std::vector<std::vector<std::size_t>>& folds,
                                               const ClassifierOptions& options) {
  std::vector<std::uint32_t> feature_of(presence.codes.size(), UINT32_MAX);
  std::uint32_t n = 0;
  for (std::uint32_t c = 0; c < presence.codes.size(); ++c)
    if (selected[c]) feature_of[c] = n++;

  std::vector<nbayes::FeatureSet> windows(presence.per_trace.size());
  for (std::size_t t = 0; t < windows.size(); ++t)
    for (auto c : presence.per_trace[t])
      if (feature_of[c] != UINT32_MAX) windows[t].push_back(feature_of[c]);

  const std::size_t vocab = std::max<std::size_t>(n, 1);
  return evalkit::cross_validate(
      presence.labels, folds, [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
        std::vector<nbayes::FeatureSet> tw;
        std::vector<SubsystemClass> tl;
        for (auto i : train) {
          tw.push_back(windows[i]);
          tl.push_back(presence.labels[i]);
        }
        const auto table = nbayes::CountTable::fit(tw, tl, vocab, options.beta, options.priors);
        std::vector<evalkit::Outcome> out;
        for (auto i : test) {
          auto v = table.classify(windows[i]);
          out.push_back(v ? std::optional{v->cls} : std::nullopt);
        }
        return out;
      });
}

inline std::vector<std::vector<std::size_t>> make_folds(std::span<const SubsystemClass> labels,
                                                        const evalkit::CVConfig& cv) {
  return evalkit::stratified_folds(evalkit::fold_rare_classes(labels, cv.k), cv);
}

// ---------------------------------------------------------------------------

enum class Provenance : std::uint8_t { Relevance, Oat };

inline std::string_view to_string(Provenance p) { return p == Provenance::Relevance ? "relevance" : "oat"; }

struct FeatureSelection {
  std::set<std::string> retained_events;
  std::set<std::string> oat_events;
  double threshold = 0.0;

  std::set<std::string> all() const {
    std::set<std::string> out = retained_events;
    out.insert(oat_events.begin(), oat_events.end());
    return out;
  }

  bool contains(const std::string& code) const { return retained_events.count(code) || oat_events.count(code); }

  std::map<std::string, Provenance> provenance() const {
    std::map<std::string, Provenance> out;
    for (const auto& c : retained_events) out.emplace(c, Provenance::Relevance);
    for (const auto& c : oat_events) out.emplace(c, Provenance::Oat);
    return out;
  }

  bool operator==(const FeatureSelection&) const = default;
};

inline FeatureSelection select_by_relevance(const RelevanceTable& table, double threshold) {
  FeatureSelection s;
  s.threshold = threshold;
  for (const auto& [code, row] : table.rows)
    if (row.relevance >= threshold) s.retained_events.insert(code);
  return s;
}

struct ThresholdPoint {
  double threshold = 0.0;
  double mean_f1 = 0.0;
  double coverage = 0.0;  // mean fraction of classified samples over the folds
  std::size_t n_features = 0;
};

struct ThresholdTuning {
  double threshold = 0.0;
  bool target_reached = false;  // false: best-effort argmax-F1 threshold
  std::vector<ThresholdPoint> curve;
  FeatureSelection selection;
};

struct TuningOptions {
  ClassifierOptions classifier;
  ContextFilters filters;
  double grid_step = 0.01;
};

// Scans thresholds 0, step, 2*step, ..., 1 and returns the smallest whose
// cross-validated mean F1 reaches the target. When none does, the argmax-F1
// threshold comes back with target_reached = false.
inline ThresholdTuning tune_threshold(std::span<const IncidentTrace> dataset, const evalkit::CVConfig& cv,
                                      double target_f1 = 0.90, const TuningOptions& options = {}) {
  const auto table = compute_relevance(dataset, options.filters);
  const auto presence = encode_presence(dataset, options.filters);
  const auto folds = make_folds(presence.labels, cv);

  const auto steps = static_cast<int>(std::lround(1.0 / options.grid_step));
  std::map<std::size_t, evalkit::CVSummary> cache;  // keyed by selected-set size; sets are nested
  ThresholdTuning out;
  std::optional<std::size_t> best;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps);
    std::vector<bool> selected(presence.codes.size(), false);
    std::size_t n = 0;
    for (std::uint32_t c = 0; c < presence.codes.size(); ++c)
      if (table.rows.at(presence.codes[c]).relevance >= t) {
        selected[c] = true;
        ++n;
      }
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, evaluate_code_subset(presence, selected, folds, options.classifier)).first;
    out.curve.push_back({t, it->second.mean_f1, it->second.mean_classified_fraction, n});
    if (!best || out.curve.back().mean_f1 > out.curve[*best].mean_f1) best = out.curve.size() - 1;
  }

  auto reached = std::find_if(out.curve.begin(), out.curve.end(),
                              [&](const ThresholdPoint& p) { return p.mean_f1 >= target_f1 - 1e-12; });
  out.target_reached = reached != out.curve.end();
  out.threshold = out.target_reached ? reached->threshold : out.curve[*best].threshold;
  out.selection = select_by_relevance(table, out.threshold);
  return out;
}

struct OatRow {
  std::string code;
  double relevance = 0.0;
  double mean_f1 = 0.0;
  double coverage = 0.0;
  bool accepted = false;
};

struct OatResult {
  FeatureSelection selection;
  double base_f1 = 0.0;
  double base_coverage = 0.0;
  std::vector<OatRow> report;  // one row per evaluated code, sorted by code
};

// One-at-a-time: every code discarded by the threshold is evaluated alone on
// top of the retained set; those keeping mean F1 >= min_f1 join oat_events.
// Candidates never accumulate, so evaluation order cannot matter.
inline OatResult oat_select(std::span<const IncidentTrace> dataset, const FeatureSelection& selection,
                            const evalkit::CVConfig& cv, double min_f1 = 0.85, const TuningOptions& options = {}) {
  const auto table = compute_relevance(dataset, options.filters);
  const auto presence = encode_presence(dataset, options.filters);
  const auto folds = make_folds(presence.labels, cv);

  std::vector<bool> base(presence.codes.size(), false);
  for (std::uint32_t c = 0; c < presence.codes.size(); ++c) base[c] = selection.retained_events.count(presence.codes[c]) > 0;

  OatResult out;
  out.selection = selection;
  out.selection.oat_events.clear();
  const auto base_summary = evaluate_code_subset(presence, base, folds, options.classifier);
  out.base_f1 = base_summary.mean_f1;
  out.base_coverage = base_summary.mean_classified_fraction;

  for (const auto& [code, row] : table.rows) {
    if (row.total == 0 || row.relevance >= selection.threshold || selection.retained_events.count(code)) continue;
    auto with = base;
    with[presence.ids.at(code)] = true;
    const auto summary = evaluate_code_subset(presence, with, folds, options.classifier);
    OatRow r{code, row.relevance, summary.mean_f1, summary.mean_classified_fraction, summary.mean_f1 >= min_f1 - 1e-12};
    if (r.accepted) out.selection.oat_events.insert(code);
    out.report.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

// code, per-class counts, total, r, decision, OaT F1, OaT coverage
inline std::string export_relevance(const RelevanceTable& table, const FeatureSelection& selection,
                                    std::span<const OatRow> oat = {}) {
  std::map<std::string, const OatRow*> oat_by_code;
  for (const auto& r : oat) oat_by_code.emplace(r.code, &r);
  std::string out = "code";
  for (auto n : kClassNames) out += "\t" + std::string(n);
  out += "\ttotal\trelevance\tdecision\toat_f1\toat_coverage\n";
  char buf[64];
  for (const auto& [code, row] : table.rows) {
    out += code;
    for (auto v : row.per_class) out += "\t" + std::to_string(v);
    std::snprintf(buf, sizeof buf, "\t%lld\t%.4f", static_cast<long long>(row.total), row.relevance);
    out += buf;
    const char* decision = selection.retained_events.count(code) ? "retained"
                           : selection.oat_events.count(code)    ? "oat"
                                                                 : "discarded";
    out += std::string("\t") + decision;
    if (auto it = oat_by_code.find(code); it != oat_by_code.end()) {
      std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f", it->second->mean_f1, it->second->coverage);
      out += buf;
    } else {
      out += "\t-\t-";
    }
    out += "\n";
  }
  return out;
}

inline json to_json(const FeatureSelection& s) {
  json prov = json::object();
  for (const auto& [code, p] : s.provenance()) prov[code] = std::string(to_string(p));
  return {{"threshold", s.threshold}, {"retained_events", s.retained_events}, {"oat_events", s.oat_events},
          {"provenance", prov}};
}

inline FeatureSelection feature_selection_from_json(const json& j) {
  FeatureSelection s;
  s.threshold = j.at("threshold").get<double>();
  s.retained_events = j.at("retained_events").get<std::set<std::string>>();
  s.oat_events = j.at("oat_events").get<std::set<std::string>>();
  return s;
}

}  // namespace railcause::feateng
