#pragma once

// Cascaded time-window ensemble. Classifier k sees the events of window k;
// classifiers are consulted nearest-first and the first one that answers
// fixes the output.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "railcause/core.hpp"
#include "railcause/evalkit.hpp"
#include "railcause/nbayes.hpp"
#include "railcause/setminer.hpp"
#include "railcause/suggestion.hpp"

namespace railcause::cascade {

using nbayes::CountTable;
using nbayes::FeatureSet;
using setminer::EventSetFeature;

// Nested: window k is (t - w_k, t]. Bands: window k is (t - w_k, t - w_{k-1}].
enum class WindowGeometry : std::uint8_t { Nested, Bands };

inline std::string_view to_string(WindowGeometry g) { return g == WindowGeometry::Nested ? "nested" : "bands"; }

inline WindowGeometry parse_geometry(std::string_view s) {
  if (s == "nested") return WindowGeometry::Nested;
  if (s == "bands") return WindowGeometry::Bands;
  throw Error(ErrorKind::InvalidConfig, "unknown window geometry '" + std::string(s) + "'");
}

struct EnsembleConfig {
  std::vector<WindowSpec> windows;
  double beta = 0.01;
  nbayes::PriorMode priors = nbayes::PriorMode::Empirical;
  WindowGeometry geometry = WindowGeometry::Nested;

  void validate() const {
    if (windows.empty()) throw Error(ErrorKind::InvalidConfig, "ensemble needs at least one window");
    for (std::size_t k = 1; k < windows.size(); ++k)
      if (!(windows[k - 1] < windows[k]))
        throw Error(ErrorKind::InvalidConfig, "window lengths must be strictly increasing");
    if (!(beta > 0.0)) throw Error(ErrorKind::NonPositiveSmoothing, "beta must be positive");
  }

  int max_window() const { return windows.empty() ? 0 : windows.back().length_minutes(); }

  // (near, far) lookback in minutes for window k.
  std::pair<int, int> band(std::size_t k) const {
    const int far = windows.at(k).length_minutes();
    const int near = (geometry == WindowGeometry::Bands && k > 0) ? windows[k - 1].length_minutes() : 0;
    return {near, far};
  }

  std::string label() const {
    std::string s = windows.size() == 1 ? "single[" : "ensemble[";
    for (std::size_t k = 0; k < windows.size(); ++k)
      s += (k ? "," : "") + std::to_string(windows[k].length_minutes());
    return s + "]";
  }

  bool operator==(const EnsembleConfig&) const = default;
};

inline const std::vector<int>& table1_window_sizes() {
  static const std::vector<int> sizes = {5, 10, 15, 20, 25, 30, 40, 60, 90, 120, 240};
  return sizes;
}

// [5], [5,10], ..., [5,10,15,20,25,30,40,60,90,120,240]
inline std::vector<EnsembleConfig> table1_ensembles(double beta = 0.01,
                                                    nbayes::PriorMode priors = nbayes::PriorMode::Empirical) {
  std::vector<EnsembleConfig> out;
  std::vector<WindowSpec> prefix;
  for (int w : table1_window_sizes()) {
    prefix.emplace_back(w);
    out.push_back({prefix, beta, priors, WindowGeometry::Nested});
  }
  return out;
}

// [5], [10], ..., [240]
inline std::vector<EnsembleConfig> table1_singles(double beta = 0.01,
                                                  nbayes::PriorMode priors = nbayes::PriorMode::Empirical) {
  std::vector<EnsembleConfig> out;
  for (int w : table1_window_sizes()) out.push_back({{WindowSpec{w}}, beta, priors, WindowGeometry::Nested});
  return out;
}

struct CascadeVerdict {
  std::size_t window_index;
  nbayes::WindowVerdict verdict;
};

// First table that answers on its own window's feature set wins.
inline std::optional<CascadeVerdict> cascade_classify(std::span<const CountTable> tables,
                                                      std::span<const FeatureSet> present) {
  for (std::size_t k = 0; k < tables.size(); ++k)
    if (auto v = tables[k].classify(present[k])) return CascadeVerdict{k, *v};
  return std::nullopt;
}

// Count tables need n >= 1; an empty vocabulary gets one unused slot.
inline std::size_t table_size(const std::vector<EventSetFeature>& vocabulary) {
  return std::max<std::size_t>(vocabulary.size(), 1);
}

class Ensemble {
 public:
  Ensemble() : matcher_(std::span<const EventSetFeature>{}) {}

  Ensemble(EnsembleConfig config, std::vector<EventSetFeature> vocabulary, std::vector<CountTable> tables)
      : config_(std::move(config)),
        vocabulary_(std::move(vocabulary)),
        tables_(std::move(tables)),
        matcher_(vocabulary_) {
    config_.validate();
    if (tables_.size() != config_.windows.size())
      throw Error(ErrorKind::SchemaMismatch, "one count table per window is required");
    for (const auto& t : tables_)
      if (t.vocabulary_size() != table_size(vocabulary_))
        throw Error(ErrorKind::SchemaMismatch, "count table does not match the vocabulary");
  }

  const EnsembleConfig& config() const noexcept { return config_; }
  const std::vector<EventSetFeature>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<CountTable>& tables() const noexcept { return tables_; }
  const setminer::FeatureMatcher& matcher() const noexcept { return matcher_; }

  std::vector<FeatureSet> extract(const IncidentTrace& trace) const {
    std::vector<FeatureSet> out;
    out.reserve(config_.windows.size());
    for (std::size_t k = 0; k < config_.windows.size(); ++k) {
      auto [near, far] = config_.band(k);
      out.push_back(matcher_.match_events(lookback_band(trace, minutes{near}, minutes{far})));
    }
    return out;
  }

  Suggestion predict(const IncidentTrace& trace, std::int64_t model_version = 0, Instant produced_at = {}) const {
    Suggestion s{trace.incident.id, std::nullopt, model_version, produced_at};
    // Windows are extracted lazily so later classifiers are never consulted
    // once an earlier one answers.
    for (std::size_t k = 0; k < config_.windows.size(); ++k) {
      auto [near, far] = config_.band(k);
      auto present = matcher_.match_events(lookback_band(trace, minutes{near}, minutes{far}));
      auto v = tables_[k].classify(present);
      if (!v) continue;
      Classification c;
      c.cls = v->cls;
      c.window_index = k;
      c.window_minutes = config_.windows[k].length_minutes();
      c.log_score = v->log_score;
      for (auto f : present) {
        c.matched_feature_ids.push_back(f);
        c.matched_features.push_back(vocabulary_[f].codes);
      }
      s.classification = std::move(c);
      break;
    }
    return s;
  }

  bool operator==(const Ensemble& o) const {
    return config_ == o.config_ && vocabulary_ == o.vocabulary_ && tables_ == o.tables_;
  }

 private:
  EnsembleConfig config_;
  std::vector<EventSetFeature> vocabulary_;
  std::vector<CountTable> tables_;
  setminer::FeatureMatcher matcher_;
};

// Fits one count table per window on the expanding (or banded) windows of
// every training incident.
inline Ensemble train_ensemble(std::span<const IncidentTrace> dataset, const EnsembleConfig& config,
                               std::vector<EventSetFeature> vocabulary) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training incidents");
  const setminer::FeatureMatcher matcher(vocabulary);
  std::vector<SubsystemClass> labels;
  for (const auto& t : dataset) labels.push_back(label_of(t));
  std::vector<CountTable> tables;
  for (std::size_t k = 0; k < config.windows.size(); ++k) {
    auto [near, far] = config.band(k);
    std::vector<FeatureSet> windows;
    windows.reserve(dataset.size());
    for (const auto& t : dataset) windows.push_back(matcher.match_events(lookback_band(t, minutes{near}, minutes{far})));
    tables.push_back(CountTable::fit(windows, labels, table_size(vocabulary), config.beta, config.priors));
  }
  return Ensemble(config, std::move(vocabulary), std::move(tables));
}

inline Suggestion predict(const Ensemble& model, const IncidentTrace& trace, std::int64_t version = 0,
                          Instant produced_at = {}) {
  return model.predict(trace, version, produced_at);
}

// ---------------------------------------------------------------------------
// Grid tuning

// Feature sets per (trace, band), computed once per band and shared by every
// configuration and fold.
class WindowedFeatures {
 public:
  WindowedFeatures(std::span<const IncidentTrace> dataset, const std::vector<EventSetFeature>& vocabulary)
      : dataset_(dataset), matcher_(vocabulary) {}

  const std::vector<FeatureSet>& band(int near, int far) {
    auto key = std::make_pair(near, far);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<FeatureSet> sets;
    sets.reserve(dataset_.size());
    for (const auto& t : dataset_) sets.push_back(matcher_.match_events(lookback_band(t, minutes{near}, minutes{far})));
    return cache_.emplace(key, std::move(sets)).first->second;
  }

 private:
  std::span<const IncidentTrace> dataset_;
  setminer::FeatureMatcher matcher_;
  std::map<std::pair<int, int>, std::vector<FeatureSet>> cache_;
};

inline evalkit::CVSummary evaluate_config(WindowedFeatures& features, std::span<const SubsystemClass> labels,
                                          std::size_t vocabulary_size, const EnsembleConfig& config,
                                          const std::vector<std::vector<std::size_t>>& folds) {
  config.validate();
  std::vector<const std::vector<FeatureSet>*> per_window;
  for (std::size_t k = 0; k < config.windows.size(); ++k) {
    auto [near, far] = config.band(k);
    per_window.push_back(&features.band(near, far));
  }
  return evalkit::cross_validate(labels, folds, [&](const std::vector<std::size_t>& train,
                                                    const std::vector<std::size_t>& test) {
    std::vector<SubsystemClass> tl;
    for (auto i : train) tl.push_back(labels[i]);
    std::vector<CountTable> tables;
    for (const auto* sets : per_window) {
      std::vector<FeatureSet> tw;
      tw.reserve(train.size());
      for (auto i : train) tw.push_back((*sets)[i]);
      tables.push_back(CountTable::fit(tw, tl, vocabulary_size, config.beta, config.priors));
    }
    std::vector<evalkit::Outcome> out;
    std::vector<FeatureSet> present(per_window.size());
    for (auto i : test) {
      for (std::size_t k = 0; k < per_window.size(); ++k) present[k] = (*per_window[k])[i];
      auto v = cascade_classify(tables, present);
      out.push_back(v ? std::optional{v->verdict.cls} : std::nullopt);
    }
    return out;
  });
}

struct GridRow {
  EnsembleConfig config;
  bool baseline = false;  // single-window comparison point, not a candidate
  evalkit::CVSummary summary;
};

struct GridReport {
  std::vector<GridRow> rows;
  std::size_t best = 0;  // index into rows

  const EnsembleConfig& best_config() const { return rows.at(best).config; }
  const GridRow* find(const std::string& label, bool baseline) const {
    for (const auto& r : rows)
      if (r.baseline == baseline && r.config.label() == label) return &r;
    return nullptr;
  }
};

// Higher mean F1 wins, then more classified incidents, then the smaller
// maximum window.
inline bool better_candidate(const GridRow& a, const GridRow& b) {
  constexpr double eps = 1e-12;
  if (a.summary.mean_f1 > b.summary.mean_f1 + eps) return true;
  if (b.summary.mean_f1 > a.summary.mean_f1 + eps) return false;
  if (a.summary.mean_classified_count > b.summary.mean_classified_count + eps) return true;
  if (b.summary.mean_classified_count > a.summary.mean_classified_count + eps) return false;
  return a.config.max_window() < b.config.max_window();
}

// Cross-validates every candidate in `grids` (and every baseline, which is
// reported but never selected) on the same stratified folds.
inline GridReport tune_grid(std::span<const IncidentTrace> dataset, const std::vector<EventSetFeature>& vocabulary,
                            const std::vector<EnsembleConfig>& grids, const evalkit::CVConfig& cv,
                            const std::vector<EnsembleConfig>& baselines = {}) {
  if (grids.empty()) throw Error(ErrorKind::InvalidConfig, "grid is empty");
  if (dataset.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training incidents");
  std::vector<SubsystemClass> labels;
  for (const auto& t : dataset) labels.push_back(label_of(t));
  const auto folds = evalkit::stratified_folds(evalkit::fold_rare_classes(labels, cv.k), cv);
  WindowedFeatures features(dataset, vocabulary);

  GridReport report;
  std::optional<std::size_t> best;
  for (const auto& config : grids) {
    report.rows.push_back({config, false, evaluate_config(features, labels, table_size(vocabulary), config, folds)});
    if (!best || better_candidate(report.rows.back(), report.rows[*best])) best = report.rows.size() - 1;
  }
  for (const auto& config : baselines)
    report.rows.push_back({config, true, evaluate_config(features, labels, table_size(vocabulary), config, folds)});
  report.best = *best;
  return report;
}

// config, mean F1, mean classified count
inline std::string export_grid(const GridReport& report) {
  std::string out = "kind\tconfig\tmax_window\tmean_f1\tmean_macro_f1\tmean_classified\tmean_classified_fraction\tbest\n";
  char buf[128];
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out += std::string(r.baseline ? "baseline" : "candidate") + "\t" + r.config.label();
    std::snprintf(buf, sizeof buf, "\t%d\t%.4f\t%.4f\t%.2f\t%.4f\t%s\n", r.config.max_window(), r.summary.mean_f1,
                  r.summary.mean_macro_f1, r.summary.mean_classified_count, r.summary.mean_classified_fraction,
                  i == report.best ? "*" : "");
    out += buf;
  }
  return out;
}

inline json to_json(const EnsembleConfig& c) {
  json windows = json::array();
  for (const auto& w : c.windows) windows.push_back(w.length_minutes());
  return {{"windows", windows},
          {"beta", c.beta},
          {"priors", std::string(nbayes::to_string(c.priors))},
          {"geometry", std::string(to_string(c.geometry))}};
}

inline EnsembleConfig ensemble_config_from_json(const json& j) {
  EnsembleConfig c;
  for (const auto& w : j.at("windows")) c.windows.emplace_back(w.get<int>());
  c.beta = j.at("beta").get<double>();
  c.priors = nbayes::parse_prior_mode(j.value("priors", "empirical"));
  c.geometry = parse_geometry(j.value("geometry", "nested"));
  c.validate();
  return c;
}

inline json to_json(const GridReport& report) {
  json rows = json::array();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    rows.push_back({{"config", r.config.label()},
                    {"windows", to_json(r.config)["windows"]},
                    {"baseline", r.baseline},
                    {"mean_f1", r.summary.mean_f1},
                    {"mean_macro_f1", r.summary.mean_macro_f1},
                    {"mean_classified_count", r.summary.mean_classified_count},
                    {"mean_classified_fraction", r.summary.mean_classified_fraction},
                    {"best", i == report.best}});
  }
  return {{"rows", rows}, {"best", report.best_config().label()}};
}

}  // namespace railcause::cascade
