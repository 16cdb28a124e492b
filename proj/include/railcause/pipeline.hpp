#pragma once

// Full training pipeline: relevance threshold, OaT recovery, set mining,
// window-grid tuning, final fit.

#include <string>
#include <vector>

#include "railcause/artifact.hpp"
#include "railcause/cascade.hpp"
#include "railcause/feateng.hpp"
#include "railcause/setminer.hpp"

namespace railcause {

struct PipelineOptions {
  evalkit::CVConfig cv{10, 0};
  double target_f1 = 0.90;
  double oat_min_f1 = 0.85;
  bool run_oat = true;
  setminer::MiningConfig mining{5, 5};
  double beta = 0.01;
  nbayes::PriorMode priors = nbayes::PriorMode::Empirical;
  cascade::WindowGeometry geometry = cascade::WindowGeometry::Nested;
  std::vector<cascade::EnsembleConfig> grid;  // empty: the Table-1 ensembles
  bool single_baselines = true;
  feateng::ContextFilters filters;
};

struct PipelineResult {
  ModelArtifact artifact;
  feateng::ThresholdTuning threshold;
  feateng::OatResult oat;
  std::vector<setminer::EventSetFeature> features;
  cascade::GridReport grid;
};

// Trace codes restricted to the selection, in trace order.
inline std::vector<setminer::LabeledSequence> restricted_sequences(std::span<const IncidentTrace> dataset,
                                                                   const feateng::FeatureSelection& selection,
                                                                   const feateng::ContextFilters& filters = {}) {
  std::vector<setminer::LabeledSequence> out;
  out.reserve(dataset.size());
  for (const auto& t : dataset) {
    setminer::LabeledSequence s{{}, label_of(t)};
    for (const auto& e : t.events)
      if (selection.contains(e.code) && feateng::passes(e, filters)) s.codes.push_back(e.code);
    s.codes = setminer::denoise(s.codes);
    out.push_back(std::move(s));
  }
  return out;
}

inline PipelineResult train_pipeline(std::span<const IncidentTrace> dataset, const PipelineOptions& options,
                                     const std::string& fleet) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no labeled incidents to train on");
  for (const auto& t : dataset) label_of(t);

  PipelineResult r;
  feateng::TuningOptions tuning{{options.beta, options.priors}, options.filters, 0.01};
  r.threshold = feateng::tune_threshold(dataset, options.cv, options.target_f1, tuning);
  if (options.run_oat) {
    r.oat = feateng::oat_select(dataset, r.threshold.selection, options.cv, options.oat_min_f1, tuning);
  } else {
    r.oat.selection = r.threshold.selection;
  }
  const auto& selection = r.oat.selection;

  const auto sequences = restricted_sequences(dataset, selection, options.filters);
  r.features = setminer::mine_recurrent_sets(sequences, options.mining);

  auto grid = options.grid.empty() ? cascade::table1_ensembles(options.beta, options.priors) : options.grid;
  for (auto& g : grid) g.geometry = options.geometry;
  std::vector<cascade::EnsembleConfig> baselines;
  if (options.single_baselines) baselines = cascade::table1_singles(options.beta, options.priors);
  r.grid = cascade::tune_grid(dataset, r.features, grid, options.cv, baselines);

  auto& a = r.artifact;
  a.fleet = fleet;
  a.ensemble = cascade::train_ensemble(dataset, r.grid.best_config(), r.features);
  a.selection = selection;
  a.fingerprint = fingerprint_of(dataset);
  a.eval_summary = r.grid.rows[r.grid.best].summary.pooled;

  json curve = json::array();
  for (const auto& p : r.threshold.curve)
    curve.push_back({{"threshold", p.threshold}, {"mean_f1", p.mean_f1}, {"coverage", p.coverage},
                     {"n_features", p.n_features}});
  json oat = json::array();
  for (const auto& row : r.oat.report)
    oat.push_back({{"code", row.code}, {"relevance", row.relevance}, {"mean_f1", row.mean_f1},
                   {"coverage", row.coverage}, {"accepted", row.accepted}});
  a.tuning = {{"threshold", {{"value", r.threshold.threshold},
                             {"target_f1", options.target_f1},
                             {"target_reached", r.threshold.target_reached},
                             {"curve", curve}}},
              {"oat", {{"min_f1", options.oat_min_f1}, {"base_f1", r.oat.base_f1}, {"rows", oat}}},
              {"grid", cascade::to_json(r.grid)},
              {"cv", {{"k", options.cv.k}, {"seed", options.cv.seed}}},
              {"mining", {{"max_len", options.mining.max_len}, {"min_support", options.mining.min_support}}}};
  return r;
}

}  // namespace railcause
