#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "railcause/feateng.hpp"
#include "support.hpp"

using namespace railcause;
using namespace railcause::feateng;
using testsupport::trace_of;

namespace {

constexpr auto Doors = SubsystemClass::Doors;
constexpr auto Brakes = SubsystemClass::Brakes;

const evalkit::CVConfig kCv{10, 0};

// Each class owns a pure code; every trace also carries the shared code "n".
std::vector<IncidentTrace> separable() {
  std::vector<IncidentTrace> out;
  for (int i = 0; i < 10; ++i) {
    out.push_back(trace_of("D" + std::to_string(i), Doors, {"n", "d"}));
    out.push_back(trace_of("B" + std::to_string(i), Brakes, {"b", "n"}));
  }
  return out;
}

// Half of each class carries its pure code, the other half only "n".
std::vector<IncidentTrace> half_explained() {
  std::vector<IncidentTrace> out;
  for (int i = 0; i < 10; ++i) {
    out.push_back(trace_of("D" + std::to_string(i), Doors, {i < 5 ? "d" : "n"}));
    out.push_back(trace_of("B" + std::to_string(i), Brakes, {i < 5 ? "b" : "n"}));
  }
  return out;
}

const std::vector<IncidentTrace>& small_fleet() {
  static const auto traces = [] {
    auto fleet = synthfleet::generate(testsupport::small_spec());
    return testsupport::traces_of(fleet);
  }();
  return traces;
}

const synthfleet::GroundTruth& small_truth() {
  static const auto truth = synthfleet::generate(testsupport::small_spec()).truth;
  return truth;
}

}  // namespace

TEST(Relevance, SingleClassCode) {
  std::vector<IncidentTrace> data{trace_of("1", Doors, {"x"}), trace_of("2", Doors, {"x", "y"}),
                                  trace_of("3", Brakes, {"y"})};
  const auto t = compute_relevance(data);
  EXPECT_DOUBLE_EQ(t.relevance("x"), 1.0);
  EXPECT_DOUBLE_EQ(t.relevance("y"), 0.5);
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.classes_present, 2u);
}

TEST(Relevance, MaxClassShare) {
  std::vector<IncidentTrace> data;
  for (int i = 0; i < 8; ++i) data.push_back(trace_of("D" + std::to_string(i), Doors, {"x"}));
  for (int i = 0; i < 2; ++i) data.push_back(trace_of("B" + std::to_string(i), Brakes, {"x"}));
  EXPECT_DOUBLE_EQ(compute_relevance(data).relevance("x"), 0.8);
}

TEST(Relevance, UniformSpread) {
  std::vector<IncidentTrace> data;
  for (std::size_t j = 0; j < kClassCount; ++j) data.push_back(trace_of(std::to_string(j), class_at(j), {"x"}));
  const auto t = compute_relevance(data);
  EXPECT_DOUBLE_EQ(t.relevance("x"), 1.0 / 12.0);
  EXPECT_EQ(t.classes_present, 12u);
}

TEST(Relevance, EmptyDataset) {
  std::vector<IncidentTrace> none;
  try {
    compute_relevance(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}

TEST(Relevance, BurstsAndReorderingDoNotMatter) {
  std::vector<IncidentTrace> a{trace_of("1", Doors, {"x", "y"}), trace_of("2", Brakes, {"y"})};
  std::vector<IncidentTrace> b{trace_of("1", Doors, {"y", "x", "x", "x", "y"}), trace_of("2", Brakes, {"y", "y"})};
  const auto ta = compute_relevance(a), tb = compute_relevance(b);
  EXPECT_EQ(ta.rows, tb.rows);
}

TEST(Relevance, BoundsOnFleet) {
  const auto t = compute_relevance(small_fleet());
  for (const auto& [code, row] : t.rows) {
    EXPECT_GE(row.relevance, 1.0 / static_cast<double>(t.classes_present) - 1e-12) << code;
    EXPECT_LE(row.relevance, 1.0);
    EXPECT_GT(row.total, 0);
  }
}

TEST(Threshold, SeparableCase) {
  const auto data = separable();
  const auto tuning = tune_threshold(data, kCv);
  EXPECT_TRUE(tuning.target_reached);
  ASSERT_EQ(tuning.curve.size(), 101u);
  EXPECT_DOUBLE_EQ(tuning.curve.back().threshold, 1.0);
  EXPECT_DOUBLE_EQ(tuning.curve.back().mean_f1, 1.0);
  EXPECT_TRUE(tuning.selection.contains("d"));
  EXPECT_TRUE(tuning.selection.contains("b"));
  EXPECT_LE(tuning.threshold, 1.0);
}

TEST(Threshold, VacuousTarget) {
  const auto tuning = tune_threshold(half_explained(), kCv, 0.0);
  EXPECT_TRUE(tuning.target_reached);
  EXPECT_DOUBLE_EQ(tuning.threshold, 0.0);
}

TEST(Threshold, UnreachableTargetIsBestEffort) {
  const auto tuning = tune_threshold(half_explained(), kCv, 1.01);
  EXPECT_FALSE(tuning.target_reached);
  const auto best = std::max_element(tuning.curve.begin(), tuning.curve.end(),
                                     [](const auto& a, const auto& b) { return a.mean_f1 < b.mean_f1; });
  EXPECT_DOUBLE_EQ(tuning.threshold, best->threshold);
}

TEST(Threshold, PlantedSignatureCodesRetained) {
  const auto tuning = tune_threshold(small_fleet(), kCv);
  const auto selection = tuning.selection.all();
  // Signature codes that were actually emitted somewhere.
  std::set<std::string> emitted;
  for (const auto& inc : small_truth().incidents)
    if (inc.signature) emitted.insert(inc.signature->codes.begin(), inc.signature->codes.end());
  ASSERT_FALSE(emitted.empty());
  std::size_t kept = 0;
  for (const auto& c : emitted) kept += selection.count(c);
  EXPECT_GE(static_cast<double>(kept) / static_cast<double>(emitted.size()), 0.95);
}

TEST(Threshold, AntiMonotoneSelection) {
  const auto table = compute_relevance(small_fleet());
  std::set<std::string> previous;
  for (int s = 100; s >= 0; --s) {
    const auto sel = select_by_relevance(table, s / 100.0).retained_events;
    EXPECT_TRUE(std::includes(sel.begin(), sel.end(), previous.begin(), previous.end()));
    previous = sel;
  }
}

TEST(Oat, NoiseCodeRejected) {
  const auto data = half_explained();
  const auto base = select_by_relevance(compute_relevance(data), 1.0);
  ASSERT_EQ(base.retained_events, (std::set<std::string>{"b", "d"}));
  const auto r = oat_select(data, base, kCv);
  ASSERT_EQ(r.report.size(), 1u);
  EXPECT_EQ(r.report[0].code, "n");
  EXPECT_LT(r.report[0].mean_f1, 0.85);
  EXPECT_GT(r.report[0].coverage, r.base_coverage);
  EXPECT_FALSE(r.report[0].accepted);
  EXPECT_TRUE(r.selection.oat_events.empty());
  // F1 is 1 in every fold that classifies anything and 0 in folds that do not
  std::vector<SubsystemClass> labels;
  for (const auto& t : data) labels.push_back(label_of(t));
  double explained_folds = 0;
  for (const auto& fold : evalkit::stratified_folds(labels, kCv))
    explained_folds += std::any_of(fold.begin(), fold.end(), [](std::size_t i) { return i < 10; });
  EXPECT_DOUBLE_EQ(r.base_f1, explained_folds / 10.0);
}

TEST(Oat, ImmatureFleetFindsNothing) {
  std::mt19937_64 rng(17);
  std::vector<IncidentTrace> data;
  std::uniform_int_distribution<int> code(0, 5);
  for (int i = 0; i < 60; ++i) {
    std::vector<std::string> codes;
    for (int k = 0; k < 3; ++k) codes.push_back("noise" + std::to_string(code(rng)));
    data.push_back(trace_of(std::to_string(i), class_at(static_cast<std::size_t>(i % 4)), codes));
  }
  const auto tuning = tune_threshold(data, kCv);
  EXPECT_FALSE(tuning.target_reached);
  const auto r = oat_select(data, tuning.selection, kCv);
  EXPECT_TRUE(r.selection.oat_events.empty());
}

TEST(Oat, StrictTargetAddsNothingOnNonSeparableData) {
  const auto data = half_explained();
  const auto base = select_by_relevance(compute_relevance(data), 1.0);
  EXPECT_TRUE(oat_select(data, base, kCv, 1.0).selection.oat_events.empty());
}

TEST(Oat, CandidatesEvaluatedIndependently) {
  const auto& data = small_fleet();
  const auto table = compute_relevance(data);
  const auto base = select_by_relevance(table, 0.6);
  const auto r = oat_select(data, base, kCv);
  const auto presence = encode_presence(data);
  const auto folds = make_folds(presence.labels, kCv);
  std::vector<bool> base_mask(presence.codes.size());
  for (std::size_t c = 0; c < presence.codes.size(); ++c) base_mask[c] = base.retained_events.count(presence.codes[c]) > 0;
  ASSERT_FALSE(r.report.empty());
  for (const auto& row : r.report) {
    EXPECT_LT(row.relevance, 0.6);
    auto mask = base_mask;
    mask[presence.ids.at(row.code)] = true;
    const auto alone = evaluate_code_subset(presence, mask, folds, {});
    EXPECT_DOUBLE_EQ(alone.mean_f1, row.mean_f1) << row.code;
    EXPECT_EQ(row.accepted, r.selection.oat_events.count(row.code) > 0);
  }
  for (const auto& c : r.selection.oat_events) EXPECT_EQ(r.selection.retained_events.count(c), 0u);
}

TEST(Export, RelevanceTableAndSelectionJson) {
  const auto data = half_explained();
  const auto base = select_by_relevance(compute_relevance(data), 1.0);
  const auto r = oat_select(data, base, kCv);
  const auto text = export_relevance(compute_relevance(data), r.selection, r.report);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_NE(text.find("discarded"), std::string::npos);
  EXPECT_EQ(feature_selection_from_json(to_json(r.selection)), r.selection);
}
