// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "railcause/railcause.hpp"
#include "support.hpp"

using namespace railcause;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// -- shared desk-scale context ----------------------------------------------

struct Desk {
  synthfleet::FleetSpec spec = synthfleet::FleetSpec::desk_default();
  synthfleet::GeneratedFleet fleet;
  std::vector<IncidentTrace> traces;
  Instant split;
  std::vector<IncidentTrace> train, valid;
  PipelineResult result;
  double pipeline_seconds = 0;
  evalkit::EvalReport holdout;
};

PipelineOptions desk_options() {
  PipelineOptions o;
  o.cv.seed = 7;
  return o;
}

evalkit::EvalReport score_on(const ModelArtifact& model, std::span<const IncidentTrace> data) {
  std::vector<Suggestion> preds;
  std::vector<std::pair<std::string, SubsystemClass>> truth;
  for (const auto& t : data) {
    preds.push_back(model.predict(t));
    truth.emplace_back(t.incident.id, label_of(t));
  }
  return evalkit::score(preds, truth);
}

// generate -> split at day 360 -> full pipeline -> score the held-out period
Desk run_desk() {
  Desk d;
  d.fleet = synthfleet::generate(d.spec);
  d.traces = testsupport::traces_of(d.fleet);
  d.split = d.spec.start + std::chrono::days{360};
  std::tie(d.train, d.valid) = evalkit::temporal_split(d.traces, d.split);
  d.result = train_pipeline(d.train, desk_options(), d.spec.fleet);
  d.result.artifact.created_at = Instant{};
  d.holdout = score_on(d.result.artifact, d.valid);
  return d;
}

Desk& desk() {
  static Desk d = [] {
    const auto t = Clock::now();
    auto out = run_desk();
    out.pipeline_seconds = seconds_since(t);
    return out;
  }();
  return d;
}

std::set<std::string> classified_ids(const cascade::Ensemble& model, std::span<const IncidentTrace> data) {
  std::set<std::string> out;
  for (const auto& t : data)
    if (model.predict(t).classified()) out.insert(t.incident.id);
  return out;
}

// -- criteria ---------------------------------------------------------------

Verdict normalization() {
  std::mt19937_64 rng(101);
  std::size_t cases = 0;
  double worst = 0;
  for (; cases < 200; ++cases) {
    auto r = oracles::random_table(rng, 60, 12, 1000);
    const auto t = nbayes::CountTable::from_counts(r.n, r.beta(), nbayes::PriorMode::Empirical, r.class_counts, r.cards);
    for (std::size_t j = 0; j < kClassCount; ++j) {
      double sum = 0;
      for (std::size_t f = 0; f < r.n; ++f) sum += t.likelihood(f, class_at(j));
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  // and every table of a trained desk ensemble
  for (const auto& table : desk().result.artifact.ensemble.tables()) {
    for (std::size_t j = 0; j < kClassCount; ++j) {
      double sum = 0;
      for (std::size_t f = 0; f < table.vocabulary_size(); ++f) sum += table.likelihood(f, class_at(j));
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    ++cases;
  }
  return {worst <= 1e-9, std::to_string(cases) + " tables, max |sum-1| = " + sci(worst)};
}

Verdict posterior_oracle() {
  std::mt19937_64 rng(202);
  std::size_t agree = 0, answered = 0;
  double worst = 0;
  const std::size_t n = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    const bool uniform = i % 5 == 4;
    auto r = oracles::random_table(rng, 5, 3);
    const auto t = nbayes::CountTable::from_counts(r.n, r.beta(), uniform ? nbayes::PriorMode::Uniform : nbayes::PriorMode::Empirical,
                                                   r.class_counts, r.cards);
    const auto got = nbayes::classify_window(t, nbayes::normalized(r.present));
    const auto exact = oracles::exact_posterior(r.n, r.beta_exact(), r.class_counts, r.cards, r.present, uniform);
    if (got.has_value() != exact.has_value()) continue;
    if (!got) {
      ++agree;
      continue;
    }
    ++answered;
    const double err = std::abs(got->log_score - exact->log_of(got->cls));
    worst = std::max(worst, err);
    if (got->cls == exact->argmax() && err <= 1e-9) ++agree;
  }
  return {agree == n, std::to_string(agree) + "/" + std::to_string(n) + " agree (" + std::to_string(answered) +
                          " answered), max log error " + sci(worst)};
}

Verdict lcss_oracle() {
  std::mt19937_64 rng(303);
  std::size_t ok = 0;
  const std::size_t n = 500;
  for (std::size_t i = 0; i < n; ++i) {
    auto draw = [&] {
      std::vector<std::string> v(std::uniform_int_distribution<std::size_t>(0, 10)(rng));
      for (auto& c : v) c = std::string(1, static_cast<char>('a' + rng() % 4));
      return v;
    };
    const auto a = draw(), b = draw();
    const auto got = setminer::lcss(a, b);
    if (got.size() == oracles::brute_force_lcs_length(a, b) && oracles::contains_subsequence(got, a) &&
        oracles::contains_subsequence(got, b))
      ++ok;
  }
  return {ok == n, std::to_string(ok) + "/" + std::to_string(n)};
}

Verdict recovery() {
  const auto t = Clock::now();
  const auto& d = desk();
  const auto tuned = feateng::tune_threshold(d.traces, desk_options().cv);
  const auto mined = setminer::mine_recurrent_sets(restricted_sequences(d.traces, tuned.selection), {5, 5});
  const double secs = seconds_since(t);
  std::size_t planted = 0, found = 0;
  std::string missed;
  for (const auto& p : synthfleet::planted_scenarios(d.fleet.truth)) {
    if (p.codes.size() > 5) continue;
    ++planted;
    const bool hit = std::any_of(mined.begin(), mined.end(), [&](const auto& f) {
      return f.codes == p.codes && f.support[index_of(p.cls)] >= 5;
    });
    if (hit) ++found;
    else missed += " " + p.codes.front() + "..";
  }
  const double frac = planted ? static_cast<double>(found) / static_cast<double>(planted) : 0.0;
  return {frac >= 0.90 && secs < 60, std::to_string(found) + "/" + std::to_string(planted) + " planted signatures, " +
                                         fmt(secs, 2) + " s" + (missed.empty() ? "" : ", missed" + missed)};
}

Verdict end_to_end() {
  const auto& d = desk();
  const auto& r = d.holdout;
  return {r.weighted_f1 >= 0.80 && r.classified_fraction >= 0.7 && d.pipeline_seconds < 300,
          "held-out " + std::to_string(d.valid.size()) + " incidents after day 360: weighted F1 " + fmt(r.weighted_f1) +
              ", classified " + fmt(r.classified_fraction) + ", config " +
              d.result.artifact.ensemble.config().label() + ", " + fmt(d.pipeline_seconds, 1) + " s"};
}

Verdict ensemble_vs_single() {
  const auto spec = synthfleet::FleetSpec::lookback_noise();
  const auto traces = testsupport::traces_of(synthfleet::generate(spec));
  auto options = desk_options();
  options.single_baselines = true;
  const auto result = train_pipeline(traces, options, spec.fleet);
  const auto* ens = result.grid.find(cascade::table1_ensembles().back().label(), false);
  const auto* single = result.grid.find("single[240]", true);
  if (!ens || !single) return {false, "grid rows missing"};
  const double e = ens->summary.mean_f1, s = single->summary.mean_f1;
  return {e >= s - 0.01, "lookback-noise fleet: " + ens->config.label() + " CV F1 " + fmt(e) + " vs single[240] " +
                             fmt(s) + " (tuned best " + result.grid.best_config().label() + " " +
                             fmt(result.grid.rows[result.grid.best].summary.mean_f1) + ")"};
}

// desk-scale store shared by the training-budget and service criteria
struct Served {
  testsupport::TempDir dir{"acceptance"};
  std::unique_ptr<FileStore> store;
  std::vector<Incident> held_out;
  Served() {
    const auto& d = desk();
    store = std::make_unique<FileStore>(dir.path());
    store->append_events(d.spec.fleet, d.fleet.events);
    for (const auto& inc : d.fleet.incidents) {
      if (inc.timestamp <= d.split) store->record_incident(inc);
      else held_out.push_back(inc);
    }
  }
};

Served& served() {
  static Served s;
  return s;
}

Verdict training_budget() {
  const auto& d = desk();
  const auto dataset = served().store->export_training_set(d.spec.fleet);
  const auto config = cascade::table1_ensembles().back();
  const auto t = Clock::now();
  const auto model = cascade::train_ensemble(dataset, config, d.result.artifact.ensemble.vocabulary());
  const double secs = seconds_since(t);
  const auto t2 = Clock::now();
  const auto tuned = cascade::train_ensemble(dataset, d.result.artifact.ensemble.config(), d.result.artifact.ensemble.vocabulary());
  const double secs2 = seconds_since(t2);
  return {secs <= 10 && secs2 <= 10, std::to_string(dataset.size()) + " exported incidents: " + config.label() + " " +
                                         fmt(secs, 3) + " s, tuned " + tuned.config().label() + " " + fmt(secs2, 3) + " s"};
}

Verdict degenerate_cascade() {
  const auto& d = desk();
  const auto& vocab = d.result.artifact.ensemble.vocabulary();
  const setminer::FeatureMatcher matcher(vocab);
  std::size_t total = 0, agree = 0;
  for (int w : cascade::table1_window_sizes()) {
    cascade::EnsembleConfig config;
    config.windows = {WindowSpec{w}};
    const auto model = cascade::train_ensemble(d.traces, config, vocab);
    std::vector<nbayes::FeatureSet> windows;
    std::vector<SubsystemClass> labels;
    for (const auto& t : d.traces) {
      windows.push_back(matcher.match_events(window_suffix(t, WindowSpec{w})));
      labels.push_back(label_of(t));
    }
    const auto table = nbayes::fit_counts(windows, labels, vocab.size(), config.beta);
    for (std::size_t i = 0; i < d.traces.size(); ++i) {
      ++total;
      const auto s = model.predict(d.traces[i]);
      const auto v = nbayes::classify_window(table, windows[i]);
      bool same = s.classified() == v.has_value();
      if (same && v) {
        const double a = s.classification->log_score, b = v->log_score;
        same = s.classification->cls == v->cls && std::memcmp(&a, &b, sizeof a) == 0 &&
               s.classification->matched_feature_ids == std::vector<std::uint32_t>(windows[i].begin(), windows[i].end());
      }
      agree += same;
    }
  }
  return {agree == total, std::to_string(agree) + "/" + std::to_string(total) +
                              " predictions identical over 11 window sizes x every incident"};
}

Verdict anti_monotone() {
  const auto& d = desk();
  const auto& full = d.result.artifact.ensemble.vocabulary();
  const auto config = cascade::table1_ensembles().back();
  const auto base = classified_ids(cascade::train_ensemble(d.traces, config, full), d.traces);
  std::mt19937_64 rng(909);
  std::size_t ok = 0;
  for (int round = 0; round < 50; ++round) {
    const double keep = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    std::vector<setminer::EventSetFeature> pruned;
    for (const auto& f : full)
      if (std::bernoulli_distribution(keep)(rng)) pruned.push_back(f);
    if (pruned.empty()) pruned.push_back(full.front());
    const auto sub = classified_ids(cascade::train_ensemble(d.traces, config, pruned), d.traces);
    ok += std::includes(base.begin(), base.end(), sub.begin(), sub.end());
  }
  return {ok == 50, std::to_string(ok) + "/50 prunings classify a subset of the full-vocabulary set (" +
                        std::to_string(base.size()) + " classified at full vocabulary)"};
}

Verdict determinism() {
  const auto& a = desk();
  const auto b = run_desk();
  const auto ha = content_hash(a.result.artifact), hb = content_hash(b.result.artifact);
  const bool data_same = a.fleet.events == b.fleet.events && a.fleet.incidents == b.fleet.incidents;
  const bool same = data_same && ha == hb && a.holdout == b.holdout &&
                    a.result.artifact.eval_summary == b.result.artifact.eval_summary;
  return {same, "hash " + ha.substr(0, 16) + (ha == hb ? " == " : " != ") + hb.substr(0, 16) +
                    (a.holdout == b.holdout ? ", held-out reports equal" : ", held-out reports differ") +
                    (data_same ? "" : ", generated data differs")};
}

// Service: v1 is the desk model, v2 a deliberately different one; the stress
// phase swaps them under load and checks every response against the
// prediction of the version it names.
struct ServiceRun {
  std::unique_ptr<diagsvc::Service> service;
  std::thread listener;
  int port = 0;
  std::shared_ptr<const ModelArtifact> v1, v2;

  ServiceRun() {
    auto& s = served();
    const auto& d = desk();
    auto a1 = d.result.artifact;
    a1.created_at = diagsvc::now();
    s.store->save_model(a1);
    auto options = desk_options();
    options.run_oat = false;
    options.grid = {cascade::table1_ensembles().back()};
    auto a2 = train_pipeline(s.store->export_training_set(d.spec.fleet), options, d.spec.fleet).artifact;
    a2.created_at = diagsvc::now();
    s.store->save_model(a2);
    v1 = std::make_shared<const ModelArtifact>(s.store->load_model(d.spec.fleet, 1));
    v2 = std::make_shared<const ModelArtifact>(s.store->load_model(d.spec.fleet, 2));

    diagsvc::ServiceConfig config;
    config.default_fleet = d.spec.fleet;
    service = std::make_unique<diagsvc::Service>(*s.store, config);
    service->publish(v1);
    port = service->bind_to_any_port();
    listener = std::thread([this] { service->listen_after_bind(); });
    service->server().wait_until_ready();
  }
  ~ServiceRun() {
    service->stop();
    if (listener.joinable()) listener.join();
  }
};

ServiceRun& service_run() {
  static ServiceRun r;
  return r;
}

json declare_body(const Incident& base, const std::string& suffix) {
  auto inc = base;
  inc.id += suffix;
  inc.label.reset();
  return to_json(inc);
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

Verdict service_contract() {
  auto& run = service_run();
  auto& s = served();
  const auto& held = s.held_out;

  // what each version predicts for each held-out incident
  std::vector<std::optional<Classification>> expect1, expect2;
  std::size_t differing = 0;
  for (const auto& inc : held) {
    const auto trace = s.store->trace_for(inc);
    expect1.push_back(run.v1->predict(trace).classification);
    expect2.push_back(run.v2->predict(trace).classification);
    differing += expect1.back() != expect2.back();
  }

  // quiet phase: sequential declarations, every held-out incident once
  std::vector<double> latencies;
  std::size_t stored_mismatch = 0;
  {
    httplib::Client client("127.0.0.1", run.port);
    client.set_read_timeout(30, 0);
    for (const auto& inc : held) {
      const auto t = Clock::now();
      auto r = client.Post("/api/v1/incidents", declare_body(inc, "").dump(), "application/json");
      latencies.push_back(seconds_since(t) * 1000);
      if (!r || r->status != 201) return {false, "declaration failed for " + inc.id};
      const auto returned = suggestion_from_json(json::parse(r->body)["suggestion"]);
      const auto stored = s.store->latest_suggestion(inc.id);
      if (!stored || !(*stored == returned)) ++stored_mismatch;
    }
  }
  const double p95 = percentile(latencies, 0.95);

  // stress phase: 4 clients declaring while the active model flips
  std::atomic<bool> done{false};
  std::atomic<std::size_t> violations{0}, seen1{0}, seen2{0}, failures{0};
  std::vector<double> stress_latencies;
  std::mutex lat_mu;
  std::thread swapper([&] {
    bool one = false;
    while (!done) {
      run.service->publish(one ? run.v1 : run.v2);
      one = !one;
      std::this_thread::sleep_for(std::chrono::microseconds(500));
    }
  });
  std::vector<std::thread> clients;
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&, c] {
      httplib::Client client("127.0.0.1", run.port);
      client.set_read_timeout(30, 0);
      for (std::size_t i = static_cast<std::size_t>(c); i < held.size(); i += 2) {
        const auto t = Clock::now();
        auto r = client.Post("/api/v1/incidents", declare_body(held[i], "-s" + std::to_string(c)).dump(),
                             "application/json");
        {
          std::lock_guard lock(lat_mu);
          stress_latencies.push_back(seconds_since(t) * 1000);
        }
        if (!r || r->status != 201) {
          ++failures;
          continue;
        }
        const auto got = suggestion_from_json(json::parse(r->body)["suggestion"]);
        if (got.model_version == 1) {
          ++seen1;
          if (got.classification != expect1[i]) ++violations;
        } else if (got.model_version == 2) {
          ++seen2;
          if (got.classification != expect2[i]) ++violations;
        } else {
          ++violations;
        }
      }
    });
  }
  for (auto& t : clients) t.join();
  done = true;
  swapper.join();
  run.service->publish(run.v2);

  const double stress_p95 = percentile(stress_latencies, 0.95);
  const bool pass = p95 < 500 && stress_p95 < 500 && violations == 0 && failures == 0 && stored_mismatch == 0 &&
                    seen1 > 0 && seen2 > 0 && differing > 0;
  return {pass, "P95 " + fmt(p95, 1) + " ms quiet / " + fmt(stress_p95, 1) + " ms under swap (" +
                    std::to_string(latencies.size() + stress_latencies.size()) + " declarations), " +
                    std::to_string(violations.load()) + " mixed-version responses (v1 " + std::to_string(seen1.load()) +
                    ", v2 " + std::to_string(seen2.load()) + ", versions differ on " + std::to_string(differing) +
                    " incidents), " + std::to_string(stored_mismatch) + " stored/returned mismatches"};
}

Verdict feedback_precedence() {
  auto& run = service_run();
  auto& s = served();
  const auto& fleet = desk().spec.fleet;
  // a training incident whose label we overturn
  const auto target = s.store->incidents(fleet).front();
  const auto relabel = *target.label == SubsystemClass::Body ? SubsystemClass::Cabling : SubsystemClass::Body;

  httplib::Client client("127.0.0.1", run.port);
  client.set_read_timeout(60, 0);
  auto r = client.Post("/api/v1/incidents/" + target.id + "/feedback",
                       json{{"label", std::string(to_string(relabel))}, {"rationale", "acceptance"}}.dump(),
                       "application/json");
  if (!r || r->status != 200) return {false, "feedback rejected"};

  const auto exported = s.store->export_training_set(fleet);
  auto it = std::find_if(exported.begin(), exported.end(), [&](const auto& t) { return t.incident.id == target.id; });
  const bool exported_ok = it != exported.end() && it->incident.label == relabel &&
                           it->incident.label_source == LabelSource::ExpertFeedback;

  const auto before = s.store->list_models(fleet).back().version;
  r = client.Post("/api/v1/models/retrain", "{}", "application/json");
  if (!r || r->status != 202) return {false, "retrain not accepted"};
  const auto job = run.service->wait_job(json::parse(r->body)["job_id"].get<std::string>());
  if (job.state != diagsvc::JobState::Done) return {false, "retrain failed: " + job.reason};

  r = client.Get("/api/v1/models");
  const auto models = json::parse(r->body);
  const auto latest = models["models"].back()["version"].get<std::int64_t>();
  const auto model = s.store->load_model(fleet, latest);
  const auto& fp = model.fingerprint.incidents;
  const bool in_fp = std::find(fp.begin(), fp.end(), std::pair{target.id, relabel}) != fp.end();
  const bool pass = exported_ok && latest == before + 1 && models["active_version"] == latest && in_fp;
  return {pass, target.id + " relabeled " + std::string(to_string(*target.label)) + " -> " +
                    std::string(to_string(relabel)) + "; export " + (exported_ok ? "reflects it" : "does not reflect it") +
                    "; registry v" + std::to_string(before) + " -> v" + std::to_string(latest) + "; fingerprint " +
                    (in_fp ? "includes" : "lacks") + " the expert label"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"likelihood normalization", normalization},
      {"exact-rational posterior oracle", posterior_oracle},
      {"LCSS vs brute force", lcss_oracle},
      {"planted-signature recovery", recovery},
      {"end-to-end F1 on temporal split", end_to_end},
      {"ensemble vs single window at 240 min", ensemble_vs_single},
      {"training budget", training_budget},
      {"degenerate cascade equivalence", degenerate_cascade},
      {"coverage anti-monotonicity", anti_monotone},
      {"determinism", determinism},
      {"service latency and hot swap", service_contract},
      {"feedback precedence", feedback_precedence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << "  " << criteria[i].first << "  -- "
              << v.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
