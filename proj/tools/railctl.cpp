// railctl: offline pipeline driver and service launcher.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "railcause/railcause.hpp"

using namespace railcause;

namespace {

struct Common {
  std::string data = "data";
  std::string fleet;
  bool json_out = false;
};

Instant parse_instant_or_throw(const std::string& s, const char* what) {
  auto t = parse_instant(s);
  if (!t) throw Error(ErrorKind::UnparseableTimestamp, std::string(what) + ": '" + s + "'");
  return *t;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::StorageFailure, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path + ": " + e.what());
  }
}

std::vector<cascade::EnsembleConfig> parse_custom_grid(const std::vector<std::string>& specs, double beta) {
  std::vector<cascade::EnsembleConfig> out;
  for (const auto& spec : specs) {
    cascade::EnsembleConfig c;
    c.beta = beta;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        c.windows.emplace_back(std::stoi(tok));
      } catch (const std::logic_error&) {
        throw Error(ErrorKind::InvalidConfig, "window list '" + spec + "' is not comma-separated minutes");
      }
    }
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

void print(const Common& c, const json& j, const std::string& text) {
  if (c.json_out)
    std::cout << j.dump(2) << '\n';
  else
    std::cout << text;
}

std::string suggestion_text(const Suggestion& s) {
  std::ostringstream out;
  out << "incident " << s.incident_id << " (model v" << s.model_version << "): ";
  if (!s.classified()) {
    out << "Unclassified\n";
    return out.str();
  }
  const auto& c = *s.classification;
  out << to_string(c.cls) << " via window " << c.window_minutes << " min\n";
  for (const auto& f : c.matched_features) {
    out << "  evidence:";
    for (const auto& code : f) out << ' ' << code;
    out << '\n';
  }
  return out.str();
}

std::string model_text(const ModelArtifact& a) {
  std::ostringstream out;
  out << "version " << a.version << "  fleet " << a.fleet << "  config " << a.ensemble.config().label()
      << "  t_r " << a.threshold() << "  features " << a.ensemble.vocabulary().size() << "\n"
      << "training " << a.fingerprint.sample_count << " incidents " << format_instant(a.fingerprint.first_incident)
      << " .. " << format_instant(a.fingerprint.last_incident) << "  hash " << content_hash(a) << "\n"
      << "cross-validated (pooled out-of-fold):\n"
      << evalkit::to_table(a.eval_summary);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"railway incident diagnostics"};
  app.require_subcommand(1);
  Common common;
  app.add_flag("--json", common.json_out, "machine-readable output");

  auto add_store = [&](CLI::App* sub, bool need_fleet = true) {
    sub->add_option("--data", common.data, "store directory")->capture_default_str();
    auto* f = sub->add_option("--fleet", common.fleet, "fleet id");
    if (need_fleet) f->required();
    sub->add_flag("--json", common.json_out, "machine-readable output");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic fleet");
  std::string spec_file, preset = "default", out_dir;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", spec_file, "fleet spec JSON")->check(CLI::ExistingFile);
  gen->add_option("--preset", preset, "default | lookback_noise | confusable")->capture_default_str();
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override the spec seed");
  gen->add_flag("--json", common.json_out);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load line-delimited events and incidents into the store");
  std::vector<std::string> event_files, incident_files;
  ingest->add_option("--events", event_files, "event .jsonl files")->check(CLI::ExistingFile);
  ingest->add_option("--incidents", incident_files, "incident .jsonl files")->check(CLI::ExistingFile);
  add_store(ingest, false);

  // shared training knobs
  double target_f1 = 0.90, oat_min_f1 = 0.85, beta = 0.01;
  std::uint64_t seed = 0;
  std::size_t max_len = 5, min_support = 5;
  std::string until, grid = "table1", geometry = "nested", priors = "empirical";
  std::vector<std::string> windows;
  bool no_oat = false;
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--target-f1", target_f1, "relevance threshold target")->capture_default_str();
    sub->add_option("--oat-min-f1", oat_min_f1, "OaT acceptance floor")->capture_default_str();
    sub->add_option("--seed", seed, "cross-validation seed")->capture_default_str();
    sub->add_option("--until", until, "train on incidents up to this instant");
    sub->add_flag("--no-oat", no_oat, "skip the one-at-a-time stage");
  };

  auto* features = app.add_subcommand("features", "relevance table and OaT report");
  add_store(features);
  add_training(features);

  auto* mine = app.add_subcommand("mine", "mine recurrent event sets");
  add_store(mine);
  add_training(mine);
  mine->add_option("--max-len", max_len)->capture_default_str();
  mine->add_option("--min-support", min_support)->capture_default_str();

  auto* train = app.add_subcommand("train", "tune and train an ensemble, save it to the registry");
  add_store(train);
  add_training(train);
  train->add_option("--max-len", max_len)->capture_default_str();
  train->add_option("--min-support", min_support)->capture_default_str();
  train->add_option("--grid", grid, "table1 | custom")->check(CLI::IsMember({"table1", "custom"}))->capture_default_str();
  train->add_option("--windows", windows, "custom grid entries, e.g. 5,10,15 (repeatable)");
  train->add_option("--beta", beta, "smoothing")->capture_default_str();
  train->add_option("--priors", priors, "empirical | uniform")->capture_default_str();
  train->add_option("--geometry", geometry, "nested | bands")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "score a model on incidents after a split instant");
  add_store(evaluate);
  std::string model_version = "latest", split;
  evaluate->add_option("--model", model_version, "version or 'latest'")->capture_default_str();
  evaluate->add_option("--split", split, "held-out period starts after this instant")->required();

  auto* predict = app.add_subcommand("predict", "suggest a cause for one stored incident");
  add_store(predict, false);  // the incident names its fleet
  std::string incident_id;
  predict->add_option("--incident", incident_id)->required();
  predict->add_option("--model", model_version, "version or 'latest'")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  diagsvc::ServiceConfig svc;
  svc.port = std::stoi(env_or("RAILCAUSE_PORT", "8080"));
  svc.host = env_or("RAILCAUSE_HOST", "127.0.0.1");
  svc.cors_origin = env_or("RAILCAUSE_CORS_ORIGIN", "*");
  std::string token = env_or("RAILCAUSE_TOKEN", ""), static_dir = env_or("RAILCAUSE_STATIC_DIR", "");
  common.data = env_or("RAILCAUSE_DATA", common.data);
  add_store(serve, false);
  serve->add_option("--port", svc.port)->capture_default_str();
  serve->add_option("--host", svc.host)->capture_default_str();
  serve->add_option("--token", token, "require this bearer token on /api");
  serve->add_option("--cors-origin", svc.cors_origin)->capture_default_str();
  serve->add_option("--static", static_dir, "serve UI assets from this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto training_options = [&] {
    PipelineOptions o;
    o.cv.seed = seed;
    o.target_f1 = target_f1;
    o.oat_min_f1 = oat_min_f1;
    o.run_oat = !no_oat;
    o.mining = {max_len, min_support};
    o.beta = beta;
    o.priors = nbayes::parse_prior_mode(priors);
    o.geometry = cascade::parse_geometry(geometry);
    return o;
  };
  auto range = [&] {
    TimeRange r;
    if (!until.empty()) r.to = parse_instant_or_throw(until, "--until");
    return r;
  };
  auto parse_version = [&]() -> std::optional<std::int64_t> {
    if (model_version == "latest") return std::nullopt;
    try {
      return std::stoll(model_version);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::InvalidConfig, "--model must be an integer or 'latest'");
    }
  };

  try {
    if (*gen) {
      synthfleet::FleetSpec spec = preset == "lookback_noise" ? synthfleet::FleetSpec::lookback_noise()
                                   : preset == "confusable"   ? synthfleet::FleetSpec::confusable()
                                   : preset == "default"      ? synthfleet::FleetSpec::desk_default()
                                                              : throw Error(ErrorKind::InvalidSpec, "unknown preset " + preset);
      if (!spec_file.empty()) spec = synthfleet::fleet_spec_from_json(read_json_file(spec_file));
      if (gen_seed) spec.seed = *gen_seed;
      const auto fleet = synthfleet::generate(spec);
      synthfleet::write_fleet(fleet, spec, out_dir);
      json j = {{"out", out_dir}, {"fleet", spec.fleet}, {"events", fleet.events.size()},
                {"incidents", fleet.incidents.size()}, {"seed", spec.seed}};
      print(common, j,
            "wrote " + std::to_string(fleet.events.size()) + " events and " + std::to_string(fleet.incidents.size()) +
                " incidents for fleet " + spec.fleet + " to " + out_dir + "\n");
      return 0;
    }

    FileStore store(common.data);

    if (*ingest) {
      std::size_t n_incidents = 0, n_events = 0;
      std::string fleet = common.fleet;
      std::vector<Incident> incidents;
      for (const auto& file : incident_files) {
        std::ifstream in(file);
        std::string line;
        for (std::size_t ln = 1; std::getline(in, line); ++ln) {
          if (line.empty()) continue;
          try {
            auto inc = validate_incident(json::parse(line));
            if (inc.fleet.empty()) inc.fleet = common.fleet;
            if (fleet.empty()) fleet = inc.fleet;
            incidents.push_back(std::move(inc));
          } catch (const json::exception& e) {
            throw Error(ErrorKind::InvalidRecord, file + ":" + std::to_string(ln) + ": " + e.what());
          }
        }
      }
      if (!event_files.empty() && fleet.empty())
        throw Error(ErrorKind::InvalidRecord, "events need a fleet: pass --fleet");
      std::vector<Event> batch;
      std::size_t rejected = 0;
      for (const auto& file : event_files) {
        std::ifstream in(file);
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          try {
            batch.push_back(validate_event(json::parse(line)));
          } catch (const json::exception&) {
            ++rejected;
          } catch (const Error&) {
            ++rejected;
          }
          if (batch.size() == 50'000) {
            n_events += store.append_events(fleet, batch);
            batch.clear();
          }
        }
      }
      if (!batch.empty()) n_events += store.append_events(fleet, batch);
      for (const auto& inc : incidents) {
        store.record_incident(inc);
        ++n_incidents;
      }
      json j = {{"events", n_events}, {"rejected_events", rejected}, {"incidents", n_incidents}, {"fleet", fleet}};
      print(common, j,
            "ingested " + std::to_string(n_events) + " events (" + std::to_string(rejected) + " rejected) and " +
                std::to_string(n_incidents) + " incidents into " + common.data + "\n");
      return 0;
    }

    if (*features || *mine) {
      const auto dataset = store.export_training_set(common.fleet, range());
      const auto options = training_options();
      feateng::TuningOptions tuning{{options.beta, options.priors}, {}, 0.01};
      auto tuned = feateng::tune_threshold(dataset, options.cv, options.target_f1, tuning);
      feateng::OatResult oat;
      oat.selection = tuned.selection;
      if (options.run_oat) oat = feateng::oat_select(dataset, tuned.selection, options.cv, options.oat_min_f1, tuning);
      if (*features) {
        const auto table = feateng::compute_relevance(dataset);
        json j = {{"threshold", tuned.threshold}, {"target_reached", tuned.target_reached},
                  {"selection", feateng::to_json(oat.selection)}};
        std::string text = "t_r " + std::to_string(tuned.threshold) +
                           (tuned.target_reached ? "" : " (target not reached; best effort)") + "\n" +
                           feateng::export_relevance(table, oat.selection, oat.report);
        print(common, j, text);
      } else {
        const auto mined = setminer::mine_recurrent_sets(restricted_sequences(dataset, oat.selection), options.mining);
        json j = json::array();
        for (const auto& f : mined) j.push_back(setminer::to_json(f));
        print(common, j, setminer::export_features(mined));
      }
      return 0;
    }

    if (*train) {
      auto options = training_options();
      if (grid == "custom") {
        if (windows.empty()) throw Error(ErrorKind::InvalidConfig, "--grid custom needs at least one --windows entry");
        options.grid = parse_custom_grid(windows, beta);
      }
      const auto dataset = store.export_training_set(common.fleet, range());
      auto result = train_pipeline(dataset, options, common.fleet);
      result.artifact.created_at = diagsvc::now();
      result.artifact.version = store.save_model(result.artifact);
      json j = {{"version", result.artifact.version},
                {"content_hash", content_hash(result.artifact)},
                {"config", cascade::to_json(result.artifact.ensemble.config())},
                {"threshold", result.artifact.threshold()},
                {"eval_summary", evalkit::to_json(result.artifact.eval_summary)}};
      print(common, j, model_text(result.artifact));
      return 0;
    }

    if (*evaluate) {
      const auto model = store.load_model(common.fleet, parse_version());
      const auto cut = parse_instant_or_throw(split, "--split");
      const auto dataset = store.export_training_set(common.fleet, {});
      auto [_, held_out] = evalkit::temporal_split(dataset, cut);
      std::vector<Suggestion> preds;
      std::vector<std::pair<std::string, SubsystemClass>> truth;
      for (const auto& t : held_out) {
        preds.push_back(model.predict(t));
        truth.emplace_back(t.incident.id, label_of(t));
      }
      const auto report = evalkit::score(preds, truth);
      json j = {{"version", model.version}, {"split", format_instant(cut)}, {"report", evalkit::to_json(report)}};
      print(common, j,
            "model v" + std::to_string(model.version) + " on " + std::to_string(held_out.size()) +
                " incidents after " + format_instant(cut) + "\n" + evalkit::to_table(report));
      return 0;
    }

    if (*predict) {
      auto incident = store.find_incident(incident_id);
      if (!incident) throw Error(ErrorKind::UnknownIncident, "no incident " + incident_id);
      const auto model = store.load_model(incident->fleet, parse_version());
      const auto suggestion = model.predict(store.trace_for(*incident), diagsvc::now());
      print(common, to_json(suggestion), suggestion_text(suggestion));
      return 0;
    }

    if (*serve) {
      if (!token.empty()) svc.bearer_token = token;
      if (!static_dir.empty()) svc.static_dir = static_dir;
      svc.default_fleet = common.fleet;
      diagsvc::Service service(store, svc);
      std::cerr << "listening on http://" << svc.host << ":" << svc.port << "/api/v1\n";
      if (!service.listen()) throw Error(ErrorKind::StorageFailure, "cannot listen on port " + std::to_string(svc.port));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "railctl: " << to_string(e.kind()) << ": " << e.detail() << '\n';
    return 1;
  }
  return 0;
}
