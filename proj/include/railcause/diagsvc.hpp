#pragma once

// HTTP service over a Store: ingestion, suggestions on incident declaration,
// expert feedback, asynchronous retraining, registry and metrics.

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "railcause/datastore.hpp"
#include "railcause/pipeline.hpp"

namespace railcause::diagsvc {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string default_fleet;             // used when a request names no fleet
  std::optional<std::string> bearer_token;
  std::string cors_origin = "*";
  std::optional<std::string> static_dir;  // review UI assets, mounted at /
  PipelineOptions pipeline;
};

enum class IncidentStatus { Classified, Unclassified, Disagreement, Confirmed };

inline std::string_view to_string(IncidentStatus s) {
  switch (s) {
    case IncidentStatus::Classified: return "classified";
    case IncidentStatus::Unclassified: return "unclassified";
    case IncidentStatus::Disagreement: return "disagreement";
    case IncidentStatus::Confirmed: return "confirmed";
  }
  return "?";
}

inline std::optional<IncidentStatus> parse_status(std::string_view s) {
  for (auto v : {IncidentStatus::Classified, IncidentStatus::Unclassified, IncidentStatus::Disagreement,
                 IncidentStatus::Confirmed})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

// Expert feedback settles an incident. Without it, an Unclassified suggestion
// stays unclassified, and a technician label either confirms the suggestion
// or disagrees with it.
inline IncidentStatus status_of(const Incident& incident, const std::optional<Suggestion>& suggestion,
                                bool has_feedback) {
  if (has_feedback) return IncidentStatus::Confirmed;
  if (!suggestion || !suggestion->classified()) return IncidentStatus::Unclassified;
  if (!incident.label) return IncidentStatus::Classified;
  return *incident.label == *suggestion->predicted() ? IncidentStatus::Confirmed : IncidentStatus::Disagreement;
}

enum class JobState { Pending, Running, Done, Failed };

inline std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Pending: return "pending";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "?";
}

struct Job {
  std::string id;
  std::string fleet;
  JobState state = JobState::Pending;
  std::optional<std::int64_t> version;
  std::string reason;
  Instant submitted_at{};
  Instant finished_at{};
};

inline json to_json(const Job& j) {
  json out = {{"job_id", j.id},
              {"fleet", j.fleet},
              {"state", std::string(to_string(j.state))},
              {"submitted_at", format_instant(j.submitted_at)}};
  if (j.version) out["version"] = *j.version;
  if (j.state == JobState::Failed) out["reason"] = j.reason;
  if (j.state == JobState::Done || j.state == JobState::Failed) out["finished_at"] = format_instant(j.finished_at);
  return out;
}

struct RetrainRequest {
  std::optional<Instant> until;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
};

// Failure mapped onto an HTTP status and the error body.
struct HttpError : std::runtime_error {
  HttpError(int status, std::string code, std::string message, json details = json::object())
      : std::runtime_error(message), status(status), code(std::move(code)), details(std::move(details)) {}
  int status;
  std::string code;
  json details;
};

inline int http_status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnknownIncident:
    case ErrorKind::VersionNotFound: return 404;
    case ErrorKind::DuplicateIncidentId: return 409;
    case ErrorKind::InvalidClass: return 422;
    case ErrorKind::StorageFailure:
    case ErrorKind::SchemaMismatch: return 500;
    default: return 400;
  }
}

inline Instant now() { return std::chrono::time_point_cast<milliseconds>(std::chrono::system_clock::now()); }

class Service {
 public:
  using ModelPtr = std::shared_ptr<const ModelArtifact>;

  Service(Store& store, ServiceConfig config) : store_(store), config_(std::move(config)) {
    for (const auto& fleet : store_.fleets()) {
      try {
        publish(std::make_shared<const ModelArtifact>(store_.load_model(fleet)));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::VersionNotFound) throw;
      }
    }
    routes();
  }

  ~Service() {
    stop();
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(jobs_mu_);
      workers.swap(workers_);
    }
    for (auto& t : workers)
      if (t.joinable()) t.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // -- model snapshots ------------------------------------------------------

  ModelPtr active_model(const std::string& fleet) const {
    std::lock_guard lock(models_mu_);
    auto it = models_.find(fleet);
    return it == models_.end() ? nullptr : it->second;
  }

  void publish(ModelPtr model) {
    std::lock_guard lock(models_mu_);
    models_[model->fleet] = std::move(model);
  }

  // -- library-level operations (the HTTP handlers are thin wrappers) -------

  json ingest_events(const std::string& fleet, const json& records) {
    if (!records.is_array()) throw HttpError(400, "malformed_request", "events must be a JSON array");
    std::vector<Event> accepted;
    json reasons = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        accepted.push_back(validate_event(records[i]));
      } catch (const Error& e) {
        reasons.push_back({{"index", i}, {"code", std::string(railcause::to_string(e.kind()))}, {"message", e.detail()}});
      }
    }
    if (!accepted.empty()) store_.append_events(fleet, accepted);
    return {{"accepted", accepted.size()}, {"rejected", reasons.size()}, {"reasons", reasons}};
  }

  Suggestion declare_incident(Incident incident) {
    auto model = active_model(incident.fleet);
    if (!model) throw HttpError(503, "no_model", "fleet " + incident.fleet + " has no trained model");
    store_.record_incident(incident);
    const auto trace = store_.trace_for(incident);
    auto suggestion = model->predict(trace, now());
    store_.record_suggestion(incident.fleet, suggestion);
    return suggestion;
  }

  IncidentStatus status(const Incident& incident) const {
    return status_of(incident, store_.latest_suggestion(incident.id),
                     store_.effective_feedback(incident.id).has_value());
  }

  json incident_summary(const Incident& incident) const {
    const auto suggestion = store_.latest_suggestion(incident.id);
    const auto feedback = store_.effective_feedback(incident.id);
    json j = {{"incident", to_json(incident)},
              {"status", std::string(to_string(status_of(incident, suggestion, feedback.has_value())))},
              {"suggestion", suggestion ? to_json(*suggestion) : json(nullptr)}};
    const FeedbackRecord* fb = feedback ? &*feedback : nullptr;
    if (auto label = effective_label(incident, fb)) {
      j["effective_label"] = std::string(railcause::to_string(label->first));
      j["label_source"] = std::string(railcause::to_string(label->second));
    } else {
      j["effective_label"] = nullptr;
      j["label_source"] = nullptr;
    }
    return j;
  }

  json record_feedback(const std::string& incident_id, const json& body) {
    auto incident = store_.find_incident(incident_id);
    if (!incident) throw HttpError(404, "not_found", "no incident " + incident_id);
    if (!body.is_object()) throw HttpError(400, "malformed_request", "feedback body must be an object");
    const json* label = body.contains("label") ? &body["label"] : body.contains("expert_label") ? &body["expert_label"] : nullptr;
    if (!label || !label->is_string())
      throw HttpError(422, "InvalidClass", "feedback needs a 'label' naming one of the 12 subsystem classes");
    auto cls = try_parse_class(label->get<std::string>());
    if (!cls)
      throw HttpError(422, "InvalidClass", "unknown subsystem class '" + label->get<std::string>() + "'",
                      {{"allowed", std::vector<std::string>(kClassNames.begin(), kClassNames.end())}});
    FeedbackRecord rec;
    rec.incident_id = incident_id;
    rec.expert_label = *cls;
    rec.technician_label = incident->label;
    rec.suggestion = store_.latest_suggestion(incident_id);
    rec.rationale = body.value("rationale", "");
    rec.recorded_at = now();
    const auto version = store_.record_feedback(rec);
    json out = incident_summary(*incident);
    out["feedback_version"] = version;
    return out;
  }

  json queue(const std::string& fleet, std::optional<IncidentStatus> filter, std::size_t page,
             std::size_t page_size) const {
    std::vector<Incident> all;
    if (fleet.empty()) {
      for (const auto& f : store_.fleets()) {
        auto v = store_.incidents(f);
        all.insert(all.end(), v.begin(), v.end());
      }
    } else {
      all = store_.incidents(fleet);
    }
    std::sort(all.begin(), all.end(), [](const Incident& a, const Incident& b) {
      return std::tie(b.timestamp, b.id) < std::tie(a.timestamp, a.id);
    });
    json items = json::array();
    std::size_t total = 0;
    const std::size_t first = page * page_size;
    for (const auto& inc : all) {
      if (filter && status(inc) != *filter) continue;
      if (total >= first && total < first + page_size) items.push_back(incident_summary(inc));
      ++total;
    }
    return {{"items", items}, {"page", page}, {"page_size", page_size}, {"total", total}};
  }

  // Returns the job id; 409 when the fleet already has a job in flight.
  std::string start_retrain(const std::string& fleet, RetrainRequest request = {}) {
    std::lock_guard lock(jobs_mu_);
    for (const auto& [_, j] : jobs_)
      if (j.fleet == fleet && (j.state == JobState::Pending || j.state == JobState::Running))
        throw HttpError(409, "retrain_in_progress", "fleet " + fleet + " already has job " + j.id,
                        {{"job_id", j.id}});
    Job job;
    job.id = "job-" + std::to_string(++job_seq_);
    job.fleet = fleet;
    job.submitted_at = now();
    jobs_[job.id] = job;
    workers_.emplace_back([this, id = job.id, fleet, request] { run_retrain(id, fleet, request); });
    return job.id;
  }

  std::optional<Job> job(const std::string& id) const {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  // Blocks until the job leaves pending/running.
  Job wait_job(const std::string& id) const {
    std::unique_lock lock(jobs_mu_);
    jobs_cv_.wait(lock, [&] {
      auto it = jobs_.find(id);
      return it == jobs_.end() || it->second.state == JobState::Done || it->second.state == JobState::Failed;
    });
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw HttpError(404, "not_found", "no job " + id);
    return it->second;
  }

  // -- HTTP -----------------------------------------------------------------

  httplib::Server& server() noexcept { return server_; }

  int bind_to_any_port() { return server_.bind_to_any_port(config_.host); }
  bool bind(int port) { return server_.bind_to_port(config_.host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  bool listen() { return server_.listen(config_.host, config_.port); }
  void stop() {
    if (server_.is_running()) server_.stop();
  }

 private:
  void run_retrain(const std::string& id, const std::string& fleet, const RetrainRequest& request) {
    set_job(id, [](Job& j) { j.state = JobState::Running; });
    try {
      auto dataset = store_.export_training_set(fleet, TimeRange{std::nullopt, request.until});
      auto options = config_.pipeline;
      if (request.seed) options.cv.seed = *request.seed;
      if (request.beta) options.beta = *request.beta;
      auto result = train_pipeline(dataset, options, fleet);
      result.artifact.created_at = now();
      const auto version = store_.save_model(result.artifact);
      auto model = std::make_shared<const ModelArtifact>(store_.load_model(fleet, version));
      publish(std::move(model));
      set_job(id, [&](Job& j) {
        j.state = JobState::Done;
        j.version = version;
        j.finished_at = now();
      });
    } catch (const Error& e) {
      set_job(id, [&](Job& j) {
        j.state = JobState::Failed;
        j.reason = std::string(railcause::to_string(e.kind())) + ": " + e.detail();
        j.finished_at = now();
      });
    } catch (const std::exception& e) {
      set_job(id, [&](Job& j) {
        j.state = JobState::Failed;
        j.reason = e.what();
        j.finished_at = now();
      });
    }
  }

  template <class F>
  void set_job(const std::string& id, F&& f) {
    {
      std::lock_guard lock(jobs_mu_);
      f(jobs_.at(id));
    }
    jobs_cv_.notify_all();
  }

  std::string fleet_param(const httplib::Request& req, const json* body = nullptr) const {
    if (req.has_param("fleet")) return req.get_param_value("fleet");
    if (body && body->is_object() && body->contains("fleet") && (*body)["fleet"].is_string())
      return (*body)["fleet"].get<std::string>();
    return config_.default_fleet;
  }

  std::string require_fleet(const httplib::Request& req, const json* body = nullptr) const {
    auto fleet = fleet_param(req, body);
    if (fleet.empty()) throw HttpError(400, "missing_fleet", "request names no fleet and no default is configured");
    return fleet;
  }

  static json parse_body(const httplib::Request& req, bool allow_empty = false) {
    if (allow_empty && req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw HttpError(400, "malformed_request", "request body is not valid JSON", {{"parse_error", e.what()}});
    }
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback,
                                std::size_t max) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    std::size_t n = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc{} || p != v.data() + v.size())
      throw HttpError(400, "invalid_parameter", std::string(name) + " must be a non-negative integer");
    return std::min(n, max);
  }

  template <class F>
  auto guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, {{"code", e.code}, {"message", e.what()}, {"details", e.details}});
      } catch (const Error& e) {
        reply(res, http_status_of(e.kind()),
              {{"code", std::string(railcause::to_string(e.kind()))}, {"message", e.detail()}, {"details", json::object()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "internal"}, {"message", e.what()}, {"details", json::object()}});
      }
    };
  }

  void routes() {
    if (config_.static_dir) server_.set_mount_point("/", *config_.static_dir);

    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!config_.bearer_token || req.method == "OPTIONS" || req.path.rfind("/api/", 0) != 0)
        return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + *config_.bearer_token)
        return httplib::Server::HandlerResponse::Unhandled;
      reply(res, 401, {{"code", "unauthorized"}, {"message", "missing or invalid bearer token"}, {"details", json::object()}});
      res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
      return httplib::Server::HandlerResponse::Handled;
    });
    server_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!config_.cors_origin.empty()) res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
    });
    server_.Options(R"(/api/v1/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      if (config_.cors_origin.empty()) return;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
    });

    server_.Get("/api/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
                  reply(res, 200, {{"status", "ok"}});
                }));

    server_.Post("/api/v1/events:batch", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const json body = parse_body(req);
                   const json* records = &body;
                   if (body.is_object()) {
                     if (!body.contains("events"))
                       throw HttpError(400, "malformed_request", "envelope must be an array or {fleet, events}");
                     records = &body["events"];
                   } else if (!body.is_array()) {
                     throw HttpError(400, "malformed_request", "envelope must be an array or {fleet, events}");
                   }
                   reply(res, 200, ingest_events(require_fleet(req, &body), *records));
                 }));

    server_.Post("/api/v1/incidents", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const json body = parse_body(req);
                   Incident incident = validate_incident(body);
                   if (incident.fleet.empty()) incident.fleet = require_fleet(req, &body);
                   const auto suggestion = declare_incident(incident);
                   json out = incident_summary(incident);
                   out["suggestion"] = to_json(suggestion);
                   reply(res, 201, out);
                 }));

    server_.Get("/api/v1/incidents", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  std::optional<IncidentStatus> filter;
                  if (req.has_param("status") && !req.get_param_value("status").empty()) {
                    filter = parse_status(req.get_param_value("status"));
                    if (!filter)
                      throw HttpError(400, "invalid_parameter",
                                      "status must be classified, unclassified, disagreement or confirmed");
                  }
                  reply(res, 200,
                        queue(fleet_param(req), filter, size_param(req, "page", 0, 1'000'000),
                              std::max<std::size_t>(1, size_param(req, "page_size", 50, 500))));
                }));

    server_.Get(R"(/api/v1/incidents/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  auto incident = store_.find_incident(id);
                  if (!incident) throw HttpError(404, "not_found", "no incident " + id);
                  json out = incident_summary(*incident);
                  json history = json::array();
                  for (const auto& f : store_.feedback_history(id)) history.push_back(to_json(f));
                  out["feedback"] = history;
                  json events = json::array();
                  for (const auto& e : store_.trace_for(*incident).events) events.push_back(to_json(e));
                  out["trace"] = events;
                  reply(res, 200, out);
                }));

    server_.Get(R"(/api/v1/incidents/([^/]+)/suggestion)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  auto incident = store_.find_incident(id);
                  if (!incident) throw HttpError(404, "not_found", "no incident " + id);
                  auto suggestion = store_.latest_suggestion(id);
                  if (!suggestion) throw HttpError(404, "not_found", "incident " + id + " has no suggestion");
                  json out = to_json(*suggestion);
                  out["status"] = std::string(to_string(status(*incident)));
                  reply(res, 200, out);
                }));

    server_.Post(R"(/api/v1/incidents/([^/]+)/feedback)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, record_feedback(req.matches[1], parse_body(req)));
                 }));

    server_.Post("/api/v1/models/retrain", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const json body = parse_body(req, true);
                   RetrainRequest request;
                   if (body.is_object()) {
                     if (body.contains("until")) {
                       auto t = parse_instant(body["until"].is_string() ? body["until"].get<std::string>()
                                                                        : body["until"].dump());
                       if (!t) throw HttpError(400, "invalid_parameter", "until is not a valid instant");
                       request.until = *t;
                     }
                     if (body.contains("seed")) request.seed = body["seed"].get<std::uint64_t>();
                     if (body.contains("beta")) request.beta = body["beta"].get<double>();
                   }
                   const auto id = start_retrain(require_fleet(req, &body), request);
                   reply(res, 202, to_json(*job(id)));
                 }));

    server_.Get(R"(/api/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto j = job(req.matches[1]);
                  if (!j) throw HttpError(404, "not_found", "no job " + std::string(req.matches[1]));
                  reply(res, 200, to_json(*j));
                }));

    server_.Get("/api/v1/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto fleet = require_fleet(req);
                  json models = json::array();
                  for (const auto& e : store_.list_models(fleet)) models.push_back(to_json(e));
                  auto active = active_model(fleet);
                  reply(res, 200, {{"fleet", fleet},
                                   {"active_version", active ? json(active->version) : json(nullptr)},
                                   {"models", models}});
                }));

    server_.Get("/api/v1/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto fleet = require_fleet(req);
                  std::optional<std::int64_t> version;
                  if (req.has_param("version") && req.get_param_value("version") != "latest") {
                    const auto v = req.get_param_value("version");
                    std::int64_t n = 0;
                    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
                    if (ec != std::errc{} || p != v.data() + v.size())
                      throw HttpError(400, "invalid_parameter", "version must be an integer or 'latest'");
                    version = n;
                  }
                  ModelPtr model = active_model(fleet);
                  if (version || !model) model = std::make_shared<const ModelArtifact>(store_.load_model(fleet, version));
                  reply(res, 200, {{"fleet", fleet},
                                   {"version", model->version},
                                   {"config", cascade::to_json(model->ensemble.config())},
                                   {"threshold", model->threshold()},
                                   {"report", evalkit::to_json(model->eval_summary)}});
                }));
  }

  Store& store_;
  ServiceConfig config_;
  httplib::Server server_;

  mutable std::mutex models_mu_;
  std::map<std::string, ModelPtr> models_;

  mutable std::mutex jobs_mu_;
  mutable std::condition_variable jobs_cv_;
  std::map<std::string, Job> jobs_;
  std::vector<std::thread> workers_;
  std::int64_t job_seq_ = 0;
};

}  // namespace railcause::diagsvc
