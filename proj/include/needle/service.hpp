// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "needle/collector.hpp"
#include "needle/config.hpp"
#include "needle/corpus.hpp"
#include "needle/http_connector.hpp"
#include "needle/trainer.hpp"
#include "needle/triage.hpp"

namespace needle {

// Scores snippets with one model snapshot and returns them ranked.
inline std::vector<TriageResult> classify_and_rank(const std::vector<Snippet>& snippets,
                                                   const trainer::Classifier& model, const Thresholds& thresholds) {
  std::vector<TriageResult> out;
  out.reserve(snippets.size());
  for (const auto& s : snippets) {
    double p = model.proba(s);
    out.push_back({s, p, triage::verdict(p, thresholds)});
  }
  return triage::rank(std::move(out));
}

enum class InquiryStatus { Queued, Collecting, Classified, Failed };

inline std::string_view to_string(InquiryStatus s) {
  switch (s) {
    case InquiryStatus::Queued: return "queued";
    case InquiryStatus::Collecting: return "collecting";
    case InquiryStatus::Classified: return "classified";
    case InquiryStatus::Failed: return "failed";
  }
  return "?";
}

struct InquiryRecord {
  std::string id;
  std::string text;
  std::vector<std::string> queries;
  InquiryStatus status = InquiryStatus::Queued;
  Timestamp created_at{};
  std::string model_version;
  std::vector<TriageResult> results;
  std::string error;
};

// Thrown for requests the service refuses; `status` is the HTTP code.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct FeedbackAck {
  std::size_t remaining = 0;
  bool retrain_started = false;
};

using ModelHandle = std::shared_ptr<const trainer::Classifier>;

// Builds a new model from the feedback store. Runs on a background thread.
using RetrainFn = std::function<ModelHandle(const FeedbackStore&)>;

struct EngineConfig {
  std::string name;
  std::string connector;  // "fixture:<path>" or "http://<url>"
  std::size_t pages_per_query = 10;
  double rate_limit = 1.0;
};

struct ServiceConfig {
  std::vector<EngineConfig> engines;
  std::filesystem::path lexicon_path;
  std::filesystem::path model_path;
  std::filesystem::path vocab_path;
  std::filesystem::path feedback_journal;
  std::filesystem::path train_dir;  // retraining base set (in.tsv + expected.tsv)
  std::filesystem::path valid_dir;
  Thresholds thresholds;
  std::size_t retrain_threshold = 500;
  std::string bind_host = "127.0.0.1";
  int bind_port = 8080;
  std::size_t workers = 4;
  int timeout_seconds = 30;
  TrainSettings train;

  // Keys: bind, lexicon, model, vocab, feedback_journal, train_dir,
  // valid_dir, workers, timeout_seconds, [thresholds] red/yellow,
  // [retrain] threshold, [engine.<name>] connector/pages_per_query/
  // rate_limit, plus the [training]/[optimizer]/[features] sections.
  // NEEDLE_BIND and NEEDLE_MODEL override bind and model.
  static ServiceConfig from(const Config& c, const std::filesystem::path& base_dir = {}) {
    std::set<std::string> allowed = {"bind",           "lexicon",           "model",    "vocab",
                                     "feedback_journal", "train_dir",       "valid_dir", "workers",
                                     "timeout_seconds", "thresholds.red",   "thresholds.yellow",
                                     "retrain.threshold", "engine.*"};
    allowed.insert(train_setting_keys().begin(), train_setting_keys().end());
    c.require_known(allowed);
    auto path = [&](const std::string& key) -> std::filesystem::path {
      auto v = c.get_string(key);
      if (v.empty()) return {};
      std::filesystem::path p(v);
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    ServiceConfig s;
    std::string bind = c.get_string("bind", "127.0.0.1:8080");
    if (const char* env = std::getenv("NEEDLE_BIND"); env && *env) bind = env;
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw FormatError("config: bind must be host:port");
    s.bind_host = bind.substr(0, colon);
    s.bind_port = static_cast<int>(util::parse_int(bind.substr(colon + 1)));
    s.lexicon_path = path("lexicon");
    s.model_path = path("model");
    if (const char* env = std::getenv("NEEDLE_MODEL"); env && *env) s.model_path = env;
    s.vocab_path = path("vocab");
    s.feedback_journal = path("feedback_journal");
    s.train_dir = path("train_dir");
    s.valid_dir = path("valid_dir");
    s.workers = c.get_size("workers", s.workers);
    s.timeout_seconds = static_cast<int>(c.get_int("timeout_seconds", s.timeout_seconds));
    s.thresholds.red = c.get_double("thresholds.red", s.thresholds.red);
    s.thresholds.yellow = c.get_double("thresholds.yellow", s.thresholds.yellow);
    s.thresholds.validate();
    s.retrain_threshold = c.get_size("retrain.threshold", s.retrain_threshold);
    if (s.retrain_threshold == 0) throw FormatError("config: retrain.threshold must be >= 1");
    for (const auto& name : c.subsections("engine")) {
      EngineConfig e;
      e.name = name;
      e.connector = c.get_string("engine." + name + ".connector");
      e.pages_per_query = c.get_size("engine." + name + ".pages_per_query", e.pages_per_query);
      e.rate_limit = c.get_double("engine." + name + ".rate_limit", e.rate_limit);
      if (e.connector.rfind("fixture:", 0) == 0) {
        std::filesystem::path p(e.connector.substr(8));
        if (p.is_relative() && !base_dir.empty()) e.connector = "fixture:" + (base_dir / p).string();
      }
      s.engines.push_back(std::move(e));
    }
    s.train = train_settings_from(c);
    return s;
  }

  void check_paths() const {
    for (const auto* p : {&lexicon_path, &model_path, &vocab_path})
      if (p->empty() || !std::filesystem::exists(*p)) throw IoError("config: missing file " + p->string());
    for (const auto* p : {&train_dir, &valid_dir})
      if (!p->empty() && !std::filesystem::exists(*p)) throw IoError("config: missing directory " + p->string());
    if (engines.empty()) throw Error("config: no search engines configured");
  }
};

inline std::shared_ptr<SearchConnector> make_connector(const std::string& spec) {
  if (spec.rfind("fixture:", 0) == 0) return FixtureConnector::load(spec.substr(8));
  if (spec.rfind("http://", 0) == 0) return std::make_shared<HttpJsonConnector>(spec);
  throw Error("unknown connector '" + spec + "' (expected fixture:<path> or http://<url>)");
}

inline std::vector<SearchEngineSpec> make_engines(const std::vector<EngineConfig>& configs) {
  std::vector<SearchEngineSpec> out;
  for (const auto& e : configs) out.push_back({e.name, e.pages_per_query, e.rate_limit, make_connector(e.connector)});
  return out;
}

inline ModelHandle load_classifier(const std::filesystem::path& model, const std::filesystem::path& vocab) {
  return std::make_shared<const trainer::Classifier>(Vocabulary::load(vocab), trainer::Model::load(model));
}

// Retrains on the base training set merged with operator feedback, writes
// the new vocabulary and model over the configured files, and returns the
// loaded result.
inline RetrainFn file_retrainer(const ServiceConfig& cfg) {
  return [cfg](const FeedbackStore& store) -> ModelHandle {
    std::vector<LabeledSnippet> base;
    if (!cfg.train_dir.empty()) base = corpus::read_dataset(cfg.train_dir, Layout::PairedInExpected);
    auto merged = triage::merge_feedback(std::move(base), store);
    if (cfg.valid_dir.empty()) throw Error("retrain: valid_dir is not configured");
    auto valid = corpus::read_dataset(cfg.valid_dir, Layout::PairedInExpected);
    auto trained = trainer::train_classifier(merged, valid, cfg.train.features, cfg.train.training, cfg.train.optimizer);
    util::write_file_atomic(cfg.vocab_path, trained.vocab.serialize());
    util::write_file_atomic(cfg.model_path, trained.model.serialize());
    return std::make_shared<const trainer::Classifier>(std::move(trained.vocab), std::move(trained.model));
  };
}

struct ServiceOptions {
  ExpansionLexicon lexicon;
  std::vector<SearchEngineSpec> engines;
  ModelHandle model;  // null: inquiries are refused with 503
  Thresholds thresholds;
  std::size_t retrain_threshold = 500;
  std::filesystem::path feedback_journal;  // empty: in-memory store
  std::size_t workers = 4;
  RetrainFn retrain;
  collector::Clock clock = util::now_utc;
};

// The operator workflow: inquiry -> expansion -> collection -> scoring ->
// ranking, feedback journaling and background retraining with an atomic
// model swap.
class Service {
 public:
  explicit Service(ServiceOptions opts) : opts_(std::move(opts)), model_(opts_.model) {
    opts_.thresholds.validate();
    if (opts_.retrain_threshold == 0) throw Error("service: retrain threshold must be >= 1");
    store_ = opts_.feedback_journal.empty() ? std::make_unique<FeedbackStore>()
                                            : std::make_unique<FeedbackStore>(opts_.feedback_journal);
    const std::size_t n = std::max<std::size_t>(1, opts_.workers);
    for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this](std::stop_token st) { work(st); });
  }

  static ServiceOptions options_from(const ServiceConfig& cfg) {
    cfg.check_paths();
    ServiceOptions o;
    o.lexicon = collector::load_lexicon(cfg.lexicon_path);
    o.engines = make_engines(cfg.engines);
    o.model = load_classifier(cfg.model_path, cfg.vocab_path);
    o.thresholds = cfg.thresholds;
    o.retrain_threshold = cfg.retrain_threshold;
    o.feedback_journal = cfg.feedback_journal;
    o.workers = cfg.workers;
    o.retrain = file_retrainer(cfg);
    return o;
  }

  ~Service() {
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    for (auto& w : workers_) w.request_stop();
    queue_cv_.notify_all();
    workers_.clear();
    if (retrain_thread_.joinable()) retrain_thread_.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::string handle_inquiry(const std::string& text) {
    if (util::collapse_whitespace(text).empty()) throw ServiceError(422, "empty inquiry");
    if (!current_model()) throw ServiceError(503, "model not loaded");
    std::string id;
    {
      std::lock_guard lock(mu_);
      char buf[32];
      std::snprintf(buf, sizeof buf, "inq-%06zu", ++next_id_);
      id = buf;
      InquiryRecord rec;
      rec.id = id;
      rec.text = text;
      rec.created_at = opts_.clock();
      inquiries_.emplace(id, std::move(rec));
    }
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(id);
      ++pending_;
    }
    queue_cv_.notify_one();
    return id;
  }

  InquiryRecord get_results(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = inquiries_.find(id);
    if (it == inquiries_.end()) throw ServiceError(404, "unknown inquiry " + id);
    return it->second;
  }

  FeedbackAck post_feedback(const std::string& snippet_id, FeedbackLabel label, const std::string& operator_id) {
    Verdict prior;
    {
      std::lock_guard lock(mu_);
      auto it = served_.find(snippet_id);
      if (it == served_.end()) throw ServiceError(404, "unknown snippet " + snippet_id);
      prior = it->second;
    }
    FeedbackEvent e{snippet_id, label, prior, opts_.clock(), operator_id};
    try {
      store_->record(e);
    } catch (const NotFoundError& err) {
      throw ServiceError(404, err.what());
    } catch (const IoError&) {
      throw;
    } catch (const Error& err) {
      throw ServiceError(409, err.what());
    }
    FeedbackAck ack;
    std::lock_guard lock(retrain_mu_);
    // Counter as of this decision, before a retrain can reset it.
    const std::size_t since = store_->decisions_since_retrain();
    ack.remaining = since >= opts_.retrain_threshold ? 0 : opts_.retrain_threshold - since;
    if (!retraining_ && triage::should_retrain(*store_, opts_.retrain_threshold) && opts_.retrain) {
      retraining_ = true;
      ack.retrain_started = true;
      ++retrains_started_;
      if (retrain_thread_.joinable()) retrain_thread_.join();
      const std::size_t consumed = store_->count();
      retrain_thread_ = std::thread([this, consumed] { run_retrain(consumed); });
    }
    return ack;
  }

  ModelHandle current_model() const {
    std::lock_guard lock(model_mu_);
    return model_;
  }

  void swap_model(ModelHandle m) {
    std::lock_guard lock(model_mu_);
    model_ = std::move(m);
  }

  // Blocks until no inquiry is queued or running and no retrain is active.
  void wait_idle() {
    {
      std::unique_lock lock(queue_mu_);
      idle_cv_.wait(lock, [&] { return pending_ == 0; });
    }
    std::unique_lock lock(retrain_mu_);
    retrain_cv_.wait(lock, [&] { return !retraining_; });
    if (retrain_thread_.joinable()) retrain_thread_.join();
  }

  const FeedbackStore& feedback() const { return *store_; }
  std::size_t retrains_started() const {
    std::lock_guard lock(retrain_mu_);
    return retrains_started_;
  }
  std::size_t retrains_failed() const { return retrains_failed_; }
  const Thresholds& thresholds() const { return opts_.thresholds; }

 private:
  void work(std::stop_token st) {
    for (;;) {
      std::string id;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        id = std::move(queue_.front());
        queue_.pop_front();
      }
      if (!st.stop_requested()) process(id);
      {
        std::lock_guard lock(queue_mu_);
        --pending_;
      }
      idle_cv_.notify_all();
    }
  }

  void set_status(const std::string& id, InquiryStatus s) {
    std::lock_guard lock(mu_);
    inquiries_.at(id).status = s;
  }

  void process(const std::string& id) {
    std::string text;
    {
      std::lock_guard lock(mu_);
      text = inquiries_.at(id).text;
    }
    try {
      set_status(id, InquiryStatus::Collecting);
      auto queries = collector::expand_query(text, opts_.lexicon);
      auto collected = collector::collect(queries, opts_.engines, std::nullopt, opts_.clock);
      ModelHandle model = current_model();
      if (!model) throw Error("model not loaded");
      auto ranked = classify_and_rank(collected.snippets, *model, opts_.thresholds);
      for (const auto& r : ranked) store_->register_snippet(r.snippet);
      std::lock_guard lock(mu_);
      auto& rec = inquiries_.at(id);
      rec.queries = std::move(queries);
      rec.model_version = model->version;
      for (const auto& r : ranked) served_[r.snippet.id] = r.verdict;
      rec.results = std::move(ranked);
      rec.status = InquiryStatus::Classified;
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      auto& rec = inquiries_.at(id);
      rec.status = InquiryStatus::Failed;
      rec.error = e.what();
    }
  }

  void run_retrain(std::size_t consumed) {
    try {
      ModelHandle fresh = opts_.retrain(*store_);
      swap_model(std::move(fresh));
      store_->mark_retrained(consumed);
    } catch (const std::exception& e) {
      ++retrains_failed_;
      std::cerr << "retrain failed: " << e.what() << "\n";
    }
    {
      std::lock_guard lock(retrain_mu_);
      retraining_ = false;
    }
    retrain_cv_.notify_all();
  }

  ServiceOptions opts_;

  mutable std::mutex model_mu_;
  ModelHandle model_;

  mutable std::mutex mu_;
  std::map<std::string, InquiryRecord> inquiries_;
  std::map<std::string, Verdict> served_;
  std::size_t next_id_ = 0;

  std::unique_ptr<FeedbackStore> store_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::size_t pending_ = 0;
  bool stopping_ = false;

  mutable std::mutex retrain_mu_;
  std::condition_variable retrain_cv_;
  bool retraining_ = false;
  std::size_t retrains_started_ = 0;
  std::atomic<std::size_t> retrains_failed_{0};
  std::thread retrain_thread_;

  std::vector<std::jthread> workers_;
};

// --- JSON -----------------------------------------------------------------------

inline nlohmann::json to_json(const TriageResult& r) {
  const auto& s = r.snippet;
  return {
      {"id", s.id},
      {"query", s.query},
      {"engine", s.engine},
      {"url", s.url},
      {"title", s.title},
      {"snippet_text", s.snippet_text},
      {"theme", s.theme ? nlohmann::json(std::string(to_string(*s.theme))) : nlohmann::json(nullptr)},
      {"collected_at", util::format_rfc3339(s.collected_at)},
      {"p", r.p},
      {"verdict", std::string(to_string(r.verdict))},
  };
}

inline nlohmann::json to_json(const InquiryRecord& rec) {
  nlohmann::json j = {{"id", rec.id}, {"status", std::string(to_string(rec.status))}};
  if (rec.status == InquiryStatus::Classified) {
    j["model_version"] = rec.model_version;
    j["items"] = nlohmann::json::array();
    for (const auto& r : rec.results) j["items"].push_back(to_json(r));
  } else if (rec.status == InquiryStatus::Failed) {
    j["error"] = rec.error;
  }
  return j;
}

// HTTP+JSON facade over a Service.
class HttpServer {
 public:
  HttpServer(Service& service, int timeout_seconds = 30) : svc_(service) {
    srv_.set_read_timeout(timeout_seconds, 0);
    srv_.set_write_timeout(timeout_seconds, 0);
    auto json_reply = [](httplib::Response& res, int status, const nlohmann::json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
    auto guarded = [json_reply](auto handler) {
      return [handler, json_reply](const httplib::Request& req, httplib::Response& res) {
        try {
          handler(req, res);
        } catch (const ServiceError& e) {
          json_reply(res, e.status(), {{"error", e.what()}});
        } catch (const std::exception& e) {
          json_reply(res, 500, {{"error", e.what()}});
        }
      };
    };

    srv_.Get("/health", guarded([this, json_reply](const httplib::Request&, httplib::Response& res) {
      auto m = svc_.current_model();
      json_reply(res, 200, {{"status", "ok"}, {"model_version", m ? nlohmann::json(m->version) : nlohmann::json()}});
    }));

    srv_.Post("/inquiries", guarded([this, json_reply](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_string())
        throw ServiceError(422, "body must be {\"text\": <inquiry>}");
      auto id = svc_.handle_inquiry(body["text"].get<std::string>());
      json_reply(res, 202, {{"id", id}});
    }));

    srv_.Get(R"(/inquiries/([^/]+)/results)",
             guarded([this, json_reply](const httplib::Request& req, httplib::Response& res) {
               json_reply(res, 200, to_json(svc_.get_results(req.matches[1].str())));
             }));

    srv_.Post("/feedback", guarded([this, json_reply](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("snippet_id") ||
          !body["snippet_id"].is_string() || !body.contains("label") || !body["label"].is_string())
        throw ServiceError(422, "body must be {\"snippet_id\", \"label\", \"operator_id\"}");
      auto label = parse_feedback_label(body["label"].get<std::string>());
      if (!label) throw ServiceError(422, "label must be criminal or non_criminal");
      std::string op = body.contains("operator_id") && body["operator_id"].is_string()
                           ? body["operator_id"].get<std::string>()
                           : std::string();
      if (op.find_first_of("\t\n\r") != std::string::npos) throw ServiceError(422, "operator_id contains control characters");
      auto ack = svc_.post_feedback(body["snippet_id"].get<std::string>(), *label, op);
      json_reply(res, 200, {{"remaining", ack.remaining}, {"retrain_started", ack.retrain_started}});
    }));
  }

  ~HttpServer() { stop(); }

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port) {
    if (port == 0)
      port_ = srv_.bind_to_any_port(host);
    else
      port_ = srv_.bind_to_port(host, port) ? port : -1;
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!srv_.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    srv_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  Service& svc_;
  httplib::Server srv_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace needle
