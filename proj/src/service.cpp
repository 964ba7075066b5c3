#include "qda/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <shared_mutex>

#include <httplib.h>

#include "qda/error.hpp"
#include "qda/evaluation.hpp"
#include "qda/lexical.hpp"

namespace qda::service {
namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_session_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json topic_summary(const topics::Topic& t) {
  json keywords = json::array();
  for (const auto& k : t.keywords) keywords.push_back({{"term", lexical::join_ngram(k.term)}, {"weight", k.weight}});
  return json{{"topic_id", t.topic_id},
              {"label", t.label},
              {"size", t.size},
              {"keywords", keywords},
              {"selected", t.selected}};
}

Reply error_reply(int status, const std::string& message, std::int64_t revision) {
  return Reply{status, json{{"error", message}, {"revision", revision}}};
}

}  // namespace

json to_json(const Session& s) {
  json log = json::array();
  for (const auto& a : s.log) log.push_back(topics::to_json(a));
  return json{{"session_id", s.session_id},
              {"model", s.model},
              {"revision", s.revision},
              {"created", s.created},
              {"updated", s.updated},
              {"refinement_log", log}};
}

Session session_from_json(const json& j) {
  Session s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.model = j.at("model").get<std::string>();
    s.revision = j.at("revision").get<std::int64_t>();
    s.created = j.value("created", "");
    s.updated = j.value("updated", "");
    for (const auto& a : j.at("refinement_log")) s.log.push_back(topics::action_from_json(a));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad session file: ") + e.what());
  }
  if (s.revision != static_cast<std::int64_t>(s.log.size())) {
    throw FormatError("session revision does not match its refinement log");
  }
  return s;
}

struct TopicService::State {
  std::unique_ptr<pipeline::Workspace> ws;
  fs::path session_file;
  Session session;
  topics::TopicModel model;
  mutable std::shared_mutex lock;

  mutable std::mutex metrics_lock;
  mutable std::optional<std::pair<std::int64_t, eval::MetricsReport>> metrics_cache;

  void persist(const Session& s) const { pipeline::write_text_file(session_file, to_json(s).dump(2) + "\n"); }

  // Applies `action` when `body` carries the current revision.
  Reply mutate(const json& body, const topics::RefinementAction& action, const std::function<json()>& payload) {
    std::unique_lock guard(lock);
    const std::int64_t current = model.revision();
    if (!body.contains("revision") || !body["revision"].is_number_integer()) {
      return error_reply(400, "revision required", current);
    }
    if (body["revision"].get<std::int64_t>() != current) return error_reply(409, "stale revision", current);
    for (int id : action.ids) {
      if (id < 0 || !model.find(id)) return error_reply(404, "unknown topic", current);
    }
    topics::TopicModel next;
    try {
      next = model.apply(ws->context, action);
    } catch (const Error& e) {
      return error_reply(400, e.what(), current);
    }
    Session updated = session;
    updated.log = next.refinement_log();
    updated.revision = next.revision();
    updated.updated = utc_now();
    try {
      persist(updated);
    } catch (const std::exception& e) {
      return error_reply(500, std::string("could not persist session: ") + e.what(), current);
    }
    session = std::move(updated);
    model = std::move(next);
    json out = payload();
    out["revision"] = model.revision();
    return Reply{200, out};
  }
};

TopicService::TopicService(const fs::path& model_path, std::optional<fs::path> session_file)
    : state_(std::make_unique<State>()) {
  auto& s = *state_;
  s.ws = pipeline::load_workspace(model_path);
  s.session_file = session_file.value_or(fs::absolute(model_path).parent_path() / "session.json");
  const std::string model_abs = fs::weakly_canonical(fs::absolute(model_path)).string();

  if (fs::exists(s.session_file)) {
    std::ifstream in(s.session_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError("session file " + s.session_file.string() + " is not valid JSON: " + e.what());
    }
    s.session = session_from_json(j);
    if (s.session.model != model_abs) {
      throw ConfigError("session " + s.session_file.string() + " belongs to model " + s.session.model);
    }
    const auto base = topics::TopicModel::build(s.ws->context, s.ws->base_assignment, s.ws->model.run_config());
    s.model = base.replay(s.ws->context, s.session.log);
  } else {
    s.model = s.ws->model;
    s.session.session_id = new_session_id();
    s.session.model = model_abs;
    s.session.log = s.model.refinement_log();
    s.session.revision = s.model.revision();
    s.session.created = s.session.updated = utc_now();
    s.persist(s.session);
  }
}

TopicService::~TopicService() = default;

topics::TopicModel TopicService::model() const {
  std::shared_lock guard(state_->lock);
  return state_->model;
}

const fs::path& TopicService::session_file() const { return state_->session_file; }

Reply TopicService::list_topics() const {
  std::shared_lock guard(state_->lock);
  const auto& m = state_->model;
  std::vector<const topics::Topic*> order;
  for (const auto& t : m.topics()) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->size > b->size; });
  json list = json::array();
  for (const auto* t : order) list.push_back(topic_summary(*t));
  return Reply{200, json{{"revision", m.revision()},
                         {"topics", list},
                         {"outliers", {{"topic_id", -1}, {"size", m.outlier_count()}}}}};
}

Reply TopicService::get_topic(int topic_id) const {
  std::shared_lock guard(state_->lock);
  const auto& m = state_->model;
  const auto& sentences = state_->ws->sentences;
  if (topic_id == -1) {
    return Reply{200, json{{"revision", m.revision()},
                           {"topic_id", -1},
                           {"label", "outliers"},
                           {"size", m.outlier_count()},
                           {"keywords", json::array()},
                           {"representatives", json::array()},
                           {"selected", false}}};
  }
  const auto* t = m.find(topic_id);
  if (!t) return error_reply(404, "unknown topic", m.revision());
  json out = topic_summary(*t);
  json reps = json::array();
  for (auto id : t->representatives) {
    reps.push_back({{"sent_id", id}, {"text", sentences.at(static_cast<std::size_t>(id)).text}});
  }
  out["representatives"] = reps;
  out["revision"] = m.revision();
  return Reply{200, out};
}

Reply TopicService::topic_sentences(int topic_id, std::int64_t limit) const {
  std::shared_lock guard(state_->lock);
  const auto& m = state_->model;
  if (limit < 1) return error_reply(400, "limit must be a positive integer", m.revision());
  if (topic_id != -1 && !m.find(topic_id)) return error_reply(404, "unknown topic", m.revision());
  const auto members = m.members(topic_id);
  json list = json::array();
  for (std::size_t i = 0; i < members.size() && static_cast<std::int64_t>(i) < limit; ++i) {
    const auto id = static_cast<std::size_t>(members[i]);
    list.push_back({{"sent_id", members[i]},
                    {"doc_id", state_->ws->sentences[id].doc_id},
                    {"text", state_->ws->sentences[id].text},
                    {"strength", m.strength()[id]}});
  }
  return Reply{200, json{{"revision", m.revision()},
                         {"topic_id", topic_id},
                         {"total", members.size()},
                         {"sentences", list}}};
}

Reply TopicService::merge(const json& body) {
  topics::RefinementAction action;
  action.kind = topics::RefinementAction::Kind::merge;
  {
    std::shared_lock guard(state_->lock);
    if (!body.contains("ids") || !body["ids"].is_array()) {
      return error_reply(400, "ids must be an array of topic ids", state_->model.revision());
    }
    try {
      action.ids = body["ids"].get<std::vector<int>>();
    } catch (const json::exception&) {
      return error_reply(400, "ids must be an array of topic ids", state_->model.revision());
    }
  }
  return state_->mutate(body, action, [&] {
    const auto& t = state_->model.topics().back();
    return json{{"topic", topic_summary(t)}, {"retired", action.ids}};
  });
}

Reply TopicService::rename(int topic_id, const json& body) {
  topics::RefinementAction action;
  action.kind = topics::RefinementAction::Kind::rename;
  action.ids = {topic_id};
  if (!body.contains("label") || !body["label"].is_string()) {
    std::shared_lock guard(state_->lock);
    return error_reply(400, "label must be a string", state_->model.revision());
  }
  action.label = body["label"].get<std::string>();
  return state_->mutate(body, action, [&] { return json{{"topic", topic_summary(*state_->model.find(topic_id))}}; });
}

Reply TopicService::select(const json& body) {
  topics::RefinementAction action;
  action.kind = topics::RefinementAction::Kind::select;
  try {
    action.ids = body.at("ids").get<std::vector<int>>();
  } catch (const json::exception&) {
    std::shared_lock guard(state_->lock);
    return error_reply(400, "ids must be an array of topic ids", state_->model.revision());
  }
  return state_->mutate(body, action, [&] {
    json ids = json::array();
    for (const auto* t : state_->model.selected_topics()) ids.push_back(t->topic_id);
    return json{{"selected", ids}};
  });
}

Reply TopicService::metrics() const {
  topics::TopicModel m = model();
  std::lock_guard guard(state_->metrics_lock);
  auto& cache = state_->metrics_cache;
  if (!cache || cache->first != m.revision()) {
    try {
      cache.emplace(m.revision(), state_->ws->evaluate(m));
    } catch (const Error& e) {
      return error_reply(422, e.what(), m.revision());
    }
  }
  const auto& report = cache->second;
  return Reply{200, json{{"revision", m.revision()},
                         {"metrics", pipeline::metrics_json(report)},
                         {"csv_header", eval::csv_header()},
                         {"csv_row", eval::csv_row("session", report)}}};
}

Reply TopicService::session() const {
  std::shared_lock guard(state_->lock);
  json out = to_json(state_->session);
  out["session_file"] = state_->session_file.string();
  return Reply{200, out};
}

Reply TopicService::report() const {
  const topics::TopicModel m = model();
  try {
    return Reply{200, pipeline::export_final_report(*state_->ws, m)};
  } catch (const Error& e) {
    return error_reply(422, e.what(), m.revision());
  }
}

struct Server::Impl {
  TopicService& service;
  httplib::Server http;
  std::mutex run_lock;
  bool running = false;
  bool stopping = false;

  explicit Impl(TopicService& s) : service(s) {
    // Without SO_REUSEPORT a second server on the same port fails to bind.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
  }
};

namespace {

void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res, const TopicService& service) {
  try {
    json j = json::parse(req.body);
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  send(res, error_reply(400, "request body must be a JSON object", service.model().revision()));
  return std::nullopt;
}

std::optional<int> topic_id_of(const std::string& s) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size() || v < -1 || v > std::numeric_limits<int>::max()) return std::nullopt;
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

}  // namespace

Server::Server(TopicService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& http = impl_->http;
  TopicService* svc = &service;
  auto unknown = [svc](httplib::Response& res) { send(res, error_reply(404, "unknown topic", svc->model().revision())); };

  http.Get("/api/topics", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->list_topics()); });
  http.Get(R"(/api/topics/([^/]+))", [svc, unknown](const httplib::Request& req, httplib::Response& res) {
    const auto id = topic_id_of(req.matches[1]);
    if (!id) return unknown(res);
    send(res, svc->get_topic(*id));
  });
  http.Get(R"(/api/topics/([^/]+)/sentences)", [svc, unknown](const httplib::Request& req, httplib::Response& res) {
    const auto id = topic_id_of(req.matches[1]);
    if (!id) return unknown(res);
    std::int64_t limit = 20;
    if (req.has_param("limit")) {
      const auto parsed = topic_id_of(req.get_param_value("limit"));
      limit = parsed ? *parsed : 0;
    }
    send(res, svc->topic_sentences(*id, limit));
  });
  http.Post("/api/topics/merge", [svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res, *svc)) send(res, svc->merge(*body));
  });
  http.Patch(R"(/api/topics/([^/]+))", [svc, unknown](const httplib::Request& req, httplib::Response& res) {
    const auto id = topic_id_of(req.matches[1]);
    if (!id) return unknown(res);
    if (auto body = parse_body(req, res, *svc)) send(res, svc->rename(*id, *body));
  });
  http.Post("/api/selection", [svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res, *svc)) send(res, svc->select(*body));
  });
  http.Get("/api/metrics", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->metrics()); });
  http.Get("/api/session", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->session()); });
  http.Get("/api/report", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->report()); });
  http.set_error_handler([svc](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    json body{{"error", httplib::status_message(res.status)}, {"revision", svc->model().revision()}};
    res.set_content(body.dump(), "application/json");
  });
  http.set_exception_handler([svc](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, error_reply(500, message, svc->model().revision()));
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  auto& http = impl_->http;
  if (port == 0) {
    const int bound = http.bind_to_any_port(host);
    if (bound < 0) throw ConfigError("cannot bind " + host + " to a free port");
    return bound;
  }
  if (!http.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  return port;
}

void Server::run() {
  {
    std::lock_guard guard(impl_->run_lock);
    if (impl_->stopping) return;
    impl_->running = true;
  }
  impl_->http.listen_after_bind();
}

// Safe to call before run() has reached its accept loop.
void Server::stop() {
  {
    std::lock_guard guard(impl_->run_lock);
    impl_->stopping = true;
    if (!impl_->running) return;
  }
  impl_->http.wait_until_ready();
  impl_->http.stop();
}

}  // namespace qda::service
