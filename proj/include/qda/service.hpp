#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qda/pipeline.hpp"
#include "qda/topic_model.hpp"

namespace qda::service {

namespace fs = std::filesystem;

struct Session {
  std::string session_id;
  std::string model;  // absolute path of model.json
  std::int64_t revision = 0;
  std::string created;
  std::string updated;
  std::vector<topics::RefinementAction> log;
};

nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

struct Reply {
  int status = 200;
  nlohmann::json body;
};

// Topic refinement state behind the HTTP API. Reads may run concurrently;
// mutations are serialized and persisted to the session file before they
// are acknowledged. Every reply body carries the current revision.
class TopicService {
 public:
  // Resumes the session file when it exists, otherwise starts a new one
  // next to the model as session.json.
  explicit TopicService(const fs::path& model_path, std::optional<fs::path> session_file = std::nullopt);
  ~TopicService();

  Reply list_topics() const;
  Reply get_topic(int topic_id) const;
  Reply topic_sentences(int topic_id, std::int64_t limit) const;
  Reply merge(const nlohmann::json& body);
  Reply rename(int topic_id, const nlohmann::json& body);
  Reply select(const nlohmann::json& body);
  Reply metrics() const;
  Reply session() const;
  Reply report() const;

  topics::TopicModel model() const;
  const fs::path& session_file() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// HTTP front end for a TopicService.
class Server {
 public:
  explicit Server(TopicService& service);
  ~Server();

  // Binds host:port; port 0 picks a free port. Returns the bound port.
  // Throws ConfigError when the port is unavailable.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qda::service
