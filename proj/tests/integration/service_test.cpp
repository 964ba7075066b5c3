#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "qda/pipeline.hpp"
#include "qda/service.hpp"
#include "../support/scratch.hpp"
#include "../support/toy_project.hpp"

using namespace qda;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_model(const std::string& name) {
  const auto p = qda::testing::make_toy_project(qda::testing::scratch_dir(name) / "proj", 25);
  pipeline::run_pipeline(pipeline::load_config(p.config));
  return p.root / "out" / "model.json";
}

struct Running {
  service::TopicService svc;
  service::Server server;
  int port = 0;
  std::thread thread;

  explicit Running(const fs::path& model) : svc(model), server(svc) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.run(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json post(httplib::Client& c, const std::string& path, const json& body) {
  return body_of(c.Post(path, body.dump(), "application/json"));
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("topic listing and detail") {
    Running s(fresh_model("svc_list"));
    auto c = s.client();
    auto r = c.Get("/api/topics");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->get_header_value("Content-Type").find("application/json") != std::string::npos);
    const auto list = json::parse(r->body);
    CHECK(list.at("revision") == 0);
    REQUIRE(list.at("topics").size() == 6);
    for (std::size_t i = 1; i < list["topics"].size(); ++i) {
      CHECK(list["topics"][i - 1]["size"] >= list["topics"][i]["size"]);
    }
    CHECK(list.at("outliers").at("topic_id") == -1);

    const auto one = body_of(c.Get("/api/topics/0"));
    CHECK(one.at("topic_id") == 0);
    CHECK(one.at("representatives").size() == 3);
    CHECK(one.at("representatives")[0].contains("text"));

    const auto sentences = body_of(c.Get("/api/topics/0/sentences?limit=4"));
    CHECK(sentences.at("sentences").size() == 4);
    CHECK(sentences.at("total") == one.at("size"));

    CHECK(c.Get("/api/topics/99")->status == 404);
    CHECK(c.Get("/api/topics/abc")->status == 404);
    CHECK(c.Get("/api/topics/0/sentences?limit=0")->status == 400);
    CHECK(c.Get("/api/nothing")->status == 404);
  }

  TEST_CASE("merge, rename, select and revisions") {
    Running s(fresh_model("svc_mutate"));
    auto c = s.client();

    auto bad = c.Post("/api/topics/merge", json{{"ids", {0, 42}}, {"revision", 0}}.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 404);
    CHECK(json::parse(bad->body).at("error") == "unknown topic");

    auto stale = c.Post("/api/topics/merge", json{{"ids", {0, 1}}, {"revision", 3}}.dump(), "application/json");
    CHECK(stale->status == 409);
    CHECK(json::parse(stale->body).at("revision") == 0);
    CHECK(c.Post("/api/topics/merge", json{{"ids", {0, 1}}}.dump(), "application/json")->status == 400);
    CHECK(c.Post("/api/topics/merge", "not json", "application/json")->status == 400);
    CHECK(c.Post("/api/topics/merge", json{{"ids", {0, 0}}, {"revision", 0}}.dump(), "application/json")->status ==
          400);

    const auto size0 = body_of(c.Get("/api/topics/0")).at("size").get<int>();
    const auto size1 = body_of(c.Get("/api/topics/1")).at("size").get<int>();
    const auto merged = post(c, "/api/topics/merge", {{"ids", {0, 1}}, {"revision", 0}});
    CHECK(merged.at("revision") == 1);
    CHECK(merged.at("topic").at("size") == size0 + size1);
    CHECK(merged.at("topic").at("topic_id") == 6);
    CHECK(merged.at("retired") == json{0, 1});
    CHECK(c.Get("/api/topics/0")->status == 404);

    auto renamed = c.Patch("/api/topics/6", json{{"label", "Merged theme"}, {"revision", 1}}.dump(), "application/json");
    REQUIRE(renamed);
    CHECK(renamed->status == 200);
    CHECK(json::parse(renamed->body).at("topic").at("label") == "Merged theme");
    CHECK(c.Patch("/api/topics/6", json{{"label", ""}, {"revision", 2}}.dump(), "application/json")->status == 400);
    CHECK(c.Patch("/api/topics/0", json{{"label", "x"}, {"revision", 2}}.dump(), "application/json")->status == 404);

    const auto selected = post(c, "/api/selection", {{"ids", {6, 2}}, {"revision", 2}});
    CHECK(selected.at("revision") == 3);
    CHECK(selected.at("selected") == json{2, 6});

    const auto metrics = body_of(c.Get("/api/metrics"));
    CHECK(metrics.at("revision") == 3);
    CHECK(metrics.at("metrics").at("topics") == 5);
    CHECK(metrics.at("csv_header") == eval::csv_header());

    const auto report = body_of(c.Get("/api/report"));
    CHECK(report.at("topics").size() == 2);
    CHECK(report.at("revision") == 3);

    const auto session = body_of(c.Get("/api/session"));
    CHECK(session.at("revision") == 3);
    CHECK(session.at("refinement_log").size() == 3);
  }

  TEST_CASE("session persists and resumes") {
    const auto model = fresh_model("svc_resume");
    std::string hash;
    {
      service::TopicService svc(model);
      CHECK(svc.merge({{"ids", {2, 3}}, {"revision", 0}}).status == 200);
      CHECK(svc.rename(1, {{"label", "Kept"}, {"revision", 1}}).status == 200);
      hash = svc.model().hash();
      CHECK(fs::exists(svc.session_file()));
    }
    service::TopicService again(model);
    CHECK(again.model().revision() == 2);
    CHECK(again.model().hash() == hash);
    CHECK(again.get_topic(1).body.at("label") == "Kept");
    const auto s = service::session_from_json(json::parse(qda::testing::read_file(again.session_file())));
    CHECK(s.revision == 2);
    CHECK(s.model == fs::weakly_canonical(model).string());

    const auto other = fresh_model("svc_other");
    CHECK_THROWS_AS(service::TopicService(other, again.session_file()), ConfigError);
  }

  TEST_CASE("concurrent readers and writers keep revisions consistent") {
    Running s(fresh_model("svc_concurrent"));
    std::vector<std::thread> readers;
    std::atomic<int> failures = 0;
    for (int i = 0; i < 4; ++i) {
      readers.emplace_back([&] {
        auto c = s.client();
        for (int k = 0; k < 20; ++k) {
          auto r = c.Get("/api/topics");
          if (!r || r->status != 200) ++failures;
        }
      });
    }
    auto c = s.client();
    int ok = 0;
    for (int rev = 0; rev < 10; ++rev) {
      auto r = c.Post("/api/selection", json{{"ids", {rev % 6}}, {"revision", rev}}.dump(), "application/json");
      ok += r && r->status == 200;
    }
    for (auto& t : readers) t.join();
    CHECK(failures == 0);
    CHECK(ok == 10);
    CHECK(s.svc.model().revision() == 10);
  }

  TEST_CASE("port in use") {
    Running s(fresh_model("svc_port"));
    service::Server second(s.svc);
    CHECK_THROWS_AS(second.bind("127.0.0.1", s.port), ConfigError);
  }
}
