#include <condition_variable>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "mock_corpus.hpp"
#include "qag/dataset_io.hpp"
#include "qag/service.hpp"
#include "temp_dir.hpp"

using nlohmann::json;
using test_support::TempDir;

namespace {

// Mock that holds every generate call until opened.
class GateBackend : public qag::Backend {
 public:
  explicit GateBackend(std::shared_ptr<qag::MockBackend> inner) : inner_(std::move(inner)) {}
  std::string identity() const override { return "gate:" + inner_->identity(); }

  void open() {
    std::lock_guard lock(mu_);
    open_ = true;
    cv_.notify_all();
  }
  // Blocks until `n` calls are waiting at the gate.
  void wait_for_waiters(int n) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return waiting_ >= n; });
  }

 protected:
  std::vector<qag::GenerationResult> do_generate(
      std::span<const qag::GenerationRequest> requests) override {
    {
      std::unique_lock lock(mu_);
      ++waiting_;
      cv_.notify_all();
      cv_.wait(lock, [&] { return open_; });
    }
    return inner_->generate(requests);
  }

 private:
  std::shared_ptr<qag::MockBackend> inner_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool open_ = false;
  int waiting_ = 0;
};

class Server {
 public:
  explicit Server(qag::ServiceConfig cfg) : service_(std::move(cfg)) {
    port_ = service_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~Server() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

 private:
  qag::PlaygroundService service_;
  int port_ = 0;
  std::thread thread_;
};

json post(httplib::Client& c, const std::string& path, const json& body, int* status) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  *status = res->status;
  return res->body.empty() ? json() : json::parse(res->body);
}

json get(httplib::Client& c, const std::string& path, int* status) {
  auto res = c.Get(path);
  REQUIRE(res);
  *status = res->status;
  return res->body.empty() || res->get_header_value("Content-Type") != "application/json"
             ? json()
             : json::parse(res->body);
}

struct Fixture {
  test_support::MockCorpus corpus = test_support::make_mock_corpus(4, 11, 2, 4, {}, "books");

  qag::ServiceConfig config(bool pipeline = true) const {
    qag::ServiceConfig cfg;
    cfg.models["e2e"] = test_support::mock(corpus.end2end_fixture);
    if (pipeline) {
      cfg.models["ae"] = test_support::mock(corpus.ae_fixture);
      cfg.models["qg"] = test_support::mock(corpus.qg_fixture);
    }
    return cfg;
  }
  std::string text(std::size_t c) const { return corpus.contexts.at(c).text(); }
};

}  // namespace

TEST_CASE("service: end2end generation echoes parsed pairs with the strategy tag") {
  Fixture fx;
  Server server(fx.config());
  auto c = server.client();
  int status = 0;
  auto r = post(c, "/generate",
                {{"context", fx.text(0)}, {"strategy", "end2end"}, {"model", "e2e"}}, &status);
  REQUIRE(status == 200);
  const auto k = fx.corpus.contexts[0].sentence_count();
  REQUIRE(r["pairs"].size() == (k + 1) / 2);
  CHECK(r["backend_calls"] == 1);
  CHECK(r["dropped_segments"] == 0);
  CHECK(r.contains("timing_ms"));
  for (std::size_t i = 0; i < r["pairs"].size(); ++i) {
    const auto& p = r["pairs"][i];
    CHECK(p["id"] == "g" + std::to_string(i + 1));
    CHECK(p["strategy"] == "end2end");
    CHECK(p["status"] == "proposed");
    CHECK(p["question"] == fx.corpus.gold[0][i].question());
    // The answer span points at the answer text in the context.
    const auto span = p["answer_span"];
    const auto text = fx.text(0);
    CHECK(text.substr(span[0].get<std::size_t>(), span[1].get<std::size_t>() - span[0].get<std::size_t>()) ==
          p["answer"].get<std::string>());
  }
}

TEST_CASE("service: pipeline pairs carry sentence spans") {
  Fixture fx;
  Server server(fx.config());
  auto c = server.client();
  int status = 0;
  auto r = post(c, "/generate",
                {{"context", fx.text(1)}, {"strategy", "pipeline"}, {"models", {"ae", "qg"}}},
                &status);
  REQUIRE(status == 200);
  const auto& ctx = fx.corpus.contexts[1];
  CHECK(r["backend_calls"] == 2 * ctx.sentence_count());
  REQUIRE(r["pairs"].size() == ctx.sentence_count());
  for (std::size_t i = 0; i < ctx.sentence_count(); ++i) {
    CHECK(r["pairs"][i]["sentence_span"] == json({ctx.sentences()[i].start, ctx.sentences()[i].end}));
  }
}

TEST_CASE("service: request validation and model availability") {
  Fixture fx;
  int status = 0;
  {
    Server server(fx.config(false));
    auto c = server.client();
    post(c, "/generate", {{"context", "   "}, {"strategy", "end2end"}}, &status);
    CHECK(status == 400);
    post(c, "/generate", {{"context", fx.text(0)}, {"strategy", "sideways"}}, &status);
    CHECK(status == 400);
    post(c, "/generate", {{"context", fx.text(0)}, {"decoding", {{"num_beams", 0}}}}, &status);
    CHECK(status == 400);
    post(c, "/generate", {{"context", fx.text(0)}, {"model", "nope"}}, &status);
    CHECK(status == 503);
    auto conflict = post(c, "/generate", {{"context", fx.text(0)}, {"strategy", "pipeline"}}, &status);
    CHECK(status == 409);
    CHECK(conflict["error"].get<std::string>().find("two loaded models") != std::string::npos);
    auto bad = c.Post("/generate", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
  }
  {
    qag::ServiceConfig cfg;
    Server server(cfg);
    auto c = server.client();
    post(c, "/generate", {{"context", fx.text(0)}}, &status);
    CHECK(status == 503);
  }
  {
    auto cfg = fx.config(false);
    cfg.max_context_chars = 10;
    Server server(cfg);
    auto c = server.client();
    auto r = post(c, "/generate", {{"context", fx.text(0)}}, &status);
    CHECK(status == 400);
    CHECK(r["error"].get<std::string>().find("limit is 10") != std::string::npos);
  }
}

TEST_CASE("service: decisions keep an append-only history") {
  Fixture fx;
  Server server(fx.config());
  auto c = server.client();
  int status = 0;
  auto g = post(c, "/generate",
                {{"session_id", "s1"}, {"context", fx.text(1)}, {"strategy", "pipeline"},
                 {"models", {"ae", "qg"}}},
                &status);
  REQUIRE(status == 200);
  REQUIRE(g["pairs"].size() >= 2);

  auto s = post(c, "/session/s1/decision", {{"pair_id", "g1"}, {"action", "accept"}}, &status);
  CHECK(status == 200);
  CHECK(s["accepted"] == json({"g1"}));
  s = post(c, "/session/s1/decision", {{"pair_id", "g2"}, {"action", "reject"}}, &status);
  CHECK(s["rejected"] == json({"g2"}));
  // Accepting a rejected pair moves it; the two sets stay disjoint.
  s = post(c, "/session/s1/decision", {{"pair_id", "g2"}, {"action", "accept"}}, &status);
  CHECK(s["accepted"] == json({"g1", "g2"}));
  CHECK(s["rejected"].empty());

  const auto original = g["pairs"][0]["question"].get<std::string>();
  s = post(c, "/session/s1/decision",
           {{"pair_id", "g1"}, {"action", "edit"}, {"question", "Which entity came first?"}},
           &status);
  CHECK(status == 200);
  const auto& edited = s["pairs"][0];
  CHECK(edited["question"] == "Which entity came first?");
  CHECK(edited["original"]["question"] == original);
  CHECK(edited["edited"] == true);
  CHECK(edited["score"].is_null());
  REQUIRE(s["history"].size() == 4);
  CHECK(s["history"][3]["previous"]["question"] == original);
  CHECK(s["history"][0]["action"] == "accept");

  post(c, "/session/s1/decision", {{"pair_id", "g99"}, {"action", "accept"}}, &status);
  CHECK(status == 404);
  post(c, "/session/none/decision", {{"pair_id", "g1"}, {"action", "accept"}}, &status);
  CHECK(status == 404);
  post(c, "/session/s1/decision", {{"pair_id", "g1"}, {"action", "maybe"}}, &status);
  CHECK(status == 400);
  post(c, "/session/s1/decision", {{"pair_id", "g1"}, {"action", "edit"}}, &status);
  CHECK(status == 400);
  get(c, "/session/none", &status);
  CHECK(status == 404);
}

TEST_CASE("service: export holds accepted pairs only and re-imports losslessly") {
  Fixture fx;
  Server server(fx.config());
  auto c = server.client();
  int status = 0;
  for (std::size_t ctx : {0, 1}) {
    post(c, "/generate",
         {{"session_id", "ex"}, {"context", fx.text(ctx)}, {"domain", "books"},
          {"strategy", "pipeline"}, {"models", {"ae", "qg"}}},
         &status);
    REQUIRE(status == 200);
  }
  auto empty = c.Get("/session/ex/export?format=jsonl");
  REQUIRE(empty);
  CHECK(empty->status == 204);

  const auto n0 = fx.corpus.contexts[0].sentence_count();
  post(c, "/session/ex/decision", {{"pair_id", "g1"}, {"action", "accept"}}, &status);
  post(c, "/session/ex/decision", {{"pair_id", "g2"}, {"action", "reject"}}, &status);
  const auto later = "g" + std::to_string(n0 + 1);
  post(c, "/session/ex/decision",
       {{"pair_id", later}, {"action", "edit"}, {"answer", fx.corpus.gold[1][0].answer()},
        {"question", "Edited?"}},
       &status);

  auto res = c.Get("/session/ex/export?format=jsonl");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  std::istringstream in(res->body);
  const auto imported = qag::read_dataset_jsonl(in, qag::Split::train);
  REQUIRE(imported.size() == 2);
  CHECK(imported.entries()[0].context.text() == fx.text(0));
  CHECK(imported.entries()[0].context.domain() == std::optional<std::string>("books"));
  REQUIRE(imported.entries()[0].pairs.size() == 1);
  CHECK(imported.entries()[0].pairs[0].question() == fx.corpus.gold[0][0].question());
  CHECK(imported.entries()[0].pairs[0].strategy() == qag::Strategy::pipeline);
  CHECK(imported.entries()[1].pairs.at(0).question() == "Edited?");

  // Writing the imported dataset again gives the same bytes.
  std::ostringstream again;
  qag::write_dataset_jsonl(again, imported);
  CHECK(again.str() == res->body);

  auto bad = c.Get("/session/ex/export?format=csv");
  REQUIRE(bad);
  CHECK(bad->status == 400);
}

TEST_CASE("service: sessions reload from the sessions directory") {
  Fixture fx;
  TempDir dir;
  json before;
  {
    auto cfg = fx.config();
    cfg.sessions_dir = dir.path().string();
    Server server(cfg);
    auto c = server.client();
    int status = 0;
    post(c, "/generate", {{"session_id", "keep"}, {"context", fx.text(2)}, {"model", "e2e"}}, &status);
    REQUIRE(status == 200);
    post(c, "/session/keep/decision", {{"pair_id", "g1"}, {"action", "edit"}, {"question", "Q?"}},
         &status);
    before = get(c, "/session/keep", &status);
    REQUIRE(status == 200);
  }
  auto cfg = fx.config();
  cfg.sessions_dir = dir.path().string();
  Server server(cfg);
  auto c = server.client();
  int status = 0;
  CHECK(get(c, "/session/keep", &status) == before);
  CHECK(status == 200);
  // Pair ids keep counting after a reload.
  auto g = post(c, "/generate", {{"session_id", "keep"}, {"context", fx.text(3)}, {"model", "e2e"}},
                &status);
  CHECK(g["pairs"][0]["id"] == "g" + std::to_string(before["pairs"].size() + 1));
}

TEST_CASE("service: long contexts become polled jobs") {
  Fixture fx;
  auto cfg = fx.config();
  cfg.async_threshold_chars = 5;
  Server server(cfg);
  auto c = server.client();
  int status = 0;
  auto accepted = post(c, "/generate", {{"context", fx.text(0)}, {"model", "e2e"}}, &status);
  REQUIRE(status == 202);
  const auto poll = accepted["poll"].get<std::string>();
  json job;
  for (int i = 0; i < 500; ++i) {
    job = get(c, poll, &status);
    REQUIRE(status == 200);
    if (job["status"] != "pending") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(job["status"] == "done");
  CHECK(job["result"]["pairs"].size() == (fx.corpus.contexts[0].sentence_count() + 1) / 2);
  CHECK(job["result"]["session_id"] == accepted["session_id"]);
  get(c, "/jobs/ffff", &status);
  CHECK(status == 404);
}

TEST_CASE("service: a full model queue answers 429 and other sessions are not blocked") {
  Fixture fx;
  auto gate = std::make_shared<GateBackend>(test_support::mock(fx.corpus.end2end_fixture));
  auto cfg = fx.config();
  cfg.models["slow"] = gate;
  cfg.queue_depth = 1;
  Server server(cfg);

  int slow_status = 0;
  std::thread blocked([&] {
    auto c = server.client();
    post(c, "/generate", {{"session_id", "a"}, {"context", fx.text(0)}, {"model", "slow"}},
         &slow_status);
  });
  gate->wait_for_waiters(1);

  auto c = server.client();
  int status = 0;
  auto full = post(c, "/generate", {{"session_id", "b"}, {"context", fx.text(1)}, {"model", "slow"}},
                   &status);
  CHECK(status == 429);
  CHECK(full["error"].get<std::string>().find("slow") != std::string::npos);

  // Another session on another model completes while "slow" is held.
  auto other = post(c, "/generate", {{"session_id", "b"}, {"context", fx.text(1)}, {"model", "e2e"}},
                    &status);
  CHECK(status == 200);
  CHECK(other["session_id"] == "b");
  auto models = get(c, "/models", &status);
  for (const auto& m : models["models"]) {
    if (m["name"] == "slow") CHECK(m["pending"] == 1);
  }

  gate->open();
  blocked.join();
  CHECK(slow_status == 200);
}

TEST_CASE("service: OpenAPI document and CORS") {
  Fixture fx;
  auto cfg = fx.config(false);
  cfg.cors_origin = "http://localhost:5173";
  Server server(cfg);
  auto c = server.client();
  int status = 0;
  auto spec = get(c, "/spec", &status);
  CHECK(status == 200);
  CHECK(spec["openapi"] == "3.0.3");
  for (const auto* path : {"/generate", "/jobs/{token}", "/session/{id}", "/session/{id}/decision",
                           "/session/{id}/export", "/models", "/spec"}) {
    CHECK(spec["paths"].contains(path));
  }
  CHECK(spec == qag::PlaygroundService::openapi());

  auto res = c.Get("/models");
  REQUIRE(res);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  auto pre = c.Options("/generate");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}
