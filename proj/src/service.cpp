#include "qag/service.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <regex>
#include <thread>

#include "httplib.h"
#include "qag/dataset_io.hpp"
#include "qag/encoding.hpp"
#include "qag/errors.hpp"
#include "qag/strategies.hpp"
#include "qag/utf8.hpp"

namespace qag {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Carries an HTTP status out of request handling.
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_token() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  static const char* hex = "0123456789abcdef";
  std::string out;
  auto v = rng();
  for (int i = 0; i < 16; ++i, v >>= 4) out += hex[v & 15];
  return out;
}

bool valid_session_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, re);
}

struct ModelSlot {
  std::string name;
  ModelHandle handle;
  std::mutex run_mu;
  std::atomic<std::size_t> pending{0};
};

// Holds one queue position on each slot; released on destruction.
class Reservation {
 public:
  Reservation() = default;
  Reservation(const Reservation&) = delete;
  Reservation& operator=(const Reservation&) = delete;
  ~Reservation() {
    for (auto* s : slots_) --s->pending;
  }
  void add(ModelSlot* s) { slots_.push_back(s); }
  const std::vector<ModelSlot*>& slots() const { return slots_; }

 private:
  std::vector<ModelSlot*> slots_;
};

struct PairRecord {
  std::string id;
  QAPair original;
  std::optional<std::string> edited_question;
  std::optional<std::string> edited_answer;
  std::string status = "proposed";
  std::size_t context = 0;
  std::size_t generation = 0;

  std::string question() const { return edited_question.value_or(original.question()); }
  std::string answer() const { return edited_answer.value_or(original.answer()); }
  bool edited() const { return edited_question || edited_answer; }

  // Edited pairs lose the model score since it no longer describes them.
  QAPair current() const {
    if (!edited()) return original;
    return QAPair(question(), answer(), original.strategy(), original.source_sentence_index());
  }
};

struct GenerationRecord {
  std::size_t context = 0;
  std::string strategy;
  std::vector<std::string> models;
  json decoding;
  std::vector<std::string> pair_ids;
  std::size_t dropped_segments = 0;
  std::size_t dropped_answers = 0;
  std::size_t backend_calls = 0;
  double timing_ms = 0;
  std::string at;
};

struct Session {
  std::string id;
  std::mutex mu;
  std::vector<Context> contexts;
  std::vector<GenerationRecord> generations;
  std::vector<PairRecord> pairs;
  json history = json::array();
  std::size_t next_pair = 1;

  PairRecord* find_pair(const std::string& pair_id) {
    for (auto& p : pairs) {
      if (p.id == pair_id) return &p;
    }
    return nullptr;
  }
};

std::optional<std::array<std::size_t, 2>> sentence_span(const Context& ctx, const QAPair& p) {
  if (!p.source_sentence_index() || *p.source_sentence_index() >= ctx.sentence_count()) {
    return std::nullopt;
  }
  const auto& s = ctx.sentences()[*p.source_sentence_index()];
  return std::array<std::size_t, 2>{s.start, s.end};
}

// First occurrence of the answer, searched inside the source sentence when
// there is one, as code-point offsets into the context.
std::optional<std::array<std::size_t, 2>> answer_span(const Context& ctx, const std::string& answer,
                                                      const QAPair& original) {
  std::size_t from = 0;
  if (auto s = sentence_span(ctx, original)) from = utf8::byte_offset(ctx.text(), (*s)[0]);
  auto pos = ctx.text().find(answer, from);
  if (pos == std::string::npos) pos = ctx.text().find(answer);
  if (pos == std::string::npos || answer.empty()) return std::nullopt;
  const auto start = utf8::code_point_index(ctx.text(), pos);
  return std::array<std::size_t, 2>{start, start + utf8::length(answer)};
}

json span_json(const std::optional<std::array<std::size_t, 2>>& s) {
  return s ? json{(*s)[0], (*s)[1]} : json(nullptr);
}

json pair_view(const Session& s, const PairRecord& p) {
  const auto& ctx = s.contexts.at(p.context);
  auto j = pair_to_json(p.current());
  j["id"] = p.id;
  j["status"] = p.status;
  j["edited"] = p.edited();
  j["original"] = pair_to_json(p.original);
  j["context_id"] = ctx.id();
  j["generation"] = p.generation;
  j["answer_span"] = span_json(answer_span(ctx, p.answer(), p.original));
  j["sentence_span"] = span_json(sentence_span(ctx, p.original));
  return j;
}

json context_json(const Context& c) {
  return {{"id", c.id()}, {"text", c.text()}, {"domain", c.domain() ? json(*c.domain()) : json(nullptr)}};
}

json session_view(const Session& s) {
  json j;
  j["session_id"] = s.id;
  j["contexts"] = json::array();
  for (const auto& c : s.contexts) j["contexts"].push_back(context_json(c));
  j["generations"] = json::array();
  for (std::size_t g = 0; g < s.generations.size(); ++g) {
    const auto& r = s.generations[g];
    j["generations"].push_back({{"index", g},
                                {"context_id", s.contexts.at(r.context).id()},
                                {"strategy", r.strategy},
                                {"models", r.models},
                                {"decoding", r.decoding},
                                {"pair_ids", r.pair_ids},
                                {"dropped_segments", r.dropped_segments},
                                {"dropped_answers", r.dropped_answers},
                                {"backend_calls", r.backend_calls},
                                {"timing_ms", r.timing_ms},
                                {"at", r.at}});
  }
  j["pairs"] = json::array();
  j["accepted"] = json::array();
  j["rejected"] = json::array();
  for (const auto& p : s.pairs) {
    j["pairs"].push_back(pair_view(s, p));
    if (p.status == "accepted") j["accepted"].push_back(p.id);
    if (p.status == "rejected") j["rejected"].push_back(p.id);
  }
  j["history"] = s.history;
  return j;
}

// Persistence format: enough to rebuild the Session exactly.
json session_to_disk(const Session& s) {
  json j;
  j["session_id"] = s.id;
  j["next_pair"] = s.next_pair;
  j["contexts"] = json::array();
  for (const auto& c : s.contexts) j["contexts"].push_back(context_json(c));
  j["generations"] = json::array();
  for (const auto& r : s.generations) {
    j["generations"].push_back({{"context", r.context},
                                {"strategy", r.strategy},
                                {"models", r.models},
                                {"decoding", r.decoding},
                                {"pair_ids", r.pair_ids},
                                {"dropped_segments", r.dropped_segments},
                                {"dropped_answers", r.dropped_answers},
                                {"backend_calls", r.backend_calls},
                                {"timing_ms", r.timing_ms},
                                {"at", r.at}});
  }
  j["pairs"] = json::array();
  for (const auto& p : s.pairs) {
    j["pairs"].push_back(
        {{"id", p.id},
         {"original", pair_to_json(p.original)},
         {"edited_question", p.edited_question ? json(*p.edited_question) : json(nullptr)},
         {"edited_answer", p.edited_answer ? json(*p.edited_answer) : json(nullptr)},
         {"status", p.status},
         {"context", p.context},
         {"generation", p.generation}});
  }
  j["history"] = s.history;
  return j;
}

std::unique_ptr<Session> session_from_disk(const json& j) {
  auto s = std::make_unique<Session>();
  s->id = j.at("session_id").get<std::string>();
  s->next_pair = j.at("next_pair").get<std::size_t>();
  for (const auto& c : j.at("contexts")) {
    std::optional<std::string> domain;
    if (!c["domain"].is_null()) domain = c["domain"].get<std::string>();
    s->contexts.push_back(
        Context::from_text(c.at("id").get<std::string>(), c.at("text").get<std::string>(), domain));
  }
  for (const auto& r : j.at("generations")) {
    GenerationRecord g;
    g.context = r.at("context").get<std::size_t>();
    g.strategy = r.at("strategy").get<std::string>();
    g.models = r.at("models").get<std::vector<std::string>>();
    g.decoding = r.at("decoding");
    g.pair_ids = r.at("pair_ids").get<std::vector<std::string>>();
    g.dropped_segments = r.at("dropped_segments").get<std::size_t>();
    g.dropped_answers = r.at("dropped_answers").get<std::size_t>();
    g.backend_calls = r.at("backend_calls").get<std::size_t>();
    g.timing_ms = r.at("timing_ms").get<double>();
    g.at = r.at("at").get<std::string>();
    s->generations.push_back(std::move(g));
  }
  for (const auto& p : j.at("pairs")) {
    PairRecord r{p.at("id").get<std::string>(), pair_from_json(p.at("original")), {}, {}};
    if (!p["edited_question"].is_null()) r.edited_question = p["edited_question"].get<std::string>();
    if (!p["edited_answer"].is_null()) r.edited_answer = p["edited_answer"].get<std::string>();
    r.status = p.at("status").get<std::string>();
    r.context = p.at("context").get<std::size_t>();
    r.generation = p.at("generation").get<std::size_t>();
    s->pairs.push_back(std::move(r));
  }
  s->history = j.at("history");
  return s;
}

struct GenerateRequest {
  std::string session_id;
  Context context;
  Strategy strategy = Strategy::end2end;
  std::vector<std::string> model_names;
  StrategyConfig config;
  json decoding;
  bool async = false;
};

struct Job {
  std::string status = "pending";
  int code = 0;
  json body;
};

}  // namespace

struct PlaygroundService::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  std::map<std::string, std::unique_ptr<ModelSlot>> slots;

  std::mutex sessions_mu;
  std::map<std::string, std::unique_ptr<Session>> sessions;

  std::mutex jobs_mu;
  std::map<std::string, Job> jobs;
  std::vector<std::thread> workers;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
    for (const auto& [name, handle] : cfg.models) {
      auto slot = std::make_unique<ModelSlot>();
      slot->name = name;
      slot->handle = handle;
      slots.emplace(name, std::move(slot));
    }
    if (cfg.sessions_dir) fs::create_directories(*cfg.sessions_dir);
    routes();
  }

  ~Impl() {
    server.stop();
    std::lock_guard lock(jobs_mu);
    for (auto& t : workers) {
      if (t.joinable()) t.join();
    }
  }

  // ---- sessions -----------------------------------------------------------

  Session* find_session(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    if (auto it = sessions.find(id); it != sessions.end()) return it->second.get();
    if (!cfg.sessions_dir || !valid_session_id(id)) return nullptr;
    const auto path = fs::path(*cfg.sessions_dir) / (id + ".json");
    if (!fs::exists(path)) return nullptr;
    auto s = session_from_disk(json::parse(read_file(path.string())));
    auto* raw = s.get();
    sessions.emplace(id, std::move(s));
    return raw;
  }

  Session* find_or_create_session(const std::string& id) {
    if (auto* s = find_session(id)) return s;
    std::lock_guard lock(sessions_mu);
    auto& slot = sessions[id];
    if (!slot) {
      slot = std::make_unique<Session>();
      slot->id = id;
    }
    return slot.get();
  }

  // Caller holds s.mu.
  void persist(const Session& s) {
    if (!cfg.sessions_dir) return;
    const auto path = fs::path(*cfg.sessions_dir) / (s.id + ".json");
    const auto tmp = path.string() + ".tmp";
    write_file(tmp, session_to_disk(s).dump(2));
    fs::rename(tmp, path);
  }

  // ---- generate -----------------------------------------------------------

  GenerateRequest parse_generate(const json& body) {
    if (!body.is_object()) throw HttpError(400, "request body must be a JSON object");
    GenerateRequest r;
    if (body.contains("session_id")) {
      if (!body["session_id"].is_string() || !valid_session_id(body["session_id"])) {
        throw HttpError(400, "session_id must match [A-Za-z0-9_-]{1,64}");
      }
      r.session_id = body["session_id"];
    } else {
      r.session_id = random_token();
    }
    if (!body.contains("context") || !body["context"].is_string()) {
      throw HttpError(400, "context must be a string");
    }
    const std::string text = body["context"];
    if (utf8::trim(text).empty()) throw HttpError(400, "context is empty");
    const auto chars = utf8::length(text);
    if (chars > cfg.max_context_chars) {
      throw HttpError(400, "context has " + std::to_string(chars) + " characters; the limit is " +
                               std::to_string(cfg.max_context_chars));
    }
    std::optional<std::string> domain;
    if (body.contains("domain") && body["domain"].is_string()) domain = body["domain"];

    const std::string strategy_name = body.value("strategy", std::string("end2end"));
    if (strategy_name != "pipeline" && strategy_name != "multitask" && strategy_name != "end2end") {
      throw HttpError(400, "strategy must be pipeline, multitask or end2end");
    }
    r.strategy = parse_strategy(strategy_name);

    if (slots.empty()) throw HttpError(503, "no model is loaded");
    if (r.strategy == Strategy::pipeline) {
      if (slots.size() < 2) {
        throw HttpError(409,
                        "the pipeline strategy needs two loaded models (answer extraction, then "
                        "question generation); start the service with a second --model NAME=SPEC "
                        "or use the multitask or end2end strategy");
      }
      if (!body.contains("models") || !body["models"].is_array() || body["models"].size() != 2 ||
          !body["models"][0].is_string() || !body["models"][1].is_string()) {
        throw HttpError(400, "pipeline needs models: [answer_extraction_model, question_generation_model]");
      }
      r.model_names = {body["models"][0], body["models"][1]};
    } else if (body.contains("model")) {
      if (!body["model"].is_string()) throw HttpError(400, "model must be a string");
      r.model_names = {body["model"]};
    } else if (slots.size() == 1) {
      r.model_names = {slots.begin()->first};
    } else {
      throw HttpError(400, "several models are loaded; name one with \"model\"");
    }
    for (const auto& name : r.model_names) {
      if (!slots.count(name)) throw HttpError(503, "model not loaded: " + name);
    }

    r.config.strategy = r.strategy;
    const json decoding = body.value("decoding", json::object());
    if (!decoding.is_object()) throw HttpError(400, "decoding must be an object");
    try {
      r.config.num_beams = decoding.value("num_beams", r.config.num_beams);
      r.config.answers_per_sentence =
          decoding.value("answers_per_sentence", r.config.answers_per_sentence);
      r.config.require_answer_in_context =
          decoding.value("require_answer_in_context", r.config.require_answer_in_context);
      r.config.validate();
    } catch (const json::exception& e) {
      throw HttpError(400, std::string("decoding: ") + e.what());
    } catch (const ValidationError& e) {
      throw HttpError(400, e.what());
    }
    r.decoding = {{"num_beams", r.config.num_beams},
                  {"answers_per_sentence", r.config.answers_per_sentence},
                  {"require_answer_in_context", r.config.require_answer_in_context}};
    r.async = body.value("async", false) || chars > cfg.async_threshold_chars;

    find_or_create_session(r.session_id);
    try {
      // The real id is assigned when the result is stored.
      r.context = Context::from_text("pending", text, domain);
    } catch (const ValidationError& e) {
      throw HttpError(400, e.what());
    }
    return r;
  }

  // Takes a queue position on every model the request needs, or throws 429.
  std::unique_ptr<Reservation> reserve(const std::vector<std::string>& names) {
    auto r = std::make_unique<Reservation>();
    std::set<std::string> unique(names.begin(), names.end());
    for (const auto& name : unique) {
      auto* slot = slots.at(name).get();
      if (++slot->pending > cfg.queue_depth) {
        --slot->pending;
        throw HttpError(429, "queue for model " + name + " is full");
      }
      r->add(slot);
    }
    return r;
  }

  json run_generate(const GenerateRequest& r, const Reservation& reservation) {
    const auto t0 = std::chrono::steady_clock::now();
    GenerationOutcome outcome;
    {
      // Slots are ordered by name, so multi-model locking is deadlock free.
      const auto& held = reservation.slots();
      std::unique_lock<std::mutex> first(held.at(0)->run_mu);
      std::unique_lock<std::mutex> second;
      if (held.size() > 1) second = std::unique_lock<std::mutex>(held.at(1)->run_mu);
      auto handle = [&](std::size_t i) { return slots.at(r.model_names.at(i))->handle; };
      switch (r.strategy) {
        case Strategy::pipeline:
          outcome = generate_pipeline(r.context, *handle(0), *handle(1), r.config);
          break;
        case Strategy::multitask:
          outcome = generate_multitask(r.context, *handle(0), r.config);
          break;
        default:
          outcome = generate_end2end(r.context, *handle(0), r.config);
      }
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    Session* s = find_or_create_session(r.session_id);
    std::lock_guard lock(s->mu);
    s->contexts.emplace_back(r.session_id + "-c" + std::to_string(s->contexts.size()),
                             r.context.text(), r.context.sentences(), r.context.domain());
    const auto ctx_index = s->contexts.size() - 1;
    GenerationRecord g{ctx_index, std::string(to_string(r.strategy)), r.model_names, r.decoding,
                       {}, outcome.dropped_segments, outcome.dropped_answers,
                       outcome.backend_calls, ms, now_utc()};
    const auto gen_index = s->generations.size();
    json pairs = json::array();
    for (auto& p : outcome.pairs) {
      PairRecord rec{"g" + std::to_string(s->next_pair++), std::move(p), {}, {}};
      rec.context = ctx_index;
      rec.generation = gen_index;
      g.pair_ids.push_back(rec.id);
      s->pairs.push_back(std::move(rec));
      pairs.push_back(pair_view(*s, s->pairs.back()));
    }
    s->generations.push_back(std::move(g));
    persist(*s);
    return {{"session_id", s->id},
            {"generation", gen_index},
            {"context_id", s->contexts.back().id()},
            {"strategy", to_string(r.strategy)},
            {"models", r.model_names},
            {"decoding", r.decoding},
            {"pairs", pairs},
            {"dropped_segments", outcome.dropped_segments},
            {"dropped_answers", outcome.dropped_answers},
            {"backend_calls", outcome.backend_calls},
            {"timing_ms", ms}};
  }

  void handle_generate(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      throw HttpError(400, "request body is not valid JSON");
    }
    auto r = parse_generate(body);
    auto reservation = reserve(r.model_names);
    if (!r.async) {
      reply(res, 200, run_generate(r, *reservation));
      return;
    }
    const auto token = random_token();
    const auto session_id = r.session_id;
    {
      std::lock_guard lock(jobs_mu);
      jobs[token] = Job{};
      workers.emplace_back([this, token, r = std::move(r), res_ptr = std::move(reservation)] {
        Job done;
        try {
          done = {"done", 200, run_generate(r, *res_ptr)};
        } catch (const std::exception& e) {
          done = {"error", 500, {{"error", e.what()}}};
        }
        std::lock_guard lock(jobs_mu);
        jobs[token] = std::move(done);
      });
    }
    reply(res, 202, {{"job", token}, {"session_id", session_id}, {"poll", "/jobs/" + token}});
  }

  void handle_job(const std::string& token, httplib::Response& res) {
    std::lock_guard lock(jobs_mu);
    auto it = jobs.find(token);
    if (it == jobs.end()) throw HttpError(404, "unknown job " + token);
    json out = {{"job", token}, {"status", it->second.status}};
    if (it->second.status == "done") out["result"] = it->second.body;
    if (it->second.status == "error") {
      out["code"] = it->second.code;
      out["error"] = it->second.body.value("error", "");
    }
    reply(res, 200, out);
  }

  // ---- decisions and export -----------------------------------------------

  void handle_decision(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      throw HttpError(400, "request body is not valid JSON");
    }
    if (!body.is_object() || !body.contains("pair_id") || !body["pair_id"].is_string() ||
        !body.contains("action") || !body["action"].is_string()) {
      throw HttpError(400, "decision needs pair_id and action");
    }
    const std::string action = body["action"];
    if (action != "accept" && action != "reject" && action != "edit") {
      throw HttpError(400, "action must be accept, reject or edit");
    }
    Session* s = find_session(id);
    if (!s) throw HttpError(404, "unknown session " + id);
    std::lock_guard lock(s->mu);
    PairRecord* p = s->find_pair(body["pair_id"]);
    if (!p) throw HttpError(404, "unknown pair " + body["pair_id"].get<std::string>());

    json event = {{"pair_id", p->id}, {"action", action}, {"at", now_utc()}};
    if (action == "edit") {
      auto field = [&](const char* key) -> std::optional<std::string> {
        if (!body.contains(key) || body[key].is_null()) return std::nullopt;
        if (!body[key].is_string()) throw HttpError(400, std::string(key) + " must be a string");
        return body[key].get<std::string>();
      };
      auto q = field("question"), a = field("answer");
      if (!q && !a) throw HttpError(400, "edit needs question or answer");
      try {
        QAPair(q.value_or(p->question()), a.value_or(p->answer()));
      } catch (const ValidationError& e) {
        throw HttpError(400, e.what());
      }
      event["previous"] = {{"question", p->question()}, {"answer", p->answer()}};
      if (q) p->edited_question = *q;
      if (a) p->edited_answer = *a;
      event["question"] = p->question();
      event["answer"] = p->answer();
      p->status = "accepted";
    } else {
      p->status = action == "accept" ? "accepted" : "rejected";
    }
    s->history.push_back(event);
    persist(*s);
    reply(res, 200, session_view(*s));
  }

  void handle_export(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    const auto format = req.has_param("format") ? req.get_param_value("format") : "jsonl";
    if (format != "jsonl") throw HttpError(400, "only format=jsonl is supported");
    Split split = Split::train;
    if (req.has_param("split")) {
      try {
        split = parse_split(req.get_param_value("split"));
      } catch (const ValidationError& e) {
        throw HttpError(400, e.what());
      }
    }
    Session* s = find_session(id);
    if (!s) throw HttpError(404, "unknown session " + id);
    std::lock_guard lock(s->mu);
    QAGDataset out(split);
    for (std::size_t c = 0; c < s->contexts.size(); ++c) {
      std::vector<QAPair> accepted;
      for (const auto& p : s->pairs) {
        if (p.context == c && p.status == "accepted") accepted.push_back(p.current());
      }
      if (!accepted.empty()) out.add(s->contexts[c], std::move(accepted));
    }
    if (out.size() == 0) {
      res.status = 204;
      return;
    }
    std::ostringstream body;
    write_dataset_jsonl(body, out);
    res.status = 200;
    res.set_header("Content-Disposition", "attachment; filename=\"" + id + ".jsonl\"");
    res.set_content(body.str(), "application/x-ndjson");
  }

  json models_view() {
    json out = json::array();
    for (const auto& [name, slot] : slots) {
      out.push_back({{"name", name},
                     {"identity", slot->handle->identity()},
                     {"pending", slot->pending.load()},
                     {"queue_depth", cfg.queue_depth}});
    }
    return {{"models", out},
            {"max_context_chars", cfg.max_context_chars},
            {"async_threshold_chars", cfg.async_threshold_chars}};
  }

  // ---- plumbing -----------------------------------------------------------

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status(), {{"error", e.what()}, {"status", e.status()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}, {"status", 500}});
      }
    };
  }

  void routes() {
    server.set_payload_max_length(8 * cfg.max_context_chars + (1 << 16));
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", cfg.cors_origin);
    });
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });
    server.Post("/generate", guarded([this](const auto& req, auto& res) { handle_generate(req, res); }));
    server.Get(R"(/jobs/([A-Za-z0-9]+))", guarded([this](const auto& req, auto& res) {
                 handle_job(req.matches[1], res);
               }));
    server.Get(R"(/session/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
                 Session* s = find_session(req.matches[1]);
                 if (!s) throw HttpError(404, "unknown session " + std::string(req.matches[1]));
                 std::lock_guard lock(s->mu);
                 reply(res, 200, session_view(*s));
               }));
    server.Post(R"(/session/([A-Za-z0-9_-]+)/decision)", guarded([this](const auto& req, auto& res) {
                  handle_decision(req.matches[1], req, res);
                }));
    server.Get(R"(/session/([A-Za-z0-9_-]+)/export)", guarded([this](const auto& req, auto& res) {
                 handle_export(req.matches[1], req, res);
               }));
    server.Get("/models", guarded([this](const auto&, auto& res) { reply(res, 200, models_view()); }));
    server.Get("/spec", guarded([](const auto&, auto& res) {
                 reply(res, 200, PlaygroundService::openapi());
               }));
  }
};

PlaygroundService::PlaygroundService(ServiceConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {}

PlaygroundService::~PlaygroundService() = default;

int PlaygroundService::bind_to_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool PlaygroundService::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

bool PlaygroundService::listen_after_bind() { return impl_->server.listen_after_bind(); }

void PlaygroundService::stop() { impl_->server.stop(); }

void PlaygroundService::wait_until_ready() const { impl_->server.wait_until_ready(); }

nlohmann::json PlaygroundService::openapi() {
  const json error = {{"description", "error"},
                      {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Error"}}}}}}}};
  const json session_ok = {
      {"description", "session state"},
      {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Session"}}}}}}}};
  const json id_param = {{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}};
  json doc;
  doc["openapi"] = "3.0.3";
  doc["info"] = {{"title", "qag playground service"}, {"version", "0.1.0"}};
  doc["paths"]["/generate"]["post"] = {
      {"summary", "Generate question-answer pairs for one context"},
      {"requestBody",
       {{"required", true},
        {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/GenerateRequest"}}}}}}}}},
      {"responses",
       {{"200", {{"description", "pairs generated"},
                 {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/GenerateResponse"}}}}}}}}},
        {"202", {{"description", "long context; poll /jobs/{token}"}}},
        {"400", error},
        {"409", error},
        {"429", error},
        {"503", error}}}};
  doc["paths"]["/jobs/{token}"]["get"] = {
      {"summary", "Poll an asynchronous generation"},
      {"parameters", {{{"name", "token"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
      {"responses", {{"200", {{"description", "status pending, done (with result) or error"}}}, {"404", error}}}};
  doc["paths"]["/session/{id}"]["get"] = {{"summary", "Full session state"},
                                          {"parameters", {id_param}},
                                          {"responses", {{"200", session_ok}, {"404", error}}}};
  doc["paths"]["/session/{id}/decision"]["post"] = {
      {"summary", "Accept, reject or edit a pair"},
      {"parameters", {id_param}},
      {"requestBody",
       {{"required", true},
        {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Decision"}}}}}}}}},
      {"responses", {{"200", session_ok}, {"400", error}, {"404", error}}}};
  doc["paths"]["/session/{id}/export"]["get"] = {
      {"summary", "Accepted pairs as dataset JSONL"},
      {"parameters",
       {id_param,
        {{"name", "format"}, {"in", "query"}, {"schema", {{"type", "string"}, {"enum", {"jsonl"}}}}},
        {{"name", "split"}, {"in", "query"}, {"schema", {{"type", "string"}, {"enum", {"train", "validation", "test"}}}}}}},
      {"responses",
       {{"200", {{"description", "one context per line"}, {"content", {{"application/x-ndjson", json::object()}}}}},
        {"204", {{"description", "no accepted pairs"}}},
        {"404", error}}}};
  doc["paths"]["/models"]["get"] = {{"summary", "Loaded models and queue state"},
                                    {"responses", {{"200", {{"description", "models"}}}}}};
  doc["paths"]["/spec"]["get"] = {{"summary", "This document"},
                                  {"responses", {{"200", {{"description", "OpenAPI document"}}}}}};

  const json pair = {
      {"type", "object"},
      {"properties",
       {{"id", {{"type", "string"}}},
        {"question", {{"type", "string"}}},
        {"answer", {{"type", "string"}}},
        {"strategy", {{"type", "string"}}},
        {"source_sentence_index", {{"type", "integer"}, {"nullable", true}}},
        {"score", {{"type", "number"}, {"nullable", true}}},
        {"status", {{"type", "string"}, {"enum", {"proposed", "accepted", "rejected"}}}},
        {"edited", {{"type", "boolean"}}},
        {"original", {{"type", "object"}}},
        {"context_id", {{"type", "string"}}},
        {"answer_span", {{"type", "array"}, {"items", {{"type", "integer"}}}, {"nullable", true}}},
        {"sentence_span", {{"type", "array"}, {"items", {{"type", "integer"}}}, {"nullable", true}}}}}};
  doc["components"]["schemas"] = {
      {"Error", {{"type", "object"}, {"properties", {{"error", {{"type", "string"}}}, {"status", {{"type", "integer"}}}}}}},
      {"Pair", pair},
      {"GenerateRequest",
       {{"type", "object"},
        {"required", {"context"}},
        {"properties",
         {{"session_id", {{"type", "string"}}},
          {"context", {{"type", "string"}}},
          {"domain", {{"type", "string"}}},
          {"strategy", {{"type", "string"}, {"enum", {"pipeline", "multitask", "end2end"}}}},
          {"model", {{"type", "string"}}},
          {"models", {{"type", "array"}, {"items", {{"type", "string"}}}, {"minItems", 2}, {"maxItems", 2}}},
          {"decoding",
           {{"type", "object"},
            {"properties",
             {{"num_beams", {{"type", "integer"}}},
              {"answers_per_sentence", {{"type", "integer"}}},
              {"require_answer_in_context", {{"type", "boolean"}}}}}}},
          {"async", {{"type", "boolean"}}}}}}},
      {"GenerateResponse",
       {{"type", "object"},
        {"properties",
         {{"session_id", {{"type", "string"}}},
          {"generation", {{"type", "integer"}}},
          {"pairs", {{"type", "array"}, {"items", {{"$ref", "#/components/schemas/Pair"}}}}},
          {"dropped_segments", {{"type", "integer"}}},
          {"dropped_answers", {{"type", "integer"}}},
          {"backend_calls", {{"type", "integer"}}},
          {"timing_ms", {{"type", "number"}}}}}}},
      {"Decision",
       {{"type", "object"},
        {"required", {"pair_id", "action"}},
        {"properties",
         {{"pair_id", {{"type", "string"}}},
          {"action", {{"type", "string"}, {"enum", {"accept", "reject", "edit"}}}},
          {"question", {{"type", "string"}}},
          {"answer", {{"type", "string"}}}}}}},
      {"Session", {{"type", "object"}}}};
  return doc;
}

}  // namespace qag
