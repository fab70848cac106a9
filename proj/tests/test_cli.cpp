#include <fstream>
#include <sstream>

#include "demo_workspace.hpp"
#include "doctest.h"
#include "qag/cli.hpp"
#include "temp_dir.hpp"

using nlohmann::json;
using test_support::TempDir;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;

  std::vector<json> events(const std::string& name) const {
    std::vector<json> found;
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      auto j = json::parse(line);
      if (j.at("event") == name) found.push_back(j);
    }
    return found;
  }
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = qag::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t lines_in(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

json read_json(const std::string& path) { return json::parse(qag::read_file(path)); }

struct Workspace {
  TempDir dir;
  test_support::DemoWorkspace demo = test_support::write_demo_workspace(dir.path());
  std::string at(const std::string& rel) const { return dir / rel; }
  std::string model(const std::string& name) const { return "mock:" + at("models/" + name + ".json"); }
};

}  // namespace

TEST_CASE("cli: help and usage errors exit with 0 and 2") {
  auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("generate") != std::string::npos);

  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  auto missing = cli({"generate", "--strategy", "end2end"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("Usage") != std::string::npos);
  CHECK(cli({"train", "--model", "mock:x", "--approach", "sideways", "--data", "d", "--output", "o"})
            .code == 2);
}

TEST_CASE("cli: generate logs per-context calls and writes a manifest") {
  Workspace ws;
  auto r = cli({"generate", "--strategy", "pipeline", "--model", ws.model("ae"), "--model",
                ws.model("qg"), "--input", ws.at("contexts.jsonl"), "--output",
                ws.at("gen/books.train.jsonl")});
  REQUIRE(r.code == 0);
  const auto contexts = r.events("context");
  REQUIRE(contexts.size() == ws.demo.corpus.contexts.size());
  for (const auto& e : contexts) {
    CHECK(e["backend_calls"].get<std::size_t>() == 2 * e["sentences"].get<std::size_t>());
  }
  const auto out = qag::load_dataset(ws.at("gen/books.train.jsonl"), qag::Split::train);
  CHECK(out.pair_count() == ws.demo.corpus.total_sentences);

  const auto m = read_json(ws.at("gen/books.train.jsonl.manifest.json"));
  CHECK(m["command"] == "generate");
  CHECK(m["seed"] == 42);
  CHECK(m["backends"].size() == 2);
  CHECK(m["inputs"]["contexts"] == ws.at("contexts.jsonl"));
  for (const auto& key : {"argv", "resolved_config", "outputs", "started_at", "finished_at",
                          "environment", "tool_version"}) {
    CHECK(m.contains(key));
  }
}

TEST_CASE("cli: strategy/model count mismatch is a usage error") {
  Workspace ws;
  auto one = cli({"generate", "--strategy", "pipeline", "--model", ws.model("ae"), "--input",
                  ws.at("contexts.jsonl"), "--output", ws.at("x.jsonl")});
  CHECK(one.code == 2);
  CHECK(one.err.find("two --model") != std::string::npos);
  auto two = cli({"generate", "--strategy", "end2end", "--model", ws.model("ae"), "--model",
                  ws.model("qg"), "--input", ws.at("contexts.jsonl"), "--output", ws.at("x.jsonl")});
  CHECK(two.code == 2);
}

TEST_CASE("cli: settings come from --config and --set; unknown keys are rejected") {
  Workspace ws;
  qag::write_file(ws.at("gen.cfg"), "# decoding\nanswers_per_sentence = 1\nnum_beams = 2\n");
  auto ok = cli({"generate", "--strategy", "end2end", "--model", ws.model("end2end"), "--input",
                 ws.at("contexts.jsonl"), "--output", ws.at("e.jsonl"), "--config",
                 ws.at("gen.cfg"), "--set", "require_answer_in_context=false"});
  REQUIRE(ok.code == 0);
  const auto m = read_json(ws.at("e.jsonl.manifest.json"));
  CHECK(m["resolved_config"]["num_beams"] == "2");
  CHECK(m["resolved_config"]["require_answer_in_context"] == "false");

  auto bad = cli({"generate", "--strategy", "end2end", "--model", ws.model("end2end"), "--input",
                  ws.at("contexts.jsonl"), "--output", ws.at("e.jsonl"), "--set", "beams=2"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("unknown setting: beams") != std::string::npos);
  auto malformed = cli({"generate", "--strategy", "end2end", "--model", ws.model("end2end"),
                        "--input", ws.at("contexts.jsonl"), "--output", ws.at("e.jsonl"),
                        "--set", "num_beams"});
  CHECK(malformed.code == 2);
}

TEST_CASE("cli: missing input is a runtime error") {
  Workspace ws;
  auto r = cli({"generate", "--strategy", "end2end", "--model", ws.model("end2end"), "--input",
                ws.at("nope.jsonl"), "--output", ws.at("e.jsonl")});
  CHECK(r.code == 1);
  CHECK(r.err.find("nope.jsonl") != std::string::npos);
}

TEST_CASE("cli: rerun from a manifest reproduces the output bytes") {
  Workspace ws;
  REQUIRE(cli({"generate", "--strategy", "multitask", "--model", ws.model("multitask"), "--input",
               ws.at("contexts.jsonl"), "--output", ws.at("a/out.jsonl")})
              .code == 0);
  const auto first = qag::read_file(ws.at("a/out.jsonl"));
  std::filesystem::remove(ws.at("a/out.jsonl"));
  REQUIRE(cli({"rerun", ws.at("a/out.jsonl.manifest.json")}).code == 0);
  CHECK(qag::read_file(ws.at("a/out.jsonl")) == first);
}

TEST_CASE("cli: train writes corpus, model, log and manifest") {
  Workspace ws;
  auto r = cli({"train", "--model", ws.model("multitask"), "--approach", "multitask", "--data",
                ws.at("quadruples.jsonl"), "--output", ws.at("run"), "--seed", "9"});
  REQUIRE(r.code == 0);
  const auto n = ws.demo.gold.pair_count();
  const auto corpus = r.events("corpus");
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0]["examples"] == 2 * n);
  CHECK(lines_in(ws.at("run/corpus.jsonl")) == 2 * n);
  CHECK(std::filesystem::exists(ws.at("run/model/mock_backend.json")));
  CHECK(std::filesystem::exists(ws.at("run/training_log.json")));
  const auto m = read_json(ws.at("run/manifest.json"));
  CHECK(m["seed"] == 9);
  CHECK(m["resolved_config"]["hyperparameter_source"] == "placeholder");
  CHECK(m["corpus_sizes"]["examples"] == 2 * n);
  CHECK(m.contains("training_backend_defaults"));

  // Same seed, same shuffled corpus.
  REQUIRE(cli({"rerun", ws.at("run/manifest.json")}).code == 0);
  const auto again = qag::read_file(ws.at("run/corpus.jsonl"));
  REQUIRE(cli({"train", "--model", ws.model("multitask"), "--approach", "multitask", "--data",
               ws.at("quadruples.jsonl"), "--output", ws.at("run2"), "--seed", "9"})
              .code == 0);
  CHECK(qag::read_file(ws.at("run2/corpus.jsonl")) == again);
}

TEST_CASE("cli: train without published or explicit hyperparameters is refused") {
  Workspace ws;
  auto r = cli({"train", "--model", "my-custom-model", "--approach", "end2end", "--data",
                ws.at("quadruples.jsonl"), "--output", ws.at("run")});
  CHECK(r.code == 2);
  CHECK(r.err.find("no published hyperparameters") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(ws.at("run")));
}

TEST_CASE("cli: train explicit hyperparameters travel in the manifest") {
  Workspace ws;
  auto r = cli({"train", "--model", ws.model("end2end"), "--approach", "end2end", "--data",
                ws.at("quadruples.jsonl"), "--output", ws.at("run"), "--epochs", "3",
                "--learning-rate", "0.0005", "--label-smoothing", "0.1", "--batch-size", "16"});
  REQUIRE(r.code == 0);
  const auto m = read_json(ws.at("run/manifest.json"));
  CHECK(m["resolved_config"]["epochs"] == "3");
  CHECK(m["resolved_config"]["batch_size"] == "16");
  CHECK(m["resolved_config"]["hyperparameter_source"] == "explicit");
  // One end2end example per paragraph.
  CHECK(lines_in(ws.at("run/corpus.jsonl")) == ws.demo.gold.size());
}

TEST_CASE("cli: evaluate scores domains and checks domain sets") {
  Workspace ws;
  for (const char* split : {"train", "validation"}) {
    REQUIRE(cli({"generate", "--strategy", "pipeline", "--model", ws.model("ae"), "--model",
                 ws.model("qg"), "--input", ws.at("contexts.jsonl"), "--output",
                 ws.at(std::string("gen/books.") + split + ".jsonl"), "--split", split})
                .code == 0);
  }
  auto r = cli({"evaluate", "--data", ws.at("gen"), "--test", ws.at("test"), "--output",
                ws.at("eval"), "--reader", "mock", "--label", "Pipeline", "--downsample",
                "--trials", "3", "--target-train", "10", "--target-validation", "5"});
  REQUIRE(r.code == 0);
  const auto md = qag::read_file(ws.at("eval/report.md"));
  CHECK(md.find("| Pipeline | 100.0/100.0 | 100.0/100.0 |") != std::string::npos);
  const auto report = read_json(ws.at("eval/report.json"));
  CHECK(report.contains("downsample"));
  CHECK(report["downsample_seeds"] == json({42, 43, 44}));
  CHECK(std::filesystem::exists(ws.at("eval/downsample.csv")));

  // Reader file line counts match the sizes recorded in the manifest.
  const auto m = read_json(ws.at("eval/manifest.json"));
  CHECK(m["dataset_sizes"]["books"]["train"] == lines_in(ws.at("eval/reader_data/books.train.jsonl")));
  CHECK(m["dataset_sizes"]["books"]["validation"] ==
        lines_in(ws.at("eval/reader_data/books.validation.jsonl")));

  std::filesystem::copy_file(ws.at("test/books.test.jsonl"), ws.at("test/movies.test.jsonl"));
  auto mismatch = cli({"evaluate", "--data", ws.at("gen"), "--test", ws.at("test"), "--output",
                       ws.at("eval2"), "--reader", "mock"});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("movies (missing train validation)") != std::string::npos);

  auto no_targets = cli({"evaluate", "--data", ws.at("gen"), "--test", ws.at("test"), "--output",
                         ws.at("eval3"), "--downsample"});
  CHECK(no_targets.code == 2);
}

TEST_CASE("cli: profile reports ratios and the cost model") {
  Workspace ws;
  auto r = cli({"profile", "--input", ws.at("contexts.jsonl"), "--ae-model", ws.model("ae"),
                "--qg-model", ws.model("qg"), "--end2end-model", ws.model("end2end"), "--output",
                ws.at("prof")});
  REQUIRE(r.code == 0);
  const auto profiles = r.events("profile");
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0]["strategy"] == "pipeline");
  CHECK(profiles[0]["memory"] == "2x");
  CHECK(profiles[1]["cost"] == "1x");
  const double avg = static_cast<double>(ws.demo.corpus.total_sentences) /
                     static_cast<double>(ws.demo.corpus.contexts.size());
  const auto model = r.events("cost_model").at(0);
  CHECK(model["predicted_pipeline_to_end2end_calls"].get<double>() == doctest::Approx(2 * avg));
  CHECK(profiles[0]["backend_calls_per_paragraph"].get<double>() == doctest::Approx(2 * avg));
  CHECK(qag::read_file(ws.at("prof/profile.md")).find("| end2end | 1x | 1x | 1x |") !=
        std::string::npos);

  CHECK(cli({"profile", "--input", ws.at("contexts.jsonl"), "--ae-model", ws.model("ae")}).code == 2);
}

TEST_CASE("cli: score compares predictions with reader gold") {
  Workspace ws;
  const auto gold = qag::load_reader_examples(ws.at("test/books.test.jsonl"));
  json preds = json::object();
  for (const auto& e : gold) preds[e.id] = e.answers.at(0);
  preds[gold.front().id] = "nothing";
  qag::write_file(ws.at("preds.json"), preds.dump());
  auto r = cli({"score", "--predictions", ws.at("preds.json"), "--gold",
                ws.at("test/books.test.jsonl")});
  REQUIRE(r.code == 0);
  const double expected = 100.0 * static_cast<double>(gold.size() - 1) / static_cast<double>(gold.size());
  CHECK(r.events("score").at(0)["exact_match"].get<double>() == doctest::Approx(expected));
}
