#include "qag/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "qag/dataset_io.hpp"
#include "qag/errors.hpp"
#include "qag/extrinsic.hpp"
#include "qag/finetune.hpp"
#include "qag/service.hpp"
#include "qag/strategies.hpp"
#include "qag/utf8.hpp"

namespace qag {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kToolVersion = "0.1.0";
constexpr std::uint64_t kDefaultSeed = 42;

class UsageError : public Error {
 public:
  using Error::Error;
};

// One JSON object per line, flushed immediately.
class Log {
 public:
  explicit Log(std::ostream& out) : out_(out) {}
  void event(const std::string& name, const json& fields = json::object()) {
    ordered_json line;
    line["event"] = name;
    for (const auto& [k, v] : fields.items()) line[k] = v;
    out_ << line.dump() << '\n';
    out_.flush();
  }

 private:
  std::ostream& out_;
};

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string absolute_path(const std::string& p) {
  return fs::absolute(p).lexically_normal().string();
}

// Model specs with local paths are made absolute so manifests stay valid
// from any working directory.
std::string canonical_model_spec(const std::string& spec) {
  if (spec.rfind("mock:", 0) == 0 && spec.size() > 5) return "mock:" + absolute_path(spec.substr(5));
  if (spec.rfind("hf:", 0) == 0 && fs::exists(spec.substr(3))) {
    return "hf:" + absolute_path(spec.substr(3));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Settings: --config file, then --set overrides.

const std::set<std::string> kFinetuneKeys = {"epochs", "learning_rate", "label_smoothing",
                                             "batch_size", "seed"};
const std::set<std::string> kStrategyKeys = {"answers_per_sentence", "num_beams",
                                             "require_answer_in_context"};
const std::set<std::string> kReaderKeys = {"reader_learning_rates", "reader_epochs"};

const std::set<std::string>& encoding_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> out;
    for (const auto& [k, _] : EncodingConfig{}.to_key_values()) out.insert(k);
    return out;
  }();
  return keys;
}

KeyValues gather_settings(const std::string& config_path, const std::vector<std::string>& sets,
                          std::initializer_list<const std::set<std::string>*> allowed) {
  KeyValues kv;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
    try {
      kv = load_key_values(config_path);
    } catch (const ValidationError& e) {
      throw UsageError(config_path + ": " + e.what());
    }
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got " + s);
    kv[utf8::trim(s.substr(0, eq))] = s.substr(eq + 1);
  }
  for (const auto& [key, _] : kv) {
    bool known = key == "seed";
    for (const auto* set : allowed) known = known || set->count(key);
    if (!known) throw UsageError("unknown setting: " + key);
  }
  return kv;
}

KeyValues pick(const KeyValues& kv, const std::set<std::string>& keys) {
  KeyValues out;
  for (const auto& [k, v] : kv) {
    if (keys.count(k)) out[k] = v;
  }
  return out;
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("setting " + key + ": not an integer: " + value);
  }
}

std::uint64_t resolve_seed(const KeyValues& settings, const CLI::Option* flag, std::uint64_t value) {
  if (flag->count()) return value;
  if (auto it = settings.find("seed"); it != settings.end()) {
    const auto v = parse_integer("seed", it->second);
    if (v <= 0) throw UsageError("seed must be positive");
    return static_cast<std::uint64_t>(v);
  }
  return kDefaultSeed;
}

EncodingConfig encoding_from(const KeyValues& settings) {
  try {
    return EncodingConfig::from_key_values(pick(settings, encoding_keys()));
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
}

StrategyConfig strategy_from(const KeyValues& settings, Strategy strategy) {
  StrategyConfig cfg;
  cfg.strategy = strategy;
  cfg.encoding = encoding_from(settings);
  for (const auto& [k, v] : pick(settings, kStrategyKeys)) {
    if (k == "answers_per_sentence") cfg.answers_per_sentence = static_cast<int>(parse_integer(k, v));
    if (k == "num_beams") cfg.num_beams = static_cast<int>(parse_integer(k, v));
    if (k == "require_answer_in_context") {
      if (v != "true" && v != "false") throw UsageError("setting " + k + ": expected true or false");
      cfg.require_answer_in_context = v == "true";
    }
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto next = value.find(',', pos);
    if (next == std::string::npos) next = value.size();
    const auto item = utf8::trim(value.substr(pos, next - pos));
    if (item.empty()) throw UsageError("setting " + key + ": empty list item");
    out.push_back(parse(item));
    pos = next + 1;
  }
  return out;
}

// Canonical command line: resolved flags plus every setting as --set, so
// the manifest alone reproduces the run.
std::vector<std::string> with_settings(std::vector<std::string> argv, const KeyValues& settings,
                                       std::uint64_t seed) {
  argv.push_back("--seed");
  argv.push_back(std::to_string(seed));
  for (const auto& [k, v] : settings) {
    if (k == "seed") continue;
    argv.push_back("--set");
    argv.push_back(k + "=" + v);
  }
  return argv;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  KeyValues resolved_config;
  json inputs = json::object();
  json outputs = json::object();
  std::uint64_t seed = kDefaultSeed;
  std::string started_at;
  json backends = json::array();
  json extra = json::object();

  void write(const std::string& path) const {
    ordered_json m;
    m["command"] = command;
    m["argv"] = argv;
    m["resolved_config"] = resolved_config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["seed"] = seed;
    m["started_at"] = started_at;
    m["finished_at"] = now_utc();
    m["backends"] = backends;
    const char* cache = std::getenv("QAG_CACHE_DIR");
    m["environment"] = {{"QAG_CACHE_DIR", cache ? json(cache) : json(nullptr)}};
    m["tool_version"] = kToolVersion;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_file(path, m.dump(2) + "\n");
  }
};

json training_defaults(const Backend& backend) {
  if (backend.identity().rfind("hf:", 0) == 0) {
    return {{"optimizer", "torch.optim.AdamW"},
            {"weight_decay", "0.01 (AdamW default)"},
            {"lr_schedule", "constant"},
            {"gradient_clipping", "none"},
            {"model_selection", "lowest validation loss when a validation corpus is given"}};
  }
  return {{"note", "mock backend: training is recorded, weights are not changed"}};
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string model, approach, data, validation, output, config;
  std::vector<std::string> sets;
  std::uint64_t seed = kDefaultSeed;
  int epochs = 0;
  double learning_rate = 0, label_smoothing = 0;
  int batch_size = 0;
  CLI::Option *seed_opt, *epochs_opt, *lr_opt, *ls_opt, *batch_opt;
};

int cmd_train(const TrainArgs& a, Log& log) {
  const auto started = now_utc();
  auto settings = gather_settings(a.config, a.sets, {&kFinetuneKeys, &encoding_keys()});
  const auto approach = parse_approach(a.approach);
  const auto enc = encoding_from(settings);

  // Hyperparameters: published row, else explicit values, else (mock only)
  // the library defaults.
  FinetuneConfig cfg;
  std::string source;
  const bool explicit_all =
      (settings.count("epochs") || a.epochs_opt->count()) &&
      (settings.count("learning_rate") || a.lr_opt->count()) &&
      (settings.count("label_smoothing") || a.ls_opt->count()) &&
      (settings.count("batch_size") || a.batch_opt->count());
  if (auto published = default_finetune_config(a.model, approach)) {
    cfg = *published;
    source = "published";
  } else if (explicit_all) {
    source = "explicit";
  } else if (a.model.rfind("mock:", 0) == 0) {
    source = "placeholder";
  } else {
    throw UsageError("no published hyperparameters for " + a.model + " / " + a.approach +
                     "; set epochs, learning_rate, label_smoothing and batch_size");
  }
  try {
    cfg = FinetuneConfig::from_key_values(pick(settings, kFinetuneKeys), cfg);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  if (a.epochs_opt->count()) cfg.epochs = a.epochs;
  if (a.lr_opt->count()) cfg.learning_rate = a.learning_rate;
  if (a.ls_opt->count()) cfg.label_smoothing = a.label_smoothing;
  if (a.batch_opt->count()) cfg.batch_size = a.batch_size;
  cfg.seed = resolve_seed(settings, a.seed_opt, a.seed);
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  if (!fs::exists(a.data)) throw Error("data file not found: " + a.data);

  const auto quads = load_quadruples(a.data);
  log.event("load", {{"path", a.data}, {"quadruples", quads.size()}});
  const auto build = build_corpus(approach, quads, enc);
  for (const auto& w : build.warnings) log.event("warning", {{"message", w}});
  const auto corpus = shuffle_corpus(build.examples, cfg.seed);

  std::vector<TrainExample> validation;
  if (!a.validation.empty()) {
    validation = build_corpus(approach, load_quadruples(a.validation), enc).examples;
  }

  auto handle = load_backend(a.model);
  const auto run = finetune(handle, corpus, cfg, enc, validation);
  log.event("corpus", {{"approach", a.approach},
                       {"quadruples", quads.size()},
                       {"examples", run.stats.examples},
                       {"ae", run.stats.ae},
                       {"qg", run.stats.qg},
                       {"end2end", run.stats.end2end},
                       {"truncated", build.truncated},
                       {"dropped", build.dropped},
                       {"over_length_inputs", run.stats.over_length_inputs},
                       {"over_length_targets", run.stats.over_length_targets},
                       {"validation_examples", validation.size()}});
  json losses = json::array();
  for (std::size_t e = 0; e < run.report.epoch_losses.size(); ++e) {
    json entry = {{"epoch", e}, {"loss", run.report.epoch_losses[e]}};
    if (e < run.report.validation_losses.size()) {
      entry["validation_loss"] = run.report.validation_losses[e];
    }
    log.event("epoch", entry);
    losses.push_back(entry);
  }

  const fs::path out(a.output);
  fs::create_directories(out);
  {
    std::ofstream f(out / "corpus.jsonl", std::ios::binary);
    for (const auto& ex : corpus) {
      f << json{{"input", ex.input_text}, {"target", ex.target_text}, {"task", to_string(ex.task)}}
               .dump()
        << '\n';
    }
    if (!f) throw Error("cannot write " + (out / "corpus.jsonl").string());
  }
  handle->save((out / "model").string());
  write_file((out / "training_log.json").string(),
             json{{"epochs", losses},
                  {"best_epoch", run.report.best_epoch ? json(*run.report.best_epoch) : json(nullptr)}}
                     .dump(2) +
                 "\n");

  KeyValues resolved = cfg.to_key_values();
  for (const auto& [k, v] : enc.to_key_values()) resolved[k] = v;
  resolved["approach"] = a.approach;
  resolved["model"] = canonical_model_spec(a.model);
  resolved["hyperparameter_source"] = source;

  std::vector<std::string> argv = {"train", "--model", canonical_model_spec(a.model),
                                   "--approach", a.approach, "--data", absolute_path(a.data),
                                   "--output", absolute_path(a.output)};
  if (!a.validation.empty()) {
    argv.insert(argv.end(), {"--validation", absolute_path(a.validation)});
  }
  // Explicit hyperparameters always travel with the manifest.
  KeyValues pinned = settings;
  for (const auto& [k, v] : cfg.to_key_values()) {
    if (k != "seed" && source != "published") pinned[k] = v;
  }
  if (a.epochs_opt->count()) pinned["epochs"] = std::to_string(cfg.epochs);
  if (a.lr_opt->count()) pinned["learning_rate"] = cfg.to_key_values().at("learning_rate");
  if (a.ls_opt->count()) pinned["label_smoothing"] = cfg.to_key_values().at("label_smoothing");
  if (a.batch_opt->count()) pinned["batch_size"] = std::to_string(cfg.batch_size);

  Manifest m;
  m.command = "train";
  m.argv = with_settings(argv, pinned, cfg.seed);
  m.resolved_config = resolved;
  m.inputs = {{"data", absolute_path(a.data)}};
  if (!a.validation.empty()) m.inputs["validation"] = absolute_path(a.validation);
  m.outputs = {{"corpus", absolute_path((out / "corpus.jsonl").string())},
               {"model", absolute_path((out / "model").string())},
               {"training_log", absolute_path((out / "training_log.json").string())}};
  m.seed = cfg.seed;
  m.started_at = started;
  m.backends = {handle->identity()};
  m.extra = {{"corpus_sizes", {{"quadruples", quads.size()},
                               {"examples", corpus.size()},
                               {"validation_examples", validation.size()},
                               {"truncated", build.truncated},
                               {"dropped", build.dropped}}},
             {"training_backend_defaults", training_defaults(*handle)}};
  m.write((out / "manifest.json").string());
  log.event("done", {{"output", absolute_path(a.output)}});
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string strategy, input, output, config, split = "train";
  std::vector<std::string> models, sets;
  std::uint64_t seed = kDefaultSeed;
  CLI::Option* seed_opt;
};

QagGenerator make_generator(Strategy strategy, const std::vector<ModelHandle>& handles,
                            const StrategyConfig& cfg) {
  switch (strategy) {
    case Strategy::pipeline: return QagGenerator::pipeline(handles.at(0), handles.at(1), cfg);
    case Strategy::multitask: return QagGenerator::multitask(handles.at(0), cfg);
    default: return QagGenerator::end2end(handles.at(0), cfg);
  }
}

int cmd_generate(const GenerateArgs& a, Log& log) {
  const auto started = now_utc();
  const auto settings = gather_settings(a.config, a.sets, {&encoding_keys(), &kStrategyKeys});
  const auto strategy = parse_strategy(a.strategy);
  const std::size_t needed = strategy == Strategy::pipeline ? 2 : 1;
  if (a.models.size() != needed) {
    throw UsageError(strategy == Strategy::pipeline
                         ? "--strategy pipeline needs two --model values (answer extraction, "
                           "then question generation)"
                         : "--strategy " + a.strategy + " needs exactly one --model");
  }
  const auto cfg = strategy_from(settings, strategy);
  const auto seed = resolve_seed(settings, a.seed_opt, a.seed);
  const auto split = parse_split(a.split);
  if (!fs::exists(a.input)) throw Error("input file not found: " + a.input);

  const auto input = load_dataset(a.input, split);
  std::vector<ModelHandle> handles;
  for (const auto& spec : a.models) handles.push_back(load_backend(spec));
  const auto generator = make_generator(strategy, handles, cfg);

  QAGDataset out(split);
  std::map<std::string, std::size_t> per_domain;
  std::size_t calls = 0, dropped_segments = 0, dropped_answers = 0;
  for (const auto& entry : input.entries()) {
    auto outcome = generator.run(entry.context);
    log.event("context", {{"id", entry.context.id()},
                          {"sentences", entry.context.sentence_count()},
                          {"backend_calls", outcome.backend_calls},
                          {"pairs", outcome.pairs.size()},
                          {"dropped_segments", outcome.dropped_segments},
                          {"dropped_answers", outcome.dropped_answers}});
    calls += outcome.backend_calls;
    dropped_segments += outcome.dropped_segments;
    dropped_answers += outcome.dropped_answers;
    per_domain[domain_of(entry.context)] += outcome.pairs.size();
    out.add(entry.context, std::move(outcome.pairs));
  }
  if (auto parent = fs::path(a.output).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_dataset(a.output, out);
  log.event("summary", {{"strategy", a.strategy},
                        {"contexts", out.size()},
                        {"pairs", out.pair_count()},
                        {"backend_calls", calls},
                        {"dropped_segments", dropped_segments},
                        {"dropped_answers", dropped_answers},
                        {"pairs_per_domain", per_domain}});

  std::vector<std::string> argv = {"generate", "--strategy", a.strategy};
  for (const auto& spec : a.models) argv.insert(argv.end(), {"--model", canonical_model_spec(spec)});
  argv.insert(argv.end(), {"--input", absolute_path(a.input), "--output", absolute_path(a.output),
                           "--split", a.split});
  KeyValues resolved = cfg.encoding.to_key_values();
  resolved["strategy"] = a.strategy;
  resolved["answers_per_sentence"] = std::to_string(cfg.answers_per_sentence);
  resolved["num_beams"] = std::to_string(cfg.num_beams);
  resolved["require_answer_in_context"] = cfg.require_answer_in_context ? "true" : "false";

  Manifest m;
  m.command = "generate";
  m.argv = with_settings(argv, settings, seed);
  m.resolved_config = resolved;
  m.inputs = {{"contexts", absolute_path(a.input)}};
  m.outputs = {{"dataset", absolute_path(a.output)}};
  m.seed = seed;
  m.started_at = started;
  for (const auto& h : handles) m.backends.push_back(h->identity());
  m.extra = {{"sizes", {{"contexts", out.size()}, {"pairs", out.pair_count()}}},
             {"backend_calls", calls}};
  m.write(a.output + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string data, test, output, reader = "lexical", label = "QAG", config, target_from;
  std::vector<std::string> sets;
  bool no_grid = false, downsample = false;
  int trials = 10;
  long long target_train = -1, target_validation = -1;
  std::uint64_t seed = kDefaultSeed;
  CLI::Option* seed_opt;
};

// Domain -> path for files named "<domain><suffix>" in `dir`.
std::map<std::string, std::string> scan_domains(const std::string& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::map<std::string, std::string> out;
  for (const auto& f : fs::directory_iterator(dir)) {
    const auto name = f.path().filename().string();
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out[name.substr(0, name.size() - suffix.size())] = f.path().string();
    }
  }
  return out;
}

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += line.find_first_not_of(" \t\r") != std::string::npos;
  return n;
}

int cmd_evaluate(const EvaluateArgs& a, Log& log) {
  const auto started = now_utc();
  const auto settings = gather_settings(a.config, a.sets, {&kFinetuneKeys, &kReaderKeys});
  const auto trainer = make_reader_trainer(a.reader);
  const auto seed = resolve_seed(settings, a.seed_opt, a.seed);
  FinetuneConfig base;
  try {
    base = FinetuneConfig::from_key_values(pick(settings, kFinetuneKeys), base);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  base.seed = seed;
  ReaderGrid grid;
  if (auto it = settings.find("reader_learning_rates"); it != settings.end()) {
    grid.learning_rates = parse_list<double>(it->first, it->second, [&](const std::string& s) {
      try {
        return std::stod(s);
      } catch (const std::exception&) {
        throw UsageError("setting reader_learning_rates: not a number: " + s);
      }
    });
  }
  if (auto it = settings.find("reader_epochs"); it != settings.end()) {
    grid.epochs = parse_list<int>(it->first, it->second, [&](const std::string& s) {
      return static_cast<int>(parse_integer(it->first, s));
    });
  }
  if (a.no_grid) grid = {{}, {}};
  if (a.downsample) {
    if (a.trials < 2) throw UsageError("--trials must be at least 2");
    const bool fixed = a.target_train >= 0 && a.target_validation >= 0;
    if (fixed == !a.target_from.empty()) {
      throw UsageError("--downsample needs either --target-train and --target-validation, or "
                       "--target-from");
    }
  }

  const auto train_files = scan_domains(a.data, ".train.jsonl");
  const auto val_files = scan_domains(a.data, ".validation.jsonl");
  const auto test_files = scan_domains(a.test, ".test.jsonl");
  if (train_files.empty()) throw Error("no <domain>.train.jsonl files in " + a.data);
  std::set<std::string> all;
  for (const auto* m : {&train_files, &val_files, &test_files}) {
    for (const auto& [d, _] : *m) all.insert(d);
  }
  std::vector<std::string> problems;
  for (const auto& d : all) {
    std::vector<std::string> missing;
    if (!train_files.count(d)) missing.push_back("train");
    if (!val_files.count(d)) missing.push_back("validation");
    if (!test_files.count(d)) missing.push_back("test");
    if (missing.empty()) continue;
    std::string p = d + " (missing";
    for (const auto& s : missing) p += " " + s;
    problems.push_back(p + ")");
  }
  if (!problems.empty()) {
    std::string msg = "domain mismatch between --data and --test:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw Error(msg);
  }

  const fs::path out(a.output);
  fs::create_directories(out / "reader_data");
  std::map<std::string, DomainData> domains;
  json inputs = json::object();
  for (const auto& d : all) {
    DomainData data;
    data.train = load_dataset(train_files.at(d), Split::train);
    data.validation = load_dataset(val_files.at(d), Split::validation);
    data.test = load_reader_examples(test_files.at(d));
    std::size_t dropped_train = 0, dropped_val = 0;
    const auto train_ex = reader_examples_from(data.train, &dropped_train);
    const auto val_ex = reader_examples_from(data.validation, &dropped_val);
    const auto train_path = out / "reader_data" / (d + ".train.jsonl");
    const auto val_path = out / "reader_data" / (d + ".validation.jsonl");
    {
      std::ofstream f(train_path, std::ios::binary);
      write_reader_jsonl(f, train_ex);
    }
    {
      std::ofstream f(val_path, std::ios::binary);
      write_reader_jsonl(f, val_ex);
    }
    log.event("domain", {{"domain", d},
                         {"train_pairs", train_ex.size()},
                         {"validation_pairs", val_ex.size()},
                         {"train_lines", count_lines(train_path.string())},
                         {"validation_lines", count_lines(val_path.string())},
                         {"dropped_unaligned", dropped_train + dropped_val},
                         {"test_examples", data.test.size()}});
    inputs[d] = {{"train", absolute_path(train_files.at(d))},
                 {"validation", absolute_path(val_files.at(d))},
                 {"test", absolute_path(test_files.at(d))}};
    domains.emplace(d, std::move(data));
  }

  const auto report = run_extrinsic_eval(domains, *trainer, base, grid, a.label);
  for (const auto& [d, s] : report.per_domain) {
    log.event("score", {{"domain", d}, {"f1", 100 * s.f1}, {"exact_match", 100 * s.exact_match},
                        {"cell", format_score_cell(s)}});
  }
  log.event("score", {{"domain", "average"}, {"f1", 100 * report.average.f1},
                      {"exact_match", 100 * report.average.exact_match},
                      {"cell", format_score_cell(report.average)}});

  json report_json = report_to_json(report);
  json outputs = {{"report_json", absolute_path((out / "report.json").string())},
                  {"report_md", absolute_path((out / "report.md").string())},
                  {"reader_data", absolute_path((out / "reader_data").string())}};
  if (a.downsample) {
    std::vector<std::uint64_t> seeds;
    for (int t = 0; t < a.trials; ++t) seeds.push_back(seed + static_cast<std::uint64_t>(t));
    std::map<std::string, DownsampleResult> results;
    std::map<std::string, std::pair<std::size_t, std::size_t>> targets;
    if (!a.target_from.empty()) {
      const auto gold_train = scan_domains(a.target_from, ".train.jsonl");
      const auto gold_val = scan_domains(a.target_from, ".validation.jsonl");
      for (const auto& d : all) {
        if (!gold_train.count(d) || !gold_val.count(d)) {
          throw Error("--target-from has no gold train/validation files for domain " + d);
        }
        targets[d] = {load_dataset(gold_train.at(d), Split::train).pair_count(),
                      load_dataset(gold_val.at(d), Split::validation).pair_count()};
      }
    } else {
      for (const auto& d : all) {
        targets[d] = {static_cast<std::size_t>(a.target_train),
                      static_cast<std::size_t>(a.target_validation)};
      }
    }
    json ds = json::object();
    for (const auto& [d, data] : domains) {
      const auto r = downsample_eval(data.train, data.validation, targets.at(d), a.trials, seeds,
                                     *trainer, base, data.test, grid);
      log.event("downsample", {{"domain", d},
                               {"trials", r.trials},
                               {"target_train", targets.at(d).first},
                               {"target_validation", targets.at(d).second},
                               {"undersized", r.undersized},
                               {"mean_f1", 100 * r.mean_f1},
                               {"ci95_f1", {100 * r.ci95_f1.lo, 100 * r.ci95_f1.hi}},
                               {"mean_em", 100 * r.mean_em},
                               {"ci95_em", {100 * r.ci95_em.lo, 100 * r.ci95_em.hi}}});
      ds[d] = downsample_to_json(r);
      results.emplace(d, r);
    }
    report_json["downsample"] = ds;
    report_json["downsample_seeds"] = seeds;
    write_file((out / "downsample.csv").string(), downsample_to_csv(results));
    outputs["downsample_csv"] = absolute_path((out / "downsample.csv").string());
  }
  write_file((out / "report.json").string(), report_json.dump(2) + "\n");
  write_file((out / "report.md").string(), report_to_markdown({report}));

  std::vector<std::string> argv = {"evaluate", "--data", absolute_path(a.data), "--test",
                                   absolute_path(a.test), "--output", absolute_path(a.output),
                                   "--reader", a.reader, "--label", a.label};
  if (a.no_grid) argv.push_back("--no-grid");
  if (a.downsample) {
    argv.insert(argv.end(), {"--downsample", "--trials", std::to_string(a.trials)});
    if (!a.target_from.empty()) {
      argv.insert(argv.end(), {"--target-from", absolute_path(a.target_from)});
    } else {
      argv.insert(argv.end(), {"--target-train", std::to_string(a.target_train),
                               "--target-validation", std::to_string(a.target_validation)});
    }
  }
  KeyValues resolved = base.to_key_values();
  auto join = [](const auto& v) {
    std::string s;
    for (const auto& x : v) {
      std::ostringstream item;
      item << x;
      s += (s.empty() ? "" : ",") + item.str();
    }
    return s;
  };
  resolved["reader"] = trainer->identity();
  resolved["reader_learning_rates"] = join(grid.learning_rates);
  resolved["reader_epochs"] = join(grid.epochs);

  Manifest m;
  m.command = "evaluate";
  m.argv = with_settings(argv, settings, seed);
  m.resolved_config = resolved;
  m.inputs = inputs;
  m.outputs = outputs;
  m.seed = seed;
  m.started_at = started;
  m.backends = {"reader:" + trainer->identity()};
  json sizes = json::object();
  for (const auto& [d, s] : report.dataset_sizes) {
    sizes[d] = {{"train", s.train}, {"validation", s.validation}};
  }
  m.extra = {{"dataset_sizes", sizes}};
  m.write((out / "manifest.json").string());
  return 0;
}

// ---------------------------------------------------------------------------
// profile

struct ProfileArgs {
  std::string input, output, ae, qg, multitask, end2end, config;
  std::vector<std::string> sets;
  std::uint64_t seed = kDefaultSeed;
  CLI::Option* seed_opt;
};

int cmd_profile(const ProfileArgs& a, Log& log) {
  const auto started = now_utc();
  const auto settings = gather_settings(a.config, a.sets, {&encoding_keys(), &kStrategyKeys});
  const auto seed = resolve_seed(settings, a.seed_opt, a.seed);
  if (a.ae.empty() != a.qg.empty()) {
    throw UsageError("the pipeline profile needs both --ae-model and --qg-model");
  }
  if (a.ae.empty() && a.multitask.empty() && a.end2end.empty()) {
    throw UsageError("give at least one of --ae-model/--qg-model, --multitask-model, --end2end-model");
  }
  if (!fs::exists(a.input)) throw Error("input file not found: " + a.input);
  const auto input = load_dataset(a.input, Split::test);
  std::vector<Context> contexts;
  for (const auto& e : input.entries()) contexts.push_back(e.context);
  const auto gold = input.pair_count();

  std::vector<std::pair<Strategy, QagGenerator>> generators;
  std::vector<std::string> identities;
  if (!a.ae.empty()) {
    auto ae = load_backend(a.ae), qg = load_backend(a.qg);
    identities.insert(identities.end(), {ae->identity(), qg->identity()});
    generators.emplace_back(Strategy::pipeline,
                            QagGenerator::pipeline(ae, qg, strategy_from(settings, Strategy::pipeline)));
  }
  if (!a.multitask.empty()) {
    auto m = load_backend(a.multitask);
    identities.push_back(m->identity());
    generators.emplace_back(Strategy::multitask,
                            QagGenerator::multitask(m, strategy_from(settings, Strategy::multitask)));
  }
  if (!a.end2end.empty()) {
    auto m = load_backend(a.end2end);
    identities.push_back(m->identity());
    generators.emplace_back(Strategy::end2end,
                            QagGenerator::end2end(m, strategy_from(settings, Strategy::end2end)));
  }

  std::vector<std::pair<Strategy, ResourceProfile>> rows;
  json runs = json::object();
  double average_sentences = 0;
  for (const auto& [strategy, gen] : generators) {
    const auto run = measure_strategy(gen, contexts, gold);
    const auto p = profile_resources(run);
    average_sentences = run.average_sentences;
    rows.emplace_back(strategy, p);
    runs[std::string(to_string(strategy))] = {{"paragraphs", run.paragraphs},
                                              {"backend_calls", run.backend_calls},
                                              {"generated_pairs", run.generated_pairs},
                                              {"gold_pairs", run.gold_pairs},
                                              {"backend_calls_per_paragraph", p.backend_calls_per_paragraph},
                                              {"model_count", p.model_count},
                                              {"pairs_per_gold_pair", p.pairs_per_gold_pair}};
  }
  // Ratios are relative to end2end when it was profiled.
  const ResourceProfile reference = rows.back().first == Strategy::end2end ? rows.back().second
                                                                           : rows.front().second;
  const auto reference_name = rows.back().first == Strategy::end2end
                                  ? std::string("end2end")
                                  : std::string(to_string(rows.front().first));
  auto ratio = [](double v, double ref) { return ref > 0 ? format_multiple(v / ref) : "n/a"; };
  for (const auto& [strategy, p] : rows) {
    auto entry = runs[std::string(to_string(strategy))];
    entry["strategy"] = to_string(strategy);
    entry["cost"] = ratio(p.backend_calls_per_paragraph, reference.backend_calls_per_paragraph);
    entry["memory"] = ratio(p.model_count, reference.model_count);
    entry["yield"] = ratio(p.pairs_per_gold_pair, reference.pairs_per_gold_pair);
    entry["relative_to"] = reference_name;
    log.event("profile", entry);
  }
  log.event("cost_model", {{"paragraphs", contexts.size()},
                           {"average_sentences", average_sentences},
                           {"predicted_pipeline_to_end2end_calls", 2 * average_sentences}});
  const auto table = format_profile_table(rows, reference);
  log.event("table", {{"markdown", table}});

  if (!a.output.empty()) {
    const fs::path out(a.output);
    fs::create_directories(out);
    write_file((out / "profile.json").string(),
               json{{"strategies", runs},
                    {"average_sentences", average_sentences},
                    {"relative_to", reference_name}}
                       .dump(2) +
                   "\n");
    write_file((out / "profile.md").string(), table);
    std::vector<std::string> argv = {"profile", "--input", absolute_path(a.input), "--output",
                                     absolute_path(a.output)};
    if (!a.ae.empty()) {
      argv.insert(argv.end(), {"--ae-model", canonical_model_spec(a.ae), "--qg-model",
                               canonical_model_spec(a.qg)});
    }
    if (!a.multitask.empty()) {
      argv.insert(argv.end(), {"--multitask-model", canonical_model_spec(a.multitask)});
    }
    if (!a.end2end.empty()) {
      argv.insert(argv.end(), {"--end2end-model", canonical_model_spec(a.end2end)});
    }
    Manifest m;
    m.command = "profile";
    m.argv = with_settings(argv, settings, seed);
    m.resolved_config = strategy_from(settings, Strategy::end2end).encoding.to_key_values();
    m.inputs = {{"contexts", absolute_path(a.input)}};
    m.outputs = {{"profile_json", absolute_path((out / "profile.json").string())},
                 {"profile_md", absolute_path((out / "profile.md").string())}};
    m.seed = seed;
    m.started_at = started;
    m.backends = identities;
    m.write((out / "manifest.json").string());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// score, serve, rerun

int cmd_score(const std::string& predictions, const std::string& gold, Log& log) {
  const auto preds = load_predictions(predictions);
  const auto examples = load_reader_examples(gold);
  const auto s = corpus_scores(preds, gold_answers(examples));
  log.event("score", {{"examples", examples.size()}, {"f1", 100 * s.f1},
                      {"exact_match", 100 * s.exact_match}, {"cell", format_score_cell(s)}});
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> models;
  std::size_t max_context_chars = 20000, async_threshold = 4000, queue_depth = 8;
  std::string sessions_dir, cors_origin = "*";
};

int cmd_serve(const ServeArgs& a, Log& log) {
  ServiceConfig cfg;
  for (const auto& m : a.models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--model expects NAME=SPEC, got " + m);
    cfg.models[m.substr(0, eq)] = load_backend(m.substr(eq + 1));
  }
  cfg.max_context_chars = a.max_context_chars;
  cfg.async_threshold_chars = a.async_threshold;
  cfg.queue_depth = a.queue_depth;
  if (!a.sessions_dir.empty()) cfg.sessions_dir = a.sessions_dir;
  cfg.cors_origin = a.cors_origin;
  PlaygroundService service(std::move(cfg));
  if (!service.bind(a.host, a.port)) {
    throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
  }
  log.event("listening", {{"host", a.host}, {"port", a.port}, {"models", a.models}});
  return service.listen_after_bind() ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Question-answer generation toolkit", "qag"};
  app.require_subcommand(1, 1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fine-tune a model on SQuAD-style quadruples");
  train->add_option("--model", ta.model, "Backend spec (t5-small, hf:<path>, mock:<fixture>)")->required();
  train->add_option("--approach", ta.approach, "Training objective")
      ->required()
      ->check(CLI::IsMember({"pipeline-ae", "pipeline-qg", "multitask", "end2end"}));
  train->add_option("--data", ta.data, "Quadruple JSONL")->required();
  train->add_option("--validation", ta.validation, "Validation quadruple JSONL");
  train->add_option("--output", ta.output, "Output directory")->required();
  ta.seed_opt = train->add_option("--seed", ta.seed, "Random seed");
  train->add_option("--config", ta.config, "Flat key = value config file");
  train->add_option("--set", ta.sets, "Override one setting, KEY=VALUE");
  ta.epochs_opt = train->add_option("--epochs", ta.epochs);
  ta.lr_opt = train->add_option("--learning-rate", ta.learning_rate);
  ta.ls_opt = train->add_option("--label-smoothing", ta.label_smoothing);
  ta.batch_opt = train->add_option("--batch-size", ta.batch_size);

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Generate question-answer pairs for contexts");
  generate->add_option("--strategy", ga.strategy)
      ->required()
      ->check(CLI::IsMember({"pipeline", "multitask", "end2end"}));
  generate->add_option("--model", ga.models, "Backend spec; pipeline takes two (AE, then QG)")
      ->required();
  generate->add_option("--input", ga.input, "Context JSONL (dataset format)")->required();
  generate->add_option("--output", ga.output, "Output dataset JSONL")->required();
  generate->add_option("--split", ga.split)->check(CLI::IsMember({"train", "validation", "test"}));
  ga.seed_opt = generate->add_option("--seed", ga.seed);
  generate->add_option("--config", ga.config);
  generate->add_option("--set", ga.sets);

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Train readers on generated data and score them");
  evaluate->add_option("--data", ea.data, "Directory with <domain>.train/.validation.jsonl")->required();
  evaluate->add_option("--test", ea.test, "Directory with <domain>.test.jsonl")->required();
  evaluate->add_option("--output", ea.output, "Output directory")->required();
  evaluate->add_option("--reader", ea.reader)->check(CLI::IsMember({"lexical", "mock"}));
  evaluate->add_option("--label", ea.label, "Row label of the report");
  evaluate->add_flag("--no-grid", ea.no_grid, "Train one reader with the base config");
  evaluate->add_flag("--downsample", ea.downsample, "Also run the downsampling analysis");
  evaluate->add_option("--trials", ea.trials);
  evaluate->add_option("--target-train", ea.target_train);
  evaluate->add_option("--target-validation", ea.target_validation);
  evaluate->add_option("--target-from", ea.target_from, "Gold data directory giving target sizes");
  ea.seed_opt = evaluate->add_option("--seed", ea.seed);
  evaluate->add_option("--config", ea.config);
  evaluate->add_option("--set", ea.sets);

  ProfileArgs pa;
  auto* profile = app.add_subcommand("profile", "Measure cost, memory and yield per strategy");
  profile->add_option("--input", pa.input, "Context JSONL; gold pairs give the yield baseline")->required();
  profile->add_option("--output", pa.output, "Output directory");
  profile->add_option("--ae-model", pa.ae);
  profile->add_option("--qg-model", pa.qg);
  profile->add_option("--multitask-model", pa.multitask);
  profile->add_option("--end2end-model", pa.end2end);
  pa.seed_opt = profile->add_option("--seed", pa.seed);
  profile->add_option("--config", pa.config);
  profile->add_option("--set", pa.sets);

  std::string score_pred, score_gold;
  auto* score = app.add_subcommand("score", "Score a predictions file against reader JSONL");
  score->add_option("--predictions", score_pred)->required();
  score->add_option("--gold", score_gold)->required();

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the playground HTTP service");
  serve->add_option("--host", sa.host);
  serve->add_option("--port", sa.port);
  serve->add_option("--model", sa.models, "NAME=SPEC, repeatable");
  serve->add_option("--max-context-chars", sa.max_context_chars);
  serve->add_option("--async-threshold", sa.async_threshold);
  serve->add_option("--queue-depth", sa.queue_depth);
  serve->add_option("--sessions-dir", sa.sessions_dir);
  serve->add_option("--cors-origin", sa.cors_origin);

  std::string manifest_path;
  auto* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun->add_option("manifest", manifest_path)->required();

  std::vector<std::string> storage = {"qag"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  Log log(out);
  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == train) return cmd_train(ta, log);
    if (active == generate) return cmd_generate(ga, log);
    if (active == evaluate) return cmd_evaluate(ea, log);
    if (active == profile) return cmd_profile(pa, log);
    if (active == score) return cmd_score(score_pred, score_gold, log);
    if (active == serve) return cmd_serve(sa, log);
    if (active == rerun) {
      const auto m = json::parse(read_file(manifest_path));
      if (!m.contains("argv") || !m["argv"].is_array()) {
        throw Error(manifest_path + " has no argv");
      }
      return run_cli(m["argv"].get<std::vector<std::string>>(), out, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << active->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    log.event("error", {{"message", e.what()}});
    return 1;
  }
  return 2;
}

}  // namespace qag
