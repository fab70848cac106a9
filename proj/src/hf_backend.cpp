#include "qag/hf_backend.hpp"

#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <sys/wait.h>
#include <unistd.h>

#include "qag/errors.hpp"

#ifndef QAG_DEFAULT_BRIDGE
#define QAG_DEFAULT_BRIDGE "tools/hf_bridge.py"
#endif

namespace qag {

using nlohmann::json;

BridgeProcess::BridgeProcess(const std::vector<std::string>& argv) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    throw Error(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

BridgeProcess::~BridgeProcess() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, &status, 0);
    }
  }
}

json BridgeProcess::call(const json& request) {
  const std::string line = request.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("bridge process is not accepting input");
    }
    written += static_cast<std::size_t>(n);
  }
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      const std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      json j;
      try {
        j = json::parse(reply);
      } catch (const json::exception&) {
        continue;  // stray library output on stdout
      }
      if (!j.value("ok", false)) {
        const auto msg = j.value("error", std::string("unknown bridge error"));
        if (j.contains("index")) throw BackendError(j["index"].get<std::size_t>(), msg);
        throw Error(msg);
      }
      return j;
    }
    char chunk[65536];
    const auto n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error("bridge process exited");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string bridge_script_path() {
  if (const char* env = std::getenv("QAG_HF_BRIDGE")) return env;
  return QAG_DEFAULT_BRIDGE;
}

HfBackend::HfBackend(std::string model, int max_input_tokens)
    : model_(std::move(model)), max_input_tokens_(max_input_tokens) {
  const char* python = std::getenv("QAG_PYTHON");
  std::vector<std::string> argv = {python ? python : "python3", bridge_script_path(), "seq2seq"};
  process_ = std::make_unique<BridgeProcess>(argv);
  json load = {{"op", "load"}, {"model", model_}, {"max_input_tokens", max_input_tokens_}};
  if (const char* cache = std::getenv("QAG_CACHE_DIR")) load["cache_dir"] = cache;
  try {
    process_->call(load);
  } catch (const std::exception& e) {
    throw Error("cannot load model " + model_ + ": " + e.what());
  }
}

std::vector<GenerationResult> HfBackend::do_generate(std::span<const GenerationRequest> requests) {
  json msg = {{"op", "generate"}, {"requests", json::array()}};
  for (const auto& r : requests) {
    msg["requests"].push_back({{"input_text", r.input_text},
                               {"max_output_tokens", r.max_output_tokens},
                               {"num_beams", r.num_beams},
                               {"num_return_sequences", r.num_return_sequences}});
  }
  const json reply = process_->call(msg);
  std::vector<GenerationResult> results;
  for (const auto& r : reply.at("results")) {
    GenerationResult g;
    for (const auto& o : r.at("outputs")) {
      g.outputs.push_back({o.at(0).get<std::string>(), o.at(1).get<double>()});
    }
    results.push_back(std::move(g));
  }
  return results;
}

namespace {

json examples_to_json(std::span<const TrainExample> examples) {
  json out = json::array();
  for (const auto& e : examples) out.push_back({e.input_text, e.target_text});
  return out;
}

}  // namespace

TrainingReport HfBackend::train(std::span<const TrainExample> train,
                                std::span<const TrainExample> validation,
                                const FinetuneConfig& cfg) {
  // Output limit follows the task of the corpus: long for end2end targets.
  int max_output = 32;
  for (const auto& e : train) {
    if (e.task == Task::end2end) max_output = 256;
  }
  const json msg = {{"op", "train"},
                    {"train", examples_to_json(train)},
                    {"validation", examples_to_json(validation)},
                    {"epochs", cfg.epochs},
                    {"learning_rate", cfg.learning_rate},
                    {"label_smoothing", cfg.label_smoothing},
                    {"batch_size", cfg.batch_size},
                    {"seed", cfg.seed},
                    {"max_output_tokens", max_output}};
  const json reply = process_->call(msg);
  TrainingReport report;
  report.examples = train.size();
  for (const auto& l : reply.at("epoch_losses")) {
    report.epoch_losses.push_back(l.is_null() ? std::nan("") : l.get<double>());
  }
  for (const auto& l : reply.value("validation_losses", json::array())) {
    report.validation_losses.push_back(l.is_null() ? std::nan("") : l.get<double>());
  }
  if (reply.contains("best_epoch") && !reply["best_epoch"].is_null()) {
    report.best_epoch = reply["best_epoch"].get<std::size_t>();
  }
  return report;
}

void HfBackend::save(const std::string& dir) const {
  process_->call({{"op", "save"}, {"path", dir}});
}

std::size_t HfBackend::count_tokens(std::string_view text) const {
  const json reply = process_->call({{"op", "count_tokens"}, {"texts", {std::string(text)}}});
  return reply.at("counts").at(0).get<std::size_t>();
}

}  // namespace qag
