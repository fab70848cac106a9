#pragma once

#include <memory>
#include <string>
#include <sys/types.h>

#include "json.hpp"
#include "qag/backend.hpp"

namespace qag {

// Child process speaking one JSON object per line over stdin/stdout.
class BridgeProcess {
 public:
  explicit BridgeProcess(const std::vector<std::string>& argv);
  ~BridgeProcess();
  BridgeProcess(const BridgeProcess&) = delete;
  BridgeProcess& operator=(const BridgeProcess&) = delete;

  // Sends a request and waits for the reply. Throws Error if the child died
  // or replied with {"ok": false}.
  nlohmann::json call(const nlohmann::json& request);

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Bridge script location: $QAG_HF_BRIDGE, else the copy in the source tree.
// Interpreter: $QAG_PYTHON, else python3. $QAG_CACHE_DIR is forwarded as the
// model cache.
std::string bridge_script_path();

// Pretrained encoder-decoder (T5, BART, ...) served by tools/hf_bridge.py.
// The special name "tiny-random-t5" builds a small randomly initialised
// byte-level T5 without any download.
class HfBackend : public Backend {
 public:
  explicit HfBackend(std::string model, int max_input_tokens = 512);

  std::string identity() const override { return "hf:" + model_; }
  bool supports_training() const override { return true; }
  TrainingReport train(std::span<const TrainExample> train,
                       std::span<const TrainExample> validation,
                       const FinetuneConfig& cfg) override;
  void save(const std::string& dir) const override;
  std::size_t count_tokens(std::string_view text) const override;

 protected:
  std::vector<GenerationResult> do_generate(std::span<const GenerationRequest> requests) override;

 private:
  std::string model_;
  int max_input_tokens_;
  std::unique_ptr<BridgeProcess> process_;
};

}  // namespace qag
