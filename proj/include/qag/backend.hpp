#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qag/train_types.hpp"

namespace qag {

struct GenerationRequest {
  std::string input_text;
  int max_output_tokens = 32;
  int num_beams = 4;
  int num_return_sequences = 1;

  // Throws ValidationError.
  void validate() const;
};

struct GeneratedSequence {
  std::string text;
  double log_likelihood = 0.0;
};

struct GenerationResult {
  // Ordered by non-increasing log-likelihood.
  std::vector<GeneratedSequence> outputs;
};

struct TrainingReport {
  std::vector<double> epoch_losses;
  std::vector<double> validation_losses;
  // Epoch whose weights were kept (lowest validation loss), if validated.
  std::optional<std::size_t> best_epoch;
  std::size_t examples = 0;
};

// A sequence-to-sequence model. A handle is used by one worker at a time.
class Backend {
 public:
  virtual ~Backend() = default;

  // One result per request, order preserved. Throws EmptyInputError for an
  // empty batch and BackendError (carrying the request index) for invalid or
  // over-length requests and backend failures.
  std::vector<GenerationResult> generate(std::span<const GenerationRequest> requests);

  // Number of requests served since construction or the last reset.
  std::size_t requests_served() const { return requests_served_.load(); }
  void reset_counters() { requests_served_ = 0; }

  virtual std::string identity() const = 0;
  virtual bool supports_training() const { return false; }
  // Throws Error when training is unsupported.
  virtual TrainingReport train(std::span<const TrainExample> train,
                               std::span<const TrainExample> validation,
                               const FinetuneConfig& cfg);
  // Saves weights (or a description for the mock) under `dir`.
  virtual void save(const std::string& dir) const;

  // Tokenizer length of `text`. The default counts whitespace-separated words.
  virtual std::size_t count_tokens(std::string_view text) const;
  // Longest accepted input in tokens; nullopt means unbounded.
  virtual std::optional<std::size_t> max_input_tokens() const { return std::nullopt; }

 protected:
  virtual std::vector<GenerationResult> do_generate(
      std::span<const GenerationRequest> requests) = 0;

 private:
  std::atomic<std::size_t> requests_served_{0};
};

using ModelHandle = std::shared_ptr<Backend>;

// Deterministic lookup-table backend. Fixture format:
//   {"map": {"<input>": "<output>" | ["<best>", "<second>", ...]},
//    "fallback": "<text>", "max_input_tokens": <int, optional>}
// The i-th listed output scores -i; missing outputs are filled with the
// fallback scored -inf.
class MockBackend : public Backend {
 public:
  MockBackend() = default;
  MockBackend(std::map<std::string, std::vector<std::string>> table, std::string fallback,
              std::optional<std::size_t> max_input_tokens = std::nullopt,
              std::string source = "mock:");

  static std::shared_ptr<MockBackend> from_json(const nlohmann::json& fixture,
                                                std::string source = "mock:");
  static std::shared_ptr<MockBackend> from_file(const std::string& path);

  std::string identity() const override { return source_; }
  bool supports_training() const override { return true; }
  // Records the call and returns an empty loss log.
  TrainingReport train(std::span<const TrainExample> train,
                       std::span<const TrainExample> validation,
                       const FinetuneConfig& cfg) override;
  void save(const std::string& dir) const override;
  std::optional<std::size_t> max_input_tokens() const override { return max_input_tokens_; }

  struct TrainingCall {
    std::size_t examples = 0;
    std::size_t validation_examples = 0;
    FinetuneConfig config;
  };
  const std::vector<TrainingCall>& training_calls() const { return training_calls_; }

  nlohmann::json to_json() const;

 protected:
  std::vector<GenerationResult> do_generate(std::span<const GenerationRequest> requests) override;

 private:
  std::map<std::string, std::vector<std::string>> table_;
  std::string fallback_;
  std::optional<std::size_t> max_input_tokens_;
  std::string source_ = "mock:";
  std::vector<TrainingCall> training_calls_;
};

// Resolves a backend spec:
//   "mock:"             empty mock (every generation is the fallback "")
//   "mock:<file>"       mock fixture file
//   "hf:<name|path>"    pretrained encoder-decoder via the Python bridge
//   "t5-small", "facebook/bart-base", ...   same as "hf:<name>"
// Throws ValidationError for an unknown scheme and Error on load failure.
ModelHandle load_backend(std::string_view spec);

// Registry names accepted without the "hf:" scheme.
bool is_registry_model(std::string_view name);

}  // namespace qag
