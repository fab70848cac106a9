#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "qag/backend.hpp"
#include "qag/encoding.hpp"
#include "qag/errors.hpp"
#include "qag/types.hpp"

namespace qag {

struct StrategyConfig {
  Strategy strategy = Strategy::end2end;
  EncodingConfig encoding;
  int answers_per_sentence = 1;
  bool require_answer_in_context = true;
  int num_beams = 4;

  void validate() const;
};

struct GenerationOutcome {
  std::vector<QAPair> pairs;
  // Malformed segments of end2end output.
  std::size_t dropped_segments = 0;
  // Answer candidates rejected before question generation.
  std::size_t dropped_answers = 0;
  // Generation requests issued for this context.
  std::size_t backend_calls = 0;
};

// A backend failure inside a per-sentence driver; carries the sentence index.
class StrategyError : public Error {
 public:
  StrategyError(std::optional<std::size_t> sentence_index, const std::string& what)
      : Error(sentence_index ? "sentence " + std::to_string(*sentence_index) + ": " + what : what),
        sentence_index_(sentence_index) {}
  const std::optional<std::size_t>& sentence_index() const { return sentence_index_; }

 private:
  std::optional<std::size_t> sentence_index_;
};

// Answer extraction on every sentence, then question generation for each
// surviving answer, with two separate models and unprefixed inputs.
GenerationOutcome generate_pipeline(const Context& context, Backend& ae, Backend& qg,
                                    const StrategyConfig& cfg);

// Same control flow as the pipeline with one shared model and task prefixes.
GenerationOutcome generate_multitask(const Context& context, Backend& shared,
                                     const StrategyConfig& cfg);

// One generation over the raw paragraph, parsed as flattened pairs.
GenerationOutcome generate_end2end(const Context& context, Backend& model,
                                   const StrategyConfig& cfg);

// Question generation from given answers (no answer extraction). Answers
// are highlighted inside their sentence when possible.
GenerationOutcome generate_qg_only(const std::vector<QuadrupleRecord>& answers, Backend& qg,
                                   const StrategyConfig& cfg, bool with_prefix = false);

// Binds a strategy to its model handles.
class QagGenerator {
 public:
  static QagGenerator pipeline(ModelHandle ae, ModelHandle qg, StrategyConfig cfg = {});
  static QagGenerator multitask(ModelHandle shared, StrategyConfig cfg = {});
  static QagGenerator end2end(ModelHandle model, StrategyConfig cfg = {});

  GenerationOutcome run(const Context& context) const;

  Strategy strategy() const { return cfg_.strategy; }
  const StrategyConfig& config() const { return cfg_; }
  // Distinct models that must be resident: 2 for the pipeline, else 1.
  int model_count() const;
  const std::vector<ModelHandle>& handles() const { return handles_; }
  // Sum of requests served by the bound handles.
  std::size_t requests_served() const;

 private:
  QagGenerator(StrategyConfig cfg, std::vector<ModelHandle> handles);

  StrategyConfig cfg_;
  std::vector<ModelHandle> handles_;
};

}  // namespace qag
