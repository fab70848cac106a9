#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qag/backend.hpp"
#include "qag/encoding.hpp"
#include "qag/errors.hpp"
#include "qag/train_types.hpp"
#include "qag/types.hpp"

namespace qag {

// Trainable objectives. The pipeline trains two models, one per subtask.
enum class Approach { pipeline_ae, pipeline_qg, multitask, end2end };

std::string_view to_string(Approach a);  // "pipeline-ae", ...
Approach parse_approach(std::string_view name);

struct DefaultsRow {
  std::string_view model;  // canonical name, e.g. "t5-large", "bart-base"
  Approach approach;
  int epochs;
  double learning_rate;
  double label_smoothing;
  int batch_size;
};

// Published optimum per (model, approach); 20 rows.
std::span<const DefaultsRow> finetune_defaults_table();

// Accepts "t5-large", "facebook/bart-base", "bart-base" and "hf:" prefixed
// forms. Unknown pairs return nullopt: callers must supply a config.
std::optional<FinetuneConfig> default_finetune_config(std::string_view model, Approach approach);

struct CorpusBuild {
  std::vector<TrainExample> examples;
  // Examples whose input or target hit the character pre-truncation guard.
  std::size_t truncated = 0;
  // Pairs left out (separator collisions in end2end targets).
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

// Input: sentence-highlighted context; target: the gold answer.
CorpusBuild build_ae_corpus(const std::vector<QuadrupleRecord>& quads, const EncodingConfig& cfg,
                            bool with_prefix);

// Input: answer-highlighted context (occurrence inside the quad's sentence);
// target: the gold question.
CorpusBuild build_qg_corpus(const std::vector<QuadrupleRecord>& quads, const EncodingConfig& cfg,
                            bool with_prefix);

// Prefixed AE examples followed by prefixed QG examples.
CorpusBuild build_multitask_corpus(const std::vector<QuadrupleRecord>& quads,
                                   const EncodingConfig& cfg);

// One example per context: raw paragraph -> flattened gold pairs, ordered by
// the first occurrence of each answer in the paragraph (ties by question).
// Contexts without pairs are skipped.
CorpusBuild build_end2end_corpus(const QAGDataset& gold, const EncodingConfig& cfg);

struct GoldGrouping {
  QAGDataset dataset;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

// Groups quadruples by context id into gold pairs. Pairs whose question or
// answer contains a separator are dropped with a warning.
GoldGrouping group_gold_pairs(const std::vector<QuadrupleRecord>& quads, const EncodingConfig& cfg);

// group_gold_pairs followed by build_end2end_corpus; drops are reported.
CorpusBuild build_end2end_corpus(const std::vector<QuadrupleRecord>& quads,
                                 const EncodingConfig& cfg);

// Corpus for one approach (multitask uses prefixes, pipeline models do not).
CorpusBuild build_corpus(Approach approach, const std::vector<QuadrupleRecord>& quads,
                         const EncodingConfig& cfg);

std::vector<TrainExample> shuffle_corpus(std::vector<TrainExample> corpus, std::uint64_t seed);

struct CorpusStats {
  std::size_t examples = 0;
  std::size_t ae = 0;
  std::size_t qg = 0;
  std::size_t end2end = 0;
  // Counted with the backend tokenizer against the length limits.
  std::size_t over_length_inputs = 0;
  std::size_t over_length_targets = 0;
};

// Throws ValidationError on a blank field.
CorpusStats corpus_statistics(std::span<const TrainExample> corpus, const Backend& backend,
                              const EncodingConfig& cfg);

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct FinetuneRun {
  ModelHandle handle;
  TrainingReport report;
  CorpusStats stats;
};

// Fine-tunes `handle` in place and returns it. With a validation corpus the
// backend keeps the epoch with the lowest validation loss. Throws
// TrainingDiverged on a non-finite loss.
FinetuneRun finetune(ModelHandle handle, std::span<const TrainExample> corpus,
                     const FinetuneConfig& cfg, const EncodingConfig& enc = {},
                     std::span<const TrainExample> validation = {});

}  // namespace qag
