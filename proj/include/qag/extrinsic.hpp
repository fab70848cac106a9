#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qag/metrics.hpp"
#include "qag/reader.hpp"
#include "qag/strategies.hpp"

namespace qag {

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisResult {
  QAGDataset dataset;
  // Generated pairs per context domain ("default" when unset).
  std::map<std::string, std::size_t> pairs_per_domain;
  std::size_t contexts = 0;
  std::size_t backend_calls = 0;
  std::size_t dropped_segments = 0;
  std::size_t dropped_answers = 0;
};

// Runs the generator over every context, in order.
SynthesisResult synthesize_dataset(const std::vector<Context>& contexts,
                                   const QagGenerator& generator, Split split);

std::string domain_of(const Context& context);

// ---------------------------------------------------------------------------
// Reader training and scoring

struct ReaderGrid {
  std::vector<double> learning_rates{1e-5, 5e-5, 1e-4};
  std::vector<int> epochs{2, 3, 4};
};

struct GridPoint {
  FinetuneConfig config;
  ScorePair validation;
};

struct TrainedReader {
  std::unique_ptr<Reader> reader;
  FinetuneConfig config;
  ScorePair validation;
  std::vector<GridPoint> grid;
  std::size_t dropped_pairs = 0;
};

// Trains one reader per grid point on the span-aligned training pairs and
// keeps the one with the best validation F1 (first wins ties). An empty grid
// or an empty validation set trains once with `base`. Throws EmptyInputError
// when no training pair can be aligned.
TrainedReader train_reader(const QAGDataset& train, const QAGDataset& validation,
                           const ReaderTrainer& trainer, const FinetuneConfig& base,
                           const ReaderGrid& grid = {});

ScorePair evaluate(const Reader& reader, const std::vector<ReaderExample>& test_set);

// ---------------------------------------------------------------------------
// Downsampling

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct DownsampleResult {
  int trials = 0;
  double mean_f1 = 0.0;
  double mean_em = 0.0;
  ConfidenceInterval ci95_f1;
  ConfidenceInterval ci95_em;
  std::vector<ScorePair> per_trial;
  // The dataset had fewer pairs than the target and was used whole.
  bool undersized = false;
  std::size_t train_pairs_used = 0;
  std::size_t validation_pairs_used = 0;
};

struct SampleStatistics {
  double mean = 0.0;
  ConfidenceInterval ci95;
};

// Mean and normal-approximation 95% interval mean +- 1.96 * sd / sqrt(n)
// with the sample standard deviation. Requires n >= 2.
SampleStatistics mean_with_ci95(const std::vector<double>& values);

// Keeps `target` pairs drawn uniformly without replacement over all pairs.
QAGDataset downsample_pairs(const QAGDataset& dataset, std::size_t target, std::uint64_t seed);

// Per trial: downsample train and validation to the target sizes with the
// trial's seed, retrain the reader (grid search when `grid` is non-empty),
// score on `test_set`. Throws ValidationError when trials < 2 or the seed
// list does not have one seed per trial.
DownsampleResult downsample_eval(const QAGDataset& train, const QAGDataset& validation,
                                 std::pair<std::size_t, std::size_t> target_sizes, int trials,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ReaderTrainer& trainer, const FinetuneConfig& cfg,
                                 const std::vector<ReaderExample>& test_set,
                                 const ReaderGrid& grid = {{}, {}});

// ---------------------------------------------------------------------------
// Resource profiling

struct ResourceProfile {
  double backend_calls_per_paragraph = 0.0;
  int model_count = 1;
  double pairs_per_gold_pair = 0.0;
};

struct StrategyRun {
  Strategy strategy = Strategy::end2end;
  int model_count = 1;
  std::size_t paragraphs = 0;
  std::size_t backend_calls = 0;
  std::size_t generated_pairs = 0;
  std::size_t gold_pairs = 0;
  double average_sentences = 0.0;
};

// Runs `generator` over `contexts`, counting requests at the backends.
StrategyRun measure_strategy(const QagGenerator& generator, const std::vector<Context>& contexts,
                             std::size_t gold_pairs);

ResourceProfile profile_resources(const StrategyRun& run);

// Ratio as an "Nx" multiple with at most one decimal: "9.2x", "2x".
std::string format_multiple(double ratio);

// Cost / memory / yield table relative to `reference`.
std::string format_profile_table(const std::vector<std::pair<Strategy, ResourceProfile>>& rows,
                                 const ResourceProfile& reference);

// ---------------------------------------------------------------------------
// Report

struct DomainSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  friend bool operator==(const DomainSizes&, const DomainSizes&) = default;
};

struct EvalReport {
  std::string label;
  // dataset_sizes counts the span-aligned pairs, i.e. the lines of the reader
  // training files.
  std::map<std::string, ScorePair> per_domain;
  ScorePair average;
  std::map<std::string, DomainSizes> dataset_sizes;
  std::optional<ResourceProfile> resource_profile;
  std::map<std::string, FinetuneConfig> reader_configs;
};

ScorePair average_scores(const std::map<std::string, ScorePair>& per_domain);

struct DomainData {
  QAGDataset train{Split::train};
  QAGDataset validation{Split::validation};
  std::vector<ReaderExample> test;
};

// Trains and scores one reader per domain and fills every report field except
// the resource profile.
EvalReport run_extrinsic_eval(const std::map<std::string, DomainData>& domains,
                              const ReaderTrainer& trainer, const FinetuneConfig& base,
                              const ReaderGrid& grid, std::string label);

// Domains in display order: amazon, wiki, nyt, reddit, then the rest sorted.
std::vector<std::string> ordered_domains(const std::vector<std::string>& domains);
std::string display_domain(const std::string& domain);

nlohmann::json report_to_json(const EvalReport& report);
// Columns: Approach | Average | <domains...>, cells "F1/EM".
std::string report_to_markdown(const std::vector<EvalReport>& rows);
// "trial,domain,f1,em" with scores in percent.
std::string downsample_to_csv(const std::map<std::string, DownsampleResult>& per_domain);
nlohmann::json downsample_to_json(const DownsampleResult& result);

}  // namespace qag
