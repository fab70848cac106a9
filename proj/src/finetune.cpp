#include "qag/finetune.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "qag/sampling.hpp"
#include "qag/utf8.hpp"

namespace qag {

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::pipeline_ae: return "pipeline-ae";
    case Approach::pipeline_qg: return "pipeline-qg";
    case Approach::multitask: return "multitask";
    case Approach::end2end: return "end2end";
  }
  return "end2end";
}

Approach parse_approach(std::string_view name) {
  for (auto a : {Approach::pipeline_ae, Approach::pipeline_qg, Approach::multitask,
                 Approach::end2end}) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError("unknown approach: " + std::string(name) +
                        " (expected pipeline-ae, pipeline-qg, multitask or end2end)");
}

namespace {

using A = Approach;

constexpr std::array<DefaultsRow, 20> kDefaults = {{
    {"bart-base", A::pipeline_ae, 4, 0.00005, 0.15, 64},
    {"bart-base", A::pipeline_qg, 7, 0.0001, 0.15, 256},
    {"bart-base", A::multitask, 3, 0.00005, 0.15, 128},
    {"bart-base", A::end2end, 2, 0.00001, 0.15, 128},
    {"bart-large", A::pipeline_ae, 5, 0.00005, 0.15, 64},
    {"bart-large", A::pipeline_qg, 4, 0.00005, 0.15, 128},
    {"bart-large", A::multitask, 6, 0.00001, 0.15, 64},
    {"bart-large", A::end2end, 14, 0.00001, 0.15, 64},
    {"t5-small", A::pipeline_ae, 7, 0.0001, 0.15, 64},
    {"t5-small", A::pipeline_qg, 9, 0.0001, 0.15, 64},
    {"t5-small", A::multitask, 7, 0.0001, 0.15, 64},
    {"t5-small", A::end2end, 18, 0.0001, 0.0, 64},
    {"t5-base", A::pipeline_ae, 8, 0.0001, 0.0, 64},
    {"t5-base", A::pipeline_qg, 5, 0.0001, 0.15, 64},
    {"t5-base", A::multitask, 6, 0.0001, 0.15, 128},
    {"t5-base", A::end2end, 17, 0.0001, 0.15, 64},
    {"t5-large", A::pipeline_ae, 9, 0.0001, 0.0, 128},
    {"t5-large", A::pipeline_qg, 6, 0.00005, 0.15, 64},
    {"t5-large", A::multitask, 3, 0.0001, 0.15, 64},
    {"t5-large", A::end2end, 12, 0.0001, 0.15, 64},
}};

std::string_view canonical_model(std::string_view model) {
  if (model.rfind("hf:", 0) == 0) model.remove_prefix(3);
  if (model.rfind("facebook/", 0) == 0) model.remove_prefix(9);
  return model;
}

bool truncate_to(std::string& text, std::size_t code_points) {
  if (utf8::length(text) <= code_points) return false;
  text = utf8::truncate(text, code_points);
  return true;
}

std::size_t short_target_budget(const EncodingConfig& cfg) {
  return 4 * static_cast<std::size_t>(cfg.max_output_tokens_short);
}

void add_example(CorpusBuild& build, std::string input, std::string target, Task task,
                 const EncodingConfig& cfg, std::size_t target_budget) {
  bool cut = truncate_to(input, cfg.input_char_budget());
  cut = truncate_to(target, target_budget) || cut;
  if (cut) ++build.truncated;
  build.examples.push_back({std::move(input), std::move(target), task});
}

// Occurrence of the answer inside the quad's sentence, else the first one.
std::size_t occurrence_in_sentence(const QuadrupleRecord& q) {
  const auto hits = find_occurrences(q.context.text(), q.answer);
  auto [b, e] = q.context.sentence_bytes(q.sentence_index);
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (hits[k] >= b && hits[k] + q.answer.size() <= e) return k;
  }
  return 0;
}

}  // namespace

std::span<const DefaultsRow> finetune_defaults_table() { return kDefaults; }

std::optional<FinetuneConfig> default_finetune_config(std::string_view model, Approach approach) {
  const auto name = canonical_model(model);
  for (const auto& row : kDefaults) {
    if (row.model == name && row.approach == approach) {
      FinetuneConfig cfg;
      cfg.epochs = row.epochs;
      cfg.learning_rate = row.learning_rate;
      cfg.label_smoothing = row.label_smoothing;
      cfg.batch_size = row.batch_size;
      return cfg;
    }
  }
  return std::nullopt;
}

CorpusBuild build_ae_corpus(const std::vector<QuadrupleRecord>& quads, const EncodingConfig& cfg,
                            bool with_prefix) {
  CorpusBuild build;
  for (const auto& q : quads) {
    add_example(build, encode_ae_input(q.context, q.sentence_index, cfg, with_prefix), q.answer,
                Task::ae, cfg, short_target_budget(cfg));
  }
  return build;
}

CorpusBuild build_qg_corpus(const std::vector<QuadrupleRecord>& quads, const EncodingConfig& cfg,
                            bool with_prefix) {
  CorpusBuild build;
  for (const auto& q : quads) {
    add_example(build, encode_qg_input(q.context, q.answer, occurrence_in_sentence(q), cfg, with_prefix),
                q.question, Task::qg, cfg, short_target_budget(cfg));
  }
  return build;
}

CorpusBuild build_multitask_corpus(const std::vector<QuadrupleRecord>& quads,
                                   const EncodingConfig& cfg) {
  CorpusBuild build = build_ae_corpus(quads, cfg, true);
  CorpusBuild qg = build_qg_corpus(quads, cfg, true);
  build.truncated += qg.truncated;
  build.examples.insert(build.examples.end(), std::make_move_iterator(qg.examples.begin()),
                        std::make_move_iterator(qg.examples.end()));
  return build;
}

CorpusBuild build_end2end_corpus(const QAGDataset& gold, const EncodingConfig& cfg) {
  CorpusBuild build;
  const std::size_t target_budget = 4 * static_cast<std::size_t>(cfg.max_output_tokens_e2e);
  for (const auto& entry : gold.entries()) {
    const auto& text = entry.context.text();
    std::vector<std::pair<std::size_t, const QAPair*>> ordered;
    for (const auto& p : entry.pairs) {
      if (p.question().find(cfg.pair_separator) != std::string::npos ||
          p.answer().find(cfg.pair_separator) != std::string::npos ||
          p.question().find(cfg.answer_marker) != std::string::npos) {
        ++build.dropped;
        build.warnings.push_back("context " + entry.context.id() +
                                 ": dropped pair with separator collision: " + p.question());
        continue;
      }
      ordered.emplace_back(text.find(p.answer()), &p);
    }
    if (ordered.empty()) continue;
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second->question() < b.second->question();
    });
    std::vector<QAPair> pairs;
    for (const auto& [pos, p] : ordered) pairs.push_back(*p);
    add_example(build, text, flatten_pairs(pairs, cfg), Task::end2end, cfg, target_budget);
  }
  return build;
}

GoldGrouping group_gold_pairs(const std::vector<QuadrupleRecord>& quads,
                              const EncodingConfig& cfg) {
  GoldGrouping out{QAGDataset(Split::train), 0, {}};
  std::vector<std::string> order;
  std::map<std::string, std::pair<const Context*, std::vector<QAPair>>> groups;
  for (const auto& q : quads) {
    auto [it, inserted] = groups.try_emplace(q.context.id(), &q.context, std::vector<QAPair>{});
    if (inserted) order.push_back(q.context.id());
    const bool collision = q.question.find(kReservedPairSeparator) != std::string::npos ||
                           q.answer.find(kReservedPairSeparator) != std::string::npos ||
                           q.question.find(cfg.pair_separator) != std::string::npos ||
                           q.answer.find(cfg.pair_separator) != std::string::npos ||
                           q.question.find(cfg.answer_marker) != std::string::npos;
    if (collision) {
      ++out.dropped;
      out.warnings.push_back("context " + q.context.id() +
                             ": dropped pair with separator collision: " + q.question);
      continue;
    }
    it->second.second.emplace_back(q.question, q.answer, Strategy::gold, q.sentence_index);
  }
  for (const auto& id : order) {
    auto& [ctx, pairs] = groups.at(id);
    out.dataset.add(*ctx, std::move(pairs));
  }
  return out;
}

CorpusBuild build_end2end_corpus(const std::vector<QuadrupleRecord>& quads,
                                 const EncodingConfig& cfg) {
  auto grouped = group_gold_pairs(quads, cfg);
  auto build = build_end2end_corpus(grouped.dataset, cfg);
  build.dropped += grouped.dropped;
  build.warnings.insert(build.warnings.begin(), grouped.warnings.begin(), grouped.warnings.end());
  return build;
}

CorpusBuild build_corpus(Approach approach, const std::vector<QuadrupleRecord>& quads,
                         const EncodingConfig& cfg) {
  switch (approach) {
    case Approach::pipeline_ae: return build_ae_corpus(quads, cfg, false);
    case Approach::pipeline_qg: return build_qg_corpus(quads, cfg, false);
    case Approach::multitask: return build_multitask_corpus(quads, cfg);
    case Approach::end2end: return build_end2end_corpus(quads, cfg);
  }
  return {};
}

std::vector<TrainExample> shuffle_corpus(std::vector<TrainExample> corpus, std::uint64_t seed) {
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (auto i : seeded_permutation(corpus.size(), seed)) out.push_back(std::move(corpus[i]));
  return out;
}

CorpusStats corpus_statistics(std::span<const TrainExample> corpus, const Backend& backend,
                              const EncodingConfig& cfg) {
  CorpusStats stats;
  stats.examples = corpus.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& e = corpus[i];
    if (utf8::trim(e.input_text).empty() || utf8::trim(e.target_text).empty()) {
      throw ValidationError("training example " + std::to_string(i) + " has a blank field");
    }
    switch (e.task) {
      case Task::ae: ++stats.ae; break;
      case Task::qg: ++stats.qg; break;
      case Task::end2end: ++stats.end2end; break;
    }
    const auto out_limit = static_cast<std::size_t>(
        e.task == Task::end2end ? cfg.max_output_tokens_e2e : cfg.max_output_tokens_short);
    if (backend.count_tokens(e.input_text) > static_cast<std::size_t>(cfg.max_input_tokens)) {
      ++stats.over_length_inputs;
    }
    if (backend.count_tokens(e.target_text) > out_limit) ++stats.over_length_targets;
  }
  return stats;
}

FinetuneRun finetune(ModelHandle handle, std::span<const TrainExample> corpus,
                     const FinetuneConfig& cfg, const EncodingConfig& enc,
                     std::span<const TrainExample> validation) {
  if (!handle) throw ValidationError("null model handle");
  cfg.validate();
  if (corpus.empty()) throw EmptyInputError("empty training corpus");
  if (!handle->supports_training()) {
    throw Error(handle->identity() + " does not support training");
  }
  FinetuneRun run{handle, {}, corpus_statistics(corpus, *handle, enc)};
  run.report = handle->train(corpus, validation, cfg);
  for (std::size_t epoch = 0; epoch < run.report.epoch_losses.size(); ++epoch) {
    if (!std::isfinite(run.report.epoch_losses[epoch])) {
      throw TrainingDiverged("training diverged: non-finite loss in epoch " +
                             std::to_string(epoch) + " (lr " + std::to_string(cfg.learning_rate) +
                             ", batch " + std::to_string(cfg.batch_size) + ")");
    }
  }
  return run;
}

}  // namespace qag
