#include "qag/strategies.hpp"

#include <algorithm>

#include "qag/utf8.hpp"

namespace qag {

void StrategyConfig::validate() const {
  encoding.validate();
  if (strategy == Strategy::gold) throw ValidationError("gold is not a generation strategy");
  if (answers_per_sentence < 1) throw ValidationError("answers_per_sentence must be >= 1");
  if (num_beams < 1) throw ValidationError("num_beams must be >= 1");
}

namespace {

bool usable_field(const std::string& s) {
  return !s.empty() && s.find(kReservedPairSeparator) == std::string::npos;
}

std::vector<GenerationResult> run_batch(Backend& backend,
                                        const std::vector<GenerationRequest>& requests,
                                        const std::vector<std::size_t>& sentence_of) {
  try {
    return backend.generate(requests);
  } catch (const BackendError& e) {
    std::optional<std::size_t> sentence;
    if (e.index() < sentence_of.size()) sentence = sentence_of[e.index()];
    throw StrategyError(sentence, e.what());
  }
}

// Occurrence of `answer` to highlight: the first one inside the source
// sentence, else the first in the paragraph.
std::optional<std::size_t> pick_occurrence(const Context& ctx, std::size_t sentence,
                                           const std::string& answer) {
  const auto hits = find_occurrences(ctx.text(), answer);
  if (hits.empty()) return std::nullopt;
  auto [b, e] = ctx.sentence_bytes(sentence);
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (hits[k] >= b && hits[k] + answer.size() <= e) return k;
  }
  return 0;
}

struct Candidate {
  std::size_t sentence;
  std::string answer;
  double score;
};

// Shared AE -> QG driver of the pipeline and multitask strategies.
GenerationOutcome answer_then_question(const Context& ctx, Backend& ae, Backend& qg,
                                       const StrategyConfig& cfg, bool with_prefix,
                                       Strategy tag) {
  cfg.validate();
  GenerationOutcome out;
  const auto n = ctx.sentence_count();
  if (n == 0) return out;
  const auto& enc = cfg.encoding;

  std::vector<GenerationRequest> ae_requests;
  std::vector<std::size_t> ae_sentence;
  for (std::size_t i = 0; i < n; ++i) {
    ae_requests.push_back({truncate_input(encode_ae_input(ctx, i, enc, with_prefix), enc),
                           enc.max_output_tokens_short,
                           std::max(cfg.num_beams, cfg.answers_per_sentence),
                           cfg.answers_per_sentence});
    ae_sentence.push_back(i);
  }
  const auto ae_results = run_batch(ae, ae_requests, ae_sentence);
  out.backend_calls += ae_requests.size();

  std::vector<Candidate> candidates;
  std::vector<GenerationRequest> qg_requests;
  std::vector<std::size_t> qg_sentence;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& seq : ae_results[i].outputs) {
      std::string answer = utf8::trim(seq.text);
      if (!usable_field(answer) ||
          (cfg.require_answer_in_context && ctx.text().find(answer) == std::string::npos)) {
        ++out.dropped_answers;
        continue;
      }
      const auto occurrence = pick_occurrence(ctx, i, answer);
      if (!occurrence) {  // free-form answer with the filter off: nothing to highlight
        ++out.dropped_answers;
        continue;
      }
      qg_requests.push_back(
          {truncate_input(encode_qg_input(ctx, answer, *occurrence, enc, with_prefix), enc),
           enc.max_output_tokens_short, cfg.num_beams, 1});
      qg_sentence.push_back(i);
      candidates.push_back({i, std::move(answer), seq.log_likelihood});
    }
  }
  if (qg_requests.empty()) return out;

  const auto qg_results = run_batch(qg, qg_requests, qg_sentence);
  out.backend_calls += qg_requests.size();

  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& best = qg_results[k].outputs.front();
    std::string question = utf8::trim(best.text);
    if (!usable_field(question)) continue;
    out.pairs.emplace_back(std::move(question), candidates[k].answer, tag,
                           candidates[k].sentence, candidates[k].score + best.log_likelihood);
  }
  out.pairs = dedupe(out.pairs);
  return out;
}

}  // namespace

GenerationOutcome generate_pipeline(const Context& context, Backend& ae, Backend& qg,
                                    const StrategyConfig& cfg) {
  return answer_then_question(context, ae, qg, cfg, false, Strategy::pipeline);
}

GenerationOutcome generate_multitask(const Context& context, Backend& shared,
                                     const StrategyConfig& cfg) {
  return answer_then_question(context, shared, shared, cfg, true, Strategy::multitask);
}

GenerationOutcome generate_end2end(const Context& context, Backend& model,
                                   const StrategyConfig& cfg) {
  cfg.validate();
  const auto& enc = cfg.encoding;
  const std::vector<GenerationRequest> request = {
      {truncate_input(context.text(), enc), enc.max_output_tokens_e2e, cfg.num_beams, 1}};
  const auto results = run_batch(model, request, {});
  const auto& best = results.front().outputs.front();

  GenerationOutcome out;
  out.backend_calls = 1;
  auto parsed = parse_flat(best.text, enc, Strategy::end2end);
  out.dropped_segments = parsed.dropped_segments;
  for (auto& p : parsed.pairs) {
    if (cfg.require_answer_in_context && context.text().find(p.answer()) == std::string::npos) {
      ++out.dropped_answers;
      continue;
    }
    out.pairs.emplace_back(p.question(), p.answer(), Strategy::end2end, std::nullopt,
                           best.log_likelihood);
  }
  out.pairs = dedupe(out.pairs);
  return out;
}

GenerationOutcome generate_qg_only(const std::vector<QuadrupleRecord>& answers, Backend& qg,
                                   const StrategyConfig& cfg, bool with_prefix) {
  cfg.validate();
  GenerationOutcome out;
  std::vector<GenerationRequest> requests;
  std::vector<std::size_t> sentence_of;
  std::vector<const QuadrupleRecord*> used;
  for (const auto& q : answers) {
    const auto occurrence = pick_occurrence(q.context, q.sentence_index, q.answer);
    if (!occurrence || !usable_field(utf8::trim(q.answer))) {
      ++out.dropped_answers;
      continue;
    }
    requests.push_back(
        {truncate_input(encode_qg_input(q.context, q.answer, *occurrence, cfg.encoding,
                                        with_prefix),
                        cfg.encoding),
         cfg.encoding.max_output_tokens_short, cfg.num_beams, 1});
    sentence_of.push_back(q.sentence_index);
    used.push_back(&q);
  }
  if (requests.empty()) return out;
  const auto results = run_batch(qg, requests, sentence_of);
  out.backend_calls = requests.size();
  for (std::size_t k = 0; k < used.size(); ++k) {
    const auto& best = results[k].outputs.front();
    std::string question = utf8::trim(best.text);
    if (!usable_field(question)) continue;
    out.pairs.emplace_back(std::move(question), utf8::trim(used[k]->answer), Strategy::gold,
                           used[k]->sentence_index, best.log_likelihood);
  }
  out.pairs = dedupe(out.pairs);
  return out;
}

// ---------------------------------------------------------------------------

QagGenerator::QagGenerator(StrategyConfig cfg, std::vector<ModelHandle> handles)
    : cfg_(std::move(cfg)), handles_(std::move(handles)) {
  for (const auto& h : handles_) {
    if (!h) throw ValidationError("null model handle");
  }
  cfg_.validate();
}

QagGenerator QagGenerator::pipeline(ModelHandle ae, ModelHandle qg, StrategyConfig cfg) {
  cfg.strategy = Strategy::pipeline;
  return QagGenerator(std::move(cfg), {std::move(ae), std::move(qg)});
}

QagGenerator QagGenerator::multitask(ModelHandle shared, StrategyConfig cfg) {
  cfg.strategy = Strategy::multitask;
  return QagGenerator(std::move(cfg), {std::move(shared)});
}

QagGenerator QagGenerator::end2end(ModelHandle model, StrategyConfig cfg) {
  cfg.strategy = Strategy::end2end;
  return QagGenerator(std::move(cfg), {std::move(model)});
}

GenerationOutcome QagGenerator::run(const Context& context) const {
  switch (cfg_.strategy) {
    case Strategy::pipeline: return generate_pipeline(context, *handles_[0], *handles_[1], cfg_);
    case Strategy::multitask: return generate_multitask(context, *handles_[0], cfg_);
    default: return generate_end2end(context, *handles_[0], cfg_);
  }
}

int QagGenerator::model_count() const { return cfg_.strategy == Strategy::pipeline ? 2 : 1; }

std::size_t QagGenerator::requests_served() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < handles_.size(); ++i) {
    bool seen = false;
    for (std::size_t k = 0; k < i; ++k) seen = seen || handles_[k] == handles_[i];
    if (!seen) n += handles_[i]->requests_served();
  }
  return n;
}

}  // namespace qag
