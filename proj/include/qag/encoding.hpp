#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "qag/kv_config.hpp"
#include "qag/types.hpp"

namespace qag {

struct EncodingConfig {
  std::string highlight_token = "<hl>";
  std::string pair_separator = " | ";
  std::string question_marker = "question: ";
  std::string answer_marker = ", answer: ";
  std::string ae_prefix = "extract answer: ";
  std::string qg_prefix = "generate question: ";
  int max_input_tokens = 512;
  int max_output_tokens_e2e = 256;
  int max_output_tokens_short = 32;

  // Throws ValidationError.
  void validate() const;

  // Character budget applied before tokenization: 4 code points per token.
  std::size_t input_char_budget() const { return 4 * static_cast<std::size_t>(max_input_tokens); }

  KeyValues to_key_values() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static EncodingConfig from_key_values(const KeyValues& kv);
};

// Context with the given sentence wrapped in highlight tokens, optionally
// preceded by the answer-extraction task prefix. Throws RangeError.
std::string encode_ae_input(const Context& context, std::size_t sentence_index,
                            const EncodingConfig& cfg, bool with_prefix);

// Context with the `occurrence`-th (0-based) match of `answer` highlighted,
// optionally preceded by the question-generation task prefix. Throws
// NotFoundError when there are not enough matches.
std::string encode_qg_input(const Context& context, std::string_view answer,
                            std::size_t occurrence, const EncodingConfig& cfg, bool with_prefix);

// Byte offsets of every match of `needle` in `text`, overlapping matches
// included.
std::vector<std::size_t> find_occurrences(std::string_view text, std::string_view needle);

// Inverse of the highlight insertion for spans delimited by whitespace or the
// ends of the text: drops each token together with its inner padding space.
std::string remove_highlights(std::string_view encoded, const EncodingConfig& cfg);

// Pre-tokenizer guard: keeps at most input_char_budget() code points.
std::string truncate_input(std::string_view text, const EncodingConfig& cfg);

// "question: q1, answer: a1 | question: q2, answer: a2 | ..."
// Throws EmptyInputError on an empty list and ValidationError when a field
// contains the pair separator or a question contains the answer marker.
std::string flatten_pairs(const std::vector<QAPair>& pairs, const EncodingConfig& cfg);

struct ParseResult {
  std::vector<QAPair> pairs;
  std::size_t dropped_segments = 0;
};

// Total inverse of flatten_pairs for arbitrary model output. Splits on the
// separator (a bare "|" is accepted), keeps segments of the form
// "question:<q>, answer:<a>" splitting at the first answer marker, trims and
// deduplicates. Every other non-blank segment is counted as dropped.
ParseResult parse_flat(std::string_view output, const EncodingConfig& cfg,
                       Strategy strategy = Strategy::end2end);

}  // namespace qag
