#include "qag/encoding.hpp"

#include <charconv>

#include "qag/errors.hpp"
#include "qag/utf8.hpp"

namespace qag {

void EncodingConfig::validate() const {
  const std::string* tokens[] = {&highlight_token, &pair_separator, &question_marker,
                                 &answer_marker};
  for (std::size_t i = 0; i < 4; ++i) {
    if (tokens[i]->empty()) throw ValidationError("encoding markers must be non-empty");
    for (std::size_t k = i + 1; k < 4; ++k) {
      if (*tokens[i] == *tokens[k]) throw ValidationError("encoding markers must be distinct");
    }
  }
  if (max_input_tokens <= 0 || max_output_tokens_e2e <= 0 || max_output_tokens_short <= 0) {
    throw ValidationError("length limits must be positive");
  }
}

KeyValues EncodingConfig::to_key_values() const {
  return {{"highlight_token", highlight_token},
          {"pair_separator", pair_separator},
          {"question_marker", question_marker},
          {"answer_marker", answer_marker},
          {"ae_prefix", ae_prefix},
          {"qg_prefix", qg_prefix},
          {"max_input_tokens", std::to_string(max_input_tokens)},
          {"max_output_tokens_e2e", std::to_string(max_output_tokens_e2e)},
          {"max_output_tokens_short", std::to_string(max_output_tokens_short)}};
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ValidationError("config key " + key + ": not an integer: " + value);
  }
  return out;
}

}  // namespace

EncodingConfig EncodingConfig::from_key_values(const KeyValues& kv) {
  EncodingConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "highlight_token") cfg.highlight_token = value;
    else if (key == "pair_separator") cfg.pair_separator = value;
    else if (key == "question_marker") cfg.question_marker = value;
    else if (key == "answer_marker") cfg.answer_marker = value;
    else if (key == "ae_prefix") cfg.ae_prefix = value;
    else if (key == "qg_prefix") cfg.qg_prefix = value;
    else if (key == "max_input_tokens") cfg.max_input_tokens = parse_int(key, value);
    else if (key == "max_output_tokens_e2e") cfg.max_output_tokens_e2e = parse_int(key, value);
    else if (key == "max_output_tokens_short") cfg.max_output_tokens_short = parse_int(key, value);
    else throw ValidationError("unknown encoding config key: " + key);
  }
  cfg.validate();
  return cfg;
}

namespace {

bool starts_with_space(std::string_view s) {
  return !s.empty() && utf8::is_space(utf8::decode(s.substr(0, std::min<std::size_t>(4, s.size())))[0]);
}

bool ends_with_space(std::string_view s) {
  if (s.empty()) return false;
  auto cps = utf8::decode(s.substr(s.size() - std::min<std::size_t>(4, s.size())));
  return !cps.empty() && utf8::is_space(cps.back());
}

// Wraps text[begin, end) in highlight tokens. Each token is padded with one
// space on the inside; on the outside, existing whitespace is reused and a
// space is inserted only next to non-whitespace.
std::string highlight(std::string_view text, std::size_t begin, std::size_t end,
                      const EncodingConfig& cfg) {
  const auto left = text.substr(0, begin);
  const auto span = text.substr(begin, end - begin);
  const auto right = text.substr(end);
  std::string out;
  out.reserve(text.size() + 2 * cfg.highlight_token.size() + 4);
  out += left;
  if (!left.empty() && !ends_with_space(left)) out += ' ';
  out += cfg.highlight_token;
  out += ' ';
  out += span;
  out += ' ';
  out += cfg.highlight_token;
  if (!right.empty() && !starts_with_space(right)) out += ' ';
  out += right;
  return out;
}

}  // namespace

std::string encode_ae_input(const Context& context, std::size_t sentence_index,
                            const EncodingConfig& cfg, bool with_prefix) {
  auto [b, e] = context.sentence_bytes(sentence_index);
  std::string body = highlight(context.text(), b, e, cfg);
  return with_prefix ? cfg.ae_prefix + body : body;
}

std::vector<std::size_t> find_occurrences(std::string_view text, std::string_view needle) {
  std::vector<std::size_t> out;
  if (needle.empty()) return out;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + 1)) {
    out.push_back(pos);
  }
  return out;
}

std::string encode_qg_input(const Context& context, std::string_view answer,
                            std::size_t occurrence, const EncodingConfig& cfg, bool with_prefix) {
  const auto hits = find_occurrences(context.text(), answer);
  if (occurrence >= hits.size()) {
    throw NotFoundError("answer '" + std::string(answer) + "' occurrence " +
                        std::to_string(occurrence) + " not found in context " + context.id());
  }
  const auto begin = hits[occurrence];
  std::string body = highlight(context.text(), begin, begin + answer.size(), cfg);
  return with_prefix ? cfg.qg_prefix + body : body;
}

std::string remove_highlights(std::string_view encoded, const EncodingConfig& cfg) {
  const std::string open = cfg.highlight_token + " ";
  const std::string close = " " + cfg.highlight_token;
  std::string out;
  out.reserve(encoded.size());
  bool inside = false;
  std::size_t pos = 0;
  while (pos < encoded.size()) {
    const std::string& marker = inside ? close : open;
    const auto hit = encoded.find(marker, pos);
    if (hit == std::string_view::npos) break;
    out += encoded.substr(pos, hit - pos);
    pos = hit + marker.size();
    inside = !inside;
  }
  out += encoded.substr(pos);
  return out;
}

std::string truncate_input(std::string_view text, const EncodingConfig& cfg) {
  return utf8::truncate(text, cfg.input_char_budget());
}

std::string flatten_pairs(const std::vector<QAPair>& pairs, const EncodingConfig& cfg) {
  if (pairs.empty()) throw EmptyInputError("cannot flatten an empty pair list");
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.question().find(cfg.pair_separator) != std::string::npos ||
        p.answer().find(cfg.pair_separator) != std::string::npos) {
      throw ValidationError("pair " + std::to_string(i) + " contains the pair separator");
    }
    if (p.question().find(cfg.answer_marker) != std::string::npos) {
      throw ValidationError("question of pair " + std::to_string(i) +
                            " contains the answer marker");
    }
    if (i > 0) out += cfg.pair_separator;
    out += cfg.question_marker;
    out += p.question();
    out += cfg.answer_marker;
    out += p.answer();
  }
  return out;
}

ParseResult parse_flat(std::string_view output, const EncodingConfig& cfg, Strategy strategy) {
  ParseResult result;
  std::string separator = utf8::trim(cfg.pair_separator);
  if (separator.empty()) separator = cfg.pair_separator;
  std::string question_marker = utf8::trim(cfg.question_marker);
  if (question_marker.empty()) question_marker = cfg.question_marker;
  std::string answer_marker = utf8::trim(cfg.answer_marker);
  if (answer_marker.empty()) answer_marker = cfg.answer_marker;

  std::vector<QAPair> pairs;
  std::size_t pos = 0;
  while (pos <= output.size()) {
    auto next = output.find(separator, pos);
    if (next == std::string_view::npos) next = output.size();
    const std::string segment = utf8::trim(output.substr(pos, next - pos));
    pos = next + separator.size();
    if (segment.empty()) continue;

    const auto am = segment.find(answer_marker);
    if (segment.rfind(question_marker, 0) != 0 || am == std::string::npos ||
        am < question_marker.size()) {
      ++result.dropped_segments;
      continue;
    }
    std::string question =
        utf8::trim(std::string_view(segment).substr(question_marker.size(), am - question_marker.size()));
    std::string answer = utf8::trim(std::string_view(segment).substr(am + answer_marker.size()));
    if (question.empty() || answer.empty() ||
        question.find(kReservedPairSeparator) != std::string::npos ||
        answer.find(kReservedPairSeparator) != std::string::npos) {
      ++result.dropped_segments;
      continue;
    }
    pairs.emplace_back(std::move(question), std::move(answer), strategy);
  }
  result.pairs = dedupe(pairs);
  return result;
}

}  // namespace qag
