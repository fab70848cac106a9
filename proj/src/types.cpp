#include "qag/types.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <utility>

#include "qag/errors.hpp"
#include "qag/utf8.hpp"

namespace qag {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::pipeline: return "pipeline";
    case Strategy::multitask: return "multitask";
    case Strategy::end2end: return "end2end";
    case Strategy::gold: return "gold";
  }
  return "gold";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::pipeline, Strategy::multitask, Strategy::end2end, Strategy::gold}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown strategy: " + std::string(name));
}

Split parse_split(std::string_view name) {
  for (auto s : {Split::train, Split::validation, Split::test}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown split: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Sentence splitting.

namespace {

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

bool is_closing(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'}' || c == 0x201D ||
         c == 0x2019 || c == 0xBB;
}

bool is_opening(char32_t c) {
  return c == U'"' || c == U'\'' || c == U'(' || c == U'[' || c == U'{' || c == 0x201C ||
         c == 0x2018 || c == 0xAB;
}

bool is_upper(char32_t c) {
  if (c >= U'A' && c <= U'Z') return true;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return true;
  if (c >= 0x100 && c <= 0x17F) return c % 2 == 0;
  if (c >= 0x391 && c <= 0x3A9) return true;
  return c >= 0x410 && c <= 0x42F;
}

bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

constexpr std::array<std::u32string_view, 35> kAbbreviations = {
    U"Dr", U"Mr", U"Mrs", U"Ms", U"Prof", U"St", U"Jr", U"Sr", U"Gen", U"Col",
    U"Sgt", U"Lt", U"Capt", U"Gov", U"Sen", U"Rep", U"Rev", U"Mt", U"Inc", U"Ltd",
    U"Co", U"Corp", U"No", U"Fig", U"Dept", U"vs", U"etc", U"approx", U"al", U"Jan",
    U"Feb", U"Aug", U"Sept", U"Oct", U"Nov"};

// `word` excludes the terminating period.
bool is_abbreviation(std::u32string_view word) {
  while (!word.empty() && is_opening(word.front())) word.remove_prefix(1);
  if (word.empty()) return false;
  if (word.size() == 1 && is_upper(word.front())) return true;  // initial
  if (std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end()) {
    return true;
  }
  // Dotted forms such as "U.S" or "e.g".
  return word.find(U'.') != std::u32string_view::npos;
}

}  // namespace

std::vector<SentenceSpan> split_sentences(std::string_view text) {
  const std::u32string cps = utf8::decode(text);
  const std::size_t n = cps.size();
  std::vector<SentenceSpan> spans;

  std::size_t start = 0;
  while (start < n && utf8::is_space(cps[start])) ++start;

  std::size_t pos = start;
  while (pos < n) {
    if (!is_terminal(cps[pos])) {
      ++pos;
      continue;
    }
    std::size_t end = pos + 1;
    while (end < n && is_terminal(cps[end])) ++end;
    const bool single_period = cps[pos] == U'.' && end == pos + 1;
    while (end < n && is_closing(cps[end])) ++end;
    if (end < n && !utf8::is_space(cps[end])) {
      pos = end;
      continue;
    }
    std::size_t next = end;
    while (next < n && utf8::is_space(cps[next])) ++next;
    if (next == n) break;  // trailing terminator: closed below

    std::size_t probe = next;
    while (probe < n && is_opening(cps[probe])) ++probe;
    if (probe == n || !(is_upper(cps[probe]) || is_digit(cps[probe]))) {
      pos = next;
      continue;
    }
    if (single_period) {
      std::size_t word_begin = pos;
      while (word_begin > start && !utf8::is_space(cps[word_begin - 1])) --word_begin;
      if (is_abbreviation(std::u32string_view(cps).substr(word_begin, pos - word_begin))) {
        pos = next;
        continue;
      }
    }
    spans.push_back({start, end});
    start = next;
    pos = next;
  }

  if (start < n) {
    std::size_t end = n;
    while (end > start && utf8::is_space(cps[end - 1])) --end;
    if (end > start) spans.push_back({start, end});
  }
  return spans;
}

// ---------------------------------------------------------------------------

Context::Context(std::string id, std::string text, std::vector<SentenceSpan> sentences,
                 std::optional<std::string> domain)
    : id_(std::move(id)),
      text_(std::move(text)),
      sentences_(std::move(sentences)),
      domain_(std::move(domain)) {
  const std::u32string cps = utf8::decode(text_);
  auto whitespace_only = [&](std::size_t b, std::size_t e) {
    return std::all_of(cps.begin() + b, cps.begin() + e, utf8::is_space);
  };
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    const auto& s = sentences_[i];
    if (s.start >= s.end || s.end > cps.size()) {
      throw ValidationError("context " + id_ + ": sentence " + std::to_string(i) +
                            " out of bounds");
    }
    if (s.start < cursor) {
      throw ValidationError("context " + id_ + ": sentence " + std::to_string(i) +
                            " overlaps or is out of order");
    }
    if (!whitespace_only(cursor, s.start)) {
      throw ValidationError("context " + id_ + ": non-whitespace text between sentences");
    }
    if (whitespace_only(s.start, s.end)) {
      throw ValidationError("context " + id_ + ": blank sentence " + std::to_string(i));
    }
    cursor = s.end;
  }
  if (!sentences_.empty() && !whitespace_only(cursor, cps.size())) {
    throw ValidationError("context " + id_ + ": trailing text outside sentences");
  }
  byte_ranges_.reserve(sentences_.size());
  for (const auto& s : sentences_) {
    byte_ranges_.emplace_back(utf8::byte_offset(text_, s.start), utf8::byte_offset(text_, s.end));
  }
}

Context Context::from_text(std::string id, std::string text, std::optional<std::string> domain,
                           const SentenceSplitter& splitter) {
  auto spans = splitter(text);
  return Context(std::move(id), std::move(text), std::move(spans), std::move(domain));
}

std::pair<std::size_t, std::size_t> Context::sentence_bytes(std::size_t index) const {
  if (index >= byte_ranges_.size()) {
    throw RangeError("sentence index " + std::to_string(index) + " out of range for context " +
                     id_ + " with " + std::to_string(byte_ranges_.size()) + " sentences");
  }
  return byte_ranges_[index];
}

std::string Context::sentence_text(std::size_t index) const {
  auto [b, e] = sentence_bytes(index);
  return text_.substr(b, e - b);
}

// ---------------------------------------------------------------------------

QAPair::QAPair(std::string question, std::string answer, Strategy strategy,
               std::optional<std::size_t> source_sentence_index, std::optional<double> score)
    : question_(std::move(question)),
      answer_(std::move(answer)),
      strategy_(strategy),
      source_sentence_index_(source_sentence_index),
      score_(score) {
  if (utf8::trim(question_).empty()) throw ValidationError("blank question");
  if (utf8::trim(answer_).empty()) throw ValidationError("blank answer");
  if (question_.find(kReservedPairSeparator) != std::string::npos ||
      answer_.find(kReservedPairSeparator) != std::string::npos) {
    throw ValidationError("question/answer contains the reserved separator '|'");
  }
}

std::vector<QAPair> dedupe(const std::vector<QAPair>& pairs) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<QAPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (seen.emplace(utf8::normalize_whitespace(p.question()),
                     utf8::normalize_whitespace(p.answer()))
            .second) {
      out.push_back(p);
    }
  }
  return out;
}

void QAGDataset::add(Context context, std::vector<QAPair> pairs) {
  entries_.push_back({std::move(context), dedupe(pairs)});
}

std::size_t QAGDataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.pairs.size();
  return n;
}

void QuadrupleRecord::validate() const {
  context.sentence_bytes(sentence_index);  // range check
  if (utf8::trim(answer).empty()) throw ValidationError("quadruple with blank answer");
  if (utf8::trim(question).empty()) throw ValidationError("quadruple with blank question");
  if (context.text().find(answer) == std::string::npos) {
    throw ValidationError("answer '" + answer + "' is not a substring of context " +
                          context.id());
  }
}

}  // namespace qag
