#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qag {

enum class Strategy { pipeline, multitask, end2end, gold };
enum class Split { train, validation, test };

std::string_view to_string(Strategy s);
std::string_view to_string(Split s);
Strategy parse_strategy(std::string_view name);
Split parse_split(std::string_view name);

// Half-open range of code point offsets into a context's text.
struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

using SentenceSplitter = std::function<std::vector<SentenceSpan>(std::string_view)>;

// Rule-based splitter: a sentence ends at . ! or ? (plus any closing quotes or
// brackets) when followed by whitespace and an uppercase letter or digit,
// unless the word before a single period is a known abbreviation or an
// initial. Whitespace-only input yields no spans.
std::vector<SentenceSpan> split_sentences(std::string_view text);

// A paragraph with its sentence segmentation. Immutable after construction.
class Context {
 public:
  Context() = default;
  // Throws ValidationError when the spans break the ordering, bounds,
  // non-emptiness or whitespace-gap invariants.
  Context(std::string id, std::string text, std::vector<SentenceSpan> sentences,
          std::optional<std::string> domain = std::nullopt);

  static Context from_text(std::string id, std::string text,
                           std::optional<std::string> domain = std::nullopt,
                           const SentenceSplitter& splitter = split_sentences);

  const std::string& id() const { return id_; }
  const std::string& text() const { return text_; }
  const std::vector<SentenceSpan>& sentences() const { return sentences_; }
  const std::optional<std::string>& domain() const { return domain_; }

  std::size_t sentence_count() const { return sentences_.size(); }
  // Throws RangeError for an invalid index.
  std::string sentence_text(std::size_t index) const;
  // Byte range [first, second) of a sentence inside text().
  std::pair<std::size_t, std::size_t> sentence_bytes(std::size_t index) const;

  friend bool operator==(const Context& a, const Context& b) {
    return a.id_ == b.id_ && a.text_ == b.text_ && a.sentences_ == b.sentences_ &&
           a.domain_ == b.domain_;
  }

 private:
  std::string id_;
  std::string text_;
  std::vector<SentenceSpan> sentences_;
  std::vector<std::pair<std::size_t, std::size_t>> byte_ranges_;
  std::optional<std::string> domain_;
};

// Separator token reserved by the flattened pair serialization.
inline constexpr std::string_view kReservedPairSeparator = "|";

class QAPair {
 public:
  // Throws ValidationError if either field is blank or contains "|".
  QAPair(std::string question, std::string answer, Strategy strategy = Strategy::gold,
         std::optional<std::size_t> source_sentence_index = std::nullopt,
         std::optional<double> score = std::nullopt);

  const std::string& question() const { return question_; }
  const std::string& answer() const { return answer_; }
  Strategy strategy() const { return strategy_; }
  const std::optional<std::size_t>& source_sentence_index() const { return source_sentence_index_; }
  const std::optional<double>& score() const { return score_; }

  friend bool operator==(const QAPair&, const QAPair&) = default;

 private:
  std::string question_;
  std::string answer_;
  Strategy strategy_;
  std::optional<std::size_t> source_sentence_index_;
  std::optional<double> score_;
};

// Keeps the first occurrence of each (question, answer) pair; equality is
// exact after whitespace normalization.
std::vector<QAPair> dedupe(const std::vector<QAPair>& pairs);

struct DatasetEntry {
  Context context;
  std::vector<QAPair> pairs;
  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

class QAGDataset {
 public:
  explicit QAGDataset(Split split = Split::train) : split_(split) {}

  // Appends a context; its pairs are deduplicated.
  void add(Context context, std::vector<QAPair> pairs);

  Split split() const { return split_; }
  const std::vector<DatasetEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t pair_count() const;

  friend bool operator==(const QAGDataset&, const QAGDataset&) = default;

 private:
  std::vector<DatasetEntry> entries_;
  Split split_;
};

// One SQuAD-style training record (c, s, a, q).
struct QuadrupleRecord {
  Context context;
  std::size_t sentence_index = 0;
  std::string answer;
  std::string question;

  // Throws ValidationError / RangeError on a broken record.
  void validate() const;
};

}  // namespace qag
