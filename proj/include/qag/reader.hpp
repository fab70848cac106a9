#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qag/train_types.hpp"
#include "qag/types.hpp"

namespace qag {

// One extractive QA example. Files use one JSON object per line:
//   {"id", "context", "question", "answers": ["...", ...]}
// ("answers": {"text": [...]} is accepted as well).
struct ReaderExample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> answers;
};

std::vector<ReaderExample> read_reader_jsonl(std::istream& in);
std::vector<ReaderExample> load_reader_examples(const std::string& path);
void write_reader_jsonl(std::ostream& out, const std::vector<ReaderExample>& examples);

// Predictions file: JSON object id -> answer string.
std::map<std::string, std::string> load_predictions(const std::string& path);
std::map<std::string, std::vector<std::string>> gold_answers(
    const std::vector<ReaderExample>& examples);

// Flattens generated pairs into reader examples with ids "<context id>#<k>".
// Pairs whose answer is not a substring of the context cannot be aligned to a
// span and are counted in `dropped`.
std::vector<ReaderExample> reader_examples_from(const QAGDataset& dataset,
                                                std::size_t* dropped = nullptr);

// Extractive reader: answers a question with a span of the context.
class Reader {
 public:
  virtual ~Reader() = default;
  virtual std::string answer(std::string_view context, std::string_view question) const = 0;
};

class ReaderTrainer {
 public:
  virtual ~ReaderTrainer() = default;
  virtual std::unique_ptr<Reader> train(const std::vector<ReaderExample>& examples,
                                        const FinetuneConfig& cfg) const = 0;
  virtual std::string identity() const = 0;
};

// Memorizes training questions: returns the first gold answer of a seen
// question, else "".
class MockReaderTrainer : public ReaderTrainer {
 public:
  std::unique_ptr<Reader> train(const std::vector<ReaderExample>& examples,
                                const FinetuneConfig& cfg) const override;
  std::string identity() const override { return "mock"; }
};

// Non-neural baseline: picks the sentence with the largest question-word
// overlap and returns the span next to the matched words whose length is the
// typical answer length learned per question word.
class LexicalReaderTrainer : public ReaderTrainer {
 public:
  std::unique_ptr<Reader> train(const std::vector<ReaderExample>& examples,
                                const FinetuneConfig& cfg) const override;
  std::string identity() const override { return "lexical"; }
};

// "mock" or "lexical". Throws ValidationError otherwise.
std::unique_ptr<ReaderTrainer> make_reader_trainer(std::string_view spec);

}  // namespace qag
