#include "qag/reader.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "qag/dataset_io.hpp"
#include "qag/errors.hpp"
#include "qag/metrics.hpp"
#include "qag/utf8.hpp"

namespace qag {

using nlohmann::json;

std::vector<ReaderExample> read_reader_jsonl(std::istream& in) {
  std::vector<ReaderExample> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ReaderExample e;
      e.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
      e.context = j.at("context").get<std::string>();
      e.question = j.at("question").get<std::string>();
      const auto& answers = j.at("answers");
      const auto& list = answers.is_object() ? answers.at("text") : answers;
      for (const auto& a : list) e.answers.push_back(a.get<std::string>());
      if (!ids.insert(e.id).second) throw ValidationError("duplicate id " + e.id);
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<ReaderExample> load_reader_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_reader_jsonl(in);
}

void write_reader_jsonl(std::ostream& out, const std::vector<ReaderExample>& examples) {
  for (const auto& e : examples) {
    out << json{{"id", e.id}, {"context", e.context}, {"question", e.question},
                {"answers", e.answers}}
               .dump()
        << '\n';
  }
}

std::map<std::string, std::string> load_predictions(const std::string& path) {
  try {
    return json::parse(read_file(path)).get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("bad predictions file " + path + ": " + e.what());
  }
}

std::map<std::string, std::vector<std::string>> gold_answers(
    const std::vector<ReaderExample>& examples) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& e : examples) out[e.id] = e.answers;
  return out;
}

std::vector<ReaderExample> reader_examples_from(const QAGDataset& dataset, std::size_t* dropped) {
  std::vector<ReaderExample> out;
  std::size_t skipped = 0;
  for (const auto& entry : dataset.entries()) {
    for (std::size_t k = 0; k < entry.pairs.size(); ++k) {
      const auto& p = entry.pairs[k];
      if (entry.context.text().find(p.answer()) == std::string::npos) {
        ++skipped;
        continue;
      }
      out.push_back({entry.context.id() + "#" + std::to_string(k), entry.context.text(),
                     p.question(), {p.answer()}});
    }
  }
  if (dropped) *dropped = skipped;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class MockReader : public Reader {
 public:
  explicit MockReader(std::unordered_map<std::string, std::string> memory)
      : memory_(std::move(memory)) {}

  std::string answer(std::string_view, std::string_view question) const override {
    auto it = memory_.find(utf8::normalize_whitespace(question));
    return it == memory_.end() ? std::string() : it->second;
  }

 private:
  std::unordered_map<std::string, std::string> memory_;
};

// Whitespace token of the context with its byte range and normalized form.
struct Word {
  std::size_t begin;
  std::size_t end;
  std::string norm;
  bool sentence_end;
};

std::vector<Word> context_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const auto begin = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == begin) break;
    auto raw = text.substr(begin, pos - begin);
    // Trim surrounding punctuation from the span itself.
    std::size_t b = 0;
    std::size_t e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b == e) continue;
    const char last = raw.back();
    words.push_back({begin + b, begin + e, normalize_answer(raw.substr(b, e - b)),
                     last == '.' || last == '?' || last == '!'});
  }
  return words;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStop = {
      "what", "who", "whom", "whose", "when", "where", "which", "why", "how", "is", "are",
      "was", "were", "do", "does", "did", "of", "in", "on", "at", "to", "for", "by", "with",
      "from", "and", "or", "it", "its", "that", "this", "as", "be", "been", "has", "have",
      "had", "many", "much", ""};
  return kStop;
}

// First wh-word of the question as a whole token ("how many" and "how much"
// are kept together), else "other".
std::string question_word(std::string_view question) {
  static const std::set<std::string> kWh = {"who", "whom", "whose", "when", "where",
                                            "which", "why", "how", "what"};
  const auto tokens = answer_tokens(question);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!kWh.count(tokens[i])) continue;
    if (tokens[i] == "how" && i + 1 < tokens.size() &&
        (tokens[i + 1] == "many" || tokens[i + 1] == "much")) {
      return "how " + tokens[i + 1];
    }
    return tokens[i];
  }
  return "other";
}

class LexicalReader : public Reader {
 public:
  LexicalReader(std::map<std::string, std::size_t> length_by_wh, std::size_t default_length)
      : length_by_wh_(std::move(length_by_wh)), default_length_(default_length) {}

  std::string answer(std::string_view context, std::string_view question) const override {
    const auto words = context_words(context);
    if (words.empty()) return {};
    std::set<std::string> qwords;
    for (const auto& t : answer_tokens(question)) {
      if (!stopwords().count(t)) qwords.insert(t);
    }

    // Sentence ranges over word indices.
    std::vector<std::pair<std::size_t, std::size_t>> sentences;
    std::size_t start = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i].sentence_end || i + 1 == words.size()) {
        sentences.emplace_back(start, i + 1);
        start = i + 1;
      }
    }
    std::size_t best_sentence = 0;
    std::size_t best_overlap = 0;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      std::size_t overlap = 0;
      for (auto i = sentences[s].first; i < sentences[s].second; ++i) {
        overlap += qwords.count(words[i].norm);
      }
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best_sentence = s;
      }
    }
    const auto [sb, se] = sentences[best_sentence];
    auto it = length_by_wh_.find(question_word(question));
    const std::size_t len = it == length_by_wh_.end() ? default_length_ : it->second;

    // Span of `len` words containing no question word and not starting or
    // ending on a function word, closest to a match. Numeric questions
    // prefer spans with a digit.
    const auto wh = question_word(question);
    const bool numeric = wh == "when" || wh == "how many" || wh == "how much";
    auto function_word = [&](std::size_t i) {
      return words[i].norm.empty() || stopwords().count(words[i].norm) > 0;
    };
    std::optional<std::size_t> best_start;
    std::pair<bool, std::size_t> best_rank{false, 0};
    for (std::size_t b = sb; b + len <= se; ++b) {
      bool clean = !function_word(b) && !function_word(b + len - 1);
      bool digit = false;
      for (std::size_t i = b; i < b + len && clean; ++i) {
        clean = !qwords.count(words[i].norm);
        for (char c : words[i].norm) digit = digit || std::isdigit(static_cast<unsigned char>(c));
      }
      if (!clean) continue;
      std::size_t distance = words.size();
      for (std::size_t i = sb; i < se; ++i) {
        if (!qwords.count(words[i].norm)) continue;
        const std::size_t d = i < b ? b - i : i - (b + len - 1);
        distance = std::min(distance, d);
      }
      // Lower is better: (type mismatch, distance).
      const std::pair<bool, std::size_t> rank{numeric && !digit, distance};
      if (!best_start || rank < best_rank) {
        best_start = b;
        best_rank = rank;
      }
    }
    if (!best_start) best_start = sb;
    const auto last = std::min(*best_start + len, se) - 1;
    return std::string(context.substr(words[*best_start].begin,
                                      words[last].end - words[*best_start].begin));
  }

 private:
  std::map<std::string, std::size_t> length_by_wh_;
  std::size_t default_length_;
};

std::size_t median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace

std::unique_ptr<Reader> MockReaderTrainer::train(const std::vector<ReaderExample>& examples,
                                                 const FinetuneConfig&) const {
  std::unordered_map<std::string, std::string> memory;
  for (const auto& e : examples) {
    if (!e.answers.empty()) memory.emplace(utf8::normalize_whitespace(e.question), e.answers[0]);
  }
  return std::make_unique<MockReader>(std::move(memory));
}

std::unique_ptr<Reader> LexicalReaderTrainer::train(const std::vector<ReaderExample>& examples,
                                                    const FinetuneConfig&) const {
  std::map<std::string, std::vector<std::size_t>> lengths;
  std::vector<std::size_t> all;
  for (const auto& e : examples) {
    if (e.answers.empty()) continue;
    const auto n = std::clamp<std::size_t>(context_words(e.answers[0]).size(), 1, 10);
    lengths[question_word(e.question)].push_back(n);
    all.push_back(n);
  }
  std::map<std::string, std::size_t> by_wh;
  for (const auto& [wh, v] : lengths) by_wh[wh] = median(v);
  return std::make_unique<LexicalReader>(std::move(by_wh), all.empty() ? 2 : median(all));
}

std::unique_ptr<ReaderTrainer> make_reader_trainer(std::string_view spec) {
  if (spec == "mock") return std::make_unique<MockReaderTrainer>();
  if (spec == "lexical") return std::make_unique<LexicalReaderTrainer>();
  throw ValidationError("unknown reader: " + std::string(spec) + " (expected mock or lexical)");
}

}  // namespace qag
