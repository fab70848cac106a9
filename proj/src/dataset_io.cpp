#include "qag/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "qag/errors.hpp"

namespace qag {

using nlohmann::json;

namespace {

// JSON has no infinities; the mock fallback score is -inf.
json score_to_json(const std::optional<double>& score) {
  if (!score) return nullptr;
  if (std::isinf(*score)) return *score < 0 ? "-Infinity" : "Infinity";
  return *score;
}

std::optional<double> score_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    throw ValidationError("bad score value: " + s);
  }
  return j.get<double>();
}

}  // namespace

json pair_to_json(const QAPair& pair) {
  json j;
  j["question"] = pair.question();
  j["answer"] = pair.answer();
  j["source_sentence_index"] =
      pair.source_sentence_index() ? json(*pair.source_sentence_index()) : json(nullptr);
  j["strategy"] = std::string(to_string(pair.strategy()));
  j["score"] = score_to_json(pair.score());
  return j;
}

QAPair pair_from_json(const json& j) {
  std::optional<std::size_t> index;
  if (j.contains("source_sentence_index") && !j["source_sentence_index"].is_null()) {
    index = j["source_sentence_index"].get<std::size_t>();
  }
  Strategy strategy = Strategy::gold;
  if (j.contains("strategy") && !j["strategy"].is_null()) {
    strategy = parse_strategy(j["strategy"].get<std::string>());
  }
  std::optional<double> score;
  if (j.contains("score")) score = score_from_json(j["score"]);
  return QAPair(j.at("question").get<std::string>(), j.at("answer").get<std::string>(), strategy,
                index, score);
}

json entry_to_json(const DatasetEntry& entry) {
  json j;
  j["id"] = entry.context.id();
  j["text"] = entry.context.text();
  j["domain"] = entry.context.domain() ? json(*entry.context.domain()) : json(nullptr);
  j["pairs"] = json::array();
  for (const auto& p : entry.pairs) j["pairs"].push_back(pair_to_json(p));
  return j;
}

DatasetEntry entry_from_json(const json& j, const SentenceSplitter& splitter) {
  std::optional<std::string> domain;
  if (j.contains("domain") && !j["domain"].is_null()) domain = j["domain"].get<std::string>();
  DatasetEntry entry{Context::from_text(j.at("id").get<std::string>(),
                                        j.at("text").get<std::string>(), domain, splitter),
                     {}};
  if (j.contains("pairs")) {
    for (const auto& p : j["pairs"]) entry.pairs.push_back(pair_from_json(p));
  }
  return entry;
}

void write_dataset_jsonl(std::ostream& out, const QAGDataset& dataset) {
  for (const auto& e : dataset.entries()) out << entry_to_json(e).dump() << '\n';
}

QAGDataset read_dataset_jsonl(std::istream& in, Split split, const SentenceSplitter& splitter) {
  QAGDataset dataset(split);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto entry = entry_from_json(json::parse(line), splitter);
      dataset.add(std::move(entry.context), std::move(entry.pairs));
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dataset;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << contents;
}

void save_dataset(const std::string& path, const QAGDataset& dataset) {
  std::ostringstream ss;
  write_dataset_jsonl(ss, dataset);
  write_file(path, ss.str());
}

QAGDataset load_dataset(const std::string& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_dataset_jsonl(in, split);
}

std::vector<QuadrupleRecord> read_quadruples_jsonl(std::istream& in) {
  std::vector<QuadrupleRecord> quads;
  std::map<std::string, Context> by_text;
  std::size_t next_id = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto paragraph = j.at("paragraph").get<std::string>();
      auto it = by_text.find(paragraph);
      if (it == by_text.end()) {
        std::string id = j.contains("paragraph_id") ? j["paragraph_id"].get<std::string>()
                                                    : "p" + std::to_string(next_id);
        ++next_id;
        std::optional<std::string> domain;
        if (j.contains("domain") && !j["domain"].is_null()) domain = j["domain"].get<std::string>();
        it = by_text.emplace(paragraph, Context::from_text(id, paragraph, domain)).first;
      }
      QuadrupleRecord q{it->second, 0, j.at("answer").get<std::string>(),
                        j.at("question").get<std::string>()};
      const auto& ctx = q.context;
      if (j.contains("sentence_index")) {
        q.sentence_index = j["sentence_index"].get<std::size_t>();
      } else {
        std::optional<std::size_t> found;
        if (j.contains("sentence")) {
          const auto sentence = j["sentence"].get<std::string>();
          for (std::size_t i = 0; i < ctx.sentence_count() && !found; ++i) {
            if (ctx.sentence_text(i) == sentence) found = i;
          }
          // Sentence boundaries may differ from ours: take the sentence that
          // contains the start of the given one.
          const auto at = paragraph.find(sentence);
          for (std::size_t i = 0; i < ctx.sentence_count() && !found && at != std::string::npos;
               ++i) {
            auto [b, e] = ctx.sentence_bytes(i);
            if (at >= b && at < e) found = i;
          }
        }
        for (std::size_t i = 0; i < ctx.sentence_count() && !found; ++i) {
          if (ctx.sentence_text(i).find(q.answer) != std::string::npos) found = i;
        }
        if (!found) throw ValidationError("cannot locate the answer sentence");
        q.sentence_index = *found;
      }
      q.validate();
      quads.push_back(std::move(q));
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return quads;
}

std::vector<QuadrupleRecord> load_quadruples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_quadruples_jsonl(in);
}

}  // namespace qag
