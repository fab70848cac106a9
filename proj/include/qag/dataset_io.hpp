#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "qag/types.hpp"

namespace qag {

// One line of the dataset format:
//   {"id", "text", "domain", "pairs": [{"question", "answer",
//    "source_sentence_index", "strategy", "score"}]}
// Sentence spans are not stored; readers re-segment with `splitter`.
nlohmann::json entry_to_json(const DatasetEntry& entry);
DatasetEntry entry_from_json(const nlohmann::json& j,
                             const SentenceSplitter& splitter = split_sentences);

nlohmann::json pair_to_json(const QAPair& pair);
QAPair pair_from_json(const nlohmann::json& j);

void write_dataset_jsonl(std::ostream& out, const QAGDataset& dataset);
// Throws ValidationError naming the offending line.
QAGDataset read_dataset_jsonl(std::istream& in, Split split,
                              const SentenceSplitter& splitter = split_sentences);

void save_dataset(const std::string& path, const QAGDataset& dataset);
QAGDataset load_dataset(const std::string& path, Split split);

// Quadruple records, one per line:
//   {"paragraph", "answer", "question", ["sentence" | "sentence_index"],
//    ["paragraph_id"], ["domain"]}
// Records sharing a paragraph share a context; ids default to "p<N>" in order
// of first appearance. Without "sentence_index" the sentence is located by
// text, falling back to the first sentence containing the answer.
std::vector<QuadrupleRecord> read_quadruples_jsonl(std::istream& in);
std::vector<QuadrupleRecord> load_quadruples(const std::string& path);

// Reads a whole file; throws Error if it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace qag
