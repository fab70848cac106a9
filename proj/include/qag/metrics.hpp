#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qag {

// Both values are fractions in [0, 1].
struct ScorePair {
  double f1 = 0.0;
  double exact_match = 0.0;

  friend bool operator==(const ScorePair&, const ScorePair&) = default;
};

// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(std::string_view text);

std::vector<std::string> answer_tokens(std::string_view text);

// 1 if the normalized prediction equals any normalized gold answer.
double exact_match(std::string_view pred, const std::vector<std::string>& golds);

// F1 of two token sequences with multiset overlap. Both empty scores 1, one
// empty scores 0.
double overlap_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Bag-of-tokens F1 (multiset overlap), maximized over gold answers. Both
// sides empty scores 1, one side empty scores 0. No golds scores 0.
double token_f1(std::string_view pred, const std::vector<std::string>& golds);

// Unweighted mean over ids. Throws ValidationError listing ids present in
// only one of the maps.
ScorePair corpus_scores(const std::map<std::string, std::string>& preds,
                        const std::map<std::string, std::vector<std::string>>& golds);

// "F1/EM" in percent with one decimal, e.g. "53.3/37.3".
std::string format_score_cell(const ScorePair& s);

}  // namespace qag
