#include "qag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <unordered_map>

#include "qag/errors.hpp"

namespace qag {

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    lowered.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::string out;
  std::size_t pos = 0;
  while (pos < lowered.size()) {
    while (pos < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[pos]))) ++pos;
    const auto begin = pos;
    while (pos < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[pos]))) ++pos;
    if (pos == begin) break;
    const std::string_view word(lowered.data() + begin, pos - begin);
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::vector<std::string> answer_tokens(std::string_view text) {
  const std::string norm = normalize_answer(text);
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < norm.size()) {
    auto next = norm.find(' ', pos);
    if (next == std::string::npos) next = norm.size();
    tokens.emplace_back(norm.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

double exact_match(std::string_view pred, const std::vector<std::string>& golds) {
  const auto p = normalize_answer(pred);
  for (const auto& g : golds) {
    if (normalize_answer(g) == p) return 1.0;
  }
  return 0.0;
}

double overlap_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : pred) {
    if (auto it = counts.find(t); it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  // Harmonic mean of overlap/|pred| and overlap/|gold|, in one division.
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(pred.size() + gold.size());
}

double token_f1(std::string_view pred, const std::vector<std::string>& golds) {
  const auto p = answer_tokens(pred);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, overlap_f1(p, answer_tokens(g)));
  return best;
}

ScorePair corpus_scores(const std::map<std::string, std::string>& preds,
                        const std::map<std::string, std::vector<std::string>>& golds) {
  std::vector<std::string> missing_preds;
  std::vector<std::string> unknown_preds;
  for (const auto& [id, _] : golds) {
    if (!preds.count(id)) missing_preds.push_back(id);
  }
  for (const auto& [id, _] : preds) {
    if (!golds.count(id)) unknown_preds.push_back(id);
  }
  if (!missing_preds.empty() || !unknown_preds.empty()) {
    std::string msg = "prediction/gold id mismatch;";
    auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + label + ":";
      for (const auto& id : ids) msg += " " + id;
      msg += ";";
    };
    list("missing predictions", missing_preds);
    list("ids without gold", unknown_preds);
    throw ValidationError(msg);
  }
  ScorePair total;
  if (golds.empty()) return total;
  for (const auto& [id, answers] : golds) {
    const auto& pred = preds.at(id);
    total.f1 += token_f1(pred, answers);
    total.exact_match += exact_match(pred, answers);
  }
  const auto n = static_cast<double>(golds.size());
  total.f1 /= n;
  total.exact_match /= n;
  return total;
}

std::string format_score_cell(const ScorePair& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f/%.1f", 100.0 * s.f1, 100.0 * s.exact_match);
  return buf;
}

}  // namespace qag
