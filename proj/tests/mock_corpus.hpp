#pragma once

// Synthetic paragraphs plus mock lookup tables that answer every encoded
// input a strategy driver will send for them.

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qag/backend.hpp"
#include "qag/encoding.hpp"
#include "qag/types.hpp"
#include "test_support.hpp"

namespace test_support {

struct MockCorpus {
  std::vector<qag::Context> contexts;
  // Gold pair per sentence, by context.
  std::vector<std::vector<qag::QAPair>> gold;
  std::size_t total_sentences = 0;
  nlohmann::json ae_fixture;         // unprefixed answer extraction
  nlohmann::json qg_fixture;         // unprefixed question generation
  nlohmann::json multitask_fixture;  // both prefixed tasks
  nlohmann::json end2end_fixture;    // paragraph -> flattened pairs
};

inline std::string sentence_for(int ctx, int sent, int year) {
  static const char* kVerbs[] = {"was founded", "was rebuilt", "opened", "closed"};
  static const char* kPlaces[] = {"near the harbor", "in the valley", "by the river",
                                  "on the hill"};
  return "Entity" + std::to_string(ctx) + "x" + std::to_string(sent) + " " +
         kVerbs[(ctx + sent) % 4] + " " + kPlaces[(ctx * 3 + sent) % 4] + " in " +
         std::to_string(year) + ".";
}

// `n` contexts with between min_s and max_s sentences each. The end2end
// fixture returns the gold pairs of the first ceil(k/2) sentences, mimicking
// a single-pass model that covers fewer facts.
inline MockCorpus make_mock_corpus(int n, std::uint64_t seed, int min_s = 1, int max_s = 6,
                                   const qag::EncodingConfig& cfg = {},
                                   const std::string& domain = "") {
  Rng rng(seed);
  MockCorpus out;
  out.ae_fixture = {{"map", nlohmann::json::object()}, {"fallback", ""}};
  out.qg_fixture = out.ae_fixture;
  out.multitask_fixture = out.ae_fixture;
  out.end2end_fixture = out.ae_fixture;
  for (int c = 0; c < n; ++c) {
    const int k = rng.uniform(min_s, max_s);
    std::string text;
    std::vector<std::pair<std::string, std::string>> facts;
    for (int s = 0; s < k; ++s) {
      const int year = 1800 + rng.uniform(0, 220);
      if (s) text += rng.uniform(0, 3) == 0 ? "\n" : " ";
      text += sentence_for(c, s, year);
      facts.emplace_back("Entity" + std::to_string(c) + "x" + std::to_string(s),
                         "What happened in " + std::to_string(year) + " at site " + std::to_string(c) + "-" + std::to_string(s) + "?");
    }
    auto ctx = qag::Context::from_text("ctx" + std::to_string(c), text,
                                       domain.empty() ? std::nullopt
                                                      : std::optional<std::string>(domain));
    if (static_cast<int>(ctx.sentence_count()) != k) throw std::logic_error("bad mock corpus");
    std::vector<qag::QAPair> gold;
    for (int s = 0; s < k; ++s) {
      const auto& [answer, question] = facts[static_cast<std::size_t>(s)];
      gold.emplace_back(question, answer);
      out.ae_fixture["map"][qag::encode_ae_input(ctx, s, cfg, false)] = answer;
      out.multitask_fixture["map"][qag::encode_ae_input(ctx, s, cfg, true)] = answer;
      out.qg_fixture["map"][qag::encode_qg_input(ctx, answer, 0, cfg, false)] = question;
      out.multitask_fixture["map"][qag::encode_qg_input(ctx, answer, 0, cfg, true)] = question;
    }
    std::vector<qag::QAPair> covered(gold.begin(), gold.begin() + (k + 1) / 2);
    out.end2end_fixture["map"][ctx.text()] = qag::flatten_pairs(covered, cfg);
    out.total_sentences += static_cast<std::size_t>(k);
    out.gold.push_back(std::move(gold));
    out.contexts.push_back(std::move(ctx));
  }
  return out;
}

inline std::shared_ptr<qag::MockBackend> mock(const nlohmann::json& fixture) {
  return qag::MockBackend::from_json(fixture);
}

}  // namespace test_support
