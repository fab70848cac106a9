#include <chrono>

#include "doctest.h"
#include "qag/encoding.hpp"
#include "qag/errors.hpp"
#include "qag/kv_config.hpp"
#include "qag/utf8.hpp"
#include "test_support.hpp"

using namespace qag;

namespace {

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + needle.size())) ++n;
  return n;
}

}  // namespace

TEST_CASE("encode_ae_input highlights one sentence") {
  const auto ctx = Context::from_text("c", "Paris is big. It is old.");
  const EncodingConfig cfg;
  CHECK(encode_ae_input(ctx, 0, cfg, false) == "<hl> Paris is big. <hl> It is old.");
  CHECK(encode_ae_input(ctx, 1, cfg, false) == "Paris is big. <hl> It is old. <hl>");
  CHECK(encode_ae_input(ctx, 1, cfg, true) == "extract answer: Paris is big. <hl> It is old. <hl>");
  CHECK_THROWS_AS(encode_ae_input(ctx, 2, cfg, false), RangeError);
}

TEST_CASE("encode_qg_input highlights the chosen occurrence") {
  const auto ctx = Context::from_text("c", "Paris is big. Paris is old.");
  const EncodingConfig cfg;
  CHECK(encode_qg_input(ctx, "Paris", 0, cfg, false) == "<hl> Paris <hl> is big. Paris is old.");
  CHECK(encode_qg_input(ctx, "Paris", 1, cfg, true) ==
        "generate question: Paris is big. <hl> Paris <hl> is old.");
  CHECK_THROWS_AS(encode_qg_input(ctx, "Paris", 2, cfg, false), NotFoundError);
  CHECK_THROWS_AS(encode_qg_input(ctx, "London", 0, cfg, false), NotFoundError);
  // Inside a word the highlight still gets its outer spaces.
  CHECK(encode_qg_input(ctx, "ari", 0, cfg, false) == "P <hl> ari <hl> s is big. Paris is old.");
}

TEST_CASE("find_occurrences counts overlapping matches") {
  CHECK(find_occurrences("aaaa", "aa") == std::vector<std::size_t>{0, 1, 2});
  CHECK(find_occurrences("abc", "").empty());
  CHECK(find_occurrences("abc", "d").empty());
}

TEST_CASE("flatten_pairs and parse_flat examples") {
  const EncodingConfig cfg;
  const std::vector<QAPair> pairs = {QAPair("Who?", "Ann", Strategy::end2end),
                                     QAPair("When?", "1990", Strategy::end2end)};
  const auto flat = flatten_pairs(pairs, cfg);
  CHECK(flat == "question: Who?, answer: Ann | question: When?, answer: 1990");
  CHECK(count_of(flat, "|") == 1);
  const auto parsed = parse_flat(flat, cfg);
  CHECK(parsed.pairs == pairs);
  CHECK(parsed.dropped_segments == 0);

  CHECK_THROWS_AS(flatten_pairs({}, cfg), EmptyInputError);
  CHECK_THROWS_AS(flatten_pairs({QAPair("a, answer: b", "c")}, cfg), ValidationError);
}

TEST_CASE("parse_flat tolerates malformed output") {
  const EncodingConfig cfg;
  auto r = parse_flat("question: A?, answer: x | garbage | question: no answer | | question: B?, answer:y", cfg);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].question() == "A?");
  CHECK(r.pairs[1].question() == "B?");
  CHECK(r.pairs[1].answer() == "y");
  CHECK(r.dropped_segments == 2);

  r = parse_flat("", cfg);
  CHECK(r.pairs.empty());
  CHECK(r.dropped_segments == 0);

  r = parse_flat("question: , answer: x|question: q, answer: ", cfg);
  CHECK(r.pairs.empty());
  CHECK(r.dropped_segments == 2);

  // Answer is split at the first marker; duplicates collapse.
  r = parse_flat("question: q, answer: a, answer: b | question: q , answer: a, answer: b", cfg);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].answer() == "a, answer: b");
  CHECK(r.pairs[0].strategy() == Strategy::end2end);
}

TEST_CASE("parse_flat never throws on arbitrary text") {
  test_support::Rng rng(5);
  const EncodingConfig cfg;
  static const std::vector<std::string> kPieces = {"question:", ", answer:", "|", " | ", "x", " ",
                                                   "?", "\n", "é", "\xff", "answer", ","};
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    for (int i = rng.uniform(0, 20); i > 0; --i) s += kPieces[rng.uniform(0, 11)];
    CAPTURE(s);
    ParseResult r;
    CHECK_NOTHROW(r = parse_flat(s, cfg));
    for (const auto& p : r.pairs) {
      CHECK(p.question() == utf8::trim(p.question()));
      CHECK(p.answer().find('|') == std::string::npos);
    }
  }
}

TEST_CASE("round trip on randomized pair lists") {
  test_support::Rng rng(2024);
  const EncodingConfig cfg;
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pairs = test_support::random_pairs(rng);
    const auto parsed = parse_flat(flatten_pairs(pairs, cfg), cfg);
    CHECK(parsed.pairs == pairs);
    CHECK(parsed.dropped_segments == 0);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("highlight encodings contain exactly two tokens and remove cleanly") {
  test_support::Rng rng(99);
  const EncodingConfig cfg;
  for (int trial = 0; trial < 300; ++trial) {
    const auto text = test_support::random_paragraph(rng);
    const auto ctx = Context::from_text("c", text);
    CAPTURE(text);
    for (std::size_t i = 0; i < ctx.sentence_count(); ++i) {
      const auto enc = encode_ae_input(ctx, i, cfg, false);
      CHECK(count_of(enc, cfg.highlight_token) == 2);
      CHECK(remove_highlights(enc, cfg) == text);
      const auto prefixed = encode_ae_input(ctx, i, cfg, true);
      CHECK(remove_highlights(prefixed.substr(cfg.ae_prefix.size()), cfg) == text);
    }
    // Whole-word answers.
    std::vector<std::pair<std::size_t, std::size_t>> words;
    for (std::size_t p = 0; p < text.size();) {
      while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      const auto b = p;
      while (p < text.size() && !std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      if (p > b) words.emplace_back(b, p);
    }
    if (words.empty()) continue;
    const auto [b, e] = words[rng.uniform(0, static_cast<int>(words.size()) - 1)];
    const auto answer = text.substr(b, e - b);
    const auto hits = find_occurrences(text, answer);
    const auto k = static_cast<std::size_t>(std::find(hits.begin(), hits.end(), b) - hits.begin());
    const auto enc = encode_qg_input(ctx, answer, k, cfg, false);
    CHECK(count_of(enc, cfg.highlight_token) == 2);
    CHECK(remove_highlights(enc, cfg) == text);
    CHECK(enc.find("<hl> " + answer + " <hl>") != std::string::npos);
  }
}

TEST_CASE("truncate_input keeps the character budget") {
  EncodingConfig cfg;
  cfg.max_input_tokens = 3;
  CHECK(cfg.input_char_budget() == 12);
  CHECK(truncate_input("ééééééééééééééé", cfg) == "éééééééééééé");
  CHECK(truncate_input("short", cfg) == "short");
}

TEST_CASE("length limits default to 512/256/32") {
  const EncodingConfig cfg;
  CHECK(cfg.max_input_tokens == 512);
  CHECK(cfg.max_output_tokens_e2e == 256);
  CHECK(cfg.max_output_tokens_short == 32);
}

TEST_CASE("EncodingConfig key-value round trip") {
  EncodingConfig cfg;
  cfg.pair_separator = " || ";
  cfg.max_input_tokens = 128;
  const auto text = format_key_values(cfg.to_key_values());
  const auto back = EncodingConfig::from_key_values(parse_key_values(text));
  CHECK(back.pair_separator == " || ");
  CHECK(back.max_input_tokens == 128);
  CHECK(back.question_marker == "question: ");
  CHECK_THROWS_AS(EncodingConfig::from_key_values({{"bogus", "1"}}), ValidationError);
  CHECK_THROWS_AS(EncodingConfig::from_key_values({{"max_input_tokens", "x"}}), ValidationError);
  CHECK_THROWS_AS(EncodingConfig::from_key_values({{"answer_marker", "question: "}}),
                  ValidationError);
}

TEST_CASE("key-value parser") {
  const auto kv = parse_key_values("# c\nepochs = 3\nsep = \" | \"  # trailing\n\nlr=1e-4\n");
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("sep") == " | ");
  CHECK(kv.at("lr") == "1e-4");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ValidationError);
}
