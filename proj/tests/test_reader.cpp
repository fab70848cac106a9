#include <sstream>

#include "doctest.h"
#include "qag/errors.hpp"
#include "qag/reader.hpp"

using namespace qag;

TEST_CASE("reader JSONL accepts both answer layouts") {
  std::stringstream in(
      R"({"id": "a", "context": "C.", "question": "Q?", "answers": ["x", "y"]})" "\n"
      R"({"id": 7, "context": "C.", "question": "Q?", "answers": {"text": ["z"]}})" "\n");
  const auto ex = read_reader_jsonl(in);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].answers == std::vector<std::string>{"x", "y"});
  CHECK(ex[1].id == "7");
  std::stringstream out;
  write_reader_jsonl(out, ex);
  const auto back = read_reader_jsonl(out);
  CHECK(back[1].answers == std::vector<std::string>{"z"});

  std::stringstream dup(R"({"id": "a", "context": "C.", "question": "Q?", "answers": []})" "\n"
                        R"({"id": "a", "context": "C.", "question": "Q?", "answers": []})");
  CHECK_THROWS_WITH_AS(read_reader_jsonl(dup), doctest::Contains("line 2"), ValidationError);
}

TEST_CASE("reader_examples_from keeps span-aligned pairs") {
  QAGDataset ds;
  ds.add(Context::from_text("c", "Ann lives in Rome."),
         {QAPair("Where?", "Rome"), QAPair("Who?", "Bob"), QAPair("What?", "Ann")});
  std::size_t dropped = 0;
  const auto ex = reader_examples_from(ds, &dropped);
  CHECK(dropped == 1);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].id == "c#0");
  CHECK(ex[1].id == "c#2");
}

TEST_CASE("mock reader memorizes questions") {
  const auto r = MockReaderTrainer().train({{"1", "Ann lives in Rome.", "Where  does Ann live?", {"Rome"}}}, {});
  CHECK(r->answer("anything", "Where does Ann live?") == "Rome");
  CHECK(r->answer("anything", "Who?") == "");
}

TEST_CASE("lexical reader returns a span of the context") {
  const std::vector<ReaderExample> train = {
      {"1", "The tower was built in 1889.", "When was the tower built?", {"1889"}},
      {"2", "Ann met Bob in Paris.", "Who did Ann meet?", {"Bob"}},
      {"3", "The bridge opened in 1932.", "When did the bridge open?", {"1932"}}};
  const auto r = LexicalReaderTrainer().train(train, {});
  const std::string ctx = "Rain fell all day. The museum opened in 1901. Nobody came.";
  const auto a = r->answer(ctx, "When did the museum open?");
  CHECK(ctx.find(a) != std::string::npos);
  CHECK(a == "1901");
  CHECK(r->answer("", "When?") == "");
}

TEST_CASE("make_reader_trainer") {
  CHECK(make_reader_trainer("mock")->identity() == "mock");
  CHECK(make_reader_trainer("lexical")->identity() == "lexical");
  CHECK_THROWS_AS(make_reader_trainer("distilbert"), ValidationError);
}
