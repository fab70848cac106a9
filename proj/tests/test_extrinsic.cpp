#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "mock_corpus.hpp"
#include "qag/errors.hpp"
#include "qag/extrinsic.hpp"

using namespace qag;
using test_support::mock;

namespace {

// Gold dataset with one pair per sentence of each mock context.
QAGDataset gold_dataset(const test_support::MockCorpus& corpus, Split split) {
  QAGDataset ds(split);
  for (std::size_t i = 0; i < corpus.contexts.size(); ++i) ds.add(corpus.contexts[i], corpus.gold[i]);
  return ds;
}

std::vector<ReaderExample> test_set_from(const QAGDataset& ds) { return reader_examples_from(ds); }

// Reader that answers correctly only when trained with one specific config.
class RiggedTrainer : public ReaderTrainer {
 public:
  double good_lr;
  int good_epochs;
  RiggedTrainer(double lr, int epochs) : good_lr(lr), good_epochs(epochs) {}

  std::unique_ptr<Reader> train(const std::vector<ReaderExample>& ex,
                                const FinetuneConfig& cfg) const override {
    const bool good = cfg.learning_rate == good_lr && cfg.epochs == good_epochs;
    auto inner = MockReaderTrainer().train(ex, cfg);
    struct R : Reader {
      std::unique_ptr<Reader> inner;
      bool good;
      std::string answer(std::string_view c, std::string_view q) const override {
        return good ? inner->answer(c, q) : std::string("wrong");
      }
    };
    auto r = std::make_unique<R>();
    r->inner = std::move(inner);
    r->good = good;
    return r;
  }
  std::string identity() const override { return "rigged"; }
};

}  // namespace

TEST_CASE("synthesize_dataset over four contexts") {
  const auto corpus = test_support::make_mock_corpus(4, 1, 3, 3, {}, "wiki");
  const auto gen = QagGenerator::end2end(mock(corpus.end2end_fixture));
  const auto result = synthesize_dataset(corpus.contexts, gen, Split::train);
  CHECK(result.dataset.size() == 4);
  CHECK(result.contexts == 4);
  CHECK(result.backend_calls == 4);
  CHECK(result.pairs_per_domain.at("wiki") == result.dataset.pair_count());
}

TEST_CASE("pipeline yields at least as many pairs as end2end on three-sentence contexts") {
  const auto corpus = test_support::make_mock_corpus(10, 2, 3, 3);
  const auto pipe = synthesize_dataset(
      corpus.contexts, QagGenerator::pipeline(mock(corpus.ae_fixture), mock(corpus.qg_fixture)),
      Split::train);
  const auto multi = synthesize_dataset(
      corpus.contexts, QagGenerator::multitask(mock(corpus.multitask_fixture)), Split::train);
  const auto e2e = synthesize_dataset(
      corpus.contexts, QagGenerator::end2end(mock(corpus.end2end_fixture)), Split::train);
  CHECK(pipe.dataset.pair_count() == 30);
  CHECK(multi.dataset.pair_count() == pipe.dataset.pair_count());
  CHECK(e2e.dataset.pair_count() == 20);
  CHECK(pipe.dataset.pair_count() > e2e.dataset.pair_count());
}

TEST_CASE("train_reader rejects datasets without span-aligned pairs") {
  QAGDataset ds;
  ds.add(Context::from_text("c", "Some text."), {QAPair("Q?", "elsewhere")});
  CHECK_THROWS_AS(train_reader(ds, ds, MockReaderTrainer(), FinetuneConfig{}), EmptyInputError);
}

TEST_CASE("grid search picks the strictly better configuration") {
  const auto corpus = test_support::make_mock_corpus(6, 4);
  const auto ds = gold_dataset(corpus, Split::train);
  const RiggedTrainer trainer(5e-5, 3);
  const auto trained = train_reader(ds, ds, trainer, FinetuneConfig{});
  CHECK(trained.grid.size() == 9);
  CHECK(trained.config.learning_rate == 5e-5);
  CHECK(trained.config.epochs == 3);
  CHECK(trained.validation.f1 == 1.0);
  for (const auto& point : trained.grid) {
    if (point.config.learning_rate != 5e-5 || point.config.epochs != 3) {
      CHECK(point.validation.f1 == 0.0);
    }
  }
}

TEST_CASE("mean_with_ci95") {
  const auto flat = mean_with_ci95(std::vector<double>(10, 0.5));
  CHECK(flat.mean == 0.5);
  CHECK(flat.ci95.lo == 0.5);
  CHECK(flat.ci95.hi == 0.5);
  // Oracle: mean 2.5, sample sd sqrt(5/3), half width 1.96 * sd / 2.
  const auto s = mean_with_ci95({1, 2, 3, 4});
  const double half = 1.96 * std::sqrt(5.0 / 3.0) / 2.0;
  CHECK(s.mean == 2.5);
  CHECK(s.ci95.lo == doctest::Approx(2.5 - half).epsilon(1e-12));
  CHECK(s.ci95.hi == doctest::Approx(2.5 + half).epsilon(1e-12));
  CHECK_THROWS_AS(mean_with_ci95({1.0}), ValidationError);
}

TEST_CASE("downsample_pairs draws without replacement") {
  QAGDataset ds;
  std::vector<QAPair> pairs;
  for (int i = 0; i < 10; ++i) pairs.emplace_back("Q" + std::to_string(i) + "?", "x");
  ds.add(Context::from_text("c", "x marks it."), pairs);
  const auto a = downsample_pairs(ds, 5, 11);
  CHECK(a.pair_count() == 5);
  CHECK(a == downsample_pairs(ds, 5, 11));
  std::set<std::string> qs;
  for (const auto& p : a.entries()[0].pairs) qs.insert(p.question());
  CHECK(qs.size() == 5);
  CHECK(downsample_pairs(ds, 50, 11).pair_count() == 10);
}

TEST_CASE("downsample_eval is reproducible and flags undersized data") {
  const auto corpus = test_support::make_mock_corpus(12, 5);
  const auto train = gold_dataset(corpus, Split::train);
  const auto test = test_set_from(train);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s * 101);
  const MockReaderTrainer trainer;
  const auto a = downsample_eval(train, train, {10, 5}, 10, seeds, trainer, {}, test);
  const auto b = downsample_eval(train, train, {10, 5}, 10, seeds, trainer, {}, test);
  CHECK(std::memcmp(&a.mean_f1, &b.mean_f1, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.mean_em, &b.mean_em, sizeof(double)) == 0);
  CHECK(a.per_trial == b.per_trial);
  CHECK(a.trials == 10);
  CHECK_FALSE(a.undersized);
  CHECK(a.train_pairs_used == 10);
  CHECK(a.ci95_f1.lo <= a.mean_f1);
  CHECK(a.mean_f1 <= a.ci95_f1.hi);
  // With a memorizing reader, F1 is the fraction of test questions sampled.
  CHECK(a.per_trial[0].f1 == doctest::Approx(10.0 / static_cast<double>(test.size())));

  const auto under = downsample_eval(train, train, {100000, 5}, 2, {1, 2}, trainer, {}, test);
  CHECK(under.undersized);
  CHECK(under.train_pairs_used == train.pair_count());
  // Whole dataset each trial: zero variance, degenerate interval.
  CHECK(under.ci95_f1.lo == under.mean_f1);
  CHECK(under.ci95_f1.hi == under.mean_f1);

  CHECK_THROWS_AS(downsample_eval(train, train, {10, 5}, 1, {1}, trainer, {}, test), ValidationError);
  CHECK_THROWS_AS(downsample_eval(train, train, {10, 5}, 3, {1, 2}, trainer, {}, test),
                  ValidationError);
}

TEST_CASE("resource profile on a five-sentence corpus") {
  const auto corpus = test_support::make_mock_corpus(8, 6, 5, 5);
  std::size_t gold = 0;
  for (const auto& g : corpus.gold) gold += g.size();
  const auto pipe = profile_resources(measure_strategy(
      QagGenerator::pipeline(mock(corpus.ae_fixture), mock(corpus.qg_fixture)), corpus.contexts, gold));
  const auto multi = profile_resources(measure_strategy(
      QagGenerator::multitask(mock(corpus.multitask_fixture)), corpus.contexts, gold));
  const auto e2e = profile_resources(
      measure_strategy(QagGenerator::end2end(mock(corpus.end2end_fixture)), corpus.contexts, gold));
  CHECK(pipe.backend_calls_per_paragraph == 10.0);
  CHECK(multi.backend_calls_per_paragraph == 10.0);
  CHECK(e2e.backend_calls_per_paragraph == 1.0);
  CHECK(pipe.model_count == 2);
  CHECK(multi.model_count == 1);
  CHECK(e2e.model_count == 1);
  CHECK(pipe.pairs_per_gold_pair == 1.0);
  CHECK(e2e.pairs_per_gold_pair == 0.6);
  const auto table = format_profile_table(
      {{Strategy::pipeline, pipe}, {Strategy::multitask, multi}, {Strategy::end2end, e2e}}, e2e);
  CHECK(table.find("| pipeline | 10x | 2x | 1.7x |") != std::string::npos);
  CHECK(table.find("| end2end | 1x | 1x | 1x |") != std::string::npos);
}

TEST_CASE("format_multiple") {
  CHECK(format_multiple(9.2) == "9.2x");
  CHECK(format_multiple(2.0) == "2x");
  CHECK(format_multiple(2.66) == "2.7x");
}

TEST_CASE("extrinsic report shape") {
  std::map<std::string, DomainData> domains;
  const char* names[] = {"reddit", "amazon", "nyt", "wiki"};
  for (int i = 0; i < 4; ++i) {
    const auto corpus = test_support::make_mock_corpus(3, 10 + i, 2, 3, {}, names[i]);
    DomainData d;
    d.train = gold_dataset(corpus, Split::train);
    d.validation = d.train;
    d.test = test_set_from(d.train);
    if (i == 0) d.test.push_back({"unseen", "Text.", "Unseen question?", {"Text"}});
    domains[names[i]] = std::move(d);
  }
  const auto report = run_extrinsic_eval(domains, MockReaderTrainer(), {}, {}, "Gold QA");
  CHECK(report.per_domain.size() == 4);
  CHECK(report.per_domain.at("amazon").f1 == 1.0);
  CHECK(report.per_domain.at("reddit").f1 < 1.0);
  double mean = 0;
  for (const auto& [_, s] : report.per_domain) mean += s.f1 / 4.0;
  CHECK(report.average.f1 == doctest::Approx(mean));
  CHECK(report.dataset_sizes.at("amazon").train == domains.at("amazon").train.pair_count());
  const auto md = report_to_markdown({report});
  CHECK(md.rfind("| Approach | Average | Amazon | Wiki | NYT | Reddit |\n", 0) == 0);
  CHECK(md.find("| Gold QA | ") != std::string::npos);
  const auto j = report_to_json(report);
  CHECK(j["per_domain"]["wiki"]["cell"] == "100.0/100.0");
  CHECK(j["resource_profile"].is_null());
}

TEST_CASE("downsample CSV layout") {
  DownsampleResult r;
  r.per_trial = {{0.5, 0.25}, {1.0, 1.0}};
  const auto csv = downsample_to_csv({{"wiki", r}});
  CHECK(csv == "trial,domain,f1,em\n0,wiki,50.0000,25.0000\n1,wiki,100.0000,100.0000\n");
}
