#include "qag/extrinsic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>

#include "qag/errors.hpp"
#include "qag/sampling.hpp"

namespace qag {

using nlohmann::json;

std::string domain_of(const Context& context) { return context.domain().value_or("default"); }

SynthesisResult synthesize_dataset(const std::vector<Context>& contexts,
                                   const QagGenerator& generator, Split split) {
  SynthesisResult result{QAGDataset(split), {}, 0, 0, 0, 0};
  for (const auto& ctx : contexts) {
    auto outcome = generator.run(ctx);
    result.pairs_per_domain[domain_of(ctx)] += outcome.pairs.size();
    result.backend_calls += outcome.backend_calls;
    result.dropped_segments += outcome.dropped_segments;
    result.dropped_answers += outcome.dropped_answers;
    ++result.contexts;
    result.dataset.add(ctx, std::move(outcome.pairs));
  }
  return result;
}

// ---------------------------------------------------------------------------

ScorePair evaluate(const Reader& reader, const std::vector<ReaderExample>& test_set) {
  std::map<std::string, std::string> preds;
  for (const auto& e : test_set) {
    if (!preds.emplace(e.id, reader.answer(e.context, e.question)).second) {
      throw ValidationError("duplicate test id " + e.id);
    }
  }
  return corpus_scores(preds, gold_answers(test_set));
}

TrainedReader train_reader(const QAGDataset& train, const QAGDataset& validation,
                           const ReaderTrainer& trainer, const FinetuneConfig& base,
                           const ReaderGrid& grid) {
  TrainedReader out;
  const auto train_examples = reader_examples_from(train, &out.dropped_pairs);
  if (train_examples.empty()) {
    throw EmptyInputError("no span-aligned training pairs (" + std::to_string(out.dropped_pairs) +
                          " dropped)");
  }
  const auto val_examples = reader_examples_from(validation);

  std::vector<FinetuneConfig> candidates;
  if (!val_examples.empty()) {
    for (double lr : grid.learning_rates) {
      for (int epochs : grid.epochs) {
        FinetuneConfig c = base;
        c.learning_rate = lr;
        c.epochs = epochs;
        candidates.push_back(c);
      }
    }
  }
  if (candidates.empty()) {
    base.validate();
    out.reader = trainer.train(train_examples, base);
    out.config = base;
    if (!val_examples.empty()) out.validation = evaluate(*out.reader, val_examples);
    return out;
  }
  for (const auto& c : candidates) {
    c.validate();
    auto reader = trainer.train(train_examples, c);
    const auto score = evaluate(*reader, val_examples);
    out.grid.push_back({c, score});
    if (!out.reader || score.f1 > out.validation.f1) {
      out.reader = std::move(reader);
      out.config = c;
      out.validation = score;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SampleStatistics mean_with_ci95(const std::vector<double>& values) {
  if (values.size() < 2) throw ValidationError("need at least two values for an interval");
  SampleStatistics s;
  const auto n = static_cast<double>(values.size());
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
    s.mean = values[0];
    s.ci95 = {s.mean, s.mean};
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  const double half = 1.96 * std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
  s.ci95 = {s.mean - half, s.mean + half};
  return s;
}

QAGDataset downsample_pairs(const QAGDataset& dataset, std::size_t target, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  const auto& entries = dataset.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (std::size_t k = 0; k < entries[e].pairs.size(); ++k) flat.emplace_back(e, k);
  }
  std::vector<std::vector<QAPair>> kept(entries.size());
  for (auto i : sample_without_replacement(flat.size(), target, seed)) {
    kept[flat[i].first].push_back(entries[flat[i].first].pairs[flat[i].second]);
  }
  QAGDataset out(dataset.split());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    if (!kept[e].empty()) out.add(entries[e].context, std::move(kept[e]));
  }
  return out;
}

namespace {

// Decorrelates the validation draw from the training draw of a trial.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

DownsampleResult downsample_eval(const QAGDataset& train, const QAGDataset& validation,
                                 std::pair<std::size_t, std::size_t> target_sizes, int trials,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ReaderTrainer& trainer, const FinetuneConfig& cfg,
                                 const std::vector<ReaderExample>& test_set,
                                 const ReaderGrid& grid) {
  if (trials < 2) throw ValidationError("downsampling needs at least 2 trials");
  if (seeds.size() != static_cast<std::size_t>(trials)) {
    throw ValidationError("expected " + std::to_string(trials) + " seeds, got " +
                          std::to_string(seeds.size()));
  }
  DownsampleResult result;
  result.trials = trials;
  result.undersized = train.pair_count() < target_sizes.first;
  std::vector<double> f1s;
  std::vector<double> ems;
  for (int t = 0; t < trials; ++t) {
    const auto seed = seeds[static_cast<std::size_t>(t)];
    const auto train_sample = downsample_pairs(train, target_sizes.first, seed);
    const auto val_sample = downsample_pairs(validation, target_sizes.second, mix(seed));
    result.train_pairs_used = train_sample.pair_count();
    result.validation_pairs_used = val_sample.pair_count();
    FinetuneConfig trial_cfg = cfg;
    trial_cfg.seed = seed == 0 ? 1 : seed;
    const auto trained = train_reader(train_sample, val_sample, trainer, trial_cfg, grid);
    const auto score = evaluate(*trained.reader, test_set);
    result.per_trial.push_back(score);
    f1s.push_back(score.f1);
    ems.push_back(score.exact_match);
  }
  const auto f1 = mean_with_ci95(f1s);
  const auto em = mean_with_ci95(ems);
  result.mean_f1 = f1.mean;
  result.ci95_f1 = f1.ci95;
  result.mean_em = em.mean;
  result.ci95_em = em.ci95;
  return result;
}

// ---------------------------------------------------------------------------

StrategyRun measure_strategy(const QagGenerator& generator, const std::vector<Context>& contexts,
                             std::size_t gold_pairs) {
  // A handle bound twice (e.g. one model passed as both pipeline stages) is
  // counted once.
  std::set<const Backend*> distinct;
  for (const auto& h : generator.handles()) distinct.insert(h.get());
  auto served = [&] {
    std::size_t n = 0;
    for (const auto* b : distinct) n += b->requests_served();
    return n;
  };
  StrategyRun run;
  run.strategy = generator.strategy();
  run.model_count = generator.model_count();
  run.gold_pairs = gold_pairs;
  const auto before = served();
  std::size_t sentences = 0;
  for (const auto& ctx : contexts) {
    run.generated_pairs += generator.run(ctx).pairs.size();
    sentences += ctx.sentence_count();
    ++run.paragraphs;
  }
  run.backend_calls = served() - before;
  if (run.paragraphs) {
    run.average_sentences = static_cast<double>(sentences) / static_cast<double>(run.paragraphs);
  }
  return run;
}

ResourceProfile profile_resources(const StrategyRun& run) {
  ResourceProfile p;
  p.model_count = run.strategy == Strategy::pipeline ? 2 : 1;
  if (run.paragraphs) {
    p.backend_calls_per_paragraph =
        static_cast<double>(run.backend_calls) / static_cast<double>(run.paragraphs);
  }
  if (run.gold_pairs) {
    p.pairs_per_gold_pair =
        static_cast<double>(run.generated_pairs) / static_cast<double>(run.gold_pairs);
  }
  return p;
}

std::string format_multiple(double ratio) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", ratio);
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
  return s + "x";
}

std::string format_profile_table(const std::vector<std::pair<Strategy, ResourceProfile>>& rows,
                                 const ResourceProfile& reference) {
  auto ratio = [](double v, double ref) { return ref > 0 ? format_multiple(v / ref) : "n/a"; };
  std::ostringstream out;
  out << "| Strategy | Cost | Memory | Generated QA |\n|---|---|---|---|\n";
  for (const auto& [strategy, p] : rows) {
    out << "| " << to_string(strategy) << " | "
        << ratio(p.backend_calls_per_paragraph, reference.backend_calls_per_paragraph) << " | "
        << ratio(p.model_count, reference.model_count) << " | "
        << ratio(p.pairs_per_gold_pair, reference.pairs_per_gold_pair) << " |\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

ScorePair average_scores(const std::map<std::string, ScorePair>& per_domain) {
  ScorePair avg;
  if (per_domain.empty()) return avg;
  for (const auto& [_, s] : per_domain) {
    avg.f1 += s.f1;
    avg.exact_match += s.exact_match;
  }
  avg.f1 /= static_cast<double>(per_domain.size());
  avg.exact_match /= static_cast<double>(per_domain.size());
  return avg;
}

EvalReport run_extrinsic_eval(const std::map<std::string, DomainData>& domains,
                              const ReaderTrainer& trainer, const FinetuneConfig& base,
                              const ReaderGrid& grid, std::string label) {
  struct DomainResult {
    ScorePair score;
    FinetuneConfig config;
  };
  // Domains are independent; each one trains its own reader.
  std::vector<std::pair<std::string, std::future<DomainResult>>> jobs;
  for (const auto& [domain, data] : domains) {
    jobs.emplace_back(domain, std::async(std::launch::async, [&, d = &data] {
                        const auto trained = train_reader(d->train, d->validation, trainer, base, grid);
                        return DomainResult{evaluate(*trained.reader, d->test), trained.config};
                      }));
  }
  EvalReport report;
  report.label = std::move(label);
  for (auto& [domain, job] : jobs) {
    auto r = job.get();
    const auto& data = domains.at(domain);
    report.per_domain[domain] = r.score;
    report.reader_configs[domain] = r.config;
    report.dataset_sizes[domain] = {reader_examples_from(data.train).size(),
                                    reader_examples_from(data.validation).size()};
  }
  report.average = average_scores(report.per_domain);
  return report;
}

std::vector<std::string> ordered_domains(const std::vector<std::string>& domains) {
  static const std::vector<std::string> kCanonical = {"amazon", "wiki", "nyt", "reddit"};
  std::vector<std::string> out;
  std::set<std::string> rest(domains.begin(), domains.end());
  for (const auto& d : kCanonical) {
    if (rest.erase(d)) out.push_back(d);
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

std::string display_domain(const std::string& domain) {
  if (domain == "nyt") return "NYT";
  if (domain.empty()) return domain;
  std::string out = domain;
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

namespace {

json score_json(const ScorePair& s) {
  return {{"f1", 100.0 * s.f1}, {"exact_match", 100.0 * s.exact_match},
          {"cell", format_score_cell(s)}};
}

}  // namespace

json report_to_json(const EvalReport& report) {
  json j;
  j["label"] = report.label;
  j["average"] = score_json(report.average);
  j["per_domain"] = json::object();
  for (const auto& [d, s] : report.per_domain) j["per_domain"][d] = score_json(s);
  j["dataset_sizes"] = json::object();
  for (const auto& [d, s] : report.dataset_sizes) {
    j["dataset_sizes"][d] = {{"train", s.train}, {"validation", s.validation}};
  }
  j["reader_configs"] = json::object();
  for (const auto& [d, c] : report.reader_configs) {
    j["reader_configs"][d] = {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}};
  }
  if (report.resource_profile) {
    const auto& p = *report.resource_profile;
    j["resource_profile"] = {{"backend_calls_per_paragraph", p.backend_calls_per_paragraph},
                             {"model_count", p.model_count},
                             {"pairs_per_gold_pair", p.pairs_per_gold_pair}};
  } else {
    j["resource_profile"] = nullptr;
  }
  return j;
}

std::string report_to_markdown(const std::vector<EvalReport>& rows) {
  std::vector<std::string> all;
  for (const auto& r : rows) {
    for (const auto& [d, _] : r.per_domain) all.push_back(d);
  }
  const auto domains = ordered_domains(all);
  std::ostringstream out;
  out << "| Approach | Average |";
  for (const auto& d : domains) out << ' ' << display_domain(d) << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < domains.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << r.label << " | " << format_score_cell(r.average) << " |";
    for (const auto& d : domains) {
      auto it = r.per_domain.find(d);
      out << ' ' << (it == r.per_domain.end() ? std::string("-") : format_score_cell(it->second))
          << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::string downsample_to_csv(const std::map<std::string, DownsampleResult>& per_domain) {
  std::ostringstream out;
  out << "trial,domain,f1,em\n";
  char buf[128];
  for (const auto& d : ordered_domains([&] {
         std::vector<std::string> v;
         for (const auto& [k, _] : per_domain) v.push_back(k);
         return v;
       }())) {
    const auto& r = per_domain.at(d);
    for (std::size_t t = 0; t < r.per_trial.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%zu,%s,%.4f,%.4f\n", t, d.c_str(),
                    100.0 * r.per_trial[t].f1, 100.0 * r.per_trial[t].exact_match);
      out << buf;
    }
  }
  return out.str();
}

json downsample_to_json(const DownsampleResult& r) {
  return {{"trials", r.trials},
          {"mean_f1", 100.0 * r.mean_f1},
          {"mean_em", 100.0 * r.mean_em},
          {"ci95_f1", {100.0 * r.ci95_f1.lo, 100.0 * r.ci95_f1.hi}},
          {"ci95_em", {100.0 * r.ci95_em.lo, 100.0 * r.ci95_em.hi}},
          {"undersized", r.undersized},
          {"train_pairs_used", r.train_pairs_used},
          {"validation_pairs_used", r.validation_pairs_used}};
}

}  // namespace qag
