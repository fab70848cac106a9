#include "qag/backend.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "qag/dataset_io.hpp"
#include "qag/errors.hpp"
#include "qag/hf_backend.hpp"
#include "qag/utf8.hpp"

namespace qag {

void GenerationRequest::validate() const {
  if (max_output_tokens < 1) throw ValidationError("max_output_tokens must be >= 1");
  if (num_beams < 1) throw ValidationError("num_beams must be >= 1");
  if (num_return_sequences < 1 || num_return_sequences > num_beams) {
    throw ValidationError("num_return_sequences must be in [1, num_beams]");
  }
}

std::vector<GenerationResult> Backend::generate(std::span<const GenerationRequest> requests) {
  if (requests.empty()) throw EmptyInputError("generate called with no requests");
  const auto limit = max_input_tokens();
  for (std::size_t i = 0; i < requests.size(); ++i) {
    try {
      requests[i].validate();
    } catch (const ValidationError& e) {
      throw BackendError(i, e.what());
    }
    if (limit) {
      const auto n = count_tokens(requests[i].input_text);
      if (n > *limit) {
        throw BackendError(i, "input has " + std::to_string(n) + " tokens, limit is " +
                                  std::to_string(*limit));
      }
    }
  }
  auto results = do_generate(requests);
  requests_served_ += requests.size();
  if (results.size() != requests.size()) {
    throw BackendError(0, identity() + " returned " + std::to_string(results.size()) +
                              " results for " + std::to_string(requests.size()) + " requests");
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& outs = results[i].outputs;
    if (outs.size() != static_cast<std::size_t>(requests[i].num_return_sequences)) {
      throw BackendError(i, "wrong number of returned sequences");
    }
    for (std::size_t k = 1; k < outs.size(); ++k) {
      if (outs[k].log_likelihood > outs[k - 1].log_likelihood) {
        throw BackendError(i, "returned sequences are not ordered by score");
      }
    }
  }
  return results;
}

TrainingReport Backend::train(std::span<const TrainExample>, std::span<const TrainExample>,
                              const FinetuneConfig&) {
  throw Error(identity() + " does not support training");
}

void Backend::save(const std::string&) const {}

std::size_t Backend::count_tokens(std::string_view text) const {
  std::size_t n = 0;
  bool in_word = false;
  for (char32_t c : utf8::decode(text)) {
    const bool space = utf8::is_space(c);
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(std::map<std::string, std::vector<std::string>> table,
                         std::string fallback, std::optional<std::size_t> max_input_tokens,
                         std::string source)
    : table_(std::move(table)),
      fallback_(std::move(fallback)),
      max_input_tokens_(max_input_tokens),
      source_(std::move(source)) {}

std::shared_ptr<MockBackend> MockBackend::from_json(const nlohmann::json& fixture,
                                                    std::string source) {
  std::map<std::string, std::vector<std::string>> table;
  std::string fallback;
  std::optional<std::size_t> limit;
  try {
    if (fixture.contains("map")) {
      for (const auto& [input, value] : fixture.at("map").items()) {
        auto& outputs = table[input];
        if (value.is_array()) {
          for (const auto& v : value) outputs.push_back(v.get<std::string>());
        } else {
          outputs.push_back(value.get<std::string>());
        }
      }
    }
    if (fixture.contains("fallback")) fallback = fixture.at("fallback").get<std::string>();
    if (fixture.contains("max_input_tokens")) {
      limit = fixture.at("max_input_tokens").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad mock fixture " + source + ": " + e.what());
  }
  return std::make_shared<MockBackend>(std::move(table), std::move(fallback), limit,
                                       std::move(source));
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
  nlohmann::json fixture;
  try {
    fixture = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad mock fixture " + path + ": " + e.what());
  }
  return from_json(fixture, "mock:" + path);
}

nlohmann::json MockBackend::to_json() const {
  nlohmann::json j;
  j["map"] = nlohmann::json::object();
  for (const auto& [k, v] : table_) j["map"][k] = v;
  j["fallback"] = fallback_;
  if (max_input_tokens_) j["max_input_tokens"] = *max_input_tokens_;
  return j;
}

std::vector<GenerationResult> MockBackend::do_generate(
    std::span<const GenerationRequest> requests) {
  constexpr double kFallbackScore = -std::numeric_limits<double>::infinity();
  std::vector<GenerationResult> results;
  results.reserve(requests.size());
  for (const auto& req : requests) {
    GenerationResult r;
    const auto want = static_cast<std::size_t>(req.num_return_sequences);
    if (auto it = table_.find(req.input_text); it != table_.end()) {
      for (std::size_t i = 0; i < it->second.size() && r.outputs.size() < want; ++i) {
        r.outputs.push_back({it->second[i], -static_cast<double>(i)});
      }
    }
    while (r.outputs.size() < want) r.outputs.push_back({fallback_, kFallbackScore});
    results.push_back(std::move(r));
  }
  return results;
}

TrainingReport MockBackend::train(std::span<const TrainExample> train,
                                  std::span<const TrainExample> validation,
                                  const FinetuneConfig& cfg) {
  training_calls_.push_back({train.size(), validation.size(), cfg});
  TrainingReport report;
  report.examples = train.size();
  return report;
}

void MockBackend::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  write_file((std::filesystem::path(dir) / "mock_backend.json").string(), to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------

bool is_registry_model(std::string_view name) {
  static constexpr std::string_view kNames[] = {
      "t5-small", "t5-base", "t5-large", "facebook/bart-base", "facebook/bart-large",
      "bart-base", "bart-large"};
  for (auto n : kNames) {
    if (n == name) return true;
  }
  return false;
}

ModelHandle load_backend(std::string_view spec) {
  if (spec.rfind("mock:", 0) == 0) {
    const auto path = spec.substr(5);
    if (path.empty()) return std::make_shared<MockBackend>();
    return MockBackend::from_file(std::string(path));
  }
  if (spec.rfind("hf:", 0) == 0) return std::make_shared<HfBackend>(std::string(spec.substr(3)));
  if (is_registry_model(spec)) {
    std::string name(spec);
    if (name.rfind("bart-", 0) == 0) name = "facebook/" + name;
    return std::make_shared<HfBackend>(name);
  }
  throw ValidationError("unknown backend spec: " + std::string(spec));
}

}  // namespace qag
