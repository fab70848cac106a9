#include "qag/train_types.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "qag/errors.hpp"

namespace qag {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::ae: return "ae";
    case Task::qg: return "qg";
    case Task::end2end: return "end2end";
  }
  return "ae";
}

Task parse_task(std::string_view name) {
  for (auto t : {Task::ae, Task::qg, Task::end2end}) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("unknown task: " + std::string(name));
}

void FinetuneConfig::validate() const {
  if (epochs <= 0) throw ValidationError("epochs must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (!(label_smoothing >= 0 && label_smoothing < 1)) {
    throw ValidationError("label_smoothing must be in [0, 1)");
  }
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (seed == 0) throw ValidationError("seed must be positive");
}

namespace {

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ValidationError("config key " + key + ": not a number: " + v);
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw ValidationError("config key " + key + ": not an integer: " + v);
  return out;
}

}  // namespace

KeyValues FinetuneConfig::to_key_values() const {
  return {{"epochs", std::to_string(epochs)},
          {"learning_rate", format_double(learning_rate)},
          {"label_smoothing", format_double(label_smoothing)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)}};
}

FinetuneConfig FinetuneConfig::from_key_values(const KeyValues& kv, FinetuneConfig base) {
  for (const auto& [key, value] : kv) {
    if (key == "epochs") base.epochs = static_cast<int>(to_int(key, value));
    else if (key == "learning_rate") base.learning_rate = to_double(key, value);
    else if (key == "label_smoothing") base.label_smoothing = to_double(key, value);
    else if (key == "batch_size") base.batch_size = static_cast<int>(to_int(key, value));
    else if (key == "seed") base.seed = static_cast<std::uint64_t>(to_int(key, value));
  }
  return base;
}

}  // namespace qag
