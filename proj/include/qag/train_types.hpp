#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "qag/kv_config.hpp"

namespace qag {

enum class Task { ae, qg, end2end };

std::string_view to_string(Task t);
Task parse_task(std::string_view name);

struct TrainExample {
  std::string input_text;
  std::string target_text;
  Task task = Task::ae;

  friend bool operator==(const TrainExample&, const TrainExample&) = default;
};

// The four published fine-tuning knobs plus the seed that drives every
// random choice of a run. Everything else is left to the backend.
struct FinetuneConfig {
  int epochs = 1;
  double learning_rate = 1e-4;
  double label_smoothing = 0.0;
  int batch_size = 1;
  std::uint64_t seed = 42;

  // Throws ValidationError unless all values are positive and
  // label_smoothing is in [0, 1).
  void validate() const;

  KeyValues to_key_values() const;
  // Applies the recognised keys of `kv` on top of `base`.
  static FinetuneConfig from_key_values(const KeyValues& kv, FinetuneConfig base);

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

}  // namespace qag
