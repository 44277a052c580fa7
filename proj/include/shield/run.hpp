#pragma once

// JSON run configuration and the K_ref sweep harness shared by the CLI and
// the acceptance suite.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shield/dataset.hpp"
#include "shield/model.hpp"

namespace shield {

struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  AblationConfig ablation;
  unsigned eval_threads = 1;
};

// Flat JSON object; every key is optional and unknown keys are rejected.
// Keys: the SynthConfig and TrainConfig field names (learning_rate, beta1,
// beta2, epsilon for Adam; "seed" sets both), "ablation", "activation",
// "selection", "eval_threads". Throws ConfigError with the parser's position
// for malformed JSON.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

struct SweepRow {
  std::size_t k_ref = 0;
  std::size_t cross_edges = 0;  // |E_tp| of the first training sample
  std::size_t best_epoch = 0;
  Metrics test;
};

// Trains and evaluates once per K_ref value, in the given order.
std::vector<SweepRow> sweep_k(const std::vector<MemeDump>& train_set,
                              const std::vector<MemeDump>& valid_set,
                              const std::vector<MemeDump>& test_set, const RunConfig& cfg,
                              const std::vector<std::size_t>& k_values);

nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows);
std::string format_sweep_table(const std::vector<SweepRow>& rows);

// "1,4,8,16" -> {1, 4, 8, 16}. Throws ConfigError on empty or non-positive items.
std::vector<std::size_t> parse_k_values(std::string_view list);

}  // namespace shield
