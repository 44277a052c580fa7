#pragma once

#include <array>
#include <cstddef>
#include <span>

#include <json.hpp>

namespace shield {

// 1 iff sigmoid(logit) >= 0.5, i.e. iff logit >= 0.
int predict(double logit) noexcept;

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // actual members of the class
};

struct F1Report {
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 2> per_class{};
};

struct Metrics {
  double auc = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 2> per_class{};
  std::size_t n = 0;
};

// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counting one half. Throws UndefinedMetricError unless both classes are
// present.
double auc(std::span<const int> labels, std::span<const double> scores);

double accuracy(std::span<const int> labels, std::span<const int> predictions);

// Per-class F1 = 2 tp / (2 tp + fp + fn), 0 when the class is neither
// predicted nor present. Macro-F1 is the unweighted mean over classes 0 and 1.
F1Report macro_f1(std::span<const int> labels, std::span<const int> predictions);

// Scores are sigmoid(logit), predictions predict(logit).
Metrics compute_metrics(std::span<const int> labels, std::span<const double> logits);

nlohmann::ordered_json to_json(const Metrics& m);

}  // namespace shield
