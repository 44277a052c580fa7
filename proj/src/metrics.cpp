#include "shield/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "shield/autodiff.hpp"
#include "shield/errors.hpp"

namespace shield {
namespace {

void check_labels(std::span<const int> labels, const char* what) {
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw DomainError(std::string(what) + ": labels must be 0 or 1, got " + std::to_string(y));
    }
  }
}

}  // namespace

int predict(double logit) noexcept { return logit >= 0.0 ? 1 : 0; }

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ShapeError("auc: labels and scores differ in length");
  check_labels(labels, "auc");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("auc: both classes must be present (positives=" +
                               std::to_string(positives) + ", negatives=" +
                               std::to_string(negatives) + ")");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the pair credit, kept integral so the result is exact.
  unsigned long long credit2 = 0;
  unsigned long long negatives_below = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    unsigned long long pos = 0, neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      (labels[order[end]] == 1 ? pos : neg) += 1;
      ++end;
    }
    credit2 += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    start = end;
  }
  return static_cast<double>(credit2) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double accuracy(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ShapeError("accuracy: length mismatch");
  if (labels.empty()) throw DomainError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == predictions[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

F1Report macro_f1(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ShapeError("macro_f1: length mismatch");
  if (labels.empty()) throw DomainError("macro_f1: empty input");
  check_labels(labels, "macro_f1");
  check_labels(predictions, "macro_f1");
  F1Report r;
  for (int cls = 0; cls < 2; ++cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool actual = labels[i] == cls;
      const bool predicted = predictions[i] == cls;
      tp += actual && predicted;
      fp += !actual && predicted;
      fn += actual && !predicted;
    }
    ClassMetrics& m = r.per_class[static_cast<std::size_t>(cls)];
    m.support = tp + fn;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const std::size_t denom = 2 * tp + fp + fn;
    m.f1 = denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
  }
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  return r;
}

Metrics compute_metrics(std::span<const int> labels, std::span<const double> logits) {
  if (labels.empty()) throw DomainError("compute_metrics: empty evaluation set");
  if (labels.size() != logits.size()) throw ShapeError("compute_metrics: length mismatch");
  std::vector<double> scores(logits.size());
  std::vector<int> preds(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scores[i] = sigmoid(logits[i]);
    preds[i] = predict(logits[i]);
  }
  Metrics m;
  m.n = labels.size();
  m.auc = auc(labels, scores);
  m.accuracy = accuracy(labels, preds);
  const F1Report f1 = macro_f1(labels, preds);
  m.macro_f1 = f1.macro_f1;
  m.per_class = f1.per_class;
  return m;
}

nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["auc"] = m.auc;
  j["accuracy"] = m.accuracy;
  j["macro_f1"] = m.macro_f1;
  nlohmann::ordered_json per_class;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& pc = m.per_class[c];
    per_class[std::to_string(c)] = {{"precision", pc.precision},
                                    {"recall", pc.recall},
                                    {"f1", pc.f1},
                                    {"support", pc.support}};
  }
  j["per_class"] = per_class;
  j["n"] = m.n;
  return j;
}

}  // namespace shield
