// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "needle/corpus.hpp"
#include "needle/util.hpp"

namespace needle {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
  double f1 = 0;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
};

namespace metrics {

// Positive class is Interesting.
inline ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> gold) {
  if (predictions.size() != gold.size())
    throw Error("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(gold.size()) + " gold labels");
  if (gold.empty()) throw Error("confusion: no pairs");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    bool p = predictions[i] == Label::Interesting;
    bool g = gold[i] == Label::Interesting;
    if (p && g) ++cm.tp;
    else if (p) ++cm.fp;
    else if (g) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

// Zero denominators give 0 for precision, recall and F1.
inline MetricsReport compute(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("metrics: empty confusion matrix");
  MetricsReport r;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  r.precision = cm.tp + cm.fp ? d(cm.tp) / d(cm.tp + cm.fp) : 0.0;
  r.recall = cm.tp + cm.fn ? d(cm.tp) / d(cm.tp + cm.fn) : 0.0;
  r.accuracy = d(cm.tp + cm.tn) / d(cm.total());
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline double f1_from(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

// Fraction in [0,1] rendered as a percentage with two decimals, half-up.
inline std::string percent(double fraction) {
  auto hundredths = static_cast<long long>(std::floor(fraction * 10000.0 + 0.5 + 1e-9));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", hundredths / 100, hundredths % 100);
  return buf;
}

inline std::string format_f1(double f1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", f1);
  return buf;
}

inline std::string render(const MetricsReport& r) {
  return "F1: " + percent(r.f1) + "%\nAccuracy: " + percent(r.accuracy) + "%\nPrecision: " + percent(r.precision) +
         "%\nRecall: " + percent(r.recall) + "%\n";
}

// Scores a submission (out.tsv) against expected.tsv; returns F1 in [0,1].
inline double geval_evaluate(const std::filesystem::path& expected_path, const std::filesystem::path& out_path) {
  auto expected = corpus::read_labels(expected_path);
  auto out = corpus::read_labels(out_path);
  if (expected.size() != out.size())
    throw FormatError("line-count mismatch: expected has " + std::to_string(expected.size()) + " lines, out has " +
                      std::to_string(out.size()));
  return compute(confusion(out, expected)).f1;
}

}  // namespace metrics
}  // namespace needle
