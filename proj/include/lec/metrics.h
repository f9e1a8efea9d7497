// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace lec {

// Rows are the true class, columns the predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  static ConfusionMatrix from(std::span<const std::size_t> y_true,
                              std::span<const std::size_t> y_pred, std::size_t num_classes);

  void add(std::size_t truth, std::size_t predicted);
  std::size_t count(std::size_t truth, std::size_t predicted) const;
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t total() const noexcept { return total_; }

 private:
  std::size_t num_classes_;
  std::size_t total_ = 0;
  std::vector<std::size_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<ClassMetrics> per_class;
  // Support-weighted mean of per-class F1.
  double weighted_f1 = 0.0;
  std::size_t n = 0;
};

// Undefined ratios (0/0) are reported as 0.
EvalReport evaluate(const ConfusionMatrix& confusion);
EvalReport evaluate(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                    std::size_t num_classes);

// {"n", "weighted_f1", "per_class": [{"precision", "recall", "f1", "support"}]}
nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace lec
