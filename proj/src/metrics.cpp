// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/metrics.h"

#include <fmt/format.h>

#include "lec/errors.h"

namespace lec {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from(std::span<const std::size_t> y_true,
                                      std::span<const std::size_t> y_pred,
                                      std::size_t num_classes) {
  if (y_true.size() != y_pred.size())
    throw ValidationError(fmt::format("{} true labels but {} predictions", y_true.size(),
                                      y_pred.size()));
  if (y_true.empty()) throw ValidationError("cannot evaluate zero examples");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
  return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= num_classes_ || predicted >= num_classes_)
    throw ValidationError(fmt::format("label pair ({}, {}) outside {} classes", truth, predicted,
                                      num_classes_));
  ++counts_[truth * num_classes_ + predicted];
  ++total_;
}

std::size_t ConfusionMatrix::count(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * num_classes_ + predicted);
}

EvalReport evaluate(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("cannot evaluate zero examples");
  const std::size_t c_count = cm.num_classes();
  EvalReport report;
  report.n = cm.total();
  report.per_class.resize(c_count);
  double weighted = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) {
    std::size_t tp = cm.count(c, c), predicted = 0, actual = 0;
    for (std::size_t k = 0; k < c_count; ++k) {
      predicted += cm.count(k, c);
      actual += cm.count(c, k);
    }
    auto& m = report.per_class[c];
    m.support = actual;
    m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    m.recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
    const double denom = m.precision + m.recall;
    m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
    weighted += static_cast<double>(actual) * m.f1;
  }
  report.weighted_f1 = weighted / static_cast<double>(report.n);
  return report;
}

EvalReport evaluate(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                    std::size_t num_classes) {
  return evaluate(ConfusionMatrix::from(y_true, y_pred, num_classes));
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["weighted_f1"] = report.weighted_f1;
  auto& per_class = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& m : report.per_class)
    per_class.push_back({{"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n = j.at("n").get<std::size_t>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  for (const auto& m : j.at("per_class"))
    r.per_class.push_back({m.at("precision").get<double>(), m.at("recall").get<double>(),
                           m.at("f1").get<double>(), m.at("support").get<std::size_t>()});
  return r;
}

}  // namespace lec
