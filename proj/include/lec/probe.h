// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lec/core.h"

namespace lec {

struct ProbeConfig {
  double alpha = 10.0;
  bool fit_intercept = true;
  // Scale centered features to unit variance before solving; weights are
  // mapped back to the raw feature space afterwards.
  bool standardize = false;

  void validate() const;
};

// Weights are (columns x d); one row per decision column.
struct RidgeSolution {
  Eigen::MatrixXd weights;
  Eigen::VectorXd intercepts;
};

/// Minimizes ||X w_c + b_c - t_c||^2 + alpha ||w_c||^2 for every column c of
/// `targets`, with b_c unpenalized (eliminated by centering X and t).
///
/// Solves the d x d normal equations when d <= n and the equivalent n x n
/// dual system otherwise, both with an LDLT factorization. Throws
/// SingularSystemError when the system is numerically singular, which can
/// only happen for alpha == 0.
RidgeSolution solve_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                          const ProbeConfig& config);

// Number of decision columns: 1 for binary label spaces, else one per class.
std::size_t decision_columns(const LabelSpace& label_space);

// +1/-1 one-vs-rest targets (n x columns). Binary uses a single column that is
// +1 for class index 1.
Eigen::MatrixXd encode_targets(std::span<const std::size_t> labels, const LabelSpace& label_space);

// Binary: class 1 iff score > 0. Otherwise argmax with ties to the lowest index.
std::size_t predict_from_scores(const Eigen::VectorXd& scores, LabelKind kind);

// d + 1 per decision column with an intercept, d without.
std::size_t trainable_parameter_count(const LabelSpace& label_space, std::size_t hidden_dim,
                                      const ProbeConfig& config = {});

class ProbeClassifier {
 public:
  ProbeClassifier(LabelSpace label_space, ProbeConfig config, Eigen::MatrixXd weights,
                  Eigen::VectorXd intercepts);

  const LabelSpace& label_space() const noexcept { return label_space_; }
  const ProbeConfig& config() const noexcept { return config_; }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  const Eigen::VectorXd& intercepts() const noexcept { return intercepts_; }
  std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t num_columns() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t trainable_parameter_count() const;

  Eigen::VectorXd decision(const Eigen::VectorXd& x) const;
  std::size_t predict(const Eigen::VectorXd& x) const;
  // Row-wise prediction over an (n x d) matrix.
  std::vector<std::size_t> predict_rows(const Eigen::MatrixXd& X) const;

 private:
  LabelSpace label_space_;
  ProbeConfig config_;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd intercepts_;
};

ProbeClassifier fit(const Eigen::MatrixXd& X, std::span<const std::size_t> labels,
                    const ProbeConfig& config, const LabelSpace& label_space);

inline constexpr std::uint32_t kProbeVersion = 1;
std::string serialize_probe(const ProbeClassifier& probe);
ProbeClassifier deserialize_probe(std::string_view bytes, const std::filesystem::path& origin = {});
void save_probe(const ProbeClassifier& probe, const std::filesystem::path& path);
ProbeClassifier load_probe(const std::filesystem::path& path);

}  // namespace lec
