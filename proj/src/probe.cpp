// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/probe.h"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "binary_io.h"
#include "lec/errors.h"

namespace lec {

namespace {

using Eigen::Index;

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Solves A Z = B for symmetric positive (semi)definite A.
Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double alpha) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(a.rows());
  // rcond() alone misses exact zero pivots (LDLT treats them as a pseudo-inverse),
  // so the pivot ratio is checked too.
  const auto pivots = ldlt.vectorD().cwiseAbs();
  const bool degenerate = a.rows() > 0 && !(pivots.minCoeff() > tol * pivots.maxCoeff());
  // With alpha > 0 the system is positive definite by construction; the
  // conditioning checks would only misfire on badly scaled features.
  const bool suspect = alpha == 0.0 && (degenerate || !(ldlt.rcond() > tol));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || suspect)
    throw SingularSystemError(fmt::format(
        "ridge system is singular (alpha = {}, reciprocal condition {:.3g}); use alpha > 0",
        alpha, ldlt.rcond()));
  return ldlt.solve(b);
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ValidationError(fmt::format("alpha must be finite and >= 0, got {}", alpha));
}

RidgeSolution solve_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                          const ProbeConfig& config) {
  config.validate();
  const Index n = X.rows();
  const Index d = X.cols();
  if (n < 1) throw ValidationError("cannot fit on zero examples");
  if (d < 1) throw ValidationError("cannot fit on zero features");
  if (targets.rows() != n)
    throw ValidationError(fmt::format("{} target rows for {} examples", targets.rows(), n));
  if (!all_finite(X)) throw ValidationError("features contain non-finite values");
  if (!all_finite(targets)) throw ValidationError("targets contain non-finite values");

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(d);
  Eigen::RowVectorXd t_mean = Eigen::RowVectorXd::Zero(targets.cols());
  if (config.fit_intercept) {
    x_mean = X.colwise().mean();
    t_mean = targets.colwise().mean();
  }
  Eigen::MatrixXd xc = X.rowwise() - x_mean;
  const Eigen::MatrixXd tc = targets.rowwise() - t_mean;

  Eigen::RowVectorXd scale = Eigen::RowVectorXd::Ones(d);
  if (config.standardize) {
    scale = (xc.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
    for (Index j = 0; j < d; ++j)
      if (!(scale(j) > 0.0)) scale(j) = 1.0;
    xc = xc.array().rowwise() / scale.array();
  }

  Eigen::MatrixXd w;  // d x columns
  if (d <= n) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += config.alpha;
    w = spd_solve(gram, xc.transpose() * tc, config.alpha);
  } else {
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, n);
    kernel.selfadjointView<Eigen::Lower>().rankUpdate(xc);
    kernel = kernel.selfadjointView<Eigen::Lower>();
    kernel.diagonal().array() += config.alpha;
    w = xc.transpose() * spd_solve(kernel, tc, config.alpha);
  }
  w = w.array().colwise() / scale.transpose().array();

  RidgeSolution out;
  out.weights = w.transpose();
  out.intercepts = (t_mean - x_mean * w).transpose();
  return out;
}

std::size_t decision_columns(const LabelSpace& label_space) {
  return label_space.kind() == LabelKind::binary ? 1 : label_space.size();
}

Eigen::MatrixXd encode_targets(std::span<const std::size_t> labels, const LabelSpace& label_space) {
  const std::size_t cols = decision_columns(label_space);
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(static_cast<Index>(labels.size()),
                                                static_cast<Index>(cols), -1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= label_space.size())
      throw ValidationError(fmt::format("label {} at row {} outside label space of {} classes",
                                        labels[i], i, label_space.size()));
    if (label_space.kind() == LabelKind::binary) {
      if (labels[i] == 1) t(static_cast<Index>(i), 0) = 1.0;
    } else {
      t(static_cast<Index>(i), static_cast<Index>(labels[i])) = 1.0;
    }
  }
  return t;
}

std::size_t predict_from_scores(const Eigen::VectorXd& scores, LabelKind kind) {
  if (scores.size() == 0) throw ValidationError("empty score vector");
  if (kind == LabelKind::binary) {
    if (scores.size() != 1) throw ValidationError("binary probe expects a single score");
    return scores(0) > 0.0 ? 1 : 0;
  }
  Index best = 0;
  for (Index c = 1; c < scores.size(); ++c)
    if (scores(c) > scores(best)) best = c;
  return static_cast<std::size_t>(best);
}

std::size_t trainable_parameter_count(const LabelSpace& label_space, std::size_t hidden_dim,
                                      const ProbeConfig& config) {
  return decision_columns(label_space) * (hidden_dim + (config.fit_intercept ? 1 : 0));
}

ProbeClassifier::ProbeClassifier(LabelSpace label_space, ProbeConfig config,
                                 Eigen::MatrixXd weights, Eigen::VectorXd intercepts)
    : label_space_(std::move(label_space)),
      config_(config),
      weights_(std::move(weights)),
      intercepts_(std::move(intercepts)) {
  config_.validate();
  const auto cols = static_cast<Index>(decision_columns(label_space_));
  if (weights_.rows() != cols || intercepts_.size() != cols)
    throw ValidationError(fmt::format("probe has {} weight rows and {} intercepts, expected {}",
                                      weights_.rows(), intercepts_.size(), cols));
  if (weights_.cols() < 1) throw ValidationError("probe has zero features");
  if (!weights_.allFinite() || !intercepts_.allFinite())
    throw ValidationError("probe parameters are not finite");
}

std::size_t ProbeClassifier::trainable_parameter_count() const {
  return lec::trainable_parameter_count(label_space_, hidden_dim(), config_);
}

Eigen::VectorXd ProbeClassifier::decision(const Eigen::VectorXd& x) const {
  if (x.size() != weights_.cols())
    throw ValidationError(
        fmt::format("feature vector has length {}, probe expects {}", x.size(), weights_.cols()));
  if (!x.allFinite()) throw ValidationError("feature vector contains non-finite values");
  return weights_ * x + intercepts_;
}

std::size_t ProbeClassifier::predict(const Eigen::VectorXd& x) const {
  return predict_from_scores(decision(x), label_space_.kind());
}

std::vector<std::size_t> ProbeClassifier::predict_rows(const Eigen::MatrixXd& X) const {
  if (X.cols() != weights_.cols())
    throw ValidationError(
        fmt::format("feature matrix has {} columns, probe expects {}", X.cols(), weights_.cols()));
  if (!X.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  const Eigen::MatrixXd scores = (X * weights_.transpose()).rowwise() + intercepts_.transpose();
  std::vector<std::size_t> out(static_cast<std::size_t>(X.rows()));
  for (Index r = 0; r < X.rows(); ++r)
    out[static_cast<std::size_t>(r)] =
        predict_from_scores(scores.row(r).transpose(), label_space_.kind());
  return out;
}

ProbeClassifier fit(const Eigen::MatrixXd& X, std::span<const std::size_t> labels,
                    const ProbeConfig& config, const LabelSpace& label_space) {
  if (static_cast<std::size_t>(X.rows()) != labels.size())
    throw ValidationError(
        fmt::format("{} feature rows but {} labels", X.rows(), labels.size()));
  auto solution = solve_ridge(X, encode_targets(labels, label_space), config);
  return ProbeClassifier(label_space, config, std::move(solution.weights),
                         std::move(solution.intercepts));
}

namespace {
constexpr std::string_view kProbeMagic = "LECP";
}

std::string serialize_probe(const ProbeClassifier& probe) {
  std::string out(kProbeMagic);
  detail::put_u32(out, kProbeVersion);
  const auto& ls = probe.label_space();
  detail::put_u8(out, static_cast<std::uint8_t>(ls.kind()));
  detail::put_u32(out, ls.safe_class() ? static_cast<std::uint32_t>(*ls.safe_class())
                                       : UINT32_MAX);
  detail::put_u32(out, static_cast<std::uint32_t>(ls.size()));
  for (const auto& name : ls.classes()) detail::put_str(out, name);
  detail::put_f64(out, probe.config().alpha);
  detail::put_u8(out, probe.config().fit_intercept ? 1 : 0);
  detail::put_u8(out, probe.config().standardize ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(probe.hidden_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(probe.num_columns()));
  const auto& w = probe.weights();
  for (Index r = 0; r < w.rows(); ++r)
    for (Index c = 0; c < w.cols(); ++c) detail::put_f64(out, w(r, c));
  for (Index c = 0; c < probe.intercepts().size(); ++c)
    detail::put_f64(out, probe.intercepts()(c));
  return out;
}

ProbeClassifier deserialize_probe(std::string_view bytes, const std::filesystem::path& origin) {
  detail::ByteReader in(bytes, origin);
  in.expect_magic(kProbeMagic);
  const auto version = in.u32("version");
  if (version != kProbeVersion)
    throw FormatError(origin, fmt::format("unsupported probe version {}", version));
  const auto kind_raw = in.u8("label kind");
  if (kind_raw > 1) throw FormatError(origin, fmt::format("bad label kind {}", kind_raw));
  const auto safe_raw = in.u32("safe class");
  const auto n_classes = in.u32("class count");
  std::vector<std::string> classes;
  for (std::uint32_t i = 0; i < n_classes; ++i) classes.push_back(in.str("class name"));
  ProbeConfig config;
  config.alpha = in.f64("alpha");
  config.fit_intercept = in.u8("fit_intercept") != 0;
  config.standardize = in.u8("standardize") != 0;
  const auto d = in.u32("hidden_dim");
  const auto cols = in.u32("columns");
  Eigen::MatrixXd w(cols, d);
  for (Index r = 0; r < w.rows(); ++r)
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = in.f64("weights");
  Eigen::VectorXd b(cols);
  for (Index c = 0; c < b.size(); ++c) b(c) = in.f64("intercepts");
  if (in.remaining() != 0)
    throw FormatError(origin, fmt::format("{} trailing bytes", in.remaining()));
  try {
    LabelSpace ls(static_cast<LabelKind>(kind_raw), std::move(classes),
                  safe_raw == UINT32_MAX ? std::nullopt : std::optional<std::size_t>(safe_raw));
    return ProbeClassifier(std::move(ls), config, std::move(w), std::move(b));
  } catch (const ValidationError& e) {
    throw FormatError(origin, e.what());
  }
}

void save_probe(const ProbeClassifier& probe, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_probe(probe));
}

ProbeClassifier load_probe(const std::filesystem::path& path) {
  return deserialize_probe(read_file(path), path);
}

}  // namespace lec
