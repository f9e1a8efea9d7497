// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and reference implementations for the test binaries. The
// reference code here is written independently of src/: plain loops, no
// shared helpers, so agreement with the library is meaningful.

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "lec/probe.h"
#include "lec/rng.h"
#include "lec/tap_model.h"

namespace lec::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lec-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// ---------------------------------------------------------------------------
// Ridge oracle: accelerated gradient descent on the un-centered objective
//   f(w, b) = ||X w + b - t||^2 + alpha ||w||^2
// for one target column, with adaptive momentum restart.

struct GdSolution {
  Eigen::VectorXd w;
  double b = 0.0;
  std::size_t iterations = 0;
};

inline GdSolution ridge_by_gradient_descent(const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                            double alpha, bool fit_intercept = true) {
  const auto n = X.rows(), d = X.cols();
  // Augmented design [X 1] and penalty diag(alpha..., 0).
  Eigen::MatrixXd A(n, d + 1);
  A.leftCols(d) = X;
  A.col(d).setConstant(fit_intercept ? 1.0 : 0.0);
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(d + 1, alpha);
  pen(d) = fit_intercept ? 0.0 : 1.0;  // pin b at 0 when there is no intercept

  auto grad = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return 2.0 * (A.transpose() * (A * z - t)) + 2.0 * pen.cwiseProduct(z);
  };

  // Largest Hessian eigenvalue by power iteration, padded for safety.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1).normalized();
  double lmax = 1.0;
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd hv = 2.0 * (A.transpose() * (A * v)) + 2.0 * pen.cwiseProduct(v);
    lmax = hv.norm();
    if (lmax == 0.0) break;
    v = hv / lmax;
  }
  const double step = 1.0 / (1.05 * std::max(lmax, 1e-12));

  Eigen::VectorXd z = Eigen::VectorXd::Zero(d + 1), z_prev = z, y = z;
  const double tol = 1e-11 * (1.0 + (2.0 * A.transpose() * t).norm());
  double momentum = 1.0;
  GdSolution out;
  for (std::size_t it = 0; it < 2'000'000; ++it) {
    const Eigen::VectorXd g = grad(y);
    z_prev = z;
    z = y - step * g;
    const Eigen::VectorXd gz = grad(z);
    out.iterations = it + 1;
    if (gz.norm() <= tol) break;
    const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    if (g.dot(z - z_prev) > 0.0) {  // restart when momentum points uphill
      momentum = 1.0;
      y = z;
    } else {
      y = z + ((momentum - 1.0) / next) * (z - z_prev);
      momentum = next;
    }
  }
  out.w = z.head(d);
  out.b = fit_intercept ? z(d) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Seeded random probe problems and the closed-form vs oracle comparison.

struct ProbeProblem {
  Eigen::MatrixXd X;
  std::vector<std::size_t> labels;
  LabelSpace label_space{LabelKind::binary, {"a", "b"}};
  double alpha = 10.0;
};

inline ProbeProblem random_probe_problem(std::uint64_t seed, double alpha) {
  Rng rng(seed);
  ProbeProblem p;
  const auto n = static_cast<Eigen::Index>(2 + rng.below(49));
  const auto d = static_cast<Eigen::Index>(1 + rng.below(20));
  const std::size_t classes = 2 + rng.below(3);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  p.label_space = LabelSpace(classes == 2 ? LabelKind::binary : LabelKind::multiclass, names);
  p.alpha = alpha;
  p.X.resize(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double scale = 0.2 + 3.0 * rng.uniform();
    const double shift = 4.0 * rng.uniform() - 2.0;
    for (Eigen::Index i = 0; i < n; ++i) p.X(i, j) = shift + scale * rng.normal();
  }
  for (Eigen::Index i = 0; i < n; ++i) p.labels.push_back(rng.below(classes));
  return p;
}

struct OracleComparison {
  double max_relative_error = 0.0;  // over columns: max |closed - oracle| / max |oracle|
  bool predictions_equal = true;
};

inline OracleComparison compare_with_oracle(const ProbeProblem& p) {
  const auto probe = fit(p.X, p.labels, ProbeConfig{p.alpha, true, false}, p.label_space);
  const bool binary = p.label_space.kind() == LabelKind::binary;
  const std::size_t cols = binary ? 1 : p.label_space.size();
  const auto n = p.X.rows();
  OracleComparison out;
  Eigen::MatrixXd oracle_scores(n, static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < cols; ++c) {
    const std::size_t positive = binary ? 1 : c;
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t(i) = p.labels[i] == positive ? 1.0 : -1.0;
    const auto gd = ridge_by_gradient_descent(p.X, t, p.alpha);
    Eigen::VectorXd z_gd(p.X.cols() + 1), z_cf(p.X.cols() + 1);
    z_gd << gd.w, gd.b;
    z_cf << probe.weights().row(static_cast<Eigen::Index>(c)).transpose(),
        probe.intercepts()(static_cast<Eigen::Index>(c));
    const double scale = std::max(z_gd.cwiseAbs().maxCoeff(), 1e-300);
    out.max_relative_error =
        std::max(out.max_relative_error, (z_cf - z_gd).cwiseAbs().maxCoeff() / scale);
    oracle_scores.col(static_cast<Eigen::Index>(c)) = (p.X * gd.w).array() + gd.b;
  }
  const auto got = probe.predict_rows(p.X);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t want = 0;
    if (binary) {
      want = oracle_scores(i, 0) > 0.0 ? 1 : 0;
    } else {
      for (std::size_t c = 1; c < cols; ++c)
        if (oracle_scores(i, static_cast<Eigen::Index>(c)) > oracle_scores(i, static_cast<Eigen::Index>(want))) want = c;
    }
    if (got[static_cast<std::size_t>(i)] != want) out.predictions_equal = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Straight-line transformer forward. Returns, per block, the T x d residual
// stream after that block, computed token by token with scalar loops.

using Seq = std::vector<std::vector<double>>;

inline std::vector<double> ref_rms(const std::vector<double>& x, const Eigen::VectorXd& g,
                                   double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * g(static_cast<Eigen::Index>(i));
  return out;
}

inline std::vector<double> ref_matvec(const std::vector<double>& x, const Eigen::MatrixXd& W) {
  std::vector<double> out(static_cast<std::size_t>(W.cols()), 0.0);
  for (Eigen::Index c = 0; c < W.cols(); ++c)
    for (Eigen::Index r = 0; r < W.rows(); ++r) out[c] += x[r] * W(r, c);
  return out;
}

inline std::vector<Seq> reference_forward(const TapModel& model, const std::vector<std::uint32_t>& ids) {
  const auto& cfg = model.config();
  const std::size_t d = cfg.hidden_dim, H = cfg.n_heads, dh = d / H, T = ids.size();
  Seq x(T, std::vector<double>(d));
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i][j] = model.token_embedding()(ids[i], j);

  std::vector<Seq> taps;
  for (const auto& b : model.blocks()) {
    Seq q(T), k(T), v(T);
    for (std::size_t i = 0; i < T; ++i) {
      const auto xn = ref_rms(x[i], b.attn_norm, cfg.norm_epsilon);
      q[i] = ref_matvec(xn, b.wq);
      k[i] = ref_matvec(xn, b.wk);
      v[i] = ref_matvec(xn, b.wv);
    }
    Seq h(T);
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> heads(d, 0.0);
      for (std::size_t hd = 0; hd < H; ++hd) {
        std::vector<double> s(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[i][hd * dh + c] * k[j][hd * dh + c];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t c = 0; c < dh; ++c) heads[hd * dh + c] += s[j] / z * v[j][hd * dh + c];
      }
      const auto attn = ref_matvec(heads, b.wo);
      h[i].resize(d);
      for (std::size_t c = 0; c < d; ++c) h[i][c] = x[i][c] + attn[c];

      const auto hn = ref_rms(h[i], b.mlp_norm, cfg.norm_epsilon);
      const auto gate = ref_matvec(hn, b.w_gate);
      const auto up = ref_matvec(hn, b.w_up);
      std::vector<double> act(gate.size());
      for (std::size_t c = 0; c < act.size(); ++c) act[c] = gate[c] / (1.0 + std::exp(-gate[c])) * up[c];
      const auto mlp = ref_rms(ref_matvec(act, b.w_down), b.post_mlp_norm, cfg.norm_epsilon);
      for (std::size_t c = 0; c < d; ++c) h[i][c] += mlp[c];
    }
    x = h;
    taps.push_back(x);
  }
  return taps;
}

}  // namespace lec::testing
