// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/tap_model.h"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "binary_io.h"
#include "lec/errors.h"
#include "lec/rng.h"

namespace lec {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

void check_shape(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols,
                 std::string_view name) {
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols)
    throw ValidationError(fmt::format("{} has shape {}x{}, expected {}x{}", name, m.rows(),
                                      m.cols(), rows, cols));
}

void check_len(const Eigen::VectorXd& v, std::size_t n, std::string_view name) {
  if (static_cast<std::size_t>(v.size()) != n)
    throw ValidationError(fmt::format("{} has length {}, expected {}", name, v.size(), n));
}

Eigen::MatrixXd gaussian(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Eigen::MatrixXd m(idx(rows), idx(cols));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

Eigen::MatrixXd causal_attention(const Eigen::MatrixXd& xn, const BlockWeights& w,
                                 std::size_t n_heads) {
  const Index t = xn.rows();
  const Index dh = w.wq.cols() / idx(n_heads);
  const Eigen::MatrixXd q = xn * w.wq;
  const Eigen::MatrixXd k = xn * w.wk;
  const Eigen::MatrixXd v = xn * w.wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Eigen::MatrixXd heads(t, w.wq.cols());
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Index c0 = idx(h) * dh;
    Eigen::MatrixXd scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    for (Index i = 0; i < t; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j <= i; ++j) row_max = std::max(row_max, scores(i, j));
      double denom = 0.0;
      for (Index j = 0; j < t; ++j) {
        scores(i, j) = j <= i ? std::exp(scores(i, j) - row_max) : 0.0;
        denom += scores(i, j);
      }
      scores.row(i) /= denom;
    }
    heads.middleCols(c0, dh) = scores * v.middleCols(c0, dh);
  }
  return heads * w.wo;
}

Eigen::MatrixXd swiglu_mlp(const Eigen::MatrixXd& hn, const BlockWeights& w) {
  const Eigen::MatrixXd gate = hn * w.w_gate;
  const Eigen::MatrixXd up = hn * w.w_up;
  const Eigen::MatrixXd act =
      gate.unaryExpr([](double g) { return g / (1.0 + std::exp(-g)); }).cwiseProduct(up);
  return act * w.w_down;
}

Eigen::MatrixXd block_forward(const Eigen::MatrixXd& x, const BlockWeights& w,
                              const TapConfig& cfg) {
  Eigen::MatrixXd h = x + causal_attention(rms_norm(x, w.attn_norm, cfg.norm_epsilon), w,
                                           cfg.n_heads);
  const Eigen::MatrixXd mlp = swiglu_mlp(rms_norm(h, w.mlp_norm, cfg.norm_epsilon), w);
  h += rms_norm(mlp, w.post_mlp_norm, cfg.norm_epsilon);
  return h;
}

}  // namespace

void TapConfig::validate() const {
  if (n_layers < 1) throw ValidationError("n_layers must be >= 1");
  if (hidden_dim < 1 || n_heads < 1 || mlp_dim < 1 || vocab_size < 1 || max_seq_len < 1)
    throw ValidationError("all model dimensions must be >= 1");
  if (hidden_dim % n_heads != 0)
    throw ValidationError(
        fmt::format("hidden_dim {} is not divisible by n_heads {}", hidden_dim, n_heads));
  if (!(norm_epsilon > 0.0) || !std::isfinite(norm_epsilon))
    throw ValidationError("norm_epsilon must be positive and finite");
}

std::size_t TapConfig::block_parameter_count() const {
  const std::size_t d = hidden_dim, m = mlp_dim;
  return 4 * d * d + 3 * d * m + 3 * d;
}

std::size_t BlockWeights::parameter_count() const {
  return static_cast<std::size_t>(attn_norm.size() + wq.size() + wk.size() + wv.size() +
                                  wo.size() + mlp_norm.size() + w_gate.size() + w_up.size() +
                                  w_down.size() + post_mlp_norm.size());
}

TapModel::TapModel(TapConfig config, Eigen::MatrixXd token_embedding,
                   std::vector<BlockWeights> blocks)
    : config_(config), token_embedding_(std::move(token_embedding)), blocks_(std::move(blocks)) {
  config_.validate();
  if (blocks_.size() != config_.n_layers)
    throw ValidationError(
        fmt::format("model has {} blocks but config says {}", blocks_.size(), config_.n_layers));
  const std::size_t d = config_.hidden_dim, m = config_.mlp_dim;
  check_shape(token_embedding_, config_.vocab_size, d, "token_embedding");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string p = fmt::format("block {} ", i + 1);
    check_len(b.attn_norm, d, p + "attn_norm");
    check_shape(b.wq, d, d, p + "wq");
    check_shape(b.wk, d, d, p + "wk");
    check_shape(b.wv, d, d, p + "wv");
    check_shape(b.wo, d, d, p + "wo");
    check_len(b.mlp_norm, d, p + "mlp_norm");
    check_shape(b.w_gate, d, m, p + "w_gate");
    check_shape(b.w_up, d, m, p + "w_up");
    check_shape(b.w_down, m, d, p + "w_down");
    check_len(b.post_mlp_norm, d, p + "post_mlp_norm");
  }
}

TapModel TapModel::random(const TapConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "tap-model-init"));
  const std::size_t d = config.hidden_dim, m = config.mlp_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Eigen::MatrixXd embedding = gaussian(rng, config.vocab_size, d, scale);
  std::vector<BlockWeights> blocks(config.n_layers);
  for (auto& b : blocks) {
    b.attn_norm = Eigen::VectorXd::Ones(idx(d));
    b.wq = gaussian(rng, d, d, scale);
    b.wk = gaussian(rng, d, d, scale);
    b.wv = gaussian(rng, d, d, scale);
    b.wo = gaussian(rng, d, d, scale);
    b.mlp_norm = Eigen::VectorXd::Ones(idx(d));
    b.w_gate = gaussian(rng, d, m, scale);
    b.w_up = gaussian(rng, d, m, scale);
    b.w_down = gaussian(rng, m, d, scale);
    b.post_mlp_norm = Eigen::VectorXd::Ones(idx(d));
  }
  return TapModel(config, std::move(embedding), std::move(blocks));
}

std::size_t TapModel::block_parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.parameter_count();
  return n;
}

std::size_t TapModel::parameter_count() const {
  return static_cast<std::size_t>(token_embedding_.size()) + block_parameter_count();
}

Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale, double eps) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double inv_rms = 1.0 / std::sqrt(x.row(r).squaredNorm() * inv_d + eps);
    out.row(r) = (x.row(r) * inv_rms).cwiseProduct(scale.transpose());
  }
  return out;
}

Eigen::VectorXd pooled(const Eigen::MatrixXd& seq_states, Pooling pooling,
                       const std::vector<bool>& attention_mask) {
  const auto t = static_cast<std::size_t>(seq_states.rows());
  if (t == 0) throw ValidationError("cannot pool an empty sequence");
  if (!attention_mask.empty() && attention_mask.size() != t)
    throw ValidationError(fmt::format("attention mask has length {}, sequence has {}",
                                      attention_mask.size(), t));
  auto visible = [&](std::size_t i) { return attention_mask.empty() || attention_mask[i]; };

  std::size_t n_visible = 0;
  for (std::size_t i = 0; i < t; ++i) n_visible += visible(i) ? 1 : 0;
  if (n_visible == 0) throw ValidationError("all positions are masked");

  switch (pooling) {
    case Pooling::first_token:
      return seq_states.row(0).transpose();
    case Pooling::last_token: {
      std::size_t last = t - 1;
      while (!visible(last)) --last;
      return seq_states.row(idx(last)).transpose();
    }
    case Pooling::mean: {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(seq_states.cols());
      for (std::size_t i = 0; i < t; ++i)
        if (visible(i)) sum += seq_states.row(idx(i)).transpose();
      return sum / static_cast<double>(n_visible);
    }
  }
  throw ValidationError("unknown pooling");
}

LayerTapOutput forward_with_taps(const TapModel& model, std::span<const std::uint32_t> token_ids,
                                 Pooling pooling, bool keep_sequence_states) {
  const auto& cfg = model.config();
  if (token_ids.empty()) throw ValidationError("token sequence is empty");
  if (token_ids.size() > cfg.max_seq_len)
    throw ValidationError(fmt::format("sequence length {} exceeds max_seq_len {}",
                                      token_ids.size(), cfg.max_seq_len));
  Eigen::MatrixXd x(idx(token_ids.size()), idx(cfg.hidden_dim));
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] >= cfg.vocab_size)
      throw ValidationError(fmt::format("token id {} at position {} is outside the vocabulary ({})",
                                        token_ids[i], i, cfg.vocab_size));
    x.row(idx(i)) = model.token_embedding().row(token_ids[i]);
  }

  LayerTapOutput out;
  out.states.reserve(model.num_layers());
  if (keep_sequence_states) out.seq_states.emplace();
  for (const auto& block : model.blocks()) {
    x = block_forward(x, block, cfg);
    out.states.push_back(pooled(x, pooling));
    if (keep_sequence_states) out.seq_states->push_back(x);
  }
  return out;
}

TapModel prune_to(const TapModel& model, std::size_t k) {
  if (k < 1 || k > model.num_layers())
    throw ValidationError(
        fmt::format("prune target {} out of range 1..{}", k, model.num_layers()));
  TapConfig cfg = model.config();
  cfg.n_layers = k;
  std::vector<BlockWeights> blocks(model.blocks().begin(),
                                   model.blocks().begin() + static_cast<std::ptrdiff_t>(k));
  return TapModel(cfg, model.token_embedding(), std::move(blocks));
}

namespace {

constexpr std::string_view kCheckpointMagic = "LECM";

void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) detail::put_f64(out, m(r, c));
}

void put_vector(std::string& out, const Eigen::VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) detail::put_f64(out, v(i));
}

Eigen::MatrixXd get_matrix(detail::ByteReader& in, std::size_t rows, std::size_t cols,
                           std::string_view what) {
  Eigen::MatrixXd m(idx(rows), idx(cols));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = in.f64(what);
  return m;
}

Eigen::VectorXd get_vector(detail::ByteReader& in, std::size_t n, std::string_view what) {
  Eigen::VectorXd v(idx(n));
  for (Index i = 0; i < v.size(); ++i) v(i) = in.f64(what);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const TapModel& model) {
  const auto& cfg = model.config();
  std::string out;
  out.reserve(64 + 8 * model.parameter_count());
  out.append(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  for (std::size_t v : {cfg.n_layers, cfg.hidden_dim, cfg.n_heads, cfg.mlp_dim, cfg.vocab_size,
                        cfg.max_seq_len})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  detail::put_f64(out, cfg.norm_epsilon);
  put_matrix(out, model.token_embedding());
  for (const auto& b : model.blocks()) {
    put_vector(out, b.attn_norm);
    put_matrix(out, b.wq);
    put_matrix(out, b.wk);
    put_matrix(out, b.wv);
    put_matrix(out, b.wo);
    put_vector(out, b.mlp_norm);
    put_matrix(out, b.w_gate);
    put_matrix(out, b.w_up);
    put_matrix(out, b.w_down);
    put_vector(out, b.post_mlp_norm);
  }
  return out;
}

TapModel deserialize_checkpoint(std::string_view bytes, const std::filesystem::path& origin) {
  detail::ByteReader in(bytes, origin);
  in.expect_magic(kCheckpointMagic);
  const auto version = in.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError(origin, fmt::format("unsupported checkpoint version {}", version));
  TapConfig cfg;
  cfg.n_layers = in.u32("n_layers");
  cfg.hidden_dim = in.u32("hidden_dim");
  cfg.n_heads = in.u32("n_heads");
  cfg.mlp_dim = in.u32("mlp_dim");
  cfg.vocab_size = in.u32("vocab_size");
  cfg.max_seq_len = in.u32("max_seq_len");
  cfg.norm_epsilon = in.f64("norm_epsilon");
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw FormatError(origin, std::string("invalid config: ") + e.what());
  }
  const std::size_t expected =
      in.offset() + 8 * (cfg.embedding_parameter_count() + cfg.n_layers * cfg.block_parameter_count());
  if (bytes.size() > expected)
    throw FormatError(origin, fmt::format("{} trailing bytes after weights", bytes.size() - expected));

  const std::size_t d = cfg.hidden_dim, m = cfg.mlp_dim;
  Eigen::MatrixXd embedding = get_matrix(in, cfg.vocab_size, d, "token_embedding");
  std::vector<BlockWeights> blocks(cfg.n_layers);
  for (auto& b : blocks) {
    b.attn_norm = get_vector(in, d, "attn_norm");
    b.wq = get_matrix(in, d, d, "wq");
    b.wk = get_matrix(in, d, d, "wk");
    b.wv = get_matrix(in, d, d, "wv");
    b.wo = get_matrix(in, d, d, "wo");
    b.mlp_norm = get_vector(in, d, "mlp_norm");
    b.w_gate = get_matrix(in, d, m, "w_gate");
    b.w_up = get_matrix(in, d, m, "w_up");
    b.w_down = get_matrix(in, m, d, "w_down");
    b.post_mlp_norm = get_vector(in, d, "post_mlp_norm");
  }
  return TapModel(cfg, std::move(embedding), std::move(blocks));
}

void save_checkpoint(const TapModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

TapModel load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return deserialize_checkpoint(bytes, path);
}

std::string checkpoint_model_id(const TapModel& model) {
  return "lecm-" + hex64(fnv1a64(serialize_checkpoint(model)));
}

std::vector<std::uint32_t> encode_bytes(std::string_view text, std::size_t vocab_size) {
  if (vocab_size == 0) throw ValidationError("vocab_size must be >= 1");
  std::vector<std::uint32_t> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<std::uint32_t>(c % vocab_size));
  return ids;
}

std::string render_prompt(const LabeledExample& example) {
  if (!example.system_prompt) return example.user_prompt;
  return *example.system_prompt + "\n\n" + example.user_prompt;
}

}  // namespace lec
