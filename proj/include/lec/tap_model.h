// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lec/core.h"

namespace lec {

struct TapConfig {
  std::size_t n_layers = 1;
  std::size_t hidden_dim = 8;
  std::size_t n_heads = 1;
  std::size_t mlp_dim = 16;
  std::size_t vocab_size = 256;
  std::size_t max_seq_len = 128;
  double norm_epsilon = 1e-6;

  void validate() const;
  std::size_t head_dim() const { return hidden_dim / n_heads; }
  // Parameters of one block, derived from the shapes alone.
  std::size_t block_parameter_count() const;
  std::size_t embedding_parameter_count() const { return vocab_size * hidden_dim; }

  friend bool operator==(const TapConfig&, const TapConfig&) = default;
};

// Projections act on row vectors: y = x * W, W is (in x out).
struct BlockWeights {
  Eigen::VectorXd attn_norm;      // d
  Eigen::MatrixXd wq, wk, wv, wo; // d x d
  Eigen::VectorXd mlp_norm;       // d
  Eigen::MatrixXd w_gate, w_up;   // d x m
  Eigen::MatrixXd w_down;         // m x d
  Eigen::VectorXd post_mlp_norm;  // d

  std::size_t parameter_count() const;
};

/// Decoder-only transformer without an LM head.
///
/// Each block is pre-norm causal multi-head attention followed by a SwiGLU MLP
/// with RMS normalization both before the MLP and on its output:
///
///   h   = x + Attn(rms(x; attn_norm)) * wo
///   out = h + rms(MLP(rms(h; mlp_norm)); post_mlp_norm)
///
/// There are no positional embeddings; the causal mask is the only order signal.
class TapModel {
 public:
  TapModel(TapConfig config, Eigen::MatrixXd token_embedding, std::vector<BlockWeights> blocks);

  // Gaussian weights scaled by 1/sqrt(hidden_dim), unit norm scales.
  static TapModel random(const TapConfig& config, std::uint64_t seed);

  const TapConfig& config() const noexcept { return config_; }
  const Eigen::MatrixXd& token_embedding() const noexcept { return token_embedding_; }
  const std::vector<BlockWeights>& blocks() const noexcept { return blocks_; }
  std::size_t num_layers() const noexcept { return blocks_.size(); }

  std::size_t block_parameter_count() const;
  std::size_t parameter_count() const;

 private:
  TapConfig config_;
  Eigen::MatrixXd token_embedding_;
  std::vector<BlockWeights> blocks_;
};

struct LayerTapOutput {
  std::vector<Eigen::VectorXd> states;                    // one per block, pooled
  std::optional<std::vector<Eigen::MatrixXd>> seq_states; // L x (T x d), on request
};

/// One forward pass recording the residual stream after every block.
/// states[l] equals the layer-(l+1) output of prune_to(model, l+1); the two
/// share the same arithmetic path, so the equality is exact.
LayerTapOutput forward_with_taps(const TapModel& model, std::span<const std::uint32_t> token_ids,
                                 Pooling pooling, bool keep_sequence_states = false);

// Copy of the first k blocks (1 <= k <= L).
TapModel prune_to(const TapModel& model, std::size_t k);

// Empty mask means every position is visible.
Eigen::VectorXd pooled(const Eigen::MatrixXd& seq_states, Pooling pooling,
                       const std::vector<bool>& attention_mask = {});

Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale, double eps);

// LECM checkpoint I/O. See docs/formats.md for the byte layout.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string serialize_checkpoint(const TapModel& model);
TapModel deserialize_checkpoint(std::string_view bytes, const std::filesystem::path& origin = {});
void save_checkpoint(const TapModel& model, const std::filesystem::path& path);
TapModel load_checkpoint(const std::filesystem::path& path);
// "lecm-" followed by the FNV-1a hash of the serialized checkpoint.
std::string checkpoint_model_id(const TapModel& model);

// Byte-level tokenizer: one token per UTF-8 byte, id = byte mod vocab_size.
std::vector<std::uint32_t> encode_bytes(std::string_view text, std::size_t vocab_size);

// System prompt (when present), a blank line, then the user prompt.
std::string render_prompt(const LabeledExample& example);

}  // namespace lec
