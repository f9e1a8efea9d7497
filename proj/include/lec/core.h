// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lec {

enum class LabelKind : std::uint8_t { binary = 0, multiclass = 1 };

std::string_view to_string(LabelKind kind);

/// Ordered set of class names. The order is fixed at construction and defines
/// the one-vs-rest column order of every probe trained on it.
class LabelSpace {
 public:
  LabelSpace(LabelKind kind, std::vector<std::string> classes,
             std::optional<std::size_t> safe_class = std::nullopt);

  LabelKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  std::optional<std::size_t> safe_class() const noexcept { return safe_class_; }
  const std::string& name(std::size_t index) const { return classes_.at(index); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  LabelKind kind_;
  std::vector<std::string> classes_;
  std::optional<std::size_t> safe_class_;
};

struct LabeledExample {
  std::string id;
  std::optional<std::string> system_prompt;
  std::string user_prompt;
  std::size_t label = 0;
};

// Stable id for examples whose source provides none: hash of both prompts.
std::string content_id(const std::optional<std::string>& system_prompt,
                       std::string_view user_prompt);

enum class SplitTag : std::uint8_t { train = 0, test = 1 };

inline constexpr double kDefaultTrainFraction = 0.66;

class LabeledDataset {
 public:
  // Unsplit dataset. Validates labels, prompts and id uniqueness.
  LabeledDataset(LabelSpace label_space, std::vector<LabeledExample> examples);

  const LabelSpace& label_space() const noexcept { return label_space_; }
  const std::vector<LabeledExample>& examples() const noexcept { return examples_; }
  std::size_t size() const noexcept { return examples_.size(); }

  bool is_split() const noexcept { return !split_.empty(); }
  std::span<const SplitTag> split() const noexcept { return split_; }
  std::uint64_t split_seed() const noexcept { return split_seed_; }
  double train_fraction() const noexcept { return train_fraction_; }

  // Positions into examples(), ascending. Empty when unsplit.
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;

  std::vector<std::size_t> class_counts() const;
  std::vector<std::size_t> labels() const;

 private:
  friend LabeledDataset make_split(const LabeledDataset&, double, std::uint64_t);

  LabelSpace label_space_;
  std::vector<LabeledExample> examples_;
  std::vector<SplitTag> split_;
  std::uint64_t split_seed_ = 0;
  double train_fraction_ = 0.0;
};

/// Stratified train/test assignment.
///
/// The overall train count is round(fraction * n), clamped so both sides are
/// non-empty, and apportioned across classes by largest remainder (ties go to
/// the lower class index). Within a class, examples are ranked by a seeded hash
/// of their id, so the split depends only on (ids, seed, fraction) and not on
/// input order.
LabeledDataset make_split(const LabeledDataset& dataset, double train_fraction,
                          std::uint64_t seed);

// Largest-remainder apportionment of `total` across groups proportional to
// `weights`; exposed for the samplers that share it.
std::vector<std::size_t> apportion(std::span<const std::size_t> weights, std::size_t total);

enum class Pooling : std::uint8_t { last_token = 0, first_token = 1, mean = 2 };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view text);

struct HiddenStateRecord {
  std::string example_id;
  std::size_t label = 0;
  // layer_states[i] is the state after block i + 1.
  std::vector<std::vector<double>> layer_states;
  std::size_t hidden_dim = 0;
  std::string model_id;
  Pooling pooling = Pooling::last_token;

  std::size_t num_layers() const noexcept { return layer_states.size(); }
  // Throws ValidationError on ragged or non-finite states.
  void validate() const;
};

/// Read-only view of per-layer feature vectors keyed by example id.
/// Layers are numbered 1..num_layers(). Implementations must allow concurrent
/// calls from multiple threads.
class LayerFeatureSource {
 public:
  virtual ~LayerFeatureSource() = default;
  virtual std::size_t num_layers() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual std::string model_id() const = 0;
  virtual bool contains(std::string_view id) const = 0;
  // Row r holds layer `layer` of ids[r].
  virtual Eigen::MatrixXd layer_matrix(std::size_t layer,
                                       std::span<const std::string> ids) const = 0;
};

// In-memory source backed by a vector of records.
class RecordSet final : public LayerFeatureSource {
 public:
  explicit RecordSet(std::vector<HiddenStateRecord> records);

  const std::vector<HiddenStateRecord>& records() const noexcept { return records_; }

  std::size_t num_layers() const override { return num_layers_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::string model_id() const override { return model_id_; }
  bool contains(std::string_view id) const override;
  Eigen::MatrixXd layer_matrix(std::size_t layer,
                               std::span<const std::string> ids) const override;

 private:
  const HiddenStateRecord& find(std::string_view id) const;

  std::vector<HiddenStateRecord> records_;
  std::vector<std::size_t> order_;  // indices of records_ sorted by id
  std::size_t num_layers_ = 0;
  std::size_t hidden_dim_ = 0;
  std::string model_id_;
};

}  // namespace lec
