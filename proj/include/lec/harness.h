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

#include "lec/core.h"
#include "lec/metrics.h"

namespace lec {

struct Baseline {
  std::string name;
  double f1 = 0.0;

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

// Named baseline sets: "content-safety-binary", "content-safety-level1",
// "content-safety-level2", "content-safety-level3", "prompt-injection".
std::optional<std::vector<Baseline>> baseline_preset(std::string_view name);
std::vector<std::string> baseline_preset_names();

// "name=0.82,other=0.7" or a preset name.
std::vector<Baseline> parse_baselines(std::string_view text);

// 5 ... 3000, covering every example count quoted in the published tables.
std::vector<std::size_t> default_train_sizes();

struct ExperimentPlan {
  // Paths as written; relative ones resolve against base_dir.
  std::string embeddings;
  std::vector<std::string> datasets;
  std::string label_space;
  std::filesystem::path base_dir;

  std::string task;
  std::vector<std::size_t> layers;  // empty means every layer
  std::vector<std::size_t> train_sizes = default_train_sizes();
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t seed = 0;
  double alpha = 10.0;
  double train_fraction = kDefaultTrainFraction;
  std::size_t folds = 10;
  std::optional<std::size_t> balance_to;
  std::vector<Baseline> baselines;

  std::filesystem::path resolve(const std::string& p) const;
  // Field-level checks that need no data; one message per problem.
  std::vector<std::string> problems() const;
  // Canonical JSON of every field (paths as written), used for plan_hash.
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

/// YAML plan file. Unknown keys and every invalid field are collected and
/// thrown together as a PlanError.
ExperimentPlan parse_plan(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

enum class RunMode { sweep, crossval, concat };
std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view text);

inline constexpr std::string_view kFlagDegenerateSubsample = "degenerate_subsample";
inline constexpr std::string_view kFlagDegenerateFold = "degenerate_fold";

struct CellResult {
  std::size_t layer = 0;
  std::size_t train_size = 0;
  std::uint64_t seed = 0;
  double weighted_f1 = 0.0;
  std::vector<std::string> flags;
  std::size_t feature_dim = 0;
  // Held-out report. For cross-validation it pools the out-of-fold
  // predictions, while weighted_f1 is the mean of the per-fold scores.
  EvalReport report;
  std::vector<double> fold_f1;
};

struct SweepResult {
  RunMode mode = RunMode::sweep;
  std::string model_id;
  std::string task;
  std::vector<std::size_t> layers;
  std::vector<std::size_t> train_sizes;
  std::vector<std::uint64_t> seeds;
  std::vector<Baseline> baselines;
  double alpha = 10.0;
  std::size_t folds = 0;  // crossval only
  // Ordered layer-major, then train size, then seed, as listed above.
  std::vector<CellResult> cells;
  // Number and fingerprint of evaluated examples: the fixed test split, or
  // the whole dataset for cross-validation.
  std::size_t test_n = 0;
  std::uint64_t test_hash = 0;
  std::uint64_t plan_hash = 0;

  const CellResult& cell(std::size_t layer, std::size_t train_size, std::uint64_t seed) const;
};

struct RunOptions {
  std::size_t jobs = 1;
};

// FNV-1a over the sorted ids joined with '\n'.
std::uint64_t id_set_hash(std::vector<std::string> ids);

/// Seeded subsample of `pool` (dataset positions) of the given size, returned
/// in ascending order. At sizes >= 2 * num_classes the draw is stratified by
/// class with at least one example per class present in the pool; below that
/// it is uniform. size == pool.size() returns the whole pool.
std::vector<std::size_t> draw_subsample(std::span<const std::size_t> pool,
                                        std::span<const std::size_t> labels, std::size_t size,
                                        std::size_t num_classes, std::uint64_t seed);

/// Stratified fold id (0..folds-1) for every pool entry: each class is shuffled,
/// classes are concatenated, and position p goes to fold p % folds.
std::vector<std::size_t> assign_folds(std::span<const std::size_t> pool,
                                      std::span<const std::size_t> labels, std::size_t folds,
                                      std::uint64_t seed);

// Problems that need the data: layer range, train sizes vs pool, missing ids.
std::vector<std::string> check_plan_against(const ExperimentPlan& plan, RunMode mode,
                                            const LayerFeatureSource& source,
                                            const LabeledDataset& dataset);

// The dataset must already be split (see make_split); crossval ignores the split.
SweepResult run_sweep(const ExperimentPlan& plan, const LayerFeatureSource& source,
                      const LabeledDataset& dataset, const RunOptions& options = {});
SweepResult run_crossval(const ExperimentPlan& plan, const LayerFeatureSource& source,
                         const LabeledDataset& dataset, const RunOptions& options = {});
SweepResult run_concat(const ExperimentPlan& plan, const LayerFeatureSource& source,
                       const LabeledDataset& dataset, const RunOptions& options = {});
SweepResult run(RunMode mode, const ExperimentPlan& plan, const LayerFeatureSource& source,
                const LabeledDataset& dataset, const RunOptions& options = {});

struct Crossing {
  std::size_t train_size = 0;
  double f1 = 0.0;
};

struct LayerSummary {
  std::size_t layer = 0;
  double max_f1 = 0.0;             // over every cell of the layer
  std::vector<double> mean_curve;  // mean over seeds, one per train size
  std::vector<std::optional<Crossing>> crossings;  // one per baseline
};

struct CrossingSummary {
  std::vector<Baseline> baselines;
  std::vector<LayerSummary> layers;
  std::size_t best_layer = 0;  // highest max_f1, ties to the lower layer
  double best_f1 = 0.0;
};

/// Per layer: the max F1 over cells, and for each baseline the smallest train
/// size whose mean-over-seeds F1 strictly exceeds it.
CrossingSummary summarize_crossings(const SweepResult& result, std::span<const Baseline> baselines);

// Results on disk: `<stem>.jsonl` with one cell per line and a sibling
// `<stem>.manifest.json`.
std::filesystem::path manifest_path_for(const std::filesystem::path& results_path);
std::string results_to_jsonl(const SweepResult& result);
std::string manifest_to_json(const SweepResult& result);
void write_results(const SweepResult& result, const std::filesystem::path& results_path);
SweepResult read_results(const std::filesystem::path& results_path);

}  // namespace lec
