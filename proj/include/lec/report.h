// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lec/harness.h"

namespace lec {

/// Checks that every result was evaluated on the same examples (equal test
/// hashes) and returns them in the given order. Throws ValidationError naming
/// both hashes otherwise.
std::vector<SweepResult> merge_results(std::vector<SweepResult> results);

// "0.84 (15)" or "never".
std::string format_crossing_cell(const std::optional<Crossing>& crossing);

// Row label for a result: the model id, with the mode appended unless it is a plain sweep.
std::string result_label(const SweepResult& result);

/// One row per (result, layer). Columns: Model | Layer | Max Weighted F1,
/// then one "F1 at # Examples to Beat <name>" column per baseline.
std::string crossing_table_markdown(std::span<const SweepResult> results,
                                    std::span<const Baseline> baselines);

// Long format: model,mode,layer,max_f1,baseline,baseline_f1,crossing_train_size,crossing_f1.
std::string crossing_table_csv(std::span<const SweepResult> results,
                               std::span<const Baseline> baselines);

// model,mode,layer,train_size,mean_f1,min_f1,max_f1,n_seeds
std::string learning_curves_csv(std::span<const SweepResult> results);

/// Mean-over-seeds F1 against train size (log axis), one line per layer, with
/// dashed horizontal lines for the baselines. Output depends only on inputs.
std::string learning_curves_svg(const SweepResult& result, std::span<const Baseline> baselines);

}  // namespace lec
