// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/harness.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "lec/errors.h"
#include "lec/fileio.h"
#include "lec/probe.h"
#include "lec/rng.h"

namespace lec {

namespace {

using Eigen::Index;

// Runs task(i) for i in [0, n) on up to `jobs` threads. Results must be
// written to per-index slots; the first failing index (lowest i) is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  std::vector<std::jthread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
        }
      }
    });
  }
  workers.clear();
  if (err) std::rethrow_exception(err);
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(static_cast<Index>(rows[r]));
  return out;
}

std::vector<std::size_t> take(std::span<const std::size_t> values, std::span<const std::size_t> at) {
  std::vector<std::size_t> out;
  out.reserve(at.size());
  for (std::size_t i : at) out.push_back(values[i]);
  return out;
}

std::size_t distinct(std::span<const std::size_t> values) {
  return std::set<std::size_t>(values.begin(), values.end()).size();
}

std::vector<std::size_t> resolved_layers(const ExperimentPlan& plan, std::size_t num_layers) {
  if (!plan.layers.empty()) return plan.layers;
  std::vector<std::size_t> all(num_layers);
  std::iota(all.begin(), all.end(), std::size_t{1});
  return all;
}

struct FitOutcome {
  EvalReport report;
  std::vector<std::size_t> predictions;
  bool degenerate = false;
};

FitOutcome fit_and_evaluate(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                            std::span<const std::size_t> train_rows,
                            std::span<const std::size_t> test_rows, const ProbeConfig& config,
                            const LabelSpace& label_space) {
  const auto y_train = take(labels, train_rows);
  const auto probe = fit(take_rows(features, train_rows), y_train, config, label_space);
  FitOutcome out;
  out.predictions = probe.predict_rows(take_rows(features, test_rows));
  out.report = evaluate(take(labels, test_rows), out.predictions, label_space.size());
  out.degenerate = distinct(y_train) < 2;
  return out;
}

struct Task {
  std::size_t train_size_index;
  std::size_t seed_index;
};

SweepResult result_shell(RunMode mode, const ExperimentPlan& plan, const LayerFeatureSource& source,
                         std::vector<std::size_t> layers) {
  SweepResult r;
  r.mode = mode;
  r.model_id = source.model_id();
  r.task = plan.task;
  r.layers = std::move(layers);
  r.train_sizes = plan.train_sizes;
  r.seeds = plan.seeds;
  r.baselines = plan.baselines;
  r.alpha = plan.alpha;
  r.plan_hash = plan.hash();
  return r;
}

void throw_if_problems(const ExperimentPlan& plan, RunMode mode, const LayerFeatureSource& source,
                       const LabeledDataset& dataset) {
  auto problems = plan.problems();
  for (auto& p : check_plan_against(plan, mode, source, dataset)) problems.push_back(std::move(p));
  if (!problems.empty()) throw PlanError(std::move(problems));
}

std::vector<std::string> all_ids(const LabeledDataset& dataset) {
  std::vector<std::string> ids;
  ids.reserve(dataset.size());
  for (const auto& ex : dataset.examples()) ids.push_back(ex.id);
  return ids;
}

/// Single fixed split: sweep and concat share this path; they differ only in
/// how the feature matrix for a layer is built.
SweepResult run_holdout(RunMode mode, const ExperimentPlan& plan, const LayerFeatureSource& source,
                        const LabeledDataset& dataset, const RunOptions& options) {
  if (!dataset.is_split()) throw ValidationError("dataset must be split before a sweep");
  throw_if_problems(plan, mode, source, dataset);

  const auto ids = all_ids(dataset);
  const auto labels = dataset.labels();
  const auto train = dataset.train_indices();
  const auto test = dataset.test_indices();
  const auto& label_space = dataset.label_space();
  const ProbeConfig config{plan.alpha, true, false};

  SweepResult result = result_shell(mode, plan, source, resolved_layers(plan, source.num_layers()));
  result.test_n = test.size();
  {
    std::vector<std::string> test_ids;
    for (std::size_t i : test) test_ids.push_back(ids[i]);
    result.test_hash = id_set_hash(std::move(test_ids));
  }

  // Subsamples depend on (size, seed) only, so every layer trains on the same rows.
  std::vector<Task> tasks;
  std::vector<std::vector<std::size_t>> subsamples;
  for (std::size_t si = 0; si < plan.train_sizes.size(); ++si)
    for (std::size_t ki = 0; ki < plan.seeds.size(); ++ki) {
      tasks.push_back({si, ki});
      subsamples.push_back(draw_subsample(
          train, labels, plan.train_sizes[si], label_space.size(),
          derive_seed(plan.seed, "subsample", {plan.train_sizes[si], plan.seeds[ki]})));
    }

  Eigen::MatrixXd concat_features;
  std::size_t concat_upto = 0;
  for (std::size_t layer : result.layers) {
    Eigen::MatrixXd features;
    if (mode == RunMode::concat) {
      // Grow the prefix [1..layer] incrementally; requested layers ascend or not.
      if (layer < concat_upto) {
        concat_features.resize(0, 0);
        concat_upto = 0;
      }
      for (std::size_t l = concat_upto + 1; l <= layer; ++l) {
        const Eigen::MatrixXd next = source.layer_matrix(l, ids);
        Eigen::MatrixXd grown(next.rows(), concat_features.cols() + next.cols());
        if (concat_features.cols() > 0) grown.leftCols(concat_features.cols()) = concat_features;
        grown.rightCols(next.cols()) = next;
        concat_features = std::move(grown);
      }
      concat_upto = layer;
      features = concat_features;
    } else {
      features = source.layer_matrix(layer, ids);
    }

    std::vector<CellResult> cells(tasks.size());
    parallel_for(tasks.size(), options.jobs, [&](std::size_t t) {
      const auto outcome =
          fit_and_evaluate(features, labels, subsamples[t], test, config, label_space);
      auto& c = cells[t];
      c.layer = layer;
      c.train_size = plan.train_sizes[tasks[t].train_size_index];
      c.seed = plan.seeds[tasks[t].seed_index];
      c.weighted_f1 = outcome.report.weighted_f1;
      c.report = outcome.report;
      c.feature_dim = static_cast<std::size_t>(features.cols());
      if (outcome.degenerate) c.flags.emplace_back(kFlagDegenerateSubsample);
    });
    for (auto& c : cells) result.cells.push_back(std::move(c));
  }
  return result;
}

}  // namespace

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::sweep:
      return "sweep";
    case RunMode::crossval:
      return "crossval";
    case RunMode::concat:
      return "concat";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view text) {
  if (text == "sweep") return RunMode::sweep;
  if (text == "crossval") return RunMode::crossval;
  if (text == "concat") return RunMode::concat;
  throw ValidationError(fmt::format("unknown run mode '{}'", text));
}

const CellResult& SweepResult::cell(std::size_t layer, std::size_t train_size,
                                    std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.layer == layer && c.train_size == train_size && c.seed == seed) return c;
  throw ValidationError(
      fmt::format("no cell for layer {}, train size {}, seed {}", layer, train_size, seed));
}

std::uint64_t id_set_hash(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& id : ids) {
    h = fnv1a64(id, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::vector<std::size_t> draw_subsample(std::span<const std::size_t> pool,
                                        std::span<const std::size_t> labels, std::size_t size,
                                        std::size_t num_classes, std::uint64_t seed) {
  if (size == 0) throw ValidationError("subsample size must be >= 1");
  if (size > pool.size())
    throw ValidationError(fmt::format("subsample of {} from a pool of {}", size, pool.size()));
  std::vector<std::size_t> out;
  if (size == pool.size()) {
    out.assign(pool.begin(), pool.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  Rng rng(seed);
  if (size >= 2 * num_classes) {
    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i : pool) members.at(labels[i]).push_back(i);
    std::vector<std::size_t> counts;
    for (const auto& m : members) counts.push_back(m.size());
    auto quota = apportion(counts, size);
    // Every class present in the pool gets at least one example.
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (counts[c] == 0 || quota[c] > 0) continue;
      const auto donor = static_cast<std::size_t>(
          std::max_element(quota.begin(), quota.end()) - quota.begin());
      --quota[donor];
      ++quota[c];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto& m = members[c];
      std::sort(m.begin(), m.end());
      rng.shuffle(std::span<std::size_t>(m));
      out.insert(out.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
  } else {
    std::vector<std::size_t> shuffled(pool.begin(), pool.end());
    std::sort(shuffled.begin(), shuffled.end());
    rng.shuffle(std::span<std::size_t>(shuffled));
    out.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(size));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> assign_folds(std::span<const std::size_t> pool,
                                      std::span<const std::size_t> labels, std::size_t folds,
                                      std::uint64_t seed) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (folds > pool.size())
    throw ValidationError(fmt::format("{} folds over {} examples", folds, pool.size()));
  std::size_t num_classes = 0;
  for (std::size_t i : pool) num_classes = std::max(num_classes, labels[i] + 1);
  std::vector<std::vector<std::size_t>> members(num_classes);  // positions into pool
  for (std::size_t p = 0; p < pool.size(); ++p) members[labels[pool[p]]].push_back(p);
  Rng rng(seed);
  std::vector<std::size_t> fold_of(pool.size(), 0);
  std::size_t position = 0;
  for (auto& m : members) {
    rng.shuffle(std::span<std::size_t>(m));
    for (std::size_t p : m) fold_of[p] = position++ % folds;
  }
  return fold_of;
}

std::vector<std::string> check_plan_against(const ExperimentPlan& plan, RunMode mode,
                                            const LayerFeatureSource& source,
                                            const LabeledDataset& dataset) {
  std::vector<std::string> out;
  for (std::size_t l : plan.layers)
    if (l < 1 || l > source.num_layers())
      out.push_back(fmt::format("layers: {} is outside 1..{}", l, source.num_layers()));

  std::size_t missing = 0;
  std::string first_missing;
  for (const auto& ex : dataset.examples())
    if (!source.contains(ex.id)) {
      if (missing++ == 0) first_missing = ex.id;
    }
  if (missing > 0)
    out.push_back(fmt::format("embeddings: {} example(s) have no hidden states (first: '{}')",
                              missing, first_missing));

  std::size_t pool = 0;
  std::string pool_name;
  if (mode == RunMode::crossval) {
    if (plan.folds > dataset.size())
      out.push_back(fmt::format("folds: {} exceeds the {} available examples", plan.folds,
                                dataset.size()));
    const std::size_t fold_max = (dataset.size() + plan.folds - 1) / std::max<std::size_t>(plan.folds, 1);
    pool = dataset.size() > fold_max ? dataset.size() - fold_max : 0;
    pool_name = "the smallest cross-validation training pool";
  } else {
    pool = dataset.train_indices().size();
    pool_name = "the train split";
  }
  for (std::size_t s : plan.train_sizes)
    if (s > pool)
      out.push_back(fmt::format("train_sizes: {} exceeds {} ({} examples)", s, pool_name, pool));
  return out;
}

SweepResult run_sweep(const ExperimentPlan& plan, const LayerFeatureSource& source,
                      const LabeledDataset& dataset, const RunOptions& options) {
  return run_holdout(RunMode::sweep, plan, source, dataset, options);
}

SweepResult run_concat(const ExperimentPlan& plan, const LayerFeatureSource& source,
                       const LabeledDataset& dataset, const RunOptions& options) {
  return run_holdout(RunMode::concat, plan, source, dataset, options);
}

SweepResult run_crossval(const ExperimentPlan& plan, const LayerFeatureSource& source,
                         const LabeledDataset& dataset, const RunOptions& options) {
  throw_if_problems(plan, RunMode::crossval, source, dataset);
  const auto ids = all_ids(dataset);
  const auto labels = dataset.labels();
  std::vector<std::size_t> everything(dataset.size());
  std::iota(everything.begin(), everything.end(), std::size_t{0});
  const auto& label_space = dataset.label_space();
  const ProbeConfig config{plan.alpha, true, false};
  const std::size_t k = plan.folds;

  SweepResult result =
      result_shell(RunMode::crossval, plan, source, resolved_layers(plan, source.num_layers()));
  result.folds = k;
  result.test_n = dataset.size();
  result.test_hash = id_set_hash(ids);

  // Per seed: the fold partition, and per fold its train pool and test rows.
  struct FoldSet {
    std::vector<std::vector<std::size_t>> train_pool, test_rows;
    bool degenerate_test = false;
  };
  std::vector<FoldSet> fold_sets(plan.seeds.size());
  for (std::size_t ki = 0; ki < plan.seeds.size(); ++ki) {
    const auto fold_of =
        assign_folds(everything, labels, k, derive_seed(plan.seed, "folds", {plan.seeds[ki]}));
    auto& fs = fold_sets[ki];
    fs.train_pool.resize(k);
    fs.test_rows.resize(k);
    for (std::size_t i = 0; i < everything.size(); ++i)
      for (std::size_t f = 0; f < k; ++f) (fold_of[i] == f ? fs.test_rows : fs.train_pool)[f].push_back(i);
    for (const auto& rows : fs.test_rows)
      if (distinct(take(labels, rows)) < 2) fs.degenerate_test = true;
  }

  std::vector<Task> tasks;
  for (std::size_t si = 0; si < plan.train_sizes.size(); ++si)
    for (std::size_t ki = 0; ki < plan.seeds.size(); ++ki) tasks.push_back({si, ki});

  for (std::size_t layer : result.layers) {
    const Eigen::MatrixXd features = source.layer_matrix(layer, ids);
    std::vector<CellResult> cells(tasks.size());
    parallel_for(tasks.size(), options.jobs, [&](std::size_t t) {
      const std::size_t size = plan.train_sizes[tasks[t].train_size_index];
      const std::uint64_t seed = plan.seeds[tasks[t].seed_index];
      const auto& fs = fold_sets[tasks[t].seed_index];
      auto& c = cells[t];
      c.layer = layer;
      c.train_size = size;
      c.seed = seed;
      c.feature_dim = static_cast<std::size_t>(features.cols());
      ConfusionMatrix pooled(label_space.size());
      bool degenerate = fs.degenerate_test;
      double sum = 0.0;
      for (std::size_t f = 0; f < k; ++f) {
        const auto sub = draw_subsample(fs.train_pool[f], labels, size, label_space.size(),
                                        derive_seed(plan.seed, "cv-subsample", {size, seed, f}));
        const auto outcome =
            fit_and_evaluate(features, labels, sub, fs.test_rows[f], config, label_space);
        degenerate = degenerate || outcome.degenerate;
        for (std::size_t r = 0; r < fs.test_rows[f].size(); ++r)
          pooled.add(labels[fs.test_rows[f][r]], outcome.predictions[r]);
        c.fold_f1.push_back(outcome.report.weighted_f1);
        sum += outcome.report.weighted_f1;
      }
      c.weighted_f1 = sum / static_cast<double>(k);
      c.report = evaluate(pooled);
      if (degenerate) c.flags.emplace_back(kFlagDegenerateFold);
    });
    for (auto& c : cells) result.cells.push_back(std::move(c));
  }
  return result;
}

SweepResult run(RunMode mode, const ExperimentPlan& plan, const LayerFeatureSource& source,
                const LabeledDataset& dataset, const RunOptions& options) {
  switch (mode) {
    case RunMode::sweep:
      return run_sweep(plan, source, dataset, options);
    case RunMode::crossval:
      return run_crossval(plan, source, dataset, options);
    case RunMode::concat:
      return run_concat(plan, source, dataset, options);
  }
  throw ValidationError("unknown run mode");
}

CrossingSummary summarize_crossings(const SweepResult& result, std::span<const Baseline> baselines) {
  if (result.cells.empty()) throw ValidationError("cannot summarize an empty result grid");
  CrossingSummary summary;
  summary.baselines.assign(baselines.begin(), baselines.end());
  bool have_best = false;
  for (std::size_t layer : result.layers) {
    LayerSummary ls;
    ls.layer = layer;
    bool any = false;
    for (const auto& c : result.cells)
      if (c.layer == layer) {
        ls.max_f1 = any ? std::max(ls.max_f1, c.weighted_f1) : c.weighted_f1;
        any = true;
      }
    if (!any) continue;
    for (std::size_t size : result.train_sizes) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& c : result.cells)
        if (c.layer == layer && c.train_size == size) {
          sum += c.weighted_f1;
          ++n;
        }
      ls.mean_curve.push_back(n ? sum / static_cast<double>(n) : 0.0);
    }
    for (const auto& b : baselines) {
      std::optional<Crossing> crossing;
      for (std::size_t i = 0; i < result.train_sizes.size(); ++i)
        if (ls.mean_curve[i] > b.f1) {
          crossing = Crossing{result.train_sizes[i], ls.mean_curve[i]};
          break;
        }
      ls.crossings.push_back(crossing);
    }
    if (!have_best || ls.max_f1 > summary.best_f1 ||
        (ls.max_f1 == summary.best_f1 && layer < summary.best_layer)) {
      summary.best_layer = layer;
      summary.best_f1 = ls.max_f1;
      have_best = true;
    }
    summary.layers.push_back(std::move(ls));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Result files

std::filesystem::path manifest_path_for(const std::filesystem::path& results_path) {
  auto p = results_path;
  p.replace_extension(".manifest.json");
  return p;
}

std::string results_to_jsonl(const SweepResult& result) {
  std::string out;
  for (const auto& c : result.cells) {
    nlohmann::ordered_json j;
    j["layer"] = c.layer;
    j["train_size"] = c.train_size;
    j["seed"] = c.seed;
    j["weighted_f1"] = c.weighted_f1;
    j["flags"] = c.flags;
    j["feature_dim"] = c.feature_dim;
    if (!c.fold_f1.empty()) j["fold_f1"] = c.fold_f1;
    j["report"] = to_json(c.report);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string manifest_to_json(const SweepResult& result) {
  nlohmann::ordered_json j;
  j["format"] = "lec-results/1";
  j["mode"] = std::string(to_string(result.mode));
  j["model_id"] = result.model_id;
  j["task"] = result.task;
  j["layers"] = result.layers;
  j["train_sizes"] = result.train_sizes;
  j["seeds"] = result.seeds;
  j["alpha"] = result.alpha;
  j["folds"] = result.folds;
  auto& b = j["baselines"] = nlohmann::ordered_json::array();
  for (const auto& base : result.baselines) b.push_back({{"name", base.name}, {"f1", base.f1}});
  j["cells"] = result.cells.size();
  j["test_n"] = result.test_n;
  j["test_hash"] = hex64(result.test_hash);
  j["plan_hash"] = hex64(result.plan_hash);
  return j.dump(2) + "\n";
}

void write_results(const SweepResult& result, const std::filesystem::path& results_path) {
  write_file_atomic(results_path, results_to_jsonl(result));
  write_file_atomic(manifest_path_for(results_path), manifest_to_json(result));
}

SweepResult read_results(const std::filesystem::path& results_path) {
  const auto manifest_path = manifest_path_for(results_path);
  SweepResult r;
  try {
    const auto m = nlohmann::json::parse(read_file(manifest_path));
    if (m.at("format").get<std::string>() != "lec-results/1")
      throw FormatError(manifest_path, "unsupported results format");
    r.mode = parse_run_mode(m.at("mode").get<std::string>());
    r.model_id = m.at("model_id").get<std::string>();
    r.task = m.at("task").get<std::string>();
    r.layers = m.at("layers").get<std::vector<std::size_t>>();
    r.train_sizes = m.at("train_sizes").get<std::vector<std::size_t>>();
    r.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    r.alpha = m.at("alpha").get<double>();
    r.folds = m.at("folds").get<std::size_t>();
    for (const auto& b : m.at("baselines"))
      r.baselines.push_back({b.at("name").get<std::string>(), b.at("f1").get<double>()});
    r.test_n = m.at("test_n").get<std::size_t>();
    r.test_hash = std::stoull(m.at("test_hash").get<std::string>(), nullptr, 16);
    r.plan_hash = std::stoull(m.at("plan_hash").get<std::string>(), nullptr, 16);
    const auto expected_cells = m.at("cells").get<std::size_t>();

    const auto text = read_file(results_path);
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string_view line(text.data() + pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        throw FormatError(results_path, fmt::format("line {}: malformed JSON", line_no));
      }
      CellResult c;
      c.layer = j.at("layer").get<std::size_t>();
      c.train_size = j.at("train_size").get<std::size_t>();
      c.seed = j.at("seed").get<std::uint64_t>();
      c.weighted_f1 = j.at("weighted_f1").get<double>();
      c.flags = j.at("flags").get<std::vector<std::string>>();
      c.feature_dim = j.value("feature_dim", std::size_t{0});
      if (j.contains("fold_f1")) c.fold_f1 = j["fold_f1"].get<std::vector<double>>();
      if (j.contains("report")) c.report = eval_report_from_json(j["report"]);
      r.cells.push_back(std::move(c));
    }
    if (r.cells.size() != expected_cells)
      throw FormatError(results_path, fmt::format("{} cells, manifest says {}", r.cells.size(),
                                                  expected_cells));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(results_path, std::string("bad results file: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(results_path, std::string("bad results file: ") + e.what());
  } catch (const std::logic_error&) {  // hash fields that are not hex
    throw FormatError(manifest_path, "test_hash and plan_hash must be hex strings");
  }
  return r;
}

}  // namespace lec
