// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "lec/dataio.h"
#include "lec/errors.h"
#include "lec/harness.h"
#include "lec/rng.h"
#include "support.h"

using namespace lec;
using lec::testing::slurp;
using lec::testing::spit;
using lec::testing::TempDir;

namespace {

struct Fixture {
  LabeledDataset dataset;
  RecordSet records;
};

Fixture planted(std::size_t n, double margin, std::uint64_t seed = 0, std::size_t layers = 8,
                std::size_t dim = 32, std::size_t signal = 5) {
  PlantedSpec spec;
  spec.n = n;
  spec.num_layers = layers;
  spec.hidden_dim = dim;
  spec.signal_layer = signal;
  spec.margin = margin;
  spec.seed = seed;
  auto p = generate_planted_dataset(spec);
  return {make_split(p.dataset, 0.66, seed), RecordSet(std::move(p.records))};
}

ExperimentPlan plan_for(std::vector<std::size_t> sizes, std::vector<std::uint64_t> seeds = {1, 2, 3}) {
  ExperimentPlan plan;
  plan.embeddings = "e.lece";
  plan.datasets = {"d.jsonl"};
  plan.label_space = "ls.json";
  plan.train_sizes = std::move(sizes);
  plan.seeds = std::move(seeds);
  return plan;
}

SweepResult hand_grid(const std::map<std::size_t, std::vector<double>>& f1_by_size,
                      std::size_t layer = 1) {
  SweepResult r;
  r.layers = {layer};
  for (const auto& [size, f1s] : f1_by_size) r.train_sizes.push_back(size);
  const std::size_t seeds = f1_by_size.begin()->second.size();
  for (std::size_t k = 0; k < seeds; ++k) r.seeds.push_back(k + 1);
  for (const auto& [size, f1s] : f1_by_size)
    for (std::size_t k = 0; k < f1s.size(); ++k) {
      CellResult c;
      c.layer = layer;
      c.train_size = size;
      c.seed = k + 1;
      c.weighted_f1 = f1s[k];
      r.cells.push_back(c);
    }
  return r;
}

std::vector<std::size_t> class_labels(std::size_t n, std::size_t classes) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i % classes;
  return out;
}

}  // namespace

TEST_CASE("subsample: the full pool is returned whatever the seed") {
  const auto labels = class_labels(30, 3);
  std::vector<std::size_t> pool{29, 3, 7, 11, 0, 14, 20};
  std::vector<std::size_t> sorted = pool;
  std::sort(sorted.begin(), sorted.end());
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    CHECK(draw_subsample(pool, labels, pool.size(), 3, seed) == sorted);
}

TEST_CASE("property: subsamples are sorted, unique, drawn from the pool and stratified") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t classes = 2 + rng.below(3);
    const std::size_t n = 10 + rng.below(200);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(classes);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform() < 0.7) pool.push_back(i);
    if (pool.size() < 2) continue;
    const std::size_t size = 1 + rng.below(pool.size());
    const auto sub = draw_subsample(pool, labels, size, classes, trial);
    REQUIRE(sub.size() == size);
    CHECK(std::is_sorted(sub.begin(), sub.end()));
    CHECK(std::set<std::size_t>(sub.begin(), sub.end()).size() == size);
    const std::set<std::size_t> in_pool(pool.begin(), pool.end());
    for (auto i : sub) CHECK(in_pool.count(i) == 1);
    CHECK(draw_subsample(pool, labels, size, classes, trial) == sub);
    if (size >= 2 * classes) {
      std::vector<std::size_t> pool_counts(classes), sub_counts(classes);
      for (auto i : pool) ++pool_counts[labels[i]];
      for (auto i : sub) ++sub_counts[labels[i]];
      for (std::size_t c = 0; c < classes; ++c) {
        if (pool_counts[c] > 0) CHECK(sub_counts[c] >= 1);
        const double share = static_cast<double>(size) * pool_counts[c] / pool.size();
        CHECK(std::abs(static_cast<double>(sub_counts[c]) - share) <= static_cast<double>(classes));
      }
    }
  }
}

TEST_CASE("subsample: different seeds give independent draws") {
  const auto labels = class_labels(200, 2);
  std::vector<std::size_t> pool(200);
  std::iota(pool.begin(), pool.end(), 0);
  CHECK(draw_subsample(pool, labels, 20, 2, 1) != draw_subsample(pool, labels, 20, 2, 2));
  CHECK_THROWS_AS(draw_subsample(pool, labels, 0, 2, 1), ValidationError);
  CHECK_THROWS_AS(draw_subsample(pool, labels, 201, 2, 1), ValidationError);
}

TEST_CASE("folds: leave-one-out on four examples") {
  const auto labels = class_labels(4, 2);
  const std::vector<std::size_t> pool{0, 1, 2, 3};
  const auto folds = assign_folds(pool, labels, 4, 9);
  std::vector<std::size_t> per_fold(4);
  for (auto f : folds) ++per_fold[f];
  CHECK(per_fold == std::vector<std::size_t>{1, 1, 1, 1});
}

TEST_CASE("property: folds are balanced within one example per class") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.below(3);
    const std::size_t n = 20 + rng.below(200);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(classes);
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    const std::size_t k = 2 + rng.below(9);
    const auto folds = assign_folds(pool, labels, k, trial);
    std::vector<std::size_t> sizes(k);
    for (auto f : folds) ++sizes[f];
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> per(k);
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == c) ++per[folds[i]];
      const auto [clo, chi] = std::minmax_element(per.begin(), per.end());
      CHECK(*chi - *clo <= 1);
    }
    CHECK(assign_folds(pool, labels, k, trial) == folds);
  }
  const auto labels = class_labels(3, 2);
  const std::vector<std::size_t> pool{0, 1, 2};
  CHECK_THROWS_AS(assign_folds(pool, labels, 1, 0), ValidationError);
  CHECK_THROWS_AS(assign_folds(pool, labels, 4, 0), ValidationError);
}

TEST_CASE("id set hash ignores order") {
  CHECK(id_set_hash({"b", "a", "c"}) == id_set_hash({"c", "b", "a"}));
  CHECK(id_set_hash({"a", "b"}) != id_set_hash({"a", "bb"}));
  CHECK(id_set_hash({"ab"}) != id_set_hash({"a", "b"}));
}

TEST_CASE("sweep: planted layer is recovered") {
  const auto fx = planted(400, 10.0, 3);
  const auto plan = plan_for({5, 15, 50, 100, 200});
  const auto r = run_sweep(plan, fx.records, fx.dataset);
  CHECK(r.cells.size() == 8 * 5 * 3);
  const auto summary = summarize_crossings(r, {});
  CHECK(summary.best_layer == 5);
  for (const auto& c : r.cells) {
    if (c.layer == 5 && c.train_size >= 50) CHECK(c.weighted_f1 >= 0.99);
    if (c.layer != 5) CHECK(c.weighted_f1 <= 0.70);
  }
}

TEST_CASE("sweep: zero margin leaves every layer near chance") {
  const auto fx = planted(400, 0.0, 4);
  const auto r = run_sweep(plan_for({50, 200}), fx.records, fx.dataset);
  double sum = 0.0;
  for (const auto& c : r.cells) sum += c.weighted_f1;
  const double mean = sum / static_cast<double>(r.cells.size());
  CHECK(mean > 0.4);
  CHECK(mean < 0.6);
}

TEST_CASE("sweep: grid order, coverage and a fixed test set") {
  const auto fx = planted(120, 6.0, 1, 3, 8, 2);
  auto plan = plan_for({5, 20, 79}, {4, 9});
  plan.layers = {3, 1};
  const auto r = run_sweep(plan, fx.records, fx.dataset);
  REQUIRE(r.cells.size() == 2 * 3 * 2);
  std::size_t i = 0;
  for (std::size_t layer : {3, 1})
    for (std::size_t size : {5, 20, 79})
      for (std::uint64_t seed : {4, 9}) {
        CHECK(r.cells[i].layer == layer);
        CHECK(r.cells[i].train_size == size);
        CHECK(r.cells[i].seed == seed);
        CHECK(r.cells[i].report.n == r.test_n);
        CHECK(r.cells[i].feature_dim == 8);
        ++i;
      }
  std::vector<std::string> test_ids;
  for (auto t : fx.dataset.test_indices()) test_ids.push_back(fx.dataset.examples()[t].id);
  CHECK(r.test_n == test_ids.size());
  CHECK(r.test_hash == id_set_hash(test_ids));
  CHECK(r.plan_hash == plan.hash());
  // 79 is the whole train split, so both seeds train on identical rows.
  CHECK(r.cell(3, 79, 4).weighted_f1 == r.cell(3, 79, 9).weighted_f1);
  CHECK_THROWS_AS(r.cell(2, 5, 4), ValidationError);
}

TEST_CASE("sweep: deterministic across runs and thread counts") {
  const auto fx = planted(300, 4.0, 2);
  const auto plan = plan_for({5, 25, 100});
  const auto a = results_to_jsonl(run_sweep(plan, fx.records, fx.dataset, {1}));
  const auto b = results_to_jsonl(run_sweep(plan, fx.records, fx.dataset, {1}));
  const auto c = results_to_jsonl(run_sweep(plan, fx.records, fx.dataset, {4}));
  CHECK(a == b);
  CHECK(a == c);
  auto other = plan;
  other.seed = 1;
  CHECK(results_to_jsonl(run_sweep(other, fx.records, fx.dataset)) != a);
}

TEST_CASE("sweep: single-class subsamples are fit and flagged") {
  const auto fx = planted(100, 4.0, 5);
  const auto r = run_sweep(plan_for({1, 2}, {1, 2, 3, 4, 5, 6}), fx.records, fx.dataset);
  for (const auto& c : r.cells) {
    if (c.train_size == 1) {
      REQUIRE(c.flags.size() == 1);
      CHECK(c.flags[0] == kFlagDegenerateSubsample);
    }
    CHECK(c.weighted_f1 >= 0.0);
  }
}

TEST_CASE("sweep: plan problems are rejected before any fitting") {
  const auto fx = planted(100, 4.0);
  const std::size_t train = fx.dataset.train_indices().size();
  try {
    run_sweep(plan_for({5, train + 1}), fx.records, fx.dataset);
    FAIL("expected PlanError");
  } catch (const PlanError& e) {
    REQUIRE(e.problems().size() == 1);
    CHECK(e.problems()[0].find(std::to_string(train + 1)) != std::string::npos);
  }
  auto plan = plan_for({5});
  plan.layers = {9};
  CHECK_THROWS_AS(run_sweep(plan, fx.records, fx.dataset), PlanError);

  // Hidden states missing for some examples.
  auto few = fx.records.records();
  few.resize(50);
  try {
    run_sweep(plan_for({5}), RecordSet(few), fx.dataset);
    FAIL("expected PlanError");
  } catch (const PlanError& e) {
    CHECK(std::string(e.what()).find("50 example(s)") != std::string::npos);
  }

  PlantedSpec spec;
  spec.n = 50;
  const auto unsplit = generate_planted_dataset(spec);
  CHECK_THROWS_AS(run_sweep(plan_for({5}), RecordSet(unsplit.records), unsplit.dataset),
                  ValidationError);
}

TEST_CASE("crossings on a hand-built grid") {
  const auto grid = hand_grid({{5, {0.74}}, {15, {0.84}}});
  const std::vector<Baseline> baselines{{"GPT-4o", 0.82}, {"zero", 0.0}, {"impossible", 1.1}};
  const auto s = summarize_crossings(grid, baselines);
  REQUIRE(s.layers.size() == 1);
  const auto& layer = s.layers[0];
  CHECK(layer.max_f1 == 0.84);
  REQUIRE(layer.crossings.size() == 3);
  REQUIRE(layer.crossings[0]);
  CHECK(layer.crossings[0]->train_size == 15);
  CHECK(layer.crossings[0]->f1 == 0.84);
  REQUIRE(layer.crossings[1]);
  CHECK(layer.crossings[1]->train_size == 5);
  CHECK_FALSE(layer.crossings[2]);
}

TEST_CASE("crossings compare the mean over seeds, strictly") {
  // Mean at 5 is exactly the baseline, so the crossing moves to 15.
  const auto grid = hand_grid({{5, {0.7, 0.9}}, {15, {0.85, 0.83}}});
  const std::vector<Baseline> b{{"x", 0.8}};
  const auto s = summarize_crossings(grid, b);
  CHECK(s.layers[0].mean_curve[0] == doctest::Approx(0.8));
  CHECK(s.layers[0].max_f1 == 0.9);
  REQUIRE(s.layers[0].crossings[0]);
  CHECK(s.layers[0].crossings[0]->train_size == 15);
  CHECK(s.layers[0].crossings[0]->f1 == doctest::Approx(0.84));
}

TEST_CASE("best layer ties go to the lower layer") {
  auto a = hand_grid({{5, {0.9}}}, 2);
  const auto b = hand_grid({{5, {0.9}}}, 1);
  a.layers = {2, 1};
  a.cells.push_back(b.cells[0]);
  const auto s = summarize_crossings(a, {});
  CHECK(s.best_layer == 1);
  CHECK(s.best_f1 == 0.9);
  CHECK_THROWS_AS(summarize_crossings(SweepResult{}, {}), ValidationError);
}

TEST_CASE("concat: one layer matches the plain sweep") {
  const auto fx = planted(200, 5.0, 6);
  auto plan = plan_for({10, 60});
  plan.layers = {1};
  const auto sweep = run_sweep(plan, fx.records, fx.dataset);
  const auto concat = run_concat(plan, fx.records, fx.dataset);
  REQUIRE(sweep.cells.size() == concat.cells.size());
  for (std::size_t i = 0; i < sweep.cells.size(); ++i) {
    CHECK(sweep.cells[i].weighted_f1 == concat.cells[i].weighted_f1);
    CHECK(sweep.cells[i].feature_dim == concat.cells[i].feature_dim);
  }
  CHECK(concat.mode == RunMode::concat);
}

TEST_CASE("concat: feature width grows with the prefix") {
  const auto fx = planted(60, 5.0, 7, 6, 64, 2);
  auto plan = plan_for({10});
  plan.layers = {5, 1, 3};
  const auto r = run_concat(plan, fx.records, fx.dataset);
  CHECK(r.cell(5, 10, 1).feature_dim == 320);
  CHECK(r.cell(1, 10, 1).feature_dim == 64);
  CHECK(r.cell(3, 10, 1).feature_dim == 192);
}

TEST_CASE("concat: prefixes containing the signal layer separate the classes") {
  const auto fx = planted(1000, 10.0, 8);
  const auto r = run_concat(plan_for({50, 400, 660}), fx.records, fx.dataset);
  for (const auto& c : r.cells) {
    if (c.layer >= 5) CHECK(c.weighted_f1 >= 0.99);
    if (c.layer < 5) CHECK(c.weighted_f1 <= 0.70);
  }
  const auto s = summarize_crossings(r, {});
  for (const auto& layer : s.layers)
    if (layer.layer >= 5) CHECK(layer.max_f1 == 1.0);
}

TEST_CASE("crossval: separable data scores one and folds are recorded") {
  const auto fx = planted(200, 12.0, 9);
  auto plan = plan_for({40, 150}, {1, 2});
  plan.layers = {5, 2};
  plan.folds = 5;
  const auto r = run_crossval(plan, fx.records, fx.dataset);
  CHECK(r.mode == RunMode::crossval);
  CHECK(r.folds == 5);
  CHECK(r.test_n == 200);
  for (const auto& c : r.cells) {
    CHECK(c.fold_f1.size() == 5);
    CHECK(c.report.n == 200);
    const double mean = std::accumulate(c.fold_f1.begin(), c.fold_f1.end(), 0.0) / 5.0;
    CHECK(c.weighted_f1 == doctest::Approx(mean).epsilon(1e-12));
    if (c.layer == 5) CHECK(c.weighted_f1 == 1.0);
    CHECK(c.flags.empty());
  }
  CHECK(results_to_jsonl(r) == results_to_jsonl(run_crossval(plan, fx.records, fx.dataset, {3})));
}

TEST_CASE("crossval: pool limits and degenerate folds") {
  const auto fx = planted(20, 4.0, 10);
  auto plan = plan_for({19});
  plan.folds = 10;
  // Each training pool holds 18 examples.
  CHECK_THROWS_AS(run_crossval(plan, fx.records, fx.dataset), PlanError);
  plan.train_sizes = {18};
  CHECK_NOTHROW(run_crossval(plan, fx.records, fx.dataset));
  plan.folds = 21;
  plan.train_sizes = {1};
  CHECK_THROWS_AS(run_crossval(plan, fx.records, fx.dataset), PlanError);

  // Leave-one-out makes every test fold single-class.
  plan.folds = 20;
  plan.train_sizes = {10};
  const auto r = run_crossval(plan, fx.records, fx.dataset);
  for (const auto& c : r.cells) {
    REQUIRE(c.flags.size() == 1);
    CHECK(c.flags[0] == kFlagDegenerateFold);
  }
}

TEST_CASE("results round-trip through disk") {
  TempDir dir;
  const auto fx = planted(120, 6.0, 11, 3, 8, 2);
  auto plan = plan_for({5, 30});
  plan.task = "unit";
  plan.baselines = {{"b", 0.5}};
  plan.folds = 4;
  for (auto mode : {RunMode::sweep, RunMode::crossval}) {
    const auto r = run(mode, plan, fx.records, fx.dataset);
    const auto path = dir / (std::string(to_string(mode)) + ".jsonl");
    write_results(r, path);
    CHECK(std::filesystem::exists(manifest_path_for(path)));
    const auto back = read_results(path);
    CHECK(back.mode == mode);
    CHECK(back.model_id == r.model_id);
    CHECK(back.task == "unit");
    CHECK(back.layers == r.layers);
    CHECK(back.train_sizes == r.train_sizes);
    CHECK(back.seeds == r.seeds);
    CHECK(back.baselines == r.baselines);
    CHECK(back.test_n == r.test_n);
    CHECK(back.test_hash == r.test_hash);
    CHECK(back.plan_hash == r.plan_hash);
    CHECK(back.folds == r.folds);
    CHECK(results_to_jsonl(back) == results_to_jsonl(r));
    CHECK(manifest_to_json(back) == manifest_to_json(r));
  }
  const auto manifest = nlohmann::json::parse(slurp(manifest_path_for(dir / "sweep.jsonl")));
  CHECK(manifest["format"] == "lec-results/1");
  CHECK(manifest["cells"] == 3 * 2 * 3);
}

TEST_CASE("damaged result files are format errors") {
  TempDir dir;
  const auto fx = planted(60, 6.0, 12, 2, 4, 1);
  const auto r = run_sweep(plan_for({5}), fx.records, fx.dataset);
  const auto path = dir / "r.jsonl";
  write_results(r, path);
  const auto text = slurp(path);
  const auto manifest = slurp(manifest_path_for(path));

  spit(path, text.substr(0, text.find('\n') + 1));
  CHECK_THROWS_AS(read_results(path), FormatError);
  spit(path, text + "{broken\n");
  CHECK_THROWS_AS(read_results(path), FormatError);
  spit(path, text);
  auto m = nlohmann::json::parse(manifest);
  m["mode"] = "grid";
  spit(manifest_path_for(path), m.dump());
  CHECK_THROWS_AS(read_results(path), FormatError);
  m = nlohmann::json::parse(manifest);
  m["test_hash"] = "zz";
  spit(manifest_path_for(path), m.dump());
  CHECK_THROWS_AS(read_results(path), FormatError);
  m = nlohmann::json::parse(manifest);
  m.erase("seeds");
  spit(manifest_path_for(path), m.dump());
  CHECK_THROWS_AS(read_results(path), FormatError);
  std::filesystem::remove(manifest_path_for(path));
  CHECK_THROWS_AS(read_results(path), IoError);
}
