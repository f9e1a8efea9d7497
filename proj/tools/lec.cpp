// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0
//
// lec: command-line driver for extraction, probe sweeps and reports.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "lec/dataio.h"
#include "lec/errors.h"
#include "lec/fileio.h"
#include "lec/harness.h"
#include "lec/probe.h"
#include "lec/report.h"
#include "lec/rng.h"
#include "lec/tap_model.h"

namespace fs = std::filesystem;
using namespace lec;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t resolve_jobs(std::optional<std::size_t> flag) {
  if (flag) {
    if (*flag == 0) throw UsageError("--jobs must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("LEC_JOBS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError(fmt::format("LEC_JOBS='{}' is not a positive integer", env));
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// --- init-model -------------------------------------------------------------

struct InitModelArgs {
  fs::path out;
  TapConfig config;
  std::uint64_t seed = 0;
};

int cmd_init_model(const InitModelArgs& a) {
  const auto model = TapModel::random(a.config, a.seed);
  ensure_parent(a.out);
  save_checkpoint(model, a.out);
  fmt::print("wrote {} ({} layers, d={}, {} parameters, id {})\n", a.out.string(),
             model.num_layers(), a.config.hidden_dim, model.parameter_count(),
             checkpoint_model_id(model));
  return kExitOk;
}

// --- generate-planted ---------------------------------------------------------

struct PlantedArgs {
  fs::path out_dir;
  PlantedSpec spec;
};

int cmd_generate_planted(const PlantedArgs& a) {
  const auto data = generate_planted_dataset(a.spec);
  fs::create_directories(a.out_dir);
  write_dataset(a.out_dir / "dataset.jsonl", data.dataset);
  write_label_space(a.out_dir / "labels.json", data.dataset.label_space());
  write_embeddings(a.out_dir / "embeddings.lece", data.records);
  fmt::print("wrote {} examples, {} layers, d={}, signal in layer {} to {}\n", a.spec.n,
             a.spec.num_layers, a.spec.hidden_dim, a.spec.signal_layer, a.out_dir.string());
  return kExitOk;
}

// --- extract --------------------------------------------------------------------

struct ExtractArgs {
  fs::path model, labels, out;
  std::vector<fs::path> datasets;
  std::string pooling = "last_token";
};

int cmd_extract(const ExtractArgs& a) {
  const Pooling pooling = parse_pooling(a.pooling);
  const auto model = load_checkpoint(a.model);
  const auto dataset = ingest_dataset(a.datasets, a.labels);
  const auto model_id = checkpoint_model_id(model);
  const auto& cfg = model.config();

  ensure_parent(a.out);
  EmbeddingWriter writer(a.out, model_id, model.num_layers(), cfg.hidden_dim, pooling);
  std::size_t truncated = 0;
  for (const auto& ex : dataset.examples()) {
    auto tokens = encode_bytes(render_prompt(ex), cfg.vocab_size);
    if (tokens.empty()) throw ValidationError(fmt::format("example '{}' renders to no tokens", ex.id));
    if (tokens.size() > cfg.max_seq_len) {
      tokens.resize(cfg.max_seq_len);
      ++truncated;
    }
    const auto taps = forward_with_taps(model, tokens, pooling);
    HiddenStateRecord rec;
    rec.example_id = ex.id;
    rec.label = ex.label;
    rec.hidden_dim = cfg.hidden_dim;
    rec.model_id = model_id;
    rec.pooling = pooling;
    for (const auto& s : taps.states) rec.layer_states.emplace_back(s.data(), s.data() + s.size());
    writer.append(rec);
  }
  writer.finish();

  nlohmann::ordered_json m;
  m["format"] = "lec-extract/1";
  m["model_id"] = model_id;
  m["num_layers"] = model.num_layers();
  m["hidden_dim"] = cfg.hidden_dim;
  m["pooling"] = std::string(to_string(pooling));
  m["tokenizer"] = "bytes";
  m["max_seq_len"] = cfg.max_seq_len;
  m["truncation"] = "keep_first";
  m["truncated_examples"] = truncated;
  m["count"] = dataset.size();
  write_file_atomic(manifest_path_for(a.out), m.dump(2) + "\n");
  fmt::print("wrote {} records ({} truncated) to {}\n", dataset.size(), truncated, a.out.string());
  return kExitOk;
}

// --- sweep / crossval / concat ------------------------------------------------

struct RunArgs {
  fs::path plan, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

std::string human_summary(const SweepResult& r) {
  const auto summary = summarize_crossings(r, r.baselines);
  std::string s = fmt::format("mode: {}\nmodel: {}\n", to_string(r.mode), r.model_id);
  if (!r.task.empty()) s += fmt::format("task: {}\n", r.task);
  s += fmt::format("cells: {}\nevaluated examples: {}\n", r.cells.size(), r.test_n);
  std::size_t flagged = 0;
  for (const auto& c : r.cells) flagged += c.flags.empty() ? 0 : 1;
  if (flagged) s += fmt::format("flagged cells: {}\n", flagged);
  s += fmt::format("best layer: {} (max weighted F1 {:.4f})\n\n", summary.best_layer, summary.best_f1);
  const SweepResult one[] = {r};
  s += crossing_table_markdown(one, r.baselines);
  return s;
}

int cmd_run(RunMode mode, const RunArgs& a) {
  const std::size_t jobs = resolve_jobs(a.jobs);
  auto plan = load_plan(a.plan);
  if (a.seed) plan.seed = *a.seed;

  std::vector<fs::path> dataset_paths;
  for (const auto& d : plan.datasets) dataset_paths.push_back(plan.resolve(d));
  IngestOptions ingest{plan.balance_to, derive_seed(plan.seed, "ingest")};
  const auto dataset = make_split(ingest_dataset(dataset_paths, plan.resolve(plan.label_space), ingest),
                                  plan.train_fraction, plan.seed);
  const EmbeddingReader embeddings(plan.resolve(plan.embeddings));

  const auto result = run(mode, plan, embeddings, dataset, RunOptions{jobs});
  ensure_parent(a.out);
  write_results(result, a.out);
  const auto summary = human_summary(result);
  auto summary_path = a.out;
  summary_path.replace_extension(".summary.md");
  write_file_atomic(summary_path, summary);
  fmt::print("{}\nwrote {}\n", summary, a.out.string());
  return kExitOk;
}

// --- report -----------------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> results;
  std::optional<std::string> baselines;
  std::vector<std::string> formats{"md", "csv", "svg"};
  fs::path out_dir = ".";
};

std::string file_stem_for(const SweepResult& r, std::size_t i) {
  std::string s = fmt::format("curves-{:02}-", i + 1);
  for (char c : r.model_id) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return s + "-" + std::string(to_string(r.mode)) + ".svg";
}

int cmd_report(const ReportArgs& a) {
  std::vector<SweepResult> loaded;
  for (const auto& p : a.results) loaded.push_back(read_results(p));
  const auto results = merge_results(std::move(loaded));
  const auto baselines = a.baselines ? parse_baselines(*a.baselines) : results.front().baselines;

  bool md = false, csv = false, svg = false;
  for (const auto& f : a.formats) {
    if (f == "md") md = true;
    else if (f == "csv") csv = true;
    else if (f == "svg") svg = true;
    else throw UsageError(fmt::format("unknown format '{}' (expected md, csv, svg)", f));
  }
  fs::create_directories(a.out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, const std::string& text) {
    write_file_atomic(p, text);
    written.push_back(p);
  };
  if (md) emit(a.out_dir / "crossings.md", crossing_table_markdown(results, baselines));
  if (csv) emit(a.out_dir / "crossings.csv", crossing_table_csv(results, baselines));
  // Plot data always accompanies the plots.
  if (csv || svg) emit(a.out_dir / "curves.csv", learning_curves_csv(results));
  if (svg)
    for (std::size_t i = 0; i < results.size(); ++i)
      emit(a.out_dir / file_stem_for(results[i], i), learning_curves_svg(results[i], baselines));
  if (md) fmt::print("{}", crossing_table_markdown(results, baselines));
  for (const auto& p : written) fmt::print("wrote {}\n", p.string());
  return kExitOk;
}

// --- fit ----------------------------------------------------------------------------

struct FitArgs {
  fs::path embeddings, labels, out;
  std::vector<fs::path> datasets;
  std::size_t layer = 1;
  double alpha = 10.0;
  bool standardize = false;
};

int cmd_fit(const FitArgs& a) {
  const auto dataset = ingest_dataset(a.datasets, a.labels);
  const EmbeddingReader reader(a.embeddings);
  if (a.layer < 1 || a.layer > reader.num_layers())
    throw ValidationError(fmt::format("--layer {} is outside 1..{}", a.layer, reader.num_layers()));
  std::vector<std::string> ids;
  for (const auto& ex : dataset.examples()) ids.push_back(ex.id);
  const auto X = reader.layer_matrix(a.layer, ids);
  const auto probe = fit(X, dataset.labels(), ProbeConfig{a.alpha, true, a.standardize},
                         dataset.label_space());
  ensure_parent(a.out);
  save_probe(probe, a.out);
  const auto train = evaluate(dataset.labels(), probe.predict_rows(X), dataset.label_space().size());
  fmt::print("wrote {} ({} trainable parameters, training weighted F1 {:.4f})\n", a.out.string(),
             probe.trainable_parameter_count(), train.weighted_f1);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise linear probes over transformer hidden states"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lec 0.1.0");

  InitModelArgs init;
  auto* c_init = app.add_subcommand("init-model", "Write a seeded random tap-transformer checkpoint");
  c_init->add_option("--out", init.out, "checkpoint path (.lecm)")->required();
  c_init->add_option("--layers", init.config.n_layers)->capture_default_str();
  c_init->add_option("--hidden-dim", init.config.hidden_dim)->capture_default_str();
  c_init->add_option("--heads", init.config.n_heads)->capture_default_str();
  c_init->add_option("--mlp-dim", init.config.mlp_dim)->capture_default_str();
  c_init->add_option("--vocab", init.config.vocab_size)->capture_default_str();
  c_init->add_option("--max-seq-len", init.config.max_seq_len)->capture_default_str();
  c_init->add_option("--seed", init.seed)->capture_default_str();

  PlantedArgs planted;
  auto* c_planted = app.add_subcommand(
      "generate-planted", "Write a synthetic dataset with a class signal in one layer");
  c_planted->add_option("--out-dir", planted.out_dir)->required();
  c_planted->add_option("--n", planted.spec.n)->capture_default_str();
  c_planted->add_option("--layers", planted.spec.num_layers)->capture_default_str();
  c_planted->add_option("--hidden-dim", planted.spec.hidden_dim)->capture_default_str();
  c_planted->add_option("--signal-layer", planted.spec.signal_layer)->capture_default_str();
  c_planted->add_option("--margin", planted.spec.margin)->capture_default_str();
  c_planted->add_option("--seed", planted.spec.seed)->capture_default_str();

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Record per-layer hidden states for a dataset");
  c_extract->add_option("--model", extract.model, "checkpoint (.lecm)")->required();
  c_extract->add_option("--dataset", extract.datasets, "JSONL file(s)")->required();
  c_extract->add_option("--labels", extract.labels, "label space JSON")->required();
  c_extract->add_option("--out", extract.out, "embedding file (.lece)")->required();
  c_extract->add_option("--pooling", extract.pooling, "last_token | first_token | mean")
      ->capture_default_str();

  RunArgs run_args;
  std::vector<std::pair<CLI::App*, RunMode>> runners;
  for (auto [name, mode, help] :
       {std::tuple{"sweep", RunMode::sweep, "Per-layer probes over train sizes and seeds"},
        std::tuple{"crossval", RunMode::crossval, "Same grid scored by k-fold cross-validation"},
        std::tuple{"concat", RunMode::concat, "Probes on concatenated layers 1..l"}}) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--plan", run_args.plan, "plan YAML")->required();
    c->add_option("--out", run_args.out, "results JSONL")->required();
    c->add_option("--seed", run_args.seed, "overrides the plan seed");
    c->add_option("--jobs", run_args.jobs, "worker threads (default: $LEC_JOBS or all cores)");
    runners.emplace_back(c, mode);
  }

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Crossing tables and learning curves from results");
  c_report->add_option("results", report.results, "results JSONL file(s)")->required();
  c_report->add_option("--baselines", report.baselines, "preset name or NAME=F1,...");
  c_report->add_option("--format", report.formats, "md, csv, svg")->delimiter(',')->capture_default_str();
  c_report->add_option("--out-dir", report.out_dir)->capture_default_str();

  FitArgs fit_args;
  auto* c_fit = app.add_subcommand("fit", "Fit one probe on one layer and save it");
  c_fit->add_option("--embeddings", fit_args.embeddings)->required();
  c_fit->add_option("--dataset", fit_args.datasets)->required();
  c_fit->add_option("--labels", fit_args.labels)->required();
  c_fit->add_option("--layer", fit_args.layer)->required();
  c_fit->add_option("--alpha", fit_args.alpha)->capture_default_str();
  c_fit->add_flag("--standardize", fit_args.standardize);
  c_fit->add_option("--out", fit_args.out, "probe path (.lecp)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_init) return cmd_init_model(init);
    if (*c_planted) return cmd_generate_planted(planted);
    if (*c_extract) return cmd_extract(extract);
    for (auto& [c, mode] : runners)
      if (*c) return cmd_run(mode, run_args);
    if (*c_report) return cmd_report(report);
    if (*c_fit) return cmd_fit(fit_args);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
