// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <string>

#include <sys/wait.h>

#include <fmt/format.h>
#include <json.hpp>

#include "lec/dataio.h"
#include "lec/errors.h"
#include "lec/harness.h"
#include "lec/probe.h"
#include "support.h"

using namespace lec;
using lec::testing::slurp;
using lec::testing::spit;
using lec::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

Outcome lec_run(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const auto log = dir / "cli-output.txt";
  const std::string cmd = fmt::format("{} {} {} > {} 2>&1", env, quote(LEC_CLI_PATH), args,
                                      quote(log.string()));
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.output = slurp(log);
  return o;
}

std::string p(const fs::path& path) { return quote(path.string()); }

void write_text_dataset(const TempDir& dir, std::size_t n) {
  std::string lines;
  for (std::size_t i = 0; i < n; ++i)
    lines += fmt::format(R"({{"id": "t{}", "user_prompt": "example number {} {}", "label": {}}})", i, i,
                         std::string(i * 7, 'x'), i % 2) +
             "\n";
  spit(dir / "data.jsonl", lines);
  spit(dir / "labels.json", R"({"kind": "binary", "classes": ["safe", "unsafe"], "safe_class": "safe"})");
}

void write_plan(const TempDir& dir, const std::string& extra) {
  spit(dir / "plan.yaml",
       "embeddings: planted/embeddings.lece\n"
       "dataset: planted/dataset.jsonl\n"
       "label_space: planted/labels.json\n"
       "baselines: content-safety-binary\n" +
           extra);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  TempDir dir;
  CHECK(lec_run(dir, "").code == kExitUsage);
  CHECK(lec_run(dir, "frobnicate").code == kExitUsage);
  CHECK(lec_run(dir, "sweep").code == kExitUsage);
  CHECK(lec_run(dir, "init-model --out x.lecm --layers abc").code == kExitUsage);
  CHECK(lec_run(dir, "sweep --plan a --out b --jobs 0").code == kExitUsage);
  CHECK(lec_run(dir, "sweep --plan a --out b", "LEC_JOBS=many").code == kExitUsage);
  const auto v = lec_run(dir, "--version");
  CHECK(v.code == kExitOk);
  CHECK(v.output.find("lec") != std::string::npos);
  CHECK(lec_run(dir, "--help").code == kExitOk);
}

TEST_CASE("extract: tiny model over ten examples, twice") {
  TempDir dir;
  write_text_dataset(dir, 10);
  REQUIRE(lec_run(dir, fmt::format("init-model --out {} --layers 2 --hidden-dim 16 --heads 2 "
                                   "--mlp-dim 32 --max-seq-len 40 --seed 3",
                                   p(dir / "m.lecm")))
              .code == kExitOk);
  const std::string args = fmt::format("extract --model {} --dataset {} --labels {} --out ",
                                       p(dir / "m.lecm"), p(dir / "data.jsonl"), p(dir / "labels.json"));
  const auto first = lec_run(dir, args + p(dir / "a.lece"));
  REQUIRE(first.code == kExitOk);
  REQUIRE(lec_run(dir, args + p(dir / "b.lece")).code == kExitOk);

  EmbeddingReader reader(dir / "a.lece");
  CHECK(reader.header().num_layers == 2);
  CHECK(reader.header().hidden_dim == 16);
  CHECK(reader.header().count == 10);
  CHECK(reader.header().pooling == Pooling::last_token);
  CHECK(slurp(dir / "a.lece") == slurp(dir / "b.lece"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "a.manifest.json"));
  CHECK(manifest["num_layers"] == 2);
  CHECK(manifest["count"] == 10);
  CHECK(manifest["truncation"] == "keep_first");
  // Prompts longer than 40 bytes were cut.
  CHECK(manifest["truncated_examples"].get<int>() > 0);

  const auto mean = lec_run(dir, args + p(dir / "c.lece") + " --pooling mean");
  REQUIRE(mean.code == kExitOk);
  CHECK(EmbeddingReader(dir / "c.lece").header().pooling == Pooling::mean);
  CHECK(lec_run(dir, args + p(dir / "d.lece") + " --pooling max").code == kExitValidation);
}

TEST_CASE("extract: missing inputs are I/O errors naming the path") {
  TempDir dir;
  write_text_dataset(dir, 2);
  REQUIRE(lec_run(dir, "init-model --out " + p(dir / "m.lecm") + " --layers 1").code == kExitOk);
  const auto o = lec_run(dir, fmt::format("extract --model {} --dataset {} --labels {} --out {}",
                                          p(dir / "m.lecm"), p(dir / "nope.jsonl"),
                                          p(dir / "labels.json"), p(dir / "e.lece")));
  CHECK(o.code == kExitIo);
  CHECK(o.output.find("nope.jsonl") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "e.lece"));

  spit(dir / "bad.lecm", "LECMgarbage");
  const auto bad = lec_run(dir, fmt::format("extract --model {} --dataset {} --labels {} --out {}",
                                            p(dir / "bad.lecm"), p(dir / "data.jsonl"),
                                            p(dir / "labels.json"), p(dir / "e.lece")));
  CHECK(bad.code == kExitIo);
}

TEST_CASE("sweep on planted data names the signal layer and is reproducible") {
  TempDir dir;
  REQUIRE(lec_run(dir, "generate-planted --out-dir " + p(dir / "planted") +
                           " --n 300 --layers 6 --hidden-dim 16 --signal-layer 4 --margin 10 --seed 2")
              .code == kExitOk);
  write_plan(dir, "train_sizes: [5, 25, 100]\nseeds: [1, 2]\n");
  const auto a = lec_run(dir, fmt::format("sweep --plan {} --out {} --jobs 1", p(dir / "plan.yaml"),
                                          p(dir / "out/a.jsonl")));
  REQUIRE(a.code == kExitOk);
  CHECK(a.output.find("best layer: 4") != std::string::npos);
  CHECK(slurp(dir / "out/a.summary.md").find("best layer: 4") != std::string::npos);
  REQUIRE(lec_run(dir, fmt::format("sweep --plan {} --out {} --jobs 3", p(dir / "plan.yaml"),
                                   p(dir / "out/b.jsonl")))
              .code == kExitOk);
  CHECK(slurp(dir / "out/a.jsonl") == slurp(dir / "out/b.jsonl"));
  CHECK(slurp(dir / "out/a.manifest.json") == slurp(dir / "out/b.manifest.json"));

  REQUIRE(lec_run(dir, fmt::format("sweep --plan {} --out {} --seed 9", p(dir / "plan.yaml"),
                                   p(dir / "out/c.jsonl")))
              .code == kExitOk);
  CHECK(slurp(dir / "out/a.jsonl") != slurp(dir / "out/c.jsonl"));
  CHECK(read_results(dir / "out/c.jsonl").cells.size() == 6 * 3 * 2);
}

TEST_CASE("plan problems exit with 3 before any results are written") {
  TempDir dir;
  REQUIRE(lec_run(dir, "generate-planted --out-dir " + p(dir / "planted") + " --n 100 --layers 2 "
                           "--hidden-dim 4 --signal-layer 1")
              .code == kExitOk);
  write_plan(dir, "train_sizes: [5, 67]\n");
  const auto o = lec_run(dir, fmt::format("sweep --plan {} --out {}", p(dir / "plan.yaml"),
                                          p(dir / "r.jsonl")));
  CHECK(o.code == kExitValidation);
  CHECK(o.output.find("67") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "r.jsonl"));

  write_plan(dir, "train_sizes: [5]\nlayer: 1\n");
  CHECK(lec_run(dir, fmt::format("concat --plan {} --out {}", p(dir / "plan.yaml"), p(dir / "r.jsonl")))
            .code == kExitValidation);
  CHECK(lec_run(dir, fmt::format("sweep --plan {} --out {}", p(dir / "missing.yaml"), p(dir / "r.jsonl")))
            .code == kExitIo);
}

TEST_CASE("report: formats, baselines and refused merges") {
  TempDir dir;
  REQUIRE(lec_run(dir, "generate-planted --out-dir " + p(dir / "planted") + " --n 120 --layers 3 "
                           "--hidden-dim 8 --signal-layer 2 --margin 8")
              .code == kExitOk);
  write_plan(dir, "train_sizes: [5, 20, 60]\nseeds: [1]\nfolds: 4\n");
  REQUIRE(lec_run(dir, fmt::format("sweep --plan {} --out {}", p(dir / "plan.yaml"), p(dir / "s.jsonl")))
              .code == kExitOk);
  REQUIRE(lec_run(dir, fmt::format("concat --plan {} --out {}", p(dir / "plan.yaml"), p(dir / "c.jsonl")))
              .code == kExitOk);
  REQUIRE(lec_run(dir, fmt::format("crossval --plan {} --out {}", p(dir / "plan.yaml"), p(dir / "x.jsonl")))
              .code == kExitOk);

  const auto both = lec_run(dir, fmt::format("report {} {} --out-dir {}", p(dir / "s.jsonl"),
                                             p(dir / "c.jsonl"), p(dir / "rep")));
  REQUIRE(both.code == kExitOk);
  for (const char* f : {"crossings.md", "crossings.csv", "curves.csv"}) CHECK(fs::exists(dir / "rep" / f));
  std::size_t svgs = 0;
  for (const auto& e : fs::directory_iterator(dir / "rep")) svgs += e.path().extension() == ".svg";
  CHECK(svgs == 2);
  const auto md = slurp(dir / "rep/crossings.md");
  CHECK(md.find("F1 at # Examples to Beat GPT-4o (0.82)") != std::string::npos);
  CHECK(md.find("[concat]") != std::string::npos);

  REQUIRE(lec_run(dir, fmt::format("report {} --out-dir {} --format md --baselines ''",
                                   p(dir / "s.jsonl"), p(dir / "only-md")))
              .code == kExitOk);
  CHECK(fs::exists(dir / "only-md/crossings.md"));
  CHECK_FALSE(fs::exists(dir / "only-md/curves.csv"));
  CHECK(slurp(dir / "only-md/crossings.md").find("Examples to Beat") == std::string::npos);

  const auto refused = lec_run(dir, fmt::format("report {} {} --out-dir {}", p(dir / "s.jsonl"),
                                                p(dir / "x.jsonl"), p(dir / "bad")));
  CHECK(refused.code == kExitValidation);
  CHECK(refused.output.find(hex64(read_results(dir / "s.jsonl").test_hash)) != std::string::npos);
  CHECK(refused.output.find(hex64(read_results(dir / "x.jsonl").test_hash)) != std::string::npos);

  CHECK(lec_run(dir, fmt::format("report {} --format pdf", p(dir / "s.jsonl"))).code == kExitUsage);
  CHECK(lec_run(dir, fmt::format("report {} --baselines x", p(dir / "s.jsonl"))).code == kExitValidation);
  spit(dir / "junk.jsonl", "{}\n");
  CHECK(lec_run(dir, "report " + p(dir / "junk.jsonl")).code == kExitIo);
}

TEST_CASE("fit writes a loadable probe") {
  TempDir dir;
  REQUIRE(lec_run(dir, "generate-planted --out-dir " + p(dir / "planted") + " --n 80 --layers 3 "
                           "--hidden-dim 8 --signal-layer 3 --margin 10")
              .code == kExitOk);
  const std::string base = fmt::format("fit --embeddings {} --dataset {} --labels {} --out {}",
                                       p(dir / "planted/embeddings.lece"),
                                       p(dir / "planted/dataset.jsonl"),
                                       p(dir / "planted/labels.json"), p(dir / "probe.lecp"));
  const auto o = lec_run(dir, base + " --layer 3");
  REQUIRE(o.code == kExitOk);
  CHECK(o.output.find("9 trainable parameters") != std::string::npos);
  const auto probe = load_probe(dir / "probe.lecp");
  CHECK(probe.hidden_dim() == 8);
  CHECK(lec_run(dir, base + " --layer 4").code == kExitValidation);

  auto bytes = slurp(dir / "planted/embeddings.lece");
  spit(dir / "planted/embeddings.lece", bytes.substr(0, bytes.size() / 2));
  CHECK(lec_run(dir, base + " --layer 3").code == kExitIo);
}
