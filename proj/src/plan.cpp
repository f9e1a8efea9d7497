// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "lec/errors.h"
#include "lec/fileio.h"
#include "lec/harness.h"
#include "lec/rng.h"

namespace lec {

namespace {

struct Preset {
  std::string_view name;
  std::vector<Baseline> baselines;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"content-safety-binary",
       {{"Llama Guard 3 1B", 0.65}, {"Llama Guard 3 8B", 0.71}, {"GPT-4o", 0.82}}},
      {"content-safety-level1",
       {{"Llama Guard 3 1B", 0.40}, {"Llama Guard 3 8B", 0.56}, {"GPT-4o", 0.58}}},
      {"content-safety-level2",
       {{"Llama Guard 3 1B", 0.34}, {"Llama Guard 3 8B", 0.37}, {"GPT-4o", 0.47}}},
      {"content-safety-level3",
       {{"Llama Guard 3 1B", 0.34}, {"Llama Guard 3 8B", 0.38}, {"GPT-4o", 0.44}}},
      {"prompt-injection", {{"ProtectAI DeBERTa v3", 0.73}, {"GPT-4o", 0.92}}},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<std::vector<Baseline>> baseline_preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p.baselines;
  return std::nullopt;
}

std::vector<std::string> baseline_preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.emplace_back(p.name);
  return out;
}

std::vector<Baseline> parse_baselines(std::string_view text) {
  if (auto preset = baseline_preset(trim(text))) return *preset;
  std::vector<Baseline> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string item = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.rfind('=');
    if (eq == std::string::npos)
      throw ValidationError(fmt::format(
          "baseline '{}' is neither NAME=F1 nor a preset ({})", item,
          fmt::join(baseline_preset_names(), ", ")));
    Baseline b{trim(std::string_view(item).substr(0, eq)), 0.0};
    const std::string value = trim(std::string_view(item).substr(eq + 1));
    try {
      std::size_t used = 0;
      b.f1 = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("baseline '{}' has a non-numeric F1 '{}'", b.name, value));
    }
    if (b.name.empty()) throw ValidationError("baseline with an empty name");
    if (!std::isfinite(b.f1)) throw ValidationError(fmt::format("baseline '{}' is not finite", b.name));
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::size_t> default_train_sizes() {
  return {5, 15, 25, 35, 45, 55, 65, 75, 100, 135, 200, 300, 500, 900, 1000, 2000, 3000};
}

std::filesystem::path ExperimentPlan::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

std::vector<std::string> ExperimentPlan::problems() const {
  std::vector<std::string> out;
  if (embeddings.empty()) out.emplace_back("embeddings: required");
  if (datasets.empty()) out.emplace_back("dataset: required");
  if (label_space.empty()) out.emplace_back("label_space: required");
  if (train_sizes.empty()) out.emplace_back("train_sizes: must not be empty");
  for (std::size_t i = 0; i < train_sizes.size(); ++i) {
    if (train_sizes[i] < 1) out.push_back(fmt::format("train_sizes[{}]: must be >= 1", i));
    if (i > 0 && train_sizes[i] <= train_sizes[i - 1])
      out.push_back(fmt::format("train_sizes: must be strictly increasing ({} after {})",
                                train_sizes[i], train_sizes[i - 1]));
  }
  if (seeds.empty()) out.emplace_back("seeds: must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    out.emplace_back("seeds: must be unique");
  std::set<std::size_t> seen_layers;
  for (std::size_t l : layers) {
    if (l < 1) out.emplace_back("layers: indices start at 1");
    if (!seen_layers.insert(l).second) out.push_back(fmt::format("layers: {} listed twice", l));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    out.push_back(fmt::format("alpha: must be finite and >= 0 (got {})", alpha));
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    out.push_back(fmt::format("train_fraction: must lie in (0, 1) (got {})", train_fraction));
  if (folds < 2) out.push_back(fmt::format("folds: must be >= 2 (got {})", folds));
  if (balance_to && *balance_to < 2) out.emplace_back("balance_to: must be >= 2");
  std::set<std::string> names;
  for (const auto& b : baselines) {
    if (b.name.empty()) out.emplace_back("baselines: empty name");
    if (!names.insert(b.name).second)
      out.push_back(fmt::format("baselines: '{}' listed twice", b.name));
    if (!std::isfinite(b.f1)) out.push_back(fmt::format("baselines: '{}' is not finite", b.name));
  }
  return out;
}

std::string ExperimentPlan::canonical_json() const {
  nlohmann::ordered_json j;
  j["embeddings"] = embeddings;
  j["dataset"] = datasets;
  j["label_space"] = label_space;
  j["task"] = task;
  j["layers"] = layers;
  j["train_sizes"] = train_sizes;
  j["seeds"] = seeds;
  j["seed"] = seed;
  j["alpha"] = alpha;
  j["train_fraction"] = train_fraction;
  j["folds"] = folds;
  j["balance_to"] = balance_to ? nlohmann::ordered_json(*balance_to) : nlohmann::ordered_json();
  auto& b = j["baselines"] = nlohmann::ordered_json::array();
  for (const auto& base : baselines) b.push_back({{"name", base.name}, {"f1", base.f1}});
  return j.dump();
}

std::uint64_t ExperimentPlan::hash() const { return fnv1a64(canonical_json()); }

namespace {

// yaml-cpp happily wraps "-1" into an unsigned type.
bool negative_scalar(const YAML::Node& node) {
  return node.IsScalar() && node.Scalar().starts_with('-');
}

template <typename T>
std::optional<T> scalar(const YAML::Node& node, std::string_view key,
                        std::vector<std::string>& problems) {
  try {
    if (std::is_unsigned_v<T> && negative_scalar(node)) {
      problems.push_back(fmt::format("{}: expected a non-negative integer", key));
      return std::nullopt;
    }
    return node.as<T>();
  } catch (const YAML::Exception&) {
    problems.push_back(fmt::format("{}: expected {}", key,
                                   std::is_same_v<T, std::string> ? "a string" : "a number"));
    return std::nullopt;
  }
}

template <typename T>
std::optional<std::vector<T>> list(const YAML::Node& node, std::string_view key,
                                   std::vector<std::string>& problems) {
  if (!node.IsSequence()) {
    problems.push_back(fmt::format("{}: expected a list", key));
    return std::nullopt;
  }
  std::vector<T> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    try {
      if (negative_scalar(node[i])) {
        problems.push_back(fmt::format("{}[{}]: expected a non-negative integer", key, i));
        continue;
      }
      out.push_back(node[i].as<T>());
    } catch (const YAML::Exception&) {
      problems.push_back(fmt::format("{}[{}]: expected a non-negative integer", key, i));
    }
  }
  return out;
}

}  // namespace

ExperimentPlan parse_plan(std::string_view text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw PlanError({fmt::format("plan is not valid YAML: {}", e.what())});
  }
  if (!root.IsMap()) throw PlanError({"plan must be a mapping of keys to values"});

  static const std::set<std::string> known = {
      "embeddings", "dataset",        "label_space", "task",       "layers",
      "train_sizes", "seeds",         "seed",        "alpha",      "train_fraction",
      "folds",      "balance_to",     "baselines"};
  ExperimentPlan plan;
  plan.base_dir = base_dir;
  std::vector<std::string> problems;

  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (!known.count(key)) {
      problems.push_back(fmt::format("{}: unknown key", key));
      continue;
    }
    if (key == "embeddings") {
      if (auto s = scalar<std::string>(v, key, problems)) plan.embeddings = *s;
    } else if (key == "label_space") {
      if (auto s = scalar<std::string>(v, key, problems)) plan.label_space = *s;
    } else if (key == "task") {
      if (auto s = scalar<std::string>(v, key, problems)) plan.task = *s;
    } else if (key == "dataset") {
      if (v.IsSequence()) {
        for (std::size_t i = 0; i < v.size(); ++i)
          if (auto s = scalar<std::string>(v[i], fmt::format("dataset[{}]", i), problems))
            plan.datasets.push_back(*s);
      } else if (auto s = scalar<std::string>(v, key, problems)) {
        plan.datasets = {*s};
      }
    } else if (key == "layers") {
      if (v.IsScalar() && v.as<std::string>() == "all") {
        plan.layers.clear();
      } else if (auto l = list<std::size_t>(v, key, problems)) {
        plan.layers = *l;
      }
    } else if (key == "train_sizes") {
      if (v.IsScalar() && v.as<std::string>() == "default") {
        plan.train_sizes = default_train_sizes();
      } else if (auto l = list<std::size_t>(v, key, problems)) {
        plan.train_sizes = *l;
      }
    } else if (key == "seeds") {
      if (auto l = list<std::uint64_t>(v, key, problems)) plan.seeds = *l;
    } else if (key == "seed") {
      if (auto s = scalar<std::uint64_t>(v, key, problems)) plan.seed = *s;
    } else if (key == "alpha") {
      if (auto s = scalar<double>(v, key, problems)) plan.alpha = *s;
    } else if (key == "train_fraction") {
      if (auto s = scalar<double>(v, key, problems)) plan.train_fraction = *s;
    } else if (key == "folds") {
      if (auto s = scalar<std::size_t>(v, key, problems)) plan.folds = *s;
    } else if (key == "balance_to") {
      if (auto s = scalar<std::size_t>(v, key, problems)) plan.balance_to = *s;
    } else if (key == "baselines") {
      if (v.IsScalar()) {
        try {
          plan.baselines = parse_baselines(v.as<std::string>());
        } catch (const ValidationError& e) {
          problems.push_back(fmt::format("baselines: {}", e.what()));
        }
      } else if (v.IsMap()) {
        for (const auto& b : v) {
          const auto name = b.first.as<std::string>();
          if (auto f1 = scalar<double>(b.second, "baselines." + name, problems))
            plan.baselines.push_back({name, *f1});
        }
      } else {
        problems.emplace_back("baselines: expected a preset name or a mapping of name to F1");
      }
    }
  }
  for (auto& p : plan.problems()) problems.push_back(std::move(p));
  if (!problems.empty()) throw PlanError(std::move(problems));
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  return parse_plan(read_file(path), path.parent_path());
}

}  // namespace lec
