// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/core.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "lec/errors.h"
#include "lec/rng.h"

namespace lec {

std::string_view to_string(LabelKind kind) {
  return kind == LabelKind::binary ? "binary" : "multiclass";
}

LabelSpace::LabelSpace(LabelKind kind, std::vector<std::string> classes,
                       std::optional<std::size_t> safe_class)
    : kind_(kind), classes_(std::move(classes)), safe_class_(safe_class) {
  if (classes_.empty()) throw ValidationError("label space has no classes");
  std::unordered_set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) throw ValidationError("label space contains an empty class name");
    if (!seen.insert(c).second)
      throw ValidationError(fmt::format("duplicate class name '{}'", c));
  }
  if (kind_ == LabelKind::binary && classes_.size() != 2)
    throw ValidationError(
        fmt::format("binary label space needs exactly 2 classes, got {}", classes_.size()));
  if (safe_class_ && *safe_class_ >= classes_.size())
    throw ValidationError(fmt::format("safe class index {} out of range", *safe_class_));
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i)
    if (classes_[i] == name) return i;
  return std::nullopt;
}

std::string content_id(const std::optional<std::string>& system_prompt,
                       std::string_view user_prompt) {
  // Unit separator keeps ("ab", "c") and ("a", "bc") apart; a leading flag
  // keeps "no system prompt" distinct from an empty one.
  std::uint64_t h = fnv1a64(system_prompt ? "S" : "N");
  if (system_prompt) h = fnv1a64(*system_prompt, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(user_prompt, h);
  return "h" + hex64(h);
}

LabeledDataset::LabeledDataset(LabelSpace label_space, std::vector<LabeledExample> examples)
    : label_space_(std::move(label_space)), examples_(std::move(examples)) {
  std::unordered_set<std::string_view> ids;
  for (const auto& ex : examples_) {
    if (ex.id.empty()) throw ValidationError("example with empty id");
    if (ex.user_prompt.empty())
      throw ValidationError(fmt::format("example '{}' has an empty user_prompt", ex.id));
    if (ex.label >= label_space_.size())
      throw ValidationError(fmt::format("example '{}' has label {} but only {} classes",
                                        ex.id, ex.label, label_space_.size()));
    if (!ids.insert(ex.id).second)
      throw ValidationError(fmt::format("duplicate example id '{}'", ex.id));
  }
}

std::vector<std::size_t> LabeledDataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_.size(); ++i)
    if (split_[i] == SplitTag::train) out.push_back(i);
  return out;
}

std::vector<std::size_t> LabeledDataset::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_.size(); ++i)
    if (split_[i] == SplitTag::test) out.push_back(i);
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(label_space_.size(), 0);
  for (const auto& ex : examples_) ++counts[ex.label];
  return counts;
}

std::vector<std::size_t> LabeledDataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.label);
  return out;
}

std::vector<std::size_t> apportion(std::span<const std::size_t> weights, std::size_t total) {
  const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (total > sum)
    throw ValidationError(fmt::format("cannot apportion {} items over {}", total, sum));
  std::vector<std::size_t> out(weights.size(), 0);
  if (sum == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(total) * weights[i];
    out[i] = static_cast<std::size_t>(scaled / sum);
    assigned += out[i];
    remainders.emplace_back(static_cast<std::size_t>(scaled % sum), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[remainders[k].second];
  return out;
}

LabeledDataset make_split(const LabeledDataset& dataset, double train_fraction,
                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError(
        fmt::format("train_fraction must lie in (0, 1), got {}", train_fraction));
  const std::size_t n = dataset.size();
  if (n == 0) throw ValidationError("cannot split an empty dataset");
  if (n < 2) throw ValidationError("cannot split a single example into train and test");

  const auto counts = dataset.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      throw ValidationError(
          fmt::format("class '{}' has no examples", dataset.label_space().name(c)));

  auto total_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  total_train = std::clamp<std::size_t>(total_train, 1, n - 1);
  const auto per_class = apportion(counts, total_train);

  const std::uint64_t salt = splitmix64(derive_seed(seed, "split"));
  std::vector<std::vector<std::size_t>> members(counts.size());
  for (std::size_t i = 0; i < n; ++i) members[dataset.examples()[i].label].push_back(i);

  LabeledDataset out = dataset;
  out.split_.assign(n, SplitTag::test);
  out.split_seed_ = seed;
  out.train_fraction_ = train_fraction;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(m.size());
    for (std::size_t i : m) keyed.emplace_back(fnv1a64(dataset.examples()[i].id, salt), i);
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return dataset.examples()[a.second].id < dataset.examples()[b.second].id;
    });
    for (std::size_t k = 0; k < per_class[c]; ++k) out.split_[keyed[k].second] = SplitTag::train;
  }
  return out;
}

std::string_view to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::last_token:
      return "last_token";
    case Pooling::first_token:
      return "first_token";
    case Pooling::mean:
      return "mean";
  }
  return "unknown";
}

Pooling parse_pooling(std::string_view text) {
  if (text == "last_token" || text == "last") return Pooling::last_token;
  if (text == "first_token" || text == "first") return Pooling::first_token;
  if (text == "mean") return Pooling::mean;
  throw ValidationError(
      fmt::format("unknown pooling '{}' (expected last_token, first_token or mean)", text));
}

void HiddenStateRecord::validate() const {
  if (example_id.empty()) throw ValidationError("hidden-state record with empty example id");
  if (layer_states.empty())
    throw ValidationError(fmt::format("record '{}' has no layers", example_id));
  for (std::size_t l = 0; l < layer_states.size(); ++l) {
    const auto& v = layer_states[l];
    if (v.size() != hidden_dim)
      throw ValidationError(fmt::format("record '{}' layer {} has length {}, expected {}",
                                        example_id, l + 1, v.size(), hidden_dim));
    for (double x : v)
      if (!std::isfinite(x))
        throw ValidationError(
            fmt::format("record '{}' layer {} has a non-finite entry", example_id, l + 1));
  }
}

RecordSet::RecordSet(std::vector<HiddenStateRecord> records) : records_(std::move(records)) {
  if (records_.empty()) throw ValidationError("record set is empty");
  num_layers_ = records_.front().num_layers();
  hidden_dim_ = records_.front().hidden_dim;
  model_id_ = records_.front().model_id;
  for (const auto& r : records_) {
    r.validate();
    if (r.num_layers() != num_layers_ || r.hidden_dim != hidden_dim_)
      throw ValidationError(fmt::format(
          "record '{}' has shape {}x{}, expected {}x{}", r.example_id, r.num_layers(),
          r.hidden_dim, num_layers_, hidden_dim_));
  }
  order_.resize(records_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return records_[a].example_id < records_[b].example_id;
  });
  for (std::size_t i = 1; i < order_.size(); ++i)
    if (records_[order_[i]].example_id == records_[order_[i - 1]].example_id)
      throw ValidationError(
          fmt::format("duplicate record id '{}'", records_[order_[i]].example_id));
}

const HiddenStateRecord& RecordSet::find(std::string_view id) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), id,
                             [&](std::size_t i, std::string_view key) {
                               return records_[i].example_id < key;
                             });
  if (it == order_.end() || records_[*it].example_id != id)
    throw ValidationError(fmt::format("no hidden states for example '{}'", id));
  return records_[*it];
}

bool RecordSet::contains(std::string_view id) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), id,
                             [&](std::size_t i, std::string_view key) {
                               return records_[i].example_id < key;
                             });
  return it != order_.end() && records_[*it].example_id == id;
}

Eigen::MatrixXd RecordSet::layer_matrix(std::size_t layer,
                                        std::span<const std::string> ids) const {
  if (layer < 1 || layer > num_layers_)
    throw ValidationError(fmt::format("layer {} out of range 1..{}", layer, num_layers_));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()),
                      static_cast<Eigen::Index>(hidden_dim_));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto& v = find(ids[r]).layer_states[layer - 1];
    for (std::size_t c = 0; c < hidden_dim_; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
  }
  return out;
}

}  // namespace lec
