// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "lec/core.h"

namespace lec {

// ---------------------------------------------------------------------------
// LECE embedding files (byte layout in docs/formats.md)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingVersion = 1;

struct EmbeddingHeader {
  std::uint32_t version = kEmbeddingVersion;
  std::string model_id;
  std::size_t num_layers = 0;
  std::size_t hidden_dim = 0;
  Pooling pooling = Pooling::last_token;
  std::uint64_t count = 0;
};

// Bytes of vector data in one record: L * d * sizeof(f32).
std::uint64_t record_payload_bytes(std::size_t num_layers, std::size_t hidden_dim);

/// Streams records into a new file. Records are written to `path.tmp` and the
/// file is renamed into place by finish(); an unfinished writer leaves
/// nothing at `path`.
class EmbeddingWriter {
 public:
  EmbeddingWriter(std::filesystem::path path, std::string model_id, std::size_t num_layers,
                  std::size_t hidden_dim, Pooling pooling);
  ~EmbeddingWriter();
  EmbeddingWriter(const EmbeddingWriter&) = delete;
  EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

  // Vectors are narrowed to f32.
  void append(const HiddenStateRecord& record);
  void finish();
  std::uint64_t count() const noexcept { return index_.size(); }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::ofstream out_;
  EmbeddingHeader header_;
  std::uint64_t offset_ = 0;
  std::vector<std::pair<std::string, std::uint64_t>> index_;
  std::unordered_set<std::string> ids_;
  bool finished_ = false;
};

/// Random-access reader. The constructor validates the whole file layout
/// (header, every record boundary, and the trailing index) without reading
/// vector payloads; payloads are fetched per layer on demand.
class EmbeddingReader final : public LayerFeatureSource {
 public:
  explicit EmbeddingReader(std::filesystem::path path);

  const EmbeddingHeader& header() const noexcept { return header_; }
  const std::filesystem::path& path() const noexcept { return path_; }
  // Ids in file order.
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  HiddenStateRecord read(std::string_view id) const;
  std::vector<HiddenStateRecord> read_all() const;
  std::size_t label(std::string_view id) const;

  std::size_t num_layers() const override { return header_.num_layers; }
  std::size_t hidden_dim() const override { return header_.hidden_dim; }
  std::string model_id() const override { return header_.model_id; }
  bool contains(std::string_view id) const override;
  Eigen::MatrixXd layer_matrix(std::size_t layer,
                               std::span<const std::string> ids) const override;

 private:
  struct Entry {
    std::uint64_t payload_offset;
    std::size_t label;
  };
  const Entry& entry(std::string_view id) const;
  void read_at(std::uint64_t offset, char* dst, std::size_t n) const;

  std::filesystem::path path_;
  EmbeddingHeader header_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Entry> entries_;
  mutable std::ifstream in_;
  mutable std::mutex mutex_;
};

void write_embeddings(const std::filesystem::path& path, std::span<const HiddenStateRecord> records);
std::vector<HiddenStateRecord> read_embeddings(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets: JSON-lines examples plus a JSON label-space sidecar
// ---------------------------------------------------------------------------

// {"kind": "binary"|"multiclass", "classes": [...], "safe_class": "<name>"}
LabelSpace read_label_space(const std::filesystem::path& path);
LabelSpace parse_label_space(std::string_view text, const std::filesystem::path& origin = {});
std::string label_space_to_json(const LabelSpace& label_space);
void write_label_space(const std::filesystem::path& path, const LabelSpace& label_space);

// One example per line: {"id"?, "system_prompt"?, "user_prompt", "label"}.
// `label` is a class name or a class index. Missing ids become content_id().
// Blank lines are skipped; errors name the source and line number.
std::vector<LabeledExample> parse_dataset_jsonl(std::string_view text, const LabelSpace& label_space,
                                                const std::filesystem::path& origin = {});

struct IngestOptions {
  // Draw an equal number of examples per class, totalling this many.
  std::optional<std::size_t> balance_to;
  std::uint64_t seed = 0;
};

// Merges one or more JSONL files into one unsplit dataset.
LabeledDataset ingest_dataset(std::span<const std::filesystem::path> paths,
                              const std::filesystem::path& label_space_path,
                              const IngestOptions& options = {});

// Canonical form: keys in the order id, system_prompt, user_prompt, label;
// labels by class name; one compact object per line.
std::string dataset_to_jsonl(const LabeledDataset& dataset);
void write_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);

// ---------------------------------------------------------------------------
// Planted-signal synthetic data
// ---------------------------------------------------------------------------

struct PlantedSpec {
  std::size_t n = 1000;
  std::size_t num_layers = 8;
  std::size_t hidden_dim = 32;
  std::size_t signal_layer = 5;
  double margin = 8.0;
  std::uint64_t seed = 0;
};

struct PlantedData {
  LabeledDataset dataset;
  std::vector<HiddenStateRecord> records;
  Eigen::VectorXd direction;  // unit vector u
};

/// Every layer is isotropic N(0, I) noise except `signal_layer`, whose class
/// means sit at -(margin/2) u (class 0) and +(margin/2) u (class 1). Labels
/// alternate, so classes are balanced to within one example.
PlantedData generate_planted_dataset(const PlantedSpec& spec);

}  // namespace lec
