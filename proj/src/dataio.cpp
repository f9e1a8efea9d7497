// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/dataio.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "binary_io.h"
#include "lec/errors.h"
#include "lec/rng.h"

namespace lec {

namespace {

constexpr std::string_view kEmbeddingMagic = "LECE";
// magic, version, L, d, pooling, count, index_offset
constexpr std::size_t kFixedHeaderBytes = 4 + 4 + 4 + 4 + 1 + 8 + 8;
constexpr std::size_t kCountOffset = 17;

using Eigen::Index;

}  // namespace

std::uint64_t record_payload_bytes(std::size_t num_layers, std::size_t hidden_dim) {
  return static_cast<std::uint64_t>(num_layers) * hidden_dim * sizeof(float);
}

// ---------------------------------------------------------------------------
// EmbeddingWriter

EmbeddingWriter::EmbeddingWriter(std::filesystem::path path, std::string model_id,
                                 std::size_t num_layers, std::size_t hidden_dim, Pooling pooling)
    : path_(std::move(path)) {
  if (num_layers < 1 || hidden_dim < 1)
    throw ValidationError("embedding file needs at least one layer and one dimension");
  header_.model_id = std::move(model_id);
  header_.num_layers = num_layers;
  header_.hidden_dim = hidden_dim;
  header_.pooling = pooling;
  tmp_path_ = path_;
  tmp_path_ += ".tmp";
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError(tmp_path_, "cannot open for writing");

  std::string head(kEmbeddingMagic);
  detail::put_u32(head, header_.version);
  detail::put_u32(head, static_cast<std::uint32_t>(num_layers));
  detail::put_u32(head, static_cast<std::uint32_t>(hidden_dim));
  detail::put_u8(head, static_cast<std::uint8_t>(pooling));
  detail::put_u64(head, 0);  // count, patched by finish()
  detail::put_u64(head, 0);  // index offset, patched by finish()
  detail::put_str(head, header_.model_id);
  out_.write(head.data(), static_cast<std::streamsize>(head.size()));
  offset_ = head.size();
}

EmbeddingWriter::~EmbeddingWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void EmbeddingWriter::append(const HiddenStateRecord& record) {
  if (finished_) throw ValidationError("append after finish()");
  record.validate();
  if (record.num_layers() != header_.num_layers || record.hidden_dim != header_.hidden_dim)
    throw ValidationError(fmt::format("record '{}' has shape {}x{}, file expects {}x{}",
                                      record.example_id, record.num_layers(), record.hidden_dim,
                                      header_.num_layers, header_.hidden_dim));
  if (!ids_.insert(record.example_id).second)
    throw ValidationError(fmt::format("duplicate record id '{}'", record.example_id));

  std::string buf;
  buf.reserve(8 + record.example_id.size() +
              record_payload_bytes(header_.num_layers, header_.hidden_dim));
  detail::put_str(buf, record.example_id);
  detail::put_u32(buf, static_cast<std::uint32_t>(record.label));
  for (const auto& layer : record.layer_states)
    for (double v : layer) detail::put_f32(buf, static_cast<float>(v));
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out_) throw IoError(tmp_path_, "write failed");
  index_.emplace_back(record.example_id, offset_);
  offset_ += buf.size();
}

void EmbeddingWriter::finish() {
  if (finished_) return;
  const std::uint64_t index_offset = offset_;
  std::string tail;
  detail::put_u64(tail, index_.size());
  for (const auto& [id, off] : index_) {
    detail::put_str(tail, id);
    detail::put_u64(tail, off);
  }
  out_.write(tail.data(), static_cast<std::streamsize>(tail.size()));

  std::string patch;
  detail::put_u64(patch, index_.size());
  detail::put_u64(patch, index_offset);
  out_.seekp(static_cast<std::streamoff>(kCountOffset));
  out_.write(patch.data(), static_cast<std::streamsize>(patch.size()));
  out_.flush();
  if (!out_) throw IoError(tmp_path_, "write failed");
  out_.close();

  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) throw IoError(path_, "rename failed: " + ec.message());
  finished_ = true;
}

// ---------------------------------------------------------------------------
// EmbeddingReader

EmbeddingReader::EmbeddingReader(std::filesystem::path path) : path_(std::move(path)) {
  in_.open(path_, std::ios::binary);
  if (!in_) throw IoError(path_, "cannot open for reading");
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path_, ec);
  if (ec) throw IoError(path_, "cannot stat: " + ec.message());

  auto read_chunk = [&](std::uint64_t offset, std::size_t n) {
    std::string buf(n, '\0');
    if (offset + n > file_size)
      throw TruncatedFileError(path_, offset,
                               fmt::format("need {} bytes, file size is {}", n, file_size));
    read_at(offset, buf.data(), n);
    return buf;
  };

  {
    const auto head = read_chunk(0, std::min<std::uint64_t>(file_size, kFixedHeaderBytes + 4));
    detail::ByteReader r(head, path_);
    r.expect_magic(kEmbeddingMagic);
    header_.version = r.u32("version");
    if (header_.version != kEmbeddingVersion)
      throw FormatError(path_, fmt::format("unsupported embedding file version {}", header_.version));
    header_.num_layers = r.u32("num_layers");
    header_.hidden_dim = r.u32("hidden_dim");
    const auto pooling = r.u8("pooling");
    if (pooling > 2) throw FormatError(path_, fmt::format("bad pooling code {}", pooling));
    header_.pooling = static_cast<Pooling>(pooling);
    header_.count = r.u64("count");
    const auto index_offset = r.u64("index_offset");
    const auto id_len = r.u32("model_id length");
    const auto model_id = read_chunk(r.offset(), id_len);
    header_.model_id = model_id;
    if (header_.num_layers < 1 || header_.hidden_dim < 1)
      throw FormatError(path_, "header declares zero layers or zero hidden_dim");

    // Walk every record boundary. The record region ends at the index, or at
    // end of file when the index itself is missing.
    const std::uint64_t payload = record_payload_bytes(header_.num_layers, header_.hidden_dim);
    const std::uint64_t region_end = std::min(index_offset, file_size);
    std::uint64_t pos = kFixedHeaderBytes + 4 + id_len;
    ids_.reserve(header_.count);
    std::vector<std::uint64_t> record_offsets;
    record_offsets.reserve(header_.count);
    for (std::uint64_t i = 0; i < header_.count; ++i) {
      const std::uint64_t start = pos;
      auto truncated = [&](std::string_view what) {
        return TruncatedFileError(
            path_, start,
            fmt::format("record {} of {} {} (record region ends at {})", i + 1, header_.count,
                        what, region_end));
      };
      if (pos + 4 > region_end) throw truncated("is missing");
      const auto len_bytes = read_chunk(pos, 4);
      const auto len = detail::get_le<std::uint32_t>(
          reinterpret_cast<const unsigned char*>(len_bytes.data()));
      if (pos + 4 + len + 4 + payload > region_end) throw truncated("is incomplete");
      auto id = read_chunk(pos + 4, len);
      const auto label_bytes = read_chunk(pos + 4 + len, 4);
      const auto label = detail::get_le<std::uint32_t>(
          reinterpret_cast<const unsigned char*>(label_bytes.data()));
      const std::uint64_t payload_offset = pos + 4 + len + 4;
      if (!entries_.emplace(id, Entry{payload_offset, label}).second)
        throw FormatError(path_, fmt::format("duplicate record id '{}'", id));
      ids_.push_back(std::move(id));
      record_offsets.push_back(start);
      pos = payload_offset + payload;
    }
    if (index_offset > file_size)
      throw TruncatedFileError(path_, file_size,
                               fmt::format("index expected at offset {} is missing", index_offset));
    if (pos != index_offset)
      throw FormatError(path_, fmt::format("records end at offset {} but the index starts at {}",
                                           pos, index_offset));

    const auto index_bytes = read_chunk(index_offset, file_size - index_offset);
    detail::ByteReader ir(index_bytes, path_, index_offset);
    const auto entries = ir.u64("index entry count");
    if (entries != header_.count)
      throw FormatError(path_, fmt::format("index has {} entries, header count is {}", entries,
                                           header_.count));
    for (std::uint64_t i = 0; i < entries; ++i) {
      const auto id = ir.str("index id");
      const auto off = ir.u64("index offset");
      if (id != ids_[i] || off != record_offsets[i])
        throw FormatError(path_, fmt::format("index entry {} ('{}' @ {}) does not match record "
                                             "('{}' @ {})",
                                             i + 1, id, off, ids_[i], record_offsets[i]));
    }
    if (ir.remaining() != 0)
      throw FormatError(path_, fmt::format("{} trailing bytes after the index", ir.remaining()));
  }
}

void EmbeddingReader::read_at(std::uint64_t offset, char* dst, std::size_t n) const {
  std::lock_guard lock(mutex_);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offset));
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw TruncatedFileError(path_, offset, fmt::format("short read of {} bytes", n));
}

const EmbeddingReader::Entry& EmbeddingReader::entry(std::string_view id) const {
  auto it = entries_.find(std::string(id));
  if (it == entries_.end())
    throw ValidationError(fmt::format("no hidden states for example '{}' in {}", id, path_.string()));
  return it->second;
}

bool EmbeddingReader::contains(std::string_view id) const {
  return entries_.count(std::string(id)) != 0;
}

std::size_t EmbeddingReader::label(std::string_view id) const { return entry(id).label; }

HiddenStateRecord EmbeddingReader::read(std::string_view id) const {
  const auto& e = entry(id);
  const std::size_t l_count = header_.num_layers, d = header_.hidden_dim;
  std::string buf(record_payload_bytes(l_count, d), '\0');
  read_at(e.payload_offset, buf.data(), buf.size());
  HiddenStateRecord rec;
  rec.example_id = std::string(id);
  rec.label = e.label;
  rec.hidden_dim = d;
  rec.model_id = header_.model_id;
  rec.pooling = header_.pooling;
  rec.layer_states.assign(l_count, std::vector<double>(d));
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  for (std::size_t l = 0; l < l_count; ++l)
    for (std::size_t j = 0; j < d; ++j, p += 4)
      rec.layer_states[l][j] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
  return rec;
}

std::vector<HiddenStateRecord> EmbeddingReader::read_all() const {
  std::vector<HiddenStateRecord> out;
  out.reserve(ids_.size());
  for (const auto& id : ids_) out.push_back(read(id));
  return out;
}

Eigen::MatrixXd EmbeddingReader::layer_matrix(std::size_t layer,
                                              std::span<const std::string> ids) const {
  if (layer < 1 || layer > header_.num_layers)
    throw ValidationError(fmt::format("layer {} out of range 1..{}", layer, header_.num_layers));
  const std::size_t d = header_.hidden_dim;
  const std::uint64_t layer_offset = record_payload_bytes(layer - 1, d);
  Eigen::MatrixXd out(static_cast<Index>(ids.size()), static_cast<Index>(d));
  std::string buf(d * sizeof(float), '\0');
  for (std::size_t r = 0; r < ids.size(); ++r) {
    read_at(entry(ids[r]).payload_offset + layer_offset, buf.data(), buf.size());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    for (std::size_t j = 0; j < d; ++j, p += 4)
      out(static_cast<Index>(r), static_cast<Index>(j)) =
          std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
  }
  return out;
}

void write_embeddings(const std::filesystem::path& path,
                      std::span<const HiddenStateRecord> records) {
  if (records.empty()) throw ValidationError("no records to write");
  const auto& first = records.front();
  EmbeddingWriter writer(path, first.model_id, first.num_layers(), first.hidden_dim, first.pooling);
  for (const auto& r : records) writer.append(r);
  writer.finish();
}

std::vector<HiddenStateRecord> read_embeddings(const std::filesystem::path& path) {
  return EmbeddingReader(path).read_all();
}

// ---------------------------------------------------------------------------
// Datasets

LabelSpace parse_label_space(std::string_view text, const std::filesystem::path& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(origin, std::string("label space is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array())
    throw FormatError(origin, "label space must be an object with a \"classes\" array");
  for (const auto& [key, _] : j.items())
    if (key != "kind" && key != "classes" && key != "safe_class")
      throw FormatError(origin, fmt::format("unknown label space key '{}'", key));
  std::vector<std::string> classes;
  for (const auto& c : j["classes"]) {
    if (!c.is_string()) throw FormatError(origin, "class names must be strings");
    classes.push_back(c.get<std::string>());
  }
  LabelKind kind = classes.size() == 2 ? LabelKind::binary : LabelKind::multiclass;
  if (j.contains("kind")) {
    const auto k = j["kind"].get<std::string>();
    if (k == "binary")
      kind = LabelKind::binary;
    else if (k == "multiclass")
      kind = LabelKind::multiclass;
    else
      throw FormatError(origin, fmt::format("unknown label kind '{}'", k));
  }
  std::optional<std::size_t> safe;
  if (j.contains("safe_class") && !j["safe_class"].is_null()) {
    const auto name = j["safe_class"].get<std::string>();
    auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end())
      throw FormatError(origin, fmt::format("safe_class '{}' is not a listed class", name));
    safe = static_cast<std::size_t>(it - classes.begin());
  }
  try {
    return LabelSpace(kind, std::move(classes), safe);
  } catch (const ValidationError& e) {
    throw FormatError(origin, e.what());
  }
}

LabelSpace read_label_space(const std::filesystem::path& path) {
  return parse_label_space(read_file(path), path);
}

std::string label_space_to_json(const LabelSpace& label_space) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(label_space.kind()));
  j["classes"] = label_space.classes();
  if (label_space.safe_class()) j["safe_class"] = label_space.name(*label_space.safe_class());
  return j.dump(2) + "\n";
}

void write_label_space(const std::filesystem::path& path, const LabelSpace& label_space) {
  write_file_atomic(path, label_space_to_json(label_space));
}

std::vector<LabeledExample> parse_dataset_jsonl(std::string_view text,
                                                const LabelSpace& label_space,
                                                const std::filesystem::path& origin) {
  std::vector<LabeledExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    auto fail = [&](const std::string& what) {
      return FormatError(origin, fmt::format("line {}: {}", line_no, what));
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw fail("malformed JSON");
    }
    if (!j.is_object()) throw fail("expected a JSON object");
    for (const auto& [key, _] : j.items())
      if (key != "id" && key != "system_prompt" && key != "user_prompt" && key != "label")
        throw fail(fmt::format("unknown field '{}'", key));
    if (!j.contains("user_prompt") || !j["user_prompt"].is_string())
      throw fail("missing string field 'user_prompt'");
    if (!j.contains("label")) throw fail("missing field 'label'");

    LabeledExample ex;
    ex.user_prompt = j["user_prompt"].get<std::string>();
    if (ex.user_prompt.empty()) throw fail("'user_prompt' is empty");
    if (j.contains("system_prompt") && !j["system_prompt"].is_null()) {
      if (!j["system_prompt"].is_string()) throw fail("'system_prompt' must be a string");
      ex.system_prompt = j["system_prompt"].get<std::string>();
    }
    const auto& label = j["label"];
    if (label.is_string()) {
      const auto idx = label_space.index_of(label.get<std::string>());
      if (!idx) throw fail(fmt::format("unknown label '{}'", label.get<std::string>()));
      ex.label = *idx;
    } else if (label.is_number_unsigned()) {
      ex.label = label.get<std::size_t>();
      if (ex.label >= label_space.size())
        throw fail(fmt::format("label index {} outside {} classes", ex.label, label_space.size()));
    } else {
      throw fail("'label' must be a class name or a non-negative class index");
    }
    if (j.contains("id") && !j["id"].is_null()) {
      if (!j["id"].is_string() || j["id"].get<std::string>().empty())
        throw fail("'id' must be a non-empty string");
      ex.id = j["id"].get<std::string>();
    } else {
      ex.id = content_id(ex.system_prompt, ex.user_prompt);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

LabeledDataset ingest_dataset(std::span<const std::filesystem::path> paths,
                              const std::filesystem::path& label_space_path,
                              const IngestOptions& options) {
  if (paths.empty()) throw ValidationError("no dataset files given");
  const LabelSpace label_space = read_label_space(label_space_path);
  std::vector<LabeledExample> examples;
  std::unordered_map<std::string, std::string> origin_of;
  for (const auto& path : paths) {
    auto part = parse_dataset_jsonl(read_file(path), label_space, path);
    if (part.empty()) throw FormatError(path, "dataset file contains no examples");
    for (auto& ex : part) {
      auto [it, inserted] = origin_of.emplace(ex.id, path.string());
      if (!inserted)
        throw ValidationError(fmt::format("duplicate example id '{}' ({} and {})", ex.id,
                                          it->second, path.string()));
      examples.push_back(std::move(ex));
    }
  }

  if (options.balance_to) {
    const std::size_t c_count = label_space.size();
    // Equal shares; the remainder goes to the lowest class indices.
    std::vector<std::size_t> quota(c_count, *options.balance_to / c_count);
    for (std::size_t c = 0; c < *options.balance_to % c_count; ++c) ++quota[c];
    std::vector<std::vector<std::size_t>> members(c_count);
    for (std::size_t i = 0; i < examples.size(); ++i) members[examples[i].label].push_back(i);
    const std::uint64_t salt = derive_seed(options.seed, "balance");
    std::vector<bool> keep(examples.size(), false);
    for (std::size_t c = 0; c < c_count; ++c) {
      if (members[c].size() < quota[c])
        throw ValidationError(fmt::format("class '{}' has {} examples, balancing needs {}",
                                          label_space.name(c), members[c].size(), quota[c]));
      auto& m = members[c];
      std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
        const auto ka = fnv1a64(examples[a].id, salt), kb = fnv1a64(examples[b].id, salt);
        return ka != kb ? ka < kb : examples[a].id < examples[b].id;
      });
      for (std::size_t k = 0; k < quota[c]; ++k) keep[m[k]] = true;
    }
    std::vector<LabeledExample> kept;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (keep[i]) kept.push_back(std::move(examples[i]));
    examples = std::move(kept);
  }
  return LabeledDataset(label_space, std::move(examples));
}

std::string dataset_to_jsonl(const LabeledDataset& dataset) {
  std::string out;
  for (const auto& ex : dataset.examples()) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    if (ex.system_prompt) j["system_prompt"] = *ex.system_prompt;
    j["user_prompt"] = ex.user_prompt;
    j["label"] = dataset.label_space().name(ex.label);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
  write_file_atomic(path, dataset_to_jsonl(dataset));
}

// ---------------------------------------------------------------------------
// Planted-signal generator

PlantedData generate_planted_dataset(const PlantedSpec& spec) {
  if (spec.n < 2) throw ValidationError("planted dataset needs n >= 2");
  if (spec.num_layers < 1 || spec.hidden_dim < 1)
    throw ValidationError("planted dataset needs at least one layer and one dimension");
  if (spec.signal_layer < 1 || spec.signal_layer > spec.num_layers)
    throw ValidationError(fmt::format("signal_layer {} out of range 1..{}", spec.signal_layer,
                                      spec.num_layers));
  if (!(spec.margin >= 0.0) || !std::isfinite(spec.margin))
    throw ValidationError("margin must be finite and >= 0");

  const auto d = static_cast<Index>(spec.hidden_dim);
  Eigen::VectorXd u(d);
  {
    Rng rng(derive_seed(spec.seed, "planted-direction"));
    do {
      for (Index j = 0; j < d; ++j) u(j) = rng.normal();
    } while (u.norm() == 0.0);
    u.normalize();
  }

  LabelSpace label_space(LabelKind::binary, {"safe", "unsafe"}, 0);
  std::vector<LabeledExample> examples;
  std::vector<HiddenStateRecord> records;
  examples.reserve(spec.n);
  records.reserve(spec.n);
  const std::string model_id =
      fmt::format("planted-L{}-d{}-s{}", spec.num_layers, spec.hidden_dim, spec.signal_layer);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = i % 2;
    LabeledExample ex;
    ex.id = fmt::format("planted-{:06d}", i);
    ex.user_prompt = fmt::format("planted example {} ({})", i, label_space.name(label));
    ex.label = label;

    HiddenStateRecord rec;
    rec.example_id = ex.id;
    rec.label = label;
    rec.hidden_dim = spec.hidden_dim;
    rec.model_id = model_id;
    rec.pooling = Pooling::last_token;
    Rng rng(derive_seed(spec.seed, "planted-noise", {i}));
    const double shift = (label == 1 ? 0.5 : -0.5) * spec.margin;
    rec.layer_states.resize(spec.num_layers);
    for (std::size_t l = 0; l < spec.num_layers; ++l) {
      auto& v = rec.layer_states[l];
      v.resize(spec.hidden_dim);
      for (Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = rng.normal();
      if (l + 1 == spec.signal_layer)
        for (Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] += shift * u(j);
    }
    examples.push_back(std::move(ex));
    records.push_back(std::move(rec));
  }
  return PlantedData{LabeledDataset(std::move(label_space), std::move(examples)),
                     std::move(records), std::move(u)};
}

}  // namespace lec
