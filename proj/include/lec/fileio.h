// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace lec {

// Whole-file read; IoError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

// Writes `path.tmp` in the same directory, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lec
