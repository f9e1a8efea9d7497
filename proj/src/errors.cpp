// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/errors.h"

#include <fmt/format.h>

namespace lec {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
      return kExitValidation;
    case ErrorKind::io:
      return kExitIo;
    case ErrorKind::internal:
      return kExitInternal;
  }
  return kExitInternal;
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

ValidationError::ValidationError(const std::string& what)
    : Error(ErrorKind::validation, what) {}

namespace {
std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = fmt::format("{} problem(s):", problems.size());
  for (const auto& p : problems) {
    out += "\n  - ";
    out += p;
  }
  return out;
}
}  // namespace

PlanError::PlanError(std::vector<std::string> problems)
    : ValidationError(join_problems(problems)), problems_(std::move(problems)) {}

SingularSystemError::SingularSystemError(const std::string& what)
    : ValidationError(what) {}

IoError::IoError(const std::filesystem::path& path, const std::string& what)
    : Error(ErrorKind::io, fmt::format("{}: {}", path.string(), what)), path_(path) {}

FormatError::FormatError(const std::filesystem::path& path, const std::string& what)
    : IoError(path, what) {}

TruncatedFileError::TruncatedFileError(const std::filesystem::path& path,
                                       std::uint64_t offset, const std::string& what)
    : FormatError(path, fmt::format("truncated at byte offset {}: {}", offset, what)),
      offset_(offset) {}

}  // namespace lec
