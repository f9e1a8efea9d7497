// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lec {

enum class ErrorKind { validation, io, internal };

// Process exit codes used by the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitInternal = 70;

int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad argument values, inconsistent inputs, invariant violations in caller data.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what);
};

// A validation failure that carries every problem found, not only the first.
class PlanError : public ValidationError {
 public:
  explicit PlanError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Only reachable with alpha == 0 (or numerically equivalent) on rank-deficient data.
class SingularSystemError : public ValidationError {
 public:
  explicit SingularSystemError(const std::string& what);
};

class IoError : public Error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// File exists and is readable but its contents do not follow the format.
class FormatError : public IoError {
 public:
  FormatError(const std::filesystem::path& path, const std::string& what);
};

class TruncatedFileError : public FormatError {
 public:
  TruncatedFileError(const std::filesystem::path& path, std::uint64_t offset,
                     const std::string& what);
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace lec
