// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace splitfed {

enum class ErrorKind {
  ShapeMismatch,
  InvalidArgument,
  Parse,
  Config,
  Io,
  Numeric,
  State,
};

// All library failures surface as Error so callers can map them to exit
// codes (Config/Parse -> usage, everything else -> runtime).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace splitfed
