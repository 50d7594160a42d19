/*
 * Copyright 2026 The macs-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MACS_ERROR_HPP
#define MACS_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace macs {

/// Base of every error thrown by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

/// Tensor shapes that do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Bad argument values (labels out of range, K < 2, batch too small).
class InputError : public Error {
 public:
  using Error::Error;
};

/// API misuse (non-scalar backward root, double normalization, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }
  int exit_code() const override { return 3; }

 private:
  std::uint64_t offset_;
};

/// A checked mathematical property was violated at runtime.
class PropertyError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace macs

#endif  // MACS_ERROR_HPP
