// Copyright (c) 2026 The mlpool Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPOOL_ERRORS_H_
#define MLPOOL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mlpool {

// Base of every error raised by the library. The CLI maps any of these to a
// nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input is structurally valid but too small or empty to compute on
// (short utterance, empty reduction axis, all frames removed, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition (non-scalar loss, label out of range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or an unrecoverable singular matrix.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model or backend configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; the message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// An identifier refers to something that does not exist.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Binary container load failures. Each cause has its own kind so callers and
// tests can tell them apart.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kChecksum };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mlpool

#endif  // MLPOOL_ERRORS_H_
