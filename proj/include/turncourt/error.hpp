// Copyright 2026 The turncourt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace turncourt {

// Exceptions derived from InputError describe bad user input (exit code 2);
// anything else escaping a command is an internal failure (exit code 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::int64_t line)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : InputError(what) {}

  std::int64_t line() const { return line_; }

 private:
  std::int64_t line_ = -1;
};

class AlignmentError : public InputError {
 public:
  AlignmentError(const std::string& what, std::size_t index)
      : InputError("alignment error at turn " + std::to_string(index) + ": " +
                   what),
        index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class DegenerateWindowError : public InputError {
 public:
  using InputError::InputError;
};

class EditError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class RangeError : public InputError {
 public:
  using InputError::InputError;
};

class AssemblyError : public InputError {
 public:
  using InputError::InputError;
};

class DegenerateError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class TrainingError : public InputError {
 public:
  using InputError::InputError;
};

class IdentityError : public InputError {
 public:
  using InputError::InputError;
};

class KeyError : public InputError {
 public:
  using InputError::InputError;
};

class SplitError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace turncourt
