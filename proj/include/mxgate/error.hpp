// Copyright 2026 The mxgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mxgate {

/// Base of every error the library throws. `kind()` is a stable tag used by
/// the CLI and the HTTP layer to pick exit and status codes.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class SyntaxError : public Error {
public:
  SyntaxError(int line, int column, const std::string& message)
      : Error("SyntaxError", std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line), column_(column), message_(message) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

private:
  int line_;
  int column_;
  std::string message_;
};

class SemanticError : public Error {
public:
  SemanticError(int line, const std::string& message)
      : Error("SemanticError", "line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

class CapacityError : public Error {
public:
  explicit CapacityError(const std::string& what) : Error("CapacityError", what) {}
};

class InvalidArgument : public Error {
public:
  explicit InvalidArgument(const std::string& what) : Error("InvalidArgument", what) {}
};

// Raised when more than one annotate step matches a surviving vector.
class MultiAssignment : public Error {
public:
  MultiAssignment(std::vector<std::string> classes, std::size_t index = npos)
      : Error("MultiAssignment", describe(classes, index)), classes_(std::move(classes)), index_(index) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t index() const noexcept { return index_; }

private:
  static std::string describe(const std::vector<std::string>& classes, std::size_t index) {
    std::string s = "multiple classes matched: ";
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i) s += ", ";
      s += classes[i];
    }
    if (index != npos) s += " (at index " + std::to_string(index) + ")";
    return s;
  }

  std::vector<std::string> classes_;
  std::size_t index_;
};

class MissingThreshold : public Error {
public:
  explicit MissingThreshold(const std::string& marker)
      : Error("MissingThreshold", "no threshold for marker " + marker), marker_(marker) {}
  const std::string& marker() const noexcept { return marker_; }

private:
  std::string marker_;
};

class MissingChannel : public Error {
public:
  explicit MissingChannel(const std::string& marker)
      : Error("MissingChannel", "no channel for marker " + marker), marker_(marker) {}
  const std::string& marker() const noexcept { return marker_; }

private:
  std::string marker_;
};

class IoError : public Error {
public:
  IoError(const std::string& path, const std::string& what)
      : Error("IoError", path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

class DecodeError : public Error {
public:
  DecodeError(const std::string& path, const std::string& what)
      : Error("DecodeError", path + ": " + what) {}
};

class DimensionMismatch : public Error {
public:
  explicit DimensionMismatch(const std::string& what) : Error("DimensionMismatch", what) {}
};

class EmptyMask : public Error {
public:
  EmptyMask() : Error("EmptyMask", "mask contains no nonzero nucleus id") {}
};

class OutOfBounds : public Error {
public:
  explicit OutOfBounds(const std::string& what) : Error("OutOfBounds", what) {}
};

class MissingImage : public Error {
public:
  explicit MissingImage(const std::string& slide_id)
      : Error("MissingImage", "no rendered image for slide " + slide_id) {}
};

class LabelTableMismatch : public Error {
public:
  explicit LabelTableMismatch(const std::string& what) : Error("LabelTableMismatch", what) {}
};

class Unsatisfiable : public Error {
public:
  explicit Unsatisfiable(const std::string& what) : Error("Unsatisfiable", what) {}
};

class EmptyClass : public Error {
public:
  explicit EmptyClass(const std::string& cls)
      : Error("EmptyClass", "no records for class " + cls), cls_(cls) {}
  const std::string& class_name() const noexcept { return cls_; }

private:
  std::string cls_;
};

class LabelOutOfRange : public Error {
public:
  explicit LabelOutOfRange(const std::string& what) : Error("LabelOutOfRange", what) {}
};

class EmptyMatrix : public Error {
public:
  EmptyMatrix() : Error("EmptyMatrix", "confusion matrix has no records") {}
};

class InsufficientFolds : public Error {
public:
  explicit InsufficientFolds(std::size_t n)
      : Error("InsufficientFolds", "need at least 2 folds, got " + std::to_string(n)) {}
};

class NoWitness : public Error {
public:
  explicit NoWitness(const std::string& cls)
      : Error("NoWitness", "no gate vector maps to class " + cls) {}
};

class PlacementFailure : public Error {
public:
  explicit PlacementFailure(const std::string& what) : Error("PlacementFailure", what) {}
};

class NotFound : public Error {
public:
  explicit NotFound(const std::string& what) : Error("NotFound", what) {}
};

class VersionConflict : public Error {
public:
  VersionConflict(unsigned long long expected, unsigned long long current)
      : Error("VersionConflict", "threshold update is based on version " + std::to_string(expected) +
                                     " but the server holds version " + std::to_string(current)),
        current_(current) {}
  unsigned long long current() const noexcept { return current_; }

private:
  unsigned long long current_;
};

}  // namespace mxgate
