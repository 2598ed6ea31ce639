// Copyright 2026 The so3flow Authors.
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

#include <stdexcept>
#include <string>
#include <string_view>

namespace so3flow {

enum class ErrorKind {
  NotSkew,
  NotRotation,
  Singular,
  TimeOutOfRange,
  BadK,
  WrongPointCount,
  UnknownCategory,
  DimMismatch,
  GraphNotRecorded,
  ShapeMismatch,
  EmptyDataset,
  FieldEvalFailure,
  UnknownKind,
  IoError,
  BadCheckpoint,
  BadConfig,
  InvariantViolation,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotSkew: return "NotSkew";
    case ErrorKind::NotRotation: return "NotRotation";
    case ErrorKind::Singular: return "Singular";
    case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::WrongPointCount: return "WrongPointCount";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::GraphNotRecorded: return "GraphNotRecorded";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::FieldEvalFailure: return "FieldEvalFailure";
    case ErrorKind::UnknownKind: return "UnknownKind";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure modes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace so3flow
