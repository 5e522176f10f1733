// Copyright 2026 The Spellforge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
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

namespace spellforge {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kParse,
  kIo,
  kInsufficientData,
  kCheckpointBadMagic,
  kCheckpointVersion,
  kCheckpointHashMismatch,
  kCheckpointTruncated,
  kDiverged,
  kConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kCheckpointBadMagic: return "checkpoint_bad_magic";
    case ErrorCode::kCheckpointVersion: return "checkpoint_version";
    case ErrorCode::kCheckpointHashMismatch: return "checkpoint_hash_mismatch";
    case ErrorCode::kCheckpointTruncated: return "checkpoint_truncated";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

// Every failure surfaced by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace spellforge
