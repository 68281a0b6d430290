/******************************************************************************
 * Copyright 2026 The ttpark Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttpark {

enum class ErrorCode {
  kConfig,
  kDegenerateInput,
  kOutOfModel,
  kArity,
  kDegenerateBaseline,
  kTrackingLost,
  kPoseFailure,
  kIntegrity,
  kRankDeficiency,
  kBootstrap,
  kNotAMap,
  kVersion,
  kCorruption,
  kIo,
  kInitializationFailure,
  kAlignment,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kDegenerateInput: return "DEGENERATE_INPUT";
    case ErrorCode::kOutOfModel: return "OUT_OF_MODEL";
    case ErrorCode::kArity: return "ARITY";
    case ErrorCode::kDegenerateBaseline: return "DEGENERATE_BASELINE";
    case ErrorCode::kTrackingLost: return "TRACKING_LOST";
    case ErrorCode::kPoseFailure: return "POSE_FAILURE";
    case ErrorCode::kIntegrity: return "INTEGRITY";
    case ErrorCode::kRankDeficiency: return "RANK_DEFICIENCY";
    case ErrorCode::kBootstrap: return "BOOTSTRAP";
    case ErrorCode::kNotAMap: return "NOT_A_MAP";
    case ErrorCode::kVersion: return "VERSION";
    case ErrorCode::kCorruption: return "CORRUPTION";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kInitializationFailure: return "INIT_FAILURE";
    case ErrorCode::kAlignment: return "ALIGNMENT";
  }
  return "UNKNOWN";
}

/// Every failure in the library is reported through this exception; the code
/// lets callers (the CLI in particular) classify it without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ttpark
