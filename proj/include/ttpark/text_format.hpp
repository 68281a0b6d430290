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
// Helpers shared by the line-oriented text formats. Floats are written in
// their shortest round-trip form so text files reload bit-exactly.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ttpark/geometry.hpp"

namespace ttpark::text {

std::string format_double(double value);
std::string format_float(float value);
std::string format_fixed(double value, int decimals);

double parse_double(std::string_view token, std::string_view context);
float parse_float(std::string_view token, std::string_view context);
std::uint64_t parse_u64(std::string_view token, std::string_view context);
std::int64_t parse_i64(std::string_view token, std::string_view context);

/// Splits on runs of spaces/tabs.
std::vector<std::string_view> split_ws(std::string_view line);
std::string_view trim(std::string_view s);

/// "qw qx qy qz tx ty tz"
std::string format_pose(const Pose& pose);
/// Parses seven tokens starting at `first`.
Pose parse_pose(const std::vector<std::string_view>& tokens, std::size_t first,
                std::string_view context);

}  // namespace ttpark::text
