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
#include "ttpark/text_format.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "ttpark/errors.hpp"

namespace ttpark::text {

namespace {

template <typename T>
std::string shortest(T value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view token, std::string_view context) {
  T value{};
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw Error(ErrorCode::kConfig,
                std::string(context) + ": cannot parse number '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

std::string format_double(double value) { return shortest(value); }
std::string format_float(float value) { return shortest(value); }

std::string format_fixed(double value, int decimals) {
  char buf[64];
  // Avoid printing "-0.00".
  if (value == 0.0) value = 0.0;
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string out(buf);
  if (out.starts_with('-') && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

double parse_double(std::string_view token, std::string_view context) {
  if (token == "nan") return std::nan("");
  return parse_number<double>(token, context);
}

float parse_float(std::string_view token, std::string_view context) {
  return parse_number<float>(token, context);
}

std::uint64_t parse_u64(std::string_view token, std::string_view context) {
  return parse_number<std::uint64_t>(token, context);
}

std::int64_t parse_i64(std::string_view token, std::string_view context) {
  return parse_number<std::int64_t>(token, context);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_pose(const Pose& pose) {
  const auto& q = pose.rotation();
  const auto& t = pose.translation();
  std::string out;
  for (double v : {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()}) {
    if (!out.empty()) out.push_back(' ');
    out += format_double(v);
  }
  return out;
}

Pose parse_pose(const std::vector<std::string_view>& tokens, std::size_t first,
                std::string_view context) {
  if (tokens.size() < first + 7) {
    throw Error(ErrorCode::kConfig, std::string(context) + ": expected 7 pose values");
  }
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = parse_double(tokens[first + i], context);
  return Pose(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), Vec3(v[4], v[5], v[6]));
}

}  // namespace ttpark::text
