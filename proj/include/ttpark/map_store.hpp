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
/**
 * @file map_store.hpp
 * @brief The trained map and its `.ttpm` binary format.
 *
 * Layout, all little-endian:
 *
 *     header   "TTPM" | u32 version | u64 n_keyframes | u64 n_landmarks | u32 crc32(payload)
 *     payload  metadata | rig | keyframes | landmarks
 *
 *     metadata   u32 name_len | name bytes | i64 created | u64 seed | 7 x f64 start pose | u8 flags
 *     rig        u32 n_cameras | n x (u8 id | 6 x f64 intrinsics | 7 x f64 camera_from_vehicle)
 *     keyframe   u64 frame_index | 7 x f64 pose | u32 n_obs | n_obs x observation
 *     observation u8 camera | 2 x f32 pixel | u32 landmark index | f32 weight | 32 B descriptor
 *     landmark   3 x f64 position | 32 B descriptor | u8 class | u32 observation_count
 *
 * Poses are (qw, qx, qy, qz, tx, ty, tz). Keyframe and landmark ids are their
 * positions in the file.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ttpark/bundle_adjustment.hpp"
#include "ttpark/geometry.hpp"

namespace ttpark {

inline constexpr std::uint32_t kMapFormatVersion = 1;
inline constexpr char kMapMagic[4] = {'T', 'T', 'P', 'M'};

inline constexpr std::size_t kMapHeaderBytes = 4 + 4 + 8 + 8 + 4;
inline constexpr std::size_t kPoseRecordBytes = 7 * 8;
inline constexpr std::size_t kCameraRecordBytes = 1 + 6 * 8 + kPoseRecordBytes;
inline constexpr std::size_t kObservationRecordBytes = 1 + 2 * 4 + 4 + 4 + 32;
inline constexpr std::size_t kLandmarkRecordBytes = 3 * 8 + 32 + 1 + 4;

struct MapMetadata {
  std::string scenario;
  /// Seconds since the Unix epoch; training leaves it at 0 unless told
  /// otherwise so map files are reproducible.
  std::int64_t created = 0;
  std::uint64_t seed = 0;
  Pose start_pose;

  friend bool operator==(const MapMetadata&, const MapMetadata&) = default;
};

struct TrainedMap {
  std::uint32_t format_version = kMapFormatVersion;
  CameraRig rig;
  std::vector<Keyframe> keyframes;
  std::vector<MapLandmark> landmarks;
  MapMetadata metadata;
  bool global_ba_done = false;

  friend bool operator==(const TrainedMap&, const TrainedMap&) = default;
};

/// Throws kIntegrity describing the first violated invariant: no landmarks or
/// keyframes, global BA not run, ids not dense, frame indices not strictly
/// increasing, dangling landmark or camera references, weights outside
/// [0, 1], an invalid rig.
void check_map_integrity(const TrainedMap& map);

/// Bytes save_map writes for `map`.
std::size_t serialized_size(const TrainedMap& map);

std::vector<std::uint8_t> serialize_map(const TrainedMap& map);
TrainedMap deserialize_map(const std::vector<std::uint8_t>& bytes,
                           std::uint32_t supported_version = kMapFormatVersion);

/// Returns the byte count. Throws kIntegrity before touching the file when
/// the map is invalid and kIo (naming the path) when writing fails.
std::size_t save_map(const TrainedMap& map, const std::filesystem::path& path);

/// Throws kNotAMap, kVersion (file newer than `supported_version`) or
/// kCorruption (truncation, CRC mismatch, malformed records) with the byte
/// offset where the problem was found; kIo when the file cannot be read.
TrainedMap load_map(const std::filesystem::path& path,
                    std::uint32_t supported_version = kMapFormatVersion);

/// Up to k keyframe ids within radius_m of the query position, nearest first,
/// ties (to 1e-12 m) broken by lower id.
std::vector<std::uint32_t> nearest_keyframes(const TrainedMap& map, const Pose& query,
                                             double radius_m, std::size_t k);

/// Lossless text form of the whole map.
void write_map_text(std::ostream& out, const TrainedMap& map);
TrainedMap read_map_text(std::istream& in);

}  // namespace ttpark
