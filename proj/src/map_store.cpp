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
#include "ttpark/map_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ttpark/errors.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

static_assert(std::endian::native == std::endian::little, "map IO assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::size_t reserve) { bytes_.reserve(reserve); }

  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const std::uint8_t* data, std::size_t n) {
    bytes_.insert(bytes_.end(), data, data + n);
  }
  void put_pose(const Pose& p) {
    const auto& q = p.rotation();
    put(q.w());
    put(q.x());
    put(q.y());
    put(q.z());
    put(p.translation().x());
    put(p.translation().y());
    put(p.translation().z());
  }
  void put_descriptor(const Descriptor& d) {
    const auto b = d.to_bytes();
    put_bytes(b.data(), b.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t offset)
      : bytes_(bytes), offset_(offset) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  Pose get_pose(const char* what) {
    const std::size_t at = offset_;
    double v[7];
    for (double& x : v) x = get<double>(what);
    const double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3];
    if (!std::isfinite(n2) || std::abs(n2 - 1.0) > 1e-6) fail(at, std::string("non-unit quaternion in ") + what);
    return Pose(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), Vec3(v[4], v[5], v[6]));
  }
  Descriptor get_descriptor(const char* what) {
    need(Descriptor::kBytes, what);
    std::array<std::uint8_t, Descriptor::kBytes> b;
    std::memcpy(b.data(), bytes_.data() + offset_, b.size());
    offset_ += b.size();
    return Descriptor::from_bytes(b);
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
    offset_ += n;
    return s;
  }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  [[noreturn]] static void fail(std::size_t at, const std::string& detail) {
    throw Error(ErrorCode::kCorruption, detail + " at byte offset " + std::to_string(at));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - offset_ < n) {
      fail(offset_, std::string("truncated map: ") + what + " needs " + std::to_string(n) +
                        " bytes, " + std::to_string(bytes_.size() - offset_) + " left");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string id_context(const char* what, std::size_t i) {
  return std::string(what) + " " + std::to_string(i);
}

}  // namespace

void check_map_integrity(const TrainedMap& map) {
  auto fail = [](const std::string& detail) { throw Error(ErrorCode::kIntegrity, detail); };
  if (!map.global_ba_done) fail("map has not been through global bundle adjustment");
  if (map.keyframes.empty()) fail("map has no keyframes");
  if (map.landmarks.empty()) fail("map has no landmarks");
  try {
    map.rig.validate();
  } catch (const Error& e) {
    fail(std::string("invalid rig: ") + e.what());
  }
  for (std::size_t j = 0; j < map.landmarks.size(); ++j) {
    if (map.landmarks[j].id != j) fail(id_context("landmark id out of order at index", j));
  }
  for (std::size_t k = 0; k < map.keyframes.size(); ++k) {
    const Keyframe& kf = map.keyframes[k];
    if (kf.id != k) fail(id_context("keyframe id out of order at index", k));
    if (k > 0 && kf.frame_index <= map.keyframes[k - 1].frame_index) {
      fail(id_context("keyframe frame_index not increasing at keyframe", k));
    }
    for (const KeyframeObservation& o : kf.observations) {
      if (o.landmark_id >= map.landmarks.size()) {
        fail("keyframe " + std::to_string(k) + " observes missing landmark " +
             std::to_string(o.landmark_id));
      }
      if (o.camera >= map.rig.size()) {
        fail("keyframe " + std::to_string(k) + " references camera " + std::to_string(o.camera));
      }
      if (!(o.weight >= 0.0 && o.weight <= 1.0)) {
        fail(id_context("observation weight outside [0,1] in keyframe", k));
      }
    }
  }
}

std::size_t serialized_size(const TrainedMap& map) {
  std::size_t n = kMapHeaderBytes;
  n += 4 + map.metadata.scenario.size() + 8 + 8 + kPoseRecordBytes + 1;
  n += 4 + map.rig.size() * kCameraRecordBytes;
  for (const Keyframe& kf : map.keyframes) {
    n += 8 + kPoseRecordBytes + 4 + kf.observations.size() * kObservationRecordBytes;
  }
  n += map.landmarks.size() * kLandmarkRecordBytes;
  return n;
}

std::vector<std::uint8_t> serialize_map(const TrainedMap& map) {
  check_map_integrity(map);
  Writer w(serialized_size(map));
  w.put_bytes(reinterpret_cast<const std::uint8_t*>(kMapMagic), 4);
  w.put<std::uint32_t>(map.format_version);
  w.put<std::uint64_t>(map.keyframes.size());
  w.put<std::uint64_t>(map.landmarks.size());
  w.put<std::uint32_t>(0);  // CRC, patched below

  const MapMetadata& md = map.metadata;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(md.scenario.size()));
  w.put_bytes(reinterpret_cast<const std::uint8_t*>(md.scenario.data()), md.scenario.size());
  w.put<std::int64_t>(md.created);
  w.put<std::uint64_t>(md.seed);
  w.put_pose(md.start_pose);
  w.put<std::uint8_t>(map.global_ba_done ? 1 : 0);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(map.rig.size()));
  for (const RigCamera& cam : map.rig.cameras()) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(cam.id));
    const FisheyeIntrinsics& in = cam.intrinsics;
    for (double v : {in.focal, in.principal_point.x(), in.principal_point.y(), in.image_size.x(),
                     in.image_size.y(), in.theta_max}) {
      w.put(v);
    }
    w.put_pose(cam.camera_from_vehicle);
  }

  for (const Keyframe& kf : map.keyframes) {
    w.put<std::uint64_t>(kf.frame_index);
    w.put_pose(kf.pose);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(kf.observations.size()));
    for (const KeyframeObservation& o : kf.observations) {
      w.put<std::uint8_t>(o.camera);
      w.put(static_cast<float>(o.pixel.x()));
      w.put(static_cast<float>(o.pixel.y()));
      w.put<std::uint32_t>(o.landmark_id);
      w.put(static_cast<float>(o.weight));
      w.put_descriptor(o.descriptor);
    }
  }
  for (const MapLandmark& lm : map.landmarks) {
    w.put(lm.position.x());
    w.put(lm.position.y());
    w.put(lm.position.z());
    w.put_descriptor(lm.descriptor);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(lm.cls));
    w.put<std::uint32_t>(lm.observation_count);
  }

  auto& bytes = w.bytes();
  const std::uint32_t crc = crc_of(bytes.data() + kMapHeaderBytes, bytes.size() - kMapHeaderBytes);
  std::memcpy(bytes.data() + kMapHeaderBytes - 4, &crc, 4);
  return std::move(bytes);
}

TrainedMap deserialize_map(const std::vector<std::uint8_t>& bytes,
                           std::uint32_t supported_version) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMapMagic, 4) != 0) {
    throw Error(ErrorCode::kNotAMap, "missing TTPM magic");
  }
  Reader r(bytes, 4);
  TrainedMap map;
  map.format_version = r.get<std::uint32_t>("version");
  if (map.format_version == 0 || map.format_version > supported_version) {
    throw Error(ErrorCode::kVersion, "map format version " + std::to_string(map.format_version) +
                                         " not supported (reader supports 1.." +
                                         std::to_string(supported_version) + ")");
  }
  const auto n_kf = r.get<std::uint64_t>("keyframe count");
  const auto n_lm = r.get<std::uint64_t>("landmark count");
  const auto stored_crc = r.get<std::uint32_t>("checksum");
  const std::uint32_t crc = crc_of(bytes.data() + kMapHeaderBytes, bytes.size() - kMapHeaderBytes);
  if (crc != stored_crc) {
    Reader::fail(kMapHeaderBytes, "payload CRC mismatch (stored " + std::to_string(stored_crc) +
                                      ", computed " + std::to_string(crc) + ") over payload");
  }

  MapMetadata& md = map.metadata;
  const auto name_len = r.get<std::uint32_t>("scenario length");
  md.scenario = r.get_string(name_len, "scenario name");
  md.created = r.get<std::int64_t>("timestamp");
  md.seed = r.get<std::uint64_t>("seed");
  md.start_pose = r.get_pose("start pose");
  const std::size_t flag_at = r.offset();
  const auto flags = r.get<std::uint8_t>("flags");
  if (flags > 1) Reader::fail(flag_at, "unknown flag bits");
  map.global_ba_done = flags == 1;

  const auto n_cam = r.get<std::uint32_t>("camera count");
  if (static_cast<std::size_t>(n_cam) * kCameraRecordBytes > r.remaining()) {
    Reader::fail(r.offset(), "camera count exceeds file size");
  }
  std::vector<RigCamera> cams;
  for (std::uint32_t c = 0; c < n_cam; ++c) {
    RigCamera cam;
    const std::size_t at = r.offset();
    const auto id = r.get<std::uint8_t>("camera id");
    if (id > 3) Reader::fail(at, "bad camera id");
    cam.id = static_cast<CameraId>(id);
    FisheyeIntrinsics& in = cam.intrinsics;
    in.focal = r.get<double>("intrinsics");
    in.principal_point.x() = r.get<double>("intrinsics");
    in.principal_point.y() = r.get<double>("intrinsics");
    in.image_size.x() = r.get<double>("intrinsics");
    in.image_size.y() = r.get<double>("intrinsics");
    in.theta_max = r.get<double>("intrinsics");
    cam.camera_from_vehicle = r.get_pose("camera extrinsic");
    cams.push_back(cam);
  }
  try {
    map.rig = CameraRig(std::move(cams));
  } catch (const Error& e) {
    Reader::fail(r.offset(), std::string("invalid rig: ") + e.what());
  }

  const std::size_t min_kf_bytes = 8 + kPoseRecordBytes + 4;
  if (n_kf > r.remaining() / min_kf_bytes) Reader::fail(8, "keyframe count exceeds file size");
  map.keyframes.reserve(n_kf);
  for (std::uint64_t k = 0; k < n_kf; ++k) {
    Keyframe kf;
    kf.id = static_cast<std::uint32_t>(k);
    kf.frame_index = r.get<std::uint64_t>("keyframe");
    kf.pose = r.get_pose("keyframe pose");
    const auto n_obs = r.get<std::uint32_t>("observation count");
    if (static_cast<std::size_t>(n_obs) > r.remaining() / kObservationRecordBytes) {
      Reader::fail(r.offset(), "observation count exceeds file size");
    }
    kf.observations.resize(n_obs);
    for (KeyframeObservation& o : kf.observations) {
      o.camera = r.get<std::uint8_t>("observation");
      o.pixel.x() = r.get<float>("observation");
      o.pixel.y() = r.get<float>("observation");
      o.landmark_id = r.get<std::uint32_t>("observation");
      o.weight = r.get<float>("observation");
      o.descriptor = r.get_descriptor("observation");
    }
    map.keyframes.push_back(std::move(kf));
  }
  if (n_lm != r.remaining() / kLandmarkRecordBytes || r.remaining() % kLandmarkRecordBytes != 0) {
    Reader::fail(r.offset(), "landmark section holds " + std::to_string(r.remaining()) +
                                 " bytes, header declares " + std::to_string(n_lm) + " landmarks");
  }
  map.landmarks.reserve(n_lm);
  for (std::uint64_t j = 0; j < n_lm; ++j) {
    MapLandmark lm;
    lm.id = static_cast<std::uint32_t>(j);
    lm.position.x() = r.get<double>("landmark");
    lm.position.y() = r.get<double>("landmark");
    lm.position.z() = r.get<double>("landmark");
    lm.descriptor = r.get_descriptor("landmark");
    const std::size_t at = r.offset();
    const auto cls = r.get<std::uint8_t>("landmark class");
    try {
      lm.cls = class_from_byte(cls);
    } catch (const Error&) {
      Reader::fail(at, "unknown landmark class");
    }
    lm.observation_count = r.get<std::uint32_t>("landmark");
    map.landmarks.push_back(lm);
  }
  try {
    check_map_integrity(map);
  } catch (const Error& e) {
    Reader::fail(r.offset(), std::string("loaded map violates integrity: ") + e.what());
  }
  return map;
}

std::size_t save_map(const TrainedMap& map, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_map(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
  return bytes.size();
}

TrainedMap load_map(const std::filesystem::path& path, std::uint32_t supported_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "failed reading " + path.string());
  try {
    return deserialize_map(bytes, supported_version);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint32_t> nearest_keyframes(const TrainedMap& map, const Pose& query,
                                             double radius_m, std::size_t k) {
  if (!(radius_m > 0.0)) throw Error(ErrorCode::kConfig, "search radius must be > 0");
  if (k < 1) throw Error(ErrorCode::kConfig, "candidate count k must be >= 1");
  struct Hit {
    long long key;
    std::uint32_t id;
  };
  std::vector<Hit> hits;
  for (const Keyframe& kf : map.keyframes) {
    const double d = (kf.pose.translation() - query.translation()).norm();
    if (d <= radius_m) hits.push_back({std::llround(d * 1e12), kf.id});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return a.key != b.key ? a.key < b.key : a.id < b.id;
  });
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < hits.size() && i < k; ++i) ids.push_back(hits[i].id);
  return ids;
}

// Text dump.
//   TTPM-TEXT <version>
//   M <created> <seed> <global_ba> <start pose> <scenario...>
//   C <id> <focal> <ppx> <ppy> <width> <height> <theta_max> <camera_from_vehicle>
//   K <id> <frame_index> <pose> <n_obs>
//   O <camera> <u> <v> <landmark> <weight> <descriptor>
//   L <id> <x> <y> <z> <class> <observation_count> <descriptor>

void write_map_text(std::ostream& out, const TrainedMap& map) {
  using text::format_double;
  out << "TTPM-TEXT " << map.format_version << '\n';
  const MapMetadata& md = map.metadata;
  out << "M " << md.created << ' ' << md.seed << ' ' << (map.global_ba_done ? 1 : 0) << ' '
      << text::format_pose(md.start_pose) << ' ' << md.scenario << '\n';
  for (const RigCamera& cam : map.rig.cameras()) {
    const FisheyeIntrinsics& in = cam.intrinsics;
    out << "C " << static_cast<int>(cam.id) << ' ' << format_double(in.focal) << ' '
        << format_double(in.principal_point.x()) << ' ' << format_double(in.principal_point.y())
        << ' ' << format_double(in.image_size.x()) << ' ' << format_double(in.image_size.y())
        << ' ' << format_double(in.theta_max) << ' ' << text::format_pose(cam.camera_from_vehicle)
        << '\n';
  }
  for (const Keyframe& kf : map.keyframes) {
    out << "K " << kf.id << ' ' << kf.frame_index << ' ' << text::format_pose(kf.pose) << ' '
        << kf.observations.size() << '\n';
    for (const KeyframeObservation& o : kf.observations) {
      out << "O " << static_cast<int>(o.camera) << ' ' << format_double(o.pixel.x()) << ' '
          << format_double(o.pixel.y()) << ' ' << o.landmark_id << ' ' << format_double(o.weight)
          << ' ' << o.descriptor.to_hex() << '\n';
    }
  }
  for (const MapLandmark& lm : map.landmarks) {
    out << "L " << lm.id << ' ' << format_double(lm.position.x()) << ' '
        << format_double(lm.position.y()) << ' ' << format_double(lm.position.z()) << ' '
        << class_name(lm.cls) << ' ' << lm.observation_count << ' ' << lm.descriptor.to_hex()
        << '\n';
  }
}

TrainedMap read_map_text(std::istream& in) {
  using text::parse_double;
  using text::parse_u64;
  TrainedMap map;
  std::vector<RigCamera> cams;
  std::string line;
  std::size_t line_no = 0;
  std::size_t pending_obs = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string ctx = "map text line " + std::to_string(line_no);
    const auto tok = text::split_ws(line);
    if (tok.empty()) continue;
    auto want = [&](std::size_t n) {
      if (tok.size() < n) throw Error(ErrorCode::kConfig, ctx + ": expected " + std::to_string(n) + " fields");
    };
    if (!saw_header) {
      if (tok.size() != 2 || tok[0] != "TTPM-TEXT") throw Error(ErrorCode::kNotAMap, ctx + ": missing TTPM-TEXT header");
      map.format_version = static_cast<std::uint32_t>(parse_u64(tok[1], ctx));
      saw_header = true;
      continue;
    }
    if (pending_obs > 0 && tok[0] != "O") {
      throw Error(ErrorCode::kConfig, ctx + ": keyframe is missing observations");
    }
    if (tok[0] == "M") {
      want(12);
      map.metadata.created = text::parse_i64(tok[1], ctx);
      map.metadata.seed = parse_u64(tok[2], ctx);
      map.global_ba_done = parse_u64(tok[3], ctx) != 0;
      map.metadata.start_pose = text::parse_pose(tok, 4, ctx);
      // Scenario is the rest of the line after the eleventh field.
      std::size_t pos = 0;
      for (int f = 0; f < 11; ++f) {
        pos = line.find_first_not_of(" \t", pos);
        pos = line.find_first_of(" \t", pos);
      }
      pos = pos == std::string::npos ? pos : line.find_first_not_of(" \t", pos);
      map.metadata.scenario = pos == std::string::npos ? "" : std::string(text::trim(line.substr(pos)));
    } else if (tok[0] == "C") {
      want(15);
      RigCamera cam;
      cam.id = static_cast<CameraId>(parse_u64(tok[1], ctx));
      cam.intrinsics.focal = parse_double(tok[2], ctx);
      cam.intrinsics.principal_point = Vec2(parse_double(tok[3], ctx), parse_double(tok[4], ctx));
      cam.intrinsics.image_size = Vec2(parse_double(tok[5], ctx), parse_double(tok[6], ctx));
      cam.intrinsics.theta_max = parse_double(tok[7], ctx);
      cam.camera_from_vehicle = text::parse_pose(tok, 8, ctx);
      cams.push_back(cam);
    } else if (tok[0] == "K") {
      want(11);
      Keyframe kf;
      kf.id = static_cast<std::uint32_t>(parse_u64(tok[1], ctx));
      kf.frame_index = parse_u64(tok[2], ctx);
      kf.pose = text::parse_pose(tok, 3, ctx);
      pending_obs = parse_u64(tok[10], ctx);
      map.keyframes.push_back(std::move(kf));
    } else if (tok[0] == "O") {
      want(7);
      if (pending_obs == 0) throw Error(ErrorCode::kConfig, ctx + ": observation outside a keyframe");
      KeyframeObservation o;
      o.camera = static_cast<std::uint8_t>(parse_u64(tok[1], ctx));
      o.pixel = Vec2(parse_double(tok[2], ctx), parse_double(tok[3], ctx));
      o.landmark_id = static_cast<std::uint32_t>(parse_u64(tok[4], ctx));
      o.weight = parse_double(tok[5], ctx);
      o.descriptor = Descriptor::from_hex(tok[6]);
      map.keyframes.back().observations.push_back(o);
      --pending_obs;
    } else if (tok[0] == "L") {
      want(8);
      MapLandmark lm;
      lm.id = static_cast<std::uint32_t>(parse_u64(tok[1], ctx));
      lm.position = Vec3(parse_double(tok[2], ctx), parse_double(tok[3], ctx), parse_double(tok[4], ctx));
      lm.cls = parse_class(tok[5]);
      lm.observation_count = static_cast<std::uint32_t>(parse_u64(tok[6], ctx));
      lm.descriptor = Descriptor::from_hex(tok[7]);
      map.landmarks.push_back(lm);
    } else {
      throw Error(ErrorCode::kConfig, ctx + ": unknown record '" + std::string(tok[0]) + "'");
    }
  }
  if (!saw_header) throw Error(ErrorCode::kNotAMap, "empty map text");
  if (pending_obs > 0) throw Error(ErrorCode::kConfig, "map text ends inside a keyframe");
  map.rig = CameraRig(std::move(cams));
  return map;
}

}  // namespace ttpark
