#pragma once

// JSON helpers shared by every file format: 9-significant-digit number
// rounding, pose (16 numbers, row-major 4x4) and camera encoding, file IO.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ars/error.hpp"
#include "ars/geometry.hpp"

namespace ars {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Rounds to 9 significant digits. The shortest round-trip representation
/// json emits for the result is at most 9 digits.
inline double round_sig9(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline Mat3 round_sig9(const Mat3& m) { return m.unaryExpr([](double x) { return round_sig9(x); }); }

/// Rotation entries lie in [-1, 1]; rounding them to 9 decimals keeps them
/// within 9 significant digits and puts all entries on one absolute grid.
inline Mat3 round_rotation(const Mat3& m) {
  return m.unaryExpr([](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9f", x);
    const double v = std::strtod(buf, nullptr);
    return v == 0.0 ? 0.0 : v;
  });
}

/// Rotation as it should be written so that loading it back (which snaps to
/// the nearest rotation) and writing again produces the same digits.
///
/// If the round/snap iteration does not settle, it is restarted from the
/// rotation nudged by a few 1e-10 rad about fixed axes, far below the
/// written precision.
inline Mat3 serializable_rotation(const Mat3& r) {
  auto reload = [](const Mat3& m) {
    return round_rotation(RigidTransform::from_rotation_translation(m, Vec3::Zero()).rotation());
  };
  const Vec3 axes[] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  Mat3 candidate = round_rotation(r);
  for (int attempt = 0; attempt < 30; ++attempt) {
    if (attempt > 0) {
      const double angle = 1e-10 * ((attempt + 2) / 3);
      candidate = round_rotation(Mat3(Eigen::AngleAxisd(angle, axes[attempt % 3]) * r));
    }
    for (int i = 0; i < 8; ++i) {
      const Mat3 next = reload(candidate);
      if (next == candidate) return candidate;
      candidate = next;
    }
  }
  return candidate;
}

template <typename Json = json>
Json pose_to_json(const RigidTransform& t) {
  const Mat3 r = serializable_rotation(t.rotation());
  Json arr = Json::array();
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) arr.push_back(r(row, col));
    arr.push_back(round_sig9(t.translation()(row)));
  }
  for (double v : {0.0, 0.0, 0.0, 1.0}) arr.push_back(v);
  return arr;
}

template <typename Json>
double number_at(const Json& j, const char* what) {
  if (!j.is_number()) throw Error(ErrorCode::ParseError, std::string(what) + " must be a number");
  return j.template get<double>();
}

template <typename Json>
long long integer_at(const Json& j, const char* what) {
  if (!j.is_number_integer())
    throw Error(ErrorCode::ParseError, std::string(what) + " must be an integer");
  return j.template get<long long>();
}

template <typename Json>
const Json& field(const Json& obj, const char* key) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, "expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  return *it;
}

template <typename Json>
RigidTransform pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16)
    throw Error(ErrorCode::ParseError, "pose must be an array of 16 numbers");
  Mat4 m;
  for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = number_at(j[i], "pose entry");
  return RigidTransform::from_matrix(m);
}

template <typename Json>
Vec3 vec3_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ParseError, std::string(what) + " must be an array of 3 numbers");
  return {number_at(j[0], what), number_at(j[1], what), number_at(j[2], what)};
}

template <typename Json = json>
Json vec3_to_json(const Vec3& v) {
  return Json::array({round_sig9(v.x()), round_sig9(v.y()), round_sig9(v.z())});
}

template <typename Json = json>
Json camera_to_json(const CameraModel& cam) {
  Json j = Json::object();
  j["fx"] = round_sig9(cam.fx);
  j["fy"] = round_sig9(cam.fy);
  j["cx"] = round_sig9(cam.cx);
  j["cy"] = round_sig9(cam.cy);
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

template <typename Json>
CameraModel camera_from_json(const Json& j) {
  CameraModel cam;
  cam.fx = number_at(field(j, "fx"), "fx");
  cam.fy = number_at(field(j, "fy"), "fy");
  cam.cx = number_at(field(j, "cx"), "cx");
  cam.cy = number_at(field(j, "cy"), "cy");
  cam.width = static_cast<int>(integer_at(field(j, "width"), "width"));
  cam.height = static_cast<int>(integer_at(field(j, "height"), "height"));
  validate(cam);
  return cam;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace ars
