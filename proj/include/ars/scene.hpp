#pragma once

// Project inputs: the tracked frames and the virtual object instances,
// with their JSON persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ars/geometry.hpp"
#include "ars/json_io.hpp"

namespace ars {

using FrameId = std::int64_t;
using InstanceId = std::int64_t;
using ClassId = int;

struct Frame {
  FrameId id = 0;
  std::string image_path;  ///< relative to FrameSet::base_dir()
  RigidTransform world_T_cam;
  CameraModel camera;
};

/// Ordered, id-unique collection of frames.
class FrameSet {
 public:
  FrameSet() = default;

  explicit FrameSet(std::vector<Frame> frames, std::filesystem::path base_dir = {})
      : frames_(std::move(frames)), base_dir_(std::move(base_dir)) {
    index_.reserve(frames_.size());
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      validate(frames_[i].camera);
      if (!index_.emplace(frames_[i].id, i).second)
        throw Error(ErrorCode::DuplicateId, "frame id " + std::to_string(frames_[i].id));
    }
  }

  [[nodiscard]] const std::vector<Frame>& frames() const noexcept { return frames_; }
  [[nodiscard]] const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  [[nodiscard]] std::size_t size() const noexcept { return frames_.size(); }
  [[nodiscard]] bool empty() const noexcept { return frames_.empty(); }

  [[nodiscard]] const Frame* find(FrameId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &frames_[it->second];
  }

  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

 private:
  std::vector<Frame> frames_;
  std::filesystem::path base_dir_;
  std::unordered_map<FrameId, std::size_t> index_;
};

/// A 3D oriented box standing in for one physical object.
///
/// Local frame: the origin is the corner p0 the box was drawn from, and the
/// solid occupies [0, sx] x [-sy, 0] x [0, sz]. This is the region spanned
/// by the four construction points p0..p3 (see arp.hpp).
struct VirtualBox {
  InstanceId id = 0;
  RigidTransform world_T_obj;
  Vec3 size = Vec3::Ones();
  ClassId class_id = 0;
  std::string class_name;
};

inline void validate_size(const Vec3& size) {
  if (!size.allFinite() || !(size.x() > 0.0) || !(size.y() > 0.0) || !(size.z() > 0.0))
    throw Error(ErrorCode::InvalidSize, "box size components must be strictly positive");
}

/// Corner k of the box in its local frame; bit 0 selects x, bit 1 y, bit 2 z.
inline Vec3 local_corner(const Vec3& size, int k) {
  return {(k & 1) ? size.x() : 0.0, (k & 2) ? -size.y() : 0.0, (k & 4) ? size.z() : 0.0};
}

/// The 12 edges as index pairs into box_vertices(), each differing in one bit.
inline constexpr std::array<std::pair<int, int>, 12> kBoxEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

/// The 8 world-frame vertices in binary-counter order over local x, y, z.
inline std::array<Vec3, 8> box_vertices(const VirtualBox& box) {
  std::array<Vec3, 8> out;
  for (int k = 0; k < 8; ++k) out[k] = box.world_T_obj.apply(local_corner(box.size, k));
  return out;
}

inline Vec3 box_center(const VirtualBox& box) {
  return box.world_T_obj.apply(Vec3(0.5 * box.size.x(), -0.5 * box.size.y(), 0.5 * box.size.z()));
}

/// Moves a box rigidly: the new pose is t * world_T_obj.
inline VirtualBox apply(const RigidTransform& t, VirtualBox box) {
  box.world_T_obj = compose(t, box.world_T_obj);
  return box;
}

/// Instances plus the class-name table. Ids are unique; every class id used
/// by an instance has a name.
class InstanceSet {
 public:
  InstanceSet() = default;

  InstanceSet(std::vector<VirtualBox> instances, std::map<ClassId, std::string> class_table)
      : instances_(std::move(instances)), class_table_(std::move(class_table)) {
    std::unordered_map<InstanceId, int> seen;
    for (VirtualBox& box : instances_) {
      validate_size(box.size);
      if (box.id < 0) throw Error(ErrorCode::InvalidArgument, "instance ids must be non-negative");
      if (!seen.emplace(box.id, 0).second)
        throw Error(ErrorCode::DuplicateId, "instance id " + std::to_string(box.id));
      auto it = class_table_.find(box.class_id);
      if (it == class_table_.end())
        throw Error(ErrorCode::InvalidArgument,
                    "class id " + std::to_string(box.class_id) + " missing from class table");
      box.class_name = it->second;
    }
  }

  [[nodiscard]] const std::vector<VirtualBox>& instances() const noexcept { return instances_; }
  [[nodiscard]] const std::map<ClassId, std::string>& class_table() const noexcept {
    return class_table_;
  }
  [[nodiscard]] std::size_t size() const noexcept { return instances_.size(); }
  [[nodiscard]] bool empty() const noexcept { return instances_.empty(); }

  [[nodiscard]] const VirtualBox* find(InstanceId id) const {
    for (const VirtualBox& b : instances_)
      if (b.id == id) return &b;
    return nullptr;
  }

  [[nodiscard]] InstanceId next_id() const {
    InstanceId next = 0;
    for (const VirtualBox& b : instances_) next = std::max(next, b.id + 1);
    return next;
  }

 private:
  std::vector<VirtualBox> instances_;
  std::map<ClassId, std::string> class_table_;
};

// ---------------------------------------------------------------------------
// Frames manifest

inline FrameSet frames_from_json(const json& doc, const std::filesystem::path& base_dir = {}) {
  std::optional<CameraModel> global_camera;
  if (doc.is_object() && doc.contains("camera")) global_camera = camera_from_json(doc["camera"]);
  const json& list = field(doc, "frames");
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "'frames' must be an array");

  std::vector<Frame> frames;
  frames.reserve(list.size());
  for (const json& entry : list) {
    Frame f;
    f.id = integer_at(field(entry, "id"), "frame id");
    if (f.id < 0) throw Error(ErrorCode::ParseError, "frame ids must be non-negative");
    if (entry.contains("image")) {
      if (!entry["image"].is_string()) throw Error(ErrorCode::ParseError, "'image' must be a string");
      f.image_path = entry["image"].get<std::string>();
    }
    f.world_T_cam = pose_from_json(field(entry, "world_T_cam"));
    if (entry.contains("camera")) {
      f.camera = camera_from_json(entry["camera"]);
    } else if (global_camera) {
      f.camera = *global_camera;
    } else {
      throw Error(ErrorCode::ParseError,
                  "frame " + std::to_string(f.id) + " has no camera and no global camera is set");
    }
    frames.push_back(std::move(f));
  }
  return FrameSet(std::move(frames), base_dir);
}

inline FrameSet load_frames(const std::filesystem::path& manifest_path) {
  return frames_from_json(read_json_file(manifest_path), manifest_path.parent_path());
}

/// Writes the manifest with a global camera taken from the first frame;
/// frames whose intrinsics differ carry their own override.
inline ordered_json frames_to_json(const FrameSet& set) {
  ordered_json doc = ordered_json::object();
  const CameraModel* global = set.empty() ? nullptr : &set.frames().front().camera;
  if (global) doc["camera"] = camera_to_json<ordered_json>(*global);
  ordered_json list = ordered_json::array();
  for (const Frame& f : set) {
    ordered_json e = ordered_json::object();
    e["id"] = f.id;
    e["image"] = f.image_path;
    e["world_T_cam"] = pose_to_json<ordered_json>(f.world_T_cam);
    if (!(f.camera == *global)) e["camera"] = camera_to_json<ordered_json>(f.camera);
    list.push_back(std::move(e));
  }
  doc["frames"] = std::move(list);
  return doc;
}

inline void save_frames(const FrameSet& set, const std::filesystem::path& path) {
  write_text_file(path, frames_to_json(set).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Instances file

inline InstanceSet instances_from_json(const json& doc) {
  std::map<ClassId, std::string> classes;
  if (doc.is_object() && doc.contains("classes")) {
    const json& table = doc["classes"];
    if (!table.is_object()) throw Error(ErrorCode::ParseError, "'classes' must be an object");
    for (auto it = table.begin(); it != table.end(); ++it) {
      ClassId id = 0;
      try {
        std::size_t used = 0;
        id = std::stoi(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "class key '" + it.key() + "' is not an integer");
      }
      if (!it.value().is_string()) throw Error(ErrorCode::ParseError, "class names must be strings");
      classes[id] = it.value().get<std::string>();
    }
  }
  const json& list = field(doc, "instances");
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "'instances' must be an array");

  std::vector<VirtualBox> boxes;
  boxes.reserve(list.size());
  for (const json& entry : list) {
    VirtualBox b;
    b.id = integer_at(field(entry, "id"), "instance id");
    b.class_id = static_cast<ClassId>(integer_at(field(entry, "class_id"), "class_id"));
    b.world_T_obj = pose_from_json(field(entry, "world_T_obj"));
    b.size = vec3_from_json(field(entry, "size"), "size");
    boxes.push_back(std::move(b));
  }
  return InstanceSet(std::move(boxes), std::move(classes));
}

inline InstanceSet load_instances(const std::filesystem::path& path) {
  return instances_from_json(read_json_file(path));
}

inline ordered_json instances_to_json(const InstanceSet& set) {
  ordered_json doc = ordered_json::object();
  ordered_json classes = ordered_json::object();
  for (const auto& [id, name] : set.class_table()) classes[std::to_string(id)] = name;
  doc["classes"] = std::move(classes);
  ordered_json list = ordered_json::array();
  for (const VirtualBox& b : set.instances()) {
    ordered_json e = ordered_json::object();
    e["id"] = b.id;
    e["class_id"] = b.class_id;
    e["world_T_obj"] = pose_to_json<ordered_json>(b.world_T_obj);
    e["size"] = vec3_to_json<ordered_json>(b.size);
    list.push_back(std::move(e));
  }
  doc["instances"] = std::move(list);
  return doc;
}

inline void save_instances(const InstanceSet& set, const std::filesystem::path& path) {
  write_text_file(path, instances_to_json(set).dump(2) + "\n");
}

}  // namespace ars
