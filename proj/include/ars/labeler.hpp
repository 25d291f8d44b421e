#pragma once

// Automatic 2D labeling: every virtual box is reprojected into every frame,
// clipped against the near plane, reduced to a 2D box and written out as a
// detection dataset.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ars/geometry.hpp"
#include "ars/json_io.hpp"
#include "ars/parallel.hpp"
#include "ars/scene.hpp"

namespace ars {

struct LabelerConfig {
  double near_plane = 0.01;            ///< meters
  double min_box_area = 25.0;          ///< pixels^2, after clipping to the image
  double min_visible_fraction = 0.05;  ///< clipped / unclipped bbox area
};

inline void validate(const LabelerConfig& cfg) {
  if (!(cfg.near_plane > 0.0)) throw Error(ErrorCode::InvalidArgument, "near_plane must be > 0");
  if (!(cfg.min_box_area >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "min_box_area must be >= 0");
  if (!(cfg.min_visible_fraction >= 0.0 && cfg.min_visible_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "min_visible_fraction must lie in [0, 1]");
}

/// Center/size box in pixels.
struct BoxGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  [[nodiscard]] double x_min() const { return cx - 0.5 * w; }
  [[nodiscard]] double x_max() const { return cx + 0.5 * w; }
  [[nodiscard]] double y_min() const { return cy - 0.5 * h; }
  [[nodiscard]] double y_max() const { return cy + 0.5 * h; }
  [[nodiscard]] double area() const { return w * h; }

  static BoxGeometry from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }

  bool operator==(const BoxGeometry&) const = default;
};

struct Annotation2D {
  ClassId class_id = 0;
  InstanceId instance_id = 0;
  BoxGeometry box;
  std::optional<double> confidence;  ///< absent for ground truth
};

struct LabeledFrame {
  FrameId frame_id = 0;
  std::vector<Annotation2D> annotations;
};

/// Maps a reprojected point set to a 2D box; std::nullopt drops the instance.
using BoxReducer = std::function<std::optional<BoxGeometry>(
    std::span<const PixelPoint>, const CameraModel&, const LabelerConfig&)>;

/// Box vertices in the camera frame, ordered like box_vertices().
inline std::array<Vec3, 8> box_vertices_in_camera(const Frame& frame, const VirtualBox& box) {
  const RigidTransform cam_T_obj = compose(invert(frame.world_T_cam), box.world_T_obj);
  std::array<Vec3, 8> out;
  for (int k = 0; k < 8; ++k) out[k] = cam_T_obj.apply(local_corner(box.size, k));
  return out;
}

/// Camera-frame points that survive near-plane clipping of the 12 box edges:
/// the vertices in front of the plane (vertex order), then one point per
/// edge crossing the plane (edge order). Empty iff the box is entirely
/// behind the plane.
inline std::vector<Vec3> clip_box_to_near_plane(const std::array<Vec3, 8>& cam_vertices,
                                                double near_plane) {
  std::vector<Vec3> out;
  out.reserve(14);
  for (const Vec3& v : cam_vertices)
    if (v.z() >= near_plane) out.push_back(v);
  for (const auto& [a, b] : kBoxEdges) {
    const Vec3& pa = cam_vertices[a];
    const Vec3& pb = cam_vertices[b];
    const bool in_a = pa.z() >= near_plane;
    const bool in_b = pb.z() >= near_plane;
    if (in_a == in_b) continue;
    const double t = (near_plane - pa.z()) / (pb.z() - pa.z());
    Vec3 p = pa + t * (pb - pa);
    p.z() = near_plane;
    out.push_back(p);
  }
  return out;
}

/// Projection of the near-plane-clipped box outline.
inline std::vector<PixelPoint> reproject_box(const Frame& frame, const VirtualBox& box,
                                             const LabelerConfig& cfg = {}) {
  const std::vector<Vec3> clipped =
      clip_box_to_near_plane(box_vertices_in_camera(frame, box), cfg.near_plane);
  std::vector<PixelPoint> out;
  out.reserve(clipped.size());
  for (const Vec3& p : clipped) out.push_back(project_point(frame.camera, p));
  return out;
}

/// Axis-aligned minimum bounding rectangle clipped to the image, subject to
/// the area and visible-fraction filters.
inline std::optional<BoxGeometry> min_bbox(std::span<const PixelPoint> points,
                                           const CameraModel& image, const LabelerConfig& cfg = {}) {
  if (points.empty()) return std::nullopt;
  double u0 = points[0].u, u1 = points[0].u, v0 = points[0].v, v1 = points[0].v;
  for (const PixelPoint& p : points.subspan(1)) {
    u0 = std::min(u0, p.u);
    u1 = std::max(u1, p.u);
    v0 = std::min(v0, p.v);
    v1 = std::max(v1, p.v);
  }
  const double cu0 = std::max(u0, 0.0);
  const double cu1 = std::min(u1, static_cast<double>(image.width));
  const double cv0 = std::max(v0, 0.0);
  const double cv1 = std::min(v1, static_cast<double>(image.height));
  if (!(cu1 > cu0) || !(cv1 > cv0)) return std::nullopt;

  const double full_area = (u1 - u0) * (v1 - v0);
  const double clipped_area = (cu1 - cu0) * (cv1 - cv0);
  if (clipped_area < cfg.min_box_area) return std::nullopt;
  if (full_area > 0.0 && clipped_area / full_area < cfg.min_visible_fraction) return std::nullopt;
  return BoxGeometry::from_corners(cu0, cv0, cu1, cv1);
}

inline std::optional<BoxGeometry> label_box(const Frame& frame, const VirtualBox& box,
                                            const LabelerConfig& cfg,
                                            const BoxReducer& reducer = {}) {
  const std::vector<PixelPoint> projected = reproject_box(frame, box, cfg);
  if (projected.empty()) return std::nullopt;
  return reducer ? reducer(projected, frame.camera, cfg) : min_bbox(projected, frame.camera, cfg);
}

/// One annotation per instance that survives projection and filtering,
/// ordered by instance id. No occlusion reasoning.
inline LabeledFrame label_frame(const Frame& frame, const InstanceSet& instances,
                                const LabelerConfig& cfg = {}, const BoxReducer& reducer = {}) {
  LabeledFrame out;
  out.frame_id = frame.id;
  for (const VirtualBox& box : instances.instances()) {
    if (auto geometry = label_box(frame, box, cfg, reducer))
      out.annotations.push_back({box.class_id, box.id, *geometry, std::nullopt});
  }
  std::sort(out.annotations.begin(), out.annotations.end(),
            [](const Annotation2D& a, const Annotation2D& b) { return a.instance_id < b.instance_id; });
  return out;
}

/// Labels every frame, preserving frame order regardless of `jobs`.
inline std::vector<LabeledFrame> label_all(const FrameSet& frames, const InstanceSet& instances,
                                           const LabelerConfig& cfg = {}, unsigned jobs = 0,
                                           const BoxReducer& reducer = {}) {
  validate(cfg);
  std::vector<LabeledFrame> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) {
    out[i] = label_frame(frames.frames()[i], instances, cfg, reducer);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dataset output

enum class DatasetFormat { Yolo, Json };

inline DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "yolo") return DatasetFormat::Yolo;
  if (name == "json") return DatasetFormat::Json;
  throw Error(ErrorCode::UnknownFormat, "unknown dataset format '" + std::string(name) + "'");
}

struct DatasetOptions {
  DatasetFormat format = DatasetFormat::Yolo;
  bool split = false;
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
  unsigned jobs = 0;
};

struct DatasetStats {
  std::size_t frames_written = 0;
  std::size_t annotations_written = 0;
  std::map<ClassId, std::size_t> per_class;
  double elapsed_seconds = 0.0;
};

struct TrainValSplit {
  std::vector<FrameId> train;
  std::vector<FrameId> val;
  std::uint64_t seed = 0;
};

/// Seeded shuffle; the first round(n * train_fraction) shuffled ids go to
/// train. Lists are returned in manifest order. The shuffle is a plain
/// Fisher-Yates over mt19937_64 so results do not depend on the standard
/// library's distribution implementations.
inline TrainValSplit split_train_val(const FrameSet& frames, double train_fraction,
                                     std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "train fraction must lie in [0, 1]");
  const std::size_t n = frames.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto train_count = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<bool> is_train(n, false);
  for (std::size_t k = 0; k < train_count; ++k) is_train[order[k]] = true;

  TrainValSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < n; ++i)
    (is_train[i] ? split.train : split.val).push_back(frames.frames()[i].id);
  return split;
}

/// "class_id cx cy w h" normalized by image size, 6 decimals.
inline std::string yolo_lines(const LabeledFrame& labeled, const CameraModel& cam) {
  std::string out;
  char buf[128];
  for (const Annotation2D& a : labeled.annotations) {
    std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f\n", a.class_id, a.box.cx / cam.width,
                  a.box.cy / cam.height, a.box.w / cam.width, a.box.h / cam.height);
    out += buf;
  }
  return out;
}

/// Label file stem per frame: the image file stem, or frame_<id> when the
/// frame has no image. Stems must be unique.
inline std::vector<std::string> label_file_stems(const FrameSet& frames) {
  std::vector<std::string> stems;
  stems.reserve(frames.size());
  std::set<std::string> seen;
  for (const Frame& f : frames) {
    std::string stem = f.image_path.empty() ? std::string()
                                            : std::filesystem::path(f.image_path).stem().string();
    if (stem.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "frame_%06lld", static_cast<long long>(f.id));
      stem = buf;
    }
    if (!seen.insert(stem).second)
      throw Error(ErrorCode::InvalidArgument, "two frames map to the label file '" + stem + ".txt'");
    stems.push_back(std::move(stem));
  }
  return stems;
}

inline std::string class_list(const InstanceSet& instances) {
  const auto& table = instances.class_table();
  std::string out;
  if (table.empty()) return out;
  const ClassId last = table.rbegin()->first;
  for (ClassId id = 0; id <= last; ++id) {
    auto it = table.find(id);
    out += (it != table.end() ? it->second : "class_" + std::to_string(id)) + "\n";
  }
  return out;
}

inline ordered_json annotation_to_json(const Annotation2D& a) {
  ordered_json j = ordered_json::object();
  j["class_id"] = a.class_id;
  j["instance_id"] = a.instance_id;
  j["cx"] = round_sig9(a.box.cx);
  j["cy"] = round_sig9(a.box.cy);
  j["w"] = round_sig9(a.box.w);
  j["h"] = round_sig9(a.box.h);
  if (a.confidence) j["confidence"] = round_sig9(*a.confidence);
  return j;
}

/// frame id -> list of boxes, in the given frame order.
inline ordered_json annotations_to_json(std::span<const LabeledFrame> frames) {
  ordered_json doc = ordered_json::object();
  for (const LabeledFrame& f : frames) {
    ordered_json list = ordered_json::array();
    for (const Annotation2D& a : f.annotations) list.push_back(annotation_to_json(a));
    doc[std::to_string(f.frame_id)] = std::move(list);
  }
  return doc;
}

/// Reads the annotations / predictions format: frame id -> list of
/// {class_id, cx, cy, w, h, [instance_id], [confidence]}.
inline std::vector<LabeledFrame> annotations_from_json(const json& doc) {
  if (!doc.is_object())
    throw Error(ErrorCode::ParseError, "annotations must be an object keyed by frame id");
  std::vector<LabeledFrame> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    LabeledFrame lf;
    try {
      std::size_t used = 0;
      lf.frame_id = std::stoll(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "frame key '" + it.key() + "' is not an integer");
    }
    if (!it.value().is_array())
      throw Error(ErrorCode::ParseError, "frame " + it.key() + " must map to an array");
    InstanceId auto_id = 0;
    for (const json& e : it.value()) {
      Annotation2D a;
      a.class_id = static_cast<ClassId>(integer_at(field(e, "class_id"), "class_id"));
      a.instance_id = e.contains("instance_id") ? integer_at(e["instance_id"], "instance_id") : auto_id;
      ++auto_id;
      a.box.cx = number_at(field(e, "cx"), "cx");
      a.box.cy = number_at(field(e, "cy"), "cy");
      a.box.w = number_at(field(e, "w"), "w");
      a.box.h = number_at(field(e, "h"), "h");
      if (!(a.box.w > 0.0) || !(a.box.h > 0.0))
        throw Error(ErrorCode::ParseError, "box width and height must be > 0");
      if (e.contains("confidence")) {
        const double c = number_at(e["confidence"], "confidence");
        if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorCode::ParseError, "confidence must lie in [0, 1]");
        a.confidence = c;
      }
      lf.annotations.push_back(a);
    }
    out.push_back(std::move(lf));
  }
  std::sort(out.begin(), out.end(),
            [](const LabeledFrame& a, const LabeledFrame& b) { return a.frame_id < b.frame_id; });
  return out;
}

inline std::vector<LabeledFrame> load_annotations(const std::filesystem::path& path) {
  return annotations_from_json(read_json_file(path));
}

/// Labels all frames and writes the dataset under out_dir.
///
/// yolo: labels/<stem>.txt per frame plus classes.txt.
/// json: annotations.json.
/// With options.split, split.json lists the train/val frame ids and seed.
inline DatasetStats generate_dataset(const FrameSet& frames, const InstanceSet& instances,
                                     const LabelerConfig& cfg,
                                     const std::filesystem::path& out_dir,
                                     const DatasetOptions& options = {},
                                     const BoxReducer& reducer = {}) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<LabeledFrame> labeled(frames.size());
  if (options.format == DatasetFormat::Yolo) {
    const std::vector<std::string> stems = label_file_stems(frames);
    const fs::path labels_dir = out_dir / "labels";
    fs::create_directories(labels_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + labels_dir.string());
    parallel_for(frames.size(), options.jobs, [&](std::size_t i) {
      const Frame& f = frames.frames()[i];
      labeled[i] = label_frame(f, instances, cfg, reducer);
      write_text_file(labels_dir / (stems[i] + ".txt"), yolo_lines(labeled[i], f.camera));
    });
    write_text_file(out_dir / "classes.txt", class_list(instances));
  } else {
    labeled = label_all(frames, instances, cfg, options.jobs, reducer);
    write_text_file(out_dir / "annotations.json", annotations_to_json(labeled).dump(2) + "\n");
  }

  if (options.split) {
    const TrainValSplit split = split_train_val(frames, options.train_fraction, options.seed);
    ordered_json doc = ordered_json::object();
    doc["seed"] = split.seed;
    doc["train"] = split.train;
    doc["val"] = split.val;
    write_text_file(out_dir / "split.json", doc.dump(2) + "\n");
  }

  DatasetStats stats;
  stats.frames_written = labeled.size();
  for (const LabeledFrame& lf : labeled) {
    stats.annotations_written += lf.annotations.size();
    for (const Annotation2D& a : lf.annotations) ++stats.per_class[a.class_id];
  }
  stats.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

inline ordered_json stats_to_json(const DatasetStats& stats) {
  ordered_json j = ordered_json::object();
  j["frames_written"] = stats.frames_written;
  j["annotations_written"] = stats.annotations_written;
  ordered_json per_class = ordered_json::object();
  for (const auto& [cls, n] : stats.per_class) per_class[std::to_string(cls)] = n;
  j["per_class"] = std::move(per_class);
  j["elapsed_seconds"] = stats.elapsed_seconds;
  return j;
}

}  // namespace ars
