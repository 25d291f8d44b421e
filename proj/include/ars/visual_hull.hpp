#pragma once

// Visual hull by voxel carving: a voxel survives iff its center projects
// strictly inside every silhouette polygon and lies in front of every
// camera. The hull then yields a coarse, identity-oriented VirtualBox.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <vector>

#include "ars/geometry.hpp"
#include "ars/json_io.hpp"
#include "ars/parallel.hpp"
#include "ars/scene.hpp"

namespace ars {

struct SilhouetteMask {
  FrameId frame_id = 0;
  std::vector<PixelPoint> polygon;
};

namespace detail {

inline double cross2(const PixelPoint& o, const PixelPoint& a, const PixelPoint& b) {
  return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
}

inline bool on_segment(const PixelPoint& a, const PixelPoint& b, const PixelPoint& p) {
  return std::min(a.u, b.u) <= p.u && p.u <= std::max(a.u, b.u) && std::min(a.v, b.v) <= p.v &&
         p.v <= std::max(a.v, b.v);
}

inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

/// Closed-segment intersection, collinear overlap included.
inline bool segments_intersect(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c,
                               const PixelPoint& d) {
  const int d1 = sign(cross2(c, d, a));
  const int d2 = sign(cross2(c, d, b));
  const int d3 = sign(cross2(a, b, c));
  const int d4 = sign(cross2(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  return (d1 == 0 && on_segment(c, d, a)) || (d2 == 0 && on_segment(c, d, b)) ||
         (d3 == 0 && on_segment(a, b, c)) || (d4 == 0 && on_segment(a, b, d));
}

}  // namespace detail

inline double polygon_area(std::span<const PixelPoint> poly) {
  double twice = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const PixelPoint& a = poly[i];
    const PixelPoint& b = poly[(i + 1) % n];
    twice += a.u * b.v - b.u * a.v;
  }
  return 0.5 * std::abs(twice);
}

/// True iff the closed polygon has no touching non-adjacent edges and
/// adjacent edges meet only at their shared vertex.
inline bool polygon_is_simple(std::span<const PixelPoint> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const PixelPoint& a = poly[i];
    const PixelPoint& b = poly[(i + 1) % n];
    if (a == b) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const PixelPoint& c = poly[j];
      const PixelPoint& d = poly[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (!adjacent) {
        if (detail::segments_intersect(a, b, c, d)) return false;
        continue;
      }
      // Shared vertex is b (j == i+1) or a (wrap-around); reject folding back.
      const PixelPoint& shared = (j == i + 1) ? b : a;
      const PixelPoint& p = (j == i + 1) ? a : b;
      const PixelPoint& q = (j == i + 1) ? d : c;
      if (detail::cross2(shared, p, q) == 0.0 &&
          (p.u - shared.u) * (q.u - shared.u) + (p.v - shared.v) * (q.v - shared.v) > 0.0)
        return false;
    }
  }
  return true;
}

inline void validate(const SilhouetteMask& mask) {
  for (const PixelPoint& p : mask.polygon)
    if (!std::isfinite(p.u) || !std::isfinite(p.v))
      throw Error(ErrorCode::InvalidPolygon, "mask polygon has non-finite vertices");
  if (mask.polygon.size() < 3 || !(polygon_area(mask.polygon) > 0.0) ||
      !polygon_is_simple(mask.polygon))
    throw Error(ErrorCode::InvalidPolygon,
                "mask for frame " + std::to_string(mask.frame_id) +
                    " must be a simple polygon with positive area");
}

/// Even-odd rule; points on the boundary count as outside.
inline bool point_strictly_inside(std::span<const PixelPoint> poly, const PixelPoint& p) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const PixelPoint& a = poly[j];
    const PixelPoint& b = poly[i];
    if (detail::cross2(a, b, p) == 0.0 && detail::on_segment(a, b, p)) return false;
    if ((b.v > p.v) != (a.v > p.v)) {
      const double u_cross = b.u + (p.v - b.v) * (a.u - b.u) / (a.v - b.v);
      if (p.u < u_cross) inside = !inside;
    }
  }
  return inside;
}

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

/// Dense occupancy grid; voxel (i, j, k) spans origin + [i, i+1) * resolution
/// along x (and likewise y, z). Storage is x-fastest.
struct VoxelHull {
  Vec3 origin = Vec3::Zero();
  double resolution = 1.0;
  std::array<int, 3> dims{1, 1, 1};
  std::vector<std::uint8_t> occupancy;

  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  [[nodiscard]] bool occupied(int i, int j, int k) const { return occupancy[index(i, j, k)] != 0; }
  [[nodiscard]] Vec3 center(int i, int j, int k) const {
    return origin + resolution * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  [[nodiscard]] std::size_t occupied_count() const {
    std::size_t n = 0;
    for (std::uint8_t v : occupancy) n += v != 0;
    return n;
  }
  [[nodiscard]] bool empty() const { return occupied_count() == 0; }
};

struct CarveOptions {
  double near_plane = 0.01;
  unsigned jobs = 0;
};

/// Carves the grid without the view-count and emptiness checks of carve().
inline VoxelHull carve_voxels(std::span<const SilhouetteMask> masks, const FrameSet& frames,
                              const Aabb& volume, double resolution,
                              const CarveOptions& options = {}) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw Error(ErrorCode::InvalidArgument, "resolution must be > 0");
  const Vec3 extent = volume.max - volume.min;
  if (!extent.allFinite() || !(extent.minCoeff() > 0.0))
    throw Error(ErrorCode::InvalidArgument, "carving volume must have positive extent");

  struct View {
    RigidTransform cam_T_world;
    CameraModel camera;
    const std::vector<PixelPoint>* polygon;
  };
  std::vector<View> views;
  views.reserve(masks.size());
  for (const SilhouetteMask& m : masks) {
    validate(m);
    const Frame* f = frames.find(m.frame_id);
    if (!f) throw Error(ErrorCode::NotFound, "mask references unknown frame " + std::to_string(m.frame_id));
    views.push_back({invert(f->world_T_cam), f->camera, &m.polygon});
  }

  VoxelHull hull;
  hull.origin = volume.min;
  hull.resolution = resolution;
  for (int a = 0; a < 3; ++a)
    hull.dims[a] = std::max(1, static_cast<int>(std::ceil(extent(a) / resolution - 1e-9)));
  hull.occupancy.assign(static_cast<std::size_t>(hull.dims[0]) * hull.dims[1] * hull.dims[2], 0);

  parallel_for(static_cast<std::size_t>(hull.dims[2]), options.jobs, [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < hull.dims[1]; ++j) {
      for (int i = 0; i < hull.dims[0]; ++i) {
        const Vec3 c = hull.center(i, j, k);
        bool keep = true;
        for (const View& view : views) {
          const Vec3 p = view.cam_T_world.apply(c);
          if (!(p.z() > options.near_plane) ||
              !point_strictly_inside(*view.polygon, project_point(view.camera, p))) {
            keep = false;
            break;
          }
        }
        hull.occupancy[hull.index(i, j, k)] = keep ? 1 : 0;
      }
    }
  }, 1);
  return hull;
}

/// Requires masks from at least two distinct frames and a non-empty result.
inline VoxelHull carve(std::span<const SilhouetteMask> masks, const FrameSet& frames,
                       const Aabb& volume, double resolution, const CarveOptions& options = {}) {
  std::set<FrameId> distinct;
  for (const SilhouetteMask& m : masks) distinct.insert(m.frame_id);
  if (distinct.size() < 2)
    throw Error(ErrorCode::TooFewViews, "visual hull needs masks on at least two distinct frames");
  VoxelHull hull = carve_voxels(masks, frames, volume, resolution, options);
  if (hull.empty())
    throw Error(ErrorCode::EmptyHull, "silhouette frustums do not intersect inside the volume");
  return hull;
}

/// Mean of occupied voxel centers.
inline Vec3 hull_centroid(const VoxelHull& hull) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (int k = 0; k < hull.dims[2]; ++k)
    for (int j = 0; j < hull.dims[1]; ++j)
      for (int i = 0; i < hull.dims[0]; ++i)
        if (hull.occupied(i, j, k)) {
          sum += hull.center(i, j, k);
          ++n;
        }
  if (n == 0) throw Error(ErrorCode::EmptyHull, "hull has no occupied voxels");
  return sum / static_cast<double>(n);
}

/// Axis-aligned extent of the occupied voxel cubes (centers padded by half a
/// voxel on each side).
inline Aabb hull_extent(const VoxelHull& hull) {
  std::array<int, 3> lo{hull.dims[0], hull.dims[1], hull.dims[2]};
  std::array<int, 3> hi{-1, -1, -1};
  for (int k = 0; k < hull.dims[2]; ++k)
    for (int j = 0; j < hull.dims[1]; ++j)
      for (int i = 0; i < hull.dims[0]; ++i)
        if (hull.occupied(i, j, k)) {
          const std::array<int, 3> ijk{i, j, k};
          for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], ijk[a]);
            hi[a] = std::max(hi[a], ijk[a]);
          }
        }
  if (hi[0] < 0) throw Error(ErrorCode::EmptyHull, "hull has no occupied voxels");
  Aabb box;
  for (int a = 0; a < 3; ++a) {
    box.min(a) = hull.origin(a) + hull.resolution * lo[a];
    box.max(a) = hull.origin(a) + hull.resolution * (hi[a] + 1);
  }
  return box;
}

/// Identity-rotation box covering the hull extent. With the corner-origin
/// box frame ([0,sx] x [-sy,0] x [0,sz]) the origin is (x_min, y_max, z_min).
inline VirtualBox hull_to_instance(const VoxelHull& hull, ClassId class_id) {
  const Aabb ext = hull_extent(hull);
  VirtualBox box;
  box.world_T_obj =
      RigidTransform::translate(ext.min.x(), ext.max.y(), ext.min.z());
  box.size = ext.max - ext.min;
  box.class_id = class_id;
  return box;
}

// ---------------------------------------------------------------------------
// Files

inline std::vector<SilhouetteMask> masks_from_json(const json& doc) {
  const json& list = field(doc, "masks");
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "'masks' must be an array");
  std::vector<SilhouetteMask> masks;
  for (const json& m : list) {
    SilhouetteMask mask;
    mask.frame_id = integer_at(field(m, "frame_id"), "frame_id");
    const json& poly = field(m, "polygon");
    if (!poly.is_array()) throw Error(ErrorCode::ParseError, "'polygon' must be an array");
    for (const json& p : poly) {
      if (!p.is_array() || p.size() != 2)
        throw Error(ErrorCode::ParseError, "polygon vertices must be [u, v] pairs");
      mask.polygon.push_back({number_at(p[0], "u"), number_at(p[1], "v")});
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

inline std::vector<SilhouetteMask> load_masks(const std::filesystem::path& path) {
  return masks_from_json(read_json_file(path));
}

inline ordered_json masks_to_json(std::span<const SilhouetteMask> masks) {
  ordered_json list = ordered_json::array();
  for (const SilhouetteMask& m : masks) {
    ordered_json poly = ordered_json::array();
    for (const PixelPoint& p : m.polygon) poly.push_back({round_sig9(p.u), round_sig9(p.v)});
    list.push_back({{"frame_id", m.frame_id}, {"polygon", std::move(poly)}});
  }
  return {{"masks", std::move(list)}};
}

/// Writes <prefix>.bin (one byte per voxel, x fastest) and <prefix>.json
/// (origin, resolution, dims).
inline void write_hull(const VoxelHull& hull, const std::filesystem::path& prefix) {
  std::filesystem::path bin = prefix;
  bin += ".bin";
  std::filesystem::path meta = prefix;
  meta += ".json";
  write_text_file(bin, std::string_view(reinterpret_cast<const char*>(hull.occupancy.data()),
                                        hull.occupancy.size()));
  ordered_json j = ordered_json::object();
  j["origin"] = vec3_to_json<ordered_json>(hull.origin);
  j["resolution"] = round_sig9(hull.resolution);
  j["dims"] = hull.dims;
  j["layout"] = "uint8, x fastest, then y, then z";
  j["data"] = bin.filename().string();
  write_text_file(meta, j.dump(2) + "\n");
}

inline VoxelHull read_hull(const std::filesystem::path& prefix) {
  std::filesystem::path bin = prefix;
  bin += ".bin";
  std::filesystem::path meta = prefix;
  meta += ".json";
  const json j = read_json_file(meta);
  VoxelHull hull;
  hull.origin = vec3_from_json(field(j, "origin"), "origin");
  hull.resolution = number_at(field(j, "resolution"), "resolution");
  const json& dims = field(j, "dims");
  if (!dims.is_array() || dims.size() != 3) throw Error(ErrorCode::ParseError, "dims must have 3 entries");
  for (int a = 0; a < 3; ++a) hull.dims[a] = static_cast<int>(integer_at(dims[a], "dims"));
  const std::string data = read_text_file(bin);
  const std::size_t expected = static_cast<std::size_t>(hull.dims[0]) * hull.dims[1] * hull.dims[2];
  if (data.size() != expected) throw Error(ErrorCode::ParseError, "hull data size does not match dims");
  hull.occupancy.assign(data.begin(), data.end());
  return hull;
}

}  // namespace ars
