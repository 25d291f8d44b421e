#pragma once

// Augmented-reality pen: tip pose from several simultaneously visible
// markers, and virtual box construction from four tip points.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ars/geometry.hpp"
#include "ars/json_io.hpp"
#include "ars/scene.hpp"

namespace ars {

struct MarkerObservation {
  int marker_id = 0;
  RigidTransform cam_T_marker;  ///< from the external marker detector
  RigidTransform tip_T_marker;  ///< fixed by the pen layout
};

struct TipEstimate {
  RigidTransform cam_T_tip;
  double position_spread = 0.0;  ///< max pairwise distance of per-marker tip positions, meters
  int marker_count = 0;
};

struct ArpConfig {
  double max_position_spread = 0.02;  ///< meters
  double min_edge_length = 1e-3;      ///< meters
  double min_edge_angle_deg = 1.0;
};

/// Tip pose seen through one marker: cam_T_tip = cam_T_marker * (tip_T_marker)^-1.
inline RigidTransform tip_from_marker(const MarkerObservation& obs) {
  return compose(obs.cam_T_marker, invert(obs.tip_T_marker));
}

/// Averages the per-marker tip poses. Positions are averaged directly;
/// rotations by a hemisphere-aligned quaternion mean (aligned to the first
/// observation), which is adequate for the small spreads of a rigid pen.
inline TipEstimate estimate_tip(std::span<const MarkerObservation> observations,
                                const ArpConfig& cfg = {}) {
  if (observations.empty()) throw Error(ErrorCode::NoMarkersVisible, "no marker observations");

  std::vector<RigidTransform> tips;
  tips.reserve(observations.size());
  for (const MarkerObservation& obs : observations) tips.push_back(tip_from_marker(obs));

  Vec3 position_sum = Vec3::Zero();
  Eigen::Vector4d quat_sum = Eigen::Vector4d::Zero();
  const Eigen::Vector4d reference = tips.front().quaternion().coeffs();
  for (const RigidTransform& tip : tips) {
    position_sum += tip.translation();
    Eigen::Vector4d q = tip.quaternion().coeffs();
    if (q.dot(reference) < 0.0) q = -q;
    quat_sum += q;
  }

  double spread = 0.0;
  for (std::size_t i = 0; i < tips.size(); ++i)
    for (std::size_t j = i + 1; j < tips.size(); ++j)
      spread = std::max(spread, (tips[i].translation() - tips[j].translation()).norm());
  if (spread > cfg.max_position_spread)
    throw Error(ErrorCode::InconsistentObservations,
                "marker tip estimates disagree by " + std::to_string(spread) + " m");

  const double n = static_cast<double>(tips.size());
  const Eigen::Quaterniond mean_q(quat_sum(3), quat_sum(0), quat_sum(1), quat_sum(2));
  TipEstimate est;
  est.cam_T_tip = tips.size() == 1 ? tips.front()
                                   : RigidTransform::from_quaternion(mean_q, position_sum / n);
  est.position_spread = spread;
  est.marker_count = static_cast<int>(tips.size());
  return est;
}

/// Builds a box from four tip points: p0 a top corner, p1 straight below it,
/// p2 along a bottom edge from p1, p3 along the other bottom edge from p2.
///
/// The vertical stroke p0->p1 is kept exactly as the local z axis; the
/// p1->p2 stroke is Gram-Schmidt corrected against it, so imperfect
/// hand-drawn points still give a proper rotation. The pose is expressed in
/// whatever frame the points are given in.
inline VirtualBox build_virtual_box(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3,
                                    ClassId class_id, const ArpConfig& cfg = {}) {
  const Vec3 down = p1 - p0;
  const Vec3 along = p2 - p1;
  const Vec3 across = p3 - p2;
  for (const Vec3* e : {&down, &along, &across}) {
    if (!e->allFinite() || !(e->norm() > cfg.min_edge_length))
      throw Error(ErrorCode::DegenerateEdge, "box edge shorter than the minimum length");
  }
  const double angle = std::atan2(down.cross(along).norm(), std::abs(down.dot(along)));
  if (!(angle > cfg.min_edge_angle_deg * std::numbers::pi / 180.0))
    throw Error(ErrorCode::CollinearPoints, "p0->p1 and p1->p2 are nearly parallel");

  const Vec3 vz = down.normalized();
  const Vec3 vy = vz.cross(along).normalized();
  const Vec3 vx = vy.cross(vz);
  Mat3 r;
  r.col(0) = vx;
  r.col(1) = vy;
  r.col(2) = vz;

  VirtualBox box;
  box.world_T_obj = RigidTransform::from_rotation_translation(r, p0);
  box.size = Vec3(along.norm(), across.norm(), down.norm());
  box.class_id = class_id;
  return box;
}

/// Re-expresses a box built in the camera frame in the world frame.
inline VirtualBox box_to_world(VirtualBox box_in_cam, const RigidTransform& world_T_cam) {
  box_in_cam.world_T_obj = compose(world_T_cam, box_in_cam.world_T_obj);
  return box_in_cam;
}

// ---------------------------------------------------------------------------
// Pen layout and detector stream

class ArpLayout {
 public:
  ArpLayout() = default;
  explicit ArpLayout(std::map<int, RigidTransform> tip_T_marker)
      : tip_T_marker_(std::move(tip_T_marker)) {}

  [[nodiscard]] const std::map<int, RigidTransform>& markers() const noexcept {
    return tip_T_marker_;
  }

  [[nodiscard]] const RigidTransform* find(int marker_id) const {
    auto it = tip_T_marker_.find(marker_id);
    return it == tip_T_marker_.end() ? nullptr : &it->second;
  }

 private:
  std::map<int, RigidTransform> tip_T_marker_;
};

inline ArpLayout arp_layout_from_json(const json& doc) {
  const json& list = field(doc, "markers");
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "'markers' must be an array");
  std::map<int, RigidTransform> markers;
  for (const json& m : list) {
    const int id = static_cast<int>(integer_at(field(m, "marker_id"), "marker_id"));
    if (!markers.emplace(id, pose_from_json(field(m, "tip_T_marker"))).second)
      throw Error(ErrorCode::DuplicateId, "marker id " + std::to_string(id));
  }
  return ArpLayout(std::move(markers));
}

inline ArpLayout load_arp_layout(const std::filesystem::path& path) {
  return arp_layout_from_json(read_json_file(path));
}

struct MarkerDetection {
  int marker_id = 0;
  RigidTransform cam_T_marker;
};

struct DetectionRecord {
  FrameId frame_id = 0;
  std::vector<MarkerDetection> detections;
};

/// Reads the detector's JSON-lines stream; blank lines are skipped.
inline std::vector<DetectionRecord> read_detection_stream(std::istream& in) {
  std::vector<DetectionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json doc = parse_json(line);
      DetectionRecord rec;
      rec.frame_id = integer_at(field(doc, "frame_id"), "frame_id");
      const json& dets = field(doc, "detections");
      if (!dets.is_array()) throw Error(ErrorCode::ParseError, "'detections' must be an array");
      for (const json& d : dets) {
        rec.detections.push_back(
            {static_cast<int>(integer_at(field(d, "marker_id"), "marker_id")),
             pose_from_json(field(d, "cam_T_marker"))});
      }
      records.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

/// Pairs detections with the layout; markers not on the pen are ignored.
inline std::vector<MarkerObservation> observations_for(const ArpLayout& layout,
                                                       const DetectionRecord& record) {
  std::vector<MarkerObservation> out;
  for (const MarkerDetection& d : record.detections) {
    if (const RigidTransform* tip_T_marker = layout.find(d.marker_id))
      out.push_back({d.marker_id, d.cam_T_marker, *tip_T_marker});
  }
  return out;
}

}  // namespace ars
