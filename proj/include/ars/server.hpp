#pragma once

// Annotation server: a mutable project (frames + instances + revision)
// behind a JSON-over-HTTP API for the refinement UI.
//
// Readers work on immutable snapshots. Mutations are serialized and use
// optimistic concurrency: the client names the revision it edited, and a
// stale revision is rejected with RevisionConflict.

// Eigen first: httplib pulls in <resolv.h>, whose _res macro clashes with
// Eigen parameter names.
#include "ars/geometry.hpp"

#include <httplib.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ars/coverage.hpp"
#include "ars/json_io.hpp"
#include "ars/labeler.hpp"
#include "ars/scene.hpp"
#include "ars/visual_hull.hpp"

namespace ars {

using Revision = std::uint64_t;

struct ProjectSnapshot {
  FrameSet frames;
  InstanceSet instances;
  Revision revision = 0;
};

struct InstanceOverlay {
  InstanceId instance_id = 0;
  ClassId class_id = 0;
  std::vector<PixelPoint> polygon;  ///< reproject_box() output
  BoxGeometry bbox;
};

struct FrameOverlay {
  FrameId frame_id = 0;
  Revision revision = 0;
  std::vector<InstanceOverlay> instances;
};

struct InstancePatch {
  std::optional<RigidTransform> world_T_obj;
  std::optional<Vec3> size;
  std::optional<ClassId> class_id;
};

struct HullProposal {
  std::uint64_t proposal_id = 0;
  VirtualBox box;
  Vec3 centroid = Vec3::Zero();
  std::size_t occupied_voxels = 0;
  /// Reprojection of the proposed box into each masked frame.
  std::vector<std::pair<FrameId, std::optional<InstanceOverlay>>> previews;
};

struct ServiceOptions {
  LabelerConfig labeler;
  CarveOptions carve;
  std::optional<std::filesystem::path> persist_instances_to;
};

class AnnotationService {
 public:
  AnnotationService(FrameSet frames, InstanceSet instances, ServiceOptions options = {})
      : options_(std::move(options)) {
    validate(options_.labeler);
    state_ = std::make_shared<const ProjectSnapshot>(
        ProjectSnapshot{std::move(frames), std::move(instances), 0});
  }

  [[nodiscard]] std::shared_ptr<const ProjectSnapshot> snapshot() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  [[nodiscard]] const ServiceOptions& options() const noexcept { return options_; }

  [[nodiscard]] FrameOverlay overlay(FrameId frame_id) const {
    const auto snap = snapshot();
    const Frame* frame = snap->frames.find(frame_id);
    if (!frame) throw Error(ErrorCode::NotFound, "frame " + std::to_string(frame_id));
    FrameOverlay out;
    out.frame_id = frame_id;
    out.revision = snap->revision;
    const LabeledFrame labeled = label_frame(*frame, snap->instances, options_.labeler);
    for (const Annotation2D& a : labeled.annotations) {
      const VirtualBox* box = snap->instances.find(a.instance_id);
      out.instances.push_back(
          {a.instance_id, a.class_id, reproject_box(*frame, *box, options_.labeler), a.box});
    }
    return out;
  }

  Revision update_instance(InstanceId id, const InstancePatch& patch, Revision base_revision) {
    if (patch.size) validate_size(*patch.size);
    return mutate(base_revision, [&](const ProjectSnapshot& s) {
      if (!s.instances.find(id)) throw Error(ErrorCode::NotFound, "instance " + std::to_string(id));
      std::vector<VirtualBox> boxes = s.instances.instances();
      for (VirtualBox& b : boxes) {
        if (b.id != id) continue;
        if (patch.world_T_obj) b.world_T_obj = *patch.world_T_obj;
        if (patch.size) b.size = *patch.size;
        if (patch.class_id) b.class_id = *patch.class_id;
      }
      return InstanceSet(std::move(boxes), s.instances.class_table());
    });
  }

  Revision replace_instances(InstanceSet instances, Revision base_revision) {
    return mutate(base_revision, [&](const ProjectSnapshot&) { return std::move(instances); });
  }

  /// Carves a hull from the masks and keeps the resulting box as a pending
  /// proposal; nothing is committed.
  HullProposal propose_from_masks(const std::vector<SilhouetteMask>& masks, const Aabb& volume,
                                  double resolution, ClassId class_id) {
    const auto snap = snapshot();
    const VoxelHull hull = carve(masks, snap->frames, volume, resolution, options_.carve);
    HullProposal proposal;
    proposal.box = hull_to_instance(hull, class_id);
    proposal.centroid = hull_centroid(hull);
    proposal.occupied_voxels = hull.occupied_count();
    for (const SilhouetteMask& m : masks) {
      const Frame& frame = *snap->frames.find(m.frame_id);
      std::optional<InstanceOverlay> preview;
      std::vector<PixelPoint> polygon = reproject_box(frame, proposal.box, options_.labeler);
      if (auto bbox = min_bbox(polygon, frame.camera, options_.labeler))
        preview = InstanceOverlay{-1, class_id, std::move(polygon), *bbox};
      proposal.previews.emplace_back(m.frame_id, std::move(preview));
    }
    std::lock_guard lock(write_mutex_);
    proposal.proposal_id = next_proposal_++;
    proposals_.emplace(proposal.proposal_id, proposal);
    return proposal;
  }

  struct CommitResult {
    Revision revision = 0;
    InstanceId instance_id = 0;
  };

  /// Adds a pending proposal as a new instance. class_name is used when the
  /// proposal's class is not yet in the class table.
  CommitResult commit_proposal(std::uint64_t proposal_id, Revision base_revision,
                               const std::string& class_name = {}) {
    CommitResult result;
    std::optional<HullProposal> proposal;
    {
      std::lock_guard lock(write_mutex_);
      auto it = proposals_.find(proposal_id);
      if (it == proposals_.end())
        throw Error(ErrorCode::NotFound, "proposal " + std::to_string(proposal_id));
      proposal = it->second;
    }
    result.revision = mutate(base_revision, [&](const ProjectSnapshot& s) {
      std::vector<VirtualBox> boxes = s.instances.instances();
      auto classes = s.instances.class_table();
      VirtualBox box = proposal->box;
      box.id = s.instances.next_id();
      result.instance_id = box.id;
      if (!classes.count(box.class_id))
        classes[box.class_id] = class_name.empty() ? "class_" + std::to_string(box.class_id) : class_name;
      boxes.push_back(std::move(box));
      return InstanceSet(std::move(boxes), std::move(classes));
    });
    std::lock_guard lock(write_mutex_);
    proposals_.erase(proposal_id);
    return result;
  }

  [[nodiscard]] std::pair<CoverageHistogram, Revision> coverage(InstanceId id, int theta_bins,
                                                                int phi_bins) const {
    const auto snap = snapshot();
    const VirtualBox* box = snap->instances.find(id);
    if (!box) throw Error(ErrorCode::NotFound, "instance " + std::to_string(id));
    return {coverage_histogram(snap->frames, *box, {theta_bins, phi_bins, 0}), snap->revision};
  }

  [[nodiscard]] DatasetStats export_dataset(const std::filesystem::path& out_dir,
                                            const LabelerConfig& cfg,
                                            const DatasetOptions& options) const {
    const auto snap = snapshot();
    return generate_dataset(snap->frames, snap->instances, cfg, out_dir, options);
  }

 private:
  template <typename Build>
  Revision mutate(Revision base_revision, Build&& build) {
    std::lock_guard lock(write_mutex_);
    const auto current = snapshot();
    if (base_revision != current->revision)
      throw Error(ErrorCode::RevisionConflict,
                  "edit based on revision " + std::to_string(base_revision) + ", current is " +
                      std::to_string(current->revision));
    auto next = std::make_shared<const ProjectSnapshot>(
        ProjectSnapshot{current->frames, build(*current), current->revision + 1});
    if (options_.persist_instances_to) save_instances(next->instances, *options_.persist_instances_to);
    {
      std::lock_guard state_lock(state_mutex_);
      state_ = next;
    }
    return next->revision;
  }

  ServiceOptions options_;
  mutable std::mutex state_mutex_;
  std::mutex write_mutex_;
  std::shared_ptr<const ProjectSnapshot> state_;
  std::map<std::uint64_t, HullProposal> proposals_;
  std::uint64_t next_proposal_ = 1;
};

// ---------------------------------------------------------------------------
// JSON encoding of service results

inline ordered_json pixel_points_to_json(const std::vector<PixelPoint>& pts) {
  ordered_json arr = ordered_json::array();
  for (const PixelPoint& p : pts) arr.push_back({p.u, p.v});
  return arr;
}

inline ordered_json box_geometry_to_json(const BoxGeometry& b) {
  return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

inline ordered_json overlay_to_json(const FrameOverlay& overlay) {
  ordered_json j = ordered_json::object();
  j["revision"] = overlay.revision;
  j["frame_id"] = overlay.frame_id;
  ordered_json list = ordered_json::array();
  for (const InstanceOverlay& o : overlay.instances) {
    ordered_json e = ordered_json::object();
    e["instance_id"] = o.instance_id;
    e["class_id"] = o.class_id;
    e["polygon"] = pixel_points_to_json(o.polygon);
    e["bbox"] = box_geometry_to_json(o.bbox);
    list.push_back(std::move(e));
  }
  j["instances"] = std::move(list);
  return j;
}

inline ordered_json box_to_json(const VirtualBox& b) {
  ordered_json e = ordered_json::object();
  e["id"] = b.id;
  e["class_id"] = b.class_id;
  e["world_T_obj"] = pose_to_json<ordered_json>(b.world_T_obj);
  e["size"] = vec3_to_json<ordered_json>(b.size);
  return e;
}

inline ordered_json proposal_to_json(const HullProposal& p) {
  ordered_json j = ordered_json::object();
  j["proposal_id"] = p.proposal_id;
  ordered_json box = box_to_json(p.box);
  box.erase("id");
  j["box"] = std::move(box);
  j["centroid"] = vec3_to_json<ordered_json>(p.centroid);
  j["occupied_voxels"] = p.occupied_voxels;
  ordered_json previews = ordered_json::array();
  for (const auto& [frame_id, o] : p.previews) {
    ordered_json e = ordered_json::object();
    e["frame_id"] = frame_id;
    if (o) {
      e["polygon"] = pixel_points_to_json(o->polygon);
      e["bbox"] = box_geometry_to_json(o->bbox);
    } else {
      e["polygon"] = ordered_json::array();
      e["bbox"] = nullptr;
    }
    previews.push_back(std::move(e));
  }
  j["previews"] = std::move(previews);
  return j;
}

// ---------------------------------------------------------------------------
// HTTP binding

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::RevisionConflict: return 409;
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownFormat: return 400;
    case ErrorCode::IoError: return 500;
    default: return 422;
  }
}

/// Mounts the API on an httplib server:
///   GET  /api/frames, /api/frames/{id}/image, /api/frames/{id}/overlay
///   GET  /api/instances, PUT /api/instances, PATCH /api/instances/{id}
///   POST /api/hull, POST /api/instances/commit
///   GET  /api/coverage/{instance_id}?bins=36x18[&min_count=N]
///   POST /api/export
class AnnotationHttpApi {
 public:
  explicit AnnotationHttpApi(AnnotationService& service) : service_(service) {}

  void mount(httplib::Server& server) {
    server.Get("/api/frames", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        const auto snap = service_.snapshot();
        ordered_json j = frames_to_json(snap->frames);
        j["revision"] = snap->revision;
        return j;
      });
    });

    server.Get(R"(/api/frames/(-?\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto snap = service_.snapshot();
        const Frame* f = snap->frames.find(parse_id(req.matches[1]));
        if (!f || f->image_path.empty()) throw Error(ErrorCode::NotFound, "no image for frame");
        const std::filesystem::path path = snap->frames.base_dir() / f->image_path;
        if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "image file missing");
        res.set_content(read_text_file(path), content_type_for(path));
      } catch (const Error& e) {
        send_error(res, e);
      }
    });

    server.Get(R"(/api/frames/(-?\d+)/overlay)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return overlay_to_json(service_.overlay(parse_id(req.matches[1]))); });
    });

    server.Get("/api/instances", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        const auto snap = service_.snapshot();
        ordered_json j = instances_to_json(snap->instances);
        j["revision"] = snap->revision;
        return j;
      });
    });

    server.Put("/api/instances", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_json(req.body);
        const Revision base = revision_field(body);
        const Revision rev = service_.replace_instances(instances_from_json(body), base);
        return ordered_json{{"revision", rev}};
      });
    });

    server.Patch(R"(/api/instances/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_json(req.body);
        InstancePatch patch;
        if (body.contains("world_T_obj")) patch.world_T_obj = pose_from_json(body["world_T_obj"]);
        if (body.contains("size")) patch.size = vec3_from_json(body["size"], "size");
        if (body.contains("class_id"))
          patch.class_id = static_cast<ClassId>(integer_at(body["class_id"], "class_id"));
        const Revision rev =
            service_.update_instance(parse_id(req.matches[1]), patch, revision_field(body));
        return ordered_json{{"revision", rev}};
      });
    });

    server.Post("/api/hull", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_json(req.body);
        const json& volume = field(body, "volume");
        const Aabb box{vec3_from_json(field(volume, "min"), "volume.min"),
                       vec3_from_json(field(volume, "max"), "volume.max")};
        const double resolution =
            body.contains("resolution") ? number_at(body["resolution"], "resolution") : 0.005;
        const ClassId cls = body.contains("class_id")
                                ? static_cast<ClassId>(integer_at(body["class_id"], "class_id"))
                                : 0;
        ordered_json j = proposal_to_json(
            service_.propose_from_masks(masks_from_json(body), box, resolution, cls));
        j["revision"] = service_.snapshot()->revision;
        return j;
      });
    });

    server.Post("/api/instances/commit", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_json(req.body);
        const auto id = static_cast<std::uint64_t>(integer_at(field(body, "proposal_id"), "proposal_id"));
        std::string name;
        if (body.contains("class_name") && body["class_name"].is_string())
          name = body["class_name"].get<std::string>();
        const auto result = service_.commit_proposal(id, revision_field(body), name);
        return ordered_json{{"revision", result.revision}, {"instance_id", result.instance_id}};
      });
    });

    server.Get(R"(/api/coverage/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto [tb, pb] =
            parse_bins(req.has_param("bins") ? req.get_param_value("bins") : std::string("36x18"));
        const auto [hist, rev] = service_.coverage(parse_id(req.matches[1]), tb, pb);
        ordered_json j = histogram_to_json(hist);
        j["revision"] = rev;
        const long long min_count =
            req.has_param("min_count") ? parse_id(req.get_param_value("min_count")) : 1;
        j["gaps"] = gaps_to_json(coverage_gaps(hist, min_count));
        return j;
      });
    });

    server.Post("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_json(req.body);
        LabelerConfig cfg = service_.options().labeler;
        if (body.contains("near_plane")) cfg.near_plane = number_at(body["near_plane"], "near_plane");
        if (body.contains("min_box_area")) cfg.min_box_area = number_at(body["min_box_area"], "min_box_area");
        if (body.contains("min_visible_fraction"))
          cfg.min_visible_fraction = number_at(body["min_visible_fraction"], "min_visible_fraction");
        DatasetOptions opts;
        const json& out_dir = field(body, "out_dir");
        if (!out_dir.is_string()) throw Error(ErrorCode::ParseError, "out_dir must be a string");
        if (body.contains("format")) {
          if (!body["format"].is_string()) throw Error(ErrorCode::ParseError, "format must be a string");
          opts.format = parse_dataset_format(body["format"].get<std::string>());
        }
        if (body.contains("split")) opts.split = body["split"].is_boolean() && body["split"].get<bool>();
        if (body.contains("seed")) opts.seed = static_cast<std::uint64_t>(integer_at(body["seed"], "seed"));
        const auto snap_rev = service_.snapshot()->revision;
        ordered_json j = stats_to_json(
            service_.export_dataset(out_dir.get<std::string>(), cfg, opts));
        j["revision"] = snap_rev;
        return j;
      });
    });
  }

 private:
  template <typename Fn>
  void handle(httplib::Response& res, Fn&& fn) {
    try {
      res.set_content(fn().dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, Error(ErrorCode::ParseError, e.what()));
    }
  }

  void send_error(httplib::Response& res, const Error& e) {
    res.status = http_status_for(e.code());
    ordered_json j = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (auto snap = service_.snapshot()) j["revision"] = snap->revision;
    res.set_content(j.dump(), "application/json");
  }

  static long long parse_id(const std::string& s) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "'" + s + "' is not an integer");
    }
  }

  static Revision revision_field(const json& body) {
    const long long r = integer_at(field(body, "base_revision"), "base_revision");
    if (r < 0) throw Error(ErrorCode::InvalidArgument, "base_revision must be >= 0");
    return static_cast<Revision>(r);
  }

  static std::string content_type_for(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".bmp") return "image/bmp";
    return "application/octet-stream";
  }

  AnnotationService& service_;
};

}  // namespace ars
