#pragma once

// Command-line front end. run() is the whole program; tools/ars.cpp only
// forwards argv to it.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ars/arp.hpp"
#include "ars/coverage.hpp"
#include "ars/labeler.hpp"
#include "ars/metrics.hpp"
#include "ars/scene.hpp"
#include "ars/server.hpp"
#include "ars/visual_hull.hpp"

namespace ars {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level from the ARS_LOG environment variable; defaults to warn.
inline LogLevel log_level_from_env() {
  const char* v = std::getenv("ARS_LOG");
  if (!v) return LogLevel::Warn;
  const std::string s(v);
  if (s == "error") return LogLevel::Error;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

class Logger {
 public:
  Logger(std::ostream& sink, LogLevel level) : sink_(sink), level_(level) {}

  void log(LogLevel level, const std::string& msg) const {
    static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
    if (level <= level_) sink_ << "[" << kNames[static_cast<int>(level)] << "] " << msg << "\n";
  }
  void error(const std::string& m) const { log(LogLevel::Error, m); }
  void info(const std::string& m) const { log(LogLevel::Info, m); }
  void debug(const std::string& m) const { log(LogLevel::Debug, m); }

 private:
  std::ostream& sink_;
  LogLevel level_;
};

namespace cli_detail {

inline std::vector<double> parse_number_list(const std::string& text, std::size_t expected,
                                             const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (values.size() != expected)
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
  return values;
}

inline void emit(std::ostream& out, const std::string& text, const std::string& path) {
  if (path.empty()) {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

}  // namespace cli_detail

/// Runs the CLI on `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  const Logger logger(err, log_level_from_env());

  CLI::App app{"Semi-automatic 2D detection dataset labeling from pose-tracked frames and 3D virtual boxes",
               "ars"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // label -------------------------------------------------------------------
  struct {
    std::string frames, instances, out, format = "yolo";
    LabelerConfig cfg;
    bool split = false;
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    unsigned jobs = 0;
  } label;
  auto* label_cmd = app.add_subcommand("label", "Reproject every instance into every frame and write a dataset");
  label_cmd->add_option("--frames", label.frames, "Frames manifest (JSON)")->required();
  label_cmd->add_option("--instances", label.instances, "Instances file (JSON)")->required();
  label_cmd->add_option("--out", label.out, "Output directory")->required();
  label_cmd->add_option("--format", label.format, "Dataset format")->check(CLI::IsMember({"yolo", "json"}));
  label_cmd->add_option("--near", label.cfg.near_plane, "Near clipping plane (m)")->check(CLI::PositiveNumber);
  label_cmd->add_option("--min-area", label.cfg.min_box_area, "Minimum clipped box area (px^2)")
      ->check(CLI::NonNegativeNumber);
  label_cmd->add_option("--min-visible", label.cfg.min_visible_fraction,
                        "Minimum fraction of the projected box inside the image")
      ->check(CLI::Range(0.0, 1.0));
  label_cmd->add_flag("--split", label.split, "Write a seeded train/val split (split.json)");
  label_cmd->add_option("--train-fraction", label.train_fraction, "Train share of the split")
      ->check(CLI::Range(0.0, 1.0));
  label_cmd->add_option("--seed", label.seed, "Seed for the train/val shuffle");
  label_cmd->add_option("--jobs", label.jobs, "Worker threads (0 = all processors)");

  // carve -------------------------------------------------------------------
  struct {
    std::string frames, masks, volume, instances, out, hull_out, class_name;
    double resolution = 0.005;
    ClassId class_id = 0;
    CarveOptions opts;
  } carve_args;
  auto* carve_cmd = app.add_subcommand("carve", "Estimate a box from silhouette masks via the visual hull");
  carve_cmd->add_option("--frames", carve_args.frames, "Frames manifest (JSON)")->required();
  carve_cmd->add_option("--masks", carve_args.masks, "Masks file (JSON)")->required();
  carve_cmd->add_option("--volume", carve_args.volume, "Working volume xmin,ymin,zmin,xmax,ymax,zmax (m)")
      ->required();
  carve_cmd->add_option("--resolution", carve_args.resolution, "Voxel edge (m)")->check(CLI::PositiveNumber);
  carve_cmd->add_option("--class", carve_args.class_id, "Class id of the new instance")
      ->check(CLI::NonNegativeNumber);
  carve_cmd->add_option("--class-name", carve_args.class_name, "Class name if the class is new");
  carve_cmd->add_option("--instances", carve_args.instances, "Instances file to append the new box to");
  carve_cmd->add_option("--out", carve_args.out, "Where to write the updated instances (default: --instances)");
  carve_cmd->add_option("--hull-out", carve_args.hull_out, "Write the occupancy grid as <prefix>.bin/.json");
  carve_cmd->add_option("--near", carve_args.opts.near_plane, "Near plane (m)")->check(CLI::PositiveNumber);
  carve_cmd->add_option("--jobs", carve_args.opts.jobs, "Worker threads (0 = all processors)");

  // coverage ----------------------------------------------------------------
  struct {
    std::string frames, instances, bins = "36x18", format = "json";
    InstanceId object = 0;
    long long min_count = 0;
    bool visible_only = false;
    unsigned jobs = 0;
    LabelerConfig cfg;
  } cov;
  auto* cov_cmd = app.add_subcommand("coverage", "Viewpoint coverage histogram of one instance");
  cov_cmd->add_option("--frames", cov.frames, "Frames manifest (JSON)")->required();
  cov_cmd->add_option("--instances", cov.instances, "Instances file (JSON)")->required();
  cov_cmd->add_option("--object", cov.object, "Instance id")->required();
  cov_cmd->add_option("--bins", cov.bins, "Bins as <theta>x<phi>");
  cov_cmd->add_option("--format", cov.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  cov_cmd->add_option("--min-count", cov.min_count, "Also report bins with fewer counts (json only; 0 = off)");
  cov_cmd->add_flag("--visible-only", cov.visible_only,
                    "Count only frames where the labeler emits a box for the instance");
  cov_cmd->add_option("--jobs", cov.jobs, "Worker threads (0 = all processors)");

  // eval --------------------------------------------------------------------
  struct {
    std::string preds, gt, interp = "all", report;
    double iou_th = 0.5;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "Detection metrics (precision, recall, mAP, avgIOU)");
  eval_cmd->add_option("--preds", ev.preds, "Predictions (JSON: frame id -> boxes with confidence)")->required();
  eval_cmd->add_option("--gt", ev.gt, "Ground truth (JSON: frame id -> boxes)")->required();
  eval_cmd->add_option("--iou-th", ev.iou_th, "IOU threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--interp", ev.interp, "AP interpolation")->check(CLI::IsMember({"all", "11"}));
  eval_cmd->add_option("--report", ev.report, "Write the JSON report here instead of stdout");

  // agree -------------------------------------------------------------------
  struct {
    std::string candidate, reference, report;
    double iou_th = 0.3;
  } ag;
  auto* agree_cmd = app.add_subcommand("agree", "Agreement of two annotation sets (candidate as ideal detector)");
  agree_cmd->add_option("--candidate", ag.candidate, "Candidate annotations (e.g. manual)")->required();
  agree_cmd->add_option("--reference", ag.reference, "Reference annotations (e.g. automatic)")->required();
  agree_cmd->add_option("--iou-th", ag.iou_th, "IOU threshold")->check(CLI::Range(0.0, 1.0));
  agree_cmd->add_option("--report", ag.report, "Write the JSON report here instead of stdout");

  // serve -------------------------------------------------------------------
  struct {
    std::string frames, instances, host = "127.0.0.1";
    int port = 8787;
    bool persist = false;
    LabelerConfig cfg;
  } sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation server for the refinement UI");
  serve_cmd->add_option("--frames", sv.frames, "Frames manifest (JSON)")->required();
  serve_cmd->add_option("--instances", sv.instances, "Instances file (JSON)")->required();
  serve_cmd->add_option("--host", sv.host, "Bind address");
  serve_cmd->add_option("--port", sv.port, "Port")->check(CLI::Range(1, 65535));
  serve_cmd->add_flag("--persist", sv.persist, "Save the instances file after every accepted edit");
  serve_cmd->add_option("--near", sv.cfg.near_plane, "Near clipping plane (m)")->check(CLI::PositiveNumber);

  // arp ---------------------------------------------------------------------
  struct {
    std::string layout, observations, frames, points, instances, out, class_name;
    ClassId class_id = 0;
    ArpConfig cfg;
  } arp;
  auto* arp_cmd = app.add_subcommand("arp", "Build a box from four pen-tip captures");
  arp_cmd->add_option("--layout", arp.layout, "Pen layout (JSON)")->required();
  arp_cmd->add_option("--observations", arp.observations, "Marker detections (JSON lines)")->required();
  arp_cmd->add_option("--frames", arp.frames, "Frames manifest giving world_T_cam per frame")->required();
  arp_cmd->add_option("--points", arp.points, "Frame ids of the p0,p1,p2,p3 captures")->required();
  arp_cmd->add_option("--class", arp.class_id, "Class id")->check(CLI::NonNegativeNumber);
  arp_cmd->add_option("--class-name", arp.class_name, "Class name if the class is new");
  arp_cmd->add_option("--instances", arp.instances, "Instances file to append the new box to");
  arp_cmd->add_option("--out", arp.out, "Where to write the updated instances (default: --instances)");
  arp_cmd->add_option("--max-spread", arp.cfg.max_position_spread, "Max disagreement between markers (m)")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"ars"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  // Appends `box` to an instances file (or a fresh set) and writes it.
  auto append_instance = [&](VirtualBox box, const std::string& in, const std::string& dest,
                             const std::string& class_name) {
    InstanceSet base = in.empty() ? InstanceSet{} : load_instances(in);
    std::vector<VirtualBox> boxes = base.instances();
    auto classes = base.class_table();
    box.id = base.next_id();
    if (!classes.count(box.class_id))
      classes[box.class_id] = class_name.empty() ? "class_" + std::to_string(box.class_id) : class_name;
    boxes.push_back(box);
    const InstanceSet updated(std::move(boxes), std::move(classes));
    save_instances(updated, dest.empty() ? in : dest);
    return box.id;
  };

  try {
    if (*label_cmd) {
      const FrameSet frames = load_frames(label.frames);
      const InstanceSet instances = load_instances(label.instances);
      DatasetOptions opts;
      opts.format = parse_dataset_format(label.format);
      opts.split = label.split;
      opts.train_fraction = label.train_fraction;
      opts.seed = label.seed;
      opts.jobs = label.jobs;
      const DatasetStats stats = generate_dataset(frames, instances, label.cfg, label.out, opts);
      logger.info("labeled " + std::to_string(stats.frames_written) + " frames in " +
                  std::to_string(stats.elapsed_seconds) + " s");
      ordered_json j = stats_to_json(stats);
      j.erase("elapsed_seconds");
      out << j.dump(2) << "\n";
    } else if (*carve_cmd) {
      const FrameSet frames = load_frames(carve_args.frames);
      const std::vector<SilhouetteMask> masks = load_masks(carve_args.masks);
      const auto v = cli_detail::parse_number_list(carve_args.volume, 6, "--volume");
      const Aabb volume{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
      const VoxelHull hull = carve(masks, frames, volume, carve_args.resolution, carve_args.opts);
      logger.info(std::to_string(hull.occupied_count()) + " occupied voxels");
      if (!carve_args.hull_out.empty()) write_hull(hull, carve_args.hull_out);
      VirtualBox box = hull_to_instance(hull, carve_args.class_id);
      if (!carve_args.instances.empty() || !carve_args.out.empty())
        box.id = append_instance(box, carve_args.instances, carve_args.out, carve_args.class_name);
      ordered_json j = ordered_json::object();
      j["id"] = box.id;
      j["class_id"] = box.class_id;
      j["world_T_obj"] = pose_to_json<ordered_json>(box.world_T_obj);
      j["size"] = vec3_to_json<ordered_json>(box.size);
      j["centroid"] = vec3_to_json<ordered_json>(hull_centroid(hull));
      j["occupied_voxels"] = hull.occupied_count();
      out << j.dump(2) << "\n";
    } else if (*cov_cmd) {
      const auto [tb, pb] = parse_bins(cov.bins);
      FrameSet frames = load_frames(cov.frames);
      const InstanceSet instances = load_instances(cov.instances);
      const VirtualBox* box = instances.find(cov.object);
      if (!box) throw Error(ErrorCode::NotFound, "instance " + std::to_string(cov.object));
      if (cov.visible_only) {
        std::vector<Frame> kept;
        for (const Frame& f : frames)
          if (label_box(f, *box, cov.cfg)) kept.push_back(f);
        frames = FrameSet(std::move(kept), frames.base_dir());
      }
      const CoverageHistogram hist = coverage_histogram(frames, *box, {tb, pb, cov.jobs});
      if (cov.format == "csv") {
        out << histogram_to_csv(hist);
      } else {
        ordered_json j = histogram_to_json(hist);
        if (cov.min_count > 0) j["gaps"] = gaps_to_json(coverage_gaps(hist, cov.min_count));
        out << j.dump(2) << "\n";
      }
    } else if (*eval_cmd) {
      const auto preds = load_annotations(ev.preds);
      const auto gt = load_annotations(ev.gt);
      const auto frames = pair_frames(preds, gt);
      const EvaluationReport report = evaluate_detections(
          frames, ev.iou_th, ev.interp == "11" ? ApInterpolation::ElevenPoint : ApInterpolation::AllPoint);
      cli_detail::emit(out, evaluation_to_json(report).dump(2) + "\n", ev.report);
    } else if (*agree_cmd) {
      const auto candidate = load_annotations(ag.candidate);
      const auto reference = load_annotations(ag.reference);
      const AgreementReport report = compare_annotation_sets(candidate, reference, ag.iou_th);
      cli_detail::emit(out, agreement_to_json(report, ag.iou_th).dump(2) + "\n", ag.report);
    } else if (*serve_cmd) {
      ServiceOptions opts;
      opts.labeler = sv.cfg;
      if (sv.persist) opts.persist_instances_to = sv.instances;
      AnnotationService service(load_frames(sv.frames), load_instances(sv.instances), opts);
      AnnotationHttpApi api(service);
      httplib::Server server;
      api.mount(server);
      logger.info("listening on http://" + sv.host + ":" + std::to_string(sv.port));
      if (!server.listen(sv.host, sv.port))
        throw Error(ErrorCode::IoError, "cannot listen on " + sv.host + ":" + std::to_string(sv.port));
    } else if (*arp_cmd) {
      const ArpLayout layout = load_arp_layout(arp.layout);
      const FrameSet frames = load_frames(arp.frames);
      std::ifstream stream(arp.observations);
      if (!stream) throw Error(ErrorCode::IoError, "cannot open " + arp.observations);
      const std::vector<DetectionRecord> records = read_detection_stream(stream);
      const auto ids = cli_detail::parse_number_list(arp.points, 4, "--points");

      std::array<Vec3, 4> world_points;
      for (int k = 0; k < 4; ++k) {
        const auto frame_id = static_cast<FrameId>(ids[k]);
        const Frame* frame = frames.find(frame_id);
        if (!frame) throw Error(ErrorCode::NotFound, "frame " + std::to_string(frame_id));
        const DetectionRecord* rec = nullptr;
        for (const DetectionRecord& r : records)
          if (r.frame_id == frame_id) rec = &r;
        if (!rec) throw Error(ErrorCode::NoMarkersVisible, "no detections for frame " + std::to_string(frame_id));
        const std::vector<MarkerObservation> obs = observations_for(layout, *rec);
        const TipEstimate tip = estimate_tip(obs, arp.cfg);
        logger.info("p" + std::to_string(k) + ": " + std::to_string(tip.marker_count) +
                    " markers, spread " + std::to_string(tip.position_spread) + " m");
        world_points[k] = frame->world_T_cam.apply(tip.cam_T_tip.translation());
      }
      VirtualBox box = build_virtual_box(world_points[0], world_points[1], world_points[2],
                                         world_points[3], arp.class_id, arp.cfg);
      if (!arp.instances.empty() || !arp.out.empty())
        box.id = append_instance(box, arp.instances, arp.out, arp.class_name);
      out << box_to_json(box).dump(2) << "\n";
    }
  } catch (const Error& e) {
    logger.error(e.what());
    return 1;
  } catch (const std::exception& e) {
    logger.error(e.what());
    return 1;
  }
  return 0;
}

}  // namespace ars
