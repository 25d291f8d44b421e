#pragma once

// PASCAL-VOC style detection metrics and annotation-set agreement.
//
// A prediction is correct when it has the ground truth's class and
// IOU > iou_th. Matching is greedy in descending confidence and one-to-one
// on the ground-truth side.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ars/json_io.hpp"
#include "ars/labeler.hpp"

namespace ars {

inline double iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (!(iw > 0.0) || !(ih > 0.0)) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

inline double iou(const Annotation2D& a, const Annotation2D& b) { return iou(a.box, b.box); }

/// Indices refer to the prediction / ground-truth lists passed to
/// match_predictions().
struct MatchResult {
  struct Pair {
    std::size_t prediction = 0;
    std::size_t ground_truth = 0;
    double iou = 0.0;
  };
  std::vector<Pair> true_positives;
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
};

inline double confidence_of(const Annotation2D& a) { return a.confidence.value_or(1.0); }

inline void validate_iou_threshold(double iou_th) {
  if (!(iou_th > 0.0 && iou_th < 1.0))
    throw Error(ErrorCode::InvalidArgument, "iou threshold must lie in (0, 1)");
}

/// Prediction order used by matching: descending confidence, ties by index.
inline std::vector<std::size_t> confidence_order(std::span<const Annotation2D> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidence_of(preds[a]) > confidence_of(preds[b]);
  });
  return order;
}

inline MatchResult match_predictions(std::span<const Annotation2D> preds,
                                     std::span<const Annotation2D> gts, double iou_th) {
  validate_iou_threshold(iou_th);
  MatchResult result;
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t p : confidence_order(preds)) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != preds[p].class_id) continue;
      const double o = iou(preds[p], gts[g]);
      if (o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best && best_iou > iou_th) {
      taken[*best] = true;
      result.true_positives.push_back({p, *best, best_iou});
    } else {
      result.false_positives.push_back(p);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!taken[g]) result.false_negatives.push_back(g);
  return result;
}

struct AverageIou {
  double value = 0.0;
  bool empty = true;  ///< no true positives; value is 0
};

inline AverageIou avg_iou(const MatchResult& matches) {
  if (matches.true_positives.empty()) return {};
  double sum = 0.0;
  for (const auto& tp : matches.true_positives) sum += tp.iou;
  return {sum / static_cast<double>(matches.true_positives.size()), false};
}

/// Predictions and ground truth for one image.
struct DetectionFrame {
  FrameId frame_id = 0;
  std::vector<Annotation2D> predictions;
  std::vector<Annotation2D> ground_truth;
};

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Sorted by descending threshold; recall is non-decreasing along it.
struct PRCurve {
  ClassId class_id = 0;
  std::size_t num_ground_truth = 0;
  std::vector<PRPoint> points;
};

/// Scored outcome of every prediction of one class after matching.
struct ScoredDetection {
  double confidence = 0.0;
  bool true_positive = false;
};

/// Curve sampled at every distinct confidence: at threshold t, all
/// predictions with confidence >= t count.
inline PRCurve curve_from_scored(ClassId class_id, std::vector<ScoredDetection> scored,
                                 std::size_t num_ground_truth) {
  if (num_ground_truth == 0)
    throw Error(ErrorCode::NoGroundTruth, "class " + std::to_string(class_id) + " has no ground truth");
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) { return a.confidence > b.confidence; });
  PRCurve curve;
  curve.class_id = class_id;
  curve.num_ground_truth = num_ground_truth;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    (scored[i].true_positive ? tp : fp) += 1;
    const bool last_of_threshold = i + 1 == scored.size() || scored[i + 1].confidence != scored[i].confidence;
    if (!last_of_threshold) continue;
    curve.points.push_back({scored[i].confidence, static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(num_ground_truth)});
  }
  return curve;
}

/// PR curve of one class over a set of images.
inline PRCurve pr_curve(std::span<const DetectionFrame> frames, ClassId class_id, double iou_th) {
  std::vector<ScoredDetection> scored;
  std::size_t num_gt = 0;
  for (const DetectionFrame& f : frames) {
    const MatchResult m = match_predictions(f.predictions, f.ground_truth, iou_th);
    std::vector<bool> is_tp(f.predictions.size(), false);
    for (const auto& tp : m.true_positives) is_tp[tp.prediction] = true;
    for (std::size_t p = 0; p < f.predictions.size(); ++p)
      if (f.predictions[p].class_id == class_id)
        scored.push_back({confidence_of(f.predictions[p]), is_tp[p]});
    for (const Annotation2D& g : f.ground_truth) num_gt += g.class_id == class_id;
  }
  return curve_from_scored(class_id, std::move(scored), num_gt);
}

/// Single-image convenience overload.
inline PRCurve pr_curve(std::span<const Annotation2D> preds, std::span<const Annotation2D> gts,
                        ClassId class_id, double iou_th) {
  const DetectionFrame frame{0, {preds.begin(), preds.end()}, {gts.begin(), gts.end()}};
  return pr_curve(std::span<const DetectionFrame>(&frame, 1), class_id, iou_th);
}

enum class ApInterpolation { AllPoint, ElevenPoint };

/// Area under the precision envelope, where the envelope at recall r is the
/// best precision at any recall >= r.
inline double average_precision(const PRCurve& curve,
                                ApInterpolation mode = ApInterpolation::AllPoint) {
  if (mode == ApInterpolation::ElevenPoint) {
    double sum = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double r = i / 10.0;
      double best = 0.0;
      for (const PRPoint& p : curve.points)
        if (p.recall >= r) best = std::max(best, p.precision);
      sum += best;
    }
    return sum / 11.0;
  }
  std::vector<double> recall{0.0};
  std::vector<double> precision{0.0};
  for (const PRPoint& p : curve.points) {
    recall.push_back(p.recall);
    precision.push_back(p.precision);
  }
  for (std::size_t i = precision.size() - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double area = 0.0;
  for (std::size_t i = 1; i < recall.size(); ++i) area += (recall[i] - recall[i - 1]) * precision[i];
  return area;
}

/// Unweighted mean over the given per-class AP values.
inline double mean_average_precision(std::span<const double> per_class_ap) {
  if (per_class_ap.empty()) throw Error(ErrorCode::NoGroundTruth, "no classes with ground truth");
  return std::accumulate(per_class_ap.begin(), per_class_ap.end(), 0.0) /
         static_cast<double>(per_class_ap.size());
}

inline double mean_average_precision(std::span<const PRCurve> curves,
                                     ApInterpolation mode = ApInterpolation::AllPoint) {
  std::vector<double> aps;
  for (const PRCurve& c : curves) aps.push_back(average_precision(c, mode));
  return mean_average_precision(aps);
}

// ---------------------------------------------------------------------------
// Aggregate reports

struct ClassReport {
  ClassId class_id = 0;
  std::size_t num_ground_truth = 0;
  std::size_t num_predictions = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  AverageIou avg_iou;
  std::optional<double> average_precision;  ///< absent for classes without ground truth
  std::optional<PRCurve> curve;
};

struct EvaluationReport {
  double iou_threshold = 0.5;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;  ///< 0 when there are no predictions
  double recall = 0.0;
  AverageIou avg_iou;
  double mean_average_precision = 0.0;
  std::vector<ClassReport> classes;
};

/// Full metric stack over a set of images. mAP averages the classes that
/// have ground truth.
inline EvaluationReport evaluate_detections(std::span<const DetectionFrame> frames, double iou_th,
                                            ApInterpolation mode = ApInterpolation::AllPoint) {
  validate_iou_threshold(iou_th);
  EvaluationReport report;
  report.iou_threshold = iou_th;

  std::map<ClassId, ClassReport> classes;
  std::map<ClassId, std::vector<ScoredDetection>> scored;
  std::map<ClassId, double> iou_sum;
  double total_iou = 0.0;
  std::size_t total_gt = 0;

  for (const DetectionFrame& f : frames) {
    const MatchResult m = match_predictions(f.predictions, f.ground_truth, iou_th);
    std::vector<bool> is_tp(f.predictions.size(), false);
    for (const auto& tp : m.true_positives) {
      is_tp[tp.prediction] = true;
      const ClassId c = f.predictions[tp.prediction].class_id;
      ++classes[c].true_positives;
      iou_sum[c] += tp.iou;
      total_iou += tp.iou;
    }
    for (std::size_t p = 0; p < f.predictions.size(); ++p) {
      const ClassId c = f.predictions[p].class_id;
      ++classes[c].num_predictions;
      if (!is_tp[p]) ++classes[c].false_positives;
      scored[c].push_back({confidence_of(f.predictions[p]), is_tp[p]});
    }
    for (const Annotation2D& g : f.ground_truth) ++classes[g.class_id].num_ground_truth;
    for (std::size_t g : m.false_negatives) ++classes[f.ground_truth[g].class_id].false_negatives;
    report.true_positives += m.true_positives.size();
    report.false_positives += m.false_positives.size();
    report.false_negatives += m.false_negatives.size();
    total_gt += f.ground_truth.size();
  }
  if (total_gt == 0) throw Error(ErrorCode::NoGroundTruth, "no ground-truth boxes to evaluate against");

  std::vector<double> aps;
  for (auto& [cls, cr] : classes) {
    cr.class_id = cls;
    const std::size_t predicted = cr.true_positives + cr.false_positives;
    cr.precision = predicted ? static_cast<double>(cr.true_positives) / predicted : 0.0;
    cr.recall = cr.num_ground_truth ? static_cast<double>(cr.true_positives) / cr.num_ground_truth : 0.0;
    if (cr.true_positives) cr.avg_iou = {iou_sum[cls] / cr.true_positives, false};
    if (cr.num_ground_truth > 0) {
      cr.curve = curve_from_scored(cls, scored[cls], cr.num_ground_truth);
      cr.average_precision = average_precision(*cr.curve, mode);
      aps.push_back(*cr.average_precision);
    }
    report.classes.push_back(cr);
  }
  const std::size_t predicted = report.true_positives + report.false_positives;
  report.precision = predicted ? static_cast<double>(report.true_positives) / predicted : 0.0;
  report.recall = static_cast<double>(report.true_positives) / static_cast<double>(total_gt);
  if (report.true_positives) report.avg_iou = {total_iou / report.true_positives, false};
  report.mean_average_precision = mean_average_precision(aps);
  return report;
}

/// Pairs predictions with ground truth by frame id; a frame missing on one
/// side contributes an empty list there.
inline std::vector<DetectionFrame> pair_frames(std::span<const LabeledFrame> predictions,
                                               std::span<const LabeledFrame> ground_truth) {
  std::map<FrameId, DetectionFrame> by_id;
  for (const LabeledFrame& f : predictions) {
    auto& d = by_id[f.frame_id];
    d.frame_id = f.frame_id;
    d.predictions.insert(d.predictions.end(), f.annotations.begin(), f.annotations.end());
  }
  for (const LabeledFrame& f : ground_truth) {
    auto& d = by_id[f.frame_id];
    d.frame_id = f.frame_id;
    d.ground_truth.insert(d.ground_truth.end(), f.annotations.begin(), f.annotations.end());
  }
  std::vector<DetectionFrame> out;
  out.reserve(by_id.size());
  for (auto& [id, d] : by_id) out.push_back(std::move(d));
  return out;
}

struct AgreementReport {
  double precision = 0.0;
  double recall = 0.0;
  AverageIou avg_iou;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::vector<ClassReport> classes;
};

/// Treats `candidate` as an ideal detector (confidence 1) and `reference`
/// as ground truth. Both sets must cover the same frame ids.
inline AgreementReport compare_annotation_sets(std::span<const LabeledFrame> candidate,
                                               std::span<const LabeledFrame> reference,
                                               double iou_th) {
  validate_iou_threshold(iou_th);
  std::set<FrameId> cand_ids, ref_ids;
  for (const LabeledFrame& f : candidate)
    if (!cand_ids.insert(f.frame_id).second)
      throw Error(ErrorCode::FrameMismatch, "candidate repeats frame " + std::to_string(f.frame_id));
  for (const LabeledFrame& f : reference)
    if (!ref_ids.insert(f.frame_id).second)
      throw Error(ErrorCode::FrameMismatch, "reference repeats frame " + std::to_string(f.frame_id));
  if (cand_ids != ref_ids)
    throw Error(ErrorCode::FrameMismatch, "candidate and reference cover different frame ids");

  std::vector<LabeledFrame> as_detector(candidate.begin(), candidate.end());
  for (LabeledFrame& f : as_detector)
    for (Annotation2D& a : f.annotations) a.confidence = 1.0;
  const std::vector<DetectionFrame> frames = pair_frames(as_detector, reference);

  AgreementReport out;
  std::size_t total_gt = 0;
  for (const DetectionFrame& f : frames) total_gt += f.ground_truth.size();
  if (total_gt == 0) {
    for (const DetectionFrame& f : frames) out.false_positives += f.predictions.size();
    return out;
  }
  const EvaluationReport full = evaluate_detections(frames, iou_th);
  out.precision = full.precision;
  out.recall = full.recall;
  out.avg_iou = full.avg_iou;
  out.true_positives = full.true_positives;
  out.false_positives = full.false_positives;
  out.false_negatives = full.false_negatives;
  out.classes = full.classes;
  for (ClassReport& c : out.classes) c.curve.reset();
  return out;
}

// ---------------------------------------------------------------------------
// JSON output

inline ordered_json class_report_to_json(const ClassReport& c) {
  ordered_json j = ordered_json::object();
  j["class_id"] = c.class_id;
  j["num_ground_truth"] = c.num_ground_truth;
  j["num_predictions"] = c.num_predictions;
  j["true_positives"] = c.true_positives;
  j["false_positives"] = c.false_positives;
  j["false_negatives"] = c.false_negatives;
  j["precision"] = round_sig9(c.precision);
  j["recall"] = round_sig9(c.recall);
  j["avg_iou"] = round_sig9(c.avg_iou.value);
  j["avg_iou_empty"] = c.avg_iou.empty;
  j["ap"] = c.average_precision ? ordered_json(round_sig9(*c.average_precision)) : ordered_json(nullptr);
  if (c.curve) {
    ordered_json pts = ordered_json::array();
    for (const PRPoint& p : c.curve->points)
      pts.push_back({round_sig9(p.threshold), round_sig9(p.precision), round_sig9(p.recall)});
    j["pr_curve"] = std::move(pts);
  }
  return j;
}

inline ordered_json evaluation_to_json(const EvaluationReport& r) {
  ordered_json j = ordered_json::object();
  j["iou_threshold"] = r.iou_threshold;
  j["precision"] = round_sig9(r.precision);
  j["recall"] = round_sig9(r.recall);
  j["avg_iou"] = round_sig9(r.avg_iou.value);
  j["avg_iou_empty"] = r.avg_iou.empty;
  j["mAP"] = round_sig9(r.mean_average_precision);
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["false_negatives"] = r.false_negatives;
  ordered_json classes = ordered_json::array();
  for (const ClassReport& c : r.classes) classes.push_back(class_report_to_json(c));
  j["classes"] = std::move(classes);
  return j;
}

inline ordered_json agreement_to_json(const AgreementReport& r, double iou_th) {
  ordered_json j = ordered_json::object();
  j["iou_threshold"] = iou_th;
  j["precision"] = round_sig9(r.precision);
  j["recall"] = round_sig9(r.recall);
  j["avg_iou"] = round_sig9(r.avg_iou.value);
  j["avg_iou_empty"] = r.avg_iou.empty;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["false_negatives"] = r.false_negatives;
  ordered_json classes = ordered_json::array();
  for (const ClassReport& c : r.classes) classes.push_back(class_report_to_json(c));
  j["classes"] = std::move(classes);
  return j;
}

}  // namespace ars
