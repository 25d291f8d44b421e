#pragma once

// Viewpoint coverage: where the camera sat, in each object's frame, over a
// sequence, as a (theta, phi) histogram.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "ars/geometry.hpp"
#include "ars/json_io.hpp"
#include "ars/parallel.hpp"
#include "ars/scene.hpp"

namespace ars {

/// theta = atan2(y, x) in [-pi, pi); phi = acos(z / r) in [0, pi].
struct PolarViewpoint {
  double r = 0.0;
  double theta = 0.0;
  double phi = 0.0;
};

inline PolarViewpoint to_polar(const Vec3& p) {
  const double r = p.norm();
  if (!(r > 1e-12)) throw Error(ErrorCode::CoincidentPosition, "camera coincides with the object origin");
  double theta = std::atan2(p.y(), p.x());
  if (theta >= std::numbers::pi) theta = -std::numbers::pi;
  const double phi = std::acos(std::clamp(p.z() / r, -1.0, 1.0));
  return {r, theta, phi};
}

/// Camera position in the object frame: translation of obj_T_cam.
inline PolarViewpoint camera_in_object_frame(const Frame& frame, const VirtualBox& box) {
  return to_polar(compose(invert(box.world_T_obj), frame.world_T_cam).translation());
}

class CoverageHistogram {
 public:
  CoverageHistogram(int theta_bins, int phi_bins) : theta_bins_(theta_bins), phi_bins_(phi_bins) {
    if (theta_bins < 1 || phi_bins < 1)
      throw Error(ErrorCode::InvalidArgument, "histogram needs at least one bin per axis");
    counts_.assign(static_cast<std::size_t>(theta_bins) * phi_bins, 0);
  }

  [[nodiscard]] int theta_bins() const noexcept { return theta_bins_; }
  [[nodiscard]] int phi_bins() const noexcept { return phi_bins_; }
  [[nodiscard]] long long total() const noexcept { return total_; }

  [[nodiscard]] long long count(int theta_bin, int phi_bin) const {
    return counts_.at(static_cast<std::size_t>(phi_bin) * theta_bins_ + theta_bin);
  }

  /// Half-open bins; theta uniform over [-pi, pi), phi over [0, pi] with
  /// phi == pi folded into the last bin.
  [[nodiscard]] int theta_bin(double theta) const {
    const double t = (theta + std::numbers::pi) / (2.0 * std::numbers::pi);
    return std::clamp(static_cast<int>(std::floor(t * theta_bins_)), 0, theta_bins_ - 1);
  }
  [[nodiscard]] int phi_bin(double phi) const {
    const double t = phi / std::numbers::pi;
    return std::clamp(static_cast<int>(std::floor(t * phi_bins_)), 0, phi_bins_ - 1);
  }

  void add(const PolarViewpoint& vp) { add_to_bin(theta_bin(vp.theta), phi_bin(vp.phi)); }

  void add_to_bin(int theta_bin, int phi_bin, long long n = 1) {
    counts_.at(static_cast<std::size_t>(phi_bin) * theta_bins_ + theta_bin) += n;
    total_ += n;
  }

  /// Adds another histogram with the same binning.
  void merge(const CoverageHistogram& other) {
    if (other.theta_bins_ != theta_bins_ || other.phi_bins_ != phi_bins_)
      throw Error(ErrorCode::InvalidArgument, "cannot merge histograms with different binning");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
  }

  bool operator==(const CoverageHistogram&) const = default;

 private:
  int theta_bins_;
  int phi_bins_;
  std::vector<long long> counts_;  // row-major: one row per phi bin
  long long total_ = 0;
};

struct CoverageOptions {
  int theta_bins = 36;
  int phi_bins = 18;
  unsigned jobs = 0;
};

/// Every frame contributes exactly one count.
inline CoverageHistogram coverage_histogram(const FrameSet& frames, const VirtualBox& box,
                                            const CoverageOptions& options = {}) {
  CoverageHistogram hist(options.theta_bins, options.phi_bins);
  std::vector<PolarViewpoint> viewpoints(frames.size());
  parallel_for(frames.size(), options.jobs, [&](std::size_t i) {
    viewpoints[i] = camera_in_object_frame(frames.frames()[i], box);
  });
  for (const PolarViewpoint& vp : viewpoints) hist.add(vp);
  return hist;
}

struct CoverageGap {
  int theta_bin = 0;
  int phi_bin = 0;
  long long count = 0;

  bool operator==(const CoverageGap&) const = default;
};

/// Bins with count < min_count, by ascending count, then theta bin, then phi bin.
inline std::vector<CoverageGap> coverage_gaps(const CoverageHistogram& hist, long long min_count) {
  std::vector<CoverageGap> gaps;
  for (int p = 0; p < hist.phi_bins(); ++p)
    for (int t = 0; t < hist.theta_bins(); ++t)
      if (hist.count(t, p) < min_count) gaps.push_back({t, p, hist.count(t, p)});
  std::sort(gaps.begin(), gaps.end(), [](const CoverageGap& a, const CoverageGap& b) {
    return std::tie(a.count, a.theta_bin, a.phi_bin) < std::tie(b.count, b.theta_bin, b.phi_bin);
  });
  return gaps;
}

inline ordered_json histogram_to_json(const CoverageHistogram& hist) {
  ordered_json j = ordered_json::object();
  j["theta_bins"] = hist.theta_bins();
  j["phi_bins"] = hist.phi_bins();
  ordered_json rows = ordered_json::array();
  for (int p = 0; p < hist.phi_bins(); ++p) {
    ordered_json row = ordered_json::array();
    for (int t = 0; t < hist.theta_bins(); ++t) row.push_back(hist.count(t, p));
    rows.push_back(std::move(row));
  }
  j["counts"] = std::move(rows);
  j["total"] = hist.total();
  return j;
}

inline CoverageHistogram histogram_from_json(const json& j) {
  CoverageHistogram hist(static_cast<int>(integer_at(field(j, "theta_bins"), "theta_bins")),
                         static_cast<int>(integer_at(field(j, "phi_bins"), "phi_bins")));
  const json& rows = field(j, "counts");
  if (!rows.is_array() || static_cast<int>(rows.size()) != hist.phi_bins())
    throw Error(ErrorCode::ParseError, "counts must have one row per phi bin");
  for (int p = 0; p < hist.phi_bins(); ++p) {
    if (!rows[p].is_array() || static_cast<int>(rows[p].size()) != hist.theta_bins())
      throw Error(ErrorCode::ParseError, "each counts row must have one entry per theta bin");
    for (int t = 0; t < hist.theta_bins(); ++t) {
      const long long n = integer_at(rows[p][t], "count");
      if (n < 0) throw Error(ErrorCode::ParseError, "counts must be non-negative");
      hist.add_to_bin(t, p, n);
    }
  }
  if (hist.total() != integer_at(field(j, "total"), "total"))
    throw Error(ErrorCode::ParseError, "total does not equal the sum of counts");
  return hist;
}

/// One line per phi bin, comma separated counts over theta bins.
inline std::string histogram_to_csv(const CoverageHistogram& hist) {
  std::string out;
  for (int p = 0; p < hist.phi_bins(); ++p) {
    for (int t = 0; t < hist.theta_bins(); ++t) {
      if (t) out += ',';
      out += std::to_string(hist.count(t, p));
    }
    out += '\n';
  }
  return out;
}

inline ordered_json gaps_to_json(const std::vector<CoverageGap>& gaps) {
  ordered_json list = ordered_json::array();
  for (const CoverageGap& g : gaps)
    list.push_back({{"theta_bin", g.theta_bin}, {"phi_bin", g.phi_bin}, {"count", g.count}});
  return list;
}

/// Parses "36x18".
inline std::pair<int, int> parse_bins(std::string_view text) {
  const auto x = text.find('x');
  try {
    if (x == std::string_view::npos) throw std::invalid_argument("no separator");
    std::size_t used_t = 0, used_p = 0;
    const std::string ts(text.substr(0, x)), ps(text.substr(x + 1));
    const int t = std::stoi(ts, &used_t);
    const int p = std::stoi(ps, &used_p);
    if (used_t != ts.size() || used_p != ps.size() || t < 1 || p < 1)
      throw std::invalid_argument("bad bins");
    return {t, p};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument,
                "bins must look like <theta>x<phi> with positive integers, got '" + std::string(text) + "'");
  }
}

}  // namespace ars
