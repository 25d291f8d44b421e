#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <sstream>

#include "ars/arp.hpp"
#include "test_support.hpp"

namespace ars {
namespace {

using testing::Rng;

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ars::Error thrown";
  return ErrorCode::IoError;
}

MarkerObservation obs_with_tip(int id, const RigidTransform& cam_T_tip, const RigidTransform& tip_T_marker) {
  return {id, compose(cam_T_tip, tip_T_marker), tip_T_marker};
}

TEST(EstimateTip, SingleObservation) {
  const std::vector<MarkerObservation> obs{
      {1, RigidTransform::translate(0, 0, 0.5), RigidTransform::translate(0, 0, 0.1)}};
  const TipEstimate est = estimate_tip(obs);
  EXPECT_LE((est.cam_T_tip.translation() - Vec3(0, 0, 0.4)).norm(), 1e-15);
  EXPECT_EQ(est.marker_count, 1);
  EXPECT_EQ(est.position_spread, 0.0);
}

TEST(EstimateTip, SymmetricPairAverages) {
  const RigidTransform layout = RigidTransform::translate(0, 0.03, 0);
  const std::vector<MarkerObservation> obs{
      obs_with_tip(1, RigidTransform::translate(0.01, 0, 0.4), layout),
      obs_with_tip(2, RigidTransform::translate(-0.01, 0, 0.4), layout)};
  const TipEstimate est = estimate_tip(obs);
  EXPECT_LE((est.cam_T_tip.translation() - Vec3(0, 0, 0.4)).norm(), 1e-12);
  EXPECT_NEAR(est.position_spread, 0.02, 1e-12);
  EXPECT_EQ(est.marker_count, 2);
}

TEST(EstimateTip, Errors) {
  EXPECT_EQ(code_of([] { estimate_tip({}); }), ErrorCode::NoMarkersVisible);
  const std::vector<MarkerObservation> obs{
      obs_with_tip(1, RigidTransform::translate(0.05, 0, 0.4), RigidTransform{}),
      obs_with_tip(2, RigidTransform::translate(-0.05, 0, 0.4), RigidTransform{})};
  EXPECT_EQ(code_of([&] { estimate_tip(obs); }), ErrorCode::InconsistentObservations);
  ArpConfig loose;
  loose.max_position_spread = 0.5;
  EXPECT_NO_THROW(estimate_tip(obs, loose));
}

TEST(EstimateTip, ConsistentObservationsReturnExactPose) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform tip = testing::random_transform(rng, 1.0);
    std::vector<MarkerObservation> obs;
    for (int m = 0; m < 5; ++m) obs.push_back(obs_with_tip(m, tip, testing::random_transform(rng, 0.05)));
    const TipEstimate est = estimate_tip(obs);
    EXPECT_LE((est.cam_T_tip.matrix() - tip.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE(est.position_spread, 1e-12);
  }
}

TEST(EstimateTip, PermutationInvariant) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform tip = testing::random_transform(rng, 1.0);
    std::vector<MarkerObservation> obs;
    for (int m = 0; m < 4; ++m) {
      // Perturb each marker's view of the tip slightly.
      const RigidTransform noise = RigidTransform::from_axis_angle(
          testing::random_unit(rng), testing::uniform(rng, 0, 0.03),
          Vec3(testing::uniform(rng, -0.003, 0.003), testing::uniform(rng, -0.003, 0.003), 0));
      obs.push_back(obs_with_tip(m, compose(tip, noise), testing::random_transform(rng, 0.05)));
    }
    const TipEstimate a = estimate_tip(obs);
    std::vector<MarkerObservation> shuffled = obs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const TipEstimate b = estimate_tip(shuffled);
    EXPECT_LE((a.cam_T_tip.matrix() - b.cam_T_tip.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(a.position_spread, b.position_spread, 1e-15);
  }
}

TEST(BuildVirtualBox, WorkedExample) {
  const VirtualBox box = build_virtual_box({0, 0, 1}, {0, 0, 0}, {1, 0, 0}, {1, 2, 0}, 4);
  EXPECT_EQ(box.world_T_obj.translation(), Vec3(0, 0, 1));
  const Mat3& r = box.world_T_obj.rotation();
  EXPECT_LE((r.col(0) - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LE((r.col(1) - Vec3(0, -1, 0)).norm(), 1e-15);
  EXPECT_LE((r.col(2) - Vec3(0, 0, -1)).norm(), 1e-15);
  EXPECT_LE((box.size - Vec3(1, 2, 1)).norm(), 1e-15);
  EXPECT_EQ(box.class_id, 4);
}

TEST(BuildVirtualBox, CubeCornerHasProperRotation) {
  const VirtualBox box = build_virtual_box({0, 0, 1}, {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, 0);
  EXPECT_LE((box.size - Vec3(1, 1, 1)).norm(), 1e-15);
  EXPECT_NEAR(box.world_T_obj.rotation().determinant(), 1.0, 1e-15);
}

TEST(BuildVirtualBox, ConstructionPointsAreCorners) {
  const Vec3 p0(0, 0, 1), p1(0, 0, 0), p2(1, 0, 0), p3(1, 2, 0);
  const auto v = box_vertices(build_virtual_box(p0, p1, p2, p3, 0));
  for (const Vec3& p : {p0, p1, p2, p3}) {
    const bool found = std::any_of(v.begin(), v.end(), [&](const Vec3& q) { return (q - p).norm() < 1e-12; });
    EXPECT_TRUE(found) << p.transpose();
  }
}

TEST(BuildVirtualBox, Errors) {
  EXPECT_EQ(code_of([] { build_virtual_box({0, 0, 1}, {0, 0, 1}, {1, 0, 0}, {1, 1, 0}, 0); }),
            ErrorCode::DegenerateEdge);
  EXPECT_EQ(code_of([] { build_virtual_box({0, 0, 1}, {0, 0, 0}, {0.0005, 0, 0}, {1, 1, 0}, 0); }),
            ErrorCode::DegenerateEdge);
  // p1->p2 continues straight down.
  EXPECT_EQ(code_of([] { build_virtual_box({0, 0, 1}, {0, 0, 0}, {0.001, 0, -1}, {1, 1, -1}, 0); }),
            ErrorCode::CollinearPoints);
}

TEST(BoxToWorld, Examples) {
  const VirtualBox b = testing::make_box(1, RigidTransform::translate(1, 0, 0), Vec3(1, 2, 3), 2);
  const VirtualBox same = box_to_world(b, RigidTransform{});
  EXPECT_EQ(same.world_T_obj.matrix(), b.world_T_obj.matrix());
  EXPECT_EQ(same.size, b.size);

  const VirtualBox at_origin = testing::make_box(1, RigidTransform{}, Vec3(1, 1, 1));
  EXPECT_EQ(box_to_world(at_origin, RigidTransform::translate(0, 0, 5)).world_T_obj.translation(), Vec3(0, 0, 5));

  const VirtualBox rotated = box_to_world(b, RigidTransform::rot_z(std::numbers::pi / 2));
  EXPECT_LE((rotated.world_T_obj.translation() - Vec3(0, 1, 0)).norm(), 1e-15);
  EXPECT_EQ(rotated.class_id, 2);
  EXPECT_EQ(rotated.size, Vec3(1, 2, 3));
}

TEST(ArpProperties, PerpendicularEdgesBecomeColumns) {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const Mat3 r = testing::random_quaternion(rng).toRotationMatrix();
    const Vec3 s(testing::uniform(rng, 0.01, 1), testing::uniform(rng, 0.01, 1), testing::uniform(rng, 0.01, 1));
    const Vec3 p0 = testing::random_unit(rng);
    // Walk the construction path in a frame whose columns are r.
    const Vec3 p1 = p0 + s.z() * r.col(2);
    const Vec3 p2 = p1 + s.x() * r.col(0);
    const Vec3 p3 = p2 - s.y() * r.col(1);
    const VirtualBox box = build_virtual_box(p0, p1, p2, p3, 0);
    EXPECT_LE((box.world_T_obj.rotation() - r).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((box.size - s).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ArpProperties, ImperfectInputStillRigidAndScaleConsistent) {
  Rng rng(24);
  int accepted = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::array<Vec3, 4> p;
    for (Vec3& q : p) q = Vec3(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1));
    VirtualBox box;
    try {
      box = build_virtual_box(p[0], p[1], p[2], p[3], 0);
    } catch (const Error&) {
      continue;
    }
    ++accepted;
    const Mat3& r = box.world_T_obj.rotation();
    EXPECT_LE(orthonormality_error(r), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    EXPECT_LE((r.col(2) - (p[1] - p[0]).normalized()).norm(), 1e-12);

    const double k = testing::uniform(rng, 0.1, 10);
    const auto scaled = [&](const Vec3& q) { return Vec3(p[0] + k * (q - p[0])); };
    const VirtualBox big = build_virtual_box(p[0], scaled(p[1]), scaled(p[2]), scaled(p[3]), 0);
    EXPECT_LE((big.size - k * box.size).cwiseAbs().maxCoeff(), 1e-9 * k);
    EXPECT_LE((big.world_T_obj.rotation() - r).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_GT(accepted, 400);
}

TEST(ArpIo, LayoutAndStream) {
  const json layout_doc = parse_json(R"({"markers": [
      {"marker_id": 3, "tip_T_marker": [1,0,0,0, 0,1,0,0, 0,0,1,0.1, 0,0,0,1]},
      {"marker_id": 5, "tip_T_marker": [1,0,0,0.02, 0,1,0,0, 0,0,1,0.1, 0,0,0,1]}]})");
  const ArpLayout layout = arp_layout_from_json(layout_doc);
  ASSERT_NE(layout.find(3), nullptr);
  EXPECT_EQ(layout.find(4), nullptr);

  std::istringstream stream(
      R"({"frame_id": 10, "detections": [{"marker_id": 3, "cam_T_marker": [1,0,0,0, 0,1,0,0, 0,0,1,0.5, 0,0,0,1]}, {"marker_id": 99, "cam_T_marker": [1,0,0,0, 0,1,0,0, 0,0,1,0.5, 0,0,0,1]}]})"
      "\n\n"
      R"({"frame_id": 11, "detections": []})"
      "\n");
  const auto records = read_detection_stream(stream);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].frame_id, 10);
  const auto obs = observations_for(layout, records[0]);
  ASSERT_EQ(obs.size(), 1u);
  EXPECT_LE((estimate_tip(obs).cam_T_tip.translation() - Vec3(0, 0, 0.4)).norm(), 1e-15);
  EXPECT_TRUE(observations_for(layout, records[1]).empty());

  std::istringstream bad("{\"frame_id\": 1}\n");
  EXPECT_EQ(code_of([&] { read_detection_stream(bad); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] {
              arp_layout_from_json(parse_json(R"({"markers": [
                {"marker_id": 1, "tip_T_marker": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]},
                {"marker_id": 1, "tip_T_marker": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]})"));
            }),
            ErrorCode::DuplicateId);
}

}  // namespace
}  // namespace ars
