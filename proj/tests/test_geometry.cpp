#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "scenarios.hpp"
#include "trafficview/error.hpp"
#include "trafficview/geometry.hpp"

using namespace trafficview;
using namespace trafficview::geometry;

namespace {

std::vector<PointPair> unit_square(double dx, double dy) {
  const Point2 c[4] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::vector<PointPair> out;
  for (const auto& p : c) out.push_back({p, {p.x + dx, p.y + dy}});
  return out;
}

Homography block(double a, double b, double c, double d) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = a;
  m(0, 1) = b;
  m(1, 0) = c;
  m(1, 1) = d;
  return Homography(m);
}

}  // namespace

TEST(Dlt, IdentityFromUnitSquare) {
  const auto h = fit_homography_dlt(unit_square(0, 0));
  EXPECT_LT((h.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dlt, PureTranslation) {
  const auto h = fit_homography_dlt(unit_square(5, 0));
  Eigen::Matrix3d expected;
  expected << 1, 0, 5, 0, 1, 0, 0, 0, 1;
  EXPECT_LT((h.matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dlt, RecoversKnownMapFromEightPoints) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = tvtest::ransac_scenario(seed, 8, 0, 0.0);
    const auto h = fit_homography_dlt(s.pairs);
    EXPECT_LT(tvtest::normalized_difference(h.matrix(), s.truth), 1e-6) << "seed " << seed;
  }
}

TEST(Dlt, Errors) {
  auto three = unit_square(0, 0);
  three.pop_back();
  EXPECT_THROW(fit_homography_dlt(three), InsufficientDataError);
  std::vector<PointPair> line;
  for (int i = 0; i < 6; ++i) line.push_back({{double(i), 2.0 * i}, {double(i), 2.0 * i + 1}});
  EXPECT_THROW(fit_homography_dlt(line), SingularConfigurationError);
  std::vector<PointPair> same(5, PointPair{{1, 1}, {2, 2}});
  EXPECT_THROW(fit_homography_dlt(same), SingularConfigurationError);
}

TEST(Homography, NormalizationAndInverse) {
  Eigen::Matrix3d m;
  m << 2, 0, 4, 0, 2, 6, 0, 0, 2;
  const Homography h(m);
  EXPECT_DOUBLE_EQ(h(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(h(0, 2), 2.0);
  const auto p = h.inverse().apply(h.apply({3, 4}));
  EXPECT_NEAR(p.x, 3, 1e-12);
  EXPECT_NEAR(p.y, 4, 1e-12);
  EXPECT_THROW(Homography(Eigen::Matrix3d::Zero()), DegenerateHomographyError);
}

TEST(TransferError, SymmetricMean) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = 3;
  // Forward error 1 (dst off by 1 in x), backward error 1.
  EXPECT_NEAR(symmetric_transfer_error(Homography(m), {{0, 0}, {4, 0}}), 1.0, 1e-12);
  EXPECT_NEAR(symmetric_transfer_error(Homography(m), {{0, 0}, {3, 0}}), 0.0, 1e-12);
}

TEST(Ransac, ExactCorrespondences) {
  auto s = tvtest::ransac_scenario(3, 100, 0, 0.0);
  const auto est = ransac_homography(s.pairs);
  EXPECT_TRUE(est.accepted);
  EXPECT_DOUBLE_EQ(est.inlier_ratio, 1.0);
  EXPECT_LT(tvtest::normalized_difference(est.h.matrix(), s.truth), 1e-6);
}

TEST(Ransac, NoisyInliersWithOutliers) {
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    auto s = tvtest::ransac_scenario(seed, 60, 40, 0.5);
    RansacParams p;
    p.seed = seed;
    const auto est = ransac_homography(s.pairs, p);
    ASSERT_TRUE(est.accepted) << "seed " << seed;
    EXPECT_LT(tvtest::max_error_on_true_inliers(est.h, s), 1.0) << "seed " << seed;
    EXPECT_GE(est.inlier_ratio, 0.55) << "seed " << seed;
    EXPECT_LE(est.inlier_ratio, 0.65) << "seed " << seed;
  }
}

TEST(Ransac, LowInlierFractionRejected) {
  auto s = tvtest::ransac_scenario(9, 20, 80, 0.5);
  const auto est = ransac_homography(s.pairs);
  EXPECT_FALSE(est.accepted);
  EXPECT_LE(est.inlier_ratio, 0.25);
}

TEST(Ransac, DeterministicForSeed) {
  auto s = tvtest::ransac_scenario(4, 60, 40, 0.5);
  const auto a = ransac_homography(s.pairs);
  const auto b = ransac_homography(s.pairs);
  EXPECT_EQ(a.inlier_indices, b.inlier_indices);
  EXPECT_EQ(a.h.matrix(), b.h.matrix());
}

TEST(Ransac, Errors) {
  auto three = unit_square(0, 0);
  three.pop_back();
  EXPECT_THROW(ransac_homography(three), InsufficientDataError);
  RansacParams bad;
  bad.iterations = 0;
  EXPECT_THROW(ransac_homography(unit_square(0, 0), bad), InvalidArgument);
}

TEST(Tilt, Identity) { EXPECT_DOUBLE_EQ(tilt_angle(Homography::identity()).theta_deg, 0.0); }

TEST(Tilt, PureZoom) {
  const auto t = tilt_angle(block(2, 0, 0, 2));
  EXPECT_DOUBLE_EQ(t.theta_deg, 0.0);
  EXPECT_DOUBLE_EQ(t.r_norm(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.r_norm(1, 0), 0.0);
}

TEST(Tilt, FiveDegrees) {
  const double a = 5.0 * std::numbers::pi / 180.0;
  EXPECT_NEAR(tilt_angle(block(std::cos(a), -std::sin(a), std::sin(a), std::cos(a))).theta_deg, 5.0, 1e-12);
}

TEST(Tilt, ScaleInvariantOverRange) {
  for (int deg = -179; deg <= 180; ++deg) {
    const double a = deg * std::numbers::pi / 180.0;
    for (double s : {0.5, 1.0, 3.0}) {
      const auto t = tilt_angle(block(s * std::cos(a), -s * std::sin(a), s * std::sin(a), s * std::cos(a)));
      EXPECT_NEAR(t.theta_deg, deg, 1e-9);
    }
  }
}

TEST(Tilt, DegenerateFirstColumn) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = 0;
  m(1, 0) = 0;
  m(0, 1) = 1;
  m(1, 1) = 0;
  m(1, 2) = 1;
  m(2, 0) = 1;  // keeps det != 0
  EXPECT_THROW(tilt_angle(Homography(m)), DegenerateHomographyError);
}

TEST(SameView, Boundaries) {
  EXPECT_TRUE(same_view(0.0));
  EXPECT_TRUE(same_view(10.0, 10));
  EXPECT_FALSE(same_view(10.1, 10));
  EXPECT_TRUE(same_view(-10.0, 10));
  EXPECT_FALSE(same_view(-10.1, 10));
}

TEST(PairwiseJson, RoundTrip) {
  const PairwiseResult r{"C001", 100, 1900, true, 0.625, -3.25};
  const auto back = pairwise_from_json_line(to_json_line(r));
  EXPECT_EQ(back.cam_id, r.cam_id);
  EXPECT_EQ(back.ts_i, r.ts_i);
  EXPECT_EQ(back.ts_j, r.ts_j);
  EXPECT_EQ(back.accepted, r.accepted);
  EXPECT_DOUBLE_EQ(back.inlier_ratio, r.inlier_ratio);
  EXPECT_DOUBLE_EQ(back.theta_deg, r.theta_deg);
  EXPECT_THROW(pairwise_from_json_line("{not json"), ParseError);
}
