#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trafficview/common.hpp"

namespace trafficview::geometry {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Source point in frame i, destination point in frame j.
struct PointPair {
  Point2 src;
  Point2 dst;
};

/// Projective map x' ~ H x. Stored with H(2,2) = 1 when |H(2,2)| > 1e-9,
/// otherwise scaled to unit Frobenius norm.
class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}
  /// Normalizes `h`; throws DegenerateHomographyError when |det| <= 1e-12
  /// after normalization.
  explicit Homography(const Eigen::Matrix3d& h);

  static Homography identity() { return Homography(); }

  const Eigen::Matrix3d& matrix() const noexcept { return h_; }
  double operator()(int r, int c) const { return h_(r, c); }

  /// Upper-left 2x2 block.
  Eigen::Matrix2d affine_block() const { return h_.topLeftCorner<2, 2>(); }
  Eigen::Vector2d translation() const { return {h_(0, 2), h_(1, 2)}; }

  Point2 apply(const Point2& p) const;
  Homography inverse() const;

 private:
  Eigen::Matrix3d h_;
};

/// Normalized DLT: Hartley-normalizes both point sets (centroid at origin,
/// mean distance sqrt(2)), solves the 2n x 9 system by SVD, denormalizes.
/// Throws InsufficientDataError for fewer than 4 pairs and
/// SingularConfigurationError for collinear or coincident source points.
Homography fit_homography_dlt(std::span<const PointPair> pairs);

/// Mean of the forward error d(x', Hx) and backward error d(x, H^-1 x').
double symmetric_transfer_error(const Homography& h, const PointPair& pair);

struct RansacParams {
  int iterations = 1000;
  double inlier_threshold_px = 2.0;
  double min_inlier_ratio = 0.25;
  std::uint64_t seed = 0x5eedULL;
};

struct HomographyEstimate {
  Homography h;
  std::vector<int> inlier_indices;  // into the input pair list, ascending
  double inlier_ratio = 0.0;        // |inlier_indices| / |pairs|
  int iterations_used = 0;
  int best_consensus = 0;  // largest minimal-sample consensus before the refit
  bool accepted = false;   // inlier_ratio > min_inlier_ratio and the refit succeeded
};

/// RANSAC over 4-point minimal samples, then a DLT refit on every inlier of
/// the best consensus set. Inliers have symmetric transfer error <= threshold.
/// Throws InsufficientDataError for fewer than 4 pairs; low support is
/// reported through `accepted == false`, not an exception.
HomographyEstimate ransac_homography(std::span<const PointPair> pairs, const RansacParams& params = {});

struct TiltResult {
  double theta_deg = 0.0;  // in (-180, 180]
  Eigen::Matrix2d r_norm = Eigen::Matrix2d::Identity();
};

/// theta = atan2(r21, r11) after dividing the affine block by the norm of its
/// first column. Throws DegenerateHomographyError when that norm is ~0.
TiltResult tilt_angle(const Homography& h);

/// |theta| <= delta, inclusive.
bool same_view(double theta_deg, double delta_deg = 10.0);

/// One pairwise comparison between two frames of the same camera.
struct PairwiseResult {
  std::string cam_id;
  Timestamp ts_i = 0;
  Timestamp ts_j = 0;
  bool accepted = false;
  double inlier_ratio = 0.0;
  double theta_deg = 0.0;
};

std::string to_json_line(const PairwiseResult& r);
PairwiseResult pairwise_from_json_line(const std::string& line);

}  // namespace trafficview::geometry
