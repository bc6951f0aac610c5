#pragma once

// Test-side generators with known ground truth, shared by the unit tests and
// the acceptance gate.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "trafficview/geometry.hpp"

namespace tvtest {

inline trafficview::geometry::Point2 project(const Eigen::Matrix3d& h, trafficview::geometry::Point2 p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x, p.y, 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

/// Rotation + scale + translation + a small perspective term.
inline Eigen::Matrix3d well_conditioned_h(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng) * 0.35, s = 1.0 + 0.2 * u(rng);
  Eigen::Matrix3d h;
  h << s * std::cos(a), -s * std::sin(a), 20 * u(rng),
       s * std::sin(a), s * std::cos(a), 20 * u(rng),
       1e-4 * u(rng), 1e-4 * u(rng), 1.0;
  return h;
}

struct LabeledPairs {
  Eigen::Matrix3d truth;
  std::vector<trafficview::geometry::PointPair> pairs;
  std::vector<bool> inlier;
};

/// `inliers` exact projections through a random H plus Gaussian noise on the
/// destination, then `outliers` pairs drawn uniformly over a 640x480 frame.
/// The pairs are shuffled.
inline LabeledPairs ransac_scenario(std::uint64_t seed, int inliers, int outliers, double sigma) {
  std::mt19937_64 rng(seed);
  LabeledPairs out;
  out.truth = well_conditioned_h(rng);
  std::uniform_real_distribution<double> ux(0, 640), uy(0, 480);
  std::normal_distribution<double> noise(0.0, sigma);
  for (int i = 0; i < inliers; ++i) {
    trafficview::geometry::Point2 p{ux(rng), uy(rng)};
    auto q = project(out.truth, p);
    if (sigma > 0) {
      q.x += noise(rng);
      q.y += noise(rng);
    }
    out.pairs.push_back({p, q});
    out.inlier.push_back(true);
  }
  for (int i = 0; i < outliers; ++i) {
    out.pairs.push_back({{ux(rng), uy(rng)}, {ux(rng), uy(rng)}});
    out.inlier.push_back(false);
  }
  std::vector<std::size_t> order(out.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  LabeledPairs shuffled{out.truth, {}, {}};
  for (auto i : order) {
    shuffled.pairs.push_back(out.pairs[i]);
    shuffled.inlier.push_back(out.inlier[i]);
  }
  return shuffled;
}

/// Noise-free symmetric transfer error of `h` on the true inlier positions,
/// i.e. against the exact projections of the ground-truth map.
inline double max_error_on_true_inliers(const trafficview::geometry::Homography& h, const LabeledPairs& s) {
  double worst = 0;
  const Eigen::Matrix3d hinv = h.matrix().inverse();
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    if (!s.inlier[i]) continue;
    const auto src = s.pairs[i].src;
    const auto dst = project(s.truth, src);
    const auto f = project(h.matrix(), src);
    const auto b = project(hinv, dst);
    const double e = 0.5 * (std::hypot(f.x - dst.x, f.y - dst.y) + std::hypot(b.x - src.x, b.y - src.y));
    worst = std::max(worst, e);
  }
  return worst;
}

/// Element-wise error after scaling both matrices to unit Frobenius norm with
/// a consistent sign.
inline double normalized_difference(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  Eigen::Matrix3d na = a / a.norm(), nb = b / b.norm();
  if ((na.array() * nb.array()).sum() < 0) nb = -nb;
  return (na - nb).cwiseAbs().maxCoeff();
}

}  // namespace tvtest
