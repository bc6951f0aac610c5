#include "trafficview/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

#include "trafficview/error.hpp"

namespace trafficview::geometry {

Homography::Homography(const Eigen::Matrix3d& h) {
  if (!h.allFinite()) throw DegenerateHomographyError("homography has non-finite entries");
  if (std::abs(h(2, 2)) > 1e-9) {
    h_ = h / h(2, 2);
  } else {
    const double n = h.norm();
    if (n == 0.0) throw DegenerateHomographyError("zero homography");
    h_ = h / n;
  }
  if (std::abs(h_.determinant()) <= 1e-12) throw DegenerateHomographyError("homography is singular");
}

Point2 Homography::apply(const Point2& p) const {
  const double w = h_(2, 0) * p.x + h_(2, 1) * p.y + h_(2, 2);
  const double x = h_(0, 0) * p.x + h_(0, 1) * p.y + h_(0, 2);
  const double y = h_(1, 0) * p.x + h_(1, 1) * p.y + h_(1, 2);
  if (std::abs(w) < 1e-15) {
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  return {x / w, y / w};
}

Homography Homography::inverse() const { return Homography(h_.inverse()); }

namespace {

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
Eigen::Matrix3d hartley(std::span<const PointPair> pairs, bool use_src) {
  double cx = 0, cy = 0;
  for (const auto& p : pairs) {
    const Point2& q = use_src ? p.src : p.dst;
    cx += q.x;
    cy += q.y;
  }
  cx /= static_cast<double>(pairs.size());
  cy /= static_cast<double>(pairs.size());
  double mean = 0;
  for (const auto& p : pairs) {
    const Point2& q = use_src ? p.src : p.dst;
    mean += std::hypot(q.x - cx, q.y - cy);
  }
  mean /= static_cast<double>(pairs.size());
  if (mean < 1e-12) throw SingularConfigurationError("all points coincide");
  const double s = std::numbers::sqrt2 / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

double triangle_area2(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Any three of four points (nearly) collinear, relative to the spread.
bool degenerate_quad(const Point2* pts) {
  double spread = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) spread = std::max(spread, std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
  if (spread < 1e-9) return true;
  const double eps = 1e-6 * spread * spread;
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& t : kTriples) {
    if (std::abs(triangle_area2(pts[t[0]], pts[t[1]], pts[t[2]])) < eps) return true;
  }
  return false;
}

// Rank of the centered 2-D point cloud, with a relative tolerance.
bool all_collinear(std::span<const PointPair> pairs, bool use_src) {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pairs) {
    const Point2& q = use_src ? p.src : p.dst;
    mean += Eigen::Vector2d(q.x, q.y);
  }
  mean /= static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    const Point2& q = use_src ? p.src : p.dst;
    Eigen::Vector2d d = Eigen::Vector2d(q.x, q.y) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double hi = es.eigenvalues()(1);
  const double lo = es.eigenvalues()(0);
  return hi <= 0 || lo <= 1e-12 * hi;
}

// Exact 4-point solve with h33 = 1 in normalized coordinates.
bool solve_minimal(const PointPair* sample, Eigen::Matrix3d& out) {
  Point2 src[4], dst[4];
  for (int i = 0; i < 4; ++i) {
    src[i] = sample[i].src;
    dst[i] = sample[i].dst;
  }
  if (degenerate_quad(src) || degenerate_quad(dst)) return false;
  const std::span<const PointPair> s(sample, 4);
  const Eigen::Matrix3d ts = hartley(s, true);
  const Eigen::Matrix3d td = hartley(s, false);
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = ts(0, 0) * src[i].x + ts(0, 2);
    const double y = ts(1, 1) * src[i].y + ts(1, 2);
    const double u = td(0, 0) * dst[i].x + td(0, 2);
    const double v = td(1, 1) * dst[i].y + td(1, 2);
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (std::abs(lu.determinant()) < 1e-12) return false;
  Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  if (!h.allFinite()) return false;
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  out = td.inverse() * hn * ts;
  if (!out.allFinite() || std::abs(out.determinant()) < 1e-12 * std::pow(out.norm(), 3)) return false;
  return true;
}

double error_with(const Eigen::Matrix3d& h, const Eigen::Matrix3d& hinv, const PointPair& p) {
  auto project = [](const Eigen::Matrix3d& m, const Point2& q, Point2& r) {
    const double w = m(2, 0) * q.x + m(2, 1) * q.y + m(2, 2);
    if (std::abs(w) < 1e-15) return false;
    r.x = (m(0, 0) * q.x + m(0, 1) * q.y + m(0, 2)) / w;
    r.y = (m(1, 0) * q.x + m(1, 1) * q.y + m(1, 2)) / w;
    return true;
  };
  Point2 f, b;
  if (!project(h, p.src, f) || !project(hinv, p.dst, b)) return std::numeric_limits<double>::infinity();
  const double fx = f.x - p.dst.x, fy = f.y - p.dst.y;
  const double bx = b.x - p.src.x, by = b.y - p.src.y;
  return 0.5 * (std::sqrt(fx * fx + fy * fy) + std::sqrt(bx * bx + by * by));
}

// Same test as error_with(...) <= threshold, with a cheap reject on the
// forward error alone (the mean can only pass if forward <= 2 * threshold).
int count_inliers(const Eigen::Matrix3d& h, const Eigen::Matrix3d& hinv, std::span<const PointPair> pairs,
                  double threshold) {
  const double limit = 4.0 * threshold * threshold;
  int count = 0;
  for (const auto& p : pairs) {
    const double w = h(2, 0) * p.src.x + h(2, 1) * p.src.y + h(2, 2);
    if (std::abs(w) < 1e-15) continue;
    const double fx = (h(0, 0) * p.src.x + h(0, 1) * p.src.y + h(0, 2)) / w - p.dst.x;
    const double fy = (h(1, 0) * p.src.x + h(1, 1) * p.src.y + h(1, 2)) / w - p.dst.y;
    if (fx * fx + fy * fy > limit) continue;
    count += error_with(h, hinv, p) <= threshold;
  }
  return count;
}

std::vector<int> inliers_of(const Eigen::Matrix3d& h, std::span<const PointPair> pairs, double threshold) {
  std::vector<int> out;
  const Eigen::Matrix3d hinv = h.inverse();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (error_with(h, hinv, pairs[i]) <= threshold) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

Homography fit_homography_dlt(std::span<const PointPair> pairs) {
  if (pairs.size() < 4) throw InsufficientDataError("homography needs at least 4 correspondences");
  if (all_collinear(pairs, true) || all_collinear(pairs, false)) {
    throw SingularConfigurationError("correspondences are collinear");
  }
  if (pairs.size() == 4) {
    Point2 src[4], dst[4];
    for (int i = 0; i < 4; ++i) {
      src[i] = pairs[i].src;
      dst[i] = pairs[i].dst;
    }
    if (degenerate_quad(src) || degenerate_quad(dst)) {
      throw SingularConfigurationError("three of the four points are collinear");
    }
  }
  const Eigen::Matrix3d ts = hartley(pairs, true);
  const Eigen::Matrix3d td = hartley(pairs, false);
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    const double x = ts(0, 0) * p.src.x + ts(0, 2);
    const double y = ts(1, 1) * p.src.y + ts(1, 2);
    const double u = td(0, 0) * p.dst.x + td(0, 2);
    const double v = td(1, 1) * p.dst.y + td(1, 2);
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A second (near-)null direction means the solution is not unique.
  if (sv.size() >= 9 && sv(7) < 1e-10 * sv(0)) throw SingularConfigurationError("degenerate correspondence set");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  try {
    return Homography(td.inverse() * hn * ts);
  } catch (const DegenerateHomographyError& e) {
    throw SingularConfigurationError(std::string("degenerate fit: ") + e.what());
  }
}

double symmetric_transfer_error(const Homography& h, const PointPair& pair) {
  return error_with(h.matrix(), h.matrix().inverse(), pair);
}

HomographyEstimate ransac_homography(std::span<const PointPair> pairs, const RansacParams& params) {
  if (pairs.size() < 4) throw InsufficientDataError("RANSAC needs at least 4 correspondences");
  if (params.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (!(params.inlier_threshold_px > 0)) throw InvalidArgument("inlier threshold must be positive");
  if (!(params.min_inlier_ratio > 0 && params.min_inlier_ratio < 1)) {
    throw InvalidArgument("min_inlier_ratio must lie in (0, 1)");
  }

  const int n = static_cast<int>(pairs.size());
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  HomographyEstimate est;
  est.iterations_used = params.iterations;
  Eigen::Matrix3d best_model = Eigen::Matrix3d::Identity();
  int best_count = -1;
  std::array<PointPair, 4> sample;
  for (int it = 0; it < params.iterations; ++it) {
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = true;
        for (int m = 0; m < k; ++m) fresh = fresh && idx[m] != idx[k];
      } while (!fresh);
      sample[k] = pairs[idx[k]];
    }
    Eigen::Matrix3d model;
    if (!solve_minimal(sample.data(), model)) continue;
    const Eigen::Matrix3d inv = model.inverse();
    const int count = count_inliers(model, inv, pairs, params.inlier_threshold_px);
    if (count > best_count) {
      best_count = count;
      best_model = model;
    }
  }
  est.best_consensus = std::max(best_count, 0);
  if (best_count < 4) {
    est.inlier_ratio = static_cast<double>(est.best_consensus) / n;
    return est;
  }

  // Refit on the consensus set; repeat while the support grows.
  std::vector<int> inliers = inliers_of(best_model, pairs, params.inlier_threshold_px);
  Eigen::Matrix3d model = best_model;
  for (int round = 0; round < 5; ++round) {
    std::vector<PointPair> subset;
    subset.reserve(inliers.size());
    for (int i : inliers) subset.push_back(pairs[i]);
    Eigen::Matrix3d refit;
    try {
      refit = fit_homography_dlt(subset).matrix();
    } catch (const Error&) {
      break;
    }
    auto refit_inliers = inliers_of(refit, pairs, params.inlier_threshold_px);
    if (refit_inliers.size() < inliers.size()) break;
    const bool grew = refit_inliers.size() > inliers.size();
    model = refit;
    inliers = std::move(refit_inliers);
    if (!grew) break;
  }

  try {
    est.h = Homography(model);
  } catch (const DegenerateHomographyError&) {
    est.inlier_ratio = static_cast<double>(est.best_consensus) / n;
    return est;
  }
  est.inlier_indices = std::move(inliers);
  est.inlier_ratio = static_cast<double>(est.inlier_indices.size()) / n;
  est.accepted = est.inlier_ratio > params.min_inlier_ratio;
  return est;
}

TiltResult tilt_angle(const Homography& h) {
  const double h11 = h(0, 0);
  const double h21 = h(1, 0);
  const double norm = std::sqrt(h11 * h11 + h21 * h21);
  if (!(norm > 1e-12)) throw DegenerateHomographyError("first column of the affine block is zero");
  TiltResult r;
  r.r_norm = h.affine_block() / norm;
  double theta = std::atan2(r.r_norm(1, 0), r.r_norm(0, 0)) * 180.0 / std::numbers::pi;
  if (theta <= -180.0) theta += 360.0;
  r.theta_deg = theta;
  return r;
}

bool same_view(double theta_deg, double delta_deg) {
  if (!(delta_deg > 0)) throw InvalidArgument("delta must be positive");
  return std::abs(theta_deg) <= delta_deg;
}

std::string to_json_line(const PairwiseResult& r) {
  nlohmann::ordered_json j;
  j["cam_id"] = r.cam_id;
  j["ts_i"] = r.ts_i;
  j["ts_j"] = r.ts_j;
  j["accepted"] = r.accepted;
  j["inlier_ratio"] = r.inlier_ratio;
  j["theta_deg"] = r.theta_deg;
  return j.dump();
}

PairwiseResult pairwise_from_json_line(const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    PairwiseResult r;
    r.cam_id = j.at("cam_id").get<std::string>();
    r.ts_i = j.at("ts_i").get<Timestamp>();
    r.ts_j = j.at("ts_j").get<Timestamp>();
    r.accepted = j.at("accepted").get<bool>();
    r.inlier_ratio = j.at("inlier_ratio").get<double>();
    r.theta_deg = j.at("theta_deg").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad pairwise record: ") + e.what());
  }
}

}  // namespace trafficview::geometry
