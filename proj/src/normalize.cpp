#include "trafficview/normalize.hpp"

#include <filesystem>

#include "trafficview/error.hpp"

namespace trafficview::normalize {

std::uint64_t pair_seed(std::string_view cam_id, Timestamp ts_i, Timestamp ts_j, std::uint64_t run_seed) {
  std::uint64_t h = fnv1a64(cam_id);
  h = mix64(h ^ static_cast<std::uint64_t>(ts_i));
  h = mix64(h ^ static_cast<std::uint64_t>(ts_j));
  return mix64(h ^ run_seed);
}

geometry::PairwiseResult compare_frames(const std::string& cam_id, Timestamp ts_i, const keypoint::Features& fi,
                                        Timestamp ts_j, const keypoint::Features& fj,
                                        const NormalizeParams& params) {
  geometry::PairwiseResult r{cam_id, ts_i, ts_j, false, 0.0, 0.0};
  const auto matches = keypoint::match_descriptors(fi.descriptors, fj.descriptors, params.lowe_ratio);
  if (matches.pairs.size() < 4) return r;

  std::vector<geometry::PointPair> pairs;
  pairs.reserve(matches.pairs.size());
  for (const auto& m : matches.pairs) {
    const auto& a = fi.keypoints[m.index_a];
    const auto& b = fj.keypoints[m.index_b];
    pairs.push_back({{a.x, a.y}, {b.x, b.y}});
  }
  auto ransac = params.ransac;
  ransac.seed = pair_seed(cam_id, ts_i, ts_j, params.seed);
  const auto est = geometry::ransac_homography(pairs, ransac);
  r.inlier_ratio = est.inlier_ratio;
  if (!est.accepted) return r;
  try {
    r.theta_deg = geometry::tilt_angle(est.h).theta_deg;
    r.accepted = true;
  } catch (const DegenerateHomographyError&) {
    r.accepted = false;
  }
  return r;
}

namespace {

keypoint::Features features_for(const corpus::Frame& f, const NormalizeParams& params) {
  if (params.keypoint_cache_dir) {
    const auto path = (std::filesystem::path(*params.keypoint_cache_dir) / f.cam_id /
                       (std::to_string(f.timestamp) + ".bin"))
                          .string();
    keypoint::Features cached;
    if (keypoint::load_features(path, cached)) return cached;
    auto fresh = keypoint::detect_keypoints(f.pixels, params.detector);
    keypoint::save_features(fresh, path);
    return fresh;
  }
  return keypoint::detect_keypoints(f.pixels, params.detector);
}

}  // namespace

CameraNormalization normalize_camera(const std::vector<corpus::Frame>& frames, const NormalizeParams& params) {
  if (frames.empty()) throw InvalidArgument("no frames to normalize");
  CameraNormalization out;
  out.cam_id = frames.front().cam_id;
  for (const auto& f : frames) {
    if (f.cam_id != out.cam_id) throw InvalidArgument("frames from several cameras passed to normalize_camera");
  }

  std::vector<const corpus::Frame*> ordered;
  for (const auto& f : frames) ordered.push_back(&f);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->timestamp < b->timestamp; });

  std::vector<keypoint::Features> features;
  features.reserve(ordered.size());
  for (const auto* f : ordered) {
    out.frames.push_back(f->timestamp);
    features.push_back(features_for(*f, params));
  }

  auto compare = [&](int i, int j) {
    return compare_frames(out.cam_id, out.frames[i], features[i], out.frames[j], features[j], params);
  };
  auto outcome = viewgraph::cluster_frames(out.cam_id, out.frames, compare, params.delta_deg, params.pairing);
  out.clusters = std::move(outcome.clusters);
  out.pairwise = std::move(outcome.pairwise);
  out.dominant_vp = viewgraph::dominant_cluster(out.clusters);
  out.stability = viewgraph::stability_score(out.clusters, out.frames.size());
  return out;
}

}  // namespace trafficview::normalize
