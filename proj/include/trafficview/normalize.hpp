#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trafficview/corpus.hpp"
#include "trafficview/geometry.hpp"
#include "trafficview/keypoint.hpp"
#include "trafficview/viewgraph.hpp"

namespace trafficview::normalize {

struct NormalizeParams {
  keypoint::DetectorParams detector;
  double lowe_ratio = 0.75;
  geometry::RansacParams ransac;  // ransac.seed is ignored; per-pair seeds are derived
  double delta_deg = 10.0;
  viewgraph::PairingMode pairing = viewgraph::PairingMode::automatic;
  std::uint64_t seed = 0;
  /// When set, features are read from / written to `<cache_dir>/<cam_id>/<ts>.bin`.
  std::optional<std::string> keypoint_cache_dir;
};

/// Seed for one frame pair; depends only on the ids and the run seed.
std::uint64_t pair_seed(std::string_view cam_id, Timestamp ts_i, Timestamp ts_j, std::uint64_t run_seed);

/// Keypoint matching, ratio test, RANSAC and tilt extraction for one pair.
geometry::PairwiseResult compare_frames(const std::string& cam_id, Timestamp ts_i, const keypoint::Features& fi,
                                        Timestamp ts_j, const keypoint::Features& fj,
                                        const NormalizeParams& params);

struct CameraNormalization {
  std::string cam_id;
  std::vector<Timestamp> frames;
  std::vector<viewgraph::ViewCluster> clusters;
  int dominant_vp = 0;
  double stability = 0.0;
  std::vector<geometry::PairwiseResult> pairwise;
};

/// Full viewpoint normalization of one camera's frames. Throws
/// InvalidArgument when `frames` is empty or mixes cameras.
CameraNormalization normalize_camera(const std::vector<corpus::Frame>& frames, const NormalizeParams& params);

}  // namespace trafficview::normalize
