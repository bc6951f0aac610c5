#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "trafficview/image.hpp"

namespace trafficview::keypoint {

struct Keypoint {
  float x = 0.f;  // column, subpixel
  float y = 0.f;  // row, subpixel
  float scale = 0.f;        // Gaussian sigma in input-image pixels
  float orientation = 0.f;  // degrees in [0, 360)
  float response = 0.f;     // |DoG| at the refined extremum
  int octave = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

inline constexpr std::size_t kDescriptorSize = 128;

/// SIFT-style gradient histogram, L2-normalized, clamped at 0.2, renormalized.
using Descriptor = std::array<float, kDescriptorSize>;

struct DetectorParams {
  int max_count = 2000;
  int octaves = 4;
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double assumed_blur = 0.5;
  double contrast_threshold = 0.03;  // on intensities normalized to [0, 1]
  double edge_ratio = 10.0;
  int border = 8;
};

struct Features {
  std::vector<Keypoint> keypoints;      // descending response
  std::vector<Descriptor> descriptors;  // descriptors[i] belongs to keypoints[i]
  std::size_t raw_extrema = 0;          // DoG extrema before refinement and the cap
};

/// Scale-space extrema detection with a single dominant orientation per
/// keypoint. A constant image yields no features.
Features detect_keypoints(const GrayImage& image, const DetectorParams& params = {});

struct Match {
  int index_a = 0;
  int index_b = 0;
  float distance = 0.f;

  friend bool operator==(const Match&, const Match&) = default;
};

struct MatchSet {
  std::string frame_a;
  std::string frame_b;
  std::vector<Match> pairs;  // ordered by index_a
};

/// Brute-force nearest neighbour with Lowe's ratio test: keeps (i, j) when j
/// is i's nearest neighbour in `b` and d(i, j) < ratio * d(i, second nearest).
/// Fewer than two descriptors in `b` yields an empty set.
MatchSet match_descriptors(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b,
                           double ratio = 0.75);

/// Binary keypoint cache (`kp/<cam_id>/<ts>.bin`). The header carries a magic
/// and a format version; load returns false on any mismatch.
void save_features(const Features& features, const std::string& path);
bool load_features(const std::string& path, Features& out);

}  // namespace trafficview::keypoint
