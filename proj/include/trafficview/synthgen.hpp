#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "trafficview/corpus.hpp"
#include "trafficview/detection.hpp"
#include "trafficview/geometry.hpp"
#include "trafficview/image.hpp"

namespace trafficview::synthgen {

/// Similarity transform of the base texture about the frame centre.
struct Viewpoint {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

struct SceneSpec {
  std::string cam_id = "SYN";
  int rows = 240;
  int cols = 320;
  std::vector<Viewpoint> viewpoints{Viewpoint{}};
  std::vector<int> frames_per_viewpoint{1};
  std::uint64_t seed = 1;
  double blob_cell_px = 8.0;   // one blob per cell of the texture plane
  double noise_sigma = 2.0;    // per-frame sensor noise, intensity levels
  bool shuffle = true;         // interleave viewpoints over time
  Timestamp start_ts = 1706745600;  // 2024-02-01T00:00:00Z
  std::int64_t interval = 1800;

  /// Throws InvalidArgument when a viewpoint would leave renderable bounds
  /// or the per-viewpoint counts do not line up.
  void validate() const;
};

SceneSpec load_scene_spec(const std::string& path);

struct FrameLabel {
  int viewpoint = 0;
  geometry::Homography texture_to_frame;
};

struct RenderedScene {
  std::vector<corpus::Frame> frames;  // timestamp-ordered
  std::vector<FrameLabel> labels;     // labels[i] belongs to frames[i]
};

/// Texture-plane to frame map of a viewpoint.
geometry::Homography viewpoint_homography(const Viewpoint& vp, int rows, int cols);

/// Procedural texture intensity in [0, 255] at texture coordinates (u, v):
/// smooth oriented sinusoids plus one Gaussian blob per cell.
double texture_value(double u, double v, std::uint64_t seed, double cell_px = 8.0);

/// Renders one view with 2x2 supersampling; `noise_seed` drives sensor noise.
GrayImage render_view(const Viewpoint& vp, int rows, int cols, std::uint64_t seed, double cell_px,
                      double noise_sigma, std::uint64_t noise_seed);

RenderedScene render_scene(const SceneSpec& spec);

/// Ground-truth map from frame i to frame j of a rendered scene.
geometry::Homography true_pair_homography(const RenderedScene& scene, std::size_t i, std::size_t j);

struct PacketScenario {
  std::size_t cameras = 10;
  std::string pre_start = "2024-02-05";  // a Monday
  std::string post_start = "2025-02-03"; // a Monday
  int days = 14;
  int packets_per_day = 48;
  std::array<double, detection::kClassCount> rates{8.0, 2.0, 5.0, 1.0};  // mean count per packet
  std::array<double, detection::kClassCount> shift{0.0, 0.0, 0.0, 0.0};  // relative post change
  /// Draw pre counts as multiples of 10 and give each post packet the count
  /// of the same pre slot scaled by (1 + shift), so window totals and means
  /// shift exactly. Requires shifts that are multiples of 0.1.
  bool exact_shift = false;
  /// Every packet carries round(rate * (1 + shift)) with no sampling noise.
  bool constant_counts = false;
  std::vector<int> missing_post_days;  // day offsets dropped from the post window
  std::vector<int> missing_pre_days;
  std::uint64_t seed = 7;
  std::int64_t utc_offset_seconds = 0;
};

/// Tally kept while generating: key (cam_id, mode index, window 0=pre 1=post).
struct TrueAggregate {
  std::int64_t total = 0;
  std::size_t packets = 0;
};

struct GeneratedPackets {
  corpus::CameraRegistry registry;
  std::vector<detection::DetectionPacket> pre;
  std::vector<detection::DetectionPacket> post;
  std::map<std::tuple<std::string, int, int>, TrueAggregate> truth;
};

GeneratedPackets gen_packets(const PacketScenario& scenario);

}  // namespace trafficview::synthgen
