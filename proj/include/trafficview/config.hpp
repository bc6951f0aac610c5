#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trafficview/aggregate.hpp"
#include "trafficview/viewgraph.hpp"

namespace trafficview::config {

struct Paths {
  std::string frames = "frames";          // raw snapshots, <cam_id>/<ts>.png
  std::string registry = "registry.csv";
  std::string packets = "packets.csv";
  std::string detections = "detections.jsonl";
  std::string exemplars;  // optional JSON-lines library
  std::string roi;        // optional ROI table
  std::string checklist;  // optional expert checklist
};

struct Thresholds {
  int ransac_iterations = 1000;
  double inlier_px = 2.0;
  double min_inlier_ratio = 0.25;
  double delta_deg = 10.0;
  double detection_score = 0.35;
  double lowe_ratio = 0.75;
  int max_keypoints = 2000;
  int exemplar_top_k = 2;
  int top_changes_k = 5;
  std::int64_t sample_interval = 1800;
};

struct Endpoint {
  std::string url;
  std::string token;  // normally supplied through the environment
  std::string mock;   // faithful | drift | stubborn | failing; empty = use url
  double top_p = 0.9;
  int n_best = 2;
  int max_retries = 3;
  std::vector<double> sweep{0.2, 0.25, 0.3};
  int timeout_seconds = 60;
};

struct PipelineConfig {
  Paths paths;
  Thresholds thresholds;
  std::map<std::string, aggregate::AnalysisWindow> windows;
  aggregate::CalendarSettings calendar;
  Endpoint endpoint;
  aggregate::Schema schema = aggregate::Schema::zone;
  viewgraph::PairingMode pairing = viewgraph::PairingMode::automatic;

  /// Throws ConfigError naming the first out-of-range value.
  void validate() const;

  /// Throws ConfigError for unknown window labels.
  const aggregate::AnalysisWindow& window(const std::string& label) const;
};

/// Parses a JSON config. Unknown keys are rejected; relative paths are
/// resolved against the config file's directory. TRAFFICVIEW_ENDPOINT_URL
/// and TRAFFICVIEW_ENDPOINT_TOKEN override the endpoint settings.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& json_text, const std::string& base_dir = {});

/// Defaults plus environment overrides, for runs without --config.
PipelineConfig default_config();

}  // namespace trafficview::config
