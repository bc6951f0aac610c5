#include "trafficview/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trafficview/error.hpp"

namespace trafficview::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dest, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dest = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

viewgraph::PairingMode parse_pairing(const std::string& s) {
  if (s == "auto") return viewgraph::PairingMode::automatic;
  if (s == "all_pairs") return viewgraph::PairingMode::all_pairs;
  if (s == "streaming") return viewgraph::PairingMode::streaming;
  throw ConfigError("pairing must be auto, all_pairs or streaming");
}

void apply_env(PipelineConfig& cfg) {
  if (const char* url = std::getenv("TRAFFICVIEW_ENDPOINT_URL"); url && *url) cfg.endpoint.url = url;
  if (const char* tok = std::getenv("TRAFFICVIEW_ENDPOINT_TOKEN"); tok && *tok) cfg.endpoint.token = tok;
}

}  // namespace

void PipelineConfig::validate() const {
  const auto& t = thresholds;
  if (t.ransac_iterations < 1) throw ConfigError("thresholds.ransac_iterations must be >= 1");
  if (!(t.inlier_px > 0)) throw ConfigError("thresholds.inlier_px must be > 0");
  if (!(t.min_inlier_ratio >= 0 && t.min_inlier_ratio < 1)) throw ConfigError("thresholds.min_inlier_ratio must lie in [0, 1)");
  if (!(t.delta_deg > 0 && t.delta_deg <= 180)) throw ConfigError("thresholds.delta_deg must lie in (0, 180]");
  if (!(t.detection_score >= 0 && t.detection_score <= 1)) throw ConfigError("thresholds.detection_score must lie in [0, 1]");
  if (!(t.lowe_ratio > 0 && t.lowe_ratio < 1)) throw ConfigError("thresholds.lowe_ratio must lie in (0, 1)");
  if (t.max_keypoints < 1) throw ConfigError("thresholds.max_keypoints must be >= 1");
  if (t.exemplar_top_k < 1) throw ConfigError("thresholds.exemplar_top_k must be >= 1");
  if (t.top_changes_k < 1) throw ConfigError("thresholds.top_changes_k must be >= 1");
  if (t.sample_interval < 1) throw ConfigError("thresholds.sample_interval must be >= 1");
  if (calendar.peak_start_hour < 0 || calendar.peak_end_hour > 24 || calendar.peak_start_hour >= calendar.peak_end_hour) {
    throw ConfigError("calendar peak hours must satisfy 0 <= start < end <= 24");
  }
  if (!(endpoint.top_p >= 0.8 && endpoint.top_p <= 1.0)) throw ConfigError("endpoint.top_p must lie in [0.8, 1]");
  if (endpoint.n_best != 2 && endpoint.n_best != 3) throw ConfigError("endpoint.n_best must be 2 or 3");
  if (endpoint.max_retries < 0) throw ConfigError("endpoint.max_retries must be >= 0");
  if (endpoint.sweep.empty()) throw ConfigError("endpoint.sweep is empty");
  for (double temp : endpoint.sweep) {
    if (!(temp >= 0.0 && temp <= 0.3)) throw ConfigError("endpoint.sweep temperatures must lie in [0, 0.3]");
  }
  if (!endpoint.mock.empty()) {
    static const std::set<std::string> kMocks{"faithful", "drift", "stubborn", "failing"};
    if (!kMocks.contains(endpoint.mock)) throw ConfigError("endpoint.mock must be faithful, drift, stubborn or failing");
  }
  for (const auto& [label, w] : windows) {
    if (w.start_day > w.end_day) throw ConfigError("window " + label + " ends before it starts");
  }
}

const aggregate::AnalysisWindow& PipelineConfig::window(const std::string& label) const {
  auto it = windows.find(label);
  if (it == windows.end()) throw ConfigError("unknown window '" + label + "'");
  return it->second;
}

PipelineConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config", {"paths", "thresholds", "windows", "calendar", "endpoint", "schema", "pairing"});

  PipelineConfig cfg;
  if (root.contains("paths")) {
    const auto& p = root["paths"];
    check_keys(p, "paths", {"frames", "registry", "packets", "detections", "exemplars", "roi", "checklist"});
    read(p, "frames", cfg.paths.frames, "paths");
    read(p, "registry", cfg.paths.registry, "paths");
    read(p, "packets", cfg.paths.packets, "paths");
    read(p, "detections", cfg.paths.detections, "paths");
    read(p, "exemplars", cfg.paths.exemplars, "paths");
    read(p, "roi", cfg.paths.roi, "paths");
    read(p, "checklist", cfg.paths.checklist, "paths");
  }
  for (std::string* s : {&cfg.paths.frames, &cfg.paths.registry, &cfg.paths.packets, &cfg.paths.detections,
                         &cfg.paths.exemplars, &cfg.paths.roi, &cfg.paths.checklist}) {
    *s = resolve(*s, base_dir);
  }

  if (root.contains("thresholds")) {
    const auto& t = root["thresholds"];
    check_keys(t, "thresholds",
               {"ransac_iterations", "inlier_px", "min_inlier_ratio", "delta_deg", "detection_score", "lowe_ratio",
                "max_keypoints", "exemplar_top_k", "top_changes_k", "sample_interval"});
    auto& d = cfg.thresholds;
    read(t, "ransac_iterations", d.ransac_iterations, "thresholds");
    read(t, "inlier_px", d.inlier_px, "thresholds");
    read(t, "min_inlier_ratio", d.min_inlier_ratio, "thresholds");
    read(t, "delta_deg", d.delta_deg, "thresholds");
    read(t, "detection_score", d.detection_score, "thresholds");
    read(t, "lowe_ratio", d.lowe_ratio, "thresholds");
    read(t, "max_keypoints", d.max_keypoints, "thresholds");
    read(t, "exemplar_top_k", d.exemplar_top_k, "thresholds");
    read(t, "top_changes_k", d.top_changes_k, "thresholds");
    read(t, "sample_interval", d.sample_interval, "thresholds");
  }

  if (root.contains("calendar")) {
    const auto& c = root["calendar"];
    check_keys(c, "calendar", {"utc_offset_seconds", "peak_start_hour", "peak_end_hour"});
    read(c, "utc_offset_seconds", cfg.calendar.utc_offset_seconds, "calendar");
    read(c, "peak_start_hour", cfg.calendar.peak_start_hour, "calendar");
    read(c, "peak_end_hour", cfg.calendar.peak_end_hour, "calendar");
  }

  if (root.contains("windows")) {
    const auto& ws = root["windows"];
    if (!ws.is_object()) throw ConfigError("windows must be an object keyed by label");
    for (const auto& [label, w] : ws.items()) {
      const std::string where = "windows." + label;
      check_keys(w, where, {"start", "end", "days", "period"});
      std::string start, end, days = "all", period = "all";
      read(w, "start", start, where);
      read(w, "end", end, where);
      read(w, "days", days, where);
      read(w, "period", period, where);
      if (start.empty() || end.empty()) throw ConfigError(where + " needs start and end dates");
      try {
        cfg.windows[label] = aggregate::make_window(label, start, end, aggregate::parse_day_filter(days),
                                                    aggregate::parse_period_filter(period));
      } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }

  if (root.contains("endpoint")) {
    const auto& e = root["endpoint"];
    check_keys(e, "endpoint", {"url", "token", "mock", "top_p", "n_best", "max_retries", "sweep", "timeout_seconds"});
    read(e, "url", cfg.endpoint.url, "endpoint");
    read(e, "token", cfg.endpoint.token, "endpoint");
    read(e, "mock", cfg.endpoint.mock, "endpoint");
    read(e, "top_p", cfg.endpoint.top_p, "endpoint");
    read(e, "n_best", cfg.endpoint.n_best, "endpoint");
    read(e, "max_retries", cfg.endpoint.max_retries, "endpoint");
    read(e, "sweep", cfg.endpoint.sweep, "endpoint");
    read(e, "timeout_seconds", cfg.endpoint.timeout_seconds, "endpoint");
  }

  std::string schema = aggregate::to_string(cfg.schema);
  read(root, "schema", schema, "config");
  try {
    cfg.schema = aggregate::parse_schema(schema);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::string pairing = "auto";
  read(root, "pairing", pairing, "config");
  cfg.pairing = parse_pairing(pairing);

  apply_env(cfg);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::path(path).parent_path().string());
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  apply_env(cfg);
  cfg.validate();
  return cfg;
}

}  // namespace trafficview::config
