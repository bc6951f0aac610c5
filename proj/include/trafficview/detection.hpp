#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trafficview/common.hpp"

namespace trafficview::detection {

enum class RoadUser { car = 0, truck = 1, ped = 2, bike = 3 };

inline constexpr std::size_t kClassCount = 4;
inline constexpr std::array<RoadUser, kClassCount> kAllClasses{RoadUser::car, RoadUser::truck, RoadUser::ped,
                                                               RoadUser::bike};

std::string to_string(RoadUser c);
std::optional<RoadUser> parse_road_user(std::string_view s);

struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Detection {
  Box box;
  RoadUser cls = RoadUser::car;
  double score = 0.0;
};

/// Indexed by RoadUser.
using ClassCounts = std::array<std::int64_t, kClassCount>;

inline std::int64_t& count_of(ClassCounts& c, RoadUser u) { return c[static_cast<std::size_t>(u)]; }
inline std::int64_t count_of(const ClassCounts& c, RoadUser u) { return c[static_cast<std::size_t>(u)]; }

inline constexpr double kDefaultScoreThreshold = 0.35;

/// Detections with score >= threshold, order preserved.
std::vector<Detection> filter_detections(std::span<const Detection> dets, double threshold = kDefaultScoreThreshold);

ClassCounts count_by_class(std::span<const Detection> dets);

struct RoiCalibration {
  std::string cam_id;
  int vp_id = 0;
  double area_m2 = 1.0;
};

/// count / area_m2. Throws CalibrationError when area_m2 <= 0.
double density(std::int64_t count, const RoiCalibration& roi);

/// ROI areas keyed by (cam_id, vp_id); missing entries default to 1 m^2.
class RoiTable {
 public:
  void set(RoiCalibration roi);
  RoiCalibration lookup(const std::string& cam_id, int vp_id) const;
  std::size_t size() const noexcept { return table_.size(); }

  /// CSV `cam_id,vp_id,area_m2`.
  static RoiTable load_csv(const std::string& path);

 private:
  std::map<std::pair<std::string, int>, double> table_;
};

struct DetectionPacket {
  std::string cam_id;
  Timestamp t = 0;
  ClassCounts counts{};
  int vp_id = 0;

  friend bool operator==(const DetectionPacket&, const DetectionPacket&) = default;
  friend auto operator<=>(const DetectionPacket&, const DetectionPacket&) = default;
};

/// Throws InvalidArgument on negative counts or empty cam_id.
DetectionPacket make_packet(std::string cam_id, Timestamp t, const ClassCounts& counts, int vp_id);

inline constexpr const char* kPacketHeader = "cam_id,ts,n_car,n_truck,n_ped,n_bike,vp_id";

/// One CSV row in the packet store format.
std::string to_csv_row(const DetectionPacket& p);
DetectionPacket packet_from_csv_row(std::string_view row);

/// Append-only packet store. Appending a packet whose (cam_id, t) is already
/// stored is a no-op, so re-running an import leaves the file unchanged.
class PacketStore {
 public:
  explicit PacketStore(std::string path);

  const std::string& path() const noexcept { return path_; }
  std::vector<DetectionPacket> load() const;

  /// Returns how many packets were actually written.
  std::size_t append(std::span<const DetectionPacket> packets);

 private:
  std::string path_;
};

using FrameKey = std::pair<std::string, Timestamp>;

struct ImportResult {
  std::map<FrameKey, std::vector<Detection>> frames;
  std::size_t lines_read = 0;
  std::size_t skipped = 0;
  std::vector<std::string> problems;  // one message per skipped line
};

/// Reads detection JSON-lines `{cam_id, ts, x, y, w, h, class, score}`.
/// Malformed lines are skipped and reported; throws IoError when unreadable.
ImportResult import_detections(const std::string& path);

/// Scored validation detection for operating-point selection.
struct ScoredOutcome {
  double score = 0.0;
  bool true_positive = false;
};

struct ThresholdChoice {
  double threshold = 0.0;
  double f_beta = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Sweeps thresholds 0.05..0.95 in steps of 0.01 and returns the one that
/// maximizes F_beta (beta = 0.5 by default); ties go to the lower threshold.
ThresholdChoice select_threshold(std::span<const ScoredOutcome> outcomes, std::size_t ground_truth_count,
                                 double beta = 0.5);

/// JSON-lines `{score, tp}`.
std::vector<ScoredOutcome> load_validation(const std::string& path);

}  // namespace trafficview::detection
