#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "trafficview/corpus.hpp"
#include "trafficview/detection.hpp"

namespace trafficview::aggregate {

using detection::DetectionPacket;
using detection::RoadUser;

enum class DayFilter { weekday, weekend, all };
enum class PeriodFilter { peak, offpeak, all };

std::string to_string(DayFilter f);
std::string to_string(PeriodFilter f);
DayFilter parse_day_filter(std::string_view s);
PeriodFilter parse_period_filter(std::string_view s);

/// Local-time conventions shared by both windows of a comparison.
struct CalendarSettings {
  std::int64_t utc_offset_seconds = 0;
  int peak_start_hour = 6;  // inclusive
  int peak_end_hour = 20;   // exclusive
};

struct AnalysisWindow {
  std::string label;
  std::int64_t start_day = 0;  // days since epoch, local calendar, inclusive
  std::int64_t end_day = 0;    // inclusive
  DayFilter day_filter = DayFilter::all;
  PeriodFilter period_filter = PeriodFilter::all;
};

/// Throws InvalidArgument when start > end.
AnalysisWindow make_window(std::string label, std::string_view start_ymd, std::string_view end_ymd,
                           DayFilter days = DayFilter::all, PeriodFilter period = PeriodFilter::all);

/// Position of a packet inside its window: week index from the window start,
/// day of week (0 = Monday) and peak flag.
struct CalendarKey {
  int week = 0;
  int dow = 0;
  bool peak = false;

  friend auto operator<=>(const CalendarKey&, const CalendarKey&) = default;
};

struct LocalTime {
  std::int64_t day = 0;  // local days since epoch
  int dow = 0;
  int hour = 0;
};

LocalTime local_time(Timestamp t, const CalendarSettings& cal);
bool is_peak(Timestamp t, const CalendarSettings& cal);

/// Key of `t` within `w`, or nullopt when t falls outside the window or its
/// day/period filters.
std::optional<CalendarKey> calendar_key(Timestamp t, const AnalysisWindow& w, const CalendarSettings& cal);

struct HarmonizeSpec {
  AnalysisWindow pre;
  AnalysisWindow post;
  CalendarSettings calendar;
};

struct HarmonizedPair {
  std::vector<DetectionPacket> pre;
  std::vector<DetectionPacket> post;
  std::set<CalendarKey> matched;
  std::set<CalendarKey> dropped_pre;   // present only in pre
  std::set<CalendarKey> dropped_post;  // present only in post
};

/// Restricts both packet sets to calendar keys present on both sides
/// (listwise deletion). Throws InvalidArgument when either input is empty and
/// EmptyHarmonizationError when no key survives.
HarmonizedPair harmonize(std::span<const DetectionPacket> pre, std::span<const DetectionPacket> post,
                         const HarmonizeSpec& spec);

/// Sensitivity variant: instead of deleting unmatched keys, fills the missing
/// side with one packet per (camera, missing key) whose counts are that
/// camera's rounded mean within its window.
HarmonizedPair harmonize_imputed(std::span<const DetectionPacket> pre, std::span<const DetectionPacket> post,
                                 const HarmonizeSpec& spec);

enum class Schema { camera, zone, borough };
enum class Weighting { camera_equal, packet_equal };

std::string to_string(Schema s);
Schema parse_schema(std::string_view s);
std::string mode_name(RoadUser m);

struct StatBundle {
  std::string partition;
  RoadUser mode = RoadUser::car;
  double total = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  // sample (n-1); 0 when n == 1
  std::size_t sample_count = 0;

  friend bool operator==(const StatBundle&, const StatBundle&) = default;
};

/// Descriptive statistics of a sample: total, mean, median, sample std.
StatBundle describe(std::string partition, RoadUser mode, std::vector<double> values);

struct AggregateOptions {
  const corpus::CameraRegistry* registry = nullptr;  // required for zone / borough
  const detection::RoiTable* roi = nullptr;          // counts become densities when set
  Weighting weighting = Weighting::camera_equal;
};

/// One bundle per partition value, partitions sorted. Packet values are
/// per-packet counts (or densities). Under zone / borough schemas the mean
/// is camera-equal by default: the mean of per-camera means. Throws
/// InvalidArgument listing cameras missing from the registry.
std::vector<StatBundle> aggregate_stats(std::span<const DetectionPacket> packets, Schema schema, RoadUser mode,
                                        const AggregateOptions& opts = {});

/// Per-packet stats grouped by an arbitrary key (e.g. day of week).
std::vector<StatBundle> aggregate_by(std::span<const DetectionPacket> packets,
                                     const std::function<std::string(const DetectionPacket&)>& key, RoadUser mode,
                                     const detection::RoiTable* roi = nullptr);

enum class ChangeBasis { mean, total };

struct ChangeRecord {
  std::string partition;
  RoadUser mode = RoadUser::car;
  double pre_value = 0.0;
  double post_value = 0.0;
  double delta = 0.0;
  std::optional<double> pct_delta;  // undefined when pre_value == 0

  friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;
};

/// Throws InvalidArgument when partition or mode differ.
ChangeRecord change(const StatBundle& pre, const StatBundle& post, ChangeBasis basis = ChangeBasis::mean);

/// Changes for every partition present in both bundle lists, sorted by partition.
std::vector<ChangeRecord> compare_bundles(std::span<const StatBundle> pre, std::span<const StatBundle> post,
                                          ChangeBasis basis = ChangeBasis::mean);

enum class Direction { increase, decrease };

/// The k largest (increase) or smallest (decrease) defined pct_delta values.
/// Increase keeps only positive changes, decrease only negative ones. Ties
/// break by larger |delta|, then partition.
std::vector<ChangeRecord> top_changes(std::span<const ChangeRecord> records, std::size_t k, Direction direction);

inline constexpr const char* kStatsHeader = "partition,mode,total,mean,median,std,n";
inline constexpr const char* kChangesHeader = "partition,mode,pre,post,delta,pct_delta";

void write_stats_csv(const std::string& path, std::span<const StatBundle> bundles);
std::vector<StatBundle> read_stats_csv(const std::string& path);
void write_changes_csv(const std::string& path, std::span<const ChangeRecord> records);
std::vector<ChangeRecord> read_changes_csv(const std::string& path);

/// Packets whose timestamp lies in the window and passes its filters.
std::vector<DetectionPacket> select_window(std::span<const DetectionPacket> packets, const AnalysisWindow& w,
                                           const CalendarSettings& cal);

}  // namespace trafficview::aggregate
