#include "trafficview/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "trafficview/error.hpp"

namespace trafficview::aggregate {

std::string to_string(DayFilter f) {
  switch (f) {
    case DayFilter::weekday: return "weekday";
    case DayFilter::weekend: return "weekend";
    case DayFilter::all: return "all";
  }
  return "all";
}

std::string to_string(PeriodFilter f) {
  switch (f) {
    case PeriodFilter::peak: return "peak";
    case PeriodFilter::offpeak: return "offpeak";
    case PeriodFilter::all: return "all";
  }
  return "all";
}

DayFilter parse_day_filter(std::string_view s) {
  if (s == "weekday") return DayFilter::weekday;
  if (s == "weekend") return DayFilter::weekend;
  if (s == "all") return DayFilter::all;
  throw InvalidArgument("day filter must be weekday, weekend or all");
}

PeriodFilter parse_period_filter(std::string_view s) {
  if (s == "peak") return PeriodFilter::peak;
  if (s == "offpeak") return PeriodFilter::offpeak;
  if (s == "all") return PeriodFilter::all;
  throw InvalidArgument("period filter must be peak, offpeak or all");
}

std::string to_string(Schema s) {
  switch (s) {
    case Schema::camera: return "camera";
    case Schema::zone: return "zone";
    case Schema::borough: return "borough";
  }
  return "camera";
}

Schema parse_schema(std::string_view s) {
  if (s == "camera") return Schema::camera;
  if (s == "zone") return Schema::zone;
  if (s == "borough") return Schema::borough;
  throw InvalidArgument("schema must be camera, zone or borough");
}

std::string mode_name(RoadUser m) { return detection::to_string(m); }

AnalysisWindow make_window(std::string label, std::string_view start_ymd, std::string_view end_ymd, DayFilter days,
                           PeriodFilter period) {
  AnalysisWindow w{std::move(label), parse_date(start_ymd), parse_date(end_ymd), days, period};
  if (w.start_day > w.end_day) throw InvalidArgument("window " + w.label + " ends before it starts");
  return w;
}

LocalTime local_time(Timestamp t, const CalendarSettings& cal) {
  const std::int64_t local = t + cal.utc_offset_seconds;
  LocalTime lt;
  lt.day = floor_div(local, 86400);
  lt.hour = static_cast<int>((local - lt.day * 86400) / 3600);
  lt.dow = day_of_week(lt.day);
  return lt;
}

bool is_peak(Timestamp t, const CalendarSettings& cal) {
  const int h = local_time(t, cal).hour;
  return h >= cal.peak_start_hour && h < cal.peak_end_hour;
}

std::optional<CalendarKey> calendar_key(Timestamp t, const AnalysisWindow& w, const CalendarSettings& cal) {
  const LocalTime lt = local_time(t, cal);
  if (lt.day < w.start_day || lt.day > w.end_day) return std::nullopt;
  const bool weekend = lt.dow >= 5;
  if (w.day_filter == DayFilter::weekday && weekend) return std::nullopt;
  if (w.day_filter == DayFilter::weekend && !weekend) return std::nullopt;
  const bool peak = lt.hour >= cal.peak_start_hour && lt.hour < cal.peak_end_hour;
  if (w.period_filter == PeriodFilter::peak && !peak) return std::nullopt;
  if (w.period_filter == PeriodFilter::offpeak && peak) return std::nullopt;
  return CalendarKey{static_cast<int>((lt.day - w.start_day) / 7), lt.dow, peak};
}

std::vector<DetectionPacket> select_window(std::span<const DetectionPacket> packets, const AnalysisWindow& w,
                                           const CalendarSettings& cal) {
  std::vector<DetectionPacket> out;
  for (const auto& p : packets)
    if (calendar_key(p.t, w, cal)) out.push_back(p);
  return out;
}

namespace {

struct Keyed {
  std::vector<std::pair<CalendarKey, const DetectionPacket*>> items;
  std::set<CalendarKey> keys;
};

Keyed key_packets(std::span<const DetectionPacket> packets, const AnalysisWindow& w, const CalendarSettings& cal) {
  Keyed k;
  for (const auto& p : packets) {
    if (auto key = calendar_key(p.t, w, cal)) {
      k.items.emplace_back(*key, &p);
      k.keys.insert(*key);
    }
  }
  return k;
}

std::set<CalendarKey> set_minus(const std::set<CalendarKey>& a, const std::set<CalendarKey>& b) {
  std::set<CalendarKey> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

// First timestamp inside `w` that carries `key`, if the window reaches it.
std::optional<Timestamp> timestamp_for(const CalendarKey& key, const AnalysisWindow& w, const CalendarSettings& cal) {
  const int offset = (key.dow - day_of_week(w.start_day) + 7) % 7;
  const std::int64_t day = w.start_day + 7LL * key.week + offset;
  if (day > w.end_day) return std::nullopt;
  int hour = key.peak ? cal.peak_start_hour : (cal.peak_start_hour > 0 ? 0 : cal.peak_end_hour);
  if (!key.peak && hour >= 24) return std::nullopt;
  return day * 86400 + hour * 3600 - cal.utc_offset_seconds;
}

}  // namespace

HarmonizedPair harmonize(std::span<const DetectionPacket> pre, std::span<const DetectionPacket> post,
                         const HarmonizeSpec& spec) {
  if (pre.empty() || post.empty()) throw InvalidArgument("harmonization needs packets on both sides");
  const Keyed kp = key_packets(pre, spec.pre, spec.calendar);
  const Keyed kq = key_packets(post, spec.post, spec.calendar);
  HarmonizedPair out;
  std::set_intersection(kp.keys.begin(), kp.keys.end(), kq.keys.begin(), kq.keys.end(),
                        std::inserter(out.matched, out.matched.end()));
  if (out.matched.empty()) {
    throw EmptyHarmonizationError("windows " + spec.pre.label + " and " + spec.post.label + " share no calendar keys");
  }
  out.dropped_pre = set_minus(kp.keys, kq.keys);
  out.dropped_post = set_minus(kq.keys, kp.keys);
  for (const auto& [key, p] : kp.items)
    if (out.matched.contains(key)) out.pre.push_back(*p);
  for (const auto& [key, p] : kq.items)
    if (out.matched.contains(key)) out.post.push_back(*p);
  return out;
}

HarmonizedPair harmonize_imputed(std::span<const DetectionPacket> pre, std::span<const DetectionPacket> post,
                                 const HarmonizeSpec& spec) {
  if (pre.empty() || post.empty()) throw InvalidArgument("harmonization needs packets on both sides");
  const Keyed kp = key_packets(pre, spec.pre, spec.calendar);
  const Keyed kq = key_packets(post, spec.post, spec.calendar);
  HarmonizedPair out;
  std::set_union(kp.keys.begin(), kp.keys.end(), kq.keys.begin(), kq.keys.end(),
                 std::inserter(out.matched, out.matched.end()));
  if (out.matched.empty()) {
    throw EmptyHarmonizationError("windows " + spec.pre.label + " and " + spec.post.label + " contain no packets");
  }

  auto fill = [&](const Keyed& side, const std::set<CalendarKey>& missing, const AnalysisWindow& w,
                  std::vector<DetectionPacket>& dest) {
    for (const auto& [key, p] : side.items) dest.push_back(*p);
    struct Acc {
      std::array<double, detection::kClassCount> sum{};
      std::size_t n = 0;
      int vp_id = 0;
    };
    std::map<std::string, Acc> per_cam;
    for (const auto& [key, p] : side.items) {
      auto& a = per_cam[p->cam_id];
      if (a.n == 0) a.vp_id = p->vp_id;
      for (std::size_t c = 0; c < detection::kClassCount; ++c) a.sum[c] += static_cast<double>(p->counts[c]);
      ++a.n;
    }
    for (const auto& key : missing) {
      auto ts = timestamp_for(key, w, spec.calendar);
      if (!ts) continue;
      for (const auto& [cam, a] : per_cam) {
        detection::ClassCounts counts{};
        for (std::size_t c = 0; c < detection::kClassCount; ++c) {
          counts[c] = std::llround(a.sum[c] / static_cast<double>(a.n));
        }
        dest.push_back(detection::make_packet(cam, *ts, counts, a.vp_id));
      }
    }
  };
  out.dropped_pre = set_minus(kp.keys, kq.keys);   // imputed on the post side
  out.dropped_post = set_minus(kq.keys, kp.keys);  // imputed on the pre side
  fill(kp, out.dropped_post, spec.pre, out.pre);
  fill(kq, out.dropped_pre, spec.post, out.post);
  return out;
}

StatBundle describe(std::string partition, RoadUser mode, std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("cannot describe an empty sample for " + partition);
  StatBundle b;
  b.partition = std::move(partition);
  b.mode = mode;
  b.sample_count = values.size();
  b.total = std::accumulate(values.begin(), values.end(), 0.0);
  const double n = static_cast<double>(values.size());
  b.mean = b.total / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - b.mean) * (v - b.mean);
    b.std = std::sqrt(ss / (n - 1.0));
  }
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  b.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return b;
}

namespace {

double packet_value(const DetectionPacket& p, RoadUser mode, const detection::RoiTable* roi) {
  const auto count = detection::count_of(p.counts, mode);
  if (!roi) return static_cast<double>(count);
  return detection::density(count, roi->lookup(p.cam_id, p.vp_id));
}

}  // namespace

std::vector<StatBundle> aggregate_stats(std::span<const DetectionPacket> packets, Schema schema, RoadUser mode,
                                        const AggregateOptions& opts) {
  if (schema != Schema::camera) {
    if (!opts.registry) throw InvalidArgument(to_string(schema) + " schema needs a camera registry");
    std::set<std::string> missing;
    for (const auto& p : packets)
      if (!opts.registry->contains(p.cam_id)) missing.insert(p.cam_id);
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw InvalidArgument("packets from unregistered cameras: " + list);
    }
  }
  auto partition_of = [&](const DetectionPacket& p) -> std::string {
    switch (schema) {
      case Schema::camera: return p.cam_id;
      case Schema::zone: return corpus::to_string(opts.registry->find(p.cam_id)->zone_flag);
      case Schema::borough: return opts.registry->find(p.cam_id)->borough;
    }
    return p.cam_id;
  };

  // partition -> camera -> values, in packet order
  std::map<std::string, std::map<std::string, std::vector<double>>> groups;
  for (const auto& p : packets) groups[partition_of(p)][p.cam_id].push_back(packet_value(p, mode, opts.roi));

  std::vector<StatBundle> out;
  for (auto& [partition, cams] : groups) {
    std::vector<double> all;
    for (const auto& [cam, values] : cams) all.insert(all.end(), values.begin(), values.end());
    StatBundle b = describe(partition, mode, std::move(all));
    if (schema != Schema::camera && opts.weighting == Weighting::camera_equal) {
      double sum_of_means = 0.0;
      for (const auto& [cam, values] : cams) {
        sum_of_means += std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      }
      b.mean = sum_of_means / static_cast<double>(cams.size());
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<StatBundle> aggregate_by(std::span<const DetectionPacket> packets,
                                     const std::function<std::string(const DetectionPacket&)>& key, RoadUser mode,
                                     const detection::RoiTable* roi) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& p : packets) groups[key(p)].push_back(packet_value(p, mode, roi));
  std::vector<StatBundle> out;
  for (auto& [k, values] : groups) out.push_back(describe(k, mode, std::move(values)));
  return out;
}

ChangeRecord change(const StatBundle& pre, const StatBundle& post, ChangeBasis basis) {
  if (pre.partition != post.partition || pre.mode != post.mode) {
    throw InvalidArgument("cannot compare " + pre.partition + "/" + mode_name(pre.mode) + " with " + post.partition +
                          "/" + mode_name(post.mode));
  }
  ChangeRecord r;
  r.partition = pre.partition;
  r.mode = pre.mode;
  r.pre_value = basis == ChangeBasis::mean ? pre.mean : pre.total;
  r.post_value = basis == ChangeBasis::mean ? post.mean : post.total;
  r.delta = r.post_value - r.pre_value;
  if (r.pre_value != 0.0) r.pct_delta = 100.0 * r.delta / r.pre_value;
  return r;
}

std::vector<ChangeRecord> compare_bundles(std::span<const StatBundle> pre, std::span<const StatBundle> post,
                                          ChangeBasis basis) {
  std::map<std::pair<std::string, int>, const StatBundle*> post_by_key;
  for (const auto& b : post) post_by_key[{b.partition, static_cast<int>(b.mode)}] = &b;
  std::vector<ChangeRecord> out;
  for (const auto& b : pre) {
    auto it = post_by_key.find({b.partition, static_cast<int>(b.mode)});
    if (it != post_by_key.end()) out.push_back(change(b, *it->second, basis));
  }
  std::sort(out.begin(), out.end(), [](const ChangeRecord& a, const ChangeRecord& b) {
    return std::tie(a.partition, a.mode) < std::tie(b.partition, b.mode);
  });
  return out;
}

std::vector<ChangeRecord> top_changes(std::span<const ChangeRecord> records, std::size_t k, Direction direction) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<ChangeRecord> pool;
  for (const auto& r : records) {
    if (!r.pct_delta) continue;
    if (direction == Direction::increase ? *r.pct_delta > 0 : *r.pct_delta < 0) pool.push_back(r);
  }
  std::sort(pool.begin(), pool.end(), [direction](const ChangeRecord& a, const ChangeRecord& b) {
    if (*a.pct_delta != *b.pct_delta) {
      return direction == Direction::increase ? *a.pct_delta > *b.pct_delta : *a.pct_delta < *b.pct_delta;
    }
    if (std::abs(a.delta) != std::abs(b.delta)) return std::abs(a.delta) > std::abs(b.delta);
    return std::tie(a.partition, a.mode) < std::tie(b.partition, b.mode);
  });
  if (pool.size() > k) pool.resize(k);
  return pool;
}

namespace {

double parse_real(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ": bad number '" + s + "'");
  }
}

RoadUser parse_mode(const std::string& s, const std::string& path) {
  auto m = detection::parse_road_user(s);
  if (!m) throw ParseError(path + ": unknown mode '" + s + "'");
  return *m;
}

}  // namespace

void write_stats_csv(const std::string& path, std::span<const StatBundle> bundles) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << kStatsHeader << '\n';
  for (const auto& b : bundles) {
    out << csv::join({b.partition, mode_name(b.mode), format_double(b.total), format_double(b.mean),
                      format_double(b.median), format_double(b.std), std::to_string(b.sample_count)})
        << '\n';
  }
}

std::vector<StatBundle> read_stats_csv(const std::string& path) {
  std::vector<StatBundle> out;
  for (const auto& r : csv::read_file(path, {"partition", "mode", "total", "mean", "median", "std", "n"})) {
    if (r.size() != 7) throw ParseError(path + ": expected 7 fields");
    out.push_back(StatBundle{r[0], parse_mode(r[1], path), parse_real(r[2], path), parse_real(r[3], path),
                             parse_real(r[4], path), parse_real(r[5], path),
                             static_cast<std::size_t>(parse_real(r[6], path))});
  }
  return out;
}

void write_changes_csv(const std::string& path, std::span<const ChangeRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << kChangesHeader << '\n';
  for (const auto& r : records) {
    out << csv::join({r.partition, mode_name(r.mode), format_double(r.pre_value), format_double(r.post_value),
                      format_double(r.delta), r.pct_delta ? format_double(*r.pct_delta) : "NA"})
        << '\n';
  }
}

std::vector<ChangeRecord> read_changes_csv(const std::string& path) {
  std::vector<ChangeRecord> out;
  for (const auto& r : csv::read_file(path, {"partition", "mode", "pre", "post", "delta", "pct_delta"})) {
    if (r.size() != 6) throw ParseError(path + ": expected 6 fields");
    ChangeRecord c{r[0], parse_mode(r[1], path), parse_real(r[2], path), parse_real(r[3], path),
                   parse_real(r[4], path), std::nullopt};
    if (r[5] != "NA") c.pct_delta = parse_real(r[5], path);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace trafficview::aggregate
