#include "trafficview/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "trafficview/error.hpp"

namespace trafficview::detection {

std::string to_string(RoadUser c) {
  switch (c) {
    case RoadUser::car: return "car";
    case RoadUser::truck: return "truck";
    case RoadUser::ped: return "ped";
    case RoadUser::bike: return "bike";
  }
  return "car";
}

std::optional<RoadUser> parse_road_user(std::string_view s) {
  if (s == "car") return RoadUser::car;
  if (s == "truck") return RoadUser::truck;
  if (s == "ped") return RoadUser::ped;
  if (s == "bike") return RoadUser::bike;
  return std::nullopt;
}

std::vector<Detection> filter_detections(std::span<const Detection> dets, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("score threshold must lie in [0, 1]");
  std::vector<Detection> out;
  std::copy_if(dets.begin(), dets.end(), std::back_inserter(out),
               [threshold](const Detection& d) { return d.score >= threshold; });
  return out;
}

ClassCounts count_by_class(std::span<const Detection> dets) {
  ClassCounts counts{};
  for (const auto& d : dets) ++count_of(counts, d.cls);
  return counts;
}

double density(std::int64_t count, const RoiCalibration& roi) {
  if (!(roi.area_m2 > 0.0)) {
    throw CalibrationError("ROI area must be positive for camera " + roi.cam_id + " view " + std::to_string(roi.vp_id));
  }
  return static_cast<double>(count) / roi.area_m2;
}

void RoiTable::set(RoiCalibration roi) {
  if (!(roi.area_m2 > 0.0)) throw CalibrationError("ROI area must be positive for camera " + roi.cam_id);
  table_[{roi.cam_id, roi.vp_id}] = roi.area_m2;
}

RoiCalibration RoiTable::lookup(const std::string& cam_id, int vp_id) const {
  auto it = table_.find({cam_id, vp_id});
  return RoiCalibration{cam_id, vp_id, it == table_.end() ? 1.0 : it->second};
}

RoiTable RoiTable::load_csv(const std::string& path) {
  RoiTable t;
  for (const auto& row : csv::read_file(path, {"cam_id", "vp_id", "area_m2"})) {
    if (row.size() != 3) throw ParseError(path + ": expected 3 fields");
    try {
      t.set(RoiCalibration{trim(row[0]), std::stoi(row[1]), std::stod(row[2])});
    } catch (const std::invalid_argument&) {
      throw ParseError(path + ": bad ROI row");
    }
  }
  return t;
}

DetectionPacket make_packet(std::string cam_id, Timestamp t, const ClassCounts& counts, int vp_id) {
  if (cam_id.empty()) throw InvalidArgument("packet needs a camera id");
  for (auto c : counts) {
    if (c < 0) throw InvalidArgument("negative count in packet for " + cam_id);
  }
  return DetectionPacket{std::move(cam_id), t, counts, vp_id};
}

std::string to_csv_row(const DetectionPacket& p) {
  std::string out = csv::escape(p.cam_id);
  out += ',' + std::to_string(p.t);
  for (auto c : p.counts) out += ',' + std::to_string(c);
  out += ',' + std::to_string(p.vp_id);
  return out;
}

namespace {

template <class T>
T parse_int(const std::string& s) {
  T v{};
  auto t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) throw ParseError("bad integer '" + s + "'");
  return v;
}

}  // namespace

DetectionPacket packet_from_csv_row(std::string_view row) {
  auto f = csv::split_line(row);
  if (f.size() != 7) throw ParseError("packet row needs 7 fields: '" + std::string(row) + "'");
  ClassCounts counts{};
  for (std::size_t i = 0; i < kClassCount; ++i) counts[i] = parse_int<std::int64_t>(f[2 + i]);
  try {
    return make_packet(trim(f[0]), parse_int<Timestamp>(f[1]), counts, parse_int<int>(f[6]));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
}

PacketStore::PacketStore(std::string path) : path_(std::move(path)) {}

std::vector<DetectionPacket> PacketStore::load() const {
  std::vector<DetectionPacket> out;
  if (!std::filesystem::exists(path_)) return out;
  std::ifstream in(path_);
  if (!in) throw IoError("cannot open " + path_);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      if (trim(line) != kPacketHeader) throw ParseError(path_ + ": unexpected packet header");
      header = false;
      continue;
    }
    out.push_back(packet_from_csv_row(line));
  }
  return out;
}

std::size_t PacketStore::append(std::span<const DetectionPacket> packets) {
  std::set<std::pair<std::string, Timestamp>> seen;
  for (const auto& p : load()) seen.emplace(p.cam_id, p.t);
  const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
  auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to " + path_);
  if (fresh) out << kPacketHeader << '\n';
  std::size_t written = 0;
  for (const auto& p : packets) {
    if (!seen.emplace(p.cam_id, p.t).second) continue;
    out << to_csv_row(p) << '\n';
    ++written;
  }
  if (!out) throw IoError("write failed on " + path_);
  return written;
}

ImportResult import_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ImportResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.lines_read;
    auto skip = [&](const std::string& why) {
      ++result.skipped;
      result.problems.push_back(path + ":" + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      skip("not valid JSON");
      continue;
    }
    try {
      auto cls = parse_road_user(j.at("class").get<std::string>());
      if (!cls) {
        skip("unknown class '" + j.at("class").get<std::string>() + "'");
        continue;
      }
      Detection d;
      d.cls = *cls;
      d.box = Box{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()};
      d.score = j.at("score").get<double>();
      if (!(d.box.w > 0 && d.box.h > 0)) {
        skip("non-positive box size");
        continue;
      }
      if (!(d.score >= 0.0 && d.score <= 1.0)) {
        skip("score outside [0, 1]");
        continue;
      }
      auto cam = j.at("cam_id").get<std::string>();
      if (cam.empty()) {
        skip("empty cam_id");
        continue;
      }
      result.frames[{cam, j.at("ts").get<Timestamp>()}].push_back(d);
    } catch (const nlohmann::json::exception& e) {
      skip(std::string("missing or mistyped field: ") + e.what());
    }
  }
  return result;
}

ThresholdChoice select_threshold(std::span<const ScoredOutcome> outcomes, std::size_t ground_truth_count,
                                 double beta) {
  if (ground_truth_count == 0) throw InvalidArgument("ground-truth count must be positive");
  const double b2 = beta * beta;
  ThresholdChoice best;
  best.f_beta = -1.0;
  for (int step = 5; step <= 95; ++step) {
    const double t = step / 100.0;
    std::size_t kept = 0, tp = 0;
    for (const auto& o : outcomes) {
      if (o.score >= t) {
        ++kept;
        tp += o.true_positive;
      }
    }
    const double precision = kept ? static_cast<double>(tp) / kept : 0.0;
    const double recall = static_cast<double>(tp) / ground_truth_count;
    const double denom = b2 * precision + recall;
    const double f = denom > 0 ? (1 + b2) * precision * recall / denom : 0.0;
    if (f > best.f_beta) best = ThresholdChoice{t, f, precision, recall};
  }
  return best;
}

std::vector<ScoredOutcome> load_validation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ScoredOutcome> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back(ScoredOutcome{j.at("score").get<double>(), j.at("tp").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace trafficview::detection
