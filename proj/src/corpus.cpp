#include "trafficview/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "trafficview/error.hpp"

namespace fs = std::filesystem;

namespace trafficview::corpus {

std::string to_string(ZoneFlag z) {
  switch (z) {
    case ZoneFlag::inside: return "inside";
    case ZoneFlag::boundary: return "boundary";
    case ZoneFlag::outside: return "outside";
  }
  return "outside";
}

ZoneFlag parse_zone_flag(std::string_view s) {
  auto v = to_lower(trim(s));
  if (v == "inside") return ZoneFlag::inside;
  if (v == "boundary") return ZoneFlag::boundary;
  if (v == "outside") return ZoneFlag::outside;
  throw InvalidArgument("zone_flag must be inside, boundary or outside, got '" + std::string(s) + "'");
}

void CameraRegistry::register_camera(CameraRecord record) {
  if (record.cam_id.empty()) throw InvalidArgument("cam_id must not be empty");
  if (!(std::abs(record.latitude) <= 90.0) || !(std::abs(record.longitude) <= 180.0)) {
    throw InvalidArgument("coordinates out of range for camera " + record.cam_id);
  }
  if (records_.contains(record.cam_id)) throw DuplicateIdError("duplicate cam_id " + record.cam_id);
  auto id = record.cam_id;
  records_.emplace(std::move(id), std::move(record));
}

const CameraRecord* CameraRegistry::find(std::string_view cam_id) const {
  auto it = records_.find(cam_id);
  return it == records_.end() ? nullptr : &it->second;
}

std::size_t CameraRegistry::count_in_zone(ZoneFlag z) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [z](const auto& kv) { return kv.second.zone_flag == z; }));
}

namespace {

double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad " + what + " '" + s + "'");
  }
}

}  // namespace

CameraRegistry CameraRegistry::load_csv(const std::string& path) {
  auto rows = csv::read_file(path, {"cam_id", "lat", "lon", "borough", "zone_flag", "source"});
  CameraRegistry reg;
  std::size_t line = 1;
  for (auto& row : rows) {
    ++line;
    if (row.size() != 6) throw ParseError(path + ":" + std::to_string(line) + ": expected 6 fields");
    CameraRecord r;
    r.cam_id = trim(row[0]);
    r.latitude = parse_real(trim(row[1]), "latitude");
    r.longitude = parse_real(trim(row[2]), "longitude");
    r.borough = trim(row[3]);
    r.zone_flag = parse_zone_flag(row[4]);
    r.source = trim(row[5]);
    reg.register_camera(std::move(r));
  }
  return reg;
}

void CameraRegistry::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "cam_id,lat,lon,borough,zone_flag,source\n";
  for (const auto& [id, r] : records_) {
    out << csv::join({r.cam_id, format_double(r.latitude), format_double(r.longitude), r.borough,
                      to_string(r.zone_flag), r.source})
        << '\n';
  }
}

SampleSelection sample_indices(std::span<const Timestamp> stream, std::int64_t interval,
                               std::optional<std::int64_t> max_offset, std::string_view cam_id) {
  if (interval <= 0) throw InvalidArgument("sampling interval must be positive");
  SampleSelection sel;
  if (stream.empty()) return sel;
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i] < stream[i - 1]) throw InvalidArgument("snapshot stream must be time-ordered");
  }
  const std::int64_t tol = max_offset.value_or(interval / 4);

  const std::int64_t k_first = -floor_div(-(stream.front() - tol), interval);  // ceil
  const std::int64_t k_last = floor_div(stream.back() + tol, interval);

  std::optional<Gap> open_gap;
  auto close_gap = [&] {
    if (open_gap) sel.gaps.push_back(*open_gap);
    open_gap.reset();
  };

  std::size_t cursor = 0;
  for (std::int64_t k = k_first; k <= k_last; ++k) {
    const Timestamp boundary = k * interval;
    // Advance to the first snapshot at or after the boundary; the nearest one
    // is either that or its predecessor.
    while (cursor < stream.size() && stream[cursor] < boundary) ++cursor;
    std::optional<std::size_t> best;
    if (cursor > 0) best = cursor - 1;
    if (cursor < stream.size()) {
      if (!best || stream[cursor] - boundary < boundary - stream[*best]) best = cursor;
    }
    // Earliest snapshot among equal timestamps.
    if (best) {
      while (*best > 0 && stream[*best - 1] == stream[*best]) --*best;
    }
    const bool usable = best && std::llabs(stream[*best] - boundary) <= tol &&
                        (sel.indices.empty() || *best > sel.indices.back());
    if (usable) {
      close_gap();
      sel.indices.push_back(*best);
      sel.boundaries.push_back(boundary);
    } else {
      if (!open_gap) open_gap = Gap{std::string(cam_id), boundary, boundary};
      open_gap->gap_end = boundary;
    }
  }
  close_gap();
  return sel;
}

std::vector<Frame> sample_frames(std::vector<Frame> stream, std::int64_t interval, std::vector<Gap>* gaps) {
  std::vector<Timestamp> ts;
  ts.reserve(stream.size());
  for (const auto& f : stream) ts.push_back(f.timestamp);
  auto sel = sample_indices(ts, interval, std::nullopt, stream.empty() ? std::string_view{} : stream.front().cam_id);
  std::vector<Frame> out;
  out.reserve(sel.indices.size());
  for (auto i : sel.indices) out.push_back(std::move(stream[i]));
  if (gaps) *gaps = std::move(sel.gaps);
  return out;
}

void append_gap_log(const std::string& path, std::span<const Gap> gaps) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& g : gaps) {
    nlohmann::ordered_json j;
    j["cam_id"] = g.cam_id;
    j["gap_start"] = g.gap_start;
    j["gap_end"] = g.gap_end;
    out << j.dump() << '\n';
  }
}

std::optional<Timestamp> timestamp_from_filename(std::string_view filename) {
  auto dot = filename.rfind('.');
  if (dot == std::string_view::npos || dot == 0) return std::nullopt;
  auto ext = to_lower(filename.substr(dot + 1));
  if (ext != "png" && ext != "jpg" && ext != "jpeg") return std::nullopt;
  auto stem = filename.substr(0, dot);
  Timestamp ts = 0;
  auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), ts);
  if (ec != std::errc{} || ptr != stem.data() + stem.size()) return std::nullopt;
  return ts;
}

std::string canonical_frame_path(const std::string& out_root, std::string_view cam_id, Timestamp ts) {
  return (fs::path(out_root) / "frames_gray" / std::string(cam_id) / (std::to_string(ts) + ".png")).string();
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

IngestReport ingest_directory(const std::string& source_root, const CameraRegistry& registry,
                              const std::string& out_root) {
  if (!fs::is_directory(source_root)) throw IoError("not a directory: " + source_root);
  IngestReport report;
  for (const auto& cam_dir : sorted_entries(source_root)) {
    if (!fs::is_directory(cam_dir)) continue;
    const std::string cam_id = cam_dir.filename().string();
    const bool known = registry.contains(cam_id);
    for (const auto& file : sorted_entries(cam_dir)) {
      if (!fs::is_regular_file(file)) continue;
      auto ts = timestamp_from_filename(file.filename().string());
      if (!ts) {
        report.warnings.push_back("ignored file with unrecognized name: " + file.string());
        continue;
      }
      if (!known) {
        auto qdir = fs::path(out_root) / "quarantine" / cam_id;
        fs::create_directories(qdir);
        fs::copy_file(file, qdir / file.filename(), fs::copy_options::overwrite_existing);
        report.warnings.push_back("unknown camera " + cam_id + ", quarantined " + file.string());
        ++report.quarantined;
        continue;
      }
      GrayImage img;
      try {
        img = load_gray(file.string());
      } catch (const IoError& e) {
        report.warnings.push_back(std::string("skipped undecodable file: ") + e.what());
        ++report.skipped;
        continue;
      }
      save_png(img, canonical_frame_path(out_root, cam_id, *ts));
      ++report.stored;
    }
  }
  return report;
}

std::vector<Frame> load_camera_frames(const std::string& frames_gray_root, std::string_view cam_id) {
  fs::path dir = fs::path(frames_gray_root) / std::string(cam_id);
  std::vector<Frame> frames;
  if (!fs::is_directory(dir)) return frames;
  for (const auto& file : sorted_entries(dir)) {
    auto ts = timestamp_from_filename(file.filename().string());
    if (!ts) continue;
    frames.push_back(Frame{std::string(cam_id), *ts, load_gray(file.string()), file.string()});
  }
  std::sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.timestamp < b.timestamp; });
  return frames;
}

std::vector<std::string> list_cameras(const std::string& frames_gray_root) {
  std::vector<std::string> out;
  if (!fs::is_directory(frames_gray_root)) return out;
  for (const auto& p : sorted_entries(frames_gray_root)) {
    if (fs::is_directory(p)) out.push_back(p.filename().string());
  }
  return out;
}

GrayImage fetch_snapshot(const std::string& url) {
  // Split "http://host[:port]/path" into client base and path.
  const std::string scheme = "http://";
  if (!url.starts_with(scheme)) throw IoError("only http:// sources are supported: " + url);
  auto slash = url.find('/', scheme.size());
  std::string base = slash == std::string::npos ? url : url.substr(0, slash);
  std::string path = slash == std::string::npos ? "/" : url.substr(slash);
  httplib::Client client(base);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);
  auto res = client.Get(path);
  if (!res) throw IoError("request failed for " + url + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("HTTP " + std::to_string(res->status) + " for " + url);
  std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("undecodable snapshot from " + url);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(m.rows) * m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    std::copy(row, row + m.cols, px.begin() + static_cast<std::ptrdiff_t>(r) * m.cols);
  }
  return GrayImage(m.rows, m.cols, std::move(px));
}

IngestReport poll_once(const CameraRegistry& registry, const std::string& out_root, Timestamp now) {
  IngestReport report;
  for (const auto& [id, cam] : registry) {
    if (!cam.source.starts_with("http://")) continue;
    try {
      save_png(fetch_snapshot(cam.source), canonical_frame_path(out_root, id, now));
      ++report.stored;
    } catch (const IoError& e) {
      report.warnings.push_back(e.what());
      ++report.skipped;
    }
  }
  return report;
}

}  // namespace trafficview::corpus
