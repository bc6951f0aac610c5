#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficview/common.hpp"
#include "trafficview/image.hpp"

namespace trafficview::corpus {

enum class ZoneFlag { inside, boundary, outside };

std::string to_string(ZoneFlag z);
ZoneFlag parse_zone_flag(std::string_view s);

struct CameraRecord {
  std::string cam_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string borough;
  ZoneFlag zone_flag = ZoneFlag::outside;
  std::string source;  // URL or directory path

  friend bool operator==(const CameraRecord&, const CameraRecord&) = default;
};

/// Camera metadata keyed by cam_id. Iteration order is lexicographic by id.
class CameraRegistry {
 public:
  /// Throws DuplicateIdError if the id is already present and InvalidArgument
  /// for empty ids or out-of-range coordinates.
  void register_camera(CameraRecord record);

  const CameraRecord* find(std::string_view cam_id) const;
  bool contains(std::string_view cam_id) const { return find(cam_id) != nullptr; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t count_in_zone(ZoneFlag z) const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  static CameraRegistry load_csv(const std::string& path);
  void save_csv(const std::string& path) const;

 private:
  std::map<std::string, CameraRecord, std::less<>> records_;
};

struct Frame {
  std::string cam_id;
  Timestamp timestamp = 0;
  GrayImage pixels;
  std::string source_path;
};

/// A boundary with no snapshot close enough to it. Consecutive missing
/// boundaries are merged into one gap.
struct Gap {
  std::string cam_id;
  Timestamp gap_start = 0;
  Timestamp gap_end = 0;

  friend bool operator==(const Gap&, const Gap&) = default;
};

struct SampleSelection {
  std::vector<std::size_t> indices;  // into the input stream, strictly increasing
  std::vector<Timestamp> boundaries; // boundary each selected index serves
  std::vector<Gap> gaps;
};

/// Picks, for every wall-clock-aligned boundary k*interval inside the
/// stream's span, the snapshot nearest to it (ties go to the earlier one).
/// Boundaries whose nearest snapshot is farther than `max_offset` seconds
/// become gaps. `max_offset` defaults to interval/4, which keeps consecutive
/// picks at least interval/2 apart.
SampleSelection sample_indices(std::span<const Timestamp> stream, std::int64_t interval,
                               std::optional<std::int64_t> max_offset = std::nullopt,
                               std::string_view cam_id = {});

std::vector<Frame> sample_frames(std::vector<Frame> stream, std::int64_t interval,
                                 std::vector<Gap>* gaps = nullptr);

void append_gap_log(const std::string& path, std::span<const Gap> gaps);

struct IngestReport {
  std::size_t stored = 0;
  std::size_t skipped = 0;      // undecodable files
  std::size_t quarantined = 0;  // unknown camera ids
  std::vector<std::string> warnings;
};

/// Parses "<unix_ts>.png|.jpg|.jpeg" into a timestamp.
std::optional<Timestamp> timestamp_from_filename(std::string_view filename);

/// Walks `source_root/<cam_id>/<unix_ts>.{png,jpg}`, decodes every image to
/// grayscale and writes canonical copies to `out_root/frames_gray/<cam_id>/<ts>.png`.
/// Files of unregistered cameras are copied to `out_root/quarantine/<cam_id>/`.
IngestReport ingest_directory(const std::string& source_root, const CameraRegistry& registry,
                              const std::string& out_root);

std::string canonical_frame_path(const std::string& out_root, std::string_view cam_id, Timestamp ts);

/// Loads every canonical frame of one camera, timestamp-ordered.
std::vector<Frame> load_camera_frames(const std::string& frames_gray_root, std::string_view cam_id);

/// Camera ids that have a directory under the canonical frame root.
std::vector<std::string> list_cameras(const std::string& frames_gray_root);

/// Fetches one snapshot over HTTP and decodes it to grayscale.
/// Throws IoError on transport failure or undecodable payload.
GrayImage fetch_snapshot(const std::string& url);

/// Polls every camera whose source is an http:// URL once and stores the
/// result under frames_gray at timestamp `now`. Returns the ingest tally.
IngestReport poll_once(const CameraRegistry& registry, const std::string& out_root, Timestamp now);

}  // namespace trafficview::corpus
