#include <algorithm>
#include <cstdlib>
#include <random>

#include "support.hpp"
#include "trafficview/corpus.hpp"
#include "trafficview/error.hpp"

using namespace trafficview;
using namespace trafficview::corpus;

namespace {

CameraRecord cam(std::string id, ZoneFlag z = ZoneFlag::inside) {
  return CameraRecord{std::move(id), 40.75, -73.98, "Manhattan", z, "http://example.invalid/" + id};
}

GrayImage pattern(int seed) {
  GrayImage img(24, 32);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 32; ++c) img.at(r, c) = static_cast<std::uint8_t>((r * 7 + c * 3 + seed * 11) % 256);
  return img;
}

}  // namespace

TEST(Registry, RegisterOne) {
  CameraRegistry reg;
  reg.register_camera(cam("C001"));
  EXPECT_EQ(reg.size(), 1u);
  ASSERT_NE(reg.find("C001"), nullptr);
  EXPECT_EQ(reg.find("C001")->zone_flag, ZoneFlag::inside);
}

TEST(Registry, DuplicateRejected) {
  CameraRegistry reg;
  reg.register_camera(cam("C001"));
  EXPECT_THROW(reg.register_camera(cam("C001")), DuplicateIdError);
}

TEST(Registry, BadCoordinatesRejected) {
  CameraRegistry reg;
  auto c = cam("C002");
  c.latitude = 91;
  EXPECT_THROW(reg.register_camera(c), InvalidArgument);
  EXPECT_THROW(reg.register_camera(cam("")), InvalidArgument);
}

TEST(Registry, LoadsLargeMetadataFile) {
  tvtest::TempDir dir;
  std::string text = "cam_id,lat,lon,borough,zone_flag,source\n";
  for (int i = 0; i < 936; ++i) {
    const char* zone = i < 202 ? "inside" : (i % 2 ? "boundary" : "outside");
    text += "CAM" + std::to_string(i) + ",40.7,-73.9,Queens," + zone + ",http://x/" + std::to_string(i) + "\n";
  }
  tvtest::write_file(dir.str("reg.csv"), text);
  const auto reg = CameraRegistry::load_csv(dir.str("reg.csv"));
  EXPECT_EQ(reg.size(), 936u);
  EXPECT_EQ(reg.count_in_zone(ZoneFlag::inside), 202u);
}

TEST(Registry, CsvRoundTrip) {
  tvtest::TempDir dir;
  CameraRegistry reg;
  reg.register_camera(cam("A", ZoneFlag::boundary));
  auto b = cam("B,quoted", ZoneFlag::outside);
  b.borough = "Staten Island";
  reg.register_camera(b);
  reg.save_csv(dir.str("r.csv"));
  const auto back = CameraRegistry::load_csv(dir.str("r.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back.find("A"), *reg.find("A"));
  EXPECT_EQ(*back.find("B,quoted"), *reg.find("B,quoted"));
}

TEST(Registry, DuplicateRowInFile) {
  tvtest::TempDir dir;
  tvtest::write_file(dir.str("r.csv"), "cam_id,lat,lon,borough,zone_flag,source\nA,1,1,X,inside,s\nA,1,1,X,inside,s\n");
  EXPECT_THROW(CameraRegistry::load_csv(dir.str("r.csv")), DuplicateIdError);
}

TEST(Sampling, FiveSecondStreamOneHour) {
  std::vector<Timestamp> stream;
  for (Timestamp t = 0; t <= 3600; t += 5) stream.push_back(t);
  const auto sel = sample_indices(stream, 1800);
  ASSERT_EQ(sel.indices.size(), 3u);
  EXPECT_EQ(stream[sel.indices[0]], 0);
  EXPECT_EQ(stream[sel.indices[1]], 1800);
  EXPECT_EQ(stream[sel.indices[2]], 3600);
  EXPECT_TRUE(sel.gaps.empty());
}

TEST(Sampling, EmptyStream) {
  const std::vector<Timestamp> stream;
  const auto sel = sample_indices(stream, 1800);
  EXPECT_TRUE(sel.indices.empty());
  EXPECT_TRUE(sel.gaps.empty());
}

TEST(Sampling, JitteredDayMatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> jitter(2, 7);
  const Timestamp t0 = 1706745600;
  std::vector<Timestamp> stream{t0};
  while (stream.back() <= t0 + 86400) stream.push_back(stream.back() + jitter(rng));
  const auto sel = sample_indices(stream, 1800);
  ASSERT_EQ(sel.indices.size(), 49u);
  for (std::size_t k = 0; k < 49; ++k) {
    const Timestamp boundary = t0 + static_cast<Timestamp>(k) * 1800;
    std::size_t best = 0;
    for (std::size_t i = 1; i < stream.size(); ++i) {
      if (std::llabs(stream[i] - boundary) < std::llabs(stream[best] - boundary)) best = i;
    }
    EXPECT_EQ(sel.indices[k], best) << "boundary " << k;
    EXPECT_LE(std::llabs(stream[sel.indices[k]] - boundary), 4);
  }
}

TEST(Sampling, HoleBecomesOneGap) {
  std::vector<Timestamp> stream;
  for (Timestamp t = 0; t <= 1800; t += 60) stream.push_back(t);
  for (Timestamp t = 9000; t <= 10800; t += 60) stream.push_back(t);
  const auto sel = sample_indices(stream, 1800, std::nullopt, "C9");
  ASSERT_EQ(sel.gaps.size(), 1u);
  EXPECT_EQ(sel.gaps[0].cam_id, "C9");
  EXPECT_EQ(sel.gaps[0].gap_start, 3600);
  EXPECT_EQ(sel.gaps[0].gap_end, 7200);
  EXPECT_EQ(sel.indices.size(), 4u);
}

TEST(Sampling, TieGoesToEarlier) {
  const std::vector<Timestamp> stream{1790, 1810};
  const auto sel = sample_indices(stream, 1800);
  ASSERT_EQ(sel.indices.size(), 1u);
  EXPECT_EQ(sel.indices[0], 0u);
}

TEST(Sampling, RejectsBadInterval) {
  const std::vector<Timestamp> stream{1, 2};
  EXPECT_THROW(sample_indices(stream, 0), InvalidArgument);
}

TEST(Filenames, Timestamp) {
  EXPECT_EQ(timestamp_from_filename("1706745600.png"), 1706745600);
  EXPECT_EQ(timestamp_from_filename("12.JPG"), 12);
  EXPECT_FALSE(timestamp_from_filename("abc.png"));
  EXPECT_FALSE(timestamp_from_filename("12.gif"));
}

TEST(Ingest, StoresSkipsAndQuarantines) {
  tvtest::TempDir dir;
  CameraRegistry reg;
  reg.register_camera(cam("C001"));
  reg.register_camera(cam("C002"));
  for (int i = 0; i < 10; ++i) {
    const std::string c = i < 5 ? "C001" : "C002";
    save_png(pattern(i), dir.str("src/" + c + "/" + std::to_string(1000 + i) + ".png"));
  }
  tvtest::write_file(dir.str("src/C001/2000.png"), "not an image");
  tvtest::write_file(dir.str("src/C002/2001.jpg"), "\xff\xd8 truncated");
  save_png(pattern(99), dir.str("src/ZZZ/3000.png"));

  const auto rep = ingest_directory(dir.str("src"), reg, dir.str("out"));
  EXPECT_EQ(rep.stored, 10u);
  EXPECT_EQ(rep.skipped, 2u);
  EXPECT_EQ(rep.quarantined, 1u);
  EXPECT_TRUE(std::filesystem::exists(dir.str("out/quarantine/ZZZ/3000.png")));
  const auto frames = load_camera_frames(dir.str("out/frames_gray"), "C001");
  ASSERT_EQ(frames.size(), 5u);
  EXPECT_EQ(frames[0].timestamp, 1000);
  EXPECT_EQ(frames[0].pixels, pattern(0));
  EXPECT_EQ(list_cameras(dir.str("out/frames_gray")), (std::vector<std::string>{"C001", "C002"}));
}

TEST(Ingest, UnknownCameraOnly) {
  tvtest::TempDir dir;
  CameraRegistry reg;
  save_png(pattern(1), dir.str("src/ZZZ/5.png"));
  const auto rep = ingest_directory(dir.str("src"), reg, dir.str("out"));
  EXPECT_EQ(rep.stored, 0u);
  EXPECT_EQ(rep.quarantined, 1u);
}

TEST(Ingest, Idempotent) {
  tvtest::TempDir dir;
  CameraRegistry reg;
  reg.register_camera(cam("C001"));
  save_png(pattern(3), dir.str("src/C001/7.png"));
  ingest_directory(dir.str("src"), reg, dir.str("out"));
  const auto first = tvtest::read_file(canonical_frame_path(dir.str("out"), "C001", 7));
  ingest_directory(dir.str("src"), reg, dir.str("out"));
  EXPECT_EQ(tvtest::read_file(canonical_frame_path(dir.str("out"), "C001", 7)), first);
}

TEST(GapLog, AppendsJsonLines) {
  tvtest::TempDir dir;
  const std::vector<Gap> gaps{{"C1", 10, 20}, {"C1", 40, 40}};
  append_gap_log(dir.str("gaps.jsonl"), gaps);
  append_gap_log(dir.str("gaps.jsonl"), std::span(gaps).first(1));
  const auto text = tvtest::read_file(dir.str("gaps.jsonl"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_NE(text.find("\"gap_start\":10"), std::string::npos);
}
