#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "trafficview/common.hpp"
#include "trafficview/error.hpp"
#include "trafficview/geometry.hpp"
#include "trafficview/synthgen.hpp"

using namespace trafficview;
using namespace trafficview::synthgen;

namespace {

SceneSpec three_views(int rows = 60, int cols = 80) {
  SceneSpec s;
  s.rows = rows;
  s.cols = cols;
  s.viewpoints = {{0, 1, 0, 0}, {15, 1, 0, 0}, {30, 1, 0, 0}};
  s.frames_per_viewpoint = {60, 25, 15};
  return s;
}

}  // namespace

TEST(Scene, SingleViewpointFiveFrames) {
  SceneSpec s;
  s.rows = 48;
  s.cols = 64;
  s.frames_per_viewpoint = {5};
  const auto scene = render_scene(s);
  ASSERT_EQ(scene.frames.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(scene.frames[i].timestamp, s.start_ts + Timestamp(i) * s.interval);
    EXPECT_EQ(scene.frames[i].pixels.rows(), 48);
    EXPECT_EQ(scene.labels[i].viewpoint, 0);
  }
  // Independent sensor noise per frame.
  EXPECT_NE(scene.frames[0].pixels, scene.frames[1].pixels);
}

TEST(Scene, LabelPartition) {
  const auto scene = render_scene(three_views());
  std::map<int, int> sizes;
  for (const auto& l : scene.labels) ++sizes[l.viewpoint];
  EXPECT_EQ(sizes, (std::map<int, int>{{0, 60}, {1, 25}, {2, 15}}));
  // Shuffled: the first 60 frames are not all from viewpoint 0.
  std::set<int> early;
  for (int i = 0; i < 60; ++i) early.insert(scene.labels[i].viewpoint);
  EXPECT_GT(early.size(), 1u);
}

TEST(Scene, Deterministic) {
  const auto a = render_scene(three_views(32, 40));
  const auto b = render_scene(three_views(32, 40));
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_EQ(a.frames[i].pixels, b.frames[i].pixels);
}

TEST(Scene, PairHomographyTilt) {
  const auto scene = render_scene(three_views());
  for (std::size_t j = 1; j < scene.frames.size(); ++j) {
    const double expected = 15.0 * (scene.labels[j].viewpoint - scene.labels[0].viewpoint);
    EXPECT_NEAR(geometry::tilt_angle(true_pair_homography(scene, 0, j)).theta_deg, expected, 1e-9);
  }
}

TEST(Scene, ZoomOnlyHasZeroTilt) {
  const auto h = viewpoint_homography({0, 1.5, 0, 0}, 240, 320);
  EXPECT_NEAR(geometry::tilt_angle(h).theta_deg, 0.0, 1e-12);
  // The centre stays fixed.
  const auto c = h.apply({159.5, 119.5});
  EXPECT_NEAR(c.x, 159.5, 1e-9);
  EXPECT_NEAR(c.y, 119.5, 1e-9);
}

TEST(Scene, RenderMatchesTextureAtPixelCentres) {
  // Without noise, each pixel is the 2x2 supersampled texture value.
  const auto img = render_view({}, 32, 32, 3, 8.0, 0.0, 1);
  for (int r : {3, 17})
    for (int c : {2, 30}) {
      double v = 0;
      for (double dy : {-0.25, 0.25})
        for (double dx : {-0.25, 0.25}) v += texture_value(c + dx, r + dy, 3) / 4;
      EXPECT_EQ(img.at(r, c), std::clamp(std::round(v), 0.0, 255.0));
    }
}

TEST(Scene, ValidationAndSpecFile) {
  SceneSpec bad = three_views();
  bad.frames_per_viewpoint = {60, 25};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = three_views();
  bad.viewpoints[0].scale = 10;
  EXPECT_THROW(bad.validate(), InvalidArgument);

  tvtest::TempDir dir;
  tvtest::write_file(dir.str("s.json"), R"({"cam_id": "SYN1", "rows": 120, "cols": 160, "seed": 4,
    "viewpoints": [{"rotation_deg": 0, "frames": 3}, {"rotation_deg": 20, "scale": 1.1, "frames": 2}]})");
  const auto s = load_scene_spec(dir.str("s.json"));
  EXPECT_EQ(s.cam_id, "SYN1");
  EXPECT_EQ(s.frames_per_viewpoint, (std::vector<int>{3, 2}));
  EXPECT_DOUBLE_EQ(s.viewpoints[1].scale, 1.1);
  tvtest::write_file(dir.str("bad.json"), R"({"rows": 120, "colour": 1})");
  EXPECT_THROW(load_scene_spec(dir.str("bad.json")), ParseError);
}

TEST(Packets, ConstantRateMean) {
  PacketScenario sc;
  sc.cameras = 2;
  sc.days = 3;
  sc.constant_counts = true;
  sc.rates = {4, 0, 0, 0};
  const auto g = gen_packets(sc);
  double s = 0;
  for (const auto& p : g.pre) s += double(p.counts[0]);
  EXPECT_DOUBLE_EQ(s / double(g.pre.size()), 4.0);
  EXPECT_EQ(g.pre.size(), 2u * 3u * 48u);
}

TEST(Packets, ExactShift) {
  PacketScenario sc;
  sc.cameras = 4;
  sc.days = 7;
  sc.exact_shift = true;
  sc.shift = {-0.1, 0, 0, 0};
  const auto g = gen_packets(sc);
  std::int64_t pre = 0, post = 0;
  for (const auto& p : g.pre) pre += p.counts[0];
  for (const auto& p : g.post) post += p.counts[0];
  ASSERT_GT(pre, 0);
  EXPECT_EQ(post * 10, pre * 9);
  for (std::size_t i = 0; i < g.pre.size(); ++i) EXPECT_EQ(g.post[i].counts[0] * 10, g.pre[i].counts[0] * 9);
}

TEST(Packets, TruthTallyAndCalendar) {
  PacketScenario sc;
  sc.cameras = 5;
  sc.days = 4;
  sc.missing_post_days = {2};
  const auto g = gen_packets(sc);
  std::map<std::tuple<std::string, int, int>, std::int64_t> tally;
  for (int w = 0; w < 2; ++w)
    for (const auto& p : w ? g.post : g.pre)
      for (int m = 0; m < 4; ++m) tally[{p.cam_id, m, w}] += p.counts[m];
  ASSERT_EQ(tally.size(), g.truth.size());
  for (const auto& [k, v] : tally) EXPECT_EQ(g.truth.at(k).total, v);
  EXPECT_EQ(g.post.size(), 5u * 3u * 48u);
  EXPECT_EQ(g.pre.front().t, parse_date("2024-02-05") * 86400);
  EXPECT_EQ(g.registry.size(), 5u);
  EXPECT_EQ(g.registry.count_in_zone(corpus::ZoneFlag::inside), 2u);
}
