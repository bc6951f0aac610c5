#include "trafficview/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "trafficview/error.hpp"

namespace trafficview::synthgen {

using nlohmann::json;

void SceneSpec::validate() const {
  if (cam_id.empty()) throw InvalidArgument("scene cam_id is empty");
  if (rows < 32 || cols < 32) throw InvalidArgument("scene must be at least 32x32");
  if (viewpoints.empty()) throw InvalidArgument("scene has no viewpoints");
  if (frames_per_viewpoint.size() != viewpoints.size()) {
    throw InvalidArgument("frames_per_viewpoint must have one entry per viewpoint");
  }
  int total = 0;
  for (int n : frames_per_viewpoint) {
    if (n < 0) throw InvalidArgument("negative frame count");
    total += n;
  }
  if (total == 0) throw InvalidArgument("scene renders no frames");
  for (const auto& vp : viewpoints) {
    if (!(vp.scale >= 0.25 && vp.scale <= 4.0)) throw InvalidArgument("viewpoint scale must lie in [0.25, 4]");
    if (!(vp.rotation_deg > -180.0 && vp.rotation_deg <= 180.0)) {
      throw InvalidArgument("viewpoint rotation must lie in (-180, 180]");
    }
    if (std::abs(vp.tx) >= cols / 2.0 || std::abs(vp.ty) >= rows / 2.0) {
      throw InvalidArgument("viewpoint translation moves the view off the shared scene");
    }
  }
  if (!(blob_cell_px >= 2.0)) throw InvalidArgument("blob_cell_px must be >= 2");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be >= 0");
  if (interval <= 0) throw InvalidArgument("interval must be positive");
}

SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scene spec " + path);
  SceneSpec s;
  try {
    const json j = json::parse(in);
    static const std::set<std::string> kKeys{"cam_id",      "rows",    "cols",     "viewpoints", "seed",
                                             "blob_cell_px", "noise_sigma", "shuffle", "start_ts",   "interval"};
    for (const auto& [k, v] : j.items())
      if (!kKeys.contains(k)) throw ParseError(path + ": unknown key '" + k + "'");
    s.cam_id = j.value("cam_id", s.cam_id);
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.seed = j.value("seed", s.seed);
    s.blob_cell_px = j.value("blob_cell_px", s.blob_cell_px);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.shuffle = j.value("shuffle", s.shuffle);
    s.start_ts = j.value("start_ts", s.start_ts);
    s.interval = j.value("interval", s.interval);
    if (j.contains("viewpoints")) {
      s.viewpoints.clear();
      s.frames_per_viewpoint.clear();
      for (const auto& v : j.at("viewpoints")) {
        s.viewpoints.push_back(Viewpoint{v.value("rotation_deg", 0.0), v.value("scale", 1.0), v.value("tx", 0.0),
                                         v.value("ty", 0.0)});
        s.frames_per_viewpoint.push_back(v.value("frames", 1));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  s.validate();
  return s;
}

geometry::Homography viewpoint_homography(const Viewpoint& vp, int rows, int cols) {
  const double cx = (cols - 1) / 2.0;
  const double cy = (rows - 1) / 2.0;
  const double a = vp.rotation_deg * std::numbers::pi / 180.0;
  const double c = vp.scale * std::cos(a);
  const double s = vp.scale * std::sin(a);
  Eigen::Matrix3d h;
  h << c, -s, cx + vp.tx - c * cx + s * cy,  //
      s, c, cy + vp.ty - s * cx - c * cy,    //
      0, 0, 1;
  return geometry::Homography(h);
}

namespace {

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::uint64_t cell_hash(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL) ^
               (static_cast<std::uint64_t>(j) * 0xc2b2ae3d27d4eb4fULL));
}

GrayImage render_clean(const geometry::Homography& frame_to_texture, int rows, int cols, std::uint64_t seed,
                       double cell_px, std::vector<double>& buffer) {
  buffer.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (double dy : {-0.25, 0.25})
        for (double dx : {-0.25, 0.25}) {
          const auto p = frame_to_texture.apply({c + dx, r + dy});
          acc += texture_value(p.x, p.y, seed, cell_px);
        }
      buffer[static_cast<std::size_t>(r) * cols + c] = acc / 4.0;
    }
  }
  GrayImage img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      img.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(buffer[static_cast<std::size_t>(r) * cols + c]), 0L, 255L));
  return img;
}

void add_noise(GrayImage& img, const std::vector<double>& clean, double sigma, std::uint64_t noise_seed) {
  if (sigma <= 0.0) return;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) {
      const double v = clean[static_cast<std::size_t>(r) * img.cols() + c] + noise(rng);
      img.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
}

}  // namespace

double texture_value(double u, double v, std::uint64_t seed, double cell_px) {
  const double p1 = unit(mix64(seed ^ 0x1111)) * 2.0 * std::numbers::pi;
  const double p2 = unit(mix64(seed ^ 0x2222)) * 2.0 * std::numbers::pi;
  double value = 128.0 + 12.0 * std::sin(0.043 * u + 0.011 * v + p1) + 9.0 * std::sin(0.031 * v - 0.017 * u + p2);

  const auto ci = static_cast<std::int64_t>(std::floor(u / cell_px));
  const auto cj = static_cast<std::int64_t>(std::floor(v / cell_px));
  for (std::int64_t i = ci - 1; i <= ci + 1; ++i) {
    for (std::int64_t j = cj - 1; j <= cj + 1; ++j) {
      const std::uint64_t h = cell_hash(i, j, seed);
      const double bx = (static_cast<double>(i) + 0.2 + 0.6 * unit(mix64(h ^ 1))) * cell_px;
      const double by = (static_cast<double>(j) + 0.2 + 0.6 * unit(mix64(h ^ 2))) * cell_px;
      const double sigma = cell_px * (0.3 + 0.1 * unit(mix64(h ^ 3)));
      const double amp = (60.0 + 60.0 * unit(mix64(h ^ 4))) * ((h & 1) ? 1.0 : -1.0);
      const double d2 = (u - bx) * (u - bx) + (v - by) * (v - by);
      if (d2 > 9.0 * sigma * sigma) continue;
      value += amp * std::exp(-d2 / (2.0 * sigma * sigma));
    }
  }
  return std::clamp(value, 0.0, 255.0);
}

GrayImage render_view(const Viewpoint& vp, int rows, int cols, std::uint64_t seed, double cell_px,
                      double noise_sigma, std::uint64_t noise_seed) {
  std::vector<double> clean;
  GrayImage img = render_clean(viewpoint_homography(vp, rows, cols).inverse(), rows, cols, seed, cell_px, clean);
  add_noise(img, clean, noise_sigma, noise_seed);
  return img;
}

RenderedScene render_scene(const SceneSpec& spec) {
  spec.validate();
  std::vector<int> order;
  for (std::size_t v = 0; v < spec.viewpoints.size(); ++v)
    order.insert(order.end(), static_cast<std::size_t>(spec.frames_per_viewpoint[v]), static_cast<int>(v));
  if (spec.shuffle) {
    std::mt19937_64 rng(mix64(spec.seed ^ 0x5cf1e));
    std::shuffle(order.begin(), order.end(), rng);
  }

  // One clean render per viewpoint; frames differ only by sensor noise.
  std::vector<std::vector<double>> clean(spec.viewpoints.size());
  std::vector<GrayImage> base(spec.viewpoints.size());
  for (std::size_t v = 0; v < spec.viewpoints.size(); ++v) {
    if (spec.frames_per_viewpoint[v] == 0) continue;
    base[v] = render_clean(viewpoint_homography(spec.viewpoints[v], spec.rows, spec.cols).inverse(), spec.rows,
                           spec.cols, spec.seed, spec.blob_cell_px, clean[v]);
  }

  RenderedScene scene;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int v = order[i];
    GrayImage img = base[static_cast<std::size_t>(v)];
    add_noise(img, clean[static_cast<std::size_t>(v)], spec.noise_sigma, mix64(spec.seed ^ (i + 1)));
    scene.frames.push_back(corpus::Frame{spec.cam_id, spec.start_ts + static_cast<Timestamp>(i) * spec.interval,
                                         std::move(img), ""});
    scene.labels.push_back(
        FrameLabel{v, viewpoint_homography(spec.viewpoints[static_cast<std::size_t>(v)], spec.rows, spec.cols)});
  }
  return scene;
}

geometry::Homography true_pair_homography(const RenderedScene& scene, std::size_t i, std::size_t j) {
  if (i >= scene.labels.size() || j >= scene.labels.size()) throw InvalidArgument("frame index out of range");
  return geometry::Homography(scene.labels[j].texture_to_frame.matrix() *
                              scene.labels[i].texture_to_frame.inverse().matrix());
}

GeneratedPackets gen_packets(const PacketScenario& sc) {
  if (sc.cameras == 0 || sc.days <= 0 || sc.packets_per_day <= 0 || 86400 % sc.packets_per_day != 0) {
    throw InvalidArgument("packet scenario needs cameras, days and a packet rate dividing the day");
  }
  GeneratedPackets out;
  static const char* kBoroughs[] = {"Manhattan", "Brooklyn", "Queens"};
  for (std::size_t c = 0; c < sc.cameras; ++c) {
    char id[16];
    std::snprintf(id, sizeof id, "C%03zu", c);
    const auto zone = static_cast<corpus::ZoneFlag>(c % 3);
    out.registry.register_camera(corpus::CameraRecord{id, 40.70 + 0.001 * static_cast<double>(c),
                                                      -73.99 + 0.001 * static_cast<double>(c),
                                                      zone == corpus::ZoneFlag::inside ? "Manhattan" : kBoroughs[c % 3],
                                                      zone, "synthetic"});
  }

  std::mt19937_64 rng(sc.seed);
  const std::int64_t step = 86400 / sc.packets_per_day;
  // exact_shift: the post window reuses the pre draw of the same slot.
  std::map<std::tuple<std::string, int, int, std::size_t>, std::int64_t> tens_drawn;
  for (int window = 0; window < 2; ++window) {
    const std::int64_t start = parse_date(window == 0 ? sc.pre_start : sc.post_start);
    const auto& missing = window == 0 ? sc.missing_pre_days : sc.missing_post_days;
    auto& dest = window == 0 ? out.pre : out.post;
    for (const auto& [cam_id, cam] : out.registry) {
      for (int d = 0; d < sc.days; ++d) {
        if (std::find(missing.begin(), missing.end(), d) != missing.end()) continue;
        for (int k = 0; k < sc.packets_per_day; ++k) {
          detection::ClassCounts counts{};
          for (std::size_t m = 0; m < detection::kClassCount; ++m) {
            const double factor = window == 1 ? 1.0 + sc.shift[m] : 1.0;
            if (sc.constant_counts) {
              counts[m] = std::llround(sc.rates[m] * factor);
            } else if (sc.exact_shift) {
              const auto slot = std::make_tuple(cam_id, d, k, m);
              auto it = tens_drawn.find(slot);
              if (it == tens_drawn.end()) {
                std::poisson_distribution<std::int64_t> tens(std::max(sc.rates[m] / 10.0, 1e-9));
                it = tens_drawn.emplace(slot, tens(rng)).first;
              }
              counts[m] = std::llround(10.0 * static_cast<double>(it->second) * factor);
            } else {
              std::poisson_distribution<std::int64_t> draw(std::max(sc.rates[m] * factor, 1e-9));
              counts[m] = draw(rng);
            }
            auto& t = out.truth[{cam_id, static_cast<int>(m), window}];
            t.total += counts[m];
            ++t.packets;
          }
          const Timestamp ts = (start + d) * 86400 + k * step - sc.utc_offset_seconds;
          dest.push_back(detection::make_packet(cam_id, ts, counts, 0));
        }
      }
    }
  }
  return out;
}

}  // namespace trafficview::synthgen
