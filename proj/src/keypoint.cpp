#include "trafficview/keypoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/Core>

#include "trafficview/error.hpp"

namespace trafficview::keypoint {

namespace {

struct Plane {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.f) {}
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

Plane blur(const Plane& src, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Plane tmp(src.rows, src.cols);
  for (int r = 0; r < src.rows; ++r) {
    for (int c = 0; c < src.cols; ++c) {
      float acc = 0.f;
      if (c >= radius && c + radius < src.cols) {
        const float* p = &src.data[static_cast<std::size_t>(r) * src.cols + c - radius];
        for (std::size_t i = 0; i < k.size(); ++i) acc += k[i] * p[i];
      } else {
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src.at(r, reflect101(c + i, src.cols));
      }
      tmp.at(r, c) = acc;
    }
  }
  Plane out(src.rows, src.cols);
  for (int r = 0; r < src.rows; ++r) {
    const bool interior = r >= radius && r + radius < src.rows;
    for (int c = 0; c < src.cols; ++c) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i) {
        int rr = interior ? r + i : reflect101(r + i, src.rows);
        acc += k[i + radius] * tmp.at(rr, c);
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

Plane downsample(const Plane& src) {
  Plane out(std::max(1, src.rows / 2), std::max(1, src.cols / 2));
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = src.at(2 * r, 2 * c);
  return out;
}

Plane subtract(const Plane& a, const Plane& b) {
  Plane out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

struct Octave {
  std::vector<Plane> gauss;  // scales_per_octave + 3 images
  std::vector<Plane> dog;    // scales_per_octave + 2 images
};

std::vector<Octave> build_pyramid(const GrayImage& image, const DetectorParams& p) {
  Plane base(image.rows(), image.cols());
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) base.at(r, c) = image.at(r, c) / 255.f;

  const double init = std::sqrt(std::max(p.base_sigma * p.base_sigma - p.assumed_blur * p.assumed_blur, 0.01));
  base = blur(base, init);

  const int s = p.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / s);
  std::vector<double> increments(s + 3, 0.0);
  for (int i = 1; i < s + 3; ++i) {
    double prev = p.base_sigma * std::pow(k, i - 1);
    double total = prev * k;
    increments[i] = std::sqrt(total * total - prev * prev);
  }

  std::vector<Octave> pyramid;
  for (int o = 0; o < p.octaves; ++o) {
    if (base.rows < 16 || base.cols < 16) break;
    Octave oct;
    oct.gauss.push_back(base);
    for (int i = 1; i < s + 3; ++i) oct.gauss.push_back(blur(oct.gauss.back(), increments[i]));
    for (int i = 0; i + 1 < s + 3; ++i) oct.dog.push_back(subtract(oct.gauss[i + 1], oct.gauss[i]));
    base = downsample(oct.gauss[s]);
    pyramid.push_back(std::move(oct));
  }
  return pyramid;
}

bool is_extremum(const std::vector<Plane>& dog, int layer, int r, int c) {
  const float v = dog[layer].at(r, c);
  const bool is_max = v > 0;
  for (int l = layer - 1; l <= layer + 1; ++l) {
    const Plane& d = dog[l];
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (l == layer && dr == 0 && dc == 0) continue;
        const float n = d.at(r + dr, c + dc);
        if (is_max ? n >= v : n <= v) return false;
      }
    }
  }
  return true;
}

struct Refined {
  int layer = 0;
  int r = 0;
  int c = 0;
  double dx = 0, dy = 0, ds = 0;
  double value = 0;
};

// Quadratic fit of the DoG around a discrete extremum; rejects low contrast
// and edge-like responses.
bool refine(const std::vector<Plane>& dog, int layer, int r, int c, int scales, const DetectorParams& p, Refined& out) {
  double dx = 0, dy = 0, ds = 0;
  double grad[3] = {};
  int i = 0;
  for (; i < 5; ++i) {
    const Plane& cur = dog[layer];
    const Plane& prv = dog[layer - 1];
    const Plane& nxt = dog[layer + 1];
    const double v2 = 2.0 * cur.at(r, c);
    grad[0] = 0.5 * (cur.at(r, c + 1) - cur.at(r, c - 1));
    grad[1] = 0.5 * (cur.at(r + 1, c) - cur.at(r - 1, c));
    grad[2] = 0.5 * (nxt.at(r, c) - prv.at(r, c));
    const double dxx = cur.at(r, c + 1) + cur.at(r, c - 1) - v2;
    const double dyy = cur.at(r + 1, c) + cur.at(r - 1, c) - v2;
    const double dss = nxt.at(r, c) + prv.at(r, c) - v2;
    const double dxy = 0.25 * (cur.at(r + 1, c + 1) - cur.at(r + 1, c - 1) - cur.at(r - 1, c + 1) + cur.at(r - 1, c - 1));
    const double dxs = 0.25 * (nxt.at(r, c + 1) - nxt.at(r, c - 1) - prv.at(r, c + 1) + prv.at(r, c - 1));
    const double dys = 0.25 * (nxt.at(r + 1, c) - nxt.at(r - 1, c) - prv.at(r + 1, c) + prv.at(r - 1, c));
    // Solve H * offset = -grad (3x3, Cramer's rule).
    const double h[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
    const double det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) -
                       h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0]) +
                       h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if (std::abs(det) < 1e-12) return false;
    auto solve_col = [&](int col) {
      double m[3][3];
      std::memcpy(m, h, sizeof m);
      for (int k = 0; k < 3; ++k) m[k][col] = -grad[k];
      return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
              m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) /
             det;
    };
    dx = solve_col(0);
    dy = solve_col(1);
    ds = solve_col(2);
    if (std::abs(dx) < 0.5 && std::abs(dy) < 0.5 && std::abs(ds) < 0.5) break;
    if (std::abs(dx) > 1e3 || std::abs(dy) > 1e3 || std::abs(ds) > 1e3) return false;
    c += static_cast<int>(std::lround(dx));
    r += static_cast<int>(std::lround(dy));
    layer += static_cast<int>(std::lround(ds));
    if (layer < 1 || layer > scales || r < 1 || c < 1 || r >= cur.rows - 1 || c >= cur.cols - 1) return false;
  }
  if (i >= 5) return false;

  const Plane& cur = dog[layer];
  const double value = cur.at(r, c) + 0.5 * (grad[0] * dx + grad[1] * dy + grad[2] * ds);
  if (std::abs(value) < p.contrast_threshold) return false;

  const double v2 = 2.0 * cur.at(r, c);
  const double dxx = cur.at(r, c + 1) + cur.at(r, c - 1) - v2;
  const double dyy = cur.at(r + 1, c) + cur.at(r - 1, c) - v2;
  const double dxy = 0.25 * (cur.at(r + 1, c + 1) - cur.at(r + 1, c - 1) - cur.at(r - 1, c + 1) + cur.at(r - 1, c - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double er = p.edge_ratio;
  if (det <= 0 || tr * tr * er >= (er + 1) * (er + 1) * det) return false;

  out = Refined{layer, r, c, dx, dy, ds, value};
  return true;
}

constexpr double kPi = std::numbers::pi;

float dominant_orientation(const Plane& img, int r, int c, double sigma_oct) {
  constexpr int kBins = 36;
  double hist[kBins] = {};
  const double weight_sigma = 1.5 * sigma_oct;
  const int radius = static_cast<int>(std::lround(3.0 * weight_sigma));
  const double denom = -1.0 / (2.0 * weight_sigma * weight_sigma);
  for (int i = -radius; i <= radius; ++i) {
    const int y = r + i;
    if (y <= 0 || y >= img.rows - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = c + j;
      if (x <= 0 || x >= img.cols - 1) continue;
      const double gx = img.at(y, x + 1) - img.at(y, x - 1);
      const double gy = img.at(y + 1, x) - img.at(y - 1, x);
      const double mag = std::sqrt(gx * gx + gy * gy);
      double angle = std::atan2(gy, gx) * 180.0 / kPi;
      if (angle < 0) angle += 360.0;
      int bin = static_cast<int>(std::lround(angle * kBins / 360.0)) % kBins;
      hist[bin] += std::exp((i * i + j * j) * denom) * mag;
    }
  }
  // Circular smoothing, as in Lowe's reference implementation.
  double smooth[kBins];
  for (int b = 0; b < kBins; ++b) {
    smooth[b] = (hist[(b + kBins - 2) % kBins] + hist[(b + 2) % kBins]) * (1.0 / 16) +
                (hist[(b + kBins - 1) % kBins] + hist[(b + 1) % kBins]) * (4.0 / 16) + hist[b] * (6.0 / 16);
  }
  int best = 0;
  for (int b = 1; b < kBins; ++b)
    if (smooth[b] > smooth[best]) best = b;
  const double l = smooth[(best + kBins - 1) % kBins];
  const double rgt = smooth[(best + 1) % kBins];
  const double denom2 = l - 2 * smooth[best] + rgt;
  double offset = denom2 != 0.0 ? 0.5 * (l - rgt) / denom2 : 0.0;
  double angle = (best + offset) * 360.0 / kBins;
  angle = std::fmod(angle, 360.0);
  if (angle < 0) angle += 360.0;
  if (angle >= 360.0) angle = 0.0;
  return static_cast<float>(angle);
}

bool compute_descriptor(const Plane& img, double x, double y, double sigma_oct, double orientation_deg, Descriptor& out) {
  constexpr int kWidth = 4;
  constexpr int kBins = 8;
  const double hist_width = 3.0 * sigma_oct;
  const int radius =
      static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (kWidth + 1) * 0.5));
  const double angle = orientation_deg * kPi / 180.0;
  const double cos_t = std::cos(angle) / hist_width;
  const double sin_t = std::sin(angle) / hist_width;
  const double exp_scale = -1.0 / (kWidth * kWidth * 0.5);
  const int xi = static_cast<int>(std::lround(x));
  const int yi = static_cast<int>(std::lround(y));

  double hist[kWidth + 2][kWidth + 2][kBins + 1] = {};
  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      // Rotate the sample offset into the keypoint frame.
      const double c_rot = j * cos_t + i * sin_t;
      const double r_rot = -j * sin_t + i * cos_t;
      const double rbin = r_rot + kWidth / 2.0 - 0.5;
      const double cbin = c_rot + kWidth / 2.0 - 0.5;
      if (rbin <= -1 || rbin >= kWidth || cbin <= -1 || cbin >= kWidth) continue;
      const int py = yi + i;
      const int px = xi + j;
      if (py <= 0 || py >= img.rows - 1 || px <= 0 || px >= img.cols - 1) continue;
      const double gx = img.at(py, px + 1) - img.at(py, px - 1);
      const double gy = img.at(py + 1, px) - img.at(py - 1, px);
      const double mag = std::sqrt(gx * gx + gy * gy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      double ori = std::atan2(gy, gx) - angle;
      while (ori < 0) ori += 2 * kPi;
      while (ori >= 2 * kPi) ori -= 2 * kPi;
      const double obin = ori * kBins / (2 * kPi);

      // Trilinear distribution over (row, col, orientation).
      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin));
      const double dr = rbin - r0, dc = cbin - c0, dobin = obin - o0;
      for (int a = 0; a <= 1; ++a) {
        const double wr = a ? dr : 1 - dr;
        for (int b = 0; b <= 1; ++b) {
          const double wc = b ? dc : 1 - dc;
          for (int o = 0; o <= 1; ++o) {
            const double wo = o ? dobin : 1 - dobin;
            hist[r0 + 1 + a][c0 + 1 + b][(o0 + o) % kBins] += mag * wr * wc * wo;
          }
        }
      }
    }
  }

  std::array<double, kDescriptorSize> v{};
  std::size_t n = 0;
  for (int r = 1; r <= kWidth; ++r)
    for (int c = 1; c <= kWidth; ++c)
      for (int o = 0; o < kBins; ++o) v[n++] = hist[r][c][o];

  auto normalize = [&v] {
    double s = 0;
    for (double e : v) s += e * e;
    s = std::sqrt(s);
    if (s <= 0) return false;
    for (double& e : v) e /= s;
    return true;
  };
  if (!normalize()) return false;
  for (double& e : v) e = std::min(e, 0.2);
  if (!normalize()) return false;
  for (std::size_t i = 0; i < kDescriptorSize; ++i) out[i] = static_cast<float>(v[i]);
  return true;
}

}  // namespace

Features detect_keypoints(const GrayImage& image, const DetectorParams& params) {
  if (params.max_count < 1) throw InvalidArgument("max_count must be >= 1");
  if (params.scales_per_octave < 1 || params.octaves < 1) throw InvalidArgument("pyramid shape must be positive");
  Features result;
  if (image.empty()) return result;

  const auto pyramid = build_pyramid(image, params);
  const int s = params.scales_per_octave;
  const float pre_threshold = static_cast<float>(0.5 * params.contrast_threshold);

  struct Candidate {
    Keypoint kp;
    Descriptor desc;
  };
  std::vector<Candidate> candidates;

  for (int o = 0; o < static_cast<int>(pyramid.size()); ++o) {
    const auto& oct = pyramid[o];
    const double octave_scale = std::ldexp(1.0, o);
    for (int layer = 1; layer <= s; ++layer) {
      const Plane& d = oct.dog[layer];
      for (int r = 1; r < d.rows - 1; ++r) {
        for (int c = 1; c < d.cols - 1; ++c) {
          if (std::abs(d.at(r, c)) < pre_threshold) continue;
          if (!is_extremum(oct.dog, layer, r, c)) continue;
          ++result.raw_extrema;
          Refined ref;
          if (!refine(oct.dog, layer, r, c, s, params, ref)) continue;

          const double x = (ref.c + ref.dx) * octave_scale;
          const double y = (ref.r + ref.dy) * octave_scale;
          const double b = params.border;
          if (x < b || y < b || x >= image.cols() - b || y >= image.rows() - b) continue;

          const double sigma_oct = params.base_sigma * std::pow(2.0, (ref.layer + ref.ds) / s);
          const Plane& g = oct.gauss[ref.layer];
          Candidate cand;
          cand.kp.x = static_cast<float>(x);
          cand.kp.y = static_cast<float>(y);
          cand.kp.scale = static_cast<float>(sigma_oct * octave_scale);
          cand.kp.response = static_cast<float>(std::abs(ref.value));
          cand.kp.octave = o;
          cand.kp.orientation = dominant_orientation(g, ref.r, ref.c, sigma_oct);
          if (!compute_descriptor(g, ref.c + ref.dx, ref.r + ref.dy, sigma_oct, cand.kp.orientation, cand.desc)) continue;
          candidates.push_back(cand);
        }
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.kp.response != b.kp.response) return a.kp.response > b.kp.response;
    if (a.kp.y != b.kp.y) return a.kp.y < b.kp.y;
    if (a.kp.x != b.kp.x) return a.kp.x < b.kp.x;
    return a.kp.scale < b.kp.scale;
  });
  if (candidates.size() > static_cast<std::size_t>(params.max_count)) candidates.resize(params.max_count);

  result.keypoints.reserve(candidates.size());
  result.descriptors.reserve(candidates.size());
  for (auto& c : candidates) {
    result.keypoints.push_back(c.kp);
    result.descriptors.push_back(c.desc);
  }
  return result;
}

MatchSet match_descriptors(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("ratio must lie in (0, 1)");
  MatchSet out;
  if (a.empty() || b.size() < 2) return out;

  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> ma(a.front().data(), static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(kDescriptorSize));
  const Eigen::Map<const RowMat> mb(b.front().data(), static_cast<Eigen::Index>(b.size()), static_cast<Eigen::Index>(kDescriptorSize));
  const Eigen::VectorXf nb = mb.rowwise().squaredNorm();

  auto exact = [](const float* p, const float* q) {
    float d = 0.f;
    for (std::size_t k = 0; k < kDescriptorSize; ++k) {
      const float t = p[k] - q[k];
      d += t * t;
    }
    return d;
  };

  // Candidate ranking through |a|^2 + |b|^2 - 2ab in row blocks; the two
  // nearest candidates are then re-measured exactly.
  constexpr Eigen::Index kBlock = 256;
  RowMat g;
  for (Eigen::Index start = 0; start < ma.rows(); start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, ma.rows() - start);
    g.noalias() = ma.middleRows(start, rows) * mb.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      float best = std::numeric_limits<float>::max();
      float second = std::numeric_limits<float>::max();
      Eigen::Index best_j = -1;
      Eigen::Index second_j = -1;
      for (Eigen::Index j = 0; j < mb.rows(); ++j) {
        const float d = nb(j) - 2.f * g(r, j);
        if (d < best) {
          second = best;
          second_j = best_j;
          best = d;
          best_j = j;
        } else if (d < second) {
          second = d;
          second_j = j;
        }
      }
      const std::size_t i = static_cast<std::size_t>(start + r);
      float d_best = exact(a[i].data(), b[static_cast<std::size_t>(best_j)].data());
      float d_second = exact(a[i].data(), b[static_cast<std::size_t>(second_j)].data());
      if (d_second < d_best) {
        std::swap(d_best, d_second);
        std::swap(best_j, second_j);
      }
      const double d1 = std::sqrt(static_cast<double>(d_best));
      const double d2 = std::sqrt(static_cast<double>(d_second));
      if (d1 < ratio * d2) out.pairs.push_back(Match{static_cast<int>(i), static_cast<int>(best_j), static_cast<float>(d1)});
    }
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'T', 'V', 'K', 'P'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

void save_features(const Features& features, const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint32_t version = kCacheVersion;
  const std::uint64_t n = features.keypoints.size();
  const std::uint64_t raw = features.raw_extrema;
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&raw), sizeof raw);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& k = features.keypoints[i];
    const float f[5] = {k.x, k.y, k.scale, k.orientation, k.response};
    const std::int32_t oct = k.octave;
    out.write(reinterpret_cast<const char*>(f), sizeof f);
    out.write(reinterpret_cast<const char*>(&oct), sizeof oct);
    out.write(reinterpret_cast<const char*>(features.descriptors[i].data()), sizeof(float) * kDescriptorSize);
  }
  if (!out) throw IoError("short write to " + path);
}

bool load_features(const std::string& path, Features& result) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t n = 0, raw = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&raw), sizeof raw);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != kCacheVersion || n > (1u << 24)) return false;
  Features f;
  f.raw_extrema = raw;
  f.keypoints.resize(n);
  f.descriptors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v[5];
    std::int32_t oct = 0;
    in.read(reinterpret_cast<char*>(v), sizeof v);
    in.read(reinterpret_cast<char*>(&oct), sizeof oct);
    in.read(reinterpret_cast<char*>(f.descriptors[i].data()), sizeof(float) * kDescriptorSize);
    f.keypoints[i] = Keypoint{v[0], v[1], v[2], v[3], v[4], oct};
  }
  if (!in) return false;
  result = std::move(f);
  return true;
}

}  // namespace trafficview::keypoint
