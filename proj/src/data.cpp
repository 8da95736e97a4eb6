#include "rg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "rg/pgm.hpp"

namespace rg {

void DatasetSpec::validate() const {
  if (image_size < 16)
    throw std::invalid_argument("DatasetSpec: image_size must be >= 16");
  if (n_keypoints < 1 || n_keypoints > 5)
    throw std::invalid_argument("DatasetSpec: n_keypoints must be 1..5");
  if (occlusion_rate < 0.0 || occlusion_rate > 1.0)
    throw std::invalid_argument("DatasetSpec: occlusion_rate not in [0,1]");
  if (ambiguity < 0.0 || ambiguity > 1.0)
    throw std::invalid_argument("DatasetSpec: ambiguity not in [0,1]");
  if (noise_std < 0.0)
    throw std::invalid_argument("DatasetSpec: noise_std must be >= 0");
}

namespace {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

double dist_point_segment(double px, double py, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = a.x + t * dx, cy = a.y + t * dy;
  return std::hypot(px - cx, py - cy);
}

// 2px-wide anti-aliased segment, max-composited over the canvas.
void draw_segment(Tensor& img, Vec2 a, Vec2 b, double intensity) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - 2);
  const int x1 = std::min(img.width - 1,
                          static_cast<int>(std::ceil(std::max(a.x, b.x))) + 2);
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - 2);
  const int y1 = std::min(img.height - 1,
                          static_cast<int>(std::ceil(std::max(a.y, b.y))) + 2);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = dist_point_segment(x, y, a, b);
      const double cover = std::clamp(1.25 - d, 0.0, 1.0);
      if (cover > 0.0)
        img.at(0, y, x) = std::max(img.at(0, y, x), intensity * cover);
    }
}

void draw_disc(Tensor& img, Vec2 c, double radius, double intensity) {
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - radius)) - 1);
  const int x1 = std::min(img.width - 1,
                          static_cast<int>(std::ceil(c.x + radius)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - radius)) - 1);
  const int y1 = std::min(img.height - 1,
                          static_cast<int>(std::ceil(c.y + radius)) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - c.x, y - c.y);
      const double cover = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (cover > 0.0)
        img.at(0, y, x) = std::max(img.at(0, y, x), intensity * cover);
    }
}

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t h = seed ^ (index + 0x9e3779b97f4a7c15ULL + (seed << 6) +
                            (seed >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

Sample generate_sample(const DatasetSpec& spec, std::uint32_t index) {
  spec.validate();
  if (index >= spec.n_samples)
    throw std::invalid_argument("generate_sample: index out of range");
  const int S = static_cast<int>(spec.image_size);
  std::mt19937_64 rng(mix_seed(spec.seed, index));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const double h = S * (0.32 + 0.10 * uni(rng));
  const Vec2 center{S * (0.42 + 0.16 * uni(rng)), S * (0.42 + 0.16 * uni(rng))};
  const double theta = (uni(rng) - 0.5) * 0.5;
  const Vec2 up{std::sin(theta), -std::cos(theta)};
  const Vec2 right{std::cos(theta), std::sin(theta)};
  const Vec2 down = -1.0 * up;

  const Vec2 neck = center + 0.55 * h * up;
  const Vec2 pelvis = center + 0.35 * h * down;
  const Vec2 head = neck + 0.26 * h * up;
  const double head_r = 0.15 * h;

  auto limb_end = [&](Vec2 base, double len, double phi, double side) {
    const Vec2 dir = std::cos(phi) * down + (side * std::sin(phi)) * right;
    return base + len * dir;
  };
  const double arm_len = 0.55 * h * (0.85 + 0.25 * uni(rng));
  const double phi_al = 0.35 + 0.9 * uni(rng);
  const double phi_ar = 0.35 + 0.9 * uni(rng);
  const double leg_len = 0.78 * h * (0.9 + 0.2 * uni(rng));
  const double psi_ll = 0.08 + 0.42 * uni(rng);
  const double psi_lr = 0.08 + 0.42 * uni(rng);

  auto clamp_pt = [&](Vec2 p) {
    return Vec2{std::clamp(p.x, 1.0, S - 2.0), std::clamp(p.y, 1.0, S - 2.0)};
  };
  const Vec2 hand_l = clamp_pt(limb_end(neck, arm_len, phi_al, -1.0));
  const Vec2 hand_r = clamp_pt(limb_end(neck, arm_len, phi_ar, 1.0));
  const Vec2 foot_l = clamp_pt(limb_end(pelvis, leg_len, psi_ll, -1.0));
  const Vec2 foot_r = clamp_pt(limb_end(pelvis, leg_len, psi_lr, 1.0));

  // With probability `ambiguity` the mirrored limb pairs are rendered with
  // identical local appearance; otherwise the left side is visibly brighter.
  const bool ambiguous = uni(rng) < spec.ambiguity;
  const double left_i = ambiguous ? 0.75 : 0.9;
  const double right_i = ambiguous ? 0.75 : 0.5;

  Sample s;
  s.image = Tensor(1, S, S);
  draw_segment(s.image, neck, pelvis, 0.8);
  draw_disc(s.image, head, head_r, 1.0);
  draw_segment(s.image, neck, hand_l, left_i);
  draw_segment(s.image, neck, hand_r, right_i);
  draw_segment(s.image, pelvis, foot_l, left_i);
  draw_segment(s.image, pelvis, foot_r, right_i);

  const Vec2 kp[5] = {head, hand_l, hand_r, foot_l, foot_r};
  const int M = static_cast<int>(spec.n_keypoints);
  for (int m = 0; m < M; ++m) {
    const Vec2 p = clamp_pt(kp[m]);
    s.keypoints.push_back(p.x);
    s.keypoints.push_back(p.y);
  }

  std::vector<Rect> occluders;
  for (int m = 0; m < M; ++m) {
    const bool occlude = uni(rng) < spec.occlusion_rate;
    // Parameters are always drawn so the stream layout is independent of
    // the coin flips.
    const double jx = (uni(rng) - 0.5) * 4.0;
    const double jy = (uni(rng) - 0.5) * 4.0;
    const double hw = 4.0 + 3.0 * uni(rng);
    const double hh = 4.0 + 3.0 * uni(rng);
    const double gray = 0.25 + 0.5 * uni(rng);
    if (!occlude) continue;
    const double cx = s.keypoints[2 * m] + jx;
    const double cy = s.keypoints[2 * m + 1] + jy;
    Rect r{cx - hw, cy - hh, cx + hw, cy + hh};
    occluders.push_back(r);
    const int x0 = std::max(0, static_cast<int>(std::floor(r.x0)));
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil(r.x1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(r.y0)));
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil(r.y1)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) s.image.at(0, y, x) = gray;
  }

  s.visibility.assign(M, 1);
  for (int m = 0; m < M; ++m)
    for (const Rect& r : occluders)
      if (r.contains(s.keypoints[2 * m], s.keypoints[2 * m + 1])) {
        s.visibility[m] = 0;
        break;
      }

  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, spec.noise_std);
    for (double& v : s.image.data) v += gauss(rng);
  }
  for (double& v : s.image.data) v = std::clamp(v, 0.0, 1.0);
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  d.samples.reserve(spec.n_samples);
  for (std::uint32_t i = 0; i < spec.n_samples; ++i)
    d.samples.push_back(generate_sample(spec, i));
  return d;
}

Tensor make_target(const Sample& s, int heatmap_h, int heatmap_w,
                   double radius) {
  if (radius < 0.0) throw std::invalid_argument("make_target: radius < 0");
  const int M = static_cast<int>(s.visibility.size());
  Tensor t(M, heatmap_h, heatmap_w);
  const double sx = static_cast<double>(heatmap_w) / s.image.width;
  const double sy = static_cast<double>(heatmap_h) / s.image.height;
  for (int m = 0; m < M; ++m) {
    if (!s.visibility[m]) continue;  // invisible keypoints: all-zero channel
    const double kx = s.keypoints[2 * m] * sx;
    const double ky = s.keypoints[2 * m + 1] * sy;
    if (radius == 0.0) {
      const int px = std::clamp(static_cast<int>(std::lround(kx)), 0,
                                heatmap_w - 1);
      const int py = std::clamp(static_cast<int>(std::lround(ky)), 0,
                                heatmap_h - 1);
      t.at(m, py, px) = 1.0;
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(kx - radius)));
    const int x1 = std::min(heatmap_w - 1,
                            static_cast<int>(std::ceil(kx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ky - radius)));
    const int y1 = std::min(heatmap_h - 1,
                            static_cast<int>(std::ceil(ky + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (std::hypot(x - kx, y - ky) <= radius) t.at(m, y, x) = 1.0;
  }
  return t;
}

namespace {

// Little-endian binary helpers with offset-aware diagnostics.
class Reader {
 public:
  Reader(std::ifstream& f, std::string path) : f_(f), path_(std::move(path)) {}

  void read_raw(void* dst, std::size_t len, const char* what) {
    f_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (f_.gcount() != static_cast<std::streamsize>(len))
      throw std::runtime_error(path_ + ": truncated at offset " +
                               std::to_string(offset_ + f_.gcount()) +
                               " while reading " + what);
    offset_ += len;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    read_raw(&v, sizeof(T), what);
    return v;
  }

 private:
  std::ifstream& f_;
  std::string path_;
  std::size_t offset_ = 0;
};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

constexpr char kMagic[4] = {'R', 'G', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_dataset: cannot open " + path);
  f.write(kMagic, 4);
  put(f, kVersion);
  put(f, d.spec.n_samples);
  put(f, d.spec.image_size);
  put(f, d.spec.n_keypoints);
  put(f, d.spec.occlusion_rate);
  put(f, d.spec.ambiguity);
  put(f, d.spec.noise_std);
  put(f, d.spec.seed);
  for (const Sample& s : d.samples) {
    for (double v : s.image.data) put(f, static_cast<float>(v));
    for (double v : s.keypoints) put(f, static_cast<float>(v));
    f.write(reinterpret_cast<const char*>(s.visibility.data()),
            static_cast<std::streamsize>(s.visibility.size()));
  }
  if (!f) throw std::runtime_error("write_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  Reader r(f, path);
  char magic[4];
  r.read_raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": bad magic, not an RGDS file");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported RGDS version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kVersion) + ")");
  Dataset d;
  d.spec.n_samples = r.get<std::uint32_t>("n_samples");
  d.spec.image_size = r.get<std::uint32_t>("image_size");
  d.spec.n_keypoints = r.get<std::uint32_t>("n_keypoints");
  d.spec.occlusion_rate = r.get<double>("occlusion_rate");
  d.spec.ambiguity = r.get<double>("ambiguity");
  d.spec.noise_std = r.get<double>("noise_std");
  d.spec.seed = r.get<std::uint64_t>("seed");

  const int S = static_cast<int>(d.spec.image_size);
  const int M = static_cast<int>(d.spec.n_keypoints);
  for (std::uint32_t i = 0; i < d.spec.n_samples; ++i) {
    Sample s;
    s.image = Tensor(1, S, S);
    std::vector<float> buf(s.image.size());
    r.read_raw(buf.data(), buf.size() * sizeof(float),
               ("sample " + std::to_string(i) + " image").c_str());
    for (std::size_t p = 0; p < buf.size(); ++p) s.image.data[p] = buf[p];
    std::vector<float> kps(2 * M);
    r.read_raw(kps.data(), kps.size() * sizeof(float),
               ("sample " + std::to_string(i) + " keypoints").c_str());
    s.keypoints.assign(kps.begin(), kps.end());
    s.visibility.resize(M);
    r.read_raw(s.visibility.data(), M,
               ("sample " + std::to_string(i) + " visibility").c_str());
    d.samples.push_back(std::move(s));
  }
  return d;
}

void write_manifest(const Dataset& d, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest)
    throw std::runtime_error("write_manifest: cannot open " + dir +
                             "/manifest.txt");
  char name[32];
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "sample_%05zu.pgm", i);
    write_pgm(dir + "/" + name, d.samples[i].image);
    manifest << name;
    const Sample& s = d.samples[i];
    for (std::size_t m = 0; m < s.visibility.size(); ++m)
      manifest << " " << s.keypoints[2 * m] << " " << s.keypoints[2 * m + 1]
               << " " << static_cast<int>(s.visibility[m]);
    manifest << "\n";
  }
}

}  // namespace rg
