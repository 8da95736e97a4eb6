#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rg/data.hpp"

using namespace rg;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.n_samples = 10;
  spec.image_size = 24;
  spec.n_keypoints = 5;
  spec.occlusion_rate = 0.4;
  spec.ambiguity = 0.5;
  spec.noise_std = 0.01;
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("generate_sample is a pure function of seed and index") {
  const DatasetSpec spec = small_spec();
  const Sample a = generate_sample(spec, 3);
  const Sample b = generate_sample(spec, 3);
  CHECK(a.image.data == b.image.data);
  CHECK(a.keypoints == b.keypoints);
  CHECK(a.visibility == b.visibility);

  const Sample c = generate_sample(spec, 4);
  CHECK(a.image.data != c.image.data);
}

TEST_CASE("occlusion rate 0 and 1 pin the visibility flags") {
  DatasetSpec spec = small_spec();
  spec.occlusion_rate = 0.0;
  for (std::uint32_t i = 0; i < 5; ++i) {
    const Sample s = generate_sample(spec, i);
    for (auto v : s.visibility) CHECK(v == 1);
  }
  spec.occlusion_rate = 1.0;
  for (std::uint32_t i = 0; i < 5; ++i) {
    const Sample s = generate_sample(spec, i);
    for (auto v : s.visibility) CHECK(v == 0);
  }
}

TEST_CASE("samples stay inside the image and in range") {
  const DatasetSpec spec = small_spec();
  for (std::uint32_t i = 0; i < 10; ++i) {
    const Sample s = generate_sample(spec, i);
    REQUIRE(s.keypoints.size() == 2 * spec.n_keypoints);
    for (std::size_t j = 0; j < s.keypoints.size(); ++j) {
      CHECK(s.keypoints[j] >= 0.0);
      CHECK(s.keypoints[j] < spec.image_size);
    }
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("visible keypoints lie on rendered geometry") {
  DatasetSpec spec = small_spec();
  spec.noise_std = 0.0;
  for (std::uint32_t i = 0; i < 10; ++i) {
    const Sample s = generate_sample(spec, i);
    for (std::uint32_t m = 0; m < spec.n_keypoints; ++m) {
      if (!s.visibility[m]) continue;
      const double kx = s.keypoints[2 * m], ky = s.keypoints[2 * m + 1];
      // some pixel within 1.5px of the keypoint carries figure intensity
      double best = 0.0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int px = static_cast<int>(std::lround(kx)) + dx;
          const int py = static_cast<int>(std::lround(ky)) + dy;
          if (px < 0 || py < 0 || px >= s.image.width ||
              py >= s.image.height)
            continue;
          if (std::hypot(px - kx, py - ky) > 1.5) continue;
          best = std::max(best, s.image.at(0, py, px));
        }
      CHECK(best > 0.1);
    }
  }
}

TEST_CASE("make_target marks the circular neighborhood") {
  Sample s;
  s.image = Tensor(1, 7, 7);
  s.keypoints = {3.0, 3.0};
  s.visibility = {1};
  const Tensor t = make_target(s, 7, 7, 1.0);
  REQUIRE(t.channels == 1);
  int ones = 0;
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x)
      if (t.at(0, y, x) == 1.0) ++ones;
  CHECK(ones == 5);
  CHECK(t.at(0, 3, 3) == 1.0);
  CHECK(t.at(0, 2, 3) == 1.0);
  CHECK(t.at(0, 4, 3) == 1.0);
  CHECK(t.at(0, 3, 2) == 1.0);
  CHECK(t.at(0, 3, 4) == 1.0);
}

TEST_CASE("make_target radius 0 and invisibility") {
  Sample s;
  s.image = Tensor(1, 8, 8);
  s.keypoints = {5.2, 1.7, 2.0, 2.0};
  s.visibility = {1, 0};
  const Tensor t = make_target(s, 8, 8, 0.0);
  int ones = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (t.at(0, y, x) == 1.0) ++ones;
  CHECK(ones == 1);
  CHECK(t.at(0, 2, 5) == 1.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(t.at(1, y, x) == 0.0);
}

TEST_CASE("make_target rescales to the heatmap resolution") {
  Sample s;
  s.image = Tensor(1, 16, 16);
  s.keypoints = {8.0, 4.0};
  s.visibility = {1};
  const Tensor t = make_target(s, 8, 8, 0.0);
  CHECK(t.at(0, 2, 4) == 1.0);
}

TEST_CASE("dataset round trip is byte exact") {
  const Dataset d = generate_dataset(small_spec());
  REQUIRE(d.samples.size() == 10);
  const auto path = temp_file("rg_roundtrip.rgds");
  write_dataset(d, path.string());
  const Dataset loaded = load_dataset(path.string());
  REQUIRE(loaded.samples.size() == d.samples.size());
  CHECK(loaded.spec.seed == d.spec.seed);
  // storage is float32: loaded values must equal the float-cast originals,
  // and a second write must be byte-identical to the first
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    REQUIRE(loaded.samples[i].keypoints.size() == d.samples[i].keypoints.size());
    for (std::size_t j = 0; j < d.samples[i].keypoints.size(); ++j)
      CHECK(loaded.samples[i].keypoints[j] ==
            static_cast<double>(static_cast<float>(d.samples[i].keypoints[j])));
    CHECK(loaded.samples[i].visibility == d.samples[i].visibility);
  }
  const auto path2 = temp_file("rg_roundtrip2.rgds");
  write_dataset(loaded, path2.string());
  CHECK(slurp(path) == slurp(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("header-only file with zero samples is valid") {
  DatasetSpec spec = small_spec();
  spec.n_samples = 0;
  Dataset d;
  d.spec = spec;
  const auto path = temp_file("rg_empty.rgds");
  write_dataset(d, path.string());
  const Dataset loaded = load_dataset(path.string());
  CHECK(loaded.samples.empty());
  std::filesystem::remove(path);
}

TEST_CASE("truncated files report what was being read") {
  DatasetSpec spec = small_spec();
  spec.n_samples = 2;
  const Dataset d = generate_dataset(spec);
  const auto path = temp_file("rg_trunc.rgds");
  write_dataset(d, path.string());
  auto bytes = slurp(path);
  bytes.resize(bytes.size() / 2);
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());

  bool threw = false;
  try {
    load_dataset(path.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  CHECK(threw);

  // wrong magic
  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_dataset(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("manifest export writes one image and line per sample") {
  DatasetSpec spec = small_spec();
  spec.n_samples = 3;
  const Dataset d = generate_dataset(spec);
  const auto dir = temp_file("rg_manifest_dir");
  std::filesystem::create_directories(dir);
  write_manifest(d, dir.string());
  std::ifstream manifest(dir / "manifest.txt");
  REQUIRE(manifest.good());
  int lines = 0;
  std::string line;
  while (std::getline(manifest, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 3);
  CHECK(std::filesystem::exists(dir / "sample_00000.pgm"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("spec validation rejects out-of-range values") {
  DatasetSpec spec = small_spec();
  spec.occlusion_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.image_size = 4;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.n_keypoints = 6;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
