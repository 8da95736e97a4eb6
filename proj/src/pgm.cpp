#include "rg/pgm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace rg {

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.channels != 1)
    throw std::invalid_argument("write_pgm: expected a single channel");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double v = image.at(0, y, x);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      row[x] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) throw std::runtime_error("write_pgm: write failed for " + path);
}

Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5")
    throw std::runtime_error("read_pgm: " + path + " is not binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("read_pgm: bad header in " + path);
  f.get();  // single whitespace after maxval
  Tensor img(1, h, w);
  std::vector<unsigned char> row(w);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!f) throw std::runtime_error("read_pgm: truncated pixel data in " + path);
    for (int x = 0; x < w; ++x)
      img.at(0, y, x) = static_cast<double>(row[x]) / maxval;
  }
  return img;
}

}  // namespace rg
