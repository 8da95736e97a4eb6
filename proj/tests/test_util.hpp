#pragma once

#include <random>

#include "rg/model.hpp"
#include "rg/tensor.hpp"

namespace rgtest {

inline rg::Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w,
                                double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  rg::Tensor t(c, h, w);
  for (double& v : t.data) v = uni(rng);
  return t;
}

inline rg::FilterBank random_filter(std::mt19937_64& rng, int oc, int ic,
                                    int kh, int kw, int stride, int ph, int pw,
                                    double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  rg::FilterBank f(oc, ic, kh, kw, stride, ph, pw);
  for (double& v : f.data) v = uni(rng);
  return f;
}

inline double dot(const rg::Tensor& a, const rg::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// 1-D helpers: a 1 x 1 x n tensor from a list.
inline rg::Tensor row(std::initializer_list<double> vals) {
  rg::Tensor t(1, 1, static_cast<int>(vals.size()));
  std::size_t i = 0;
  for (double v : vals) t.data[i++] = v;
  return t;
}

inline rg::FilterBank row_filter(std::initializer_list<double> vals,
                                 int stride = 1, int pad = 0) {
  rg::FilterBank f(1, 1, 1, static_cast<int>(vals.size()), stride, 0, pad);
  std::size_t i = 0;
  for (double v : vals) f.data[i++] = v;
  return f;
}

}  // namespace rgtest
