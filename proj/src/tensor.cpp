#include "rg/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace rg {

namespace {

void check_finite_shape(const FilterBank& f) {
  if (f.out_channels <= 0 || f.in_channels <= 0 || f.k_h <= 0 || f.k_w <= 0)
    throw std::invalid_argument("filter bank has empty extent");
  if (f.stride < 1) throw std::invalid_argument("filter stride must be >= 1");
  if (f.pad_h < 0 || f.pad_w < 0)
    throw std::invalid_argument("filter padding must be >= 0");
  if (f.data.size() != static_cast<std::size_t>(f.out_channels) *
                           f.in_channels * f.k_h * f.k_w)
    throw std::invalid_argument("filter bank data length mismatch");
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

Dims correlate_out_dims(const FilterBank& f, Dims in) {
  const int oh = (in.height + 2 * f.pad_h - f.k_h) / f.stride + 1;
  const int ow = (in.width + 2 * f.pad_w - f.k_w) / f.stride + 1;
  return {f.out_channels, oh, ow};
}

Tensor correlate(const FilterBank& f, const Tensor& x) {
  check_finite_shape(f);
  if (x.channels != f.in_channels)
    throw std::invalid_argument(
        "correlate: input has " + std::to_string(x.channels) +
        " channels, filter expects " + std::to_string(f.in_channels));
  if (x.height + 2 * f.pad_h < f.k_h || x.width + 2 * f.pad_w < f.k_w)
    throw std::invalid_argument(
        "correlate: padded input smaller than kernel (" +
        std::to_string(x.height) + "x" + std::to_string(x.width) + " vs " +
        std::to_string(f.k_h) + "x" + std::to_string(f.k_w) + ")");

  const Dims od = correlate_out_dims(f, x.dims());
  Tensor out(od);
  for (int oc = 0; oc < od.channels; ++oc) {
    for (int ic = 0; ic < f.in_channels; ++ic) {
      for (int oy = 0; oy < od.height; ++oy) {
        for (int ky = 0; ky < f.k_h; ++ky) {
          const int iy = oy * f.stride + ky - f.pad_h;
          if (iy < 0 || iy >= x.height) continue;
          const double* xrow = &x.data[(static_cast<std::size_t>(ic) * x.height + iy) * x.width];
          const double* frow = &f.data[((static_cast<std::size_t>(oc) * f.in_channels + ic) * f.k_h + ky) * f.k_w];
          double* orow = &out.data[(static_cast<std::size_t>(oc) * od.height + oy) * od.width];
          for (int ox = 0; ox < od.width; ++ox) {
            const int x0 = ox * f.stride - f.pad_w;
            double acc = 0.0;
            for (int kx = 0; kx < f.k_w; ++kx) {
              const int ix = x0 + kx;
              if (ix < 0 || ix >= x.width) continue;
              acc += frow[kx] * xrow[ix];
            }
            orow[ox] += acc;
          }
        }
      }
    }
  }
  return out;
}

Tensor convolve_transposed(const FilterBank& f, const Tensor& z, Dims out) {
  check_finite_shape(f);
  if (z.channels != f.out_channels)
    throw std::invalid_argument(
        "convolve_transposed: signal has " + std::to_string(z.channels) +
        " channels, filter produces " + std::to_string(f.out_channels));
  if (out.channels != f.in_channels)
    throw std::invalid_argument("convolve_transposed: out_shape channel count "
                                "does not match filter in_channels");
  const Dims fwd = correlate_out_dims(f, out);
  if (fwd.height != z.height || fwd.width != z.width)
    throw std::invalid_argument(
        "convolve_transposed: out_shape " + std::to_string(out.height) + "x" +
        std::to_string(out.width) + " is not the adjoint preimage of " +
        std::to_string(z.height) + "x" + std::to_string(z.width));

  Tensor res(out);
  for (int oc = 0; oc < f.out_channels; ++oc) {
    for (int ic = 0; ic < f.in_channels; ++ic) {
      for (int oy = 0; oy < z.height; ++oy) {
        for (int ky = 0; ky < f.k_h; ++ky) {
          const int iy = oy * f.stride + ky - f.pad_h;
          if (iy < 0 || iy >= out.height) continue;
          const double* zrow = &z.data[(static_cast<std::size_t>(oc) * z.height + oy) * z.width];
          const double* frow = &f.data[((static_cast<std::size_t>(oc) * f.in_channels + ic) * f.k_h + ky) * f.k_w];
          double* rrow = &res.data[(static_cast<std::size_t>(ic) * out.height + iy) * out.width];
          for (int ox = 0; ox < z.width; ++ox) {
            const int x0 = ox * f.stride - f.pad_w;
            const double zv = zrow[ox];
            for (int kx = 0; kx < f.k_w; ++kx) {
              const int ix = x0 + kx;
              if (ix < 0 || ix >= out.width) continue;
              rrow[ix] += frow[kx] * zv;
            }
          }
        }
      }
    }
  }
  return res;
}

Tensor interlace_zeros(const Tensor& z, int stride, int target_h,
                       int target_w) {
  if (stride < 1) throw std::invalid_argument("interlace_zeros: stride < 1");
  if (ceil_div(target_h, stride) != z.height ||
      ceil_div(target_w, stride) != z.width)
    throw std::invalid_argument(
        "interlace_zeros: target " + std::to_string(target_h) + "x" +
        std::to_string(target_w) + " incompatible with input " +
        std::to_string(z.height) + "x" + std::to_string(z.width) +
        " at stride " + std::to_string(stride));
  Tensor out(z.channels, target_h, target_w);
  for (int c = 0; c < z.channels; ++c)
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x)
        out.at(c, y * stride, x * stride) = z.at(c, y, x);
  return out;
}

Tensor subsample(const Tensor& x, int stride) {
  if (stride < 1) throw std::invalid_argument("subsample: stride < 1");
  Tensor out(x.channels, ceil_div(x.height, stride), ceil_div(x.width, stride));
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx)
        out.at(c, y, xx) = x.at(c, y * stride, xx * stride);
  return out;
}

Tensor rectify(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = std::max(0.0, v);
  return out;
}

FilterBank correlate_filter_grad(const Tensor& g_out, const Tensor& x,
                                 const FilterBank& like) {
  check_finite_shape(like);
  if (x.channels != like.in_channels || g_out.channels != like.out_channels)
    throw std::invalid_argument("correlate_filter_grad: channel mismatch");
  const Dims fwd = correlate_out_dims(like, x.dims());
  if (fwd.height != g_out.height || fwd.width != g_out.width)
    throw std::invalid_argument("correlate_filter_grad: g_out shape mismatch");

  FilterBank df(like.out_channels, like.in_channels, like.k_h, like.k_w,
                like.stride, like.pad_h, like.pad_w);
  for (int oc = 0; oc < like.out_channels; ++oc) {
    for (int ic = 0; ic < like.in_channels; ++ic) {
      for (int oy = 0; oy < g_out.height; ++oy) {
        for (int ky = 0; ky < like.k_h; ++ky) {
          const int iy = oy * like.stride + ky - like.pad_h;
          if (iy < 0 || iy >= x.height) continue;
          const double* grow = &g_out.data[(static_cast<std::size_t>(oc) * g_out.height + oy) * g_out.width];
          const double* xrow = &x.data[(static_cast<std::size_t>(ic) * x.height + iy) * x.width];
          double* frow = &df.data[((static_cast<std::size_t>(oc) * like.in_channels + ic) * like.k_h + ky) * like.k_w];
          for (int ox = 0; ox < g_out.width; ++ox) {
            const int x0 = ox * like.stride - like.pad_w;
            const double g = grow[ox];
            for (int kx = 0; kx < like.k_w; ++kx) {
              const int ix = x0 + kx;
              if (ix < 0 || ix >= x.width) continue;
              frow[kx] += g * xrow[ix];
            }
          }
        }
      }
    }
  }
  return df;
}

}  // namespace rg
