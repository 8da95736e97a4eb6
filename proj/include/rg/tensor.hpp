#pragma once

#include <cstddef>
#include <vector>

namespace rg {

struct Dims {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const Dims&) const = default;
};

/// Dense rank-3 array, channel-major then row-major. All activations,
/// images and heatmaps use this layout; it is also the checkpoint layout.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {}
  explicit Tensor(Dims d) : Tensor(d.channels, d.height, d.width) {}

  Dims dims() const { return {channels, height, width}; }
  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Bank of correlation filters: out_channels x in_channels x k_h x k_w,
/// with a common stride and per-axis zero padding (applied to both sides).
struct FilterBank {
  int out_channels = 0;
  int in_channels = 0;
  int k_h = 0;
  int k_w = 0;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  std::vector<double> data;

  FilterBank() = default;
  FilterBank(int oc, int ic, int kh, int kw, int stride_ = 1, int ph = 0,
             int pw = 0)
      : out_channels(oc), in_channels(ic), k_h(kh), k_w(kw), stride(stride_),
        pad_h(ph), pad_w(pw),
        data(static_cast<std::size_t>(oc) * ic * kh * kw, 0.0) {}

  double& at(int oc, int ic, int ky, int kx) {
    return data[((static_cast<std::size_t>(oc) * in_channels + ic) * k_h + ky) *
                    k_w +
                kx];
  }
  double at(int oc, int ic, int ky, int kx) const {
    return data[((static_cast<std::size_t>(oc) * in_channels + ic) * k_h + ky) *
                    k_w +
                kx];
  }
};

/// Output spatial dims of correlate(f, x) for an input of dims `in`.
Dims correlate_out_dims(const FilterBank& f, Dims in);

/// Cross-correlation with zero padding and striding:
/// out[oc][u] = sum_{ic,tau} f[oc][ic][tau] * x_padded[ic][u*stride + tau].
Tensor correlate(const FilterBank& f, const Tensor& x);

/// Exact linear adjoint of correlate(f, .) with the same stride/pad:
/// scatters z back through every correlation tap. Equivalent to
/// zero-interlacing z (for stride > 1) and running a full convolution with
/// the 180-degree rotated, channel-transposed kernel, cropped to `out`.
Tensor convolve_transposed(const FilterBank& f, const Tensor& z, Dims out);

/// out[u*stride] = z[u] along both spatial axes, zeros elsewhere.
/// target dims must satisfy ceil(target/stride) == dims(z).
Tensor interlace_zeros(const Tensor& z, int stride, int target_h, int target_w);

/// out[u] = x[u*stride]; output dims = ceil(in/stride).
Tensor subsample(const Tensor& x, int stride);

/// Elementwise max(0, x).
Tensor rectify(const Tensor& x);

/// Gradient of correlate w.r.t. the filter:
/// df[oc][ic][tau] = sum_u g_out[oc][u] * x_padded[ic][u*stride + tau].
/// Geometry (shape/stride/pad) is taken from `like`; values are accumulated
/// into a zero-initialized bank of the same geometry.
FilterBank correlate_filter_grad(const Tensor& g_out, const Tensor& x,
                                 const FilterBank& like);

}  // namespace rg
