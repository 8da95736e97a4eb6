#include "rg/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rg {

int nms_window(int group, int axis_extent) {
  return group < axis_extent ? group : axis_extent;
}

RGNetwork RGNetwork::build(Dims input, std::vector<LayerConfig> cfgs) {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0)
    throw std::invalid_argument("network input dims must be positive");
  RGNetwork net;
  net.input_dims = input;
  Dims below = input;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const LayerConfig& c = cfgs[i];
    if (c.in_channels != below.channels)
      throw std::invalid_argument(
          "layer " + std::to_string(i + 1) + ": in_channels " +
          std::to_string(c.in_channels) + " does not match layer below (" +
          std::to_string(below.channels) + ")");
    if (c.stride != 1 && c.stride != 2)
      throw std::invalid_argument("layer " + std::to_string(i + 1) +
                                  ": stride must be 1 or 2");
    FilterBank f(c.out_channels, c.in_channels, c.k_h, c.k_w, c.stride,
                 c.pad_h, c.pad_w);
    const Dims d = correlate_out_dims(f, below);
    if (d.height <= 0 || d.width <= 0)
      throw std::invalid_argument("layer " + std::to_string(i + 1) +
                                  ": collapses to empty spatial extent");
    if (c.nms_group > 0) {
      const int wy = nms_window(c.nms_group, d.height);
      const int wx = nms_window(c.nms_group, d.width);
      if (d.height % wy != 0 || d.width % wx != 0)
        throw std::invalid_argument(
            "layer " + std::to_string(i + 1) + ": NMS group " +
            std::to_string(c.nms_group) + " does not tile " +
            std::to_string(d.height) + "x" + std::to_string(d.width));
    }
    net.layers.push_back(c);
    net.filters.push_back(std::move(f));
    net.biases.emplace_back(c.out_channels, 0.0);
    net.layer_dims.push_back(d);
    below = d;
  }
  return net;
}

std::optional<double> score(const DenseQP& qp, std::span<const double> z) {
  if (static_cast<int>(z.size()) != qp.n)
    throw std::invalid_argument("score: z length does not match QP size");
  for (double v : z)
    if (v < 0.0) throw std::invalid_argument("score: z has negative entries");
  for (const auto& g : qp.groups) {
    int active = 0;
    for (int i : g)
      if (z[i] > 0.0) ++active;
    if (active >= 2) return std::nullopt;
  }
  double s = 0.0;
  for (int i = 0; i < qp.n; ++i) {
    double row = 0.0;
    for (int j = 0; j < qp.n; ++j) row += qp.w(i, j) * z[j];
    s += z[i] * (0.5 * row + qp.b[i]);
  }
  return s;
}

namespace {

// Enumerates nonnegative integer compositions of `remaining` into the tail
// of `point`, evaluating z'Mz at each completed grid point.
void simplex_scan(int n, std::span<const double> M, int resolution, int pos,
                  int remaining, std::vector<int>& point, double& best,
                  std::vector<int>& best_point) {
  if (pos == n - 1) {
    point[pos] = remaining;
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (point[i] == 0) continue;
      const double zi = static_cast<double>(point[i]) / resolution;
      double row = 0.0;
      for (int j = 0; j < n; ++j)
        if (point[j] != 0)
          row += M[static_cast<std::size_t>(i) * n + j] *
                 (static_cast<double>(point[j]) / resolution);
      v += zi * row;
    }
    if (v < best) {
      best = v;
      best_point = point;
    }
    return;
  }
  for (int k = remaining; k >= 0; --k) {
    point[pos] = k;
    simplex_scan(n, M, resolution, pos + 1, remaining - k, point, best,
                 best_point);
  }
}

double binomial(int a, int b) {
  double r = 1.0;
  for (int i = 1; i <= b; ++i) r *= static_cast<double>(a - b + i) / i;
  return r;
}

}  // namespace

CopositiveVerdict check_copositive_grid(int n, std::span<const double> M,
                                        int resolution) {
  if (n < 1) throw std::invalid_argument("check_copositive_grid: empty matrix");
  if (static_cast<int>(M.size()) != n * n)
    throw std::invalid_argument("check_copositive_grid: M is not n x n");
  if (resolution < 1)
    throw std::invalid_argument("check_copositive_grid: resolution < 1");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(M[static_cast<std::size_t>(i) * n + j] -
                   M[static_cast<std::size_t>(j) * n + i]) > 1e-12)
        throw std::invalid_argument("check_copositive_grid: M not symmetric");

  // Desk-scale gate: grid points * n^2 evaluation cost must stay enumerable.
  const double points = binomial(resolution + n - 1, n - 1);
  if (points * n * n > 2e8)
    throw std::invalid_argument(
        "check_copositive_grid: grid of " + std::to_string(points) +
        " points over " + std::to_string(n) +
        " variables exceeds the desk-scale enumeration budget");

  std::vector<int> point(n, 0), best_point;
  double best = 0.0;
  simplex_scan(n, M, resolution, 0, resolution, point, best, best_point);

  CopositiveVerdict v;
  if (best < -1e-12) {
    v.copositive_on_grid = false;
    v.value = best;
    v.counterexample.resize(n);
    for (int i = 0; i < n; ++i)
      v.counterexample[i] = static_cast<double>(best_point[i]) / resolution;
  } else {
    v.copositive_on_grid = true;
  }
  return v;
}

int latent_count(const RGNetwork& net) {
  int n = 0;
  for (const Dims& d : net.layer_dims) n += d.channels * d.height * d.width;
  return n;
}

int dense_index(const RGNetwork& net, int layer, int c, int y, int x) {
  int off = 0;
  for (int i = 0; i < layer; ++i) {
    const Dims& d = net.layer_dims[i];
    off += d.channels * d.height * d.width;
  }
  const Dims& d = net.layer_dims[layer];
  return off + (c * d.height + y) * d.width + x;
}

DenseQP dense_expand(const RGNetwork& net, const Tensor& x) {
  if (x.dims() != net.input_dims)
    throw std::invalid_argument("dense_expand: input dims mismatch");
  const int n = latent_count(net);
  if (n > 4096)
    throw std::invalid_argument("dense_expand: " + std::to_string(n) +
                                " latent variables exceeds the 4096 cap");
  DenseQP qp;
  qp.n = n;
  qp.W.assign(static_cast<std::size_t>(n) * n, 0.0);
  qp.b.assign(n, 0.0);
  for (int i = 0; i < n; ++i) qp.w(i, i) = -1.0;

  for (int li = 0; li < net.num_layers(); ++li) {
    const FilterBank& f = net.filters[li];
    const Dims& d = net.layer_dims[li];
    const Dims below = li == 0 ? net.input_dims : net.layer_dims[li - 1];
    for (int oc = 0; oc < d.channels; ++oc) {
      for (int oy = 0; oy < d.height; ++oy) {
        for (int ox = 0; ox < d.width; ++ox) {
          const int u = dense_index(net, li, oc, oy, ox);
          qp.b[u] += net.biases[li][oc];
          for (int ic = 0; ic < f.in_channels; ++ic) {
            for (int ky = 0; ky < f.k_h; ++ky) {
              const int iy = oy * f.stride + ky - f.pad_h;
              if (iy < 0 || iy >= below.height) continue;
              for (int kx = 0; kx < f.k_w; ++kx) {
                const int ix = ox * f.stride + kx - f.pad_w;
                if (ix < 0 || ix >= below.width) continue;
                const double w = f.at(oc, ic, ky, kx);
                if (li == 0) {
                  qp.b[u] += w * x.at(ic, iy, ix);  // observed layer folded in
                } else {
                  const int v = dense_index(net, li - 1, ic, iy, ix);
                  qp.w(v, u) += w;
                  qp.w(u, v) += w;
                }
              }
            }
          }
        }
      }
    }
    if (net.layers[li].nms_group > 0) {
      const int wy = nms_window(net.layers[li].nms_group, d.height);
      const int wx = nms_window(net.layers[li].nms_group, d.width);
      for (int c = 0; c < d.channels; ++c)
        for (int gy = 0; gy < d.height; gy += wy)
          for (int gx = 0; gx < d.width; gx += wx) {
            std::vector<int> grp;
            for (int dy = 0; dy < wy; ++dy)
              for (int dx = 0; dx < wx; ++dx)
                grp.push_back(dense_index(net, li, c, gy + dy, gx + dx));
            qp.groups.push_back(std::move(grp));
          }
    }
  }
  return qp;
}

}  // namespace rg
