#include "rg/infer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rg {

Tensor nms_group_update(const Tensor& drives, int group) {
  if (group < 1)
    throw std::invalid_argument("nms_group_update: group extent < 1");
  const int wy = nms_window(group, drives.height);
  const int wx = nms_window(group, drives.width);
  if (drives.height % wy != 0 || drives.width % wx != 0)
    throw std::invalid_argument("nms_group_update: groups do not tile drives");

  Tensor out(drives.dims());
  for (int c = 0; c < drives.channels; ++c) {
    for (int gy = 0; gy < drives.height; gy += wy) {
      for (int gx = 0; gx < drives.width; gx += wx) {
        int by = gy, bx = gx;
        double best = drives.at(c, gy, gx);
        for (int dy = 0; dy < wy; ++dy)
          for (int dx = 0; dx < wx; ++dx) {
            const double v = drives.at(c, gy + dy, gx + dx);
            if (v > best) {  // strict: ties keep the lowest linear index
              best = v;
              by = gy + dy;
              bx = gx + dx;
            }
          }
        out.at(c, by, bx) = coord_update_scalar(best);
      }
    }
  }
  return out;
}

void layer_update(const RGNetwork& net, InferenceTrace& trace, int layer,
                  const Tensor& x) {
  const int L = net.num_layers();
  if (layer < 1 || layer > L)
    throw std::invalid_argument("layer_update: layer index " +
                                std::to_string(layer) + " out of range 1.." +
                                std::to_string(L));
  const int i = layer - 1;
  const Tensor& below = i == 0 ? x : trace.z[i - 1];

  Tensor drive = correlate(net.filters[i], below);
  const Dims d = net.layer_dims[i];
  for (int c = 0; c < d.channels; ++c) {
    const double bias = net.biases[i][c];
    double* row = &drive.data[static_cast<std::size_t>(c) * d.height * d.width];
    const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
    for (std::size_t p = 0; p < plane; ++p) row[p] = bias + row[p];
  }
  if (i + 1 < L) {
    const Tensor top = convolve_transposed(net.filters[i + 1], trace.z[i + 1], d);
    for (std::size_t p = 0; p < drive.data.size(); ++p)
      drive.data[p] += top.data[p];
  }

  const int g = net.layers[i].nms_group;
  trace.z[i] = g > 0 ? nms_group_update(drive, g) : rectify(drive);
}

namespace {

InferenceTrace fresh_trace(const RGNetwork& net) {
  InferenceTrace t;
  for (const Dims& d : net.layer_dims) t.z.emplace_back(d);
  return t;
}

// One pass of the alternating schedule; returns max |delta z| over the pass.
double run_pass(const RGNetwork& net, InferenceTrace& trace, const Tensor& x,
                int pass) {
  const int L = net.num_layers();
  std::vector<int> order;
  if (pass == 1) {
    for (int l = 1; l <= L; ++l) order.push_back(l);
  } else if (pass % 2 == 0) {
    for (int l = L - 1; l >= 1; --l) order.push_back(l);
  } else {
    for (int l = 2; l <= L; ++l) order.push_back(l);
  }
  double gap = 0.0;
  for (int l : order) {
    const Tensor before = trace.z[l - 1];
    layer_update(net, trace, l, x);
    const Tensor& after = trace.z[l - 1];
    for (std::size_t p = 0; p < before.data.size(); ++p)
      gap = std::max(gap, std::abs(after.data[p] - before.data[p]));
  }
  return gap;
}

}  // namespace

InferenceTrace qp_k(const RGNetwork& net, const Tensor& x, int k) {
  if (k < 1) throw std::invalid_argument("qp_k: k must be >= 1");
  if (x.dims() != net.input_dims)
    throw std::invalid_argument("qp_k: input dims mismatch");
  InferenceTrace trace = fresh_trace(net);
  for (int pass = 1; pass <= k; ++pass) {
    trace.converged_gap = run_pass(net, trace, x, pass);
    trace.passes = pass;
  }
  return trace;
}

InferenceTrace qp_converge(const RGNetwork& net, const Tensor& x,
                           double gap_tol, int max_passes) {
  if (x.dims() != net.input_dims)
    throw std::invalid_argument("qp_converge: input dims mismatch");
  InferenceTrace trace = fresh_trace(net);
  for (int pass = 1; pass <= max_passes; ++pass) {
    trace.converged_gap = run_pass(net, trace, x, pass);
    trace.passes = pass;
    if (pass > 1 && trace.converged_gap < gap_tol) break;
  }
  return trace;
}

DenseCDResult dense_coordinate_descent(const DenseQP& qp, int max_sweeps,
                                       double tol,
                                       const DenseCDObserver& observer) {
  for (int i = 0; i < qp.n; ++i)
    if (std::abs(qp.w(i, i) + 1.0) > 1e-12)
      throw std::invalid_argument(
          "dense_coordinate_descent: diagonal of W must be -1 (coordinate " +
          std::to_string(i) + " is " + std::to_string(qp.w(i, i)) + ")");

  // group_of[i] = group id, and whether i is that group's first coordinate
  std::vector<int> group_of(qp.n, -1);
  for (std::size_t g = 0; g < qp.groups.size(); ++g)
    for (int i : qp.groups[g]) {
      if (i < 0 || i >= qp.n)
        throw std::invalid_argument("dense_coordinate_descent: group index "
                                    "out of range");
      if (group_of[i] != -1)
        throw std::invalid_argument(
            "dense_coordinate_descent: groups are not disjoint");
      group_of[i] = static_cast<int>(g);
    }

  DenseCDResult res;
  res.z.assign(qp.n, 0.0);
  constexpr double kDivergence = 1e12;

  auto drive_excluding_group = [&](int i, int skip_group) {
    double a = qp.b[i];
    for (int j = 0; j < qp.n; ++j) {
      if (j == i) continue;
      if (skip_group >= 0 && group_of[j] == skip_group) continue;
      a += qp.w(i, j) * res.z[j];
    }
    return a;
  };

  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int i = 0; i < qp.n; ++i) {
      const int g = group_of[i];
      if (g >= 0) {
        // Update the whole group when the sweep reaches its first member.
        if (qp.groups[g].front() != i) continue;
        int winner = qp.groups[g].front();
        double best = drive_excluding_group(winner, g);
        for (int j : qp.groups[g]) {
          if (j == winner) continue;
          const double a = drive_excluding_group(j, g);
          if (a > best) {
            best = a;
            winner = j;
          }
        }
        for (int j : qp.groups[g]) {
          const double nz = j == winner ? coord_update_scalar(best) : 0.0;
          max_change = std::max(max_change, std::abs(nz - res.z[j]));
          res.z[j] = nz;
        }
      } else {
        const double nz = coord_update_scalar(drive_excluding_group(i, -1));
        max_change = std::max(max_change, std::abs(nz - res.z[i]));
        res.z[i] = nz;
      }
      if (observer) observer(res.z);
    }
    res.sweeps = sweep;
    for (double v : res.z)
      if (std::abs(v) > kDivergence) {
        res.diverged = true;
        return res;
      }
    if (max_change < tol) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

std::vector<double> projected_gradient(const DenseQP& qp, double step,
                                       int iters) {
  if (!qp.groups.empty())
    throw std::invalid_argument(
        "projected_gradient: exclusivity groups are not supported");
  if (step <= 0.0) throw std::invalid_argument("projected_gradient: step <= 0");
  std::vector<double> z(qp.n, 0.0), g(qp.n);
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < qp.n; ++i) {
      double a = qp.b[i];
      for (int j = 0; j < qp.n; ++j) a += qp.w(i, j) * z[j];
      g[i] = a;
    }
    for (int i = 0; i < qp.n; ++i) z[i] = std::max(0.0, z[i] + step * g[i]);
  }
  return z;
}

}  // namespace rg
