#include "dentatlas/filters.hpp"

#include <algorithm>
#include <cmath>

namespace dentatlas {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * static_cast<std::size_t>(radius) + 1);
  for (int t = -radius; t <= radius; ++t) k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  return k;
}

// Convolves one line of `n` samples (stride `step` in `data`) with kernel `k`,
// renormalising at the ends.
void convolve_line(double* data, std::size_t step, int n, const std::vector<double>& k, std::vector<double>& scratch) {
  const int radius = static_cast<int>(k.size() / 2);
  scratch.resize(n);
  for (int i = 0; i < n; ++i) scratch[i] = data[static_cast<std::size_t>(i) * step];
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - radius);
    const int hi = std::min(n - 1, i + radius);
    double acc = 0.0, wsum = 0.0;
    for (int t = lo; t <= hi; ++t) {
      const double w = k[t - i + radius];
      acc += w * scratch[t];
      wsum += w;
    }
    data[static_cast<std::size_t>(i) * step] = acc / wsum;
  }
}

}  // namespace

void gaussian_smooth_inplace(std::span<double> values, const Index3& dims, double sigma_voxels, int stride,
                             int component) {
  if (!(sigma_voxels > 0.0)) return;
  const auto kernel = gaussian_kernel(sigma_voxels);
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  const std::size_t s = static_cast<std::size_t>(stride);
  std::vector<double> scratch;
  double* base = values.data() + component;
  if (nx > 1) {
    for (std::size_t k = 0; k < nz; ++k)
      for (std::size_t j = 0; j < ny; ++j) convolve_line(base + (j + ny * k) * nx * s, s, static_cast<int>(nx), kernel, scratch);
  }
  if (ny > 1) {
    for (std::size_t k = 0; k < nz; ++k)
      for (std::size_t i = 0; i < nx; ++i) convolve_line(base + (i + nx * ny * k) * s, nx * s, static_cast<int>(ny), kernel, scratch);
  }
  if (nz > 1) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) convolve_line(base + (i + nx * j) * s, nx * ny * s, static_cast<int>(nz), kernel, scratch);
  }
}

VolumeGrid gaussian_smooth(const VolumeGrid& v, double sigma_voxels) {
  if (!(sigma_voxels > 0.0)) return v;
  std::vector<double> work(v.data().begin(), v.data().end());
  gaussian_smooth_inplace(work, v.dims(), sigma_voxels);
  return VolumeGrid(v.geometry(), std::vector<float>(work.begin(), work.end()));
}

GridGeometry shrink_geometry(const GridGeometry& g, int shrink) {
  if (shrink < 1) throw Error(ErrorKind::kInvalidArgument, "shrink factor must be >= 1");
  if (shrink == 1) return g;
  GridGeometry out;
  out.origin = g.origin;
  for (int a = 0; a < 3; ++a) {
    const int n = g.dims[a];
    int m = (n - 1) / shrink + 1;
    m = std::max(m, std::min(n, 4));
    out.dims[a] = m;
    out.spacing[a] = m > 1 ? g.spacing[a] * (n - 1) / (m - 1) : g.spacing[a] * shrink;
  }
  return out;
}

void box_sum(std::span<const double> in, const Index3& dims, int radius, std::span<double> out) {
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> a(in.begin(), in.end());
  std::vector<double> line, prefix;
  auto pass = [&](std::size_t n, std::size_t lines, auto index_of) {
    line.resize(n);
    prefix.resize(n + 1);
    for (std::size_t l = 0; l < lines; ++l) {
      prefix[0] = 0.0;
      for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + a[index_of(l, i)];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(radius) ? i - radius : 0;
        const std::size_t hi = std::min(n - 1, i + radius);
        line[i] = prefix[hi + 1] - prefix[lo];
      }
      for (std::size_t i = 0; i < n; ++i) a[index_of(l, i)] = line[i];
    }
  };
  pass(nx, ny * nz, [&](std::size_t l, std::size_t i) { return l * nx + i; });
  pass(ny, nx * nz, [&](std::size_t l, std::size_t i) { return (l % nx) + nx * (i + ny * (l / nx)); });
  pass(nz, nx * ny, [&](std::size_t l, std::size_t i) { return l + nx * ny * i; });
  std::copy(a.begin(), a.end(), out.begin());
}

}  // namespace dentatlas
