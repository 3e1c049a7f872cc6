#include <algorithm>
#include <cmath>

#include "cc_kernel.hpp"
#include "dentatlas/filters.hpp"
#include "dentatlas/register.hpp"

namespace dentatlas {

namespace detail {

CcKernelResult cc_kernel(std::span<const double> a, std::span<const double> b, const Index3& dims, int radius,
                         bool grad_a, bool grad_b) {
  const std::size_t n_vox = a.size();
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> sa(n_vox), sb(n_vox), saa(n_vox), sbb(n_vox), sab(n_vox), tmp(n_vox);
  box_sum(a, dims, radius, sa);
  box_sum(b, dims, radius, sb);
  for (std::size_t n = 0; n < n_vox; ++n) tmp[n] = a[n] * a[n];
  box_sum(tmp, dims, radius, saa);
  for (std::size_t n = 0; n < n_vox; ++n) tmp[n] = b[n] * b[n];
  box_sum(tmp, dims, radius, sbb);
  for (std::size_t n = 0; n < n_vox; ++n) tmp[n] = a[n] * b[n];
  box_sum(tmp, dims, radius, sab);

  auto count = [radius](int i, int n) { return std::min(n - 1, i + radius) - std::max(0, i - radius) + 1; };

  CcKernelResult result;
  // Per-window coefficients of the gradient, reusing the box-sum buffers.
  std::vector<double> alpha(n_vox, 0.0), alpha_mu_a, alpha_mu_b, beta_b, beta_b_mu_b, beta_a, beta_a_mu_a;
  if (grad_b) {
    alpha_mu_a.assign(n_vox, 0.0);
    beta_b.assign(n_vox, 0.0);
    beta_b_mu_b.assign(n_vox, 0.0);
  }
  if (grad_a) {
    alpha_mu_b.assign(n_vox, 0.0);
    beta_a.assign(n_vox, 0.0);
    beta_a_mu_a.assign(n_vox, 0.0);
  }
  std::size_t n = 0;
  for (int k = 0; k < nz; ++k) {
    const int ck = count(k, nz);
    for (int j = 0; j < ny; ++j) {
      const int cj = count(j, ny);
      for (int i = 0; i < nx; ++i, ++n) {
        const double cnt = static_cast<double>(count(i, nx) * cj * ck);
        const double mu_a = sa[n] / cnt;
        const double mu_b = sb[n] / cnt;
        const double s_aa = saa[n] - sa[n] * mu_a;
        const double s_bb = sbb[n] - sb[n] * mu_b;
        const double s_ab = sab[n] - sa[n] * mu_b;
        if (!(s_aa > kCcVarianceFloor * cnt) || !(s_bb > kCcVarianceFloor * cnt)) continue;
        const double denom = s_aa * s_bb;
        result.sum += s_ab * s_ab / denom;
        ++result.valid;
        const double al = 2.0 * s_ab / denom;
        alpha[n] = al;
        if (grad_b) {
          const double bb = al * s_ab / s_bb;
          alpha_mu_a[n] = al * mu_a;
          beta_b[n] = bb;
          beta_b_mu_b[n] = bb * mu_b;
        }
        if (grad_a) {
          const double ba = al * s_ab / s_aa;
          alpha_mu_b[n] = al * mu_b;
          beta_a[n] = ba;
          beta_a_mu_a[n] = ba * mu_a;
        }
      }
    }
  }
  if (!grad_a && !grad_b) return result;

  std::vector<double>& box_alpha = sa;
  box_sum(alpha, dims, radius, box_alpha);
  if (grad_b) {
    box_sum(alpha_mu_a, dims, radius, sb);
    box_sum(beta_b, dims, radius, saa);
    box_sum(beta_b_mu_b, dims, radius, sbb);
    result.d_b.resize(n_vox);
    for (std::size_t m = 0; m < n_vox; ++m) {
      result.d_b[m] = (a[m] * box_alpha[m] - b[m] * saa[m]) - (sb[m] - sbb[m]);
    }
  }
  if (grad_a) {
    box_sum(alpha_mu_b, dims, radius, sb);
    box_sum(beta_a, dims, radius, saa);
    box_sum(beta_a_mu_a, dims, radius, sbb);
    result.d_a.resize(n_vox);
    for (std::size_t m = 0; m < n_vox; ++m) {
      result.d_a[m] = (b[m] * box_alpha[m] - a[m] * saa[m]) - (sb[m] - sbb[m]);
    }
  }
  return result;
}

void central_gradient(std::span<const double> img, const GridGeometry& g, std::vector<Vec3>& out) {
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const std::size_t sx = 1, sy = static_cast<std::size_t>(nx), sz = static_cast<std::size_t>(nx) * ny;
  out.resize(img.size());
  auto diff = [&](std::size_t n, int idx, int len, std::size_t stride, double spacing) {
    if (len < 2) return 0.0;
    const int lo = idx > 0 ? idx - 1 : idx;
    const int hi = idx < len - 1 ? idx + 1 : idx;
    return (img[n + (hi - idx) * stride] - img[n - (idx - lo) * stride]) / ((hi - lo) * spacing);
  };
  std::size_t n = 0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i, ++n) {
        out[n] = Vec3(diff(n, i, nx, sx, g.spacing.x()), diff(n, j, ny, sy, g.spacing.y()),
                      diff(n, k, nz, sz, g.spacing.z()));
      }
}

}  // namespace detail

double global_correlation(const VolumeGrid& a, const VolumeGrid& b) {
  if (!(a.geometry() == b.geometry())) throw Error(ErrorKind::kInvalidArgument, "correlation needs same geometry");
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorKind::kDegenerateInput, "correlation of a constant volume");
  return sab / std::sqrt(saa * sbb);
}

LocalCcResult local_cc(const VolumeGrid& a, const VolumeGrid& b, int radius) {
  if (!(a.geometry() == b.geometry())) throw Error(ErrorKind::kInvalidArgument, "local_cc needs same geometry");
  if (radius < 1) throw Error(ErrorKind::kInvalidArgument, "local_cc window radius must be >= 1");
  const std::vector<double> da(a.data().begin(), a.data().end());
  const std::vector<double> db(b.data().begin(), b.data().end());
  auto k = detail::cc_kernel(da, db, a.dims(), radius, false, true);
  LocalCcResult result;
  result.valid_voxels = k.valid;
  result.metric = k.valid > 0 ? k.sum / static_cast<double>(k.valid) : 0.0;
  result.gradient = DisplacementField(a.geometry());
  if (k.valid == 0) return result;
  std::vector<Vec3> grad_b;
  detail::central_gradient(db, b.geometry(), grad_b);
  const double inv = 1.0 / static_cast<double>(k.valid);
  for (std::size_t n = 0; n < da.size(); ++n) result.gradient.vectors[n] = (k.d_b[n] * inv) * grad_b[n];
  return result;
}

}  // namespace dentatlas
