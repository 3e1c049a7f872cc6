#include <algorithm>
#include <cmath>

#include "dentatlas/filters.hpp"
#include "dentatlas/register.hpp"
#include "field_kernels.hpp"
#include "sampling.hpp"

namespace dentatlas {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.conjugate();
  inv.center = center;
  inv.translation = -(inv.rotation * translation);
  return inv;
}

AffineTransform AffineTransform::from_rigid(const RigidTransform& r) {
  AffineTransform a;
  a.linear = r.matrix();
  a.translation = r.translation;
  a.center = r.center;
  return a;
}

AffineTransform AffineTransform::inverse() const {
  const double det = linear.determinant();
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) {
    throw Error(ErrorKind::kNumericalFailure, "affine transform is singular");
  }
  AffineTransform inv;
  inv.linear = linear.inverse();
  inv.center = center;
  inv.translation = -(inv.linear * translation);
  return inv;
}

AffineTransform AffineTransform::recentered(const Vec3& new_center) const {
  AffineTransform out;
  out.linear = linear;
  out.center = new_center;
  out.translation = translation + (Eigen::Matrix3d::Identity() - linear) * (center - new_center);
  return out;
}

AffineTransform AffineTransform::compose(const AffineTransform& other) const {
  AffineTransform out;
  out.linear = linear * other.linear;
  out.center = other.center;
  out.translation = linear * (other.center + other.translation - center) + center + translation - other.center;
  return out;
}

// ---------------------------------------------------------------------------

DisplacementField DisplacementField::constant(const GridGeometry& g, const Vec3& u) {
  DisplacementField f(g);
  std::fill(f.vectors.begin(), f.vectors.end(), u);
  return f;
}

Vec3 DisplacementField::sample(const Vec3& physical) const {
  return detail::sample_vector_clamped(vectors, geometry, geometry.continuous_index(physical));
}

double DisplacementField::max_norm_voxels() const {
  double best = 0.0;
  for (const auto& v : vectors) {
    best = std::max(best, (v.array() / geometry.spacing.array()).matrix().norm());
  }
  return best;
}

namespace {

void require_same(const GridGeometry& a, const GridGeometry& b, const char* what) {
  if (!(a == b)) throw Error(ErrorKind::kInvalidArgument, std::string(what) + ": geometry mismatch");
}

}  // namespace

// ---------------------------------------------------------------------------

VolumeGrid warp_volume(const VolumeGrid& v, const DisplacementField& u) {
  require_same(v.geometry(), u.geometry, "warp_volume");
  const auto& g = u.geometry;
  std::vector<float> out(g.voxel_count());
  const float* src = v.data().data();
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3 c = detail::displaced_index(g, i, j, k, u.vectors[n]);
        out[n] = static_cast<float>(detail::sample_index_zero(src, g.dims, c));
      }
  return VolumeGrid(g, std::move(out));
}

VolumeGrid warp_volume(const VolumeGrid& v, const AffineTransform& t, const GridGeometry& target) {
  std::vector<double> out;
  detail::warp_affine(v, t, target, out);
  return VolumeGrid(target, std::vector<float>(out.begin(), out.end()));
}

VolumeGrid warp_volume(const VolumeGrid& v, const RigidTransform& t, const GridGeometry& target) {
  return warp_volume(v, AffineTransform::from_rigid(t), target);
}

VolumeGrid warp_volume(const VolumeGrid& v, const AffineTransform& t, const DisplacementField& u) {
  const auto& g = u.geometry;
  const auto& sg = v.geometry();
  std::vector<float> out(g.voxel_count());
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3 p = t.apply(g.physical_point(i, j, k) + u.vectors[n]);
        out[n] = static_cast<float>(detail::sample_index_zero(v.data().data(), sg.dims, sg.continuous_index(p)));
      }
  return VolumeGrid(g, std::move(out));
}

LabelGrid warp_labels(const LabelGrid& l, const AffineTransform& t, const DisplacementField& u) {
  const auto& g = u.geometry;
  const auto& sg = l.geometry();
  LabelGrid out(g);
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3 c = sg.continuous_index(t.apply(g.physical_point(i, j, k) + u.vectors[n]));
        const int si = detail::nearest_index(c.x(), sg.dims[0]);
        const int sj = detail::nearest_index(c.y(), sg.dims[1]);
        const int sk = detail::nearest_index(c.z(), sg.dims[2]);
        out[n] = (si < 0 || sj < 0 || sk < 0) ? 0 : l(si, sj, sk);
      }
  return out;
}

DisplacementField compose_fields(const DisplacementField& phi1, const DisplacementField& phi2) {
  require_same(phi1.geometry, phi2.geometry, "compose_fields");
  const auto& g = phi2.geometry;
  DisplacementField out(g);
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3& u2 = phi2.vectors[n];
        const Vec3 c = detail::displaced_index(g, i, j, k, u2);
        out.vectors[n] = u2 + detail::sample_vector_clamped(phi1.vectors, g, c);
      }
  return out;
}

namespace {

// max over voxels of |a - b| measured in voxels.
double max_difference_voxels(const DisplacementField& a, const DisplacementField& b) {
  double best = 0.0;
  const Eigen::Array3d inv = a.geometry.spacing.array().inverse();
  for (std::size_t n = 0; n < a.vectors.size(); ++n) {
    best = std::max(best, ((a.vectors[n] - b.vectors[n]).array() * inv).matrix().norm());
  }
  return best;
}

}  // namespace

DisplacementField invert_field(const DisplacementField& u, const InversionOptions& options) {
  return invert_field(u, DisplacementField::zero(u.geometry), options);
}

DisplacementField invert_field(const DisplacementField& u, const DisplacementField& initial,
                               const InversionOptions& options) {
  require_same(u.geometry, initial.geometry, "invert_field");
  const auto& g = u.geometry;
  DisplacementField v = initial;
  DisplacementField next(g);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i, ++n) {
          const Vec3 c = detail::displaced_index(g, i, j, k, v.vectors[n]);
          next.vectors[n] = -detail::sample_vector_clamped(u.vectors, g, c);
        }
    const double delta = max_difference_voxels(next, v);
    std::swap(v, next);
    if (!std::isfinite(delta)) throw Error(ErrorKind::kNumericalFailure, "non-finite field during inversion");
    if (delta < options.tolerance_voxels) {
      ++it;
      break;
    }
  }
  const double residual = composition_residual_voxels(u, v);
  if (!(residual < options.max_residual_voxels)) throw InversionError(residual, it);
  return v;
}

double composition_residual_voxels(const DisplacementField& phi_a, const DisplacementField& phi_b) {
  require_same(phi_a.geometry, phi_b.geometry, "composition_residual");
  const auto& g = phi_a.geometry;
  const Eigen::Array3d inv = g.spacing.array().inverse();
  double best = 0.0;
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3& ub = phi_b.vectors[n];
        const Vec3 c = detail::displaced_index(g, i, j, k, ub);
        bool inside = true;
        for (int a = 0; a < 3; ++a) inside = inside && c[a] >= 0.0 && c[a] <= g.dims[a] - 1;
        if (!inside) continue;
        const Vec3 r = ub + detail::sample_vector_clamped(phi_a.vectors, g, c);
        best = std::max(best, (r.array() * inv).matrix().norm());
      }
  return best;
}

VolumeGrid jacobian_determinant(const DisplacementField& u) {
  const auto& g = u.geometry;
  std::vector<float> out(g.voxel_count());
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) out[n] = static_cast<float>(detail::jacobian_at(u, i, j, k));
  return VolumeGrid(g, std::move(out));
}

double min_interior_jacobian(const DisplacementField& u) {
  const auto& g = u.geometry;
  auto range = [&](int a) {
    return g.dims[a] >= 3 ? std::pair<int, int>{1, g.dims[a] - 2} : std::pair<int, int>{0, g.dims[a] - 1};
  };
  const auto [i0, i1] = range(0);
  const auto [j0, j1] = range(1);
  const auto [k0, k1] = range(2);
  double best = std::numeric_limits<double>::infinity();
  for (int k = k0; k <= k1; ++k)
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) best = std::min(best, detail::jacobian_at(u, i, j, k));
  return best;
}

DisplacementField exponentiate_field(const DisplacementField& v, int min_squarings) {
  const double norm = v.max_norm_voxels();
  int squarings = std::max(min_squarings, 0);
  if (norm > 0.0) squarings = std::max(squarings, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  DisplacementField w = v;
  const double scale = std::ldexp(1.0, -squarings);
  for (auto& x : w.vectors) x *= scale;
  for (int s = 0; s < squarings; ++s) w = compose_fields(w, w);
  return w;
}

DisplacementField smooth_field(const DisplacementField& u, double sigma_voxels) {
  DisplacementField out = u;
  if (!(sigma_voxels > 0.0)) return out;
  std::span<double> raw(reinterpret_cast<double*>(out.vectors.data()), out.vectors.size() * 3);
  for (int c = 0; c < 3; ++c) gaussian_smooth_inplace(raw, out.geometry.dims, sigma_voxels, 3, c);
  return out;
}

DisplacementField resample_field(const DisplacementField& u, const GridGeometry& target) {
  if (u.geometry == target) return u;
  DisplacementField out(target);
  std::size_t n = 0;
  for (int k = 0; k < target.dims[2]; ++k)
    for (int j = 0; j < target.dims[1]; ++j)
      for (int i = 0; i < target.dims[0]; ++i, ++n) out.vectors[n] = u.sample(target.physical_point(i, j, k));
  return out;
}

}  // namespace dentatlas
