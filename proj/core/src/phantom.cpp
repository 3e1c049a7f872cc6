#include "dentatlas/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "rng.hpp"
#include "sampling.hpp"

namespace dentatlas {

namespace {

constexpr int kBumpCount = 10;
constexpr int kMaxAttempts = 20;
constexpr double kEnamel = 1.0;
constexpr double kDentin = 0.72;

enum class ToothType { kIncisor, kCanine, kPremolar, kMolar };

ToothType type_of(int position) {
  if (position <= 2) return ToothType::kIncisor;
  if (position == 3) return ToothType::kCanine;
  if (position <= 5) return ToothType::kPremolar;
  return ToothType::kMolar;
}

// Relative mesio-distal widths for positions 1..7.
constexpr double kWidth[7] = {8.5, 6.5, 7.5, 7.0, 6.5, 10.0, 9.0};

double bucco_lingual_factor(ToothType t) {
  switch (t) {
    case ToothType::kIncisor: return 0.34;
    case ToothType::kCanine: return 0.42;
    case ToothType::kPremolar: return 0.46;
    case ToothType::kMolar: return 0.44;
  }
  return 0.4;
}

double crown_height_factor(ToothType t) {
  switch (t) {
    case ToothType::kIncisor: return 1.1;
    case ToothType::kCanine: return 1.2;
    case ToothType::kPremolar: return 1.0;
    case ToothType::kMolar: return 0.9;
  }
  return 1.0;
}

double root_length_factor(ToothType t) {
  switch (t) {
    case ToothType::kIncisor: return 1.0;
    case ToothType::kCanine: return 1.3;
    case ToothType::kPremolar: return 1.0;
    case ToothType::kMolar: return 0.85;
  }
  return 1.0;
}

// Parabolic arch y = y0 + depth ((x - cx) / half_width)^2 in voxel units,
// with an arc-length table for one half.
struct Arch {
  double cx, y0, depth, half_width;
  std::vector<double> xs, lengths;

  Arch(double cx_, double y0_, double depth_, double half_width_)
      : cx(cx_), y0(y0_), depth(depth_), half_width(half_width_) {
    const int n = 4000;
    xs.resize(n + 1);
    lengths.resize(n + 1);
    lengths[0] = 0.0;
    for (int i = 0; i <= n; ++i) {
      xs[i] = half_width * i / n;
      if (i > 0) {
        const double dx = xs[i] - xs[i - 1];
        const double dy = y_at(xs[i]) - y_at(xs[i - 1]);
        lengths[i] = lengths[i - 1] + std::hypot(dx, dy);
      }
    }
  }
  // x is the offset from the midline
  double y_at(double x) const { return y0 + depth * (x / half_width) * (x / half_width); }
  double total() const { return lengths.back(); }
  double offset_at(double s) const {
    const auto it = std::lower_bound(lengths.begin(), lengths.end(), s);
    if (it == lengths.begin()) return 0.0;
    if (it == lengths.end()) return half_width;
    const auto i = static_cast<std::size_t>(it - lengths.begin());
    const double f = (s - lengths[i - 1]) / (lengths[i] - lengths[i - 1]);
    return xs[i - 1] + f * (xs[i] - xs[i - 1]);
  }
};

double background(const Vec3& p, const Vec3& jaw_center, const Vec3& jaw_scale) {
  const Vec3 d = (p - jaw_center).cwiseQuotient(jaw_scale);
  return 0.08 + 0.1 * std::exp(-0.5 * d.squaredNorm());
}

SurfaceMesh tooth_mesh(const LabelGrid& labels, std::uint16_t label) {
  LabelGrid only(labels.geometry());
  bool any = false;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] == label) {
      only[n] = label;
      any = true;
    }
  }
  if (!any) throw Error(ErrorKind::kGenerationFailure, "tooth " + std::to_string(label) + " has no voxels");
  const auto box = bounding_box_of_labels(only);
  return extract_surface(crop_with_margin(only, box, 1), label);
}

Eigen::Matrix3d skew(const Vec3& w) {
  Eigen::Matrix3d s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

PhantomDeformation draw_deformation(const PhantomTemplate& t, std::uint64_t seed, int attempt, double amplitude_voxels) {
  detail::Rng rng(detail::mix_seed(seed, 1000 + static_cast<std::uint64_t>(attempt)));
  const auto& g = t.labels.geometry();
  const double spacing = g.spacing.mean();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& tooth : t.teeth) {
    lo = lo.cwiseMin(tooth.crown_center);
    hi = hi.cwiseMax(tooth.crown_center);
  }
  const Vec3 pad = 0.1 * (hi - lo) + Vec3::Constant(2.0 * spacing);
  lo -= pad;
  hi += pad;
  const Vec3 extent(g.dims[0] * g.spacing.x(), g.dims[1] * g.spacing.y(), g.dims[2] * g.spacing.z());

  PhantomDeformation d;
  for (int b = 0; b < kBumpCount; ++b) {
    PhantomDeformation::Bump bump;
    for (int a = 0; a < 3; ++a) bump.center[a] = rng.uniform(lo[a], hi[a]);
    bump.width = rng.uniform(0.14, 0.22) * extent.mean();
    bump.amplitude = Vec3(rng.normal(), rng.normal(), rng.normal());
    d.bumps.push_back(bump);
  }
  for (const auto& tooth : t.teeth) {
    PhantomDeformation::Jitter j;
    j.center = tooth.crown_center;
    j.radius = tooth.crown_half.maxCoeff();
    j.rotation = Vec3(rng.normal(), rng.normal(), rng.normal()) * (0.006 * amplitude_voxels);
    j.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * (0.15 * amplitude_voxels * spacing);
    d.jitter.push_back(j);
  }
  // Scale the bumps so their sum peaks at the requested amplitude on the lattice.
  double peak = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int jj = 0; jj < g.dims[1]; ++jj)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 x = g.physical_point(i, jj, k);
        Vec3 u = Vec3::Zero();
        for (const auto& b : d.bumps) u += b.amplitude * std::exp(-(x - b.center).squaredNorm() / (2.0 * b.width * b.width));
        peak = std::max(peak, u.norm());
      }
  const double scale = peak > 0.0 ? amplitude_voxels * spacing / peak : 0.0;
  for (auto& b : d.bumps) b.amplitude *= scale;
  return d;
}

}  // namespace

int PhantomTooth::classify(const Vec3& p, double enamel_thickness) const {
  const Vec3 d = frame.transpose() * (p - crown_center);
  const auto superellipsoid = [&](const Vec3& half) {
    return std::pow(std::abs(d.x() / half.x()), crown_exponent) + std::pow(std::abs(d.y() / half.y()), crown_exponent) +
           std::pow(std::abs(d.z() / half.z()), crown_exponent);
  };
  if (superellipsoid(crown_half) <= 1.0) {
    const Vec3 inner = (crown_half - Vec3::Constant(enamel_thickness)).cwiseMax(Vec3::Constant(1e-6));
    return superellipsoid(inner) > 1.0 && d.z() < 0.35 * crown_half.z() ? 2 : 1;
  }
  if (d.z() >= 0.0 && d.z() <= root_length) {
    const double taper = 1.0 - 0.5 * d.z() / root_length;
    const double r = std::pow(d.x() / root_radius.x(), 2) + std::pow(d.y() / root_radius.y(), 2);
    if (r <= taper * taper) return 1;
  }
  return 0;
}

PhantomTemplate generate_template(std::uint64_t seed, const Index3& dims, double spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 32) throw Error(ErrorKind::kInvalidArgument, "phantom grids need at least 32 voxels per axis");
  }
  if (!(spacing > 0.0)) throw Error(ErrorKind::kInvalidArgument, "phantom spacing must be positive");
  GridGeometry g;
  g.dims = dims;
  g.spacing = Vec3::Constant(spacing);

  detail::Rng rng(detail::mix_seed(seed, 0));
  const double nx = dims[0], ny = dims[1], nz = dims[2];
  const double cx = 0.5 * (nx - 1), z0 = 0.5 * (nz - 1);
  const double half_width = 0.33 * nx * (1.0 + 0.03 * rng.uniform(-1.0, 1.0));
  const double depth = 0.52 * ny * (1.0 + 0.03 * rng.uniform(-1.0, 1.0));
  const double y_front = 0.22 * ny;
  const double gap = 0.02 * nz;

  PhantomTemplate t;
  t.seed = seed;
  for (int arch_index = 0; arch_index < 2; ++arch_index) {
    const bool upper = arch_index == 0;
    const double shrink = upper ? 1.0 : 0.94;
    const Arch arch(cx, y_front + (upper ? 0.0 : 0.015 * ny), depth * shrink, half_width * shrink);
    for (int side = 0; side < 2; ++side) {
      // FDI quadrants: upper right 1, upper left 2, lower left 3, lower right 4; right is -x.
      const int quadrant = upper ? (side == 0 ? 1 : 2) : (side == 0 ? 4 : 3);
      const double sign = side == 0 ? -1.0 : 1.0;
      double widths[7], total = 0.0;
      for (int p = 0; p < 7; ++p) {
        widths[p] = kWidth[p] * (1.0 + 0.06 * rng.uniform(-1.0, 1.0));
        total += widths[p];
      }
      const double unit = arch.total() / total;
      double s = 0.0;
      for (int p = 0; p < 7; ++p) {
        const ToothType type = type_of(p + 1);
        const double w = widths[p] * unit;
        const double centre_s = s + 0.5 * w;
        s += w;
        const double off = arch.offset_at(centre_s);
        const double slope = 2.0 * arch.depth * off / (arch.half_width * arch.half_width);
        const Vec3 tangent = Vec3(sign, slope, 0.0).normalized();
        const Vec3 normal(-tangent.y(), tangent.x(), 0.0);
        const Vec3 root_dir(0.0, 0.0, upper ? 1.0 : -1.0);
        const Eigen::Matrix3d tilt =
            (Eigen::AngleAxisd(rng.uniform(-4.0, 4.0) * std::numbers::pi / 180.0, tangent) *
             Eigen::AngleAxisd(rng.uniform(-4.0, 4.0) * std::numbers::pi / 180.0, normal))
                .toRotationMatrix();

        PhantomTooth tooth;
        tooth.label = static_cast<std::uint16_t>(10 * quadrant + p + 1);
        tooth.frame.col(0) = tilt * tangent;
        tooth.frame.col(1) = tilt * normal;
        tooth.frame.col(2) = tilt * root_dir;
        const double a = 0.41 * w * (1.0 + 0.04 * rng.uniform(-1.0, 1.0));
        const double b = bucco_lingual_factor(type) * w * (1.0 + 0.04 * rng.uniform(-1.0, 1.0));
        const double c = 0.06 * nz * crown_height_factor(type) * (1.0 + 0.04 * rng.uniform(-1.0, 1.0));
        const double root = c + 0.14 * nz * root_length_factor(type) * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
        const Vec3 centre_vox(cx + sign * off, arch.y_at(off), upper ? z0 + 0.5 * gap + c : z0 - 0.5 * gap - c);
        tooth.crown_center = g.origin + centre_vox * spacing;
        tooth.crown_half = Vec3(a, b, c) * spacing;
        tooth.root_length = root * spacing;
        tooth.root_radius = Eigen::Vector2d(std::max(0.62 * a, 1.4), std::max(0.62 * b, 1.4)) * spacing;
        t.teeth.push_back(tooth);
      }
    }
  }
  // Arch order: 17..11, 21..27, 47..41, 31..37.
  std::vector<PhantomTooth> ordered;
  for (const auto label : fdi_labels_arch_order()) {
    for (const auto& tooth : t.teeth) {
      if (tooth.label == label) ordered.push_back(tooth);
    }
  }
  t.teeth = std::move(ordered);

  // Rasterise: labels at voxel centres, intensity from 2x2x2 supersamples.
  t.labels = LabelGrid(g);
  std::vector<double> intensity(g.voxel_count());
  const Vec3 jaw_center = g.origin + Vec3(cx, y_front + 0.5 * depth, z0) * spacing;
  const Vec3 jaw_scale = Vec3(0.35 * nx, 0.35 * ny, 0.3 * nz) * spacing;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        intensity[g.linear_index(i, j, k)] = background(g.physical_point(i, j, k), jaw_center, jaw_scale);
      }
  const double enamel = 0.9 * spacing;
  for (const auto& tooth : t.teeth) {
    const double reach = std::sqrt(tooth.crown_half.squaredNorm() + tooth.root_length * tooth.root_length) + 2.0 * spacing;
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor((tooth.crown_center[a] - reach - g.origin[a]) / spacing)));
      hi[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil((tooth.crown_center[a] + reach - g.origin[a]) / spacing)));
    }
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const Vec3 p = g.physical_point(i, j, k);
          const std::size_t n = g.linear_index(i, j, k);
          if (tooth.classify(p, enamel) != 0) {
            if (t.labels[n] != 0) {
              throw Error(ErrorKind::kGenerationFailure, "teeth " + std::to_string(t.labels[n]) + " and " +
                                                             std::to_string(tooth.label) +
                                                             " overlap; widen the arch or enlarge the grid");
            }
            t.labels[n] = tooth.label;
          }
          const double bg = background(p, jaw_center, jaw_scale);
          double add = 0.0;
          for (int s = 0; s < 8; ++s) {
            const Vec3 q = p + 0.25 * spacing * Vec3((s & 1) ? 1.0 : -1.0, (s & 2) ? 1.0 : -1.0, (s & 4) ? 1.0 : -1.0);
            const int cls = tooth.classify(q, enamel);
            if (cls != 0) add += ((cls == 2 ? kEnamel : kDentin) - bg) / 8.0;
          }
          intensity[n] = std::min(1.0, intensity[n] + add);
        }
  }
  t.intensity = VolumeGrid(g);
  for (std::size_t n = 0; n < intensity.size(); ++n) t.intensity[n] = static_cast<float>(intensity[n]);
  for (const auto& tooth : t.teeth) t.meshes.emplace(tooth.label, tooth_mesh(t.labels, tooth.label));
  return t;
}

// ---------------------------------------------------------------------------

Vec3 PhantomDeformation::displacement(const Vec3& x) const {
  Vec3 u = Vec3::Zero();
  for (const auto& b : bumps) u += b.amplitude * std::exp(-(x - b.center).squaredNorm() / (2.0 * b.width * b.width));
  for (const auto& j : jitter) {
    const Vec3 r = x - j.center;
    u += std::exp(-r.squaredNorm() / (2.0 * j.radius * j.radius)) * (j.rotation.cross(r) + j.translation);
  }
  return u;
}

Eigen::Matrix3d PhantomDeformation::gradient(const Vec3& x) const {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  for (const auto& b : bumps) {
    const Vec3 r = x - b.center;
    const double e = std::exp(-r.squaredNorm() / (2.0 * b.width * b.width));
    g -= (e / (b.width * b.width)) * b.amplitude * r.transpose();
  }
  for (const auto& j : jitter) {
    const Vec3 r = x - j.center;
    const double e = std::exp(-r.squaredNorm() / (2.0 * j.radius * j.radius));
    const Vec3 f = j.rotation.cross(r) + j.translation;
    g += e * skew(j.rotation) - (e / (j.radius * j.radius)) * f * r.transpose();
  }
  return g;
}

PhantomDeformation PhantomDeformation::negated() const {
  PhantomDeformation d = *this;
  for (auto& b : d.bumps) b.amplitude = -b.amplitude;
  for (auto& j : d.jitter) {
    j.rotation = -j.rotation;
    j.translation = -j.translation;
  }
  return d;
}

DisplacementField PhantomDeformation::sample(const GridGeometry& g) const {
  DisplacementField u(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) u.at(i, j, k) = displacement(g.physical_point(i, j, k));
  return u;
}

double PhantomDeformation::min_jacobian(const GridGeometry& g) const {
  double m = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        m = std::min(m, (Eigen::Matrix3d::Identity() + gradient(g.physical_point(i, j, k))).determinant());
      }
  return m;
}

Vec3 PhantomDeformation::preimage(const Vec3& p) const {
  Vec3 y = p - displacement(p);
  for (int it = 0; it < 200; ++it) {
    const Vec3 next = p - displacement(y);
    const double change = (next - y).norm();
    y = next;
    if (change < 1e-12) break;
  }
  return y;
}

PhantomSubject synthesize_subject(const PhantomTemplate& t, std::uint64_t seed, double amplitude_voxels,
                                  double noise_sigma, bool negated) {
  if (!(amplitude_voxels >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "deformation amplitude must be non-negative");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise sigma must be non-negative");
  const auto& g = t.labels.geometry();
  PhantomSubject s;
  s.seed = seed;
  s.amplitude_voxels = amplitude_voxels;
  s.noise_sigma = noise_sigma;
  s.negated = negated;
  bool accepted = false;
  for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
    const PhantomDeformation d = draw_deformation(t, seed, attempt, amplitude_voxels);
    // Both signs must be diffeomorphic so antithetic partners share the draw.
    if (d.min_jacobian(g) > 0.0 && d.negated().min_jacobian(g) > 0.0) {
      s.deformation = negated ? d.negated() : d;
      accepted = true;
    }
  }
  if (!accepted) {
    throw Error(ErrorKind::kGenerationFailure, "no diffeomorphic deformation after 20 draws; lower the amplitude");
  }

  s.field = s.deformation.sample(g);
  s.intensity = VolumeGrid(g);
  s.labels = LabelGrid(g);
  detail::Rng noise(detail::mix_seed(seed, negated ? 2 : 1));
  const float* src = t.intensity.data().data();
  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3& u = s.field.vectors[n];
        const Vec3 c(i + u.x() / g.spacing.x(), j + u.y() / g.spacing.y(), k + u.z() / g.spacing.z());
        double v = detail::sample_index_clamped(src, g.dims, c);
        if (noise_sigma > 0.0) v += noise_sigma * noise.normal();
        s.intensity[n] = static_cast<float>(v);
        const int ni = detail::nearest_index(c.x(), g.dims[0]);
        const int nj = detail::nearest_index(c.y(), g.dims[1]);
        const int nk = detail::nearest_index(c.z(), g.dims[2]);
        s.labels[n] = (ni < 0 || nj < 0 || nk < 0) ? 0 : t.labels(ni, nj, nk);
      }
  for (const auto& [label, mesh] : t.meshes) {
    auto& out = s.tracked_vertices[label];
    out.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.push_back(s.deformation.preimage(v));
  }
  return s;
}

std::vector<PhantomSubject> phantom_cohort(const PhantomTemplate& t, int n, std::uint64_t seed, double amplitude_voxels,
                                           double noise_sigma) {
  if (n < 2 || n % 2 != 0) throw Error(ErrorKind::kInvalidArgument, "antithetic cohorts need an even size >= 2");
  std::vector<PhantomSubject> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int pair = 0; pair < n / 2; ++pair) {
    const std::uint64_t s = detail::mix_seed(seed, static_cast<std::uint64_t>(pair));
    out.push_back(synthesize_subject(t, s, amplitude_voxels, noise_sigma, false));
    out.push_back(synthesize_subject(t, s, amplitude_voxels, noise_sigma, true));
  }
  return out;
}

DisplacementField mean_field(const std::vector<PhantomSubject>& cohort) {
  if (cohort.empty()) throw Error(ErrorKind::kInvalidArgument, "mean of an empty cohort");
  DisplacementField m(cohort.front().field.geometry);
  for (const auto& s : cohort) {
    if (!(s.field.geometry == m.geometry)) throw Error(ErrorKind::kInvalidArgument, "cohort fields differ in geometry");
    for (std::size_t n = 0; n < m.vectors.size(); ++n) m.vectors[n] += s.field.vectors[n];
  }
  for (auto& v : m.vectors) v /= static_cast<double>(cohort.size());
  return m;
}

}  // namespace dentatlas
