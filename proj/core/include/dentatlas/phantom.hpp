#pragma once

// Synthetic dentition phantom: a hidden template with 28 superellipsoid teeth
// on two parabolic arches, and subjects drawn from it through known smooth
// deformations.

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "dentatlas/register.hpp"
#include "dentatlas/shape.hpp"
#include "dentatlas/volgrid.hpp"

namespace dentatlas {

struct PhantomTooth {
  std::uint16_t label = 0;
  Vec3 crown_center = Vec3::Zero();  ///< mm
  /// Columns: mesio-distal tangent, bucco-lingual normal, crown-to-root axis.
  Eigen::Matrix3d frame = Eigen::Matrix3d::Identity();
  Vec3 crown_half = Vec3::Ones();  ///< superellipsoid half-sizes along the frame, mm
  double crown_exponent = 4.0;
  double root_length = 1.0;  ///< mm from the crown centre plane to the apex
  Eigen::Vector2d root_radius = Eigen::Vector2d::Ones();  ///< at the crown centre plane, mm

  /// 0 outside, 1 dentin, 2 enamel.
  int classify(const Vec3& p, double enamel_thickness) const;
};

struct PhantomTemplate {
  std::uint64_t seed = 0;
  VolumeGrid intensity;
  LabelGrid labels;
  std::vector<PhantomTooth> teeth;              ///< arch order
  std::map<std::uint16_t, SurfaceMesh> meshes;  ///< vertex ids are canonical per tooth
};

/// Tooth parameter ranges (arch geometry in fractions of the grid, sizes
/// jittered by up to 6%, tilts up to 4 degrees) are drawn from `seed`.
PhantomTemplate generate_template(std::uint64_t seed, const Index3& dims = {96, 96, 96}, double spacing = 0.4);

/// Analytic displacement: Gaussian bumps plus per-tooth windowed rigid jitter.
struct PhantomDeformation {
  struct Bump {
    Vec3 center;
    double width;
    Vec3 amplitude;
  };
  struct Jitter {
    Vec3 center;
    double radius;
    Vec3 rotation;  ///< small-angle rotation vector, rad
    Vec3 translation;
  };
  std::vector<Bump> bumps;
  std::vector<Jitter> jitter;

  Vec3 displacement(const Vec3& x) const;
  Eigen::Matrix3d gradient(const Vec3& x) const;
  PhantomDeformation negated() const;
  DisplacementField sample(const GridGeometry& g) const;
  /// min det(I + grad u) over the lattice, evaluated analytically.
  double min_jacobian(const GridGeometry& g) const;
  /// y with y + u(y) = p.
  Vec3 preimage(const Vec3& p) const;
};

struct PhantomSubject {
  std::uint64_t seed = 0;
  double amplitude_voxels = 0.0;
  double noise_sigma = 0.0;
  bool negated = false;  ///< antithetic partner of the subject drawn from the same seed
  PhantomDeformation deformation;
  VolumeGrid intensity;
  LabelGrid labels;
  /// subject(x) = template(x + field(x)) on the template lattice.
  DisplacementField field;
  /// Template mesh vertices carried into subject space, same ids as the template meshes.
  std::map<std::uint16_t, std::vector<Vec3>> tracked_vertices;
};

/// Deformation scaled so the bump part peaks at `amplitude_voxels`, plus
/// additive Gaussian noise. Redraws (up to 20 times) when the Jacobian is not
/// positive everywhere.
PhantomSubject synthesize_subject(const PhantomTemplate& t, std::uint64_t seed, double amplitude_voxels,
                                  double noise_sigma, bool negated = false);

/// n subjects (n even) in antithetic pairs: subjects 2i and 2i+1 share their
/// deformation draw with opposite sign.
std::vector<PhantomSubject> phantom_cohort(const PhantomTemplate& t, int n, std::uint64_t seed, double amplitude_voxels,
                                           double noise_sigma);

/// Voxelwise mean of the ground-truth fields.
DisplacementField mean_field(const std::vector<PhantomSubject>& cohort);

}  // namespace dentatlas
