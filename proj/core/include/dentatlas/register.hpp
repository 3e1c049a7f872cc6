#pragma once

// Pairwise registration: similarity metrics, displacement-field algebra,
// linear (rigid/affine) optimisation and symmetric diffeomorphic registration.
//
// Conventions. Every transform maps points of the fixed domain into the moving
// domain, so resampling the moving image through it lands the moving image on
// the fixed lattice: warped(x) = moving(T(x)). A displacement field u encodes
// the map x -> x + u(x) in millimetres.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "dentatlas/volgrid.hpp"

namespace dentatlas {

struct RigidTransform {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 center = Vec3::Zero();

  Eigen::Matrix3d matrix() const { return rotation.toRotationMatrix(); }
  Vec3 apply(const Vec3& p) const { return rotation * (p - center) + center + translation; }
  RigidTransform inverse() const;
};

struct AffineTransform {
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 center = Vec3::Zero();

  static AffineTransform from_rigid(const RigidTransform& r);
  Vec3 apply(const Vec3& p) const { return linear * (p - center) + center + translation; }
  AffineTransform inverse() const;
  /// Same map expressed about another rotation centre.
  AffineTransform recentered(const Vec3& new_center) const;
  /// this(other(p)).
  AffineTransform compose(const AffineTransform& other) const;
};

struct DisplacementField {
  GridGeometry geometry;
  std::vector<Vec3> vectors;

  DisplacementField() = default;
  explicit DisplacementField(const GridGeometry& g) : geometry(g), vectors(g.voxel_count(), Vec3::Zero()) {}

  static DisplacementField zero(const GridGeometry& g) { return DisplacementField(g); }
  /// Constant field, e.g. a pure translation.
  static DisplacementField constant(const GridGeometry& g, const Vec3& u);

  Vec3& at(int i, int j, int k) { return vectors[geometry.linear_index(i, j, k)]; }
  const Vec3& at(int i, int j, int k) const { return vectors[geometry.linear_index(i, j, k)]; }
  /// Trilinear sample at a physical point, replicating the border outside.
  Vec3 sample(const Vec3& physical) const;
  /// Largest |u| measured in voxels of this lattice (per-axis spacing).
  double max_norm_voxels() const;
};

/// forward: fixed -> moving. inverse: moving -> fixed (on the same lattice).
struct DiffeoPair {
  DisplacementField forward;
  DisplacementField inverse;
};

struct RegistrationSchedule {
  std::vector<int> shrink_factors{8, 4, 2, 1};
  std::vector<double> smoothing_sigmas_voxels{3, 2, 1, 0};
  std::vector<int> max_iterations{100, 80, 40, 10};
  double convergence_tol = 1e-6;
  int convergence_window = 10;
  int cc_window_radius = 4;
  double gradient_step = 0.25;
  double update_field_sigma = 3.0;
  double total_field_sigma = 0.5;
  /// Smoothing sigmas are voxels by default; when true they are millimetres.
  bool sigmas_in_mm = false;

  void validate() const;
};

/// Two registration channels on one lattice.
struct ChannelPair {
  VolumeGrid intensity;
  VolumeGrid guidance;
  double w_intensity = 0.5;
  double w_guidance = 0.5;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Metrics.

/// Pearson correlation of two same-geometry volumes.
double global_correlation(const VolumeGrid& a, const VolumeGrid& b);

struct LocalCcResult {
  double metric = 0.0;             ///< mean windowed CC over valid voxels
  std::size_t valid_voxels = 0;    ///< voxels where both window variances exceed the floor
  DisplacementField gradient;      ///< d(metric)/d(sampling position of b), per voxel
};

/// Windowed normalised cross-correlation CC(x) = sAB^2 / (sAA sBB) with the
/// exact analytic gradient through every window that contains a voxel. The
/// spatial gradient of b is taken by central differences.
LocalCcResult local_cc(const VolumeGrid& a, const VolumeGrid& b, int radius);

// ---------------------------------------------------------------------------
// Warping and field algebra.

/// out(x) = v(x + u(x)), sampled trilinearly; outside reads 0.
VolumeGrid warp_volume(const VolumeGrid& v, const DisplacementField& u);
/// out(x) = v(T(x)) on the given lattice.
VolumeGrid warp_volume(const VolumeGrid& v, const AffineTransform& t, const GridGeometry& target);
VolumeGrid warp_volume(const VolumeGrid& v, const RigidTransform& t, const GridGeometry& target);
/// out(x) = v(T(x + u(x))) on the lattice of u.
VolumeGrid warp_volume(const VolumeGrid& v, const AffineTransform& t, const DisplacementField& u);
/// Nearest-neighbour label transport, out(x) = l(T(x + u(x))).
LabelGrid warp_labels(const LabelGrid& l, const AffineTransform& t, const DisplacementField& u);

/// (phi1 o phi2)(x) = x + u2(x) + u1(x + u2(x)).
DisplacementField compose_fields(const DisplacementField& phi1, const DisplacementField& phi2);

struct InversionOptions {
  int max_iterations = 50;
  double tolerance_voxels = 0.01;
  double max_residual_voxels = 0.5;
};

/// Fixed-point inversion v <- -u(x + v(x)). Throws InversionError when the
/// composition residual stays at or above max_residual_voxels.
DisplacementField invert_field(const DisplacementField& u, const InversionOptions& options = {});
/// Same, warm-started from `initial`.
DisplacementField invert_field(const DisplacementField& u, const DisplacementField& initial,
                               const InversionOptions& options = {});

/// max over x of |(phi_a o phi_b)(x) - x| in voxels, restricted to points whose
/// image under phi_b stays inside the lattice.
double composition_residual_voxels(const DisplacementField& phi_a, const DisplacementField& phi_b);

/// det(I + grad u): central differences inside, one-sided at the border.
VolumeGrid jacobian_determinant(const DisplacementField& u);
/// Smallest determinant over voxels with a full central-difference stencil.
double min_interior_jacobian(const DisplacementField& u);

/// exp(v) by scaling and squaring with at least `min_squarings` squarings.
DisplacementField exponentiate_field(const DisplacementField& v, int min_squarings = 4);

DisplacementField smooth_field(const DisplacementField& u, double sigma_voxels);
/// Trilinear (border replicate) resampling of a field onto another lattice.
DisplacementField resample_field(const DisplacementField& u, const GridGeometry& target);

// ---------------------------------------------------------------------------
// Linear registration.

enum class LinearMode { kRigid, kAffine };

struct LinearLevelTrace {
  int shrink = 1;
  std::vector<double> metric;  ///< metric after every accepted step, first entry = level start
};

struct LinearRegistrationResult {
  AffineTransform transform;
  RigidTransform rigid;  ///< the rigid stage result (affine mode refines it)
  double final_metric = 0.0;
  std::vector<LinearLevelTrace> trace;
};

/// Maximises the weighted global correlation over rigid (axis-angle +
/// translation) or affine parameters by finite-difference gradient ascent with
/// step halving, coarse to fine. The rotation centre is the fixed image's
/// intensity centroid. A level ends when an accepted step gains less than
/// convergence_tol. Affine mode runs the rigid stage first.
LinearRegistrationResult register_linear(const ChannelPair& fixed, const ChannelPair& moving, LinearMode mode,
                                         const RegistrationSchedule& schedule);

/// Intensity-weighted centroid (weights v - min v).
Vec3 intensity_centroid(const VolumeGrid& v);

// ---------------------------------------------------------------------------
// Symmetric diffeomorphic registration.

struct SynLevelTrace {
  int shrink = 1;
  std::vector<double> metric;
  int rejected_steps = 0;
};

struct SynResult {
  DiffeoPair fields;  ///< on the fixed lattice, after the linear init
  double final_metric = 0.0;
  std::vector<SynLevelTrace> trace;
};

/// Greedy symmetric registration: fixed and moving (after resampling through
/// `init`) both deform toward a midpoint under the weighted local CC metric.
/// The total map fixed -> moving is init(x + forward(x)).
SynResult register_syn(const ChannelPair& fixed, const ChannelPair& moving, const AffineTransform& init,
                       const RegistrationSchedule& schedule);

// ---------------------------------------------------------------------------
// Serialisation.

/// {"type": "affine"|"rigid", "matrix": [9, row-major], "translation": [3], "center": [3]}
std::string transform_to_json(const AffineTransform& t);
std::string transform_to_json(const RigidTransform& t);
AffineTransform affine_from_json(const std::string& text);
void write_transform(const std::filesystem::path& path, const AffineTransform& t);
AffineTransform read_transform(const std::filesystem::path& path);

/// 3-channel MET_FLOAT MetaImage.
void write_field(const std::filesystem::path& path, const DisplacementField& u);
DisplacementField read_field(const std::filesystem::path& path);

}  // namespace dentatlas
