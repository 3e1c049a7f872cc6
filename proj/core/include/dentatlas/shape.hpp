#pragma once

// Surface meshes, rigid alignment, coherent point drift correspondence and
// PCA shape models.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dentatlas/register.hpp"
#include "dentatlas/volgrid.hpp"

namespace dentatlas {

using Triangle = std::array<std::uint32_t, 3>;

struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<std::uint16_t> vertex_labels;  ///< empty or one per vertex

  bool empty() const { return vertices.empty(); }
  /// Throws when an index is out of range or labels have the wrong length.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Surface extraction and mesh utilities.

/// Marching cubes on the binary indicator of `label` (any nonzero label when
/// `label` is absent). Vertices are in millimetres, triangles face outward.
SurfaceMesh extract_surface(const LabelGrid& labels, std::optional<std::uint16_t> label = std::nullopt);
/// Marching cubes of a scalar field at `iso`; the inside is where v > iso.
SurfaceMesh extract_surface(const VolumeGrid& v, double iso = 0.5);

/// Drops triangles with area below 1e-12 mm^2, duplicate triangles and
/// unreferenced vertices.
SurfaceMesh clean_mesh(const SurfaceMesh& mesh);

double mesh_area(const SurfaceMesh& mesh);
/// V - E + F.
long euler_characteristic(const SurfaceMesh& mesh);
/// Every undirected edge is shared by exactly two triangles with opposite orientation.
bool is_closed_oriented(const SurfaceMesh& mesh);
Vec3 mesh_centroid(const SurfaceMesh& mesh);
SurfaceMesh transform_mesh(const SurfaceMesh& mesh, const RigidTransform& t);

/// ASCII PLY: float x/y/z (+ ushort label when present), face vertex_indices.
void write_ply(const std::filesystem::path& path, const SurfaceMesh& mesh);
SurfaceMesh read_ply(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Nearest-neighbour queries.

class PointIndex {
 public:
  explicit PointIndex(std::vector<Vec3> points);
  /// Index of the closest point.
  std::size_t nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    std::uint32_t begin, end;
    int axis;  // -1 for leaves
    double split;
    std::int32_t left, right;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;          ///< unit normal of the containing triangle
  std::size_t triangle;
  double distance;
};

/// Closest point on a triangle mesh.
class SurfaceLocator {
 public:
  explicit SurfaceLocator(const SurfaceMesh& mesh);
  SurfacePoint closest(const Vec3& q) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  Vec3 lo_;
  double cell_;
  Index3 dims_;
  std::vector<std::vector<std::uint32_t>> cells_;
};

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Mean of vertex-to-surface distances in both directions.
double symmetric_surface_distance(const SurfaceMesh& a, const SurfaceMesh& b);

// ---------------------------------------------------------------------------
// Rigid alignment.

struct AlignmentResult {
  RigidTransform transform;  ///< maps subject points onto the template
  double rms = 0.0;          ///< final point-to-plane RMS in mm
  int iterations = 0;
};

/// Centroid and principal-axes initialisation (best of the four proper sign
/// combinations by symmetric surface distance) refined by symmetric
/// point-to-plane ICP. Never scales.
AlignmentResult rigid_align_to_template(const SurfaceMesh& subject, const SurfaceMesh& templ);

// ---------------------------------------------------------------------------
// Coherent point drift.

struct CpdConfig {
  /// Kernel width in mm; 0 selects 2x the mean nearest-neighbour spacing of the template points.
  double beta = 0.0;
  double lambda = 3.0;
  double w = 0.1;
  int max_iterations = 150;
  double tolerance = 1e-8;
  /// Template points used by the EM; the motion is extended to all points through the kernel.
  std::size_t max_points = 1000;

  void validate() const;
};

struct CpdResult {
  Eigen::MatrixXd moved;      ///< template points after the coherent motion (n x 3)
  Eigen::MatrixXd posterior;  ///< P(template m | target n), (m x n) over the EM subset
  std::vector<std::size_t> subset;  ///< template indices used by the EM
  std::vector<double> objective;    ///< penalised negative log-likelihood per iteration
  double sigma2 = 0.0;
  int iterations = 0;
};

/// Non-rigid CPD: template points are the GMM centroids moving by v = G W.
CpdResult cpd_nonrigid(const Eigen::MatrixXd& template_points, const Eigen::MatrixXd& target_points,
                       const CpdConfig& cfg = {});

/// Subject shape expressed on the template topology: CPD-moved template
/// vertices projected onto the subject surface.
SurfaceMesh establish_correspondence(const SurfaceMesh& templ, const SurfaceMesh& subject, const CpdConfig& cfg = {});

// ---------------------------------------------------------------------------
// PCA shape models.

struct CorrespondedShapeSet {
  std::vector<Triangle> topology;
  std::vector<Eigen::VectorXd> shapes;  ///< each 3m, xyz interleaved per vertex
  std::vector<std::string> source_ids;

  void validate() const;
};

struct ShapeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd modes;  ///< 3m x k, orthonormal columns
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd explained_variance_ratio;
  std::vector<Triangle> topology;

  int mode_count() const { return static_cast<int>(modes.cols()); }
};

ShapeModel pca_fit(const CorrespondedShapeSet& shapes);
/// mean + sum c_i sqrt(lambda_i) mode_i, coefficients in standard deviations.
Eigen::VectorXd pca_synthesize(const ShapeModel& model, const Eigen::VectorXd& coefficients);
/// Inverse of pca_synthesize on the span of the modes.
Eigen::VectorXd pca_project(const ShapeModel& model, const Eigen::VectorXd& shape);
/// Smallest k whose cumulative explained ratio reaches `threshold`.
int explained_variance_report(const ShapeModel& model, double threshold);

/// JSON header at `path` plus `<stem>.mean.f64`, `<stem>.modes.f64` and
/// `<stem>.triangles.u32` next to it.
void write_shape_model(const std::filesystem::path& path, const ShapeModel& model);
ShapeModel read_shape_model(const std::filesystem::path& path);

SurfaceMesh mesh_from_shape(const Eigen::VectorXd& shape, const std::vector<Triangle>& topology);
Eigen::VectorXd shape_from_mesh(const SurfaceMesh& mesh);

}  // namespace dentatlas
