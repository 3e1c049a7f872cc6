#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dentatlas/shape.hpp"

namespace dentatlas {

namespace {

constexpr int kMaxIterations = 100;
constexpr double kRmsTolerance = 1e-6;
constexpr int kDivergencePatience = 5;

struct Pose {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Vec3 d = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return r * p + d; }
};

Eigen::Matrix3d principal_axes(const std::vector<Vec3>& pts, const Vec3& c) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  // columns by descending eigenvalue
  Eigen::Matrix3d axes;
  for (int a = 0; a < 3; ++a) axes.col(a) = es.eigenvectors().col(2 - a);
  return axes;
}

std::vector<Vec3> moved(const std::vector<Vec3>& pts, const Pose& pose) {
  std::vector<Vec3> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pose.apply(pts[i]);
  return out;
}

double symmetric_distance(const SurfaceMesh& subject, const Pose& pose, const SurfaceLocator& templ_loc,
                          const SurfaceMesh& templ) {
  SurfaceMesh m = subject;
  m.vertices = moved(subject.vertices, pose);
  const SurfaceLocator sub_loc(m);
  double sum = 0.0;
  for (const auto& v : m.vertices) sum += templ_loc.closest(v).distance;
  for (const auto& v : templ.vertices) sum += sub_loc.closest(v).distance;
  return sum / static_cast<double>(m.vertices.size() + templ.vertices.size());
}

}  // namespace

AlignmentResult rigid_align_to_template(const SurfaceMesh& subject, const SurfaceMesh& templ) {
  if (subject.triangles.empty() || templ.triangles.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "rigid alignment needs two non-empty meshes");
  }
  const SurfaceLocator templ_loc(templ);
  const Vec3 cs = mesh_centroid(subject);
  const Vec3 ct = mesh_centroid(templ);
  const Eigen::Matrix3d es = principal_axes(subject.vertices, cs);
  const Eigen::Matrix3d et = principal_axes(templ.vertices, ct);

  // Candidates: centroid-only, then the four proper sign choices of the axes.
  std::vector<Eigen::Matrix3d> rotations{Eigen::Matrix3d::Identity()};
  for (int s = 0; s < 4; ++s) {
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(0, 0) = (s & 1) ? -1.0 : 1.0;
    d(1, 1) = (s & 2) ? -1.0 : 1.0;
    Eigen::Matrix3d r = et * d * es.transpose();
    if (r.determinant() < 0.0) {
      d(2, 2) = -1.0;
      r = et * d * es.transpose();
    }
    rotations.push_back(r);
  }
  Pose pose;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : rotations) {
    Pose cand{r, ct - r * cs};
    const double d = symmetric_distance(subject, cand, templ_loc, templ);
    if (d < best - 1e-12) {
      best = d;
      pose = cand;
    }
  }

  AlignmentResult result;
  double prev_rms = std::numeric_limits<double>::infinity();
  int rising = 0;
  SurfaceMesh current = subject;
  for (int it = 0; it < kMaxIterations; ++it) {
    current.vertices = moved(subject.vertices, pose);
    const SurfaceLocator sub_loc(current);
    const Vec3 pivot = mesh_centroid(current);
    Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
    double sq = 0.0;
    std::size_t count = 0;
    const auto add = [&](const Vec3& moving_pt, const Vec3& target, const Vec3& normal) {
      // residual n . (x + w x (x - pivot) + t - p)
      const double r = normal.dot(moving_pt - target);
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = (moving_pt - pivot).cross(normal);
      j.tail<3>() = normal;
      ata += j * j.transpose();
      atb -= j * r;
      sq += r * r;
      ++count;
    };
    for (const auto& x : current.vertices) {
      const auto c = templ_loc.closest(x);
      add(x, c.point, c.normal);
    }
    for (const auto& t : templ.vertices) {
      const auto c = sub_loc.closest(t);
      add(c.point, t, c.normal);
    }
    const double rms = std::sqrt(sq / static_cast<double>(count));
    result.rms = rms;
    result.iterations = it;
    if (rms > prev_rms) {
      if (++rising >= kDivergencePatience) {
        throw Error(ErrorKind::kAlignmentFailure, "ICP diverged: RMS rose for 5 consecutive iterations");
      }
    } else {
      rising = 0;
    }
    if (std::abs(prev_rms - rms) < kRmsTolerance) break;
    prev_rms = rms;

    const Eigen::Matrix<double, 6, 1> delta = ata.ldlt().solve(atb);
    if (!delta.allFinite()) throw Error(ErrorKind::kAlignmentFailure, "ICP produced a non-finite update");
    const Vec3 w = delta.head<3>();
    const Eigen::Matrix3d dr =
        w.norm() > 0.0 ? Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix() : Eigen::Matrix3d::Identity();
    // x -> dr (x - pivot) + pivot + t
    pose.r = dr * pose.r;
    pose.d = dr * (pose.d - pivot) + pivot + delta.tail<3>();
  }

  result.transform.rotation = Eigen::Quaterniond(pose.r).normalized();
  result.transform.center = cs;
  result.transform.translation = pose.d + pose.r * cs - cs;
  return result;
}

}  // namespace dentatlas
