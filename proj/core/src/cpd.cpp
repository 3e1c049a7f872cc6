#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "dentatlas/shape.hpp"

namespace dentatlas {

namespace {

constexpr double kSigma2Floor = 1e-12;

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Deterministic farthest-point subsample starting from index 0.
std::vector<std::size_t> farthest_point_subset(const Eigen::MatrixXd& pts, std::size_t count) {
  const auto n = static_cast<std::size_t>(pts.rows());
  std::vector<std::size_t> out;
  if (count >= n) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(next);
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(next))).squaredNorm());
      if (d2[i] > best_d) {
        best_d = d2[i];
        best = i;
      }
    }
    next = best;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Points rows_of(const Eigen::MatrixXd& pts, const std::vector<std::size_t>& idx) {
  Points out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

double mean_nearest_spacing(const Points& y) {
  std::vector<Vec3> pts(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index i = 0; i < y.rows(); ++i) pts[static_cast<std::size_t>(i)] = y.row(i).transpose();
  if (pts.size() < 2) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) best = std::min(best, (pts[i] - pts[j]).squaredNorm());
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(pts.size());
}

Eigen::MatrixXd gaussian_gram(const Points& a, const Points& b, double beta) {
  Eigen::MatrixXd g(a.rows(), b.rows());
  const double k = 1.0 / (2.0 * beta * beta);
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) g(i, j) = std::exp(-k * (a.row(i) - b.row(j)).squaredNorm());
  return g;
}

void check_points(const Eigen::MatrixXd& p, const char* what) {
  if (p.rows() == 0 || p.cols() != 3) {
    throw Error(ErrorKind::kInvalidArgument, std::string(what) + " must be a non-empty n x 3 matrix");
  }
  if (!p.allFinite()) throw Error(ErrorKind::kInvalidArgument, std::string(what) + " contains non-finite values");
}

}  // namespace

void CpdConfig::validate() const {
  if (!(beta >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "cpd beta must be positive (0 selects the default)");
  if (!(lambda > 0.0)) throw Error(ErrorKind::kInvalidArgument, "cpd lambda must be positive");
  if (!(w >= 0.0 && w < 1.0)) throw Error(ErrorKind::kInvalidArgument, "cpd w must lie in [0, 1)");
  if (max_iterations < 1) throw Error(ErrorKind::kInvalidArgument, "cpd needs at least one iteration");
  if (!(tolerance >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "cpd tolerance must be non-negative");
  if (max_points < 4) throw Error(ErrorKind::kInvalidArgument, "cpd max_points must be at least 4");
}

CpdResult cpd_nonrigid(const Eigen::MatrixXd& template_points, const Eigen::MatrixXd& target_points,
                       const CpdConfig& cfg) {
  cfg.validate();
  check_points(template_points, "template points");
  check_points(target_points, "target points");

  CpdResult result;
  result.subset = farthest_point_subset(template_points, cfg.max_points);
  const Points y = rows_of(template_points, result.subset);
  const Points x = rows_of(target_points, farthest_point_subset(target_points, cfg.max_points));
  const Eigen::Index m = y.rows(), n = x.rows();
  constexpr double d = 3.0;

  const double beta = cfg.beta > 0.0 ? cfg.beta : 2.0 * mean_nearest_spacing(y);
  const Eigen::MatrixXd g = gaussian_gram(y, y, beta);

  double sigma2 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) sigma2 += (x.row(j) - y.row(i)).squaredNorm();
  sigma2 /= d * static_cast<double>(m) * static_cast<double>(n);
  if (!(sigma2 > kSigma2Floor)) sigma2 = kSigma2Floor;

  Points w = Points::Zero(m, 3);
  Points t = y;
  Eigen::MatrixXd p(m, n);
  const double log_prior = std::log((1.0 - cfg.w) / static_cast<double>(m));
  for (int it = 0;; ++it) {
    // E-step and the penalised negative log-likelihood at the current parameters.
    const double log_c = cfg.w > 0.0 ? 0.5 * d * std::log(2.0 * std::numbers::pi * sigma2) + std::log(cfg.w / (1.0 - cfg.w)) +
                                           std::log(static_cast<double>(m) / static_cast<double>(n))
                                     : -std::numeric_limits<double>::infinity();
    double nll = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double amax = log_c;
      for (Eigen::Index i = 0; i < m; ++i) {
        p(i, j) = -(x.row(j) - t.row(i)).squaredNorm() / (2.0 * sigma2);
        amax = std::max(amax, p(i, j));
      }
      double sum = cfg.w > 0.0 ? std::exp(log_c - amax) : 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        p(i, j) = std::exp(p(i, j) - amax);
        sum += p(i, j);
      }
      p.col(j) /= sum;
      nll -= log_prior - 0.5 * d * std::log(2.0 * std::numbers::pi * sigma2) + amax + std::log(sum);
    }
    nll += 0.5 * cfg.lambda * (w.transpose() * g * w).trace();
    if (!std::isfinite(nll)) throw Error(ErrorKind::kNumericalFailure, "cpd objective is not finite");
    result.objective.push_back(nll);
    result.iterations = it;
    if (it > 0) {
      const double prev = result.objective[result.objective.size() - 2];
      if (std::abs(prev - nll) <= cfg.tolerance * std::abs(nll)) break;
    }
    if (it >= cfg.max_iterations || sigma2 <= kSigma2Floor) break;

    // M-step: (G + lambda sigma2 diag(P1)^-1) W = diag(P1)^-1 P X - Y, solved in the
    // equivalent form (diag(P1) G + lambda sigma2 I) W = P X - diag(P1) Y, which
    // stays exact when a centroid receives no responsibility.
    const Eigen::VectorXd p1 = p.rowwise().sum();
    const Eigen::VectorXd pt1 = p.colwise().sum().transpose();
    const Points px = p * x;
    const double np = p1.sum();
    Eigen::MatrixXd a = p1.asDiagonal() * g;
    a.diagonal().array() += cfg.lambda * sigma2;
    const Points rhs = px - p1.asDiagonal() * y;
    w = a.partialPivLu().solve(rhs);
    t = y + g * w;
    if (!w.allFinite()) throw Error(ErrorKind::kNumericalFailure, "cpd update is not finite");

    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += pt1(j) * x.row(j).squaredNorm();
    s -= 2.0 * (px.array() * t.array()).sum();
    for (Eigen::Index i = 0; i < m; ++i) s += p1(i) * t.row(i).squaredNorm();
    sigma2 = std::max(s / (np * d), kSigma2Floor);
  }

  result.sigma2 = sigma2;
  result.posterior = std::move(p);
  // Extend the coherent motion to every template point through the kernel.
  const Points all = template_points;
  result.moved = all + gaussian_gram(all, y, beta) * w;
  return result;
}

SurfaceMesh establish_correspondence(const SurfaceMesh& templ, const SurfaceMesh& subject, const CpdConfig& cfg) {
  if (templ.triangles.empty() || subject.triangles.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "correspondence needs two non-empty meshes");
  }
  const auto to_matrix = [](const std::vector<Vec3>& v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
  };
  const auto cpd = cpd_nonrigid(to_matrix(templ.vertices), to_matrix(subject.vertices), cfg);
  const SurfaceLocator loc(subject);
  SurfaceMesh out;
  out.triangles = templ.triangles;
  out.vertex_labels = templ.vertex_labels;
  out.vertices.resize(templ.vertices.size());
  for (std::size_t i = 0; i < templ.vertices.size(); ++i) {
    out.vertices[i] = loc.closest(cpd.moved.row(static_cast<Eigen::Index>(i)).transpose()).point;
  }
  return out;
}

}  // namespace dentatlas
