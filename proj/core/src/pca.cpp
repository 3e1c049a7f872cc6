#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dentatlas/shape.hpp"

namespace dentatlas {

namespace {

constexpr double kRelativeEigenFloor = 1e-10;

template <typename T>
void write_blob(const std::filesystem::path& path, const T* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  std::vector<unsigned char> bytes(count * sizeof(T));
  std::memcpy(bytes.data(), data, bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes.begin() + i * sizeof(T), bytes.begin() + (i + 1) * sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

template <typename T>
std::vector<T> read_blob(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes(count * sizeof(T));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw Error(ErrorKind::kIo, path.string() + " is truncated");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes.begin() + i * sizeof(T), bytes.begin() + (i + 1) * sizeof(T));
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

void CorrespondedShapeSet::validate() const {
  if (shapes.empty()) throw Error(ErrorKind::kInvalidArgument, "shape set is empty");
  const auto len = shapes.front().size();
  if (len == 0 || len % 3 != 0) throw Error(ErrorKind::kInvalidArgument, "shape vectors must hold 3 coordinates per vertex");
  for (const auto& s : shapes) {
    if (s.size() != len) throw Error(ErrorKind::kInvalidArgument, "shapes have different vertex counts");
    if (!s.allFinite()) throw Error(ErrorKind::kInvalidArgument, "shape contains non-finite coordinates");
  }
  const auto m = static_cast<std::uint32_t>(len / 3);
  for (const auto& t : topology) {
    for (auto v : t) {
      if (v >= m) throw Error(ErrorKind::kInvalidArgument, "topology index out of range");
    }
  }
  if (!source_ids.empty() && source_ids.size() != shapes.size()) {
    throw Error(ErrorKind::kInvalidArgument, "source id count does not match shape count");
  }
}

ShapeModel pca_fit(const CorrespondedShapeSet& set) {
  set.validate();
  const auto n = static_cast<Eigen::Index>(set.shapes.size());
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "PCA needs at least two shapes");
  const Eigen::Index dim = set.shapes.front().size();

  ShapeModel model;
  model.topology = set.topology;
  model.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : set.shapes) model.mean += s;
  model.mean /= static_cast<double>(n);

  Eigen::MatrixXd centered(dim, n);
  for (Eigen::Index i = 0; i < n; ++i) centered.col(i) = set.shapes[static_cast<std::size_t>(i)] - model.mean;
  const Eigen::MatrixXd gram = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::kNumericalFailure, "Gram eigen-decomposition failed");
  const double total = gram.trace();
  const double lambda_max = std::max(es.eigenvalues()(n - 1), 0.0);
  // Noise floor relative to the coordinate magnitudes, so identical shapes give no modes.
  const double scale = model.mean.squaredNorm() / static_cast<double>(dim) + 1.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = n - 1; i >= 0 && static_cast<Eigen::Index>(keep.size()) < n - 1; --i) {
    const double l = es.eigenvalues()(i);
    if (l > kRelativeEigenFloor * lambda_max && lambda_max > 1e-24 * scale) keep.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  model.modes.resize(dim, k);
  model.eigenvalues.resize(k);
  model.explained_variance_ratio.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index i = keep[static_cast<std::size_t>(c)];
    const double l = es.eigenvalues()(i);
    Eigen::VectorXd u = centered * es.eigenvectors().col(i);
    u /= u.norm();
    model.modes.col(c) = u;
    model.eigenvalues(c) = l;
    model.explained_variance_ratio(c) = l / total;
  }
  // One Gram-Schmidt pass removes round-off so the modes are orthonormal to working precision.
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index b = 0; b < c; ++b) model.modes.col(c) -= model.modes.col(b).dot(model.modes.col(c)) * model.modes.col(b);
    model.modes.col(c).normalize();
  }
  return model;
}

Eigen::VectorXd pca_synthesize(const ShapeModel& model, const Eigen::VectorXd& coefficients) {
  if (coefficients.size() > model.mode_count()) {
    throw Error(ErrorKind::kInvalidArgument, "more coefficients than model modes");
  }
  Eigen::VectorXd s = model.mean;
  for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
    s += coefficients(i) * std::sqrt(model.eigenvalues(i)) * model.modes.col(i);
  }
  return s;
}

Eigen::VectorXd pca_project(const ShapeModel& model, const Eigen::VectorXd& shape) {
  if (shape.size() != model.mean.size()) throw Error(ErrorKind::kInvalidArgument, "shape length does not match the model");
  Eigen::VectorXd c = model.modes.transpose() * (shape - model.mean);
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) /= std::sqrt(model.eigenvalues(i));
  return c;
}

int explained_variance_report(const ShapeModel& model, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "threshold must lie in (0, 1]");
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < model.explained_variance_ratio.size(); ++i) {
    cumulative += model.explained_variance_ratio(i);
    if (cumulative >= threshold - 1e-12) return static_cast<int>(i + 1);
  }
  throw Error(ErrorKind::kNotReachable, "the model captures only " + std::to_string(cumulative) +
                                            " of the variance, below the threshold " + std::to_string(threshold));
}

void write_shape_model(const std::filesystem::path& path, const ShapeModel& model) {
  const std::string stem = path.stem().string();
  const auto dir = path.parent_path();
  nlohmann::json j;
  j["format"] = "dentatlas-shape-model";
  j["vertex_count"] = model.mean.size() / 3;
  j["mode_count"] = model.mode_count();
  j["triangle_count"] = model.topology.size();
  j["eigenvalues"] = std::vector<double>(model.eigenvalues.data(), model.eigenvalues.data() + model.eigenvalues.size());
  j["explained_variance_ratio"] = std::vector<double>(
      model.explained_variance_ratio.data(), model.explained_variance_ratio.data() + model.explained_variance_ratio.size());
  j["mean_file"] = stem + ".mean.f64";
  j["modes_file"] = stem + ".modes.f64";
  j["triangles_file"] = stem + ".triangles.u32";
  write_blob(dir / (stem + ".mean.f64"), model.mean.data(), static_cast<std::size_t>(model.mean.size()));
  write_blob(dir / (stem + ".modes.f64"), model.modes.data(), static_cast<std::size_t>(model.modes.size()));
  std::vector<std::uint32_t> tri;
  tri.reserve(3 * model.topology.size());
  for (const auto& t : model.topology) tri.insert(tri.end(), t.begin(), t.end());
  write_blob(dir / (stem + ".triangles.u32"), tri.data(), tri.size());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ShapeModel read_shape_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format").get<std::string>() != "dentatlas-shape-model") throw Error(ErrorKind::kIo, "not a shape model header");
    const auto dir = path.parent_path();
    const auto m = j.at("vertex_count").get<Eigen::Index>();
    const auto k = j.at("mode_count").get<Eigen::Index>();
    const auto nt = j.at("triangle_count").get<std::size_t>();
    ShapeModel model;
    const auto eig = j.at("eigenvalues").get<std::vector<double>>();
    const auto ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(eig.size()) != k || static_cast<Eigen::Index>(ratio.size()) != k) {
      throw Error(ErrorKind::kIo, "eigenvalue count does not match mode_count");
    }
    model.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), k);
    model.explained_variance_ratio = Eigen::Map<const Eigen::VectorXd>(ratio.data(), k);
    const auto mean = read_blob<double>(dir / j.at("mean_file").get<std::string>(), static_cast<std::size_t>(3 * m));
    model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), 3 * m);
    const auto modes = read_blob<double>(dir / j.at("modes_file").get<std::string>(), static_cast<std::size_t>(3 * m * k));
    model.modes = Eigen::Map<const Eigen::MatrixXd>(modes.data(), 3 * m, k);
    const auto tri = read_blob<std::uint32_t>(dir / j.at("triangles_file").get<std::string>(), 3 * nt);
    model.topology.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      model.topology[t] = {tri[3 * t], tri[3 * t + 1], tri[3 * t + 2]};
      for (auto v : model.topology[t]) {
        if (v >= static_cast<std::uint32_t>(m)) throw Error(ErrorKind::kIo, "triangle index out of range");
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
}

}  // namespace dentatlas
