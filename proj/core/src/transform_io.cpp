#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dentatlas/metaimage.hpp"
#include "dentatlas/register.hpp"

namespace dentatlas {

namespace {

using nlohmann::json;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json transform_json(const char* type, const Eigen::Matrix3d& m, const Vec3& t, const Vec3& c) {
  json matrix = json::array();
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) matrix.push_back(m(r, col));
  return json{{"type", type}, {"matrix", matrix}, {"translation", vec_json(t)}, {"center", vec_json(c)}};
}

Vec3 read_vec(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw Error(ErrorKind::kIo, std::string("transform field '") + key + "' needs 3 numbers");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

std::string transform_to_json(const AffineTransform& t) {
  return transform_json("affine", t.linear, t.translation, t.center).dump(2);
}

std::string transform_to_json(const RigidTransform& t) {
  return transform_json("rigid", t.matrix(), t.translation, t.center).dump(2);
}

AffineTransform affine_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const std::string type = j.at("type").get<std::string>();
    if (type != "affine" && type != "rigid") throw Error(ErrorKind::kIo, "unknown transform type '" + type + "'");
    const auto& m = j.at("matrix");
    if (!m.is_array() || m.size() != 9) throw Error(ErrorKind::kIo, "transform matrix needs 9 numbers");
    AffineTransform t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.linear(r, c) = m[3 * r + c].get<double>();
    t.translation = read_vec(j, "translation");
    t.center = read_vec(j, "center");
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed transform: ") + e.what());
  }
}

void write_transform(const std::filesystem::path& path, const AffineTransform& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << transform_to_json(t) << '\n';
}

AffineTransform read_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return affine_from_json(ss.str());
}

void write_field(const std::filesystem::path& path, const DisplacementField& u) {
  std::vector<float> values;
  values.reserve(u.vectors.size() * 3);
  for (const auto& v : u.vectors) {
    values.push_back(static_cast<float>(v.x()));
    values.push_back(static_cast<float>(v.y()));
    values.push_back(static_cast<float>(v.z()));
  }
  write_float_channels(path, u.geometry, 3, values);
}

DisplacementField read_field(const std::filesystem::path& path) {
  GridGeometry g;
  const std::vector<float> values = read_float_channels(path, 3, g);
  DisplacementField u(g);
  for (std::size_t n = 0; n < u.vectors.size(); ++n) {
    u.vectors[n] = Vec3(values[3 * n], values[3 * n + 1], values[3 * n + 2]);
  }
  return u;
}

}  // namespace dentatlas
