#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dentatlas/metaimage.hpp"
#include "dentatlas/register.hpp"
#include "support.hpp"

using namespace dentatlas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "dentatlas_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("volume round trip through .mhd/.raw and .mha") {
  const auto dir = scratch_dir("metaimage");
  GridGeometry g;
  g.dims = {5, 4, 3};
  g.spacing = Vec3(0.4, 0.5, 0.6);
  g.origin = Vec3(-1.25, 3.0, 0.1);
  const auto v = testing_support::blob_volume(g, 8);
  write_volume(dir / "v.mhd", v);
  CHECK(fs::exists(dir / "v.raw"));
  CHECK(read_volume(dir / "v.mhd") == v);
  write_volume(dir / "v.mha", v);
  CHECK(read_volume(dir / "v.mha") == v);

  LabelGrid l(g);
  l(1, 2, 0) = 47;
  l(4, 3, 2) = 11;
  write_labels(dir / "l.mhd", l);
  CHECK(read_labels(dir / "l.mhd") == l);
  CHECK(read_metaimage_header(dir / "l.mhd").element_type == ElementType::kUShort);
}

TEST_CASE("reader ignores unknown keys and accepts the binary byte order alias") {
  const auto dir = scratch_dir("metaimage_keys");
  {
    std::ofstream h(dir / "x.mhd");
    h << "ObjectType = Image\nNDims = 3\nCompressedData = False\nDimSize = 2 1 1\n"
         "ElementSpacing = 1 1 1\nOffset = 0 0 0\nAnatomicalOrientation = RAI\n"
         "BinaryDataByteOrderMSB = False\nElementType = MET_FLOAT\nElementDataFile = x.raw\n";
    std::ofstream r(dir / "x.raw", std::ios::binary);
    const float data[2] = {1.5f, -2.0f};
    r.write(reinterpret_cast<const char*>(data), sizeof(data));
  }
  const auto v = read_volume(dir / "x.mhd");
  CHECK(v[0] == 1.5f);
  CHECK(v[1] == -2.0f);
}

TEST_CASE("truncated payload is an IO error") {
  const auto dir = scratch_dir("metaimage_short");
  {
    std::ofstream h(dir / "s.mhd");
    h << "NDims = 3\nDimSize = 4 4 4\nElementType = MET_FLOAT\nElementDataFile = s.raw\n";
    std::ofstream r(dir / "s.raw", std::ios::binary);
    r << "abc";
  }
  CHECK_THROWS_AS(read_volume(dir / "s.mhd"), Error);
}

TEST_CASE("displacement fields and transforms serialise") {
  const auto dir = scratch_dir("fields_io");
  GridGeometry g = testing_support::cube_geometry(4, 0.5);
  DisplacementField u(g);
  for (std::size_t n = 0; n < u.vectors.size(); ++n) u.vectors[n] = Vec3(0.25 * n, -0.5, 1.0 / 8.0);
  write_field(dir / "u.mhd", u);
  const auto back = read_field(dir / "u.mhd");
  CHECK(back.geometry == g);
  CHECK(back.vectors == u.vectors);
  CHECK(read_metaimage_header(dir / "u.mhd").channels == 3);

  AffineTransform t;
  t.linear << 1.1, 0.1, 0.0, -0.05, 0.95, 0.02, 0.0, 0.01, 1.0;
  t.translation = Vec3(1.5, -2.25, 0.125);
  t.center = Vec3(10.0, 11.0, 12.5);
  write_transform(dir / "t.json", t);
  const auto r = read_transform(dir / "t.json");
  CHECK(r.linear == t.linear);
  CHECK(r.translation == t.translation);
  CHECK(r.center == t.center);
  CHECK_THROWS_AS(affine_from_json("{\"type\": \"affine\"}"), Error);
}
