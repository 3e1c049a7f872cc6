#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "commands.hpp"
#include "config.hpp"
#include "dentatlas/metaimage.hpp"
#include "dentatlas/phantom.hpp"

using namespace dentatlas;
using namespace dentatlas::cli;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dentatlas_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::kNotReachable;
}

}  // namespace

TEST_CASE("config round trips through JSON with a stable hash") {
  const PipelineConfig defaults;
  const json j = to_json(defaults);
  const PipelineConfig back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(config_hash(back) == config_hash(defaults));
  CHECK(hex64(config_hash(defaults)).size() == 16);

  CHECK(j.at("working_spacing").get<double>() == 0.4);
  CHECK(j.at("atlas").at("outer_iterations").get<int>() == 10);
  CHECK(j.at("atlas").at("shape_update_step").get<double>() == 0.25);
  CHECK(j.at("shape").at("pca_threshold").get<double>() == 0.85);

  PipelineConfig changed = defaults;
  changed.atlas.outer_iterations = 5;
  CHECK(config_hash(changed) != config_hash(defaults));

  const fs::path dir = scratch("roundtrip");
  config_init(dir / "config.json");
  CHECK(config_hash(load_config(dir / "config.json")) == config_hash(defaults));
}

TEST_CASE("config keeps defaults for missing keys and rejects unknown ones by name") {
  const PipelineConfig partial = config_from_json(json{{"atlas", {{"outer_iterations", 3}}}});
  CHECK(partial.atlas.outer_iterations == 3);
  CHECK(partial.atlas.shape_update_step == 0.25);

  for (const auto& [doc, key] : std::vector<std::pair<json, std::string>>{
           {json{{"bogus", 1}}, "bogus"},
           {json{{"atlas", {{"iterations", 3}}}}, "atlas.iterations"},
           {json{{"shape", {{"cpd", {{"betta", 2.0}}}}}}, "shape.cpd.betta"},
       }) {
    try {
      config_from_json(doc);
      FAIL("accepted " << doc.dump());
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfig);
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  }

  PipelineConfig bad;
  bad.working_spacing = -1.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
  bad = PipelineConfig{};
  bad.atlas.shape_update_step = 0.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("error kinds map to documented exit codes") {
  CHECK(exit_code_for(ErrorKind::kConfig) == 2);
  CHECK(exit_code_for(ErrorKind::kInvalidArgument) == 3);
  CHECK(exit_code_for(ErrorKind::kIo) == 3);
  CHECK(exit_code_for(ErrorKind::kMissingLabel) == 3);
  CHECK(exit_code_for(ErrorKind::kRegistrationFailure) == 4);
  CHECK(exit_code_for(ErrorKind::kGenerationFailure) == 4);
  CHECK(exit_code_for(ErrorKind::kInversionFailure) == 4);

  try {
    stage("load subject_003", [] { throw Error(ErrorKind::kIo, "missing file"); });
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
    CHECK(std::string(e.what()) == "load subject_003: missing file");
  }
}

TEST_CASE("manifest paths resolve against the manifest directory") {
  const fs::path dir = scratch("manifest");
  std::ofstream(dir / "m.json") << json{{"subjects",
                                         {{{"id", "a"}, {"intensity", "a/i.mha"}, {"labels", "/abs/l.mha"}}}}}.dump();
  const auto entries = read_manifest(dir / "m.json");
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].intensity == dir / "a/i.mha");
  CHECK(entries[0].labels == fs::path("/abs/l.mha"));

  std::ofstream(dir / "dup.json") << json{{"subjects",
                                           {{{"id", "a"}, {"intensity", "x"}, {"labels", "y"}},
                                            {{"id", "a"}, {"intensity", "x"}, {"labels", "y"}}}}}.dump();
  CHECK(kind_of([&] { read_manifest(dir / "dup.json"); }) == ErrorKind::kInvalidArgument);
  std::ofstream(dir / "bad.json") << json{{"subjects", {{{"id", "a"}}}}}.dump();
  CHECK(kind_of([&] { read_manifest(dir / "bad.json"); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("atlas build refuses a one-subject manifest") {
  const fs::path dir = scratch("atlas_one");
  std::ofstream(dir / "m.json") << json{{"subjects", {{{"id", "a"}, {"intensity", "i.mha"}, {"labels", "l.mha"}}}}}
                                       .dump();
  try {
    atlas_build(PipelineConfig{}, dir / "m.json", dir / "out");
    FAIL("accepted a single subject");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidArgument);
    CHECK(exit_code_for(e.kind()) == 3);
    CHECK(std::string(e.what()).find("at least 2") != std::string::npos);
  }
}

TEST_CASE("enhance on a phantom template crops by the margin arithmetic") {
  const PhantomTemplate t = generate_template(2, {40, 40, 40}, 0.6);
  const fs::path dir = scratch("enhance");
  write_volume(dir / "i.mha", t.intensity);
  write_labels(dir / "l.mha", t.labels);

  Index3 lo{40, 40, 40}, hi{-1, -1, -1};
  for (int k = 0; k < 40; ++k)
    for (int j = 0; j < 40; ++j)
      for (int i = 0; i < 40; ++i) {
        if (t.labels(i, j, k) == 0) continue;
        const Index3 idx{i, j, k};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], idx[a]);
          hi[a] = std::max(hi[a], idx[a]);
        }
      }

  for (int margin : {30, 3}) {
    PipelineConfig c;
    c.working_spacing = 0.6;
    c.enhancement.margin_voxels = margin;
    c.enhancement.dilation_radius_voxels = 2;
    const fs::path out = dir / ("m" + std::to_string(margin));
    enhance_command(c, dir / "i.mha", dir / "l.mha", out);
    const json crop = read(out / "crop.json");
    for (int a = 0; a < 3; ++a) {
      CHECK(crop.at("min")[a].get<int>() == std::max(0, lo[a] - margin));
      CHECK(crop.at("max")[a].get<int>() == std::min(39, hi[a] + margin));
    }
    const VolumeGrid guidance = read_volume(out / "guidance.mha");
    for (int a = 0; a < 3; ++a) {
      CHECK(guidance.dims()[a] == crop.at("max")[a].get<int>() - crop.at("min")[a].get<int>() + 1);
    }
    const json prov = read(out / "provenance.json");
    CHECK(prov.at("command") == "enhance");
    CHECK(prov.at("config_hash") == hex64(config_hash(c)));
  }
}

TEST_CASE("pca on a one-mode family reports k = 1") {
  const PhantomTemplate t = generate_template(2, {40, 40, 40}, 0.6);
  const SurfaceMesh base = t.meshes.at(11);
  const Vec3 c = mesh_centroid(base);
  const fs::path dir = scratch("pca");
  json shapes = json::array();
  for (int s = 0; s < 8; ++s) {
    SurfaceMesh m = base;
    const double amount = 0.1 * (s - 3.5);
    for (auto& v : m.vertices) v.z() += amount * (v.z() - c.z());
    const std::string file = "shape_" + std::to_string(s) + ".ply";
    write_ply(dir / file, m);
    shapes.push_back({{"id", "s" + std::to_string(s)}, {"file", file}});
  }
  std::ofstream(dir / "correspondence.json") << json{{"shapes", shapes}}.dump();
  const PipelineConfig cfg;
  CHECK(pca_command(cfg, dir, 0.85, dir / "model") == 1);
  const json report = read(dir / "model" / "report.json");
  CHECK(report.at("k").get<int>() == 1);
  CHECK(report.at("explained_variance_ratio")[0].get<double>() > 0.999);

  const auto files = shape_synth_command(cfg, dir / "model" / "model.json", 1, -3.0, 3.0, 7, dir / "synth");
  REQUIRE(files.size() == 7);
  const SurfaceMesh middle = read_ply(files[3]);
  const ShapeModel model = read_shape_model(dir / "model" / "model.json");
  CHECK((shape_from_mesh(middle) - model.mean).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(kind_of([&] { shape_synth_command(cfg, dir / "model" / "model.json", 9, -3, 3, 7, dir / "bad"); }) ==
        ErrorKind::kInvalidArgument);
}
