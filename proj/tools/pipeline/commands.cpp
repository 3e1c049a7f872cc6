#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "dentatlas/metaimage.hpp"
#include "dentatlas/phantom.hpp"
#include "dentatlas/shape.hpp"

namespace dentatlas::cli {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string tooth_file(std::uint16_t label) { return "tooth_" + std::to_string(label) + ".ply"; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kIo, path.string() + " is not valid JSON: " + e.what());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

RegistrationSchedule schedule_of(const PipelineConfig& c) { return c.registration; }

ChannelPair channels_of(const EnhancedImage& e, const PipelineConfig& c) {
  return {e.intensity, e.guidance, c.atlas.w_intensity, c.atlas.w_guidance};
}

LabelGrid binary(const LabelGrid& l) {
  LabelGrid out(l.geometry());
  for (std::size_t n = 0; n < l.size(); ++n) out[n] = l[n] != 0 ? 1 : 0;
  return out;
}

SurfaceMesh surface_of(const LabelGrid& labels, std::uint16_t label) {
  if (label == 0) return extract_surface(labels);
  return extract_surface(labels, label);
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kDegenerateInput:
    case ErrorKind::kEmptyForeground:
    case ErrorKind::kMissingLabel:
    case ErrorKind::kIo:
      return 3;
    case ErrorKind::kInversionFailure:
    case ErrorKind::kRegistrationFailure:
    case ErrorKind::kAveragingFailure:
    case ErrorKind::kAlignmentFailure:
    case ErrorKind::kNumericalFailure:
    case ErrorKind::kGenerationFailure:
    case ErrorKind::kNotReachable:
      return 4;
  }
  return 4;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object() || !j.contains("subjects") || !j.at("subjects").is_array()) {
    throw Error(ErrorKind::kInvalidArgument, path.string() + ": manifest needs a \"subjects\" array");
  }
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  for (const auto& s : j.at("subjects")) {
    for (const char* key : {"id", "intensity", "labels"}) {
      if (!s.contains(key) || !s.at(key).is_string()) {
        throw Error(ErrorKind::kInvalidArgument,
                    path.string() + ": subject entry " + std::to_string(out.size()) + " lacks \"" + key + "\"");
      }
    }
    ManifestEntry e;
    e.id = s.at("id").get<std::string>();
    if (!ids.insert(e.id).second) throw Error(ErrorKind::kInvalidArgument, "duplicate subject id " + e.id);
    e.intensity = s.at("intensity").get<std::string>();
    e.labels = s.at("labels").get<std::string>();
    if (e.intensity.is_relative()) e.intensity = base / e.intensity;
    if (e.labels.is_relative()) e.labels = base / e.labels;
    out.push_back(std::move(e));
  }
  return out;
}

Subject load_subject(const ManifestEntry& e, const PipelineConfig& c) {
  Subject s;
  s.intensity = read_volume(e.intensity);
  s.labels = read_labels(e.labels);
  if (!(s.intensity.geometry() == s.labels.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "subject " + e.id + ": intensity and labels differ in geometry");
  }
  const Vec3 target = Vec3::Constant(c.working_spacing);
  if ((s.intensity.geometry().spacing - target).cwiseAbs().maxCoeff() > 1e-9) {
    s.intensity = resample_trilinear(s.intensity, target);
    s.labels = resample_nearest(s.labels, target);
  }
  s.intensity = normalize_intensity(s.intensity);
  return s;
}

EnhancedImage enhance_identity_free(const VolumeGrid& intensity, const LabelGrid& labels,
                                    const EnhancementConfig& config) {
  EnhancementConfig binary_config = config;
  binary_config.reassignment_table = {{1, 1.0f}};
  EnhancedImage e = enhance(intensity, binary(labels), binary_config);
  e.labels = crop_with_margin(labels, bounding_box_of_labels(labels), config.margin_voxels);
  return e;
}

void write_provenance(const fs::path& dir, const std::string& command, const PipelineConfig& c, const json& extra) {
  json p = {{"tool", "dentatlas"},
            {"version", kVersion},
            {"command", command},
            {"config_hash", hex64(config_hash(c))},
            {"config", to_json(c)}};
  for (const auto& [k, v] : extra.items()) p[k] = v;
  write_json(dir / "provenance.json", p);
}

void config_init(const fs::path& out) {
  if (out.has_parent_path()) make_dir(out.parent_path());
  save_config(out, PipelineConfig{});
}

void phantom_make(const PipelineConfig& c, const fs::path& out) {
  const auto& p = c.phantom;
  make_dir(out / "template" / "meshes");
  const PhantomTemplate t = stage("phantom template", [&] {
    return generate_template(p.seed, {p.dims, p.dims, p.dims}, p.spacing);
  });
  write_volume(out / "template" / "intensity.mha", t.intensity);
  write_labels(out / "template" / "labels.mha", t.labels);
  for (const auto& [label, mesh] : t.meshes) write_ply(out / "template" / "meshes" / tooth_file(label), mesh);

  const auto cohort = stage("phantom cohort", [&] {
    return phantom_cohort(t, p.n, p.seed, p.amplitude_voxels, p.noise_sigma);
  });
  json subjects = json::array();
  json seeds = json::array();
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "subject_%03zu", i);
    const fs::path dir = out / "subjects" / id;
    make_dir(dir / "tracked");
    const auto& s = cohort[i];
    write_volume(dir / "intensity.mha", s.intensity);
    write_labels(dir / "labels.mha", s.labels);
    write_field(dir / "field.mha", s.field);
    for (const auto& [label, verts] : s.tracked_vertices) {
      SurfaceMesh m = t.meshes.at(label);
      m.vertices = verts;
      write_ply(dir / "tracked" / tooth_file(label), m);
    }
    const std::string rel = std::string("subjects/") + id;
    subjects.push_back({{"id", id}, {"intensity", rel + "/intensity.mha"}, {"labels", rel + "/labels.mha"}});
    seeds.push_back({{"id", id}, {"seed", s.seed}, {"negated", s.negated}});
  }
  write_json(out / "manifest.json", {{"subjects", subjects},
                                     {"template", {{"intensity", "template/intensity.mha"},
                                                   {"labels", "template/labels.mha"}}}});
  write_provenance(out, "phantom make", c, {{"seeds", seeds}});
}

void synth(const PipelineConfig& c, std::uint64_t subject_seed, bool negated, const fs::path& out) {
  const auto& p = c.phantom;
  make_dir(out);
  const PhantomTemplate t = stage("phantom template", [&] {
    return generate_template(p.seed, {p.dims, p.dims, p.dims}, p.spacing);
  });
  const PhantomSubject s = stage("phantom subject", [&] {
    return synthesize_subject(t, subject_seed, p.amplitude_voxels, p.noise_sigma, negated);
  });
  write_volume(out / "intensity.mha", s.intensity);
  write_labels(out / "labels.mha", s.labels);
  write_field(out / "field.mha", s.field);
  write_provenance(out, "synth", c, {{"seeds", {{"template", p.seed}, {"subject", subject_seed}, {"negated", negated}}}});
}

void enhance_command(const PipelineConfig& c, const fs::path& intensity, const fs::path& labels, const fs::path& out) {
  make_dir(out);
  const Subject s = stage("load", [&] { return load_subject({"input", intensity, labels}, c); });
  const EnhancedImage e = stage("enhance", [&] { return enhance(s.intensity, s.labels, c.enhancement); });
  write_volume(out / "intensity.mha", e.intensity);
  write_volume(out / "guidance.mha", e.guidance);
  write_labels(out / "labels.mha", e.labels);
  write_json(out / "crop.json", {{"min", e.crop_region.min}, {"max", e.crop_region.max}});
  write_provenance(out, "enhance", c,
                   {{"inputs", {intensity.generic_string(), labels.generic_string()}}});
}

void register_command(const PipelineConfig& c, const ManifestEntry& fixed, const ManifestEntry& moving,
                      RegisterMode mode, const fs::path& out) {
  make_dir(out);
  const auto prepare = [&](const ManifestEntry& e) {
    const Subject s = load_subject(e, c);
    return channels_of(enhance(s.intensity, s.labels, c.enhancement), c);
  };
  const ChannelPair f = stage("load fixed", [&] { return prepare(fixed); });
  const ChannelPair m = stage("load moving", [&] { return prepare(moving); });
  const auto lin = stage("linear registration", [&] {
    return register_linear(f, m, mode == RegisterMode::kRigid ? LinearMode::kRigid : LinearMode::kAffine,
                           schedule_of(c));
  });
  write_transform(out / "affine.json", lin.transform);
  VolumeGrid warped;
  if (mode == RegisterMode::kSyn) {
    const auto syn = stage("syn registration", [&] { return register_syn(f, m, lin.transform, schedule_of(c)); });
    write_field(out / "forward.mha", syn.fields.forward);
    write_field(out / "inverse.mha", syn.fields.inverse);
    warped = warp_volume(m.intensity, lin.transform, syn.fields.forward);
  } else {
    warped = warp_volume(m.intensity, lin.transform, f.intensity.geometry());
  }
  write_volume(out / "warped.mha", warped);
  write_provenance(out, "register", c,
                   {{"inputs", {fixed.intensity.generic_string(), fixed.labels.generic_string(),
                                moving.intensity.generic_string(), moving.labels.generic_string()}}});
}

AtlasResult atlas_build(const PipelineConfig& c, const fs::path& manifest, const fs::path& out) {
  const auto entries = read_manifest(manifest);
  if (entries.size() < 2) {
    throw Error(ErrorKind::kInvalidArgument, "atlas build: the manifest lists " + std::to_string(entries.size()) +
                                                 " subject(s); a cohort needs at least 2");
  }
  make_dir(out / "subjects");
  AtlasRun run;
  run.schedule = schedule_of(c);
  run.outer_iterations = c.atlas.outer_iterations;
  run.shape_update_step = c.atlas.shape_update_step;
  run.threads = c.threads;
  std::vector<LabelGrid> labels;
  for (const auto& e : entries) {
    const Subject s = stage("load " + e.id, [&] { return load_subject(e, c); });
    const EnhancedImage en = stage("enhance " + e.id, [&] { return enhance(s.intensity, s.labels, c.enhancement); });
    run.cohort.push_back(channels_of(en, c));
    labels.push_back(en.labels);
  }
  const AtlasResult r = stage("atlas", [&] { return build_atlas(run); });
  const LabelGrid atlas = stage("atlas labels", [&] { return atlas_labels(r, labels); });
  write_volume(out / "template_intensity.mha", r.templates.intensity_template);
  write_volume(out / "template_guidance.mha", r.templates.guidance_template);
  write_labels(out / "atlas_labels.mha", atlas);
  write_trace_csv(out / "trace.csv", r.trace);
  json ids = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    write_transform(out / "subjects" / (entries[i].id + "_affine.json"), r.affines[i]);
    write_field(out / "subjects" / (entries[i].id + "_forward.mha"), r.fields[i].forward);
    ids.push_back(entries[i].id);
  }
  write_json(out / "atlas.json", {{"generation", r.templates.generation}, {"subjects", ids}});
  write_provenance(out, "atlas build", c, {{"manifest", manifest.filename().generic_string()}, {"subjects", ids}});
  return r;
}

LabelTransferResult transfer_labels(const VolumeGrid& atlas_intensity, const LabelGrid& atlas_labels_grid,
                                    const VolumeGrid& subject_intensity, const LabelGrid& subject_labels, bool guided,
                                    const PipelineConfig& c) {
  const EnhancedImage ae = stage("enhance atlas", [&] {
    return enhance_identity_free(atlas_intensity, atlas_labels_grid, c.enhancement);
  });
  const EnhancedImage se = stage("enhance subject", [&] {
    return enhance_identity_free(subject_intensity, subject_labels, c.enhancement);
  });
  ChannelPair atlas_channels{ae.intensity, VolumeGrid(ae.intensity.geometry()), 1.0, 0.0};
  ChannelPair subject_channels{se.intensity, VolumeGrid(se.intensity.geometry()), 1.0, 0.0};
  if (guided) {
    atlas_channels.guidance = ae.guidance;
    subject_channels.guidance = se.guidance;
    atlas_channels.w_intensity = subject_channels.w_intensity = c.atlas.w_intensity;
    atlas_channels.w_guidance = subject_channels.w_guidance = c.atlas.w_guidance;
  }
  return stage("label transfer", [&] {
    return atlas_label_transfer(ae.labels, atlas_channels, se.labels, subject_channels, schedule_of(c));
  });
}

LabelTransferResult label_command(const PipelineConfig& c, const fs::path& atlas_dir, const ManifestEntry& subject,
                                  bool guided, const fs::path& out) {
  make_dir(out);
  const VolumeGrid atlas_intensity =
      stage("load atlas", [&] { return read_volume(atlas_dir / "template_intensity.mha"); });
  const LabelGrid atlas = stage("load atlas", [&] { return read_labels(atlas_dir / "atlas_labels.mha"); });
  const Subject s = stage("load subject", [&] { return load_subject(subject, c); });
  const auto r = transfer_labels(atlas_intensity, atlas, s.intensity, s.labels, guided, c);
  json teeth = json::array();
  for (const auto& t : r.teeth) {
    teeth.push_back({{"truth", t.truth}, {"assigned", t.assigned}, {"dice", t.dice}, {"success", t.success}});
  }
  write_json(out / "report.json", {{"subject", subject.id}, {"guided", guided}, {"teeth", teeth},
                                   {"success_rate", r.success_rate}});
  write_provenance(out, "label", c, {{"subject", subject.id}, {"guided", guided}});
  return r;
}

void mesh_command(const PipelineConfig& c, const fs::path& labels, std::optional<std::uint16_t> label,
                  const fs::path& out) {
  make_dir(out);
  const LabelGrid l = stage("load", [&] { return read_labels(labels); });
  std::set<std::uint16_t> present;
  for (std::size_t n = 0; n < l.size(); ++n) {
    if (l[n] != 0) present.insert(l[n]);
  }
  if (label) {
    if (!present.count(*label)) {
      throw Error(ErrorKind::kInvalidArgument, "mesh: label " + std::to_string(*label) + " is absent");
    }
    present = {*label};
  }
  json files = json::array();
  for (const auto v : present) {
    const SurfaceMesh m = stage("surface " + std::to_string(v), [&] { return extract_surface(l, v); });
    write_ply(out / tooth_file(v), m);
    files.push_back({{"label", v}, {"file", tooth_file(v)}, {"vertices", m.vertices.size()},
                     {"euler_characteristic", euler_characteristic(m)}});
  }
  write_json(out / "meshes.json", files);
  write_provenance(out, "mesh", c, {{"inputs", {labels.generic_string()}}});
}

void correspond_command(const PipelineConfig& c, const fs::path& atlas_dir, const fs::path& manifest,
                        std::uint16_t label, const fs::path& out) {
  make_dir(out);
  const LabelGrid atlas = stage("load atlas", [&] { return read_labels(atlas_dir / "atlas_labels.mha"); });
  const SurfaceMesh templ = stage("atlas surface", [&] { return surface_of(atlas, label); });
  if (templ.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "correspond: atlas has no surface for label " + std::to_string(label));
  }
  write_ply(out / "template.ply", templ);
  json shapes = json::array();
  for (const auto& e : read_manifest(manifest)) {
    const Subject s = stage("load " + e.id, [&] { return load_subject(e, c); });
    const SurfaceMesh subject = stage("surface " + e.id, [&] { return surface_of(s.labels, label); });
    const auto aligned = stage("rigid alignment " + e.id, [&] { return rigid_align_to_template(subject, templ); });
    const SurfaceMesh moved = transform_mesh(subject, aligned.transform);
    const SurfaceMesh corr = stage("correspondence " + e.id, [&] {
      return establish_correspondence(templ, moved, c.shape.cpd);
    });
    write_ply(out / (e.id + ".ply"), corr);
    shapes.push_back({{"id", e.id}, {"file", e.id + ".ply"}, {"alignment_rms", aligned.rms}});
  }
  write_json(out / "correspondence.json", {{"label", label}, {"template", "template.ply"}, {"shapes", shapes}});
  write_provenance(out, "correspond", c, {{"label", label}, {"manifest", manifest.filename().generic_string()}});
}

int pca_command(const PipelineConfig& c, const fs::path& input, double threshold, const fs::path& out) {
  make_dir(out);
  const json index = read_json(input / "correspondence.json");
  if (!index.contains("shapes") || !index.at("shapes").is_array()) {
    throw Error(ErrorKind::kInvalidArgument, "pca: correspondence.json lacks a shapes list");
  }
  CorrespondedShapeSet set;
  for (const auto& s : index.at("shapes")) {
    const SurfaceMesh m = read_ply(input / s.at("file").get<std::string>());
    if (set.shapes.empty()) set.topology = m.triangles;
    set.shapes.push_back(shape_from_mesh(m));
    set.source_ids.push_back(s.at("id").get<std::string>());
  }
  const ShapeModel model = stage("pca", [&] { return pca_fit(set); });
  const int k = stage("explained variance", [&] { return explained_variance_report(model, threshold); });
  write_shape_model(out / "model.json", model);
  std::vector<double> ratios(model.explained_variance_ratio.data(),
                             model.explained_variance_ratio.data() + model.explained_variance_ratio.size());
  write_json(out / "report.json", {{"threshold", threshold}, {"k", k}, {"shapes", set.shapes.size()},
                                   {"explained_variance_ratio", ratios}});
  write_provenance(out, "pca", c, {{"threshold", threshold}, {"shapes", set.source_ids}});
  return k;
}

std::vector<fs::path> shape_synth_command(const PipelineConfig& c, const fs::path& model_path, int pc, double sd_min,
                                          double sd_max, int steps, const fs::path& out) {
  if (steps < 1) throw Error(ErrorKind::kInvalidArgument, "shape synth: steps must be >= 1");
  if (sd_min > sd_max) throw Error(ErrorKind::kInvalidArgument, "shape synth: sd range is reversed");
  const ShapeModel model = read_shape_model(model_path);
  if (pc < 1 || pc > model.mode_count()) {
    throw Error(ErrorKind::kInvalidArgument, "shape synth: pc " + std::to_string(pc) + " outside 1.." +
                                                 std::to_string(model.mode_count()));
  }
  make_dir(out);
  std::vector<fs::path> files;
  json sds = json::array();
  for (int s = 0; s < steps; ++s) {
    const double sd = steps == 1 ? sd_min : sd_min + (sd_max - sd_min) * s / (steps - 1);
    Eigen::VectorXd coefficients = Eigen::VectorXd::Zero(model.mode_count());
    coefficients[pc - 1] = sd;
    char name[64];
    std::snprintf(name, sizeof(name), "pc%d_step%02d.ply", pc, s);
    write_ply(out / name, mesh_from_shape(pca_synthesize(model, coefficients), model.topology));
    files.push_back(out / name);
    sds.push_back({{"file", name}, {"sd", sd}});
  }
  write_provenance(out, "shape synth", c, {{"model", model_path.generic_string()}, {"pc", pc}, {"steps", sds}});
  return files;
}

}  // namespace dentatlas::cli
