#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "acceptance.hpp"
#include "commands.hpp"
#include "config.hpp"

namespace {

using namespace dentatlas;
using namespace dentatlas::cli;

std::pair<double, double> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw Error(ErrorKind::kConfig, "--sd expects MIN..MAX, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, dots)), std::stod(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "--sd expects MIN..MAX, got '" + text + "'");
  }
}

std::vector<int> parse_criteria(const std::string& text) {
  if (text.empty() || text == "all") return criterion_ids();
  std::vector<int> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      ids.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "--criteria: '" + item + "' is not a criterion number");
    }
  }
  return ids;
}

int run_eval(const PipelineConfig& c, const std::vector<int>& ids, const fs::path& out) {
  fs::create_directories(out);
  AcceptanceOptions options;
  options.work_dir = out / "work";
  options.threads = c.threads;
  nlohmann::json report = {{"criteria", nlohmann::json::array()}};
  std::ofstream summary(out / "summary.txt");
  bool all = true;
  for (int id : ids) {
    const CriterionResult r = run_criterion(id, options);
    all = all && r.passed;
    report["criteria"].push_back(to_json(r));
    const std::string line = format_line(r);
    std::cout << line << std::endl;
    summary << line << '\n';
  }
  report["passed"] = all;
  std::ofstream(out / "report.json") << report.dump(2) << '\n';
  write_provenance(out, "eval", c, {{"criteria", ids}});
  const std::string verdict = all ? "all criteria passed" : "some criteria FAILED";
  std::cout << verdict << std::endl;
  summary << verdict << '\n';
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dental atlas construction and shape modelling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  std::string config_path;
  std::optional<int> threads;
  app.add_option("--config", config_path, "Pipeline config JSON (see `config init`)");
  app.add_option("--threads", threads, "Worker threads, 0 = all cores");

  auto* config_cmd = app.add_subcommand("config", "Config file helpers")->require_subcommand(1);
  std::string config_out;
  auto* config_init_cmd = config_cmd->add_subcommand("init", "Write a config holding every default");
  config_init_cmd->add_option("--out", config_out, "Output JSON path")->required();

  auto* phantom_cmd = app.add_subcommand("phantom", "Synthetic phantom cohorts")->require_subcommand(1);
  auto* phantom_make_cmd = phantom_cmd->add_subcommand("make", "Hidden template, antithetic cohort and manifest");
  std::optional<std::uint64_t> ph_seed;
  std::optional<int> ph_n, ph_dims;
  std::optional<double> ph_amp, ph_noise, ph_spacing;
  std::string ph_out;
  phantom_make_cmd->add_option("--seed", ph_seed);
  phantom_make_cmd->add_option("--n", ph_n, "Cohort size (even)");
  phantom_make_cmd->add_option("--dims", ph_dims, "Cubic grid size");
  phantom_make_cmd->add_option("--spacing", ph_spacing, "Voxel spacing in mm");
  phantom_make_cmd->add_option("--amplitude", ph_amp, "Deformation amplitude in voxels");
  phantom_make_cmd->add_option("--noise", ph_noise, "Gaussian noise sigma");
  phantom_make_cmd->add_option("--out", ph_out)->required();

  auto* synth_cmd = app.add_subcommand("synth", "One phantom subject from the configured template");
  std::uint64_t synth_seed = 0;
  bool synth_negated = false;
  std::string synth_out;
  synth_cmd->add_option("--subject-seed", synth_seed)->required();
  synth_cmd->add_flag("--negated", synth_negated, "Use the antithetic deformation");
  synth_cmd->add_option("--out", synth_out)->required();

  auto* enhance_cmd = app.add_subcommand("enhance", "Crop, mask and build the guidance channel");
  std::string en_intensity, en_labels, en_out;
  enhance_cmd->add_option("--intensity", en_intensity)->required();
  enhance_cmd->add_option("--labels", en_labels)->required();
  enhance_cmd->add_option("--out", en_out)->required();

  auto* register_cmd = app.add_subcommand("register", "Register a moving subject onto a fixed subject");
  ManifestEntry fixed{"fixed", {}, {}}, moving{"moving", {}, {}};
  std::string reg_mode = "syn", reg_out;
  register_cmd->add_option("--fixed-intensity", fixed.intensity)->required();
  register_cmd->add_option("--fixed-labels", fixed.labels)->required();
  register_cmd->add_option("--moving-intensity", moving.intensity)->required();
  register_cmd->add_option("--moving-labels", moving.labels)->required();
  register_cmd->add_option("--mode", reg_mode, "rigid, affine or syn")
      ->check(CLI::IsMember({"rigid", "affine", "syn"}));
  register_cmd->add_option("--out", reg_out)->required();

  auto* atlas_cmd = app.add_subcommand("atlas", "Groupwise atlas")->require_subcommand(1);
  auto* atlas_build_cmd = atlas_cmd->add_subcommand("build", "Build the atlas from a manifest");
  std::string at_manifest, at_out;
  std::optional<int> at_iterations;
  atlas_build_cmd->add_option("--manifest", at_manifest)->required();
  atlas_build_cmd->add_option("--iterations", at_iterations, "Outer iterations");
  atlas_build_cmd->add_option("--out", at_out)->required();

  auto* label_cmd = app.add_subcommand("label", "Transfer atlas labels onto a subject");
  std::string lb_atlas, lb_out;
  ManifestEntry lb_subject{"subject", {}, {}};
  bool lb_plain = false;
  label_cmd->add_option("--atlas", lb_atlas, "Output directory of `atlas build`")->required();
  label_cmd->add_option("--intensity", lb_subject.intensity)->required();
  label_cmd->add_option("--labels", lb_subject.labels, "Subject tooth labels, identities hidden")->required();
  label_cmd->add_option("--id", lb_subject.id);
  label_cmd->add_flag("--intensity-only", lb_plain, "Skip the guidance channel");
  label_cmd->add_option("--out", lb_out)->required();

  auto* mesh_cmd = app.add_subcommand("mesh", "Extract tooth surfaces");
  std::string me_labels, me_out;
  std::optional<std::uint16_t> me_label;
  mesh_cmd->add_option("--labels", me_labels)->required();
  mesh_cmd->add_option("--label", me_label, "One tooth; every tooth when omitted");
  mesh_cmd->add_option("--out", me_out)->required();

  auto* correspond_cmd = app.add_subcommand("correspond", "CPD correspondence of atlas surfaces onto subjects");
  std::string co_atlas, co_manifest, co_out;
  std::uint16_t co_label = 0;
  correspond_cmd->add_option("--atlas", co_atlas)->required();
  correspond_cmd->add_option("--manifest", co_manifest)->required();
  correspond_cmd->add_option("--label", co_label, "One tooth, 0 for the whole dentition");
  correspond_cmd->add_option("--out", co_out)->required();

  std::string pca_input, pca_out;
  std::optional<double> pca_threshold;
  const auto add_pca_options = [&](CLI::App* cmd) {
    cmd->add_option("--input", pca_input, "Output directory of `correspond`")->required();
    cmd->add_option("--threshold", pca_threshold, "Explained variance threshold");
    cmd->add_option("--out", pca_out)->required();
  };
  auto* pca_cmd = app.add_subcommand("pca", "Fit a PCA shape model");
  add_pca_options(pca_cmd);
  auto* shape_cmd = app.add_subcommand("shape", "Shape model tools")->require_subcommand(1);
  auto* shape_pca_cmd = shape_cmd->add_subcommand("pca", "Same as `pca`");
  add_pca_options(shape_pca_cmd);
  auto* shape_synth_cmd = shape_cmd->add_subcommand("synth", "PLY sequence along one principal component");
  std::string sy_model, sy_range = "-3..3", sy_out;
  int sy_pc = 1, sy_steps = 7;
  shape_synth_cmd->add_option("--model", sy_model, "model.json written by `pca`")->required();
  shape_synth_cmd->add_option("--pc", sy_pc, "1-based component");
  shape_synth_cmd->add_option("--sd", sy_range, "Range in standard deviations, MIN..MAX");
  shape_synth_cmd->add_option("--steps", sy_steps);
  shape_synth_cmd->add_option("--out", sy_out)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Labeling experiment and phantom acceptance suite");
  std::string ev_criteria = "all", ev_out;
  eval_cmd->add_option("--criteria", ev_criteria, "Comma separated criterion numbers or 'all'");
  eval_cmd->add_option("--out", ev_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (threads) c.threads = *threads;
    if (ph_seed) c.phantom.seed = *ph_seed;
    if (ph_n) c.phantom.n = *ph_n;
    if (ph_dims) c.phantom.dims = *ph_dims;
    if (ph_spacing) c.phantom.spacing = *ph_spacing;
    if (ph_amp) c.phantom.amplitude_voxels = *ph_amp;
    if (ph_noise) c.phantom.noise_sigma = *ph_noise;
    if (at_iterations) c.atlas.outer_iterations = *at_iterations;
    if (pca_threshold) c.shape.pca_threshold = *pca_threshold;
    c.validate();

    if (*config_init_cmd) {
      config_init(config_out);
    } else if (*phantom_make_cmd) {
      phantom_make(c, ph_out);
    } else if (*synth_cmd) {
      synth(c, synth_seed, synth_negated, synth_out);
    } else if (*enhance_cmd) {
      enhance_command(c, en_intensity, en_labels, en_out);
    } else if (*register_cmd) {
      const RegisterMode mode = reg_mode == "rigid"    ? RegisterMode::kRigid
                                : reg_mode == "affine" ? RegisterMode::kAffine
                                                       : RegisterMode::kSyn;
      register_command(c, fixed, moving, mode, reg_out);
    } else if (*atlas_build_cmd) {
      atlas_build(c, at_manifest, at_out);
    } else if (*label_cmd) {
      const auto r = label_command(c, lb_atlas, lb_subject, !lb_plain, lb_out);
      std::cout << "success rate " << r.success_rate << " over " << r.teeth.size() << " teeth" << std::endl;
    } else if (*mesh_cmd) {
      mesh_command(c, me_labels, me_label, me_out);
    } else if (*correspond_cmd) {
      correspond_command(c, co_atlas, co_manifest, co_label, co_out);
    } else if (*pca_cmd || *shape_pca_cmd) {
      const int k = pca_command(c, pca_input, c.shape.pca_threshold, pca_out);
      std::cout << "k = " << k << " modes reach " << c.shape.pca_threshold << " explained variance" << std::endl;
    } else if (*shape_synth_cmd) {
      const auto [lo, hi] = parse_range(sy_range);
      for (const auto& f : shape_synth_command(c, sy_model, sy_pc, lo, hi, sy_steps, sy_out)) {
        std::cout << f.string() << '\n';
      }
    } else if (*eval_cmd) {
      return run_eval(c, parse_criteria(ev_criteria), ev_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
