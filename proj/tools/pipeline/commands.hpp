#pragma once

// One function per subcommand. Each writes its artifacts plus a
// provenance.json into the output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "dentatlas/atlas.hpp"

namespace dentatlas::cli {

namespace fs = std::filesystem;

/// 2 config, 3 data, 4 numerical.
int exit_code_for(ErrorKind kind);

/// Runs fn and prefixes any library error with the stage name.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), name + ": " + e.what());
  }
}

struct ManifestEntry {
  std::string id;
  fs::path intensity;
  fs::path labels;
};

/// {"subjects": [{"id", "intensity", "labels"}, ...]}; relative paths resolve
/// against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const fs::path& path);

/// Reads a subject and brings it to the working spacing with normalised intensity.
struct Subject {
  VolumeGrid intensity;
  LabelGrid labels;
};
Subject load_subject(const ManifestEntry& e, const PipelineConfig& c);

/// Crop, dilate-mask and binary tooth-mask guidance; needs no tooth identities.
EnhancedImage enhance_identity_free(const VolumeGrid& intensity, const LabelGrid& labels,
                                    const EnhancementConfig& config);

void write_provenance(const fs::path& dir, const std::string& command, const PipelineConfig& c,
                      const nlohmann::json& extra);

void config_init(const fs::path& out);

/// Hidden template, antithetic cohort and manifest.json.
void phantom_make(const PipelineConfig& c, const fs::path& out);

/// One subject from the template regenerated from the config seed.
void synth(const PipelineConfig& c, std::uint64_t subject_seed, bool negated, const fs::path& out);

void enhance_command(const PipelineConfig& c, const fs::path& intensity, const fs::path& labels, const fs::path& out);

enum class RegisterMode { kRigid, kAffine, kSyn };
void register_command(const PipelineConfig& c, const ManifestEntry& fixed, const ManifestEntry& moving,
                      RegisterMode mode, const fs::path& out);

AtlasResult atlas_build(const PipelineConfig& c, const fs::path& manifest, const fs::path& out);

/// Identity-free enhancement of the subject, then atlas label transfer. The
/// guided variant adds a binary tooth-mask channel to both images.
LabelTransferResult transfer_labels(const VolumeGrid& atlas_intensity, const LabelGrid& atlas_labels,
                                    const VolumeGrid& subject_intensity, const LabelGrid& subject_labels, bool guided,
                                    const PipelineConfig& c);

/// transfer_labels on files, writing report.json.
LabelTransferResult label_command(const PipelineConfig& c, const fs::path& atlas_dir, const ManifestEntry& subject,
                                  bool guided, const fs::path& out);

void mesh_command(const PipelineConfig& c, const fs::path& labels, std::optional<std::uint16_t> label,
                  const fs::path& out);

/// Atlas surface (one tooth, or every tooth for label 0) corresponded onto each manifest subject.
void correspond_command(const PipelineConfig& c, const fs::path& atlas_dir, const fs::path& manifest,
                        std::uint16_t label, const fs::path& out);

/// Fits a PCA model to every corresponded mesh listed in `input/correspondence.json`; returns k.
int pca_command(const PipelineConfig& c, const fs::path& input, double threshold, const fs::path& out);

/// PLY sequence along one principal component, `steps` shapes from sd_min to sd_max.
std::vector<fs::path> shape_synth_command(const PipelineConfig& c, const fs::path& model_path, int pc, double sd_min,
                                          double sd_max, int steps, const fs::path& out);

}  // namespace dentatlas::cli
