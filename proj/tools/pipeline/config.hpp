#pragma once

// Single JSON document holding every pipeline parameter.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dentatlas/register.hpp"
#include "dentatlas/shape.hpp"
#include "dentatlas/volgrid.hpp"

namespace dentatlas::cli {

struct AtlasSettings {
  int outer_iterations = 10;
  double shape_update_step = 0.25;
  double w_intensity = 0.5;
  double w_guidance = 0.5;
};

struct ShapeSettings {
  CpdConfig cpd;
  double pca_threshold = 0.85;
};

struct PhantomSettings {
  std::uint64_t seed = 1;
  int n = 8;
  int dims = 96;
  double spacing = 0.4;
  double amplitude_voxels = 2.0;
  double noise_sigma = 0.02;
};

struct PipelineConfig {
  double working_spacing = 0.4;  ///< mm
  int threads = 0;               ///< 0 uses every core
  EnhancementConfig enhancement = EnhancementConfig::defaults();
  RegistrationSchedule registration;
  AtlasSettings atlas;
  ShapeSettings shape;
  PhantomSettings phantom;
  std::string manifest;
  std::string output_dir;

  /// Throws kConfig naming the offending key.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& c);

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON form.
std::uint64_t config_hash(const PipelineConfig& c);
std::string hex64(std::uint64_t v);

}  // namespace dentatlas::cli
