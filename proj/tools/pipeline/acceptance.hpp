#pragma once

// Phantom acceptance suite: numbered criteria, each returning a verdict and
// the measured values behind it.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dentatlas::cli {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string summary;
  nlohmann::json metrics = nlohmann::json::object();
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::filesystem::path work_dir;  ///< scratch space for the pipeline rerun
  int threads = 0;
};

std::vector<int> criterion_ids();

/// Library errors are caught and reported as a failed criterion.
CriterionResult run_criterion(int id, const AcceptanceOptions& options);

/// "[PASS] 3 unbiased atlas: ..." style line.
std::string format_line(const CriterionResult& r);

nlohmann::json to_json(const CriterionResult& r);

}  // namespace dentatlas::cli
