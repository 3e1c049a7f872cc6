#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace dentatlas::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw Error(ErrorKind::kConfig, "config key '" + key + "': " + what);
}

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void require_object(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail(join(path, key), "unknown key");
  }
}

template <typename T>
void read(const json& j, const std::string& path, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string name = join(path, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(name, "expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(name, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
        out = v.get<T>();
      } else {
        fail(name, "expected a non-negative integer");
      }
    } else {
      out = v.get<T>();
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) fail(name, "expected a number");
    out = v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(name, "expected a string");
    out = v.get<std::string>();
  } else {
    if (!v.is_array()) fail(name, "expected an array");
    out.clear();
    for (const auto& e : v) {
      using E = typename T::value_type;
      if constexpr (std::is_integral_v<E>) {
        if (!e.is_number_integer()) fail(name, "expected integers");
      } else {
        if (!e.is_number()) fail(name, "expected numbers");
      }
      out.push_back(e.get<E>());
    }
  }
}

template <typename Fn>
void rethrow_as_config(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    fail(key, e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(working_spacing > 0.0) || !std::isfinite(working_spacing)) fail("working_spacing", "must be positive");
  if (threads < 0) fail("threads", "must be >= 0");
  if (enhancement.margin_voxels < 0) fail("enhancement.margin_voxels", "must be >= 0");
  if (enhancement.dilation_radius_voxels < 0) fail("enhancement.dilation_radius_voxels", "must be >= 0");
  rethrow_as_config("enhancement.reassignment_table",
                    [&] { validate_reassignment_table(enhancement.reassignment_table); });
  rethrow_as_config("registration", [&] { registration.validate(); });
  if (atlas.outer_iterations < 1) fail("atlas.outer_iterations", "must be >= 1");
  if (!(atlas.shape_update_step > 0.0 && atlas.shape_update_step <= 1.0)) {
    fail("atlas.shape_update_step", "must lie in (0, 1]");
  }
  if (atlas.w_intensity < 0.0 || atlas.w_guidance < 0.0 || !(atlas.w_intensity + atlas.w_guidance > 0.0)) {
    fail("atlas.w_intensity", "channel weights must be non-negative and not both zero");
  }
  rethrow_as_config("shape.cpd", [&] { shape.cpd.validate(); });
  if (!(shape.pca_threshold > 0.0 && shape.pca_threshold <= 1.0)) fail("shape.pca_threshold", "must lie in (0, 1]");
  if (phantom.n < 2 || phantom.n % 2 != 0) fail("phantom.n", "must be even and >= 2");
  if (phantom.dims < 32) fail("phantom.dims", "must be >= 32");
  if (!(phantom.spacing > 0.0)) fail("phantom.spacing", "must be positive");
  if (!(phantom.amplitude_voxels >= 0.0)) fail("phantom.amplitude_voxels", "must be >= 0");
  if (!(phantom.noise_sigma >= 0.0)) fail("phantom.noise_sigma", "must be >= 0");
}

json to_json(const PipelineConfig& c) {
  json table = json::object();
  for (const auto& [label, value] : c.enhancement.reassignment_table) table[std::to_string(label)] = value;
  const auto& r = c.registration;
  const auto& cpd = c.shape.cpd;
  return {
      {"working_spacing", c.working_spacing},
      {"threads", c.threads},
      {"manifest", c.manifest},
      {"output_dir", c.output_dir},
      {"enhancement",
       {{"margin_voxels", c.enhancement.margin_voxels},
        {"dilation_radius_voxels", c.enhancement.dilation_radius_voxels},
        {"reassignment_table", table}}},
      {"registration",
       {{"shrink_factors", r.shrink_factors},
        {"smoothing_sigmas", r.smoothing_sigmas_voxels},
        {"sigmas_in_mm", r.sigmas_in_mm},
        {"max_iterations", r.max_iterations},
        {"convergence_tol", r.convergence_tol},
        {"convergence_window", r.convergence_window},
        {"cc_window_radius", r.cc_window_radius},
        {"gradient_step", r.gradient_step},
        {"update_field_sigma", r.update_field_sigma},
        {"total_field_sigma", r.total_field_sigma}}},
      {"atlas",
       {{"outer_iterations", c.atlas.outer_iterations},
        {"shape_update_step", c.atlas.shape_update_step},
        {"w_intensity", c.atlas.w_intensity},
        {"w_guidance", c.atlas.w_guidance}}},
      {"shape",
       {{"cpd",
         {{"beta", cpd.beta},
          {"lambda", cpd.lambda},
          {"w", cpd.w},
          {"max_iterations", cpd.max_iterations},
          {"tolerance", cpd.tolerance},
          {"max_points", cpd.max_points}}},
        {"pca_threshold", c.shape.pca_threshold}}},
      {"phantom",
       {{"seed", c.phantom.seed},
        {"n", c.phantom.n},
        {"dims", c.phantom.dims},
        {"spacing", c.phantom.spacing},
        {"amplitude_voxels", c.phantom.amplitude_voxels},
        {"noise_sigma", c.phantom.noise_sigma}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  require_object(j, "", {"working_spacing", "threads", "manifest", "output_dir", "enhancement", "registration",
                         "atlas", "shape", "phantom"});
  read(j, "", "working_spacing", c.working_spacing);
  read(j, "", "threads", c.threads);
  read(j, "", "manifest", c.manifest);
  read(j, "", "output_dir", c.output_dir);

  if (j.contains("enhancement")) {
    const json& e = j.at("enhancement");
    require_object(e, "enhancement", {"margin_voxels", "dilation_radius_voxels", "reassignment_table"});
    read(e, "enhancement", "margin_voxels", c.enhancement.margin_voxels);
    read(e, "enhancement", "dilation_radius_voxels", c.enhancement.dilation_radius_voxels);
    if (e.contains("reassignment_table")) {
      const json& t = e.at("reassignment_table");
      if (!t.is_object()) fail("enhancement.reassignment_table", "expected an object of label: value");
      c.enhancement.reassignment_table.clear();
      for (const auto& [key, value] : t.items()) {
        const std::string name = "enhancement.reassignment_table." + key;
        std::size_t used = 0;
        unsigned long label = 0;
        try {
          label = std::stoul(key, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != key.size() || label > 65535) fail(name, "table keys must be label numbers");
        if (!value.is_number()) fail(name, "expected a number");
        c.enhancement.reassignment_table[static_cast<std::uint16_t>(label)] = value.get<float>();
      }
    }
  }
  if (j.contains("registration")) {
    const json& r = j.at("registration");
    require_object(r, "registration",
                   {"shrink_factors", "smoothing_sigmas", "sigmas_in_mm", "max_iterations", "convergence_tol",
                    "convergence_window", "cc_window_radius", "gradient_step", "update_field_sigma",
                    "total_field_sigma"});
    auto& s = c.registration;
    read(r, "registration", "shrink_factors", s.shrink_factors);
    read(r, "registration", "smoothing_sigmas", s.smoothing_sigmas_voxels);
    read(r, "registration", "sigmas_in_mm", s.sigmas_in_mm);
    read(r, "registration", "max_iterations", s.max_iterations);
    read(r, "registration", "convergence_tol", s.convergence_tol);
    read(r, "registration", "convergence_window", s.convergence_window);
    read(r, "registration", "cc_window_radius", s.cc_window_radius);
    read(r, "registration", "gradient_step", s.gradient_step);
    read(r, "registration", "update_field_sigma", s.update_field_sigma);
    read(r, "registration", "total_field_sigma", s.total_field_sigma);
  }
  if (j.contains("atlas")) {
    const json& a = j.at("atlas");
    require_object(a, "atlas", {"outer_iterations", "shape_update_step", "w_intensity", "w_guidance"});
    read(a, "atlas", "outer_iterations", c.atlas.outer_iterations);
    read(a, "atlas", "shape_update_step", c.atlas.shape_update_step);
    read(a, "atlas", "w_intensity", c.atlas.w_intensity);
    read(a, "atlas", "w_guidance", c.atlas.w_guidance);
  }
  if (j.contains("shape")) {
    const json& s = j.at("shape");
    require_object(s, "shape", {"cpd", "pca_threshold"});
    read(s, "shape", "pca_threshold", c.shape.pca_threshold);
    if (s.contains("cpd")) {
      const json& p = s.at("cpd");
      require_object(p, "shape.cpd", {"beta", "lambda", "w", "max_iterations", "tolerance", "max_points"});
      read(p, "shape.cpd", "beta", c.shape.cpd.beta);
      read(p, "shape.cpd", "lambda", c.shape.cpd.lambda);
      read(p, "shape.cpd", "w", c.shape.cpd.w);
      read(p, "shape.cpd", "max_iterations", c.shape.cpd.max_iterations);
      read(p, "shape.cpd", "tolerance", c.shape.cpd.tolerance);
      read(p, "shape.cpd", "max_points", c.shape.cpd.max_points);
    }
  }
  if (j.contains("phantom")) {
    const json& p = j.at("phantom");
    require_object(p, "phantom", {"seed", "n", "dims", "spacing", "amplitude_voxels", "noise_sigma"});
    read(p, "phantom", "seed", c.phantom.seed);
    read(p, "phantom", "n", c.phantom.n);
    read(p, "phantom", "dims", c.phantom.dims);
    read(p, "phantom", "spacing", c.phantom.spacing);
    read(p, "phantom", "amplitude_voxels", c.phantom.amplitude_voxels);
    read(p, "phantom", "noise_sigma", c.phantom.noise_sigma);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const PipelineConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

std::uint64_t config_hash(const PipelineConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dentatlas::cli
