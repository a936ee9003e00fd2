#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "odefit/experiments.hpp"

namespace odefit {

// Typed view of a run configuration file. The file format is
// INI-style: [section] headers, `key = value` lines, `#` comments.
// Sections: [model] name; [truth] nu, xi; [design] kind, T, n, I, J;
// [noise] dist, sigma; [pipeline] kind, order, bandwidth, refine;
// [run] seed, replicates, bootstrap, threads, ladder, rung_replicates.
// Unknown sections, unknown keys, and duplicate keys are rejected.
struct RunConfig {
  std::optional<std::string> model_name;
  std::optional<Eigen::VectorXd> nu;
  std::optional<Eigen::VectorXd> xi;
  std::optional<std::string> design_kind;
  std::optional<double> T;
  std::optional<int> n;
  std::optional<int> I;
  std::optional<int> J;
  std::optional<std::string> noise_dist;
  std::optional<Eigen::VectorXd> sigma;
  std::optional<std::string> pipeline_kind;
  std::optional<int> order;
  std::optional<double> bandwidth;
  std::optional<int> refine;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> bootstrap;
  std::optional<int> threads;
  std::optional<std::vector<int>> ladder;
  std::optional<int> rung_replicates;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text,
                           const std::string& origin = "config");

// Builtin lookup by [model] name: fhn, fhn_ramsay, lv.
OdeModel make_model(const std::string& name);

// Section extractors; each throws a validation error naming any missing
// or inconsistent key.
OdeModel require_model(const RunConfig& rc);
void require_truth(const RunConfig& rc, const OdeModel& model,
                   Eigen::VectorXd* nu_out, Eigen::VectorXd* theta_out,
                   Eigen::VectorXd* xi_out);
std::variant<GridDesign, RepeatedDesign> require_design(const RunConfig& rc);
NoiseSpec require_noise(const RunConfig& rc, int d);
PipelineKind require_pipeline_kind(const RunConfig& rc);
SmootherConfig smoother_from(const RunConfig& rc);

// Full Monte Carlo assembly: model, truth, design, noise, and pipeline
// sections are required; [run] keys fall back to McConfig defaults.
McConfig mc_config_from(const RunConfig& rc);

}  // namespace odefit
