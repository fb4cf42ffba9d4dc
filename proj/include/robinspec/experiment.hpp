#pragma once

#include "robinspec/fields.hpp"
#include "robinspec/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace robinspec {

enum class Scenario { Forward, HadamardCheck, Simplify, Recover, EndToEnd, RecordOracle };

std::string scenario_name(Scenario s);

/// Numeric knobs shared by the scenarios. Zero / negative sentinels select
/// the library defaults noted alongside.
struct ExperimentParams {
  int K = 6;
  int J = 40;
  std::string bump_shape = "hat";
  double h = 0.0;             // FD step (0: default rule)
  double reg = -1.0;          // Tikhonov weight (<0: 1e-8 ||D||)
  double gap_tol = 1e-7;
  double zero_tol = 1e-6;
  int fit_window = 5;
  double dip_tol = 0.05;
  double s0 = 0.05;
  int schedule_steps = 8;
  double cauchy_tol = 3e-3;
  int k_max = 6;
  double epsilon = 0.1;
  int budget = 50;
  int max_index = 10;
  double hadamard_tol = 1e-4;
  double solver_tol = 1e-10;
  int oracle_extra = 2;       // eigenvalues reported past K
  std::optional<double> max_trace_error;  // end-to-end pass threshold
};

struct ExperimentConfig {
  Scenario scenario = Scenario::Forward;
  DomainSpec domain;
  nlohmann::json q, c, omega0;  // field specs (preset or node values)
  std::optional<std::pair<double, double>> sigma;  // arc range
  ExperimentParams params;
  std::string oracle_kind = "forward";  // or "replay"
  std::filesystem::path oracle_path;    // replay input
  std::string oracle_file = "oracle.json";  // record-oracle output name
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  nlohmann::json effective;  // the config as run (after CLI overrides)
};

/// Validates a JSON document; throws ConfigError naming the offending field.
/// Relative oracle paths are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = {});

struct RunOutcome {
  int exit_code = 0;  // 0 success, 1 scenario failure
  std::string status;  // "ok", "failed", or the error class
  nlohmann::json manifest;
};

/// Runs the scenario and writes results.json, traces.csv and (last)
/// manifest.json into config.output_dir. Config errors propagate as
/// ConfigError; library errors are serialised into the outputs.
RunOutcome run_experiment(const ExperimentConfig& config);

/// Command-line entry point: load, override, run. Returns the process exit code.
int run_command(const std::filesystem::path& config_path,
                const std::optional<std::filesystem::path>& output_dir,
                const std::optional<std::uint64_t>& seed, std::ostream& log);

/// Builds a field from {"preset": "constant", "value": v},
/// {"preset": "gaussian_bump", "center": [...], "width": w, "height": h} or
/// {"values": [...]} (bare numbers and arrays are accepted as shorthands).
ScalarField field_from_json(const nlohmann::json& spec, const Mesh& mesh, const char* name);
BoundaryField boundary_field_from_json(const nlohmann::json& spec, const BoundaryMesh& bmesh,
                                       const char* name);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace robinspec
