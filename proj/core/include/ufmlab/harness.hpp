#pragma once

#include "ufmlab/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ufm::harness {

struct InitConfig {
  /// train: "random" | "hadamard";  spectral: "uniform_random" | "mixed".
  std::string kind = "random";
  double eps = 0.01;
  std::uint64_t seed = 0;
  double l1_norm = 1e-3;                 // uniform_random
  double gamma = 0.2;                    // mixed
  double delta = 0.1;                    // mixed
  std::vector<double> alpha;             // hadamard, length K
};

struct SweepConfig {
  /// "none" | "L" | "d" | "K" | "n" | "eps" | "l1_norm"
  std::string variable = "none";
  std::vector<double> values{0.0};
};

struct ExperimentConfig {
  std::string name = "custom";
  /// "train" | "spectral" | "concentration" | "geometry"
  std::string kind = "train";
  model::ProblemSpec spec;
  model::TrainSchedule schedule;
  InitConfig init;
  SweepConfig sweep;
  int repetitions = 1;
  std::string output_dir = "out/custom";
  double zero_tol_rel = linalg::kDefaultRelativeZeroTol;
  int workers = 1;
  double t_end = 1e3;     // spectral integration horizon
  std::string check;      // geometry: "thm1" | "thm2" | "rank"

  /// Throws std::invalid_argument on an inconsistent config.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);

const std::vector<std::string>& preset_names();
/// Throws std::invalid_argument for an unknown name.
ExperimentConfig preset(const std::string& name);

/// Multiplies both training phases by `factor` (at least one epoch per
/// nonempty phase).
ExperimentConfig scale_epochs(ExperimentConfig config, double factor);

/// Spec for one sweep value (sweeping K also lifts d to at least K).
model::ProblemSpec spec_for(const ExperimentConfig& config, double sweep_value);

/// UFMLAB_OUT/<name> when the variable is set, otherwise config.output_dir.
std::filesystem::path output_root(const ExperimentConfig& config);

/// Hex SHA-1 of "blob <size>\0" + bytes, as git computes object ids.
std::string git_blob_sha1(const std::string& bytes);

struct RunRecord {
  int index = 0;
  double sweep_value = 0.0;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string file;
  std::string status = "ok";  // ok | diverged | error
  std::string message;
  std::map<std::string, double> final_metrics;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<RunRecord> runs;
  std::vector<std::string> files;  // relative to root, summary and run CSVs
  bool any_divergence = false;
  bool checks_passed = true;       // geometry checks only
  nlohmann::json json;
};

/// Summary-row statistics: mean and sample standard deviation (0 for a
/// single value).
struct Stat {
  double mean = 0.0;
  double std = 0.0;
};
Stat mean_std(const std::vector<double>& values);

/// Executes every (sweep value, repetition) pair on `config.workers`
/// threads and writes run CSVs, summary.csv and manifest.json under
/// output_root(config).  Per-run seed is init.seed + run index.
Manifest run(const ExperimentConfig& config);

struct ConcentrationRow {
  int d = 0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> samples;
};

/// Distance between dZ/dt(0) and S (x) 1_n^T for each width and seed.
std::vector<ConcentrationRow> concentration_experiment(const ExperimentConfig& config);

/// Final-rank classification of a logit matrix: r when the effective rank
/// rounds to r and sigma_{r+1} <= 1e-3 sigma_1, otherwise -1.
int classify_rank(const linalg::Matrix& z, double zero_tol_rel = linalg::kDefaultRelativeZeroTol);

struct CheckResult {
  bool passed = true;
  std::string csv;
  std::vector<std::string> failures;
};

/// Deterministic geometry checks: "thm1" (cross-polytope vs DNC grid),
/// "thm2" (K-gon angular objective argmin), "rank" (minimal Hadamard rank).
CheckResult geometry_check(const std::string& which);

}  // namespace ufm::harness
