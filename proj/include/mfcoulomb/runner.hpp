#pragma once

// Configuration, experiment orchestration and result aggregation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mfcoulomb/common.hpp"
#include "mfcoulomb/density.hpp"
#include "mfcoulomb/kernel.hpp"
#include "mfcoulomb/stats.hpp"

namespace mfc::runner {

inline constexpr int kSchemaVersion = 1;

struct ConfigError : InputError {
  using InputError::InputError;
};

enum class Experiment { simulate, pde_solve, weakform_scan, chaos_scan, noncollision_scan, calibrate_estimators };

std::string to_string(Experiment e);

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  Experiment experiment = Experiment::simulate;
  std::vector<std::size_t> n_ladder{64};
  std::vector<double> eps_ladder{0.05};
  double dt = 0.0;  // 0 selects pi * min(eps)^3
  double t_end = 0.25;
  std::size_t outputs = 64;
  std::string rho0 = "gaussian:1";
  std::vector<std::uint64_t> seeds{0};
  kernel::SumMethod method = kernel::SumMethod::direct;
  double theta = 0.15;
  std::string output_dir = "results";
  bool entropy = true;
  bool fisher = true;
  bool write_positions = false;
  std::size_t pde_cells = 1024;
  double pde_radius = 0.0;
  bool pde_interaction = true;
  std::size_t directions = 32;
  std::vector<double> gap_epsilons;  // weakform_scan: evaluation radii for |K - K_eps|
  double threshold_factor = 1.0;     // noncollision_scan: tau uses min distance <= factor * eps
  std::size_t samples = 100000;      // calibrate_estimators

  std::string canonical_text;  // normalised key=value text, hashed into the manifest
};

// key = value lines, '#' comments. Throws ConfigError with the offending key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every check runs before any compute. Throws ConfigError.
void validate(const ExperimentConfig& cfg);
InitialDensity parse_density(const std::string& spec);
double effective_dt(const ExperimentConfig& cfg);

struct RunOptions {
  std::filesystem::path out;  // overrides output_dir when non-empty
  unsigned workers = 1;
  std::uint64_t seed_offset = 0;
};

struct RunSummary {
  std::filesystem::path directory;
  std::vector<std::string> files;
  double wall_seconds = 0.0;
};

// Runs the experiment and writes data files plus manifest.json.
RunSummary run(const ExperimentConfig& cfg, const RunOptions& options);

// Exit codes: 0 success, 2 configuration or missing input, 3 numerical failure, 4 IO failure.
int exit_code(const std::exception& e);

// Runs fn(k) for k in [0, count) on at most `workers` threads. The first
// exception is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

struct Band {
  double median = 0.0;
  double lo = 0.0;  // 25th percentile
  double hi = 0.0;  // 75th percentile
  double mean = 0.0;
  double se = 0.0;
};
Band band(std::vector<double> values);

struct AggregateRow {
  double t = 0.0;
  std::vector<Band> columns;  // one per diagnostics column after t
};
// Folds per-seed diagnostics (in seed order) into bands per output time.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<stats::DiagnosticsRow>>& per_seed);

struct Criterion {
  int id = 0;
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  std::string relation;  // how measured compares to threshold, e.g. "<=", ">="
  bool pass = false;
  std::string detail;

  std::string to_json() const;
  static Criterion from_json(const std::string& line);
};

// Aggregates a results directory into summary files and prints tables. Throws
// ConfigError when nothing recognisable is found.
void report(const std::filesystem::path& dir, std::ostream& out);

}  // namespace mfc::runner
