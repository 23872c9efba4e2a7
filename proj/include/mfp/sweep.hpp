#ifndef MFP_SWEEP_HPP
#define MFP_SWEEP_HPP

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mfp/analysis.hpp"
#include "mfp/bsde.hpp"
#include "mfp/lq.hpp"

namespace mfp {

enum class SweepMethod { analytic, lsmc, both };

struct CheckWindows {
  // column name -> [lo, hi] window on the fitted log-log slope
  std::map<std::string, std::pair<double, double>> slope_windows;
  // relative spread cap on N * err_y_sup across N (analytic rows)
  std::optional<double> nz_spread_max;
};

struct ExperimentConfig {
  std::string experiment = "experiment";
  std::string model_name = "lq";
  LqParams lq;
  AffineDrift drift;
  GaussianLaw mu0{0.0, 1.0};
  std::vector<std::size_t> n_list;
  std::vector<std::uint64_t> seeds;
  std::size_t steps = 64;                // K, power of two
  std::size_t lsmc_paths = 16384;        // P, power of two
  SweepMethod method = SweepMethod::analytic;
  BasisSpec basis;
  bool chaos_enabled = false;
  std::size_t chaos_replications = 256;
  std::size_t riccati_grid = 1024;
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool dump_paths = false;
  bool dump_bsde = false;
  // results.csv is byte-reproducible by contract, so wall-clock readings stay
  // out of the body unless explicitly requested.
  bool timings = false;
  // test hook: integrate the Riccati ODEs with q negated so the residual gate
  // must fail (negative control for --check)
  bool corrupt_riccati = false;
  CheckWindows check;
  std::size_t validate_probes = 66;
};

// Throws ConfigError carrying the JSON pointer of the offending field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// One results.csv row.
struct ErrorRow {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string method;
  double err_y_sup, err_z_int, err_y_weak, err_z_weak, chaos_y, chaos_z, corr_term_int;
  long long runtime_ms = 0;
};

struct SweepResult {
  int exit_code = 0;  // 0 pass, 2 acceptance-check failure
  std::vector<ErrorRow> rows;
  std::vector<std::string> check_failures;
  // per-cell chaos results (key "N:seed"), for callers that need the SEs
  std::map<std::string, WeakChaosResult> chaos;
};

// Runs the full sweep, writing results.csv, rates.json and riccati.csv under
// out_dir (plus optional dumps). With check=true the Riccati residual gate and
// any configured windows are enforced and failures set exit_code = 2.
SweepResult run_sweep(const ExperimentConfig& config, const std::string& out_dir, bool check,
                      std::ostream& log);

// Writes assumptions.json (observed Assumption-2 moduli, Assumption-1 growth
// constant, residual gate); returns 2 when a violation is flagged.
int run_validate(const ExperimentConfig& config, const std::string& out_dir, std::ostream& log);

// Seed-median rate fit of one results.csv column (optionally filtered by
// method). Throws FitError / UsageError on unusable input.
RateFit rate_from_csv(const std::string& csv_path, const std::string& column,
                      const std::string& method_filter = "");

// Deterministic seed derivation for replication r of a cell seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace mfp

#endif  // MFP_SWEEP_HPP
