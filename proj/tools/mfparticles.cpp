#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfp/errors.hpp"
#include "mfp/sweep.hpp"

namespace {

int cmd_sweep(const std::string& config_path, const std::string& out_dir, bool check,
              long long threads, bool dump_paths, bool dump_bsde, bool timings) {
  mfp::ExperimentConfig cfg = mfp::load_config(config_path);
  if (threads >= 0) cfg.threads = static_cast<std::size_t>(threads);
  cfg.dump_paths = cfg.dump_paths || dump_paths;
  cfg.dump_bsde = cfg.dump_bsde || dump_bsde;
  cfg.timings = cfg.timings || timings;
  const mfp::SweepResult result = mfp::run_sweep(cfg, out_dir, check, std::cout);
  if (result.exit_code != 0) {
    for (const auto& f : result.check_failures) std::cout << "check failure: " << f << "\n";
  }
  std::cout << "wrote " << out_dir << "/results.csv (" << result.rows.size() << " rows)\n";
  return result.exit_code;
}

int cmd_validate(const std::string& config_path, const std::string& out_dir) {
  const mfp::ExperimentConfig cfg = mfp::load_config(config_path);
  return mfp::run_validate(cfg, out_dir, std::cout);
}

int cmd_rate(const std::string& in_path, const std::string& column, const std::string& method) {
  const mfp::RateFit fit = mfp::rate_from_csv(in_path, column, method);
  nlohmann::json out = {{"column", column},
                        {"slope", fit.slope},
                        {"intercept", fit.intercept},
                        {"r2", fit.r2},
                        {"n_points", fit.n_points}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"N-particle approximation of PDEs on Wasserstein space: experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", in_path, column = "err_y_sup", method;
  bool check = false, dump_paths = false, dump_bsde = false, timings = false;
  long long threads = -1;

  auto* sweep = app.add_subcommand("sweep", "run a (N, seed) sweep and emit results.csv");
  sweep->add_option("--config", config_path, "JSON experiment config")->required();
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_flag("--check", check, "enforce acceptance gates (exit 2 on failure)");
  sweep->add_option("--threads", threads, "worker threads (0 = hardware)");
  sweep->add_flag("--dump-paths", dump_paths, "write per-cell paths CSV");
  sweep->add_flag("--dump-bsde", dump_bsde, "write per-cell backward-solution CSV");
  sweep->add_flag("--timings", timings, "fill the runtime_ms column (breaks byte-reproducibility)");

  auto* validate = app.add_subcommand("validate", "probe model assumptions, write assumptions.json");
  validate->add_option("--config", config_path, "JSON experiment config")->required();
  validate->add_option("--out", out_dir, "output directory");

  auto* rate = app.add_subcommand("rate", "fit a log-log rate from a results.csv column");
  rate->add_option("--in", in_path, "results.csv path")->required();
  rate->add_option("--column", column, "results column to fit");
  rate->add_option("--method", method, "restrict to one method (analytic|lsmc)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sweep->parsed())
      return cmd_sweep(config_path, out_dir, check, threads, dump_paths, dump_bsde, timings);
    if (validate->parsed()) return cmd_validate(config_path, out_dir);
    if (rate->parsed()) return cmd_rate(in_path, column, method);
  } catch (const mfp::ConfigError& e) {
    std::cerr << "config error at " << (e.pointer.empty() ? "(root)" : e.pointer) << ": "
              << e.what() << "\n";
    return 1;
  } catch (const mfp::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const mfp::FitError& e) {
    std::cerr << "rate fit: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
