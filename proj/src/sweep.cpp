#include "mfp/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

namespace {

constexpr const char* kColumns[] = {"err_y_sup", "err_z_int", "err_y_weak",
                                    "err_z_weak", "chaos_y",  "chaos_z"};

bool power_of_two(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

double need_number(const json& j, const std::string& pointer) {
  if (!j.is_number()) throw ConfigError(pointer, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(pointer, "expected a finite number");
  return v;
}

std::size_t need_size(const json& j, const std::string& pointer) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError(pointer, "expected a non-negative integer");
  return static_cast<std::size_t>(j.get<long long>());
}

void check_known_keys(const json& obj, std::initializer_list<const char*> known,
                      const std::string& prefix) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError(prefix + "/" + it.key(), "unknown field");
  }
}

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median(std::vector<double> vals) {
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("", "config root must be an object");
  check_known_keys(j,
                   {"experiment", "model", "N", "seeds", "K", "P", "method", "basis",
                    "chaos", "riccati_grid", "threads", "dump_paths", "dump_bsde",
                    "timings", "corrupt_riccati", "check", "validate_probes"},
                   "");

  ExperimentConfig cfg;
  // acceptance fixture defaults
  cfg.lq = LqParams{0.0, 1.0, 0.5, 0.3, 0.1, 0.4, 0.3, 1.0, 1.0};
  cfg.drift = AffineDrift{0.0, -0.2, 0.1};
  cfg.mu0 = GaussianLaw{0.5, 0.25};

  if (j.contains("experiment")) {
    if (!j["experiment"].is_string()) throw ConfigError("/experiment", "expected a string");
    cfg.experiment = j["experiment"].get<std::string>();
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) throw ConfigError("/model", "expected an object");
    check_known_keys(m, {"name", "params", "drift", "mu0"}, "/model");
    if (m.contains("name")) {
      if (!m["name"].is_string()) throw ConfigError("/model/name", "expected a string");
      cfg.model_name = m["name"].get<std::string>();
    }
    if (cfg.model_name != "lq")
      throw ConfigError("/model/name", "unsupported model (only \"lq\" is available)");
    if (m.contains("params")) {
      const json& p = m["params"];
      if (!p.is_object()) throw ConfigError("/model/params", "expected an object");
      check_known_keys(p, {"a", "q", "qbar", "g", "gbar", "sigma", "sigma0", "T",
                           "control_weight"},
                       "/model/params");
      auto grab = [&p](const char* key, double& slot) {
        if (p.contains(key)) slot = need_number(p[key], std::string("/model/params/") + key);
      };
      grab("a", cfg.lq.a);
      grab("q", cfg.lq.q);
      grab("qbar", cfg.lq.qbar);
      grab("g", cfg.lq.g);
      grab("gbar", cfg.lq.gbar);
      grab("sigma", cfg.lq.sigma);
      grab("sigma0", cfg.lq.sigma0);
      grab("T", cfg.lq.horizon);
      grab("control_weight", cfg.lq.control_weight);
      if (!(cfg.lq.horizon > 0.0)) throw ConfigError("/model/params/T", "must be positive");
      if (!(cfg.lq.control_weight > 0.0))
        throw ConfigError("/model/params/control_weight",
                          "must be positive (driver infimum unbounded otherwise)");
    }
    if (m.contains("drift")) {
      const json& dr = m["drift"];
      if (!dr.is_object()) throw ConfigError("/model/drift", "expected an object");
      check_known_keys(dr, {"b0", "b1", "b2"}, "/model/drift");
      if (dr.contains("b0")) cfg.drift.b0 = need_number(dr["b0"], "/model/drift/b0");
      if (dr.contains("b1")) cfg.drift.b1 = need_number(dr["b1"], "/model/drift/b1");
      if (dr.contains("b2")) cfg.drift.b2 = need_number(dr["b2"], "/model/drift/b2");
    }
    if (m.contains("mu0")) {
      const json& g0 = m["mu0"];
      if (!g0.is_object()) throw ConfigError("/model/mu0", "expected an object");
      check_known_keys(g0, {"mean", "var"}, "/model/mu0");
      if (g0.contains("mean")) cfg.mu0.mean = need_number(g0["mean"], "/model/mu0/mean");
      if (g0.contains("var")) cfg.mu0.var = need_number(g0["var"], "/model/mu0/var");
      if (cfg.mu0.var < 0.0) throw ConfigError("/model/mu0/var", "must be non-negative");
    }
  }

  if (!j.contains("N") || !j["N"].is_array() || j["N"].empty())
    throw ConfigError("/N", "expected a non-empty array of particle counts");
  for (std::size_t i = 0; i < j["N"].size(); ++i) {
    const std::string ptr = "/N/" + std::to_string(i);
    const std::size_t v = need_size(j["N"][i], ptr);
    if (v == 0) throw ConfigError(ptr, "particle count must be positive");
    if (!cfg.n_list.empty() && v <= cfg.n_list.back())
      throw ConfigError(ptr, "N list must be strictly increasing");
    cfg.n_list.push_back(v);
  }
  if (!j.contains("seeds") || !j["seeds"].is_array() || j["seeds"].empty())
    throw ConfigError("/seeds", "expected a non-empty array of seeds");
  for (std::size_t i = 0; i < j["seeds"].size(); ++i)
    cfg.seeds.push_back(
        static_cast<std::uint64_t>(need_size(j["seeds"][i], "/seeds/" + std::to_string(i))));

  if (j.contains("K")) cfg.steps = need_size(j["K"], "/K");
  if (!power_of_two(cfg.steps)) throw ConfigError("/K", "step count must be a power of two");
  if (j.contains("P")) cfg.lsmc_paths = need_size(j["P"], "/P");
  if (!power_of_two(cfg.lsmc_paths)) throw ConfigError("/P", "path count must be a power of two");

  if (j.contains("method")) {
    if (!j["method"].is_string()) throw ConfigError("/method", "expected a string");
    const std::string m = j["method"].get<std::string>();
    if (m == "analytic")
      cfg.method = SweepMethod::analytic;
    else if (m == "lsmc")
      cfg.method = SweepMethod::lsmc;
    else if (m == "both")
      cfg.method = SweepMethod::both;
    else
      throw ConfigError("/method", "expected one of analytic|lsmc|both");
  }
  if (j.contains("basis")) {
    if (!j["basis"].is_array() || j["basis"].empty())
      throw ConfigError("/basis", "expected a non-empty array of feature names");
    cfg.basis.features.clear();
    for (std::size_t i = 0; i < j["basis"].size(); ++i) {
      const std::string ptr = "/basis/" + std::to_string(i);
      if (!j["basis"][i].is_string()) throw ConfigError(ptr, "expected a string");
      try {
        cfg.basis.features.push_back(parse_feature(j["basis"][i].get<std::string>()));
      } catch (const UsageError& e) {
        throw ConfigError(ptr, e.what());
      }
    }
  }
  if (j.contains("chaos")) {
    const json& c = j["chaos"];
    if (!c.is_object()) throw ConfigError("/chaos", "expected an object");
    check_known_keys(c, {"enabled", "replications"}, "/chaos");
    if (c.contains("enabled")) {
      if (!c["enabled"].is_boolean()) throw ConfigError("/chaos/enabled", "expected a boolean");
      cfg.chaos_enabled = c["enabled"].get<bool>();
    }
    if (c.contains("replications"))
      cfg.chaos_replications = need_size(c["replications"], "/chaos/replications");
    if (cfg.chaos_replications < 2)
      throw ConfigError("/chaos/replications", "need at least two replications");
  }
  if (j.contains("riccati_grid")) cfg.riccati_grid = need_size(j["riccati_grid"], "/riccati_grid");
  if (cfg.riccati_grid < 256) throw ConfigError("/riccati_grid", "must be >= 256");
  if (j.contains("threads")) cfg.threads = need_size(j["threads"], "/threads");
  for (const char* flag : {"dump_paths", "dump_bsde", "timings", "corrupt_riccati"}) {
    if (j.contains(flag)) {
      if (!j[flag].is_boolean()) throw ConfigError(std::string("/") + flag, "expected a boolean");
      const bool v = j[flag].get<bool>();
      if (std::string(flag) == "dump_paths") cfg.dump_paths = v;
      if (std::string(flag) == "dump_bsde") cfg.dump_bsde = v;
      if (std::string(flag) == "timings") cfg.timings = v;
      if (std::string(flag) == "corrupt_riccati") cfg.corrupt_riccati = v;
    }
  }
  if (j.contains("check")) {
    const json& c = j["check"];
    if (!c.is_object()) throw ConfigError("/check", "expected an object");
    check_known_keys(c, {"slope_window", "nz_spread_max"}, "/check");
    if (c.contains("slope_window")) {
      const json& w = c["slope_window"];
      if (!w.is_object()) throw ConfigError("/check/slope_window", "expected an object");
      for (auto it = w.begin(); it != w.end(); ++it) {
        const std::string ptr = "/check/slope_window/" + it.key();
        bool known = false;
        for (const char* col : kColumns)
          if (it.key() == col) known = true;
        if (!known) throw ConfigError(ptr, "unknown results column");
        if (!it.value().is_array() || it.value().size() != 2)
          throw ConfigError(ptr, "expected [lo, hi]");
        const double lo = need_number(it.value()[0], ptr + "/0");
        const double hi = need_number(it.value()[1], ptr + "/1");
        if (!(lo < hi)) throw ConfigError(ptr, "window must satisfy lo < hi");
        cfg.check.slope_windows[it.key()] = {lo, hi};
      }
    }
    if (c.contains("nz_spread_max"))
      cfg.check.nz_spread_max = need_number(c["nz_spread_max"], "/check/nz_spread_max");
  }
  if (j.contains("validate_probes"))
    cfg.validate_probes = need_size(j["validate_probes"], "/validate_probes");
  if (cfg.validate_probes < 2) throw ConfigError("/validate_probes", "need at least two probes");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

struct CellOutput {
  double a_err_y = std::numeric_limits<double>::quiet_NaN();
  double a_err_z = std::numeric_limits<double>::quiet_NaN();
  double l_err_y = std::numeric_limits<double>::quiet_NaN();
  double l_err_z = std::numeric_limits<double>::quiet_NaN();
  double corr = std::numeric_limits<double>::quiet_NaN();
  WeakChaosResult chaos;
  long long ms_analytic = 0, ms_lsmc = 0;
};

void write_results_csv(const ExperimentConfig& cfg, const std::vector<ErrorRow>& rows,
                       const fs::path& file) {
  std::ofstream os(file);
  os << "# mfparticles results\n";
  os << "# generated: " << iso_timestamp()
     << " (wall clock; comment lines are outside the reproducibility contract)\n";
  if (!cfg.timings)
    os << "# runtime_ms is 0 by default so the body is byte-reproducible; enable timings to fill "
          "it\n";
  os << "experiment,model,N,seed,K,P,method,err_y_sup,err_z_int,err_y_weak,err_z_weak,chaos_y,"
        "chaos_z,corr_term_int,runtime_ms\n";
  for (const auto& r : rows) {
    os << cfg.experiment << ',' << cfg.model_name << ',' << r.n << ',' << r.seed << ','
       << cfg.steps << ',' << cfg.lsmc_paths << ',' << r.method << ',' << fmt(r.err_y_sup) << ','
       << fmt(r.err_z_int) << ',' << fmt(r.err_y_weak) << ',' << fmt(r.err_z_weak) << ','
       << fmt(r.chaos_y) << ',' << fmt(r.chaos_z) << ',' << fmt(r.corr_term_int) << ','
       << r.runtime_ms << "\n";
  }
}

double row_column(const ErrorRow& r, const std::string& column) {
  if (column == "err_y_sup") return r.err_y_sup;
  if (column == "err_z_int") return r.err_z_int;
  if (column == "err_y_weak") return r.err_y_weak;
  if (column == "err_z_weak") return r.err_z_weak;
  if (column == "chaos_y") return r.chaos_y;
  if (column == "chaos_z") return r.chaos_z;
  throw UsageError("unknown results column: " + column);
}

// seed-median per N of one column restricted to one method
std::vector<std::pair<double, double>> median_points(const std::vector<ErrorRow>& rows,
                                                     const std::vector<std::size_t>& n_list,
                                                     const std::string& method,
                                                     const std::string& column) {
  std::vector<std::pair<double, double>> pts;
  for (const std::size_t n : n_list) {
    std::vector<double> vals;
    for (const auto& r : rows)
      if (r.n == n && r.method == method) {
        const double v = row_column(r, column);
        if (std::isfinite(v)) vals.push_back(v);
      }
    if (!vals.empty()) pts.emplace_back(static_cast<double>(n), median(std::move(vals)));
  }
  return pts;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const std::string& out_dir, bool check,
                      std::ostream& log) {
  fs::create_directories(out_dir);
  const LqModel model = make_lq_model(config.lq, config.drift, config.mu0, config.riccati_grid,
                                      RiccatiOptions{config.corrupt_riccati});

  SweepResult result;
  {
    std::ofstream os(fs::path(out_dir) / "riccati.csv");
    dump_riccati_csv(*model.riccati, config.n_list, os);
  }

  if (check) {
    const ResidualGate gate = riccati_residual_gate(*model.riccati);
    log << "[check] riccati residual gate: " << (gate.pass ? "pass" : "FAIL")
        << " (pde=" << fmt(gate.max_pde_residual)
        << ", finite-dim=" << fmt(gate.max_finite_dim_residual) << ", tol="
        << fmt(gate.tolerance) << ")\n";
    if (!gate.pass) {
      result.check_failures.push_back("riccati residual gate");
      result.exit_code = 2;
      return result;
    }
  }

  const bool want_analytic = config.method != SweepMethod::lsmc;
  const bool want_lsmc = config.method != SweepMethod::analytic;

  struct Cell {
    std::size_t n;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const std::size_t n : config.n_list)
    for (const std::uint64_t seed : config.seeds) cells.push_back({n, seed});
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return a.n != b.n ? a.n < b.n : a.seed < b.seed;
  });
  std::vector<CellOutput> outs(cells.size());

  parallel_for(cells.size(), config.threads, [&](std::size_t ci) {
    const auto [n, seed] = cells[ci];
    CellOutput& co = outs[ci];
    using clock = std::chrono::steady_clock;

    const auto t0 = clock::now();
    const ParticlePaths paths = simulate_particles(model.spec, n, config.steps, seed);
    const CorrectionSeries corr = correction_term(model.solution, model.spec, paths);
    co.corr = corr.integral_idio;
    if (config.dump_paths) {
      std::ofstream os(fs::path(out_dir) / ("paths-N" + std::to_string(n) + "-seed" +
                                            std::to_string(seed) + ".csv"));
      dump_paths_csv(paths, os);
    }
    if (want_analytic) {
      const BackwardSolution back = evaluate_analytic(model.solution, paths);
      const PathwiseErrors pe = pathwise_errors(back, model.solution, paths);
      co.a_err_y = pe.err_y_sup;
      co.a_err_z = pe.err_z_int;
      if (config.chaos_enabled) {
        std::vector<Replication> reps;
        reps.reserve(config.chaos_replications);
        for (std::size_t r = 0; r < config.chaos_replications; ++r) {
          const std::uint64_t seed_r = derive_seed(seed, r);
          ParticlePaths rp = simulate_particles(model.spec, n, config.steps, seed_r);
          BackwardSolution rb = evaluate_analytic(model.solution, rp);
          LimitPaths rl = simulate_limit(model.spec, n, config.steps, seed_r, rp.dw0);
          reps.push_back({std::move(rp), std::move(rb), std::move(rl)});
        }
        co.chaos = weak_and_chaos_errors(reps, model.solution);
      }
    }
    co.ms_analytic =
        std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0).count();

    if (want_lsmc) {
      const auto t1 = clock::now();
      const PathBatch batch =
          simulate_batch(model.spec, n, config.lsmc_paths, config.steps, seed, 1);
      const BackwardSolution back =
          solve_lsmc(model.spec, batch, config.basis);
      const std::vector<PathwiseErrors> pes = pathwise_errors(back, model.solution, batch);
      double sy = 0.0, sz = 0.0;
      for (const auto& pe : pes) {
        sy += pe.err_y_sup;
        sz += pe.err_z_int;
      }
      co.l_err_y = sy / static_cast<double>(pes.size());
      co.l_err_z = sz / static_cast<double>(pes.size());
      if (config.dump_bsde) {
        std::ofstream os(fs::path(out_dir) / ("bsde-N" + std::to_string(n) + "-seed" +
                                              std::to_string(seed) + "-lsmc.csv"));
        dump_bsde_csv(back, batch, os);
      }
      co.ms_lsmc =
          std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t1).count();
    }
  });

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& cell = cells[ci];
    const auto& co = outs[ci];
    if (want_analytic) {
      ErrorRow row{cell.n,     cell.seed, "analytic", co.a_err_y, co.a_err_z, nan, nan, nan, nan,
                   co.corr,    0};
      if (co.chaos.available) {
        row.err_y_weak = co.chaos.e_y_weak;
        row.err_z_weak = co.chaos.e_z_weak;
        row.chaos_y = co.chaos.chaos_y;
        row.chaos_z = co.chaos.chaos_z;
        result.chaos[std::to_string(cell.n) + ":" + std::to_string(cell.seed)] = co.chaos;
      }
      row.runtime_ms = config.timings ? co.ms_analytic : 0;
      result.rows.push_back(std::move(row));
    }
    if (want_lsmc) {
      ErrorRow row{cell.n,  cell.seed, "lsmc", co.l_err_y, co.l_err_z, nan, nan, nan, nan,
                   co.corr, 0};
      row.runtime_ms = config.timings ? co.ms_lsmc : 0;
      result.rows.push_back(std::move(row));
    }
  }

  write_results_csv(config, result.rows, fs::path(out_dir) / "results.csv");

  // rates.json: seed-median per N, fitted per column and method
  json rates = json::object();
  std::vector<std::string> methods;
  if (want_analytic) methods.push_back("analytic");
  if (want_lsmc) methods.push_back("lsmc");
  for (const auto& method : methods) {
    for (const char* column : kColumns) {
      const auto pts = median_points(result.rows, config.n_list, method, column);
      const std::string key =
          (method == methods.front()) ? column : std::string(column) + ":" + method;
      if (pts.empty()) {
        rates[key] = {{"note", "unavailable"}, {"n_points", 0}};
        continue;
      }
      try {
        const RateFit fit = fit_rate(pts);
        rates[key] = {{"slope", fit.slope},
                      {"intercept", fit.intercept},
                      {"r2", fit.r2},
                      {"n_points", fit.n_points}};
        log << "rate " << column << " (" << method << "): slope=" << fmt(fit.slope)
            << " r2=" << fmt(fit.r2) << " n=" << fit.n_points << "\n";
      } catch (const FitError&) {
        rates[key] = {{"note", "insufficient points"}, {"n_points", pts.size()}};
        log << "rate " << column << " (" << method << "): insufficient points\n";
      }
    }
  }
  {
    std::ofstream os(fs::path(out_dir) / "rates.json");
    os << rates.dump(2) << "\n";
  }

  if (check) {
    for (const auto& [column, window] : config.check.slope_windows) {
      for (const auto& method : methods) {
        const auto pts = median_points(result.rows, config.n_list, method, column);
        std::string verdict;
        try {
          const RateFit fit = fit_rate(pts);
          if (fit.slope < window.first || fit.slope > window.second) {
            std::ostringstream os;
            os << "slope of " << column << " (" << method << ") = " << fmt(fit.slope)
               << " outside [" << fmt(window.first) << ", " << fmt(window.second) << "]";
            verdict = os.str();
          }
        } catch (const FitError&) {
          verdict = "slope of " + column + " (" + method + "): insufficient points";
        }
        if (!verdict.empty()) result.check_failures.push_back(verdict);
        log << "[check] slope window " << column << " (" << method << "): "
            << (verdict.empty() ? "pass" : "FAIL") << "\n";
      }
    }
    if (config.check.nz_spread_max && want_analytic) {
      std::vector<double> scaled;
      for (const std::size_t n : config.n_list) {
        std::vector<double> vals;
        for (const auto& r : result.rows)
          if (r.n == n && r.method == "analytic" && std::isfinite(r.err_y_sup))
            vals.push_back(r.err_y_sup);
        if (!vals.empty()) scaled.push_back(static_cast<double>(n) * median(std::move(vals)));
      }
      bool ok = scaled.size() >= 2;
      double spread = std::numeric_limits<double>::quiet_NaN();
      if (ok) {
        const double lo = *std::min_element(scaled.begin(), scaled.end());
        const double hi = *std::max_element(scaled.begin(), scaled.end());
        double mean_val = 0.0;
        for (const double s : scaled) mean_val += s;
        mean_val /= static_cast<double>(scaled.size());
        spread = (hi - lo) / mean_val;
        ok = spread <= *config.check.nz_spread_max;
      }
      log << "[check] N*err_y_sup relative spread: " << (ok ? "pass" : "FAIL") << " ("
          << fmt(spread) << ")\n";
      if (!ok) result.check_failures.push_back("N*err_y_sup spread exceeds cap");
    }
    if (!result.check_failures.empty()) result.exit_code = 2;
  }
  return result;
}

int run_validate(const ExperimentConfig& config, const std::string& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  const LqModel model = make_lq_model(config.lq, config.drift, config.mu0, config.riccati_grid,
                                      RiccatiOptions{config.corrupt_riccati});
  const NoiseField rng(0xA55E55ED5EEDULL);
  const AssumptionReport rep = validate_assumptions(model.spec, config.validate_probes, rng);
  const double growth =
      observed_growth_constant(model.solution, 1, config.lq.horizon, config.validate_probes, rng);
  const ResidualGate gate = riccati_residual_gate(*model.riccati);

  json out = {
      {"model", config.model_name},
      {"probe_count", config.validate_probes},
      {"lipschitz",
       {{"b", rep.lip_b},
        {"sigma", rep.lip_sigma},
        {"sigma0", rep.lip_sigma0},
        {"Hb_yz", rep.lip_hb_yz},
        {"Hb_xmu", rep.lip_hb_xmu},
        {"G", rep.lip_g}}},
      {"sigma_bounds",
       {{"max_sigma_norm", rep.max_sigma_norm},
        {"max_sigma_pinv_norm", rep.max_sigma_pinv_norm},
        {"invertible", rep.sigma_invertible}}},
      {"mu0_norm_4q", rep.mu0_norm_4q},
      {"coeff_time_integral_4q", rep.coeff_time_integral_4q},
      {"q_exponent", 2.0},
      {"growth_constant_L", growth},
      {"residual_gate",
       {{"max_pde_residual", gate.max_pde_residual},
        {"max_finite_dim_residual", gate.max_finite_dim_residual},
        {"tolerance", gate.tolerance},
        {"pass", gate.pass}}},
      {"violations", rep.violations || !gate.pass},
      {"notes", rep.notes},
  };
  {
    std::ofstream os(fs::path(out_dir) / "assumptions.json");
    os << out.dump(2) << "\n";
  }
  log << "assumptions: [b]=" << fmt(rep.lip_b) << " [sigma]=" << fmt(rep.lip_sigma)
      << " [sigma0]=" << fmt(rep.lip_sigma0) << " [Hb]1=" << fmt(rep.lip_hb_yz)
      << " [Hb]2=" << fmt(rep.lip_hb_xmu) << " [G]=" << fmt(rep.lip_g)
      << " L=" << fmt(growth) << "\n";
  log << "residual gate: " << (gate.pass ? "pass" : "FAIL") << "\n";
  return (rep.violations || !gate.pass) ? 2 : 0;
}

RateFit rate_from_csv(const std::string& csv_path, const std::string& column,
                      const std::string& method_filter) {
  std::ifstream in(csv_path);
  if (!in) throw UsageError("cannot open results file: " + csv_path);
  std::string line;
  std::vector<std::string> header;
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> by_n;  // (N, method)
  int col_idx = -1, n_idx = -1, method_idx = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (header.empty()) {
      header = fields;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == column) col_idx = static_cast<int>(i);
        if (header[i] == "N") n_idx = static_cast<int>(i);
        if (header[i] == "method") method_idx = static_cast<int>(i);
      }
      if (col_idx < 0) throw UsageError("column not found in results file: " + column);
      if (n_idx < 0 || method_idx < 0) throw UsageError("results file misses N/method columns");
      continue;
    }
    if (fields.size() != header.size()) throw UsageError("malformed results row: " + line);
    const std::string& method = fields[static_cast<std::size_t>(method_idx)];
    if (!method_filter.empty() && method != method_filter) continue;
    const std::size_t n = std::stoull(fields[static_cast<std::size_t>(n_idx)]);
    const double v = std::strtod(fields[static_cast<std::size_t>(col_idx)].c_str(), nullptr);
    by_n[{n, method}].push_back(v);
  }
  std::map<std::size_t, std::vector<double>> merged;
  for (auto& [key, vals] : by_n)
    for (const double v : vals) merged[key.first].push_back(v);
  std::vector<std::pair<double, double>> pts;
  for (auto& [n, vals] : merged) {
    std::vector<double> finite;
    for (const double v : vals)
      if (std::isfinite(v)) finite.push_back(v);
    if (!finite.empty()) pts.emplace_back(static_cast<double>(n), median(std::move(finite)));
  }
  return fit_rate(pts);
}

}  // namespace mfp
