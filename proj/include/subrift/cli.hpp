#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "subrift/fluctuation.hpp"
#include "subrift/io.hpp"
#include "subrift/montecarlo.hpp"
#include "subrift/secondvar.hpp"
#include "subrift/zoo.hpp"

namespace subrift {

// Flat key=value run configuration. A config file is read first, then
// command-line overrides win; the canonical echo is byte-stable so reruns
// can be compared file-for-file.
struct RunConfig {
  std::string model = "euclidean2";
  std::vector<double> x{0.0, 0.0};
  std::vector<double> y{1.0, 0.0};
  std::vector<double> eps{0.1};
  long n = 20000;
  uint64_t seed = 12345;
  double rho = 0.5;
  int grid = 16;
  int steps = 1000;     // flow / Jacobi grid
  int mc_steps = 400;   // Euler steps for simulation
  int control_n = 32;   // second-variation control intervals
  int starts = 32;      // multistart count for the shooting solver
  double r_kde = 0.4;   // density ball radius factor
  int threads = 1;
  std::string out = "out";

  Vec xv() const {
    Vec v(static_cast<int>(x.size()));
    for (size_t i = 0; i < x.size(); ++i) v[static_cast<int>(i)] = x[i];
    return v;
  }
  Vec yv() const {
    Vec v(static_cast<int>(y.size()));
    for (size_t i = 0; i < y.size(); ++i) v[static_cast<int>(i)] = y[i];
    return v;
  }
};

namespace cli_detail {

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t pos = 0;
    double v = std::stod(item, &pos);
    if (pos != item.size()) throw ConfigError("bad number in list: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list value");
  return out;
}

inline std::string join_list(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += fmt17(v[i]);
  }
  return s;
}

}  // namespace cli_detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& val) {
  using cli_detail::parse_list;
  try {
    if (key == "model")
      cfg.model = val;
    else if (key == "x")
      cfg.x = parse_list(val);
    else if (key == "y")
      cfg.y = parse_list(val);
    else if (key == "eps")
      cfg.eps = parse_list(val);
    else if (key == "n")
      cfg.n = std::stol(val);
    else if (key == "seed")
      cfg.seed = std::stoull(val);
    else if (key == "rho")
      cfg.rho = std::stod(val);
    else if (key == "grid")
      cfg.grid = std::stoi(val);
    else if (key == "steps")
      cfg.steps = std::stoi(val);
    else if (key == "mc_steps")
      cfg.mc_steps = std::stoi(val);
    else if (key == "control_n")
      cfg.control_n = std::stoi(val);
    else if (key == "starts")
      cfg.starts = std::stoi(val);
    else if (key == "r_kde")
      cfg.r_kde = std::stod(val);
    else if (key == "threads")
      cfg.threads = std::stoi(val);
    else if (key == "out")
      cfg.out = val;
    else
      throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for key " + key + ": " + val);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for key " + key + ": " + val);
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      size_t i = s.find_first_not_of(" \t");
      size_t j = s.find_last_not_of(" \t");
      return i == std::string::npos ? std::string() : s.substr(i, j - i + 1);
    };
    apply_config_entry(cfg, strip(key), strip(val));
  }
}

// canonical key=value form: sorted keys, 17-digit floats, newline endings
inline std::string canonical_config(const RunConfig& cfg) {
  using cli_detail::join_list;
  std::map<std::string, std::string> kv;
  kv["model"] = cfg.model;
  kv["x"] = join_list(cfg.x);
  kv["y"] = join_list(cfg.y);
  kv["eps"] = join_list(cfg.eps);
  kv["n"] = std::to_string(cfg.n);
  kv["seed"] = std::to_string(cfg.seed);
  kv["rho"] = fmt17(cfg.rho);
  kv["grid"] = std::to_string(cfg.grid);
  kv["steps"] = std::to_string(cfg.steps);
  kv["mc_steps"] = std::to_string(cfg.mc_steps);
  kv["control_n"] = std::to_string(cfg.control_n);
  kv["starts"] = std::to_string(cfg.starts);
  kv["r_kde"] = fmt17(cfg.r_kde);
  kv["threads"] = std::to_string(cfg.threads);
  // the output directory is not an experiment parameter and stays out of
  // the canonical form
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

namespace cli_detail {

inline void check_model_point(const Model& model, const RunConfig& cfg) {
  if (static_cast<int>(cfg.x.size()) != model.d || static_cast<int>(cfg.y.size()) != model.d)
    throw ConfigError("x/y dimension does not match model " + model.name);
}

inline SolveOptions solve_options(const RunConfig& cfg) {
  SolveOptions o;
  o.starts = cfg.starts;
  o.steps = cfg.steps;
  o.seed = cfg.seed;
  return o;
}

inline int round_up_multiple(int value, int base) {
  return ((value + base - 1) / base) * base;
}

inline SdeConfig sde_config(const RunConfig& cfg, double eps) {
  SdeConfig s;
  s.eps = eps;
  // the Euler grid must refine the storage grid
  s.steps = round_up_multiple(cfg.mc_steps, cfg.grid);
  s.n = static_cast<int>(cfg.n);
  s.seed = cfg.seed;
  s.rho = cfg.rho;
  s.grid = cfg.grid;
  s.threads = cfg.threads;
  s.r_kde_factor = cfg.r_kde;
  return s;
}

inline void write_config_echo(const RunConfig& cfg) {
  std::ofstream out(std::filesystem::path(cfg.out) / "config_echo.txt");
  out << canonical_config(cfg);
}

inline nlohmann::json report_to_json(const CutLocusReport& rep) {
  nlohmann::json j;
  j["detJ1"] = rep.detJ1;
  j["min_singular_J1"] = rep.min_singular_J1;
  if (rep.first_conjugate_time)
    j["first_conjugate_time"] = *rep.first_conjugate_time;
  else
    j["first_conjugate_time"] = nullptr;
  j["symmetric_residual"] = rep.symmetric_residual;
  j["regular"] = rep.regular;
  j["unique_minimal"] = rep.unique_minimal;
  j["outside_cut_locus"] = rep.outside_cut_locus;
  return j;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// subcommands; each writes its files under cfg.out and returns the exit code

inline int cmd_geodesic(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));

  nlohmann::json j;
  j["model"] = model.name;
  j["x"] = vec_to_json(sol.lambda0.x);
  j["y"] = vec_to_json(cfg.yv());
  j["lambda0_p"] = vec_to_json(sol.lambda0.p);
  j["distance"] = sol.distance;
  j["energy"] = sol.energy;
  j["residual"] = sol.residual;
  j["multiplicity"] = sol.multiplicity;
  j["minimal"] = sol.minimal;
  j["multistart_energy_gap"] = sol.multistart_energy_gap;
  write_json(std::filesystem::path(cfg.out) / "geodesic.json", j);

  std::vector<std::string> header{"t"};
  for (int c = 0; c < model.d; ++c) header.push_back("x_" + std::to_string(c + 1));
  for (int c = 0; c < model.d; ++c) header.push_back("p_" + std::to_string(c + 1));
  CsvWriter csv(std::filesystem::path(cfg.out) / "geodesic_path.csv", header);
  int N = sol.path.steps();
  for (int i = 0; i <= N; ++i) {
    std::vector<double> row{sol.path.time(i)};
    for (int c = 0; c < model.d; ++c) row.push_back(sol.path.x[i][c]);
    for (int c = 0; c < model.d; ++c) row.push_back(sol.path.p[i][c]);
    csv.row(row);
  }
  return 0;
}

inline int cmd_conjugate(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));
  CutLocusReport rep = classify(model, sol);
  nlohmann::json j = cli_detail::report_to_json(rep);
  try {
    SecondVar sv(model, sol, cfg.control_n);
    const QSpectrum& spec = sv.spectrum();
    j["mu_min"] = spec.mu[0];
    j["kernel_dim"] = spec.dim();
    j["rank"] = spec.rank;
  } catch (const RankDeficiencyError& e) {
    // non-regular path: the flow-side diagnostics still stand
    throw;
  } catch (const SubriftError& e) {
    // near a conjugate endpoint the discrete-minimum refinement can fail
    // to converge; report the flow-side diagnostics with the spectrum
    // fields left open
    j["mu_min"] = nullptr;
    j["kernel_dim"] = nullptr;
    j["rank"] = nullptr;
    j["spectrum_note"] = e.what();
  }
  write_json(std::filesystem::path(cfg.out) / "conjugate.json", j);
  return 0;
}

inline int cmd_qspec(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));
  SecondVar sv(model, sol, cfg.control_n);
  const QSpectrum& spec = sv.spectrum();
  nlohmann::json j;
  j["model"] = model.name;
  j["mu"] = nlohmann::json::array();
  for (int i = 0; i < spec.mu.size(); ++i) j["mu"].push_back(spec.mu[i]);
  j["rank"] = spec.rank;
  j["kernel_dim"] = spec.dim();
  j["lambda1"] = vec_to_json(spec.lambda1);
  write_json(std::filesystem::path(cfg.out) / "qspec.json", j);
  return 0;
}

inline int cmd_heat_const(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));
  HeatConstant hc = heat_constant(model, sol, cfg.control_n);
  nlohmann::json j;
  j["model"] = model.name;
  j["c"] = hc.c;
  j["detC1bar"] = hc.detC1bar;
  j["Z1"] = vec_to_json(hc.Z1);
  j["lambda1_dot_Z1"] = hc.lambda1_dot_Z1;
  j["spectral_factor"] = hc.spectral_factor;
  j["mu"] = nlohmann::json::array();
  for (int i = 0; i < hc.mu.size(); ++i) j["mu"].push_back(hc.mu[i]);
  write_json(std::filesystem::path(cfg.out) / "heat_const.json", j);
  return 0;
}

inline int cmd_fluctuate(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  SolveOptions so = cli_detail::solve_options(cfg);
  so.steps = cli_detail::round_up_multiple(cfg.steps, cfg.grid);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), so);
  FluctuationKernel fk = assemble_kernel(sol, cfg.grid);
  GridSamples gs = sample_kernel(fk, static_cast<int>(cfg.n), cfg.seed);

  std::vector<std::string> header{"sample_id", "t"};
  for (int c = 0; c < model.d; ++c) header.push_back("v_" + std::to_string(c + 1));
  CsvWriter csv(std::filesystem::path(cfg.out) / "fluctuate_samples.csv", header);
  for (int i = 0; i < gs.n; ++i)
    for (int jdx = 0; jdx < gs.grid_size(); ++jdx) {
      std::vector<double> row{static_cast<double>(i), gs.times[jdx]};
      Vec v = gs.at(i, jdx);
      for (int c = 0; c < model.d; ++c) row.push_back(v[c]);
      csv.row(row);
    }

  nlohmann::json j;
  j["model"] = model.name;
  j["grid"] = cfg.grid;
  j["jitter_used"] = fk.jitter_used;
  j["min_eig"] = fk.min_eig;
  nlohmann::json blocks = nlohmann::json::array();
  for (auto [s, t] : std::vector<std::pair<double, double>>{{0.25, 0.75}, {0.5, 0.5}}) {
    nlohmann::json b;
    b["s"] = s;
    b["t"] = t;
    b["C"] = mat_to_json(covariance(sol, s, t));
    blocks.push_back(b);
  }
  j["covariance_blocks"] = blocks;
  write_json(std::filesystem::path(cfg.out) / "fluctuate_summary.json", j);
  return 0;
}

inline int cmd_verify_clt(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));

  double eps = cfg.eps.front();
  bool exact = model.name.rfind("euclidean", 0) == 0;
  BridgeEnsemble be;
  if (exact) {
    SdeConfig scfg = cli_detail::sde_config(cfg, eps);
    be = bridge_exact_euclidean(model.d, scfg);
  } else {
    be = bridge_ensemble(model, sol, cli_detail::sde_config(cfg, eps));
  }

  // window-bias band through the conditional-mean map M_t
  const JacobiData& jd = sol.jacobi;
  int N = sol.path.steps();
  auto mmap = [&](double t) {
    int it = static_cast<int>(std::llround(t * N));
    Mat Ct = Mat::Zero(model.d, model.d);
    double dt = 1.0 / N;
    for (int i = 0; i <= it; ++i) {
      Mat uinv = jd.u[i].inverse();
      Mat f = uinv * diffusivity(model, sol.path.x[i]) * uinv.transpose();
      Ct += ((i == 0 || i == it) ? 0.5 : 1.0) * f * dt;
    }
    return Mat(jd.u[it] * Ct * jd.C1.inverse() * jd.u[N].inverse());
  };

  double k_se = exact ? 3.0 : 5.0;
  nlohmann::json results = nlohmann::json::array();
  bool all_pass = true;
  CsvWriter csv(std::filesystem::path(cfg.out) / "verify_clt.csv",
                {"s", "t", "i", "j", "empirical", "exact", "se", "band", "pass"});
  for (auto [s, t] : std::vector<std::pair<double, double>>{{0.25, 0.75}, {0.5, 0.5}}) {
    CovEstimate est = empirical_covariance(be, s, t);
    Mat want = covariance(sol, s, t);
    Mat band = Mat::Zero(model.d, model.d);
    if (!exact) band = (mmap(s) * mmap(t).transpose()).cwiseAbs() * cfg.rho * cfg.rho;
    nlohmann::json r;
    r["s"] = s;
    r["t"] = t;
    r["empirical"] = mat_to_json(est.cov);
    r["exact"] = mat_to_json(want);
    r["se"] = mat_to_json(est.se);
    r["band"] = mat_to_json(band);
    bool pass = true;
    for (int i = 0; i < model.d; ++i)
      for (int j = 0; j < model.d; ++j) {
        bool ok = std::abs(est.cov(i, j) - want(i, j)) <=
                  k_se * est.se(i, j) + band(i, j) + 1e-12;
        pass = pass && ok;
        csv.row({s, t, static_cast<double>(i), static_cast<double>(j), est.cov(i, j),
                 want(i, j), est.se(i, j), band(i, j), ok ? 1.0 : 0.0});
      }
    r["pass"] = pass;
    all_pass = all_pass && pass;
    results.push_back(r);
  }
  nlohmann::json j;
  j["model"] = model.name;
  j["eps"] = eps;
  j["n"] = cfg.n;
  j["exact_bridge"] = exact;
  j["acceptance_rate"] = be.acceptance_rate;
  j["se_multiple"] = k_se;
  j["pairs"] = results;
  j["verdict"] = all_pass ? "pass" : "fail";
  write_json(std::filesystem::path(cfg.out) / "verify_clt.json", j);
  return all_pass ? 0 : 4;
}

inline int cmd_varadhan(const RunConfig& cfg) {
  Model model = make_model(cfg.model);
  cli_detail::check_model_point(model, cfg);
  std::filesystem::create_directories(cfg.out);
  cli_detail::write_config_echo(cfg);
  GeodesicSolution sol = solve_geodesic(model, cfg.xv(), cfg.yv(), cli_detail::solve_options(cfg));
  SdeConfig scfg = cli_detail::sde_config(cfg, cfg.eps.front());
  auto table = varadhan_estimate(model, sol, cfg.eps, scfg);

  CsvWriter csv(std::filesystem::path(cfg.out) / "varadhan.csv",
                {"eps", "p_hat", "eps_log_p", "r_kde", "hits", "inconclusive"});
  nlohmann::json rows = nlohmann::json::array();
  bool any_conclusive = false;
  for (const auto& row : table) {
    csv.row({row.eps, row.p_hat, row.eps_log_p, row.r_kde, static_cast<double>(row.hits),
             row.inconclusive ? 1.0 : 0.0});
    nlohmann::json r;
    r["eps"] = row.eps;
    r["p_hat"] = row.p_hat;
    if (row.inconclusive)
      r["eps_log_p"] = nullptr;
    else
      r["eps_log_p"] = row.eps_log_p;
    r["r_kde"] = row.r_kde;
    r["hits"] = row.hits;
    r["inconclusive"] = row.inconclusive;
    rows.push_back(r);
    any_conclusive = any_conclusive || !row.inconclusive;
  }
  nlohmann::json j;
  j["model"] = model.name;
  j["distance"] = sol.distance;
  j["limit"] = -0.5 * sol.distance * sol.distance;
  j["rows"] = rows;
  write_json(std::filesystem::path(cfg.out) / "varadhan.json", j);
  return any_conclusive ? 0 : 4;
}

// dispatch with the error-to-exit-code contract of the front end
inline int run_subcommand(const std::string& name, const RunConfig& cfg) {
  try {
    if (name == "geodesic") return cmd_geodesic(cfg);
    if (name == "conjugate") return cmd_conjugate(cfg);
    if (name == "qspec") return cmd_qspec(cfg);
    if (name == "heat-const") return cmd_heat_const(cfg);
    if (name == "fluctuate") return cmd_fluctuate(cfg);
    if (name == "verify-clt") return cmd_verify_clt(cfg);
    if (name == "varadhan") return cmd_varadhan(cfg);
    throw ConfigError("unknown subcommand: " + name);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NoConvergenceError& e) {
    std::fprintf(stderr, "no convergence: %s\n", e.what());
    // partial diagnostics for post-mortem
    std::filesystem::create_directories(cfg.out);
    nlohmann::json j;
    j["error"] = e.what();
    write_json(std::filesystem::path(cfg.out) / "partial.json", j);
    return 2;
  } catch (const RankDeficiencyError& e) {
    // non-regular path: the requested analysis has no solution there
    std::fprintf(stderr, "rank deficiency: %s\n", e.what());
    std::filesystem::create_directories(cfg.out);
    nlohmann::json j;
    j["error"] = e.what();
    write_json(std::filesystem::path(cfg.out) / "partial.json", j);
    return 2;
  } catch (const InconclusiveError& e) {
    std::fprintf(stderr, "inconclusive: %s\n", e.what());
    return 4;
  } catch (const SubriftError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  }
}

}  // namespace subrift
