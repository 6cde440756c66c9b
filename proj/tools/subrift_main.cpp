#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "subrift/cli.hpp"

using namespace subrift;

namespace {

struct FlagBuffer {
  std::string config_file;
  std::string model, x, y, eps, out;
  long n = -1;
  long long seed = -1;
  double rho = -1.0, r_kde = -1.0;
  int grid = -1, steps = -1, mc_steps = -1, control_n = -1, starts = -1, threads = -1;
};

void add_common_flags(CLI::App* sub, FlagBuffer& fb) {
  sub->add_option("--config", fb.config_file, "key=value config file");
  sub->add_option("--model", fb.model, "model name");
  sub->add_option("--x", fb.x, "start point, comma separated");
  sub->add_option("--y", fb.y, "end point, comma separated");
  sub->add_option("--eps", fb.eps, "diffusivity scales, comma separated");
  sub->add_option("--n", fb.n, "sample count");
  sub->add_option("--seed", fb.seed, "random seed");
  sub->add_option("--rho", fb.rho, "bridge window radius in units of sqrt(eps)");
  sub->add_option("--grid", fb.grid, "fluctuation grid");
  sub->add_option("--steps", fb.steps, "flow grid steps");
  sub->add_option("--mc-steps", fb.mc_steps, "Euler steps for simulation");
  sub->add_option("--control-n", fb.control_n, "control intervals for the second variation");
  sub->add_option("--starts", fb.starts, "multistart count");
  sub->add_option("--r-kde", fb.r_kde, "density ball radius factor");
  sub->add_option("--threads", fb.threads, "worker thread cap");
  sub->add_option("--out", fb.out, "output directory");
}

int build_config(const FlagBuffer& fb, RunConfig& cfg) {
  try {
    if (!fb.config_file.empty()) load_config_file(cfg, fb.config_file);
    if (!fb.model.empty()) apply_config_entry(cfg, "model", fb.model);
    if (!fb.x.empty()) apply_config_entry(cfg, "x", fb.x);
    if (!fb.y.empty()) apply_config_entry(cfg, "y", fb.y);
    if (!fb.eps.empty()) apply_config_entry(cfg, "eps", fb.eps);
    if (fb.n >= 0) cfg.n = fb.n;
    if (fb.seed >= 0) cfg.seed = static_cast<uint64_t>(fb.seed);
    if (fb.rho >= 0) cfg.rho = fb.rho;
    if (fb.r_kde >= 0) cfg.r_kde = fb.r_kde;
    if (fb.grid >= 0) cfg.grid = fb.grid;
    if (fb.steps >= 0) cfg.steps = fb.steps;
    if (fb.mc_steps >= 0) cfg.mc_steps = fb.mc_steps;
    if (fb.control_n >= 0) cfg.control_n = fb.control_n;
    if (fb.starts >= 0) cfg.starts = fb.starts;
    if (fb.threads >= 0) cfg.threads = fb.threads;
    if (!fb.out.empty()) cfg.out = fb.out;
    if (const char* env = std::getenv("SUBRIFT_SEED")) cfg.seed = std::stoull(env);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sub-Riemannian geodesics, bridge fluctuations and small-time asymptotics"};
  app.require_subcommand(1);

  const char* names[] = {"geodesic",  "conjugate",  "qspec",   "heat-const",
                         "fluctuate", "verify-clt", "varadhan"};
  const char* descs[] = {
      "solve the two-point geodesic problem",
      "conjugacy and cut-locus diagnostics for a solved geodesic",
      "spectrum of the second variation on the endpoint kernel",
      "small-time heat-kernel constant",
      "sample the limiting bridge-fluctuation field",
      "compare bridge simulations with the limiting covariance",
      "small-time density table from weighted endpoint counting"};
  std::vector<FlagBuffer> buffers(std::size(names));
  for (size_t i = 0; i < std::size(names); ++i)
    add_common_flags(app.add_subcommand(names[i], descs[i]), buffers[i]);

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < std::size(names); ++i) {
    if (app.got_subcommand(names[i])) {
      RunConfig cfg;
      int rc = build_config(buffers[i], cfg);
      if (rc != 0) return rc;
      return run_subcommand(names[i], cfg);
    }
  }
  return 1;
}
