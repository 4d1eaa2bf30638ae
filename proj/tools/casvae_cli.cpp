// casvae: reproducible star/galaxy separation experiments.
//
// Subcommands: generate | run | stability | grid | reproduce | divergence-map.
// Exit code 0 on success; any failure prints exactly one line
// "error: <message>" to stderr and exits 1.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "casvae/config.hpp"
#include "casvae/errors.hpp"
#include "casvae/experiment.hpp"

int main(int argc, char** argv) {
  using namespace casvae;

  CLI::App app{"CasVAE experiment runner"};
  app.require_subcommand(1);

  // --- generate -------------------------------------------------------------
  GenerateParams gen;
  int gen_size = 0;
  auto* c_gen = app.add_subcommand(
      "generate", "Render a synthetic star/galaxy dataset (train split unlabeled)");
  c_gen->add_option("--out", gen.out_dir, "Output directory")->capture_default_str();
  c_gen->add_option("--n", gen.n_train, "Training images")->capture_default_str();
  c_gen->add_option("--n-eval", gen.n_eval, "Evaluation images")->capture_default_str();
  c_gen->add_option("--balance", gen.balance, "Galaxy fraction")->capture_default_str();
  c_gen->add_option("--contamination", gen.contamination,
                    "Probability of an opposite-class contaminant")
      ->capture_default_str();
  c_gen->add_option("--noise-sigma", gen.noise_sigma, "Background noise level")
      ->capture_default_str();
  c_gen->add_option("--channels", gen.channels, "Image channels")->capture_default_str();
  c_gen->add_option("--size", gen_size, "Square image side (sets height and width)");
  c_gen->add_option("--height", gen.height, "Image height")->capture_default_str();
  c_gen->add_option("--width", gen.width, "Image width")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();

  // --- run / stability / grid / reproduce ------------------------------------
  std::string config_path, grid_path, seeds_override, out_override;
  int jobs = 1, max_runs = 64;

  auto* c_run = app.add_subcommand("run", "Train one method and score the eval split");
  c_run->add_option("--config", config_path, "Config file (key = value lines)");

  auto* c_stab = app.add_subcommand("stability", "Repeat a run across seeds");
  c_stab->add_option("--config", config_path, "Config file");
  c_stab->add_option("--seeds", seeds_override, "Comma-separated seed override");
  c_stab->add_option("--jobs", jobs, "Parallel seed workers")->capture_default_str();

  auto* c_grid = app.add_subcommand("grid", "Run the Cartesian product of a grid file");
  c_grid->add_option("--config", config_path, "Base config file");
  c_grid->add_option("--grid", grid_path, "Grid file (key = v1, v2, ... lines)")
      ->required();
  c_grid->add_option("--max-runs", max_runs, "Refuse larger grids")
      ->capture_default_str();

  auto* c_rep = app.add_subcommand(
      "reproduce", "The three-method comparison table on one synthetic dataset");
  c_rep->add_option("--config", config_path, "Config file (optional; defaults apply)");
  c_rep->add_option("--seeds", seeds_override, "Comma-separated seed override");
  c_rep->add_option("--out", out_override, "Output directory override");

  // --- divergence-map ---------------------------------------------------------
  DivergenceMapParams dmap;
  std::string mu_spec = "-3:3:25", sigma_spec = "0.1:2:8", m_spec = "0.5:3:6",
              s_spec = "1";
  auto* c_map = app.add_subcommand(
      "divergence-map", "Tabulate every surrogate against the quadrature oracle");
  c_map->add_option("--mu", mu_spec, "Posterior mean grid a:b:n")
      ->capture_default_str();
  c_map->add_option("--sigma", sigma_spec, "Posterior std grid a:b:n")
      ->capture_default_str();
  c_map->add_option("--m", m_spec, "Prior peak grid a:b:n")->capture_default_str();
  c_map->add_option("--s", s_spec, "Prior width grid a:b:n")->capture_default_str();
  c_map->add_option("--out", dmap.out_file, "Output CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const auto load_config = [&] {
      RunConfig cfg =
          config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (!seeds_override.empty()) {
        // Reuse the config parser so the override follows the same rules.
        const RunConfig parsed = parse_run_config_text("seeds = " + seeds_override + "\n");
        cfg.seeds = parsed.seeds;
      }
      if (!out_override.empty()) cfg.out_dir = out_override;
      validate_run_config(cfg);
      return cfg;
    };

    if (c_gen->parsed()) {
      if (gen_size > 0) gen.height = gen.width = gen_size;
      cmd_generate(gen, std::cout);
    } else if (c_run->parsed()) {
      cmd_run(load_config(), std::cout);
    } else if (c_stab->parsed()) {
      cmd_stability(load_config(), std::cout, jobs);
    } else if (c_grid->parsed()) {
      cmd_grid(load_config(), load_grid(grid_path), max_runs, std::cout);
    } else if (c_rep->parsed()) {
      cmd_reproduce(load_config(), std::cout);
    } else if (c_map->parsed()) {
      dmap.mu = parse_linspace(mu_spec);
      dmap.sigma = parse_linspace(sigma_spec);
      dmap.m = parse_linspace(m_spec);
      dmap.s = parse_linspace(s_spec);
      cmd_divergence_map(dmap, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
