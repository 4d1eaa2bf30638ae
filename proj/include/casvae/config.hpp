#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "casvae/models.hpp"

namespace casvae {

// ---------------------------------------------------------------------------
// Experiment configuration: a flat key=value text file.
//
// Format: one `key = value` per line, UTF-8, "#" starts a comment (full-line
// or trailing), blank lines ignored.  Unknown keys, duplicate keys, and
// unparsable values are rejected with the offending line number — nothing is
// guessed.  serialize_run_config emits every key in a fixed order with %.17g
// numerics, so parse(serialize(cfg)) reproduces cfg exactly and a saved
// config is complete provenance for its run.
// ---------------------------------------------------------------------------

/// The five scoring pipelines the runner knows how to train end to end.
enum class Method { CasVae, VaePca, VaeIsomap, DklVaePca, DklVaeIsomap };

Method method_from_string(const std::string& name);
std::string to_string(Method method);

struct RunConfig {
  // Pipeline selection and artifact placement.
  std::string method = "casvae";
  std::filesystem::path out_dir = "out";
  /// Model seeds for the multi-seed commands (stability, reproduce).
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

  // Data: either container files produced by `generate` (train split without
  // labels, eval split with) or — when both paths are empty — an in-memory
  // dataset generated from the parameters below.
  std::filesystem::path train_file;
  std::filesystem::path eval_file;
  int n_train = 4000;
  int n_eval = 1000;
  double balance = 0.5;
  double contamination = 0.1;
  double noise_sigma = 2.0;
  int channels = 3;
  int height = 32;
  int width = 32;
  std::uint64_t data_seed = 42;

  /// Optimizer, schedule, surrogate, and prior for whichever model the
  /// method trains.  `train.seed` is the single-run model seed (key "seed").
  /// The runner default surrogate is the closed-form approximation (dkl),
  /// the grid-search winner on the synthetic benchmark.
  TrainConfig train = default_train();

  // Manifold baseline knobs (the *_pca / *_isomap methods).
  int isomap_k = 10;
  int isomap_max_points = 2000;

  static TrainConfig default_train() {
    TrainConfig t;
    t.surrogate = SurrogateKind::DKL;
    return t;
  }
};

/// Throws ConfigError on any out-of-range or inconsistent value; called by
/// the parsers so no command starts work on a bad configuration.
void validate_run_config(const RunConfig& cfg);

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string serialize_run_config(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Grid search: per-key value lists whose Cartesian product defines runs.
//
// Same line format as RunConfig, but each value is a comma-separated list.
// Axes keep file order; point `i` is decoded with the last axis varying
// fastest.  The keys "out_dir" and "seeds" cannot be grid axes (the first
// would scatter artifacts, the second is already a list).
// ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

GridSpec parse_grid_text(const std::string& text);
GridSpec load_grid(const std::filesystem::path& path);

/// Product of axis sizes; 1 for an empty grid (the base config itself).
std::size_t grid_size(const GridSpec& grid);

/// Base config with point `index`'s values applied and re-validated.
RunConfig grid_point(const RunConfig& base, const GridSpec& grid, std::size_t index);

/// The raw axis values of point `index`, in axis order (leaderboard columns).
std::vector<std::string> grid_point_values(const GridSpec& grid, std::size_t index);

}  // namespace casvae
