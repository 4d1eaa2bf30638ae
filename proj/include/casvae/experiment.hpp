#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "casvae/config.hpp"
#include "casvae/eval.hpp"
#include "casvae/models.hpp"

namespace casvae {

// ---------------------------------------------------------------------------
// Experiment runner: everything the CLI subcommands do, as library calls.
// Each command takes an ostream for its human-readable progress lines so it
// can be exercised without a subprocess; all artifacts are plain files whose
// bytes are a pure function of the configuration (reruns are identical).
// ---------------------------------------------------------------------------

/// The data a run consumes: normalized training images (label-free by
/// construction — there is no field to put train labels in) and the labeled
/// eval split.
struct ExperimentData {
  MatrixX<float> train;
  MatrixX<float> eval;
  std::vector<std::uint8_t> eval_labels;
};

/// Loads the configured container files, or generates the synthetic dataset
/// in memory when no files are configured (train split from data_seed, eval
/// split from data_seed + 1, eval normalized with the train statistics).
/// The eval file must carry labels; labels in a train file are ignored.
ExperimentData prepare_data(const RunConfig& cfg);

struct MethodResult {
  VectorX<double> scores;              // eval-split scores
  std::vector<EpochStats> history;     // scoring model's per-epoch losses
  std::vector<EpochStats> ae_history;  // cascade only: phase-1 losses
};

/// Trains the method at `model_seed` on data.train, scores data.eval.  With
/// a non-empty `artifact_dir`, writes checkpoints and history CSVs there.
MethodResult run_method(Method method, const ExperimentData& data, const RunConfig& cfg,
                        std::uint64_t model_seed,
                        const std::filesystem::path& artifact_dir = {});

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenerateParams {
  std::filesystem::path out_dir = "data";
  int n_train = 4000;
  int n_eval = 1000;
  double balance = 0.5;
  double contamination = 0.1;
  double noise_sigma = 2.0;
  int channels = 3;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 42;
};

/// Writes out_dir/train.cvt (normalized images, no labels section),
/// out_dir/eval.cvt (normalized images + labels), out_dir/stats.csv (the
/// per-channel normalization parameters fitted on the train split).
void cmd_generate(const GenerateParams& params, std::ostream& out);

/// What a single run measured; cmd_grid aggregates these into a leaderboard.
struct RunSummary {
  double auc = 0.0;
  double oriented_auc = 0.0;
  bool flipped = false;
  RocPoint best;
};

/// One training + evaluation at cfg.train.seed.  Artifacts into cfg.out_dir:
/// config.txt (resolved), roc.csv, metrics.csv, history CSVs, checkpoints.
RunSummary cmd_run(const RunConfig& cfg, std::ostream& out);

/// cmd_run once per seed in cfg.seeds (seed_<N> subdirectories), aggregated
/// with eval's stability report.  A failing seed is listed and the run
/// continues; only all seeds failing is an error.  `jobs` > 1 runs seeds on
/// that many threads (outputs are keyed by seed order, not schedule).
void cmd_stability(const RunConfig& cfg, std::ostream& out, int jobs = 1);

/// One cmd_run per grid point (points/<NNN> subdirectories) and a
/// leaderboard CSV sorted by oriented AUC, descending.  Refuses to start
/// when the product exceeds max_runs.
void cmd_grid(const RunConfig& base, const GridSpec& grid, int max_runs,
              std::ostream& out);

/// The comparison table: {vae+ml, dklvae+ml, casvae} trained per seed on one
/// dataset; rows in that order with mean/highest/lowest oriented AUC.  The
/// "+ml" rows reduce the VAE latent means to one dimension with ISOMAP.
void cmd_reproduce(const RunConfig& cfg, std::ostream& out);

/// "a:b:n" → n evenly spaced values from a to b (n = 1 → just a); a bare
/// number is a single value.
std::vector<double> parse_linspace(const std::string& spec);

struct DivergenceMapParams {
  std::vector<double> mu{0.0};
  std::vector<double> sigma{1.0};
  std::vector<double> m{2.0};
  std::vector<double> s{1.0};
  std::filesystem::path out_file = "divergence_map.csv";
};

/// CSV columns mu,sigma,m,s,dklsc,dkl_paper,w,pw,quadrature over the
/// Cartesian product (mu outermost, s innermost), α fixed at ½.
void cmd_divergence_map(const DivergenceMapParams& params, std::ostream& out);

}  // namespace casvae
