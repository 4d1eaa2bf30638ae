#include "casvae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "casvae/divergence.hpp"
#include "casvae/errors.hpp"
#include "casvae/manifold.hpp"
#include "casvae/synthdata.hpp"

namespace casvae {

namespace fs = std::filesystem;

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  return out;
}

}  // namespace

ExperimentData prepare_data(const RunConfig& cfg) {
  validate_run_config(cfg);
  ExperimentData data;
  if (!cfg.train_file.empty()) {
    ImageSet train = load_set(cfg.train_file);
    ImageSet eval = load_set(cfg.eval_file);
    if (!eval.labels)
      throw DataError("eval file has no labels section: " + cfg.eval_file.string());
    if (train.pixels_per_image() != eval.pixels_per_image())
      throw DataError("train and eval files disagree on image shape");
    data.train = std::move(train.images);  // train labels, if any, never leave here
    data.eval = std::move(eval.images);
    data.eval_labels = std::move(*eval.labels);
    return data;
  }
  auto [train, stats] = normalize(generate_dataset(cfg.n_train, cfg.balance,
                                                   cfg.contamination, cfg.noise_sigma,
                                                   cfg.data_seed, cfg.channels,
                                                   cfg.height, cfg.width));
  ImageSet eval = normalize(generate_dataset(cfg.n_eval, cfg.balance, cfg.contamination,
                                             cfg.noise_sigma, cfg.data_seed + 1,
                                             cfg.channels, cfg.height, cfg.width),
                            stats)
                      .first;
  data.train = std::move(train.images);
  data.eval = std::move(eval.images);
  data.eval_labels = std::move(*eval.labels);
  return data;
}

MethodResult run_method(Method method, const ExperimentData& data, const RunConfig& cfg,
                        std::uint64_t model_seed, const fs::path& artifact_dir) {
  TrainConfig tc = cfg.train;
  tc.seed = model_seed;
  MethodResult res;

  if (method == Method::CasVae) {
    const AeTrainResult ae = train_ae(data.train, tc);
    const CasVaeTrainResult cascade = train_casvae(ae.model, data.train, tc);
    res.scores =
        casvae_score(ae.model, cascade.head, data.eval, tc.eval_noise, model_seed);
    res.ae_history = ae.history;
    res.history = cascade.history;
    if (!artifact_dir.empty()) {
      save_ae(artifact_dir / "ae.cvt", ae.model);
      save_head(artifact_dir / "head.cvt", cascade.head);
      export_history_csv(artifact_dir / "ae_history.csv", ae.history);
      export_history_csv(artifact_dir / "history.csv", cascade.history);
    }
    return res;
  }

  const bool mixed =
      method == Method::DklVaePca || method == Method::DklVaeIsomap;
  const bool use_pca = method == Method::VaePca || method == Method::DklVaePca;
  tc.mixed_prior_unit = mixed;
  const VanillaVaeTrainResult vv = train_vanilla_vae(data.train, tc);
  const MatrixX<double> train_means = vanilla_latent_means(vv.model, data.train);
  const MatrixX<double> eval_means = vanilla_latent_means(vv.model, data.eval);
  if (use_pca) {
    const PcaModel pca = pca_fit(train_means);
    res.scores = pca_project(pca, eval_means);
  } else {
    // Well-separated latents split the kNN graph, so bridge components.
    const IsomapModel isomap = isomap_fit(train_means, cfg.isomap_k,
                                          cfg.isomap_max_points, model_seed, true);
    res.scores = isomap_place(isomap, eval_means);
  }
  res.history = vv.history;
  if (!artifact_dir.empty()) {
    save_vanilla_vae(artifact_dir / "vae.cvt", vv.model);
    export_history_csv(artifact_dir / "history.csv", vv.history);
  }
  return res;
}

void cmd_generate(const GenerateParams& p, std::ostream& out) {
  if (p.n_train < 1 || p.n_eval < 1)
    throw ConfigError("generate: n and n_eval must be positive");
  if (!(p.balance >= 0.0 && p.balance <= 1.0))
    throw ConfigError("generate: balance must be in [0, 1]");
  if (!(p.contamination >= 0.0 && p.contamination <= 1.0))
    throw ConfigError("generate: contamination must be in [0, 1]");
  if (p.noise_sigma < 0.0) throw ConfigError("generate: noise_sigma must be >= 0");
  if (p.channels < 1 || p.height < 4 || p.width < 4)
    throw ConfigError("generate: image shape too small");

  fs::create_directories(p.out_dir);
  auto [train, stats] = normalize(generate_dataset(p.n_train, p.balance,
                                                   p.contamination, p.noise_sigma,
                                                   p.seed, p.channels, p.height,
                                                   p.width));
  ImageSet eval = normalize(generate_dataset(p.n_eval, p.balance, p.contamination,
                                             p.noise_sigma, p.seed + 1, p.channels,
                                             p.height, p.width),
                            stats)
                      .first;

  train.labels.reset();  // the train split is published without labels
  save_set(train, p.out_dir / "train.cvt");
  save_set(eval, p.out_dir / "eval.cvt");

  std::ofstream sf = open_out(p.out_dir / "stats.csv");
  sf << "channel,beta,mean,std\n";
  for (std::size_t c = 0; c < stats.beta.size(); ++c)
    sf << c << "," << format_g17(stats.beta[c]) << "," << format_g17(stats.mean[c])
       << "," << format_g17(stats.std_dev[c]) << "\n";
  sf.close();

  out << "wrote " << (p.out_dir / "train.cvt").string() << " (" << p.n_train
      << " images, unlabeled), " << (p.out_dir / "eval.cvt").string() << " ("
      << p.n_eval << " images, labeled), " << (p.out_dir / "stats.csv").string()
      << "\n";
}

RunSummary cmd_run(const RunConfig& cfg, std::ostream& out) {
  validate_run_config(cfg);
  const Method method = method_from_string(cfg.method);
  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir / "config.txt");

  const ExperimentData data = prepare_data(cfg);
  const MethodResult res = run_method(method, data, cfg, cfg.train.seed, cfg.out_dir);

  const RocCurve roc = roc_curve(res.scores, data.eval_labels);
  const RocPoint best = best_threshold(roc);
  RunSummary summary;
  summary.auc = auc(roc);
  const OrientedAuc oriented = orient(res.scores, data.eval_labels);
  summary.oriented_auc = oriented.value;
  summary.flipped = oriented.flipped;
  summary.best = best;

  export_roc_csv(roc, cfg.out_dir / "roc.csv");
  std::ofstream mf = open_out(cfg.out_dir / "metrics.csv");
  mf << "metric,value\n";
  mf << "auc," << format_g17(summary.auc) << "\n";
  mf << "oriented_auc," << format_g17(summary.oriented_auc) << "\n";
  mf << "flipped," << (summary.flipped ? 1 : 0) << "\n";
  mf << "best_threshold," << format_g17(best.threshold) << "\n";
  mf << "best_fpr," << format_g17(best.fpr) << "\n";
  mf << "best_tpr," << format_g17(best.tpr) << "\n";
  mf.close();

  out << "method=" << cfg.method << " seed=" << cfg.train.seed
      << " oriented_auc=" << format_g17(summary.oriented_auc)
      << " flipped=" << (summary.flipped ? 1 : 0) << " out_dir=" << cfg.out_dir.string()
      << "\n";
  return summary;
}

void cmd_stability(const RunConfig& cfg, std::ostream& out, int jobs) {
  validate_run_config(cfg);
  (void)method_from_string(cfg.method);
  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir / "config.txt");

  const std::size_t n = cfg.seeds.size();
  std::vector<std::optional<RunSummary>> results(n);
  std::vector<std::string> errors(n);

  const auto run_one = [&](std::size_t i) {
    RunConfig per_seed = cfg;
    per_seed.train.seed = cfg.seeds[i];
    per_seed.out_dir = cfg.out_dir / ("seed_" + std::to_string(cfg.seeds[i]));
    try {
      std::ostringstream sink;
      results[i] = cmd_run(per_seed, sink);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  };

  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_one(i);
      });
    for (std::thread& t : pool) t.join();
  }

  // Per-seed lines in seed order, failures listed inline.
  std::vector<std::uint64_t> ok_seeds;
  std::map<std::uint64_t, OrientedAuc> by_seed;
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i]) {
      out << "seed=" << cfg.seeds[i]
          << " oriented_auc=" << format_g17(results[i]->oriented_auc)
          << " flipped=" << (results[i]->flipped ? 1 : 0) << "\n";
      if (!by_seed.count(cfg.seeds[i])) ok_seeds.push_back(cfg.seeds[i]);
      by_seed[cfg.seeds[i]] = OrientedAuc{results[i]->oriented_auc, results[i]->flipped};
    } else {
      out << "seed=" << cfg.seeds[i] << " error: " << errors[i] << "\n";
      ++n_failed;
    }
  }
  if (n_failed > 0) {
    std::ofstream ff = open_out(cfg.out_dir / "failures.csv");
    ff << "seed,error\n";
    for (std::size_t i = 0; i < n; ++i)
      if (!results[i]) ff << cfg.seeds[i] << "," << errors[i] << "\n";
  }
  if (ok_seeds.empty())
    throw TrainingError("stability: every seed failed; first failure: " + errors[0]);

  const StabilityReport report = stability(
      [&](std::uint64_t seed) { return by_seed.at(seed); }, ok_seeds);
  export_stability_csv(report, cfg.out_dir / "stability.csv");

  out << "method=" << cfg.method << " seeds_ok=" << ok_seeds.size() << "/" << n
      << " mean=" << format_g17(report.mean_auc)
      << " lowest=" << format_g17(report.lowest_auc)
      << " highest=" << format_g17(report.highest_auc)
      << " spread=" << format_g17(report.highest_auc - report.lowest_auc) << "\n";
}

void cmd_grid(const RunConfig& base, const GridSpec& grid, int max_runs,
              std::ostream& out) {
  validate_run_config(base);
  const std::size_t size = grid_size(grid);
  if (max_runs < 1) throw ConfigError("grid: max-runs must be positive");
  if (size > static_cast<std::size_t>(max_runs))
    throw ConfigError("grid has " + std::to_string(size) +
                      " points, exceeding the --max-runs cap of " +
                      std::to_string(max_runs));

  fs::create_directories(base.out_dir);
  save_run_config(base, base.out_dir / "config.txt");
  {
    std::ofstream gf = open_out(base.out_dir / "grid.txt");
    for (const auto& axis : grid.axes) {
      gf << axis.first << " = ";
      for (std::size_t v = 0; v < axis.second.size(); ++v)
        gf << (v ? ", " : "") << axis.second[v];
      gf << "\n";
    }
  }
  out << "grid: " << size << " point" << (size == 1 ? "" : "s") << "\n";

  struct Row {
    std::size_t point;
    std::vector<std::string> values;
    RunSummary summary;
  };
  std::vector<Row> rows;
  char name[32];
  for (std::size_t i = 0; i < size; ++i) {
    RunConfig cfg = grid_point(base, grid, i);
    std::snprintf(name, sizeof(name), "%03zu", i);
    cfg.out_dir = base.out_dir / "points" / name;
    out << "point=" << i << " ";
    rows.push_back({i, grid_point_values(grid, i), cmd_run(cfg, out)});
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.summary.oriented_auc > b.summary.oriented_auc;
  });

  std::ofstream lf = open_out(base.out_dir / "leaderboard.csv");
  lf << "point";
  for (const auto& axis : grid.axes) lf << "," << axis.first;
  lf << ",oriented_auc,flipped\n";
  for (const Row& row : rows) {
    lf << row.point;
    for (const std::string& v : row.values) lf << "," << v;
    lf << "," << format_g17(row.summary.oriented_auc) << ","
       << (row.summary.flipped ? 1 : 0) << "\n";
  }
  lf.close();
  out << "leaderboard: " << (base.out_dir / "leaderboard.csv").string() << "\n";
}

void cmd_reproduce(const RunConfig& cfg, std::ostream& out) {
  validate_run_config(cfg);
  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir / "config.txt");
  const ExperimentData data = prepare_data(cfg);

  struct TableRow {
    const char* label;
    Method method;
    StabilityReport report;
  };
  // Row order follows the comparison table: baselines first, cascade last.
  std::vector<TableRow> table = {{"vae_ml", Method::VaeIsomap, {}},
                                 {"dklvae_ml", Method::DklVaeIsomap, {}},
                                 {"casvae", Method::CasVae, {}}};

  for (TableRow& row : table) {
    row.report = stability(
        [&](std::uint64_t seed) {
          const MethodResult res = run_method(row.method, data, cfg, seed);
          return orient(res.scores, data.eval_labels);
        },
        cfg.seeds);
    export_stability_csv(row.report,
                         cfg.out_dir / ("stability_" + std::string(row.label) + ".csv"));
    out << row.label << ": mean=" << format_g17(row.report.mean_auc)
        << " highest=" << format_g17(row.report.highest_auc)
        << " lowest=" << format_g17(row.report.lowest_auc) << "\n";
  }

  std::ofstream tf = open_out(cfg.out_dir / "reproduce.csv");
  tf << "method,mean_auc,highest_auc,lowest_auc\n";
  for (const TableRow& row : table)
    tf << row.label << "," << format_g17(row.report.mean_auc) << ","
       << format_g17(row.report.highest_auc) << ","
       << format_g17(row.report.lowest_auc) << "\n";
  tf.close();
  out << "table: " << (cfg.out_dir / "reproduce.csv").string() << "\n";
}

std::vector<double> parse_linspace(const std::string& spec) {
  const auto parse_num = [&](const std::string& part) {
    if (part.empty()) throw ConfigError("linspace '" + spec + "': empty field");
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (end != part.c_str() + part.size())
      throw ConfigError("linspace '" + spec + "': bad number '" + part + "'");
    return v;
  };
  const std::size_t c1 = spec.find(':');
  if (c1 == std::string::npos) return {parse_num(spec)};
  const std::size_t c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos)
    throw ConfigError("linspace '" + spec + "': expected a:b:n");
  const double a = parse_num(spec.substr(0, c1));
  const double b = parse_num(spec.substr(c1 + 1, c2 - c1 - 1));
  const std::string n_part = spec.substr(c2 + 1);
  char* end = nullptr;
  const long n = std::strtol(n_part.c_str(), &end, 10);
  if (end != n_part.c_str() + n_part.size() || n < 1)
    throw ConfigError("linspace '" + spec + "': n must be a positive integer");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n));
  if (n == 1) {
    values.push_back(a);
    return values;
  }
  for (long i = 0; i < n; ++i)
    values.push_back(a + static_cast<double>(i) * (b - a) / static_cast<double>(n - 1));
  return values;
}

void cmd_divergence_map(const DivergenceMapParams& p, std::ostream& out) {
  if (p.mu.empty() || p.sigma.empty() || p.m.empty() || p.s.empty())
    throw ConfigError("divergence-map: every axis needs at least one value");
  for (double sigma : p.sigma)
    if (!(sigma > 0.0)) throw ConfigError("divergence-map: sigma must be > 0");
  for (double m : p.m)
    if (!(m > 0.0)) throw ConfigError("divergence-map: m must be > 0");
  for (double s : p.s)
    if (!(s > 0.0)) throw ConfigError("divergence-map: s must be > 0");

  if (p.out_file.has_parent_path()) fs::create_directories(p.out_file.parent_path());
  std::ofstream f = open_out(p.out_file);
  f << "mu,sigma,m,s,dklsc,dkl_paper,w,pw,quadrature\n";
  std::size_t rows = 0;
  for (double mu : p.mu)
    for (double sigma : p.sigma)
      for (double m : p.m)
        for (double s : p.s) {
          const DiagGaussian<double> q{mu, 2.0 * std::log(sigma)};
          const TwoPeakPrior<double> prior{m, s, 0.5};
          f << format_g17(mu) << "," << format_g17(sigma) << "," << format_g17(m)
            << "," << format_g17(s) << "," << format_g17(dklsc(q, prior)) << ","
            << format_g17(dkl_paper(q, prior)) << ","
            << format_g17(w_surrogate(q, prior)) << ","
            << format_g17(pw_surrogate(q, prior)) << ","
            << format_g17(mixture_kl_quadrature(q, prior)) << "\n";
          ++rows;
        }
  f.close();
  out << "wrote " << rows << " rows to " << p.out_file.string() << "\n";
}

}  // namespace casvae
