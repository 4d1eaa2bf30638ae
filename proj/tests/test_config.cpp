#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "casvae/config.hpp"

using namespace casvae;
namespace fs = std::filesystem;

TEST_SUITE("config") {

TEST_CASE("an empty config is the documented default") {
  const RunConfig cfg = parse_run_config_text("");
  CHECK(cfg.method == "casvae");
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(cfg.n_train == 4000);
  CHECK(cfg.n_eval == 1000);
  CHECK(cfg.balance == 0.5);
  CHECK(cfg.contamination == 0.1);
  CHECK(cfg.noise_sigma == 2.0);
  CHECK(cfg.channels == 3);
  CHECK(cfg.height == 32);
  CHECK(cfg.width == 32);
  CHECK(cfg.data_seed == 42);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.epochs == 30);
  CHECK(cfg.train.surrogate == SurrogateKind::DKL);
  CHECK(cfg.train.prior_m == 2.0);
  CHECK(cfg.train.prior_s == 1.0);
  CHECK(cfg.train.prior_alpha == 0.5);
  CHECK(cfg.isomap_k == 10);
  CHECK(cfg.isomap_max_points == 2000);
}

TEST_CASE("keys, comments, and whitespace parse as documented") {
  const std::string text =
      "# full-line comment\n"
      "\n"
      "method = vae_pca\n"
      "lr=0.01            # trailing comment\n"
      "  seeds = 3, 5 ,8  \n"
      "epochs = 7\n"
      "surrogate = pw\n"
      "eval_noise = true\n";
  const RunConfig cfg = parse_run_config_text(text);
  CHECK(cfg.method == "vae_pca");
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 5, 8});
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.surrogate == SurrogateKind::PW);
  CHECK(cfg.train.eval_noise);
}

TEST_CASE("unknown, duplicate, and malformed keys are rejected with the line") {
  CHECK_THROWS_WITH_AS(parse_run_config_text("wibble = 3\n"),
                       doctest::Contains("unknown key 'wibble'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("lr = 1\nlr = 2\n"),
                       doctest::Contains("line 2: duplicate key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("just words\n"),
                       doctest::Contains("expected key=value"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("= 5\n"), doctest::Contains("empty key"),
                       ConfigError);
}

TEST_CASE("values are validated before any work") {
  CHECK_THROWS_AS(parse_run_config_text("lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("epochs = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("epochs = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("seed = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("method = svm\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("surrogate = cosine\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("balance = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("contamination = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("noise_sigma = nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("height = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("prior_s = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("prior_alpha = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("batch_size = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("isomap_k = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("seeds = \n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("eval_noise = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("train_file = only_train.cvt\n"), ConfigError);
}

TEST_CASE("serialize and parse round-trip every field exactly") {
  RunConfig cfg;
  cfg.method = "dklvae_isomap";
  cfg.out_dir = "artifacts/run7";
  cfg.seeds = {11, 2, 2};
  cfg.train_file = "data/train.cvt";
  cfg.eval_file = "data/eval.cvt";
  cfg.n_train = 123;
  cfg.n_eval = 45;
  cfg.balance = 0.37;
  cfg.contamination = 0.015;
  cfg.noise_sigma = 1.75;
  cfg.channels = 1;
  cfg.height = 16;
  cfg.width = 24;
  cfg.data_seed = 991;
  cfg.train.seed = 17;
  cfg.train.lr = 0.00031;
  cfg.train.batch_size = 37;
  cfg.train.epochs = 4;
  cfg.train.surrogate = SurrogateKind::W;
  cfg.train.prior_m = 1.25;
  cfg.train.prior_s = 0.8;
  cfg.train.prior_alpha = 0.41;
  cfg.train.lambda1 = 0.9;
  cfg.train.lambda2 = 1.7;
  cfg.train.eval_noise = true;
  cfg.train.pixel_space_recon = true;
  cfg.isomap_k = 7;
  cfg.isomap_max_points = 500;

  const std::string text = serialize_run_config(cfg);
  const RunConfig back = parse_run_config_text(text);
  CHECK(back.method == cfg.method);
  CHECK(back.out_dir == cfg.out_dir);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.train_file == cfg.train_file);
  CHECK(back.eval_file == cfg.eval_file);
  CHECK(back.n_train == cfg.n_train);
  CHECK(back.n_eval == cfg.n_eval);
  CHECK(back.balance == cfg.balance);
  CHECK(back.contamination == cfg.contamination);
  CHECK(back.noise_sigma == cfg.noise_sigma);
  CHECK(back.channels == cfg.channels);
  CHECK(back.height == cfg.height);
  CHECK(back.width == cfg.width);
  CHECK(back.data_seed == cfg.data_seed);
  CHECK(back.train.seed == cfg.train.seed);
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.train.batch_size == cfg.train.batch_size);
  CHECK(back.train.epochs == cfg.train.epochs);
  CHECK(back.train.surrogate == cfg.train.surrogate);
  CHECK(back.train.prior_m == cfg.train.prior_m);
  CHECK(back.train.prior_s == cfg.train.prior_s);
  CHECK(back.train.prior_alpha == cfg.train.prior_alpha);
  CHECK(back.train.lambda1 == cfg.train.lambda1);
  CHECK(back.train.lambda2 == cfg.train.lambda2);
  CHECK(back.train.eval_noise == cfg.train.eval_noise);
  CHECK(back.train.pixel_space_recon == cfg.train.pixel_space_recon);
  CHECK(back.isomap_k == cfg.isomap_k);
  CHECK(back.isomap_max_points == cfg.isomap_max_points);

  // Serialization is a fixed point: same text after one round trip.
  CHECK(serialize_run_config(back) == text);
}

TEST_CASE("config files load and save through the filesystem") {
  const fs::path dir = fs::temp_directory_path() / "casvae_config_test";
  fs::create_directories(dir);
  RunConfig cfg;
  cfg.train.lr = 0.025;
  cfg.method = "vae_isomap";
  save_run_config(cfg, dir / "run.cfg");
  const RunConfig back = load_run_config(dir / "run.cfg");
  CHECK(back.train.lr == 0.025);
  CHECK(back.method == "vae_isomap");
  CHECK_THROWS_AS(load_run_config(dir / "absent.cfg"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("method names round-trip and reject strangers") {
  const Method all[] = {Method::CasVae, Method::VaePca, Method::VaeIsomap,
                        Method::DklVaePca, Method::DklVaeIsomap};
  for (Method m : all) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("kmeans"), ConfigError);
}

TEST_CASE("grid axes form a Cartesian product, last axis fastest") {
  const GridSpec grid = parse_grid_text(
      "lr = 0.1, 0.01\n"
      "surrogate = dkl, w, pw\n");
  CHECK(grid_size(grid) == 6);
  CHECK(grid_point_values(grid, 0) == std::vector<std::string>{"0.1", "dkl"});
  CHECK(grid_point_values(grid, 1) == std::vector<std::string>{"0.1", "w"});
  CHECK(grid_point_values(grid, 2) == std::vector<std::string>{"0.1", "pw"});
  CHECK(grid_point_values(grid, 3) == std::vector<std::string>{"0.01", "dkl"});
  CHECK(grid_point_values(grid, 5) == std::vector<std::string>{"0.01", "pw"});
  CHECK_THROWS_AS(grid_point_values(grid, 6), ConfigError);

  const RunConfig base;
  const RunConfig p4 = grid_point(base, grid, 4);
  CHECK(p4.train.lr == 0.01);
  CHECK(p4.train.surrogate == SurrogateKind::W);
  CHECK(p4.method == base.method);  // untouched keys inherit the base

  const GridSpec empty = parse_grid_text("# nothing\n");
  CHECK(grid_size(empty) == 1);
  CHECK(grid_point_values(empty, 0).empty());
  const RunConfig same = grid_point(base, empty, 0);
  CHECK(serialize_run_config(same) == serialize_run_config(base));
}

TEST_CASE("grid files reject bad axes") {
  CHECK_THROWS_WITH_AS(parse_grid_text("out_dir = a, b\n"),
                       doctest::Contains("cannot be a grid axis"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_grid_text("seeds = 0, 1\n"),
                       doctest::Contains("cannot be a grid axis"), ConfigError);
  CHECK_THROWS_AS(parse_grid_text("mystery = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_grid_text("lr = 1\nlr = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_grid_text("lr = 1,,2\n"), ConfigError);
  // Bad values surface when the point is applied, not at grid parse time.
  const GridSpec grid = parse_grid_text("epochs = 1, zero\n");
  const RunConfig base;
  CHECK(grid_point(base, grid, 0).train.epochs == 1);
  CHECK_THROWS_AS(grid_point(base, grid, 1), ConfigError);
}

}  // TEST_SUITE
