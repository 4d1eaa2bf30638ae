#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "casvae/synthdata.hpp"

using namespace casvae;
namespace fs = std::filesystem;

namespace {

double channel_sum(const Eigen::VectorXf& img, int ch, int h, int w) {
  return img.segment(static_cast<Eigen::Index>(ch) * h * w,
                     static_cast<Eigen::Index>(h) * w)
      .cast<double>()
      .sum();
}

/// Max relative asymmetry of channel 0 under x-flip, y-flip and transpose.
double max_asymmetry(const Eigen::VectorXf& img, int h, int w) {
  const double peak = static_cast<double>(img.head(h * w).maxCoeff());
  double worst = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = img[y * w + x];
      worst = std::max(worst, std::abs(v - img[y * w + (w - 1 - x)]));
      worst = std::max(worst, std::abs(v - img[(h - 1 - y) * w + x]));
      if (h == w) worst = std::max(worst, std::abs(v - img[x * w + y]));
    }
  return worst / peak;
}

int count_local_maxima(const Eigen::VectorXf& img, int h, int w, double thresh) {
  int count = 0;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const float v = img[y * w + x];
      if (!(v > thresh)) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          if (img[(y + dy) * w + (x + dx)] >= v) {
            is_max = false;
            break;
          }
        }
      if (is_max) ++count;
    }
  return count;
}

/// Rank-based AUC (probability a positive outscores a negative; ties 1/2).
double auc_of(const std::vector<double>& score, const std::vector<int>& label) {
  double num = 0.0;
  int n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (label[i] != 1) continue;
    ++n_pos;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (label[j] == 1) continue;
      if (score[i] > score[j])
        num += 1.0;
      else if (score[i] == score[j])
        num += 0.5;
    }
  }
  n_neg = static_cast<int>(score.size()) - n_pos;
  return num / (static_cast<double>(n_pos) * n_neg);
}

/// Compactness features: per-channel log second moment measured inside a
/// central window after zeroing pixels below a noise threshold. The primary
/// source always sits near the frame center, so the window isolates it from
/// any off-center contaminant.
std::vector<double> probe_features(const Eigen::VectorXf& img, int c, int h, int w,
                                   double noise_sigma) {
  Eigen::VectorXf work = img;
  const double thresh = 2.5 * noise_sigma;
  const double r_win = 0.25 * std::min(h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x + 0.5) - w / 2.0;
        const double dy = (y + 0.5) - h / 2.0;
        float& v = work[(static_cast<Eigen::Index>(ch) * h + y) * w + x];
        if (v < thresh || dx * dx + dy * dy > r_win * r_win) v = 0.0f;
      }
  std::vector<double> m = channel_second_moments(work, c, h, w);
  for (double& v : m) v = std::log(v + 1e-3);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("synthdata");

TEST_CASE("star on an odd frame peaks at the center and is 4-fold symmetric") {
  SceneParams p;
  p.flux = 1000.0;
  p.psf_sigma = 1.5;
  const int h = 33, w = 33;
  const Eigen::VectorXf img = render_star(p, 1, h, w);
  Eigen::Index argmax;
  img.maxCoeff(&argmax);
  CHECK(argmax == (h / 2) * w + (w / 2));
  CHECK(max_asymmetry(img, h, w) < 1e-6);
}

TEST_CASE("star pixel sum stays within 1% of flux for psf up to h/8") {
  SceneParams p;
  p.flux = 1000.0;
  p.psf_sigma = 4.0;  // = 32/8
  p.channel_ratios = {1.0, 0.7};
  const Eigen::VectorXf img = render_star(p, 2, 32, 32);
  CHECK(channel_sum(img, 0, 32, 32) == doctest::Approx(1000.0).epsilon(0.01));
  CHECK(channel_sum(img, 1, 32, 32) == doctest::Approx(700.0).epsilon(0.01));
}

TEST_CASE("star second central moment matches psf_sigma^2 within 5%") {
  SceneParams p;
  p.flux = 1000.0;
  p.psf_sigma = 1.2;
  const Eigen::VectorXf img = render_star(p, 1, 32, 32);
  const auto m = channel_second_moments(img, 1, 32, 32);
  CHECK(m[0] == doctest::Approx(1.2 * 1.2).epsilon(0.05));
}

TEST_CASE("round galaxy is symmetric within 1%") {
  SceneParams p;
  p.object_class = ObjectClass::Galaxy;
  p.flux = 1000.0;
  p.psf_sigma = 1.2;
  p.half_light_radius = 3.0;
  p.axis_ratio = 1.0;
  p.position_angle = 0.0;
  const Eigen::VectorXf img = render_galaxy(p, 1, 32, 32);
  CHECK(max_asymmetry(img, 32, 32) < 0.01);
}

TEST_CASE("galaxy second moment strictly exceeds the equal-flux star's") {
  SceneParams star;
  star.flux = 1000.0;
  star.psf_sigma = 1.2;
  SceneParams gal = star;
  gal.object_class = ObjectClass::Galaxy;
  gal.half_light_radius = 3.0;
  const auto ms = channel_second_moments(render_star(star, 1, 32, 32), 1, 32, 32);
  const auto mg = channel_second_moments(render_galaxy(gal, 1, 32, 32), 1, 32, 32);
  CHECK(mg[0] > ms[0]);
  CHECK(mg[0] > 4.0 * ms[0]);  // extended by construction, not marginally
}

TEST_CASE("galaxy flux is conserved within 2%") {
  SceneParams p;
  p.object_class = ObjectClass::Galaxy;
  p.flux = 1500.0;
  p.psf_sigma = 1.2;
  p.half_light_radius = 3.0;
  p.axis_ratio = 0.7;
  p.position_angle = 0.7;
  p.channel_ratios = {0.9, 1.1};
  const Eigen::VectorXf img = render_galaxy(p, 2, 32, 32);
  CHECK(channel_sum(img, 0, 32, 32) == doctest::Approx(1500.0 * 0.9).epsilon(0.02));
  CHECK(channel_sum(img, 1, 32, 32) == doctest::Approx(1500.0 * 1.1).epsilon(0.02));
}

TEST_CASE("renderer parameter validation") {
  const int c = 1, h = 32, w = 32;
  SceneParams p;
  p.flux = -1.0;
  CHECK_THROWS_AS((void)render_star(p, c, h, w), DataError);
  p.flux = 1000.0;
  p.jitter_x = 40.0;
  CHECK_THROWS_AS((void)render_star(p, c, h, w), DataError);
  p.jitter_x = 0.0;
  p.channel_ratios = {1.0, 2.0};
  CHECK_THROWS_AS((void)render_star(p, c, h, w), DimensionError);
  p.channel_ratios.clear();

  SceneParams g = p;
  g.object_class = ObjectClass::Galaxy;
  g.psf_sigma = 1.2;
  g.half_light_radius = 1.0;  // <= psf_sigma
  CHECK_THROWS_AS((void)render_galaxy(g, c, h, w), DataError);
  g.half_light_radius = 3.0;
  g.axis_ratio = 0.0;
  CHECK_THROWS_AS((void)render_galaxy(g, c, h, w), DataError);
  g.axis_ratio = 1.5;
  CHECK_THROWS_AS((void)render_galaxy(g, c, h, w), DataError);
}

TEST_CASE("zero noise and zero contamination leave the image untouched") {
  SceneParams p;
  p.flux = 1000.0;
  p.psf_sigma = 1.2;
  const Eigen::VectorXf img = render_star(p, 2, 16, 16);
  Rng rng(7);
  const Eigen::VectorXf out = add_noise_and_contaminant(img, p, 2, 16, 16, 0.0, 0.0, rng);
  CHECK(out == img);
}

TEST_CASE("noise std on blank frames matches noise_sigma within 2%") {
  const int h = 100, w = 100;  // 10^4 pixels
  const Eigen::VectorXf blank = Eigen::VectorXf::Zero(h * w);
  SceneParams p;
  Rng rng(11);
  const Eigen::VectorXf out =
      add_noise_and_contaminant(blank, p, 1, h, w, 3.0, 0.0, rng);
  const double mean = out.cast<double>().mean();
  const double var =
      (out.cast<double>().array() - mean).square().sum() / (out.size() - 1);
  CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.02));
  CHECK(std::abs(mean) < 0.1);
}

TEST_CASE("certain contamination produces two bright local maxima") {
  const int h = 32, w = 32;
  const double noise = 0.5;
  for (int trial = 0; trial < 25; ++trial) {
    for (const ObjectClass cls : {ObjectClass::Star, ObjectClass::Galaxy}) {
      SceneParams p;
      p.object_class = cls;
      p.flux = 1000.0;
      p.psf_sigma = 1.2;
      p.half_light_radius = 3.0;
      const Eigen::VectorXf img = cls == ObjectClass::Star
                                      ? render_star(p, 1, h, w)
                                      : render_galaxy(p, 1, h, w);
      Rng rng(1000 + static_cast<std::uint64_t>(trial) * 2 +
              (cls == ObjectClass::Galaxy ? 1 : 0));
      const Eigen::VectorXf out =
          add_noise_and_contaminant(img, p, 1, h, w, noise, 1.0, rng);
      CHECK(count_local_maxima(out, h, w, 5.0 * noise) >= 2);
    }
  }
}

TEST_CASE("generate_dataset: exact class balance, determinism, validation") {
  const ImageSet a = generate_dataset(100, 0.5, 0.1, 2.0, 42, 3, 32, 32);
  REQUIRE(a.labels.has_value());
  CHECK(std::count(a.labels->begin(), a.labels->end(), 1) == 50);
  CHECK(std::count(a.labels->begin(), a.labels->end(), 0) == 50);
  CHECK(a.images.allFinite());

  const ImageSet b = generate_dataset(100, 0.5, 0.1, 2.0, 42, 3, 32, 32);
  CHECK(a.images == b.images);
  CHECK(*a.labels == *b.labels);
  CHECK(a.meta == b.meta);

  const ImageSet d = generate_dataset(100, 0.5, 0.1, 2.0, 43, 3, 32, 32);
  CHECK(a.images != d.images);

  CHECK_THROWS_AS((void)generate_dataset(1, 0.5, 0.1, 2.0, 1, 3, 32, 32), ConfigError);
  CHECK_THROWS_AS((void)generate_dataset(10, 1.5, 0.1, 2.0, 1, 3, 32, 32), ConfigError);
  CHECK_THROWS_AS((void)generate_dataset(10, 0.5, -0.1, 2.0, 1, 3, 32, 32), ConfigError);
  CHECK_THROWS_AS((void)generate_dataset(10, 0.5, 0.1, -2.0, 1, 3, 32, 32), ConfigError);
}

TEST_CASE("class balance is respected off the 50% point") {
  const ImageSet s = generate_dataset(10, 0.3, 0.0, 1.0, 5, 1, 16, 16);
  CHECK(std::count(s.labels->begin(), s.labels->end(), 1) == 3);
}

TEST_CASE("star images are more compact than galaxy images (population 3-sigma)") {
  const ImageSet set = generate_dataset(400, 0.5, 0.1, 2.0, 9, 3, 32, 32);
  std::vector<double> star_m, gal_m;
  for (int i = 0; i < set.n; ++i) {
    const Eigen::VectorXf img = set.images.row(i).transpose();
    const auto m = channel_second_moments(img, set.c, set.h, set.w);
    const double mean_m = (m[0] + m[1] + m[2]) / 3.0;
    ((*set.labels)[static_cast<std::size_t>(i)] == 1 ? gal_m : star_m)
        .push_back(mean_m);
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var_of = [&](const std::vector<double>& v, double mu) {
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
  };
  const double ms = mean_of(star_m), mg = mean_of(gal_m);
  const double se = std::sqrt(var_of(star_m, ms) / static_cast<double>(star_m.size()) +
                              var_of(gal_m, mg) / static_cast<double>(gal_m.size()));
  CHECK(ms < mg);
  CHECK((mg - ms) / se > 3.0);
}

TEST_CASE("a linear probe on windowed second moments reaches AUC > 0.95") {
  const double noise = 2.0;
  const ImageSet set = generate_dataset(600, 0.5, 0.1, noise, 1234, 3, 32, 32);
  const int n_train = 400, n_test = set.n - n_train;

  Eigen::MatrixXd feats(set.n, set.c);
  for (int i = 0; i < set.n; ++i) {
    const Eigen::VectorXf img = set.images.row(i).transpose();
    const auto f = probe_features(img, set.c, set.h, set.w, noise);
    for (int j = 0; j < set.c; ++j) feats(i, j) = f[static_cast<std::size_t>(j)];
  }
  // standardize with train stats
  const Eigen::RowVectorXd mu = feats.topRows(n_train).colwise().mean();
  Eigen::RowVectorXd sd =
      ((feats.topRows(n_train).rowwise() - mu).array().square().colwise().sum() /
       (n_train - 1))
          .sqrt();
  feats = (feats.rowwise() - mu).array().rowwise() / sd.array();

  Eigen::VectorXd y(n_train);
  for (int i = 0; i < n_train; ++i) y[i] = (*set.labels)[static_cast<std::size_t>(i)];

  Eigen::VectorXd wvec = Eigen::VectorXd::Zero(set.c);
  double bias = 0.0;
  const auto xtr = feats.topRows(n_train);
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd z = xtr * wvec + Eigen::VectorXd::Constant(n_train, bias);
    const Eigen::VectorXd pr = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    const Eigen::VectorXd err = pr - y;
    wvec -= 0.5 * (xtr.transpose() * err) / n_train;
    bias -= 0.5 * err.mean();
  }

  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = n_train; i < set.n; ++i) {
    scores.push_back(feats.row(i) * wvec + bias);
    labels.push_back((*set.labels)[static_cast<std::size_t>(i)]);
  }
  const double auc = auc_of(scores, labels);
  INFO("probe AUC on ", n_test, " held-out images: ", auc);
  CHECK(auc > 0.95);
}

TEST_CASE("normalize standardizes each channel on the training split") {
  ImageSet set = generate_dataset(100, 0.5, 0.1, 2.0, 21, 2, 16, 16);
  auto [norm, stats] = normalize(std::move(set));
  REQUIRE(stats.beta.size() == 2);
  const Eigen::Index per_ch = static_cast<Eigen::Index>(norm.h) * norm.w;
  for (int ch = 0; ch < norm.c; ++ch) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < norm.n; ++i) {
      const auto block = norm.images.row(i).segment(ch * per_ch, per_ch);
      for (Eigen::Index k = 0; k < per_ch; ++k) {
        sum += block[k];
        sumsq += static_cast<double>(block[k]) * block[k];
      }
    }
    const double count = static_cast<double>(norm.n) * static_cast<double>(per_ch);
    const double mean = sum / count;
    const double sd = std::sqrt(sumsq / count - mean * mean);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(sd > 0.999);
    CHECK(sd < 1.001);
    CHECK(stats.std_dev[static_cast<std::size_t>(ch)] > 0.0);
  }
  CHECK(norm.meta.back() == std::pair<std::string, std::string>{"normalized", "1"});
}

TEST_CASE("normalize with provided stats reuses them exactly") {
  const ImageSet train = generate_dataset(80, 0.5, 0.1, 2.0, 31, 2, 16, 16);
  const ImageSet eval_set = generate_dataset(40, 0.5, 0.1, 2.0, 32, 2, 16, 16);
  auto [norm_train, stats] = normalize(train);
  auto [norm_eval1, s1] = normalize(eval_set, stats);
  auto [norm_eval2, s2] = normalize(eval_set, stats);
  CHECK(norm_eval1.images == norm_eval2.images);
  CHECK(s1.beta == stats.beta);
  CHECK(s1.mean == stats.mean);
  CHECK(s1.std_dev == stats.std_dev);
  // spot-check the transform against the formula
  const float x = eval_set.images(3, 5);
  const double expect =
      (std::asinh(x / stats.beta[0]) - stats.mean[0]) / stats.std_dev[0];
  CHECK(norm_eval1.images(3, 5) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("constant channel with provided stats maps to all zeros") {
  ImageSet set;
  set.n = 4;
  set.c = 1;
  set.h = set.w = 4;
  set.images = MatrixXf::Constant(4, 16, 2.5f);
  NormStats stats;
  stats.beta = {1.0};
  stats.mean = {std::asinh(2.5)};
  stats.std_dev = {1.0};
  auto [norm, ns] = normalize(std::move(set), stats);
  CHECK(norm.images.cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("zero-variance channel without stats is rejected") {
  ImageSet set;
  set.n = 4;
  set.c = 2;
  set.h = set.w = 4;
  set.images = MatrixXf::Random(4, 32);
  set.images.rightCols(16).setConstant(1.0f);  // channel 1 constant
  CHECK_THROWS_WITH_AS((void)normalize(std::move(set)),
                       doctest::Contains("zero-variance channel 1"), DataError);
}

TEST_CASE("image sets survive a save/load round trip bitwise") {
  const fs::path p = fs::temp_directory_path() / "casvae_test_set.cvt";
  const ImageSet set = generate_dataset(20, 0.5, 0.2, 1.5, 77, 2, 16, 16);
  save_set(set, p);
  const ImageSet back = load_set(p);
  CHECK(back.n == set.n);
  CHECK(back.c == set.c);
  CHECK(back.h == set.h);
  CHECK(back.w == set.w);
  CHECK(back.images == set.images);
  REQUIRE(back.labels.has_value());
  CHECK(*back.labels == *set.labels);
  CHECK(back.meta == set.meta);
  fs::remove(p);

  // label-free sets stay label-free
  ImageSet unlabeled = set;
  unlabeled.labels.reset();
  save_set(unlabeled, p);
  CHECK_FALSE(load_set(p).labels.has_value());
  fs::remove(p);
}

TEST_CASE("channel_second_moments validates its shape") {
  const Eigen::VectorXf img = Eigen::VectorXf::Zero(10);
  CHECK_THROWS_AS((void)channel_second_moments(img, 1, 4, 4), DimensionError);
}

TEST_SUITE_END();
