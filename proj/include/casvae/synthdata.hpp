#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "casvae/errors.hpp"
#include "casvae/nn.hpp"
#include "casvae/rng.hpp"

namespace casvae {

enum class ObjectClass : std::uint8_t { Star = 0, Galaxy = 1 };

/// Parameters of one rendered source. Galaxies are exponential (Sérsic n=1)
/// elliptical profiles; stars are isotropic Gaussian PSF spots.
struct SceneParams {
  ObjectClass object_class = ObjectClass::Star;
  double flux = 1000.0;             // total counts across one channel at ratio 1
  double jitter_x = 0.0;            // center offset from frame center, pixels
  double jitter_y = 0.0;
  double psf_sigma = 1.2;           // pixels
  double half_light_radius = 3.0;   // pixels; galaxies only, must exceed psf_sigma
  double axis_ratio = 1.0;          // (0, 1]
  double position_angle = 0.0;      // radians
  std::vector<double> channel_ratios;  // per-channel flux multipliers; empty = all 1
};

/// A batch of images in flat row-major layout: one image per row, columns
/// ordered channel-major (c, y, x) — exactly the container payload order.
struct ImageSet {
  int n = 0, c = 0, h = 0, w = 0;
  MatrixXf images;  // N × (C·H·W)
  std::optional<std::vector<std::uint8_t>> labels;  // 0 = star, 1 = galaxy
  std::vector<std::pair<std::string, std::string>> meta;  // ordered key=value

  Eigen::Index pixels_per_image() const {
    return static_cast<Eigen::Index>(c) * h * w;
  }
};

/// Per-channel normalization parameters, computed on the training split.
struct NormStats {
  std::vector<double> beta;     // asinh softening
  std::vector<double> mean;     // post-stretch mean
  std::vector<double> std_dev;  // post-stretch std (> 0)
};

/// Renders a star: isotropic Gaussian PSF spot at (W/2 + jitter_x,
/// H/2 + jitter_y) in pixel units, pixel sum ≈ flux · channel_ratio.
Eigen::VectorXf render_star(const SceneParams& params, int c, int h, int w);

/// Renders a galaxy: exponential elliptical profile (4×4 subpixel averaging
/// against the central cusp) convolved with the Gaussian PSF.
Eigen::VectorXf render_galaxy(const SceneParams& params, int c, int h, int w);

/// Adds i.i.d. Gaussian background noise; with probability contamination_prob
/// first adds an off-center source of the *opposite* class at 30–70% of the
/// primary's flux. `params` describes the primary source (class and flux
/// anchor the contaminant). Draw order from `rng` is fixed, so output is a
/// pure function of (image, params, rng state).
Eigen::VectorXf add_noise_and_contaminant(Eigen::VectorXf image,
                                          const SceneParams& params, int c, int h,
                                          int w, double noise_sigma,
                                          double contamination_prob, Rng& rng);

/// Deterministic dataset generation: image i is drawn entirely from the
/// substream fork(seed, i), so output is bit-identical per seed regardless
/// of generation order. class_balance is the galaxy fraction; counts match
/// it within ±1 and are shuffled.
ImageSet generate_dataset(int n, double class_balance, double contamination_prob,
                          double noise_sigma, std::uint64_t seed, int c, int h,
                          int w);

/// Per-channel asinh(x/β) stretch followed by standardization. Without
/// `stats`, β (median absolute deviation), mean and std are computed from
/// `set` (training split) and returned; with `stats`, the given values are
/// reused exactly (eval split).
std::pair<ImageSet, NormStats> normalize(ImageSet set,
                                         std::optional<NormStats> stats = {});

/// CVT1-backed persistence. Sections: "images" (f32, dims N,C,H,W),
/// optional "labels" (u8, dims N), "meta" (u8 key=value text).
void save_set(const ImageSet& set, const std::filesystem::path& path);
ImageSet load_set(const std::filesystem::path& path);

/// Flux-weighted mean per-axis central second moment (px²) of each channel's
/// positive part (trace/2, so an isotropic Gaussian of width σ gives σ²);
/// the star/galaxy compactness statistic used by tests and probes.
std::vector<double> channel_second_moments(const Eigen::Ref<const Eigen::VectorXf>& image,
                                           int c, int h, int w);

}  // namespace casvae
