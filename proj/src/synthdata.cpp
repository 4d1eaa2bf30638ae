#include "casvae/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "casvae/container.hpp"

namespace casvae {

namespace {

// Sérsic n=1 half-light constant: solves 1 − e^{−b}(1 + b) = 1/2.
constexpr double kExpHalfLight = 1.6783469900166605;

void validate_frame(int c, int h, int w) {
  if (c < 1 || h < 2 || w < 2)
    throw DimensionError("invalid image dims c=" + std::to_string(c) + " h=" +
                         std::to_string(h) + " w=" + std::to_string(w));
}

double channel_ratio(const SceneParams& p, int ch) {
  if (p.channel_ratios.empty()) return 1.0;
  return p.channel_ratios[static_cast<std::size_t>(ch)];
}

void validate_common(const SceneParams& p, int c, int h, int w) {
  validate_frame(c, h, w);
  if (!(p.flux > 0)) throw DataError("flux must be positive");
  if (!(p.psf_sigma > 0)) throw DataError("psf_sigma must be positive");
  if (!p.channel_ratios.empty() &&
      p.channel_ratios.size() != static_cast<std::size_t>(c))
    throw DimensionError("channel_ratios size mismatch");
  const double cx = w / 2.0 + p.jitter_x;
  const double cy = h / 2.0 + p.jitter_y;
  if (cx < 0 || cx > w || cy < 0 || cy > h)
    throw DataError("out-of-frame jitter (center at " + std::to_string(cx) + "," +
                    std::to_string(cy) + ")");
}

/// Unit-flux star profile sampled at pixel centers.
Eigen::VectorXd star_profile(const SceneParams& p, int h, int w) {
  const double cx = w / 2.0 + p.jitter_x;
  const double cy = h / 2.0 + p.jitter_y;
  const double s2 = p.psf_sigma * p.psf_sigma;
  const double amp = 1.0 / (2.0 * std::numbers::pi * s2);
  Eigen::VectorXd img(static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double dy = (y + 0.5) - cy;
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) - cx;
      img[static_cast<Eigen::Index>(y) * w + x] =
          amp * std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
    }
  }
  return img;
}

/// Unit-flux exponential elliptical profile, 4×4 subpixel midpoint averaging,
/// then separable Gaussian PSF convolution (zero-padded boundaries).
Eigen::VectorXd galaxy_profile(const SceneParams& p, int h, int w) {
  const double cx = w / 2.0 + p.jitter_x;
  const double cy = h / 2.0 + p.jitter_y;
  const double q = p.axis_ratio;
  const double re = p.half_light_radius;
  const double scale = kExpHalfLight / re;
  const double i0 = kExpHalfLight * kExpHalfLight /
                    (2.0 * std::numbers::pi * q * re * re);
  const double ct = std::cos(p.position_angle), st = std::sin(p.position_angle);

  Eigen::VectorXd img(static_cast<Eigen::Index>(h) * w);
  constexpr int kSub = 4;
  constexpr double kSubW = 1.0 / (kSub * kSub);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        const double dy = (y + (sy + 0.5) / kSub) - cy;
        for (int sx = 0; sx < kSub; ++sx) {
          const double dx = (x + (sx + 0.5) / kSub) - cx;
          const double xr = dx * ct + dy * st;
          const double yr = -dx * st + dy * ct;
          const double r = std::sqrt(xr * xr + (yr / q) * (yr / q));
          acc += std::exp(-scale * r);
        }
      }
      img[static_cast<Eigen::Index>(y) * w + x] = i0 * acc * kSubW;
    }
  }

  // Separable normalized Gaussian PSF.
  const int kr = std::max(1, static_cast<int>(std::ceil(4.0 * p.psf_sigma)));
  Eigen::VectorXd kernel(2 * kr + 1);
  for (int i = -kr; i <= kr; ++i)
    kernel[i + kr] = std::exp(-0.5 * i * i / (p.psf_sigma * p.psf_sigma));
  kernel /= kernel.sum();

  Eigen::VectorXd tmp = Eigen::VectorXd::Zero(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -kr; i <= kr; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) acc += kernel[i + kr] * img[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -kr; i <= kr; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) acc += kernel[i + kr] * tmp[yy * w + x];
      }
      out[y * w + x] = acc;
    }
  return out;
}

Eigen::VectorXf assemble_channels(const Eigen::VectorXd& unit, const SceneParams& p,
                                  int c, int h, int w) {
  Eigen::VectorXf img(static_cast<Eigen::Index>(c) * h * w);
  for (int ch = 0; ch < c; ++ch) {
    const double scale = p.flux * channel_ratio(p, ch);
    img.segment(static_cast<Eigen::Index>(ch) * h * w, static_cast<Eigen::Index>(h) * w) =
        (unit * scale).cast<float>();
  }
  return img;
}

/// Label-conditional source parameters; fixed draw order per call.
SceneParams sample_params(ObjectClass cls, int c, int h, int w, Rng& rng) {
  SceneParams p;
  p.object_class = cls;
  p.flux = std::exp(rng.uniform(std::log(800.0), std::log(2600.0)));
  p.psf_sigma = rng.uniform(1.0, 1.6) * h / 32.0;
  p.jitter_x = rng.uniform(-0.05, 0.05) * w;
  p.jitter_y = rng.uniform(-0.05, 0.05) * h;
  if (cls == ObjectClass::Galaxy) {
    p.half_light_radius = rng.uniform(2.2, 4.0) * h / 32.0;
    p.half_light_radius = std::max(p.half_light_radius, p.psf_sigma + 0.3);
    p.axis_ratio = rng.uniform(0.45, 1.0);
    p.position_angle = rng.uniform(0.0, std::numbers::pi);
  }
  // Mild class-dependent color: stars brighter in low channels, galaxies in
  // high ones, with per-channel lognormal scatter.
  const double slope = cls == ObjectClass::Star ? -0.10 : 0.10;
  p.channel_ratios.resize(static_cast<std::size_t>(c));
  const double mid = (c - 1) / 2.0;
  for (int ch = 0; ch < c; ++ch)
    p.channel_ratios[static_cast<std::size_t>(ch)] =
        std::exp(slope * (ch - mid) + 0.05 * rng.normal());
  return p;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Eigen::VectorXf render_star(const SceneParams& params, int c, int h, int w) {
  validate_common(params, c, h, w);
  return assemble_channels(star_profile(params, h, w), params, c, h, w);
}

Eigen::VectorXf render_galaxy(const SceneParams& params, int c, int h, int w) {
  validate_common(params, c, h, w);
  if (!(params.axis_ratio > 0.0 && params.axis_ratio <= 1.0))
    throw DataError("axis_ratio must lie in (0,1]");
  if (!(params.half_light_radius > params.psf_sigma))
    throw DataError("extended-source contract violated: half_light_radius <= psf_sigma");
  return assemble_channels(galaxy_profile(params, h, w), params, c, h, w);
}

Eigen::VectorXf add_noise_and_contaminant(Eigen::VectorXf image,
                                          const SceneParams& params, int c, int h,
                                          int w, double noise_sigma,
                                          double contamination_prob, Rng& rng) {
  validate_frame(c, h, w);
  if (image.size() != static_cast<Eigen::Index>(c) * h * w)
    throw DimensionError("image size does not match dims");
  if (noise_sigma < 0) throw DataError("noise_sigma must be >= 0");

  const double roll = rng.uniform();
  if (roll < contamination_prob) {
    const ObjectClass other = params.object_class == ObjectClass::Star
                                  ? ObjectClass::Galaxy
                                  : ObjectClass::Star;
    SceneParams cont = sample_params(other, c, h, w, rng);
    cont.flux = params.flux * rng.uniform(0.3, 0.7);
    const double radius = rng.uniform(0.26, 0.40) * std::min(h, w);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    cont.jitter_x = radius * std::cos(theta);
    cont.jitter_y = radius * std::sin(theta);
    // keep the secondary source inside the frame with a small margin
    const double margin = 2.0;
    cont.jitter_x = std::clamp(cont.jitter_x, -(w / 2.0 - margin), w / 2.0 - margin);
    cont.jitter_y = std::clamp(cont.jitter_y, -(h / 2.0 - margin), h / 2.0 - margin);
    image += other == ObjectClass::Star ? render_star(cont, c, h, w)
                                        : render_galaxy(cont, c, h, w);
  }
  if (noise_sigma > 0)
    for (Eigen::Index i = 0; i < image.size(); ++i)
      image[i] += static_cast<float>(noise_sigma * rng.normal());
  return image;
}

ImageSet generate_dataset(int n, double class_balance, double contamination_prob,
                          double noise_sigma, std::uint64_t seed, int c, int h,
                          int w) {
  if (n < 2) throw ConfigError("generate_dataset needs n >= 2");
  if (!(class_balance >= 0.0 && class_balance <= 1.0))
    throw ConfigError("class_balance must lie in [0,1]");
  if (!(contamination_prob >= 0.0 && contamination_prob <= 1.0))
    throw ConfigError("contamination_prob must lie in [0,1]");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  validate_frame(c, h, w);

  Rng master(seed);

  // Exact class counts, then a Fisher–Yates shuffle on a dedicated substream.
  const int n_gal = static_cast<int>(std::llround(n * class_balance));
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + n_gal, std::uint8_t(1));
  Rng shuffle_rng = master.fork(0xFFFFFFFFFFFFFFFFull);
  for (int i = n - 1; i >= 1; --i) {
    const int j = static_cast<int>(shuffle_rng.next_u64() %
                                   static_cast<std::uint64_t>(i + 1));
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
  }

  ImageSet set;
  set.n = n;
  set.c = c;
  set.h = h;
  set.w = w;
  set.images.resize(n, static_cast<Eigen::Index>(c) * h * w);
  for (int i = 0; i < n; ++i) {
    Rng rng_i = master.fork(static_cast<std::uint64_t>(i));
    const ObjectClass cls = labels[static_cast<std::size_t>(i)] == 1
                                ? ObjectClass::Galaxy
                                : ObjectClass::Star;
    SceneParams p = sample_params(cls, c, h, w, rng_i);
    Eigen::VectorXf img = cls == ObjectClass::Galaxy ? render_galaxy(p, c, h, w)
                                                     : render_star(p, c, h, w);
    set.images.row(i) = add_noise_and_contaminant(std::move(img), p, c, h, w,
                                                  noise_sigma, contamination_prob,
                                                  rng_i)
                            .transpose();
  }
  set.labels = std::move(labels);
  set.meta = {{"seed", std::to_string(seed)},
              {"n", std::to_string(n)},
              {"channels", std::to_string(c)},
              {"height", std::to_string(h)},
              {"width", std::to_string(w)},
              {"class_balance", fmt_double(class_balance)},
              {"contamination_prob", fmt_double(contamination_prob)},
              {"noise_sigma", fmt_double(noise_sigma)}};
  return set;
}

std::pair<ImageSet, NormStats> normalize(ImageSet set, std::optional<NormStats> stats) {
  const Eigen::Index per_ch = static_cast<Eigen::Index>(set.h) * set.w;
  NormStats ns;
  if (stats) {
    ns = std::move(*stats);
    if (ns.beta.size() != static_cast<std::size_t>(set.c) ||
        ns.mean.size() != static_cast<std::size_t>(set.c) ||
        ns.std_dev.size() != static_cast<std::size_t>(set.c))
      throw DimensionError("NormStats channel count mismatch");
  } else {
    ns.beta.resize(static_cast<std::size_t>(set.c));
    ns.mean.resize(static_cast<std::size_t>(set.c));
    ns.std_dev.resize(static_cast<std::size_t>(set.c));
    std::vector<float> scratch;
    for (int ch = 0; ch < set.c; ++ch) {
      scratch.clear();
      scratch.reserve(static_cast<std::size_t>(set.n) * per_ch);
      for (int i = 0; i < set.n; ++i) {
        const auto block = set.images.row(i).segment(ch * per_ch, per_ch);
        scratch.insert(scratch.end(), block.begin(), block.end());
      }
      auto median_of = [](std::vector<float>& v) {
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        return static_cast<double>(v[mid]);
      };
      const double med = median_of(scratch);
      for (float& v : scratch) v = std::abs(v - static_cast<float>(med));
      const double mad = median_of(scratch);
      ns.beta[static_cast<std::size_t>(ch)] = std::max(mad, 1e-12);

      // post-stretch moments in double
      double sum = 0.0, sumsq = 0.0;
      const double beta = ns.beta[static_cast<std::size_t>(ch)];
      const std::size_t count = static_cast<std::size_t>(set.n) * per_ch;
      for (int i = 0; i < set.n; ++i) {
        const auto block = set.images.row(i).segment(ch * per_ch, per_ch);
        for (Eigen::Index k = 0; k < per_ch; ++k) {
          const double y = std::asinh(block[k] / beta);
          sum += y;
          sumsq += y * y;
        }
      }
      const double mean = sum / static_cast<double>(count);
      const double var = sumsq / static_cast<double>(count) - mean * mean;
      if (!(var > 1e-18))
        throw DataError("zero-variance channel " + std::to_string(ch) +
                        " during normalization");
      ns.mean[static_cast<std::size_t>(ch)] = mean;
      ns.std_dev[static_cast<std::size_t>(ch)] = std::sqrt(var);
    }
  }

  for (int ch = 0; ch < set.c; ++ch) {
    const double beta = ns.beta[static_cast<std::size_t>(ch)];
    const double mean = ns.mean[static_cast<std::size_t>(ch)];
    const double inv_std = 1.0 / ns.std_dev[static_cast<std::size_t>(ch)];
    for (int i = 0; i < set.n; ++i) {
      auto block = set.images.row(i).segment(ch * per_ch, per_ch);
      for (Eigen::Index k = 0; k < per_ch; ++k)
        block[k] = static_cast<float>((std::asinh(block[k] / beta) - mean) * inv_std);
    }
  }
  set.meta.emplace_back("normalized", "1");
  return {std::move(set), std::move(ns)};
}

void save_set(const ImageSet& set, const std::filesystem::path& path) {
  std::vector<Section> sections;
  Section images;
  images.name = "images";
  images.dims = {static_cast<std::uint32_t>(set.n), static_cast<std::uint32_t>(set.c),
                 static_cast<std::uint32_t>(set.h), static_cast<std::uint32_t>(set.w)};
  images.dtype = kDtypeF32;
  images.payload.resize(static_cast<std::size_t>(set.images.size()) * 4);
  std::memcpy(images.payload.data(), set.images.data(), images.payload.size());
  sections.push_back(std::move(images));

  if (set.labels) {
    Section labels;
    labels.name = "labels";
    labels.dims = {static_cast<std::uint32_t>(set.n)};
    labels.dtype = kDtypeU8;
    labels.payload = *set.labels;
    sections.push_back(std::move(labels));
  }

  Section meta;
  meta.name = "meta";
  meta.dtype = kDtypeU8;
  std::string text;
  for (const auto& [k, v] : set.meta) text += k + "=" + v + "\n";
  meta.payload.assign(text.begin(), text.end());
  meta.dims = {static_cast<std::uint32_t>(meta.payload.size())};
  sections.push_back(std::move(meta));

  save_container(path, sections);
}

ImageSet load_set(const std::filesystem::path& path) {
  const std::vector<Section> sections = load_container(path);
  const Section& images = find_section(sections, "images");
  if (images.dims.size() != 4 || images.dtype != kDtypeF32)
    throw DataError("'images' section must be 4-D f32");
  ImageSet set;
  set.n = static_cast<int>(images.dims[0]);
  set.c = static_cast<int>(images.dims[1]);
  set.h = static_cast<int>(images.dims[2]);
  set.w = static_cast<int>(images.dims[3]);
  set.images.resize(set.n, set.pixels_per_image());
  std::memcpy(set.images.data(), images.payload.data(), images.payload.size());

  if (has_section(sections, "labels")) {
    const Section& labels = find_section(sections, "labels");
    if (labels.dtype != kDtypeU8 || labels.dims.size() != 1 ||
        labels.dims[0] != static_cast<std::uint32_t>(set.n))
      throw DataError("'labels' section must be u8 with length N");
    set.labels = labels.payload;
  }

  if (has_section(sections, "meta")) {
    const Section& meta = find_section(sections, "meta");
    std::string text(meta.payload.begin(), meta.payload.end());
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      const std::string line = text.substr(pos, eol == std::string::npos
                                                    ? std::string::npos
                                                    : eol - pos);
      pos = eol == std::string::npos ? text.size() : eol + 1;
      const std::size_t eq = line.find('=');
      if (eq != std::string::npos)
        set.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  return set;
}

std::vector<double> channel_second_moments(const Eigen::Ref<const Eigen::VectorXf>& image,
                                           int c, int h, int w) {
  validate_frame(c, h, w);
  if (image.size() != static_cast<Eigen::Index>(c) * h * w)
    throw DimensionError("image size does not match dims");
  std::vector<double> moments(static_cast<std::size_t>(c), 0.0);
  const Eigen::Index per_ch = static_cast<Eigen::Index>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    const auto block = image.segment(ch * per_ch, per_ch);
    double total = 0.0, mx = 0.0, my = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = std::max(0.0, static_cast<double>(block[y * w + x]));
        total += v;
        mx += v * x;
        my += v * y;
      }
    if (total <= 0.0) continue;
    mx /= total;
    my /= total;
    double m2 = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = std::max(0.0, static_cast<double>(block[y * w + x]));
        m2 += v * ((x - mx) * (x - mx) + (y - my) * (y - my));
      }
    // mean per-axis variance: trace/2, so an isotropic Gaussian gives σ².
    moments[static_cast<std::size_t>(ch)] = m2 / (2.0 * total);
  }
  return moments;
}

}  // namespace casvae
