#include "casvae/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "casvae/container.hpp"

namespace casvae {

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Batch size actually used: full-batch when the configured size reaches the
/// dataset, otherwise the dataset must cover at least two batches.
Eigen::Index resolve_batch(Eigen::Index n, int batch_size) {
  Eigen::Index batch = batch_size;
  if (batch >= n) {
    batch = n;
  } else if (n < 2 * batch) {
    throw TrainingError("insufficient data: " + std::to_string(n) +
                        " samples for batch size " + std::to_string(batch_size));
  }
  if (batch < 2) throw TrainingError("training needs at least 2 samples");
  return batch;
}

void shuffle_indices(std::vector<Eigen::Index>& order, Rng& rng) {
  for (Eigen::Index i = static_cast<Eigen::Index>(order.size()) - 1; i > 0; --i) {
    const Eigen::Index j =
        static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
}

MatrixX<float> gather_rows(const MatrixX<float>& data, const std::vector<Eigen::Index>& order,
                           Eigen::Index begin, Eigen::Index count) {
  MatrixX<float> out(count, data.cols());
  for (Eigen::Index i = 0; i < count; ++i) out.row(i) = data.row(order[begin + i]);
  return out;
}

MatrixX<float> draw_eps(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixX<float> eps(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      eps(i, j) = static_cast<float>(rng.normal());
  return eps;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr))
    throw ConfigError("lr must be finite and non-negative");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0))
    throw ConfigError("lambda weights must be non-negative");
  try {
    validate_prior(TwoPeakPrior<double>{cfg.prior_m, cfg.prior_s, cfg.prior_alpha});
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Phase 1: autoencoder
// ---------------------------------------------------------------------------

AeModel make_ae(int input_dim, int code_dim, std::uint64_t seed) {
  if (input_dim < 1 || code_dim < 1)
    throw ConfigError("make_ae: dimensions must be positive");
  Rng rng(seed);
  AeModel model;
  model.encoder.push_back(make_block<float>(input_dim, 256, true, Activation::Tanh, rng));
  model.encoder.push_back(make_block<float>(256, 64, true, Activation::Tanh, rng));
  model.encoder.push_back(make_block<float>(64, code_dim, true, Activation::Tanh, rng));
  model.decoder.push_back(make_block<float>(code_dim, 64, true, Activation::Tanh, rng));
  model.decoder.push_back(make_block<float>(64, 256, true, Activation::Tanh, rng));
  model.decoder.push_back(make_block<float>(256, input_dim, false, Activation::Identity, rng));
  model.input_dim = input_dim;
  model.code_dim = code_dim;
  return model;
}

double ae_loss(const AeModel& model, const MatrixX<float>& batch) {
  if (batch.cols() != model.input_dim)
    throw DimensionError("ae_loss: batch has " + std::to_string(batch.cols()) +
                         " features, model expects " + std::to_string(model.input_dim));
  MatrixX<float> recon = stack_infer(model.decoder, stack_infer(model.encoder, batch));
  return static_cast<double>((recon - batch).squaredNorm()) /
         (static_cast<double>(batch.rows()) * static_cast<double>(batch.cols()));
}

AeTrainResult train_ae(const MatrixX<float>& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  const Eigen::Index n = data.rows();
  const Eigen::Index batch = resolve_batch(n, cfg.batch_size);

  Rng root(cfg.seed);
  AeTrainResult result;
  result.model = make_ae(static_cast<int>(data.cols()), 30, root.fork(0).seed());
  AeModel& model = result.model;
  Rng shuffle_rng = root.fork(1);

  std::vector<ParamView<float>> params;
  append_stack_params(model.encoder, params);
  append_stack_params(model.decoder, params);
  Eigen::Index n_params = 0;
  for (const auto& p : params) n_params += p.size();
  AdamState<float> adam = AdamState<float>::init(n_params, static_cast<float>(cfg.lr));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  const Eigen::Index n_batches = n / batch;
  const float denom_scale = 2.0f / (static_cast<float>(batch) * static_cast<float>(data.cols()));

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) shuffle_indices(order, shuffle_rng);  // full batch: order is moot
    double epoch_loss = 0.0;
    for (Eigen::Index bi = 0; bi < n_batches; ++bi) {
      ++step;
      MatrixX<float> x = gather_rows(data, order, bi * batch, batch);
      StackCache<float> enc_cache, dec_cache;
      MatrixX<float> codes = stack_forward(model.encoder, x, BatchNormMode::Train, &enc_cache);
      MatrixX<float> recon = stack_forward(model.decoder, codes, BatchNormMode::Train, &dec_cache);
      const float loss = (recon - x).squaredNorm() /
                         (static_cast<float>(batch) * static_cast<float>(data.cols()));
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at step " + std::to_string(step));

      MatrixX<float> d_recon = denom_scale * (recon - x);
      StackGrads<float> dec_g = stack_backward(model.decoder, dec_cache, d_recon, BatchNormMode::Train);
      StackGrads<float> enc_g = stack_backward(model.encoder, enc_cache, dec_g.input, BatchNormMode::Train);

      std::vector<VectorX<float>> grads;
      append_stack_grads(model.encoder, enc_g, grads);
      append_stack_grads(model.decoder, dec_g, grads);
      adam_step(params, grads, adam);
      epoch_loss += loss;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.history.push_back({epoch_loss, epoch_loss, 0.0, 0.0});
  }
  model.trained = true;
  return result;
}

MatrixX<float> encode_codes(const AeModel& model, const MatrixX<float>& data) {
  if (!model.trained)
    throw TrainingError("autoencoder is not trained; codes would be meaningless");
  if (data.cols() != model.input_dim)
    throw DimensionError("encode_codes: input has " + std::to_string(data.cols()) +
                         " features, model expects " + std::to_string(model.input_dim));
  return stack_infer(model.encoder, data);
}

// ---------------------------------------------------------------------------
// Phase 2: cascade head
// ---------------------------------------------------------------------------

CasVaeTrainResult train_casvae(const AeModel& ae, const MatrixX<float>& data,
                               const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (!ae.trained)
    throw TrainingError("autoencoder must be trained before the cascade head");
  MatrixX<float> codes = encode_codes(ae, data);
  const Eigen::Index n = data.rows();
  const Eigen::Index batch = resolve_batch(n, cfg.batch_size);

  Rng root(cfg.seed);
  const TwoPeakPrior<float> prior{static_cast<float>(cfg.prior_m),
                                  static_cast<float>(cfg.prior_s),
                                  static_cast<float>(cfg.prior_alpha)};
  Rng init_rng = root.fork(0);
  CasVaeTrainResult result;
  result.head = make_head<float>(ae.code_dim, 16, prior, cfg.surrogate,
                                 static_cast<float>(cfg.lambda1),
                                 static_cast<float>(cfg.lambda2), init_rng);
  CasVaeHead& head = result.head;
  Rng shuffle_rng = root.fork(1);
  Rng eps_rng = root.fork(2);

  std::vector<ParamView<float>> params;
  append_stack_params(head.encoder, params);
  append_stack_params(head.decoder, params);
  Eigen::Index n_params = 0;
  for (const auto& p : params) n_params += p.size();
  AdamState<float> adam = AdamState<float>::init(n_params, static_cast<float>(cfg.lr));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  const Eigen::Index n_batches = n / batch;

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) shuffle_indices(order, shuffle_rng);  // full batch: order is moot
    EpochStats acc;
    for (Eigen::Index bi = 0; bi < n_batches; ++bi) {
      ++step;
      MatrixX<float> code_batch = gather_rows(codes, order, bi * batch, batch);
      MatrixX<float> eps = draw_eps(batch, 2, eps_rng);
      CasVaeGrads<float> grads;
      CasVaeLossParts<float> parts;
      if (cfg.pixel_space_recon) {
        MatrixX<float> pixel_batch = gather_rows(data, order, bi * batch, batch);
        parts = detail::casvae_loss_kernel(head, code_batch, eps, &grads, &ae.decoder,
                                           &pixel_batch);
      } else {
        parts = detail::casvae_loss_kernel(head, code_batch, eps, &grads);
      }
      if (!std::isfinite(parts.total))
        throw TrainingError("non-finite loss at step " + std::to_string(step));

      std::vector<VectorX<float>> grad_vecs;
      append_stack_grads(head.encoder, grads.encoder, grad_vecs);
      append_stack_grads(head.decoder, grads.decoder, grad_vecs);
      adam_step(params, grad_vecs, adam);

      acc.total += parts.total;
      acc.recon += parts.recon;
      acc.kl_z1 += parts.kl_z1;
      acc.surrogate_z2 += parts.surrogate_z2;
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    result.history.push_back(
        {acc.total * inv, acc.recon * inv, acc.kl_z1 * inv, acc.surrogate_z2 * inv});
  }
  head.trained = true;
  return result;
}

VectorX<double> casvae_score(const AeModel& ae, const CasVaeHead& head,
                             const MatrixX<float>& data, bool eval_noise,
                             std::uint64_t noise_seed) {
  if (!head.trained) throw TrainingError("cascade head is not trained");
  MatrixX<float> codes = encode_codes(ae, data);
  MatrixX<float> enc_out = stack_infer(head.encoder, codes);
  VectorX<double> scores(data.rows());
  Rng rng(noise_seed);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    double s = enc_out(i, 2);
    if (eval_noise) s += std::exp(enc_out(i, 3) / 2.0f) * rng.normal();
    scores(i) = s;
  }
  return scores;
}

MatrixX<double> casvae_latent_means(const AeModel& ae, const CasVaeHead& head,
                                    const MatrixX<float>& data) {
  if (!head.trained) throw TrainingError("cascade head is not trained");
  MatrixX<float> codes = encode_codes(ae, data);
  MatrixX<float> enc_out = stack_infer(head.encoder, codes);
  MatrixX<double> means(data.rows(), 2);
  means.col(0) = enc_out.col(0).cast<double>();
  means.col(1) = enc_out.col(2).cast<double>();
  return means;
}

// ---------------------------------------------------------------------------
// Single-phase VAE baseline
// ---------------------------------------------------------------------------

VanillaVae make_vanilla_vae(int input_dim, int latent_dim, std::uint64_t seed) {
  if (input_dim < 1 || latent_dim < 1)
    throw ConfigError("make_vanilla_vae: dimensions must be positive");
  Rng rng(seed);
  VanillaVae model;
  model.encoder.push_back(make_block<float>(input_dim, 256, true, Activation::Tanh, rng));
  model.encoder.push_back(make_block<float>(256, 64, true, Activation::Tanh, rng));
  model.encoder.push_back(
      make_block<float>(64, 2 * latent_dim, false, Activation::Identity, rng));
  model.decoder.push_back(make_block<float>(latent_dim, 64, true, Activation::Tanh, rng));
  model.decoder.push_back(make_block<float>(64, 256, true, Activation::Tanh, rng));
  model.decoder.push_back(make_block<float>(256, input_dim, false, Activation::Identity, rng));
  model.input_dim = input_dim;
  model.latent_dim = latent_dim;
  return model;
}

VanillaVaeTrainResult train_vanilla_vae(const MatrixX<float>& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  const Eigen::Index n = data.rows();
  const Eigen::Index batch = resolve_batch(n, cfg.batch_size);
  const Eigen::Index dim = data.cols();

  Rng root(cfg.seed);
  VanillaVaeTrainResult result;
  result.model = make_vanilla_vae(static_cast<int>(dim), 2, root.fork(0).seed());
  VanillaVae& model = result.model;
  const Eigen::Index latent = model.latent_dim;
  Rng shuffle_rng = root.fork(1);
  Rng eps_rng = root.fork(2);
  const float lambda1 = static_cast<float>(cfg.lambda1);
  const float lambda2 = static_cast<float>(cfg.lambda2);
  const TwoPeakPrior<float> prior{static_cast<float>(cfg.prior_m),
                                  static_cast<float>(cfg.prior_s),
                                  static_cast<float>(cfg.prior_alpha)};
  const Eigen::Index mixed_unit = cfg.mixed_prior_unit ? latent - 1 : latent;

  std::vector<ParamView<float>> params;
  append_stack_params(model.encoder, params);
  append_stack_params(model.decoder, params);
  Eigen::Index n_params = 0;
  for (const auto& p : params) n_params += p.size();
  AdamState<float> adam = AdamState<float>::init(n_params, static_cast<float>(cfg.lr));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  const Eigen::Index n_batches = n / batch;
  const float inv_b = 1.0f / static_cast<float>(batch);
  const float recon_scale = 1.0f / (static_cast<float>(batch) * static_cast<float>(dim));

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) shuffle_indices(order, shuffle_rng);  // full batch: order is moot
    EpochStats acc;
    for (Eigen::Index bi = 0; bi < n_batches; ++bi) {
      ++step;
      MatrixX<float> x = gather_rows(data, order, bi * batch, batch);
      StackCache<float> enc_cache, dec_cache;
      MatrixX<float> enc_out = stack_forward(model.encoder, x, BatchNormMode::Train, &enc_cache);

      MatrixX<float> mu(batch, latent), log_var(batch, latent);
      for (Eigen::Index j = 0; j < latent; ++j) {
        mu.col(j) = enc_out.col(2 * j);
        log_var.col(j) = enc_out.col(2 * j + 1);
      }
      MatrixX<float> eps = draw_eps(batch, latent, eps_rng);
      MatrixX<float> sigma_eps = ((log_var.array() / 2.0f).exp() * eps.array()).matrix();
      MatrixX<float> z = mu + sigma_eps;
      MatrixX<float> recon = stack_forward(model.decoder, z, BatchNormMode::Train, &dec_cache);

      const float recon_loss = (recon - x).squaredNorm() * recon_scale;
      float kl_sum = 0.0f, sur_sum = 0.0f;
      for (Eigen::Index i = 0; i < batch; ++i) {
        for (Eigen::Index j = 0; j < latent; ++j) {
          const DiagGaussian<float> q{mu(i, j), log_var(i, j)};
          if (j == mixed_unit)
            sur_sum += surrogate_value(cfg.surrogate, q, prior);
          else
            kl_sum += kl_std_normal(q);
        }
      }
      const float kl = kl_sum * inv_b;
      const float sur = sur_sum * inv_b;
      const float total = recon_loss + lambda1 * kl + lambda2 * sur;
      if (!std::isfinite(total))
        throw TrainingError("non-finite loss at step " + std::to_string(step));

      MatrixX<float> d_recon = 2.0f * recon_scale * (recon - x);
      StackGrads<float> dec_g = stack_backward(model.decoder, dec_cache, d_recon, BatchNormMode::Train);
      MatrixX<float> d_mu = dec_g.input;
      MatrixX<float> d_lv = (dec_g.input.array() * sigma_eps.array() / 2.0f).matrix();
      for (Eigen::Index i = 0; i < batch; ++i) {
        for (Eigen::Index j = 0; j < latent; ++j) {
          if (j == mixed_unit) {
            const SurrogateGrad<float> sg = surrogate_grad(
                cfg.surrogate, DiagGaussian<float>{mu(i, j), log_var(i, j)}, prior);
            d_mu(i, j) += lambda2 * inv_b * sg.d_mu;
            d_lv(i, j) += lambda2 * inv_b * sg.d_log_var;
          } else {
            d_mu(i, j) += lambda1 * inv_b * mu(i, j);
            d_lv(i, j) += lambda1 * inv_b * (std::exp(log_var(i, j)) - 1.0f) / 2.0f;
          }
        }
      }
      MatrixX<float> d_enc_out(batch, 2 * latent);
      for (Eigen::Index j = 0; j < latent; ++j) {
        d_enc_out.col(2 * j) = d_mu.col(j);
        d_enc_out.col(2 * j + 1) = d_lv.col(j);
      }
      StackGrads<float> enc_g = stack_backward(model.encoder, enc_cache, d_enc_out, BatchNormMode::Train);

      std::vector<VectorX<float>> grad_vecs;
      append_stack_grads(model.encoder, enc_g, grad_vecs);
      append_stack_grads(model.decoder, dec_g, grad_vecs);
      adam_step(params, grad_vecs, adam);

      acc.total += total;
      acc.recon += recon_loss;
      acc.kl_z1 += kl;
      acc.surrogate_z2 += sur;
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    result.history.push_back(
        {acc.total * inv, acc.recon * inv, acc.kl_z1 * inv, acc.surrogate_z2 * inv});
  }
  model.trained = true;
  return result;
}

MatrixX<double> vanilla_latent_means(const VanillaVae& model, const MatrixX<float>& data) {
  if (!model.trained) throw TrainingError("vanilla VAE is not trained");
  if (data.cols() != model.input_dim)
    throw DimensionError("vanilla_latent_means: feature count mismatch");
  MatrixX<float> enc_out = stack_infer(model.encoder, data);
  MatrixX<double> means(data.rows(), model.latent_dim);
  for (Eigen::Index j = 0; j < model.latent_dim; ++j)
    means.col(j) = enc_out.col(2 * j).cast<double>();
  return means;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void push_matrix(std::vector<Section>& out, const std::string& name, const MatrixX<float>& m) {
  Section s;
  s.name = name;
  s.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  s.dtype = kDtypeF32;
  s.payload.resize(sizeof(float) * static_cast<std::size_t>(m.size()));
  std::memcpy(s.payload.data(), m.data(), s.payload.size());
  out.push_back(std::move(s));
}

void push_vector(std::vector<Section>& out, const std::string& name, const VectorX<float>& v) {
  Section s;
  s.name = name;
  s.dims = {static_cast<std::uint32_t>(v.size())};
  s.dtype = kDtypeF32;
  s.payload.resize(sizeof(float) * static_cast<std::size_t>(v.size()));
  std::memcpy(s.payload.data(), v.data(), s.payload.size());
  out.push_back(std::move(s));
}

MatrixX<float> pull_matrix(const std::vector<Section>& sections, const std::string& name,
                           Eigen::Index rows, Eigen::Index cols) {
  const Section& s = find_section(sections, name);
  if (s.dtype != kDtypeF32 || s.dims.size() != 2 ||
      s.dims[0] != static_cast<std::uint32_t>(rows) ||
      s.dims[1] != static_cast<std::uint32_t>(cols))
    throw DataError("checkpoint tensor '" + name + "' has unexpected shape");
  MatrixX<float> m(rows, cols);
  std::memcpy(m.data(), s.payload.data(), s.payload.size());
  return m;
}

VectorX<float> pull_vector(const std::vector<Section>& sections, const std::string& name,
                           Eigen::Index size) {
  const Section& s = find_section(sections, name);
  if (s.dtype != kDtypeF32 || s.dims.size() != 1 ||
      s.dims[0] != static_cast<std::uint32_t>(size))
    throw DataError("checkpoint tensor '" + name + "' has unexpected shape");
  VectorX<float> v(size);
  std::memcpy(v.data(), s.payload.data(), s.payload.size());
  return v;
}

std::string stack_arch(const Stack<float>& stack) {
  std::string out;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(stack[i].dense.weight.cols()) + '>' +
           std::to_string(stack[i].dense.weight.rows()) + ':' +
           (stack[i].has_bn ? "bn" : "") + ':' + to_string(stack[i].act);
  }
  return out;
}

Stack<float> stack_from_arch(const std::string& arch) {
  Stack<float> stack;
  std::stringstream ss(arch);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto gt = item.find('>');
    const auto c1 = item.find(':', gt == std::string::npos ? 0 : gt);
    const auto c2 = c1 == std::string::npos ? std::string::npos : item.find(':', c1 + 1);
    if (gt == std::string::npos || c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("checkpoint has malformed architecture entry '" + item + "'");
    const int in_dim = std::stoi(item.substr(0, gt));
    const int out_dim = std::stoi(item.substr(gt + 1, c1 - gt - 1));
    const std::string bn_flag = item.substr(c1 + 1, c2 - c1 - 1);
    if (in_dim < 1 || out_dim < 1 || (!bn_flag.empty() && bn_flag != "bn"))
      throw DataError("checkpoint has malformed architecture entry '" + item + "'");
    DenseBnBlock<float> block;
    block.dense.weight = MatrixX<float>::Zero(out_dim, in_dim);
    block.dense.bias = VectorX<float>::Zero(out_dim);
    block.has_bn = bn_flag == "bn";
    if (block.has_bn) block.bn = BatchNormLayer<float>::identity(out_dim);
    block.act = activation_from_string(item.substr(c2 + 1));
    stack.push_back(std::move(block));
  }
  if (stack.empty()) throw DataError("checkpoint has an empty architecture string");
  return stack;
}

void save_stack(std::vector<Section>& out, const std::string& prefix, const Stack<float>& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const std::string base = prefix + std::to_string(i) + '.';
    push_matrix(out, base + "weight", stack[i].dense.weight);
    push_vector(out, base + "bias", stack[i].dense.bias);
    if (stack[i].has_bn) {
      push_vector(out, base + "gamma", stack[i].bn.gamma);
      push_vector(out, base + "beta", stack[i].bn.beta);
      push_vector(out, base + "running_mean", stack[i].bn.running_mean);
      push_vector(out, base + "running_var", stack[i].bn.running_var);
    }
  }
}

void load_stack(const std::vector<Section>& sections, const std::string& prefix,
                Stack<float>& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const std::string base = prefix + std::to_string(i) + '.';
    const Eigen::Index out_dim = stack[i].dense.weight.rows();
    const Eigen::Index in_dim = stack[i].dense.weight.cols();
    stack[i].dense.weight = pull_matrix(sections, base + "weight", out_dim, in_dim);
    stack[i].dense.bias = pull_vector(sections, base + "bias", out_dim);
    if (stack[i].has_bn) {
      stack[i].bn.gamma = pull_vector(sections, base + "gamma", out_dim);
      stack[i].bn.beta = pull_vector(sections, base + "beta", out_dim);
      stack[i].bn.running_mean = pull_vector(sections, base + "running_mean", out_dim);
      stack[i].bn.running_var = pull_vector(sections, base + "running_var", out_dim);
    }
  }
}

void push_meta(std::vector<Section>& out, const std::map<std::string, std::string>& meta) {
  std::string text;
  for (const auto& [k, v] : meta) text += k + '=' + v + '\n';
  Section s;
  s.name = "meta";
  s.dims = {static_cast<std::uint32_t>(text.size())};
  s.dtype = kDtypeU8;
  s.payload.assign(text.begin(), text.end());
  out.push_back(std::move(s));
}

std::map<std::string, std::string> pull_meta(const std::vector<Section>& sections) {
  const Section& s = find_section(sections, "meta");
  std::map<std::string, std::string> meta;
  std::stringstream ss(std::string(s.payload.begin(), s.payload.end()));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint meta line lacks '='");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

const std::string& meta_get(const std::map<std::string, std::string>& meta,
                            const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint meta is missing key '" + key + "'");
  return it->second;
}

void require_type(const std::map<std::string, std::string>& meta, const std::string& want) {
  const std::string& got = meta_get(meta, "type");
  if (got != want)
    throw DataError("checkpoint type mismatch: expected " + want + ", found " + got);
}

}  // namespace

void save_ae(const std::filesystem::path& path, const AeModel& model) {
  std::vector<Section> sections;
  push_meta(sections, {{"type", "ae"},
                       {"input_dim", std::to_string(model.input_dim)},
                       {"code_dim", std::to_string(model.code_dim)},
                       {"trained", model.trained ? "1" : "0"},
                       {"encoder", stack_arch(model.encoder)},
                       {"decoder", stack_arch(model.decoder)}});
  save_stack(sections, "encoder.", model.encoder);
  save_stack(sections, "decoder.", model.decoder);
  save_container(path, sections);
}

AeModel load_ae(const std::filesystem::path& path) {
  const auto sections = load_container(path);
  const auto meta = pull_meta(sections);
  require_type(meta, "ae");
  AeModel model;
  model.input_dim = std::stoi(meta_get(meta, "input_dim"));
  model.code_dim = std::stoi(meta_get(meta, "code_dim"));
  model.trained = meta_get(meta, "trained") == "1";
  model.encoder = stack_from_arch(meta_get(meta, "encoder"));
  model.decoder = stack_from_arch(meta_get(meta, "decoder"));
  load_stack(sections, "encoder.", model.encoder);
  load_stack(sections, "decoder.", model.decoder);
  return model;
}

void save_head(const std::filesystem::path& path, const CasVaeHead& head) {
  std::vector<Section> sections;
  push_meta(sections,
            {{"type", "casvae_head"},
             {"code_dim", std::to_string(head.code_dim)},
             {"trained", head.trained ? "1" : "0"},
             {"surrogate", to_string(head.surrogate)},
             {"prior_m", format_g17(head.prior.m)},
             {"prior_s", format_g17(head.prior.s)},
             {"prior_alpha", format_g17(head.prior.alpha)},
             {"lambda1", format_g17(head.lambda1)},
             {"lambda2", format_g17(head.lambda2)},
             {"encoder", stack_arch(head.encoder)},
             {"decoder", stack_arch(head.decoder)}});
  save_stack(sections, "encoder.", head.encoder);
  save_stack(sections, "decoder.", head.decoder);
  save_container(path, sections);
}

CasVaeHead load_head(const std::filesystem::path& path) {
  const auto sections = load_container(path);
  const auto meta = pull_meta(sections);
  require_type(meta, "casvae_head");
  CasVaeHead head;
  head.code_dim = std::stoi(meta_get(meta, "code_dim"));
  head.trained = meta_get(meta, "trained") == "1";
  head.surrogate = surrogate_kind_from_string(meta_get(meta, "surrogate"));
  head.prior.m = std::stof(meta_get(meta, "prior_m"));
  head.prior.s = std::stof(meta_get(meta, "prior_s"));
  head.prior.alpha = std::stof(meta_get(meta, "prior_alpha"));
  head.lambda1 = std::stof(meta_get(meta, "lambda1"));
  head.lambda2 = std::stof(meta_get(meta, "lambda2"));
  head.encoder = stack_from_arch(meta_get(meta, "encoder"));
  head.decoder = stack_from_arch(meta_get(meta, "decoder"));
  load_stack(sections, "encoder.", head.encoder);
  load_stack(sections, "decoder.", head.decoder);
  return head;
}

void save_vanilla_vae(const std::filesystem::path& path, const VanillaVae& model) {
  std::vector<Section> sections;
  push_meta(sections, {{"type", "vanilla_vae"},
                       {"input_dim", std::to_string(model.input_dim)},
                       {"latent_dim", std::to_string(model.latent_dim)},
                       {"trained", model.trained ? "1" : "0"},
                       {"encoder", stack_arch(model.encoder)},
                       {"decoder", stack_arch(model.decoder)}});
  save_stack(sections, "encoder.", model.encoder);
  save_stack(sections, "decoder.", model.decoder);
  save_container(path, sections);
}

VanillaVae load_vanilla_vae(const std::filesystem::path& path) {
  const auto sections = load_container(path);
  const auto meta = pull_meta(sections);
  require_type(meta, "vanilla_vae");
  VanillaVae model;
  model.input_dim = std::stoi(meta_get(meta, "input_dim"));
  model.latent_dim = std::stoi(meta_get(meta, "latent_dim"));
  model.trained = meta_get(meta, "trained") == "1";
  model.encoder = stack_from_arch(meta_get(meta, "encoder"));
  model.decoder = stack_from_arch(meta_get(meta, "decoder"));
  load_stack(sections, "encoder.", model.encoder);
  load_stack(sections, "decoder.", model.decoder);
  return model;
}

// ---------------------------------------------------------------------------
// Loss-history CSV
// ---------------------------------------------------------------------------

void export_history_csv(const std::filesystem::path& path,
                        const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,total,recon,kl_z1,surrogate_z2\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << ',' << format_g17(history[i].total) << ',' << format_g17(history[i].recon)
        << ',' << format_g17(history[i].kl_z1) << ','
        << format_g17(history[i].surrogate_z2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<EpochStats> import_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != "epoch,total,recon,kl_z1,surrogate_z2")
    throw DataError("history CSV has an unexpected header");
  std::vector<EpochStats> history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) throw DataError("history CSV row has wrong field count");
    history.push_back({std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3]),
                       std::stod(fields[4])});
  }
  return history;
}

}  // namespace casvae
