#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casvae/divergence.hpp"
#include "casvae/nn.hpp"
#include "casvae/rng.hpp"

namespace casvae {

// ---------------------------------------------------------------------------
// Layer stacks: dense → optional batch-norm → activation, repeated.
//
// All batch matrices are row-per-sample (B×F).  Parameter flattening order is
// fixed and shared by the optimizer and the checkpoint format: for each block
// weight, bias, then (when present) gamma, beta, each in Eigen's native
// column-major element order.
// ---------------------------------------------------------------------------

template <typename S>
struct DenseBnBlock {
  DenseLayer<S> dense;
  bool has_bn = false;
  BatchNormLayer<S> bn;
  Activation act = Activation::Identity;
};

template <typename S>
using Stack = std::vector<DenseBnBlock<S>>;

template <typename S>
DenseBnBlock<S> make_block(Eigen::Index in_dim, Eigen::Index out_dim, bool with_bn,
                           Activation act, Rng& rng) {
  DenseBnBlock<S> block;
  block.dense = DenseLayer<S>::glorot(in_dim, out_dim, rng);
  block.has_bn = with_bn;
  if (with_bn) block.bn = BatchNormLayer<S>::identity(out_dim);
  block.act = act;
  return block;
}

/// Per-block intermediates kept by a forward pass so the matching backward
/// pass can be exact: the dense input, the dense output (= batch-norm input),
/// and the activation input (= batch-norm output, or the dense output when
/// the block has no batch-norm).
template <typename S>
struct StackCache {
  std::vector<MatrixX<S>> dense_in;
  std::vector<MatrixX<S>> bn_in;
  std::vector<MatrixX<S>> act_in;
};

/// Runs the stack on a batch.  Train mode updates batch-norm running
/// statistics (hence the mutable stack); inference mode never mutates.
template <typename S>
MatrixX<S> stack_forward(Stack<S>& stack, const MatrixX<S>& x, BatchNormMode mode,
                         StackCache<S>* cache = nullptr) {
  if (cache) {
    cache->dense_in.clear();
    cache->bn_in.clear();
    cache->act_in.clear();
  }
  MatrixX<S> h = x;
  for (auto& block : stack) {
    if (cache) cache->dense_in.push_back(h);
    MatrixX<S> u = dense_forward(h, block.dense);
    if (cache) cache->bn_in.push_back(u);
    MatrixX<S> v = block.has_bn ? batchnorm_forward(u, block.bn, mode) : std::move(u);
    if (cache) cache->act_in.push_back(v);
    h = activation_forward(block.act, v);
  }
  return h;
}

/// Inference forward on a const stack.  Safe: inference-mode batch-norm is
/// read-only, so the cast never results in a write.
template <typename S>
MatrixX<S> stack_infer(const Stack<S>& stack, const MatrixX<S>& x,
                       StackCache<S>* cache = nullptr) {
  return stack_forward(const_cast<Stack<S>&>(stack), x, BatchNormMode::Inference, cache);
}

/// Gradients for every tensor in a stack plus the gradient w.r.t. its input.
/// gamma/beta entries stay empty for blocks without batch-norm.
template <typename S>
struct StackGrads {
  std::vector<DenseGrads<S>> dense;
  std::vector<VectorX<S>> gamma, beta;
  MatrixX<S> input;
};

namespace detail {

/// Backward through inference-mode batch-norm (an affine map with constants
/// taken from the running statistics).
template <typename S>
BatchNormGrads<S> batchnorm_backward_inference(const MatrixX<S>& x,
                                               const BatchNormLayer<S>& layer,
                                               const MatrixX<S>& upstream) {
  if (x.cols() != layer.gamma.size() || upstream.rows() != x.rows() ||
      upstream.cols() != x.cols())
    throw DimensionError("batchnorm_backward_inference: shapes inconsistent with forward");
  Eigen::Array<S, 1, Eigen::Dynamic> inv_std =
      (layer.running_var.transpose().array() + layer.eps).rsqrt();
  MatrixX<S> xhat = x;
  xhat.rowwise() -= layer.running_mean.transpose();
  xhat.array().rowwise() *= inv_std;
  BatchNormGrads<S> g;
  g.gamma = (upstream.array() * xhat.array()).colwise().sum().transpose();
  g.beta = upstream.colwise().sum().transpose();
  g.input =
      (upstream.array().rowwise() * (inv_std * layer.gamma.transpose().array())).matrix();
  return g;
}

}  // namespace detail

/// Exact reverse pass matching stack_forward run in `mode` with `cache`.
template <typename S>
StackGrads<S> stack_backward(const Stack<S>& stack, const StackCache<S>& cache,
                             const MatrixX<S>& upstream, BatchNormMode mode) {
  if (cache.dense_in.size() != stack.size())
    throw DimensionError("stack_backward: cache depth does not match stack");
  StackGrads<S> grads;
  grads.dense.resize(stack.size());
  grads.gamma.resize(stack.size());
  grads.beta.resize(stack.size());
  MatrixX<S> d = upstream;
  for (std::size_t i = stack.size(); i-- > 0;) {
    const auto& block = stack[i];
    d = activation_backward(block.act, cache.act_in[i], d);
    if (block.has_bn) {
      BatchNormGrads<S> bn_g =
          mode == BatchNormMode::Train
              ? batchnorm_backward(cache.bn_in[i], block.bn, d)
              : detail::batchnorm_backward_inference(cache.bn_in[i], block.bn, d);
      grads.gamma[i] = std::move(bn_g.gamma);
      grads.beta[i] = std::move(bn_g.beta);
      d = std::move(bn_g.input);
    }
    grads.dense[i] = dense_backward(cache.dense_in[i], block.dense, d);
    d = std::move(grads.dense[i].input);
  }
  grads.input = std::move(d);
  return grads;
}

template <typename S>
Eigen::Index stack_param_count(const Stack<S>& stack) {
  Eigen::Index n = 0;
  for (const auto& block : stack) {
    n += block.dense.weight.size() + block.dense.bias.size();
    if (block.has_bn) n += block.bn.gamma.size() + block.bn.beta.size();
  }
  return n;
}

/// Appends mutable views over every trainable tensor, in the canonical order.
template <typename S>
void append_stack_params(Stack<S>& stack, std::vector<ParamView<S>>& out) {
  for (auto& block : stack) {
    out.emplace_back(block.dense.weight.data(), block.dense.weight.size());
    out.emplace_back(block.dense.bias.data(), block.dense.bias.size());
    if (block.has_bn) {
      out.emplace_back(block.bn.gamma.data(), block.bn.gamma.size());
      out.emplace_back(block.bn.beta.data(), block.bn.beta.size());
    }
  }
}

/// Flattens StackGrads in the same canonical order as append_stack_params.
template <typename S>
void append_stack_grads(const Stack<S>& stack, const StackGrads<S>& grads,
                        std::vector<VectorX<S>>& out) {
  if (grads.dense.size() != stack.size())
    throw DimensionError("append_stack_grads: gradient count does not match stack");
  for (std::size_t i = 0; i < stack.size(); ++i) {
    out.emplace_back(Eigen::Map<const VectorX<S>>(grads.dense[i].weight.data(),
                                                  grads.dense[i].weight.size()));
    out.push_back(grads.dense[i].bias);
    if (stack[i].has_bn) {
      out.push_back(grads.gamma[i]);
      out.push_back(grads.beta[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Training configuration (shared by every model)
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 0;
  SurrogateKind surrogate = SurrogateKind::DKLSC;
  double prior_m = 2.0;
  double prior_s = 1.0;
  double prior_alpha = 0.5;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool eval_noise = false;        // sample z2 instead of using its mean when scoring
  bool pixel_space_recon = false; // phase-2 reconstruction metric in pixel space
  // Single-phase VAE only: regularize the last latent unit with (surrogate,
  // prior) instead of the standard-normal KL (the "dklvae" baseline).
  bool mixed_prior_unit = false;
};

void validate_train_config(const TrainConfig& cfg);

/// Per-epoch mean loss decomposition logged by the VAE trainers.  The plain
/// autoencoder logs total == recon with the latent terms at zero.
struct EpochStats {
  double total = 0.0;
  double recon = 0.0;
  double kl_z1 = 0.0;
  double surrogate_z2 = 0.0;
};

// ---------------------------------------------------------------------------
// Phase 1: deterministic bottleneck autoencoder
// ---------------------------------------------------------------------------

struct AeModel {
  Stack<float> encoder;  // input → 256 → 64 → code, all batch-norm + tanh
  Stack<float> decoder;  // code → 64 → 256 → input, linear output layer
  int input_dim = 0;
  int code_dim = 0;
  bool trained = false;
};

AeModel make_ae(int input_dim, int code_dim, std::uint64_t seed);

/// Mean squared reconstruction error over the batch (inference mode).
double ae_loss(const AeModel& model, const MatrixX<float>& batch);

struct AeTrainResult {
  AeModel model;
  std::vector<EpochStats> history;
};

AeTrainResult train_ae(const MatrixX<float>& data, const TrainConfig& cfg);

/// Deterministic codes in [-1, 1] for a trained autoencoder (inference mode).
/// Throws TrainingError when the model has not been trained.
MatrixX<float> encode_codes(const AeModel& model, const MatrixX<float>& data);

// ---------------------------------------------------------------------------
// Reparameterization
// ---------------------------------------------------------------------------

template <typename S>
S reparameterize(const DiagGaussian<S>& q, S epsilon) {
  return q.mu + std::exp(q.log_var / S(2)) * epsilon;
}

template <typename S>
MatrixX<S> reparameterize(const MatrixX<S>& mu, const MatrixX<S>& log_var,
                          const MatrixX<S>& eps) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() ||
      mu.rows() != eps.rows() || mu.cols() != eps.cols())
    throw DimensionError("reparameterize: mu/log_var/eps shape mismatch");
  return mu.array() + (log_var.array() / S(2)).exp() * eps.array();
}

// ---------------------------------------------------------------------------
// Phase 2: two-latent variational head on frozen codes
//
// Encoder: code_dim → hidden (tanh) → 4 outputs laid out [μ1, logσ²1, μ2,
// logσ²2].  Decoder: (z1, z2) → hidden (tanh) → code_dim (linear).  Scalar-
// templated so finite-difference suites can instantiate double; the training
// data path uses float.
// ---------------------------------------------------------------------------

template <typename S>
struct CasVaeHeadT {
  Stack<S> encoder;
  Stack<S> decoder;
  TwoPeakPrior<S> prior{S(2), S(1), S(0.5)};
  SurrogateKind surrogate = SurrogateKind::DKLSC;
  S lambda1 = S(1);
  S lambda2 = S(1);
  int code_dim = 0;
  bool trained = false;
};

using CasVaeHead = CasVaeHeadT<float>;

template <typename S>
CasVaeHeadT<S> make_head(int code_dim, int hidden_dim, const TwoPeakPrior<S>& prior,
                         SurrogateKind surrogate, S lambda1, S lambda2, Rng& rng) {
  if (code_dim < 1 || hidden_dim < 1)
    throw ConfigError("make_head: dimensions must be positive");
  validate_prior(prior);
  CasVaeHeadT<S> head;
  head.encoder.push_back(make_block<S>(code_dim, hidden_dim, false, Activation::Tanh, rng));
  head.encoder.push_back(make_block<S>(hidden_dim, 4, false, Activation::Identity, rng));
  head.decoder.push_back(make_block<S>(2, hidden_dim, false, Activation::Tanh, rng));
  head.decoder.push_back(make_block<S>(hidden_dim, code_dim, false, Activation::Identity, rng));
  head.prior = prior;
  head.surrogate = surrogate;
  head.lambda1 = lambda1;
  head.lambda2 = lambda2;
  head.code_dim = code_dim;
  return head;
}

template <typename S>
struct CasVaeLossParts {
  S total = S(0);
  S recon = S(0);
  S kl_z1 = S(0);
  S surrogate_z2 = S(0);
};

template <typename S>
struct CasVaeGrads {
  StackGrads<S> encoder;
  StackGrads<S> decoder;
};

namespace detail {

/// Shared forward/backward kernel for the cascade head.  `eps` is the B×2
/// matrix of standard-normal draws used by the reparameterization, supplied
/// by the caller so the loss is a deterministic function of its arguments.
/// When `grads` is non-null the exact analytic gradients for every head
/// parameter are produced alongside the loss.
///
/// When `frozen_tail` is given, the head decoder output is pushed through it
/// in inference mode and the reconstruction error is measured against
/// `tail_target` instead of the input codes (pixel-space reconstruction
/// through a frozen decoder).  The tail's own parameters receive no updates;
/// only the gradient w.r.t. its input is chained.
template <typename S>
CasVaeLossParts<S> casvae_loss_kernel(const CasVaeHeadT<S>& head, const MatrixX<S>& codes,
                                      const MatrixX<S>& eps, CasVaeGrads<S>* grads,
                                      const Stack<S>* frozen_tail = nullptr,
                                      const MatrixX<S>* tail_target = nullptr) {
  if (codes.cols() != head.code_dim)
    throw DimensionError("casvae_loss: batch has " + std::to_string(codes.cols()) +
                         " code dims, head expects " + std::to_string(head.code_dim));
  if (eps.rows() != codes.rows() || eps.cols() != 2)
    throw DimensionError("casvae_loss: eps must be batch x 2");
  const Eigen::Index b = codes.rows();
  if (b < 1) throw DimensionError("casvae_loss: empty batch");

  auto& enc = const_cast<Stack<S>&>(head.encoder);  // no batch-norm: forward is read-only
  auto& dec = const_cast<Stack<S>&>(head.decoder);

  StackCache<S> enc_cache, dec_cache;
  MatrixX<S> enc_out =
      stack_forward(enc, codes, BatchNormMode::Inference, grads ? &enc_cache : nullptr);

  MatrixX<S> mu(b, 2), log_var(b, 2);
  mu.col(0) = enc_out.col(0);
  log_var.col(0) = enc_out.col(1);
  mu.col(1) = enc_out.col(2);
  log_var.col(1) = enc_out.col(3);

  MatrixX<S> sigma_eps = ((log_var.array() / S(2)).exp() * eps.array()).matrix();
  MatrixX<S> z = mu + sigma_eps;
  MatrixX<S> recon =
      stack_forward(dec, z, BatchNormMode::Inference, grads ? &dec_cache : nullptr);

  StackCache<S> tail_cache;
  const MatrixX<S>& target = frozen_tail ? *tail_target : codes;
  MatrixX<S> output =
      frozen_tail ? stack_infer(*frozen_tail, recon, grads ? &tail_cache : nullptr)
                  : recon;
  if (output.rows() != target.rows() || output.cols() != target.cols())
    throw DimensionError("casvae_loss: reconstruction target shape mismatch");

  CasVaeLossParts<S> parts;
  const S denom = static_cast<S>(b) * static_cast<S>(target.cols());
  parts.recon = (output - target).squaredNorm() / denom;

  S kl_sum = S(0), sur_sum = S(0);
  for (Eigen::Index i = 0; i < b; ++i) {
    kl_sum += kl_std_normal(DiagGaussian<S>{mu(i, 0), log_var(i, 0)});
    sur_sum += surrogate_value(head.surrogate, DiagGaussian<S>{mu(i, 1), log_var(i, 1)},
                               head.prior);
  }
  parts.kl_z1 = kl_sum / static_cast<S>(b);
  parts.surrogate_z2 = sur_sum / static_cast<S>(b);
  parts.total = parts.recon + head.lambda1 * parts.kl_z1 + head.lambda2 * parts.surrogate_z2;

  if (!grads) return parts;

  MatrixX<S> d_recon = S(2) / denom * (output - target);
  if (frozen_tail)
    d_recon = stack_backward(*frozen_tail, tail_cache, d_recon, BatchNormMode::Inference)
                  .input;
  grads->decoder = stack_backward(dec, dec_cache, d_recon, BatchNormMode::Inference);

  MatrixX<S> d_mu = grads->decoder.input;                                  // dL/dz → dμ
  MatrixX<S> d_lv = (grads->decoder.input.array() * sigma_eps.array() / S(2)).matrix();

  const S inv_b = S(1) / static_cast<S>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    d_mu(i, 0) += head.lambda1 * inv_b * mu(i, 0);
    d_lv(i, 0) += head.lambda1 * inv_b * (std::exp(log_var(i, 0)) - S(1)) / S(2);
    SurrogateGrad<S> sg = surrogate_grad(
        head.surrogate, DiagGaussian<S>{mu(i, 1), log_var(i, 1)}, head.prior);
    d_mu(i, 1) += head.lambda2 * inv_b * sg.d_mu;
    d_lv(i, 1) += head.lambda2 * inv_b * sg.d_log_var;
  }

  MatrixX<S> d_enc_out(b, 4);
  d_enc_out.col(0) = d_mu.col(0);
  d_enc_out.col(1) = d_lv.col(0);
  d_enc_out.col(2) = d_mu.col(1);
  d_enc_out.col(3) = d_lv.col(1);
  grads->encoder = stack_backward(enc, enc_cache, d_enc_out, BatchNormMode::Inference);
  return parts;
}

}  // namespace detail

/// Loss decomposition total = recon + λ1·KL(z1‖N(0,1)) + λ2·surrogate(z2),
/// each term a batch mean; recon additionally averages over code dimensions.
template <typename S>
CasVaeLossParts<S> casvae_loss(const CasVaeHeadT<S>& head, const MatrixX<S>& codes,
                               const MatrixX<S>& eps) {
  return detail::casvae_loss_kernel<S>(head, codes, eps, nullptr);
}

template <typename S>
CasVaeLossParts<S> casvae_loss_grad(const CasVaeHeadT<S>& head, const MatrixX<S>& codes,
                                    const MatrixX<S>& eps, CasVaeGrads<S>& grads) {
  return detail::casvae_loss_kernel(head, codes, eps, &grads);
}

// ---------------------------------------------------------------------------
// Cascade training and scoring
// ---------------------------------------------------------------------------

struct CasVaeTrainResult {
  CasVaeHead head;
  std::vector<EpochStats> history;
};

/// Trains the variational head on codes from a frozen, already-trained
/// autoencoder.  `data` holds raw images; codes are produced internally so
/// the cascade contract (phase 1 untouched by phase 2) is enforced here.
CasVaeTrainResult train_casvae(const AeModel& ae, const MatrixX<float>& data,
                               const TrainConfig& cfg);

/// Anomaly score = posterior mean μ2 per image (optionally one sampled z2).
VectorX<double> casvae_score(const AeModel& ae, const CasVaeHead& head,
                             const MatrixX<float>& data, bool eval_noise = false,
                             std::uint64_t noise_seed = 0);

/// Two-column [μ1, μ2] latent means for downstream manifold baselines.
MatrixX<double> casvae_latent_means(const AeModel& ae, const CasVaeHead& head,
                                    const MatrixX<float>& data);

// ---------------------------------------------------------------------------
// Single-phase VAE baseline on raw pixels
// ---------------------------------------------------------------------------

struct VanillaVae {
  Stack<float> encoder;  // input → 256 → 64 → 2·latent_dim, hidden BN + tanh
  Stack<float> decoder;  // latent_dim → 64 → 256 → input, linear output
  int input_dim = 0;
  int latent_dim = 0;
  bool trained = false;
};

VanillaVae make_vanilla_vae(int input_dim, int latent_dim, std::uint64_t seed);

struct VanillaVaeTrainResult {
  VanillaVae model;
  std::vector<EpochStats> history;
};

/// Standard-normal-prior VAE: total = recon + λ1·Σ_units KL(N(μ,σ²)‖N(0,1)).
VanillaVaeTrainResult train_vanilla_vae(const MatrixX<float>& data, const TrainConfig& cfg);

/// Posterior means (batch × latent_dim) for manifold baselines.
MatrixX<double> vanilla_latent_means(const VanillaVae& model, const MatrixX<float>& data);

// ---------------------------------------------------------------------------
// Checkpoints (tensor container format)
// ---------------------------------------------------------------------------

void save_ae(const std::filesystem::path& path, const AeModel& model);
AeModel load_ae(const std::filesystem::path& path);

void save_head(const std::filesystem::path& path, const CasVaeHead& head);
CasVaeHead load_head(const std::filesystem::path& path);

void save_vanilla_vae(const std::filesystem::path& path, const VanillaVae& model);
VanillaVae load_vanilla_vae(const std::filesystem::path& path);

/// Loss-history CSV with header epoch,total,recon,kl_z1,surrogate_z2.
void export_history_csv(const std::filesystem::path& path,
                        const std::vector<EpochStats>& history);
std::vector<EpochStats> import_history_csv(const std::filesystem::path& path);

}  // namespace casvae
