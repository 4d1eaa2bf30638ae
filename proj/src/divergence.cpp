#include "casvae/divergence.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace casvae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

/// Golub–Welsch: nodes are the eigenvalues of the symmetric tridiagonal
/// Jacobi matrix of the orthogonal-polynomial recurrence; weights are
/// μ₀·(first eigenvector component)². Eigen's self-adjoint solver returns
/// eigenvalues in ascending order, so output is deterministic.
template <typename OffDiag>
QuadratureNodes golub_welsch(int order, OffDiag offdiag, double mu0) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) jacobi(k - 1, k) = jacobi(k, k - 1) = offdiag(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  QuadratureNodes qn;
  qn.nodes = es.eigenvalues();
  qn.weights = mu0 * es.eigenvectors().row(0).transpose().array().square();
  return qn;
}

std::mutex g_node_cache_mutex;
std::map<std::pair<int, int>, QuadratureNodes> g_node_cache;  // (family, order)

QuadratureNodes cached_nodes(int family, int order,
                             QuadratureNodes (*make)(int order)) {
  std::lock_guard<std::mutex> lock(g_node_cache_mutex);
  auto it = g_node_cache.find({family, order});
  if (it == g_node_cache.end())
    it = g_node_cache.emplace(std::make_pair(family, order), make(order)).first;
  return it->second;
}

QuadratureNodes make_hermite(int order) {
  return golub_welsch(order, [](int k) { return std::sqrt(k / 2.0); },
                      std::sqrt(kPi));
}

QuadratureNodes make_legendre(int order) {
  return golub_welsch(order,
                      [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); }, 2.0);
}

}  // namespace

QuadratureNodes gauss_hermite_nodes(int order) {
  if (order < 1) throw ConfigError("quadrature order must be positive");
  return cached_nodes(0, order, &make_hermite);
}

QuadratureNodes gauss_legendre_nodes(int order) {
  if (order < 1) throw ConfigError("quadrature order must be positive");
  return cached_nodes(1, order, &make_legendre);
}

double mixture_kl_quadrature(const DiagGaussian<double>& q,
                             const TwoPeakPrior<double>& prior, int order) {
  if (order < 16) throw ConfigError("mixture_kl_quadrature needs order >= 16");
  // The oracle admits the degenerate m = 0 prior (mixture collapses to one
  // Gaussian) for diagnostics; training-facing code validates m > 0.
  if (!(prior.m >= 0.0)) throw DomainError("mixture_kl_quadrature needs m >= 0");
  if (!(prior.s > 0.0)) throw DomainError("mixture_kl_quadrature needs s > 0");
  if (!(prior.alpha > 0.0 && prior.alpha < 1.0))
    throw DomainError("mixture_kl_quadrature needs alpha in (0,1)");

  const double mu = q.mu;
  const double sig = q.sigma();
  const double m = prior.m, s = prior.s, alpha = prior.alpha;
  const double s2 = s * s;
  const double c = m / s2;

  const double log_norm = -0.5 * std::log(2.0 * kPi * s2);
  auto logmix = [&](double x) {
    const double la = std::log(alpha) + log_norm - (x + m) * (x + m) / (2.0 * s2);
    const double lb = std::log1p(-alpha) + log_norm - (x - m) * (x - m) / (2.0 * s2);
    const double hi = std::max(la, lb);
    return hi + std::log(std::exp(la - hi) + std::exp(lb - hi));
  };

  if (c * sig <= 1.0) {
    // Smooth regime: the log-mixture is polynomial-friendly over the
    // posterior's support; plain Gauss–Hermite after x = μ + √2σt.
    const QuadratureNodes gh = gauss_hermite_nodes(order);
    const double lq0 = -0.5 * std::log(2.0 * kPi * sig * sig);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
      const double x = mu + kSqrt2 * sig * gh.nodes[i];
      const double lq = lq0 - (x - mu) * (x - mu) / (2.0 * sig * sig);
      acc += gh.weights[i] * (lq - logmix(x));
    }
    return acc / std::sqrt(kPi);
  }

  // Sharp regime: log p(x) = const − (x²+m²)/(2s²) + c|x| + side term
  //   + softplus correction, so E_q[log q − log p] splits into closed-form
  // Gaussian moments plus a smooth remainder R integrated per side of the
  // kink at x = 0 (u = c·x below).
  const double closed =
      std::log(s / sig) - 0.5 + (mu * mu + sig * sig + m * m) / (2.0 * s2);
  const double e_abs = sig * std::sqrt(2.0 / kPi) * std::exp(-mu * mu / (2.0 * sig * sig)) +
                       mu * std::erf(mu / (kSqrt2 * sig));
  const double phi_pos = 0.5 * (1.0 + std::erf(mu / (kSqrt2 * sig)));
  const double side = std::log1p(-alpha) * phi_pos + std::log(alpha) * (1.0 - phi_pos);

  const double um = c * mu, us = c * sig;
  const double r_pos = alpha / (1.0 - alpha);
  const double r_neg = (1.0 - alpha) / alpha;
  auto gauss_u = [&](double u) {
    return std::exp(-(u - um) * (u - um) / (2.0 * us * us)) /
           (std::sqrt(2.0 * kPi) * us);
  };

  const QuadratureNodes gl = gauss_legendre_nodes(order);
  double remainder = 0.0;
  {  // x > 0 side: N(u)·log1p(r₊·e^{−2u}); window where both factors matter
    const double lo = std::max(0.0, um - 13.0 * us);
    const double hi = std::min(um + 13.0 * us, 0.5 * std::log(r_pos) + 23.0);
    if (hi > lo) {
      const double half = 0.5 * (hi - lo);
      const double mid = 0.5 * (hi + lo);
      for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
        const double u = half * gl.nodes[i] + mid;
        remainder += half * gl.weights[i] * gauss_u(u) * std::log1p(r_pos * std::exp(-2.0 * u));
      }
    }
  }
  {  // x < 0 side, mirrored
    const double lo = std::max(um - 13.0 * us, -0.5 * std::log(r_neg) - 23.0);
    const double hi = std::min(0.0, um + 13.0 * us);
    if (hi > lo) {
      const double half = 0.5 * (hi - lo);
      const double mid = 0.5 * (hi + lo);
      for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
        const double u = half * gl.nodes[i] + mid;
        remainder += half * gl.weights[i] * gauss_u(u) * std::log1p(r_neg * std::exp(2.0 * u));
      }
    }
  }
  return closed - (c * e_abs + side + remainder);
}

}  // namespace casvae
