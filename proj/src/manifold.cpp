#include "casvae/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "casvae/rng.hpp"

namespace casvae {

namespace {

struct PowerResult {
  Eigen::VectorXd vec;
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Power iteration toward the eigenvalue of largest magnitude. The start
/// vector comes from a fixed-seed stream so results are deterministic; the
/// sign is canonicalized so the largest-magnitude component is positive.
PowerResult power_iteration(const Eigen::MatrixXd& a, int max_iters = 1000,
                            double tol = 1e-8) {
  const Eigen::Index n = a.rows();
  Rng rng(0x5CA1AB1Eull);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();

  PowerResult out;
  for (int it = 1; it <= max_iters; ++it) {
    const Eigen::VectorXd w = a * v;
    const double lambda = v.dot(w);
    const double res = (w - lambda * v).norm() /
                       std::max(std::abs(lambda), 1e-300);
    out.iterations = it;
    out.value = lambda;
    out.residual = res;
    if (res < tol) {
      out.converged = true;
      break;
    }
    const double norm = w.norm();
    if (norm == 0.0) break;  // v landed in the null space; lambda = 0 reported
    v = w / norm;
  }
  Eigen::Index imax;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0.0) v = -v;
  out.vec = std::move(v);
  return out;
}

Eigen::MatrixXd centered(const Eigen::Ref<const Eigen::MatrixXd>& x,
                         Eigen::RowVectorXd* mean_out = nullptr) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  if (mean_out) *mean_out = mean;
  return x.rowwise() - mean;
}

}  // namespace

PcaModel pca_fit(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.rows() < 2) throw DimensionError("pca needs at least 2 points");
  PcaModel model;
  const Eigen::MatrixXd xc = centered(x, &model.mean);
  const Eigen::MatrixXd cov =
      (xc.transpose() * xc) / static_cast<double>(x.rows() - 1);
  if (!(cov.trace() > 0.0)) throw DataError("zero-variance data in pca");
  const PowerResult top = power_iteration(cov);
  model.direction = top.vec;
  model.eigenvalue = top.value;
  return model;
}

Eigen::VectorXd pca_project(const PcaModel& model,
                            const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.cols() != model.direction.size())
    throw DimensionError("pca dimension mismatch");
  return (x.rowwise() - model.mean) * model.direction;
}

Embedding1D pca_1d(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.rows() < 2) throw DimensionError("pca needs at least 2 points");
  Eigen::RowVectorXd mean;
  const Eigen::MatrixXd xc = centered(x, &mean);
  const Eigen::MatrixXd cov =
      (xc.transpose() * xc) / static_cast<double>(x.rows() - 1);
  if (!(cov.trace() > 0.0)) throw DataError("zero-variance data in pca");
  const PowerResult top = power_iteration(cov);

  Embedding1D emb;
  emb.coords = xc * top.vec;
  emb.method = "pca";
  emb.iterations = top.iterations;
  emb.residual = top.residual;
  emb.converged = top.converged;
  emb.eigenvalue = top.value;
  return emb;
}

NeighborGraph knn_graph(const Eigen::Ref<const Eigen::MatrixXd>& x, int k) {
  const int n = static_cast<int>(x.rows());
  if (k < 1) throw ConfigError("knn_graph needs k >= 1");
  if (k >= n)
    throw ConfigError("knn_graph needs k < n (got k=" + std::to_string(k) +
                      ", n=" + std::to_string(n) + ")");

  NeighborGraph g;
  g.n = n;
  g.adj.assign(static_cast<std::size_t>(n), {});

  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[c++] = {(x.row(i) - x.row(j)).norm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int t = 0; t < k; ++t) {
      const auto [dist, j] = cand[static_cast<std::size_t>(t)];
      g.adj[static_cast<std::size_t>(i)].emplace_back(j, dist);
      g.adj[static_cast<std::size_t>(j)].emplace_back(i, dist);
    }
  }
  // dedupe the unioned lists
  for (auto& lst : g.adj) {
    std::sort(lst.begin(), lst.end());
    lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
  }
  return g;
}

Eigen::MatrixXd geodesics(const NeighborGraph& graph) {
  const int n = graph.n;
  if (n < 1) throw DimensionError("empty graph");

  // connectivity first, so failure is deterministic and informative
  std::vector<int> component(static_cast<std::size_t>(n), -1);
  std::vector<int> sizes;
  for (int start = 0; start < n; ++start) {
    if (component[static_cast<std::size_t>(start)] != -1) continue;
    const int id = static_cast<int>(sizes.size());
    int size = 0;
    std::vector<int> stack{start};
    component[static_cast<std::size_t>(start)] = id;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++size;
      for (const auto& [v, w] : graph.adj[static_cast<std::size_t>(u)])
        if (component[static_cast<std::size_t>(v)] == -1) {
          component[static_cast<std::size_t>(v)] = id;
          stack.push_back(v);
        }
    }
    sizes.push_back(size);
  }
  if (sizes.size() > 1) {
    std::string msg = "disconnected neighbor graph: component sizes";
    for (const int s : sizes) msg += " " + std::to_string(s);
    throw DataError(msg);
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, kInf);
  using Item = std::pair<double, int>;
  for (int src = 0; src < n; ++src) {
    auto row = d.row(src);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    row[src] = 0.0;
    heap.emplace(0.0, src);
    while (!heap.empty()) {
      const auto [dist, u] = heap.top();
      heap.pop();
      if (dist > row[u]) continue;
      for (const auto& [v, w] : graph.adj[static_cast<std::size_t>(u)]) {
        const double cand = dist + w;
        if (cand < row[v]) {
          row[v] = cand;
          heap.emplace(cand, v);
        }
      }
    }
  }
  return d;
}

Embedding1D classical_mds_1d(const Eigen::Ref<const Eigen::MatrixXd>& d) {
  const Eigen::Index n = d.rows();
  if (n < 1 || d.cols() != n) throw DimensionError("distance matrix must be square");
  const double scale = std::max(d.cwiseAbs().maxCoeff(), 1.0);
  if ((d - d.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw DataError("distance matrix not symmetric");
  if (d.diagonal().cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DataError("distance matrix has nonzero diagonal");

  // double centering: B = -(S - r_i - r_j + g) / 2 with S = D∘D
  const Eigen::MatrixXd s = d.cwiseProduct(d);
  const Eigen::VectorXd row_mean = s.rowwise().mean();
  const double grand_mean = row_mean.mean();
  Eigen::MatrixXd b = s;
  b.colwise() -= row_mean;
  b.rowwise() -= row_mean.transpose();
  b.array() += grand_mean;
  b *= -0.5;

  Embedding1D emb;
  emb.method = "mds";
  if (b.cwiseAbs().maxCoeff() == 0.0) {
    emb.coords = Eigen::VectorXd::Zero(n);
    emb.converged = true;
    return emb;
  }

  const PowerResult top = power_iteration(b);
  emb.iterations = top.iterations;
  emb.residual = top.residual;
  emb.converged = top.converged;
  emb.eigenvalue = top.value;
  if (!(top.value > 0.0))
    throw DataError(
        "degenerate geometry: dominant eigenvalue of the centered distance "
        "matrix is not positive (" +
        std::to_string(top.value) + ")");
  emb.coords = top.vec * std::sqrt(top.value);
  return emb;
}

Embedding1D isomap_1d(const Eigen::Ref<const Eigen::MatrixXd>& x, int k) {
  Embedding1D emb = classical_mds_1d(geodesics(knn_graph(x, k)));
  emb.method = "isomap";
  return emb;
}

NeighborGraph connect_components(NeighborGraph graph,
                                 const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const int n = graph.n;
  if (static_cast<int>(x.rows()) != n)
    throw DimensionError("connect_components: point count does not match graph");
  while (true) {
    // label components
    std::vector<int> component(static_cast<std::size_t>(n), -1);
    int n_comp = 0;
    for (int start = 0; start < n; ++start) {
      if (component[static_cast<std::size_t>(start)] != -1) continue;
      const int id = n_comp++;
      std::vector<int> stack{start};
      component[static_cast<std::size_t>(start)] = id;
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (const auto& [v, w] : graph.adj[static_cast<std::size_t>(u)])
          if (component[static_cast<std::size_t>(v)] == -1) {
            component[static_cast<std::size_t>(v)] = id;
            stack.push_back(v);
          }
      }
    }
    if (n_comp <= 1) return graph;
    // shortest edge across any component boundary (ties: lowest index pair)
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (component[static_cast<std::size_t>(i)] ==
            component[static_cast<std::size_t>(j)])
          continue;
        const double d = (x.row(i) - x.row(j)).norm();
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    graph.adj[static_cast<std::size_t>(bi)].emplace_back(bj, best);
    graph.adj[static_cast<std::size_t>(bj)].emplace_back(bi, best);
    for (int u : {bi, bj}) {
      auto& lst = graph.adj[static_cast<std::size_t>(u)];
      std::sort(lst.begin(), lst.end());
      lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    }
  }
}

IsomapModel isomap_fit(const Eigen::Ref<const Eigen::MatrixXd>& x, int k,
                       int max_points, std::uint64_t seed, bool bridge_components) {
  const int n = static_cast<int>(x.rows());
  if (max_points < 2) throw ConfigError("isomap_fit needs max_points >= 2");

  IsomapModel model;
  if (n <= max_points) {
    model.anchors = x;
  } else {
    // deterministic partial Fisher–Yates: first max_points entries
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < max_points; ++i) {
      const int j = i + static_cast<int>(rng.next_u64() %
                                         static_cast<std::uint64_t>(n - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    model.anchors.resize(max_points, x.cols());
    for (int i = 0; i < max_points; ++i)
      model.anchors.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  }
  if (bridge_components) {
    NeighborGraph graph = connect_components(knn_graph(model.anchors, k), model.anchors);
    Embedding1D embedding = classical_mds_1d(geodesics(graph));
    embedding.method = "isomap";
    model.coords = embedding.coords;
  } else {
    model.coords = isomap_1d(model.anchors, k).coords;
  }
  return model;
}

Eigen::VectorXd isomap_place(const IsomapModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.cols() != model.anchors.cols())
    throw DimensionError("isomap dimension mismatch");
  const Eigen::Index n = x.rows(), m = model.anchors.rows();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index best_j = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dist = (x.row(i) - model.anchors.row(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        best_j = j;
      }
    }
    out[i] = model.coords[best_j];
  }
  return out;
}

BaselineMethod baseline_method_from_string(const std::string& name) {
  if (name == "pca") return BaselineMethod::Pca;
  if (name == "isomap") return BaselineMethod::Isomap;
  throw ConfigError("unknown baseline method '" + name + "' (pca|isomap)");
}

Eigen::VectorXd baseline_scores(const Eigen::Ref<const Eigen::MatrixXd>& latents,
                                BaselineMethod method, int k, int max_points,
                                std::uint64_t seed) {
  if (method == BaselineMethod::Pca) return pca_1d(latents).coords;
  const IsomapModel model = isomap_fit(latents, k, max_points, seed);
  return isomap_place(model, latents);
}

}  // namespace casvae
