#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "casvae/errors.hpp"

namespace casvae {

/// Union-symmetrized k-nearest-neighbor graph with Euclidean edge weights.
struct NeighborGraph {
  int n = 0;
  // adj[i] is sorted by neighbor index; every edge appears in both lists.
  std::vector<std::vector<std::pair<int, double>>> adj;
};

/// A 1-D embedding plus the diagnostics of the power iteration that made it:
/// `residual` is the relative eigen-residual ‖Av − λv‖ / |λ| at the last
/// iteration, and `converged` records whether it dropped below tolerance
/// before the iteration cap. A capped run is reported, never hidden.
struct Embedding1D {
  Eigen::VectorXd coords;
  std::string method;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double eigenvalue = 0.0;
};

/// Linear reducer fitted on one data set and applied to another.
struct PcaModel {
  Eigen::RowVectorXd mean;
  Eigen::VectorXd direction;  // unit top principal direction
  double eigenvalue = 0.0;
};

/// Nonlinear reducer state: embedded anchor points plus their coordinates.
/// New points adopt the coordinate of their nearest anchor in input space.
struct IsomapModel {
  Eigen::MatrixXd anchors;  // m×d
  Eigen::VectorXd coords;   // m
};

/// Projection onto the top principal direction of the centered data,
/// computed by power iteration (tolerance 1e-8, at most 1000 iterations).
Embedding1D pca_1d(const Eigen::Ref<const Eigen::MatrixXd>& x);

PcaModel pca_fit(const Eigen::Ref<const Eigen::MatrixXd>& x);
Eigen::VectorXd pca_project(const PcaModel& model,
                            const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Links every point to its k nearest neighbors (ties broken by index) and
/// symmetrizes by union. Requires 1 <= k < n.
NeighborGraph knn_graph(const Eigen::Ref<const Eigen::MatrixXd>& x, int k);

/// All-pairs shortest-path distances by per-source Dijkstra. A disconnected
/// graph raises DataError naming the component sizes.
Eigen::MatrixXd geodesics(const NeighborGraph& graph);

/// Classical multidimensional scaling to one dimension: double-centers the
/// squared distances and extracts the dominant eigenpair by power iteration.
/// A dominant *negative* eigenvalue means the dissimilarities are closer to
/// an anti-metric than to any line geometry and raises DataError.
Embedding1D classical_mds_1d(const Eigen::Ref<const Eigen::MatrixXd>& d);

/// knn_graph → geodesics → classical_mds_1d.
Embedding1D isomap_1d(const Eigen::Ref<const Eigen::MatrixXd>& x, int k);

/// Joins the connected components of a k-NN graph by repeatedly adding the
/// single shortest edge between the closest pair of components
/// (single-linkage bridging). Needed when the data forms well-separated
/// clusters — exactly the regime bimodal latents produce.
NeighborGraph connect_components(NeighborGraph graph,
                                 const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Fits ISOMAP on at most `max_points` rows (deterministic subsample drawn
/// from `seed` when n exceeds the cap) and keeps the anchors for placement.
/// With `bridge_components` the anchor graph is made connected first instead
/// of raising the disconnected-graph error.
IsomapModel isomap_fit(const Eigen::Ref<const Eigen::MatrixXd>& x, int k,
                       int max_points = 2000, std::uint64_t seed = 0,
                       bool bridge_components = false);

/// Nearest-anchor coordinate lookup (anchors map to their own coordinate).
Eigen::VectorXd isomap_place(const IsomapModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& x);

enum class BaselineMethod { Pca, Isomap };

BaselineMethod baseline_method_from_string(const std::string& name);

/// One scalar score per row: PCA projection or subsampled-ISOMAP placement.
Eigen::VectorXd baseline_scores(const Eigen::Ref<const Eigen::MatrixXd>& latents,
                                BaselineMethod method, int k = 10,
                                int max_points = 2000, std::uint64_t seed = 0);

}  // namespace casvae
