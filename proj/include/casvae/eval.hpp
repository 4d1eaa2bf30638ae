#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "casvae/errors.hpp"

namespace casvae {

/// One ROC vertex: the classifier "score >= threshold" has this (fpr, tpr).
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Threshold sweep over distinct score values, descending. The first vertex
/// is (+inf, 0, 0); tied scores are grouped into a single vertex, so the
/// trapezoid rule below gives ties Mann–Whitney half credit.
struct RocCurve {
  std::vector<RocPoint> points;
  int n_pos = 0;
  int n_neg = 0;
};

RocCurve roc_curve(const Eigen::Ref<const Eigen::VectorXd>& scores,
                   const std::vector<std::uint8_t>& labels);

/// Trapezoidal area under the curve = P(score+ > score-) + P(tie)/2.
double auc(const RocCurve& curve);

/// Convenience: auc(roc_curve(scores, labels)).
double auc_of(const Eigen::Ref<const Eigen::VectorXd>& scores,
              const std::vector<std::uint8_t>& labels);

/// An unsupervised score's sign is arbitrary, so report max(a, 1-a) and
/// remember whether the flip was taken (a = 0.5 counts as unflipped).
struct OrientedAuc {
  double value = 0.0;
  bool flipped = false;
};

OrientedAuc orient(const Eigen::Ref<const Eigen::VectorXd>& scores,
                   const std::vector<std::uint8_t>& labels);

/// The vertex closest to the ideal corner (0, 1); ties go to higher tpr.
RocPoint best_threshold(const RocCurve& curve);

struct SeedResult {
  std::uint64_t seed = 0;
  double auc = 0.0;
  bool flipped = false;
};

struct StabilityReport {
  std::vector<SeedResult> per_seed;  // in the order the seeds were given
  double mean_auc = 0.0;
  double highest_auc = 0.0;
  double lowest_auc = 0.0;
};

/// Runs run_fn once per seed (optionally on `jobs` threads; results are
/// keyed by seed position, so the report does not depend on scheduling) and
/// aggregates the oriented AUCs. A failing seed is named in the error.
StabilityReport stability(const std::function<OrientedAuc(std::uint64_t)>& run_fn,
                          const std::vector<std::uint64_t>& seeds, int jobs = 1);

/// CSV with header "threshold,fpr,tpr", one row per vertex, %.17g fields.
void export_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
RocCurve import_roc_csv(const std::filesystem::path& path);

/// CSV with header "seed,auc,flipped", one row per seed.
void export_stability_csv(const StabilityReport& report,
                          const std::filesystem::path& path);
StabilityReport import_stability_csv(const std::filesystem::path& path);

}  // namespace casvae
