#include "casvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

namespace casvae {

RocCurve roc_curve(const Eigen::Ref<const Eigen::VectorXd>& scores,
                   const std::vector<std::uint8_t>& labels) {
  const Eigen::Index n = scores.size();
  if (static_cast<std::size_t>(n) != labels.size())
    throw DimensionError("scores and labels must have equal length");
  RocCurve curve;
  for (const std::uint8_t l : labels) {
    if (l > 1) throw DataError("labels must be 0 or 1");
    (l == 1 ? curve.n_pos : curve.n_neg)++;
  }
  if (curve.n_pos == 0 || curve.n_neg == 0)
    throw DataError("labels must contain both classes");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(scores[i])) throw DataError("scores must be finite");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] > scores[b]; });

  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[static_cast<std::size_t>(order[i])] == 1 ? tp : fp)++;
      ++i;
    }
    curve.points.push_back({s, static_cast<double>(fp) / curve.n_neg,
                            static_cast<double>(tp) / curve.n_pos});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  if (curve.points.size() < 2) throw DataError("roc curve needs >= 2 vertices");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

double auc_of(const Eigen::Ref<const Eigen::VectorXd>& scores,
              const std::vector<std::uint8_t>& labels) {
  return auc(roc_curve(scores, labels));
}

OrientedAuc orient(const Eigen::Ref<const Eigen::VectorXd>& scores,
                   const std::vector<std::uint8_t>& labels) {
  const double a = auc_of(scores, labels);
  if (a >= 0.5) return {a, false};
  return {1.0 - a, true};
}

RocPoint best_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw DataError("empty roc curve");
  RocPoint best = curve.points.front();
  double best_d2 = best.fpr * best.fpr + (1.0 - best.tpr) * (1.0 - best.tpr);
  for (const RocPoint& p : curve.points) {
    const double d2 = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
    if (d2 < best_d2 || (d2 == best_d2 && p.tpr > best.tpr)) {
      best = p;
      best_d2 = d2;
    }
  }
  return best;
}

StabilityReport stability(const std::function<OrientedAuc(std::uint64_t)>& run_fn,
                          const std::vector<std::uint64_t>& seeds, int jobs) {
  if (seeds.size() < 2) throw ConfigError("stability needs at least 2 seeds");
  if (jobs < 1) throw ConfigError("stability needs jobs >= 1");

  StabilityReport report;
  report.per_seed.resize(seeds.size());
  std::vector<std::string> failures(seeds.size());
  std::vector<bool> failed(seeds.size(), false);

  auto run_range = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < seeds.size(); i += step) {
      try {
        const OrientedAuc oa = run_fn(seeds[i]);
        report.per_seed[i] = {seeds[i], oa.value, oa.flipped};
      } catch (const std::exception& e) {
        failed[i] = true;
        failures[i] = e.what();
      }
    }
  };

  if (jobs == 1 || seeds.size() == 1) {
    run_range(0, 1);
  } else {
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back(run_range, t, n_threads);
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t i = 0; i < seeds.size(); ++i)
    if (failed[i])
      throw Error("stability run for seed " + std::to_string(seeds[i]) +
                  " failed: " + failures[i]);

  double sum = 0.0;
  report.highest_auc = -std::numeric_limits<double>::infinity();
  report.lowest_auc = std::numeric_limits<double>::infinity();
  for (const SeedResult& r : report.per_seed) {
    sum += r.auc;
    report.highest_auc = std::max(report.highest_auc, r.auc);
    report.lowest_auc = std::min(report.lowest_auc, r.auc);
  }
  report.mean_auc = sum / static_cast<double>(report.per_seed.size());
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void export_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  out << "threshold,fpr,tpr\n";
  for (const RocPoint& p : curve.points)
    out << fmt(p.threshold) << ',' << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

RocCurve import_roc_csv(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,fpr,tpr")
    throw IoError("bad roc csv header in '" + path.string() + "'");
  RocCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw IoError("bad roc csv row '" + line + "'");
    curve.points.push_back({std::strtod(fields[0].c_str(), nullptr),
                            std::strtod(fields[1].c_str(), nullptr),
                            std::strtod(fields[2].c_str(), nullptr)});
  }
  return curve;
}

void export_stability_csv(const StabilityReport& report,
                          const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  out << "seed,auc,flipped\n";
  for (const SeedResult& r : report.per_seed)
    out << r.seed << ',' << fmt(r.auc) << ',' << (r.flipped ? 1 : 0) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

StabilityReport import_stability_csv(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line) || line != "seed,auc,flipped")
    throw IoError("bad stability csv header in '" + path.string() + "'");
  StabilityReport report;
  double sum = 0.0;
  report.highest_auc = -std::numeric_limits<double>::infinity();
  report.lowest_auc = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw IoError("bad stability csv row '" + line + "'");
    SeedResult r;
    r.seed = std::strtoull(fields[0].c_str(), nullptr, 10);
    r.auc = std::strtod(fields[1].c_str(), nullptr);
    r.flipped = fields[2] == "1";
    sum += r.auc;
    report.highest_auc = std::max(report.highest_auc, r.auc);
    report.lowest_auc = std::min(report.lowest_auc, r.auc);
    report.per_seed.push_back(r);
  }
  if (report.per_seed.empty())
    throw IoError("stability csv '" + path.string() + "' has no rows");
  report.mean_auc = sum / static_cast<double>(report.per_seed.size());
  return report;
}

}  // namespace casvae
