#include "flowseg/analysis.hpp"

#include <numeric>

namespace flowseg {

std::string to_string(ErrorGroup g) {
  switch (g) {
    case ErrorGroup::kGood: return "good";
    case ErrorGroup::kMiddle: return "middle";
    case ErrorGroup::kBad: return "bad";
  }
  return "?";
}

std::string to_string(DominanceGroup g) {
  switch (g) {
    case DominanceGroup::kSimilar: return "similar";
    case DominanceGroup::kKnnDominant: return "knn-dominant";
    case DominanceGroup::kRbnDominant: return "rbn-dominant";
  }
  return "?";
}

namespace {

std::size_t floor_share(double pct, std::size_t m) {
  return static_cast<std::size_t>(std::floor(pct / 100.0 * double(m) + 1e-9));
}

void check_aligned(std::span<const ReconstructionRecord> a, std::span<const ReconstructionRecord> b) {
  if (a.size() != b.size()) throw AlignmentError("record sets differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].grid_point - b[i].grid_point).isZero(1e-9)) {
      throw AlignmentError("record sets differ at grid point " + std::to_string(i));
    }
  }
}

}  // namespace

std::vector<ErrorGroup> percentile_groups(std::span<const double> errors, double low_pct, double high_pct) {
  const std::size_t m = errors.size();
  if (m < 10) throw InvalidArgument("percentile groups need at least 10 records");
  if (!(0.0 <= low_pct && low_pct <= high_pct && high_pct <= 100.0)) {
    throw InvalidArgument("percentile bounds must satisfy 0 <= low <= high <= 100");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
  const std::size_t good = floor_share(low_pct, m);
  const std::size_t bad = floor_share(100.0 - high_pct, m);
  std::vector<ErrorGroup> labels(m, ErrorGroup::kMiddle);
  for (std::size_t i = 0; i < good; ++i) labels[order[i]] = ErrorGroup::kGood;
  for (std::size_t i = 0; i < bad; ++i) labels[order[m - 1 - i]] = ErrorGroup::kBad;
  return labels;
}

std::vector<ErrorGroup> percentile_groups(std::span<const ReconstructionRecord> records, double low_pct,
                                          double high_pct) {
  std::vector<double> errors;
  errors.reserve(records.size());
  for (const auto& r : records) errors.push_back(r.error);
  return percentile_groups(errors, low_pct, high_pct);
}

double percentage_difference(double a, double b, double epsilon) {
  return std::abs(a - b) / std::max(std::min(a, b), epsilon) * 100.0;
}

DominanceResult dominance_groups(std::span<const ReconstructionRecord> knn, std::span<const ReconstructionRecord> rbn,
                                 double threshold_pct, double epsilon) {
  check_aligned(knn, rbn);
  DominanceResult out;
  if (knn.empty()) return out;
  out.percentage_difference.reserve(knn.size());
  for (std::size_t i = 0; i < knn.size(); ++i) {
    out.percentage_difference.push_back(percentage_difference(knn[i].error, rbn[i].error, epsilon));
  }
  out.threshold = nearest_rank_percentile(out.percentage_difference, threshold_pct);
  out.labels.reserve(knn.size());
  for (std::size_t i = 0; i < knn.size(); ++i) {
    if (out.percentage_difference[i] <= out.threshold) {
      out.labels.push_back(DominanceGroup::kSimilar);
    } else {
      out.labels.push_back(knn[i].error < rbn[i].error ? DominanceGroup::kKnnDominant : DominanceGroup::kRbnDominant);
    }
  }
  return out;
}

SparseRbnReport sparse_rbn_report(std::span<const ReconstructionRecord> rbn, std::span<const ReconstructionRecord> knn) {
  check_aligned(rbn, knn);
  SparseRbnReport out;
  out.points = rbn.size();
  for (std::size_t i = 0; i < rbn.size(); ++i) {
    if (rbn[i].n_neighbors == 1) {
      ++out.sparse_points;
      out.sparse_knn_error += knn[i].error;
      out.sparse_rbn_error += rbn[i].error;
    } else {
      out.dense_knn_error += knn[i].error;
      out.dense_rbn_error += rbn[i].error;
    }
  }
  const std::size_t dense = out.points - out.sparse_points;
  if (out.points > 0) out.sparse_fraction = double(out.sparse_points) / double(out.points);
  if (out.sparse_points > 0) {
    out.sparse_knn_error /= double(out.sparse_points);
    out.sparse_rbn_error /= double(out.sparse_points);
  }
  if (dense > 0) {
    out.dense_knn_error /= double(dense);
    out.dense_rbn_error /= double(dense);
  }
  return out;
}

namespace {

struct Moments {
  double mean_x, mean_y, var_x, var_y, cov;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("correlation inputs differ in length");
  if (x.size() < 3) throw InvalidArgument("correlation needs at least 3 samples");
  const Eigen::Map<const Eigen::ArrayXd> ax(x.data(), Eigen::Index(x.size()));
  const Eigen::Map<const Eigen::ArrayXd> ay(y.data(), Eigen::Index(y.size()));
  Moments m{};
  m.mean_x = ax.mean();
  m.mean_y = ay.mean();
  const Eigen::ArrayXd dx = ax - m.mean_x;
  const Eigen::ArrayXd dy = ay - m.mean_y;
  const double n = double(x.size());
  m.var_x = dx.square().sum() / n;
  m.var_y = dy.square().sum() / n;
  m.cov = (dx * dy).sum() / n;
  if (!(m.var_x > 0.0) || !(m.var_y > 0.0)) throw DegenerateInputError("correlation input has zero variance");
  return m;
}

}  // namespace

double ccc(std::span<const double> x, std::span<const double> y) {
  const Moments m = moments(x, y);
  const double bias = m.mean_x - m.mean_y;
  return 2.0 * m.cov / (m.var_x + m.var_y + bias * bias);
}

PearsonResult pcc(std::span<const double> x, std::span<const double> y) {
  const Moments m = moments(x, y);
  PearsonResult out;
  out.r = std::clamp(m.cov / std::sqrt(m.var_x * m.var_y), -1.0, 1.0);
  const double n = double(x.size());
  const double denom = 1.0 - out.r * out.r;
  if (denom <= 0.0) {
    out.p_value = 0.0;
  } else {
    const double t = out.r * std::sqrt((n - 2.0) / denom);
    out.p_value = std::erfc(std::abs(t) / std::sqrt(2.0));
  }
  return out;
}

Histogram histogram(std::span<const double> values, int n_bins, double lo, double hi) {
  if (n_bins < 1) throw InvalidArgument("histogram needs at least one bin");
  if (!(hi > lo)) throw InvalidArgument("histogram range must satisfy hi > lo");
  Histogram h;
  h.edges.resize(std::size_t(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) h.edges[std::size_t(i)] = lo + (hi - lo) * double(i) / double(n_bins);
  h.edges.back() = hi;
  h.counts.assign(std::size_t(n_bins), 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      ++h.overflow;
      continue;
    }
    // Edge comparisons rather than division keep bin membership consistent
    // with the reported edges.
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    std::size_t bin = std::size_t(std::distance(h.edges.begin(), it));
    bin = bin == 0 ? 0 : bin - 1;
    bin = std::min(bin, std::size_t(n_bins) - 1);
    ++h.counts[bin];
    ++h.total;
  }
  return h;
}

}  // namespace flowseg
