#pragma once

#include "flowseg/reconstruct.hpp"

#include <span>
#include <string>
#include <vector>

namespace flowseg {

enum class ErrorGroup { kGood, kMiddle, kBad };
enum class DominanceGroup { kSimilar, kKnnDominant, kRbnDominant };

std::string to_string(ErrorGroup g);
std::string to_string(DominanceGroup g);

/// Lowest floor(low_pct% of M) errors are good, highest floor((100-high_pct)%
/// of M) are bad, ties broken by record order. Throws InvalidArgument for
/// fewer than 10 records.
std::vector<ErrorGroup> percentile_groups(std::span<const double> errors, double low_pct = 10.0,
                                          double high_pct = 90.0);
std::vector<ErrorGroup> percentile_groups(std::span<const ReconstructionRecord> records, double low_pct = 10.0,
                                          double high_pct = 90.0);

/// |a - b| / max(min(a, b), epsilon) * 100.
double percentage_difference(double a, double b, double epsilon = 1e-12);

struct DominanceResult {
  std::vector<DominanceGroup> labels;
  std::vector<double> percentage_difference;
  double threshold = 0.0;
};

/// Points whose percentage difference is at or below the threshold_pct
/// nearest-rank percentile are similar; the rest go to whichever method has
/// the smaller error. Throws AlignmentError when the grids differ.
DominanceResult dominance_groups(std::span<const ReconstructionRecord> knn, std::span<const ReconstructionRecord> rbn,
                                 double threshold_pct = 80.0, double epsilon = 1e-12);

struct SparseRbnReport {
  std::size_t points = 0;
  std::size_t sparse_points = 0;
  double sparse_fraction = 0.0;
  double sparse_knn_error = 0.0;  // means restricted to single-neighbor RBN points
  double sparse_rbn_error = 0.0;
  double dense_knn_error = 0.0;   // means over the complement
  double dense_rbn_error = 0.0;
};

SparseRbnReport sparse_rbn_report(std::span<const ReconstructionRecord> rbn, std::span<const ReconstructionRecord> knn);

/// Lin's concordance correlation coefficient with population moments.
/// Throws DegenerateInputError on zero variance.
double ccc(std::span<const double> x, std::span<const double> y);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, normal approximation of the t statistic
};

PearsonResult pcc(std::span<const double> x, std::span<const double> y);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t total = 0;     // values inside the range
  std::size_t overflow = 0;  // values outside the range
};

/// Left-closed right-open bins over [lo, hi]; the last bin is closed.
Histogram histogram(std::span<const double> values, int n_bins, double lo, double hi);

}  // namespace flowseg
