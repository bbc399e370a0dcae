#include "flowseg/analysis.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace flowseg;

namespace {

std::vector<ReconstructionRecord> records_from(const std::vector<double>& errors, int neighbors = 4) {
  std::vector<ReconstructionRecord> out(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    out[i].grid_point = Vec3(double(i), 0, 0);
    out[i].error = errors[i];
    out[i].n_neighbors = neighbors;
  }
  return out;
}

std::size_t count(const std::vector<ErrorGroup>& g, ErrorGroup which) {
  return std::size_t(std::count(g.begin(), g.end(), which));
}

}  // namespace

TEST(PercentileGroups, HundredDistinctValues) {
  std::mt19937_64 rng(1);
  std::vector<double> e(100);
  std::iota(e.begin(), e.end(), 0.0);
  std::shuffle(e.begin(), e.end(), rng);
  const auto g = percentile_groups(e);
  EXPECT_EQ(count(g, ErrorGroup::kGood), 10u);
  EXPECT_EQ(count(g, ErrorGroup::kBad), 10u);
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] < 10) EXPECT_EQ(g[i], ErrorGroup::kGood);
    else if (e[i] >= 90) EXPECT_EQ(g[i], ErrorGroup::kBad);
    else EXPECT_EQ(g[i], ErrorGroup::kMiddle);
  }
}

TEST(PercentileGroups, MatchesSortOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(10, 3000);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e(std::size_t(size(rng)));
    for (auto& v : e) v = u(rng);
    const auto g = percentile_groups(e);
    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t share = e.size() / 10;
    ASSERT_EQ(count(g, ErrorGroup::kGood), share);
    ASSERT_EQ(count(g, ErrorGroup::kBad), share);
    double good_sum = 0, bad_sum = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (g[i] == ErrorGroup::kGood) {
        EXPECT_LE(e[i], sorted[share - 1]);
        good_sum += e[i];
      }
      if (g[i] == ErrorGroup::kBad) {
        EXPECT_GE(e[i], sorted[e.size() - share]);
        bad_sum += e[i];
      }
    }
    EXPECT_LT(good_sum, bad_sum);
  }
}

TEST(PercentileGroups, TiesGoByRecordOrder) {
  const std::vector<double> e(20, 1.0);
  const auto g = percentile_groups(e);
  EXPECT_EQ(g[0], ErrorGroup::kGood);
  EXPECT_EQ(g[1], ErrorGroup::kGood);
  EXPECT_EQ(g[2], ErrorGroup::kMiddle);
  EXPECT_EQ(g[18], ErrorGroup::kBad);
  EXPECT_EQ(g[19], ErrorGroup::kBad);
}

TEST(PercentileGroups, Validation) {
  EXPECT_THROW(percentile_groups(std::vector<double>(9, 0.0)), InvalidArgument);
  EXPECT_THROW(percentile_groups(std::vector<double>(10, 0.0), 50, 40), InvalidArgument);
  const auto recs = records_from(std::vector<double>{5, 4, 3, 2, 1, 0, 9, 8, 7, 6});
  const auto g = percentile_groups(recs);
  EXPECT_EQ(g[5], ErrorGroup::kGood);
  EXPECT_EQ(g[6], ErrorGroup::kBad);
}

TEST(PercentageDifference, Cases) {
  EXPECT_DOUBLE_EQ(percentage_difference(1.0, 1.5), 50.0);
  EXPECT_DOUBLE_EQ(percentage_difference(1.5, 1.0), 50.0);
  EXPECT_EQ(percentage_difference(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(percentage_difference(0.0, 1e-12), 100.0);
}

TEST(DominanceGroups, IdenticalErrorsAreSimilar) {
  const auto a = records_from({1, 2, 3, 4, 5});
  const auto d = dominance_groups(a, a);
  for (auto l : d.labels) EXPECT_EQ(l, DominanceGroup::kSimilar);
  EXPECT_EQ(d.threshold, 0.0);
}

TEST(DominanceGroups, ConstantRatioIsSimilar) {
  std::vector<double> x, y;
  for (int i = 1; i <= 50; ++i) {
    x.push_back(i);
    y.push_back(2.0 * i);
  }
  const auto d = dominance_groups(records_from(x), records_from(y));
  for (auto l : d.labels) EXPECT_EQ(l, DominanceGroup::kSimilar);
}

TEST(DominanceGroups, DistinctDifferencesGiveEightyPercentSimilar) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::uniform_int_distribution<int> size(10, 2000);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = std::size_t(size(rng));
    std::vector<double> x(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    const auto kx = records_from(x), ky = records_from(y);
    const auto d = dominance_groups(kx, ky);
    ASSERT_EQ(d.labels.size(), m);
    std::size_t similar = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double pd = std::abs(x[i] - y[i]) / std::min(x[i], y[i]) * 100.0;
      EXPECT_NEAR(d.percentage_difference[i], pd, 1e-9 * pd);
      if (d.labels[i] == DominanceGroup::kSimilar) {
        ++similar;
        EXPECT_LE(pd, d.threshold);
      } else {
        EXPECT_GT(pd, d.threshold);
        EXPECT_EQ(d.labels[i], x[i] < y[i] ? DominanceGroup::kKnnDominant : DominanceGroup::kRbnDominant);
      }
    }
    EXPECT_LE(std::abs(double(similar) / double(m) - 0.8), 1.0 / double(m));
  }
}

TEST(DominanceGroups, Misaligned) {
  auto a = records_from({1, 2, 3});
  auto b = records_from({1, 2, 3});
  b[1].grid_point.y() = 1.0;
  EXPECT_THROW(dominance_groups(a, b), AlignmentError);
  EXPECT_THROW(dominance_groups(a, records_from({1, 2})), AlignmentError);
}

TEST(SparseRbn, RecountsByNeighborCount) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n(1, 3);
  std::vector<ReconstructionRecord> rbn(500), knn(500);
  double sk = 0, sr = 0, dk = 0, dr = 0;
  std::size_t sparse = 0;
  for (std::size_t i = 0; i < rbn.size(); ++i) {
    rbn[i].grid_point = knn[i].grid_point = Vec3(double(i), 1, 2);
    rbn[i].n_neighbors = n(rng);
    knn[i].n_neighbors = 6;
    rbn[i].error = u(rng);
    knn[i].error = u(rng);
    if (rbn[i].n_neighbors == 1) {
      ++sparse;
      sk += knn[i].error;
      sr += rbn[i].error;
    } else {
      dk += knn[i].error;
      dr += rbn[i].error;
    }
  }
  const auto r = sparse_rbn_report(rbn, knn);
  EXPECT_EQ(r.points, 500u);
  EXPECT_EQ(r.sparse_points, sparse);
  EXPECT_DOUBLE_EQ(r.sparse_fraction, double(sparse) / 500.0);
  EXPECT_NEAR(r.sparse_knn_error, sk / double(sparse), 1e-12);
  EXPECT_NEAR(r.sparse_rbn_error, sr / double(sparse), 1e-12);
  EXPECT_NEAR(r.dense_knn_error, dk / double(500 - sparse), 1e-12);
  EXPECT_NEAR(r.dense_rbn_error, dr / double(500 - sparse), 1e-12);
}

TEST(SparseRbn, AllDenseOrAllSparse) {
  const auto dense = sparse_rbn_report(records_from({1, 2, 3}, 5), records_from({1, 2, 3}, 6));
  EXPECT_EQ(dense.sparse_fraction, 0.0);
  const auto sparse = sparse_rbn_report(records_from({1, 2, 3}, 1), records_from({1, 2, 3}, 6));
  EXPECT_EQ(sparse.sparse_fraction, 1.0);
  EXPECT_DOUBLE_EQ(sparse.sparse_rbn_error, 2.0);
}

TEST(Correlation, Identity) {
  const std::vector<double> x{0.1, 0.5, 0.3, 0.9, 0.7};
  EXPECT_NEAR(ccc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(pcc(x, x).r, 1.0, 1e-15);
  EXPECT_LT(pcc(x, x).p_value, 1e-10);
}

TEST(Correlation, AffineBiasClosedForm) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> x(1000), y(1000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = nd(rng);
    y[i] = 2.0 * x[i] + 1.0;
  }
  // Sample moments computed directly.
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double expected = 2.0 * sxy / (sxx + syy + (mx - my) * (mx - my));
  EXPECT_NEAR(ccc(x, y), expected, 1e-12);
  EXPECT_NEAR(pcc(x, y).r, 1.0, 1e-12);
  // With unit-variance x the value approaches 4 / (5 + 1).
  EXPECT_NEAR(ccc(x, y), 4.0 / 6.0, 0.1);
}

TEST(Correlation, NegationSymmetryAndShift) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> x(200), y(200), neg(200), shifted(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = x[i] + 0.3 * u(rng);
    neg[i] = -x[i];
    shifted[i] = x[i] + 0.5;
  }
  EXPECT_NEAR(pcc(x, neg).r, -1.0, 1e-12);
  EXPECT_NEAR(ccc(x, y), ccc(y, x), 1e-15);
  EXPECT_NEAR(pcc(x, y).r, pcc(y, x).r, 1e-15);
  EXPECT_NEAR(pcc(x, shifted).r, 1.0, 1e-12);
  EXPECT_LT(ccc(x, shifted), 1.0 - 1e-3);
  EXPECT_LT(pcc(x, y).p_value, 1e-10);
}

TEST(Correlation, ConcordanceBoundedByPearson) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> size(3, 50);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> x(std::size_t(size(rng))), y(x.size());
    const double a = 3 * u(rng), b = u(rng), noise = std::abs(u(rng));
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u(rng);
      y[i] = a * x[i] + b + noise * u(rng);
    }
    ASSERT_LE(std::abs(ccc(x, y)), std::abs(pcc(x, y).r) + 1e-12);
  }
}

TEST(Correlation, Degenerate) {
  const std::vector<double> c(10, 0.25), x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_THROW(ccc(c, x), DegenerateInputError);
  EXPECT_THROW(pcc(x, c), DegenerateInputError);
  EXPECT_THROW(ccc(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(ccc(x, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST(Correlation, UncorrelatedHasLargePValue) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  int small = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(100), y(100);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = nd(rng);
      y[i] = nd(rng);
    }
    if (pcc(x, y).p_value < 0.05) ++small;
  }
  // Roughly 5% of independent pairs fall below 0.05.
  EXPECT_LT(small, 25);
  EXPECT_GT(small, 0);
}

TEST(Histogram, EdgesAndMembership) {
  const std::vector<double> v{0.0, 0.25, 0.5, 0.99, 1.0, -0.1, 1.1};
  const auto h = histogram(v, 4, 0.0, 1.0);
  ASSERT_EQ(h.edges.size(), 5u);
  EXPECT_EQ(h.edges[2], 0.5);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1, 1, 2}));
  EXPECT_EQ(h.total, 5u);
  EXPECT_EQ(h.overflow, 2u);
  EXPECT_THROW(histogram(v, 0, 0, 1), InvalidArgument);
  EXPECT_THROW(histogram(v, 3, 1, 1), InvalidArgument);
}

TEST(Histogram, UniformCountsWithinBinomialSpread) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<double> v(100000);
  for (auto& x : v) x = u(rng);
  const auto h = histogram(v, 30, 0.0, 3.0);
  EXPECT_EQ(h.total, v.size());
  const double n = double(v.size()), p = 1.0 / 30.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (auto c : h.counts) EXPECT_LT(std::abs(double(c) - n * p), 5 * sigma);
}

TEST(Groups, Names) {
  EXPECT_EQ(to_string(ErrorGroup::kGood), "good");
  EXPECT_EQ(to_string(DominanceGroup::kRbnDominant), "rbn-dominant");
}
