#include "flowseg/field.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace flowseg;

namespace {

GridField constant_grid(const Vec3& v, std::array<int, 3> dims = {4, 4, 4}) {
  GridSpec g;
  g.dims = dims;
  return GridField(g, std::vector<Vec3>(g.size(), v));
}

GridField linear_grid(const Eigen::Matrix3d& A, const Vec3& c, std::array<int, 3> dims, const Vec3& origin,
                      const Vec3& spacing) {
  GridSpec g;
  g.dims = dims;
  g.origin = origin;
  g.spacing = spacing;
  std::vector<Vec3> values(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) values[i] = A * g.node(i) + c;
  return GridField(g, std::move(values));
}

}  // namespace

TEST(DomainBounds, RejectsInvertedCorners) {
  EXPECT_THROW(DomainBounds(Vec3(0, 0, 0), Vec3(1, 0, 1)), InvalidArgument);
  EXPECT_THROW(DomainBounds(Vec3(1, 0, 0), Vec3(0, 1, 1)), InvalidArgument);
  EXPECT_NO_THROW(DomainBounds(Vec3(0, 0, 0), Vec3(1, 1, 1)));
}

TEST(DomainBounds, CornersAreDistinctAndContained) {
  const DomainBounds b(Vec3(-1, 0, 2), Vec3(1, 3, 4));
  const auto corners = b.corners();
  for (std::size_t i = 0; i < corners.size(); ++i) {
    EXPECT_TRUE(b.contains(corners[i]));
    for (std::size_t j = i + 1; j < corners.size(); ++j) EXPECT_GT((corners[i] - corners[j]).norm(), 0.0);
  }
  EXPECT_DOUBLE_EQ(corner_distance(b, Vec3(-1, 0, 2)), 0.0);
  EXPECT_DOUBLE_EQ(corner_distance(b, Vec3(0, 0, 2)), 1.0);
}

TEST(GridSpec, ValidateRejectsBadGrids) {
  GridSpec g;
  g.dims = {1, 2, 2};
  EXPECT_THROW(g.validate(), InvalidGridError);
  g.dims = {2, 2, 2};
  g.spacing = Vec3(1, 0, 1);
  EXPECT_THROW(g.validate(), InvalidGridError);
  g.spacing = Vec3(1, 1, 1);
  EXPECT_NO_THROW(g.validate());
}

TEST(GridSpec, BoundsFollowOriginAndSpacing) {
  GridSpec g;
  g.dims = {3, 4, 5};
  g.origin = Vec3(1, 2, 3);
  g.spacing = Vec3(0.5, 1, 2);
  const DomainBounds b = g.bounds();
  EXPECT_EQ(b.min_corner(), Vec3(1, 2, 3));
  EXPECT_EQ(b.max_corner(), Vec3(2, 5, 11));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto ijk = g.unravel(i);
    EXPECT_EQ(g.index(ijk[0], ijk[1], ijk[2]), i);
  }
}

TEST(GridField, ValueCountMustMatchDims) {
  GridSpec g;
  g.dims = {2, 2, 2};
  EXPECT_THROW(GridField(g, std::vector<Vec3>(7)), InvalidGridError);
  EXPECT_NO_THROW(GridField(g, std::vector<Vec3>(8)));
}

TEST(Sampling, ConstantFieldEverywhere) {
  const VectorField f(constant_grid(Vec3(1, 0, 0)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(f.sample(Vec3(u(rng), u(rng), u(rng))), Vec3(1, 0, 0));
}

TEST(Sampling, ExactAtNodes) {
  GridSpec g;
  g.dims = {3, 4, 2};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<Vec3> values(g.size());
  for (auto& v : values) v = Vec3(n(rng), n(rng), n(rng));
  const GridField field(g, values);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 3; ++i) EXPECT_EQ(sample(field, g.node(i, j, k)), field.at(i, j, k));
}

TEST(Sampling, HandEvaluatedCellCenter) {
  GridSpec g;
  g.dims = {2, 2, 2};
  std::vector<Vec3> values(8);
  for (std::size_t i = 0; i < 8; ++i) values[i] = g.unravel(i)[0] == 0 ? Vec3(0, 0, 0) : Vec3(2, 0, 0);
  const GridField field(g, values);
  EXPECT_TRUE(sample(field, Vec3(0.5, 0.5, 0.5)).isApprox(Vec3(1, 0, 0), 1e-15));
}

TEST(Sampling, ReproducesLinearFields) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(r, c) = n(rng);
    const Vec3 c(n(rng), n(rng), n(rng));
    const GridField field = linear_grid(A, c, {5, 6, 7}, Vec3(-1, 0.5, 2), Vec3(0.3, 0.7, 0.2));
    const DomainBounds b = field.grid.bounds();
    for (int i = 0; i < 50; ++i) {
      const Vec3 p = b.min_corner() + b.extent().cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
      const Vec3 expected = A * p + c;
      EXPECT_LE((sample(field, p) - expected).norm(), 1e-9 * std::max(1.0, expected.norm()));
    }
  }
}

TEST(Sampling, LipschitzAgainstNodeDifferences) {
  GridSpec g;
  g.dims = {6, 6, 6};
  g.spacing = Vec3(0.2, 0.2, 0.2);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n;
  std::vector<Vec3> values(g.size());
  for (auto& v : values) v = Vec3(n(rng), n(rng), n(rng));
  const GridField field(g, values);
  double max_jump = 0.0;
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i) {
        if (i + 1 < 6) max_jump = std::max(max_jump, (field.at(i + 1, j, k) - field.at(i, j, k)).norm());
        if (j + 1 < 6) max_jump = std::max(max_jump, (field.at(i, j + 1, k) - field.at(i, j, k)).norm());
        if (k + 1 < 6) max_jump = std::max(max_jump, (field.at(i, j, k + 1) - field.at(i, j, k)).norm());
      }
  // Trilinear interpolation is Lipschitz in each axis with the per-axis
  // node jump over spacing; sum over axes bounds the Euclidean case.
  const double L = 3.0 * max_jump / 0.2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> d(0.0, 0.01);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = Vec3(u(rng), u(rng), u(rng));
    const Vec3 q = (p + Vec3(d(rng), d(rng), d(rng))).cwiseMax(0.0).cwiseMin(1.0);
    EXPECT_LE((sample(field, p) - sample(field, q)).norm(), L * (p - q).norm() + 1e-12);
  }
}

TEST(Sampling, OutOfBoundsIsAnError) {
  const VectorField f(constant_grid(Vec3(1, 0, 0)));
  EXPECT_THROW(f.sample(Vec3(-0.5, 1, 1)), DomainError);
  EXPECT_THROW(f.sample(Vec3(1, 1, 3.5)), DomainError);
  const VectorField a(AnalyticField::rotor());
  EXPECT_THROW(a.sample(Vec3(0, 0, 2.5)), DomainError);
}

TEST(Analytic, StandInFormulas) {
  const Vec3 p(0.3, -0.7, 0.25);
  EXPECT_EQ(AnalyticField::rotor().evaluate(p), Vec3(0.7, 0.3, 0.1));
  const Vec3 s = AnalyticField::saddle_spiral().evaluate(p);
  EXPECT_NEAR((s - Vec3(0.3, 0.7, 0.3 * std::sin(M_PI * 0.25))).norm(), 0.0, 1e-15);
  const AnalyticField abc = AnalyticField::abc();
  EXPECT_NEAR(abc.bounds.max_corner().x(), 2.0 * M_PI, 1e-12);
  const double A = std::sqrt(3.0), B = std::sqrt(2.0), C = 1.0;
  const Vec3 q(1.0, 2.0, 3.0);
  const Vec3 expected(A * std::sin(q.z()) + C * std::cos(q.y()), B * std::sin(q.x()) + A * std::cos(q.z()),
                      C * std::sin(q.y()) + B * std::cos(q.x()));
  EXPECT_NEAR((abc.evaluate(q) - expected).norm(), 0.0, 1e-14);
  EXPECT_EQ(parse_analytic_kind("abc"), AnalyticKind::kAbc);
  EXPECT_THROW(parse_analytic_kind("vortex"), InvalidArgument);
}

TEST(Gradient, ConstantFieldIsZero) {
  const ScalarGrid g = gradient_magnitude_field(constant_grid(Vec3(3, -1, 2), {5, 4, 3}));
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, LinearFieldUnitSlope) {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  A(0, 0) = 1.0;
  const ScalarGrid g = gradient_magnitude_field(linear_grid(A, Vec3::Zero(), {5, 5, 5}, Vec3::Zero(), Vec3::Ones()));
  for (double v : g.values) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Gradient, RotorIsSqrtTwo) {
  AnalyticParams params;
  params.rotor_axial = 0.0;
  const ScalarGrid g = gradient_magnitude_field(VectorField(AnalyticField::rotor(params)), {9, 9, 9});
  for (int k = 1; k < 8; ++k)
    for (int j = 1; j < 8; ++j)
      for (int i = 1; i < 8; ++i) EXPECT_NEAR(g.values[g.grid.index(i, j, k)], std::sqrt(2.0), 1e-12);
}

TEST(Vf1, RoundTrip) {
  GridSpec g;
  g.dims = {3, 2, 4};
  g.origin = Vec3(-1, 0.25, 7);
  g.spacing = Vec3(0.1, 0.3, 1.0 / 3.0);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  std::vector<Vec3> values(g.size());
  for (auto& v : values) v = Vec3(n(rng), n(rng), n(rng));
  const GridField field(g, values);
  std::stringstream ss;
  save_grid(field, ss);
  const GridField back = load_grid(ss);
  EXPECT_TRUE(back == field);
  EXPECT_EQ(content_hash(back), content_hash(field));
}

TEST(Vf1, TruncatedPayloadIsParseError) {
  std::stringstream ss;
  save_grid(constant_grid(Vec3(1, 2, 3), {2, 2, 2}), ss);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  EXPECT_THROW(load_grid(cut), ParseError);
}

TEST(Vf1, MinimalGridAccepted) {
  std::stringstream ss;
  save_grid(constant_grid(Vec3(1, 2, 3), {2, 2, 2}), ss);
  const GridField g = load_grid(ss);
  EXPECT_EQ(g.values.size(), 8u);
}

TEST(Vf1, BadMagicIsParseError) {
  std::stringstream ss("VF2 2 2 2 0 0 0 1 1 1\n");
  EXPECT_THROW(load_grid(ss), ParseError);
}

TEST(RmsSpeed, ConstantField) {
  EXPECT_NEAR(rms_speed(VectorField(constant_grid(Vec3(3, 4, 0)))), 5.0, 1e-12);
}
