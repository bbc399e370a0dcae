#include "flowseg/neighborhood.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <random>

using namespace flowseg;
using namespace flowseg::testing;

namespace {

const IcosaBins& bins() { return default_icosa_bins(); }

// The 32-sample definition spelled out sample by sample.
std::uint32_t literal_mask(const Vec3& q, const Segment& s, double radius, const IcosaBins& b,
                           const UniformityOptions& opt) {
  const Vec3 ab = s.b - s.a, aq = s.a - q;
  double t0 = 0.0, t1 = 1.0;
  if (aq.norm() > radius || (s.b - q).norm() > radius) {
    const double A = ab.squaredNorm(), B = 2.0 * aq.dot(ab), C = aq.squaredNorm() - radius * radius;
    const double disc = B * B - 4.0 * A * C;
    if (!(A > 0.0) || disc < 0.0) return 0;
    t0 = std::max(0.0, (-B - std::sqrt(disc)) / (2.0 * A));
    t1 = std::min(1.0, (-B + std::sqrt(disc)) / (2.0 * A));
    if (t0 > t1) return 0;
  }
  const int n = opt.samples;
  std::uint32_t mask = 0;
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 * (t0 + t1) : t0 + (t1 - t0) * double(i) / double(n - 1);
    const Vec3 d = aq + t * ab;
    if (d.norm() < opt.min_sample_distance) continue;
    mask |= std::uint32_t(1) << b.lookup(d);
  }
  return mask;
}

// Exact containment at 10x the sample density; the grid includes every
// one of the 32 sample positions.
std::uint32_t oversampled_exact_mask(const Vec3& q, const Segment& s, const IcosaBins& b) {
  const int n = 10 * 31 + 1;
  std::uint32_t mask = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 d = s.a + (s.b - s.a) * (double(i) / double(n - 1)) - q;
    if (d.norm() < 1e-12) continue;
    mask |= std::uint32_t(1) << b.exact(d);
  }
  return mask;
}

Neighborhood neighborhood_of(const Vec3& q, const std::vector<Segment>& segs) {
  Neighborhood nb;
  nb.query = q;
  for (const auto& s : segs) nb.entries.push_back({&s, point_segment_distance(q, s, DistanceMetric::kShortest)});
  return nb;
}

Eigen::Matrix3d rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace

TEST(Icosahedron, RegularGeometry) {
  const auto& v = bins().vertices();
  for (const Vec3& p : v) EXPECT_NEAR(p.norm(), 1.0, 1e-12);
  // Each vertex has exactly five nearest neighbors at the edge length.
  double edge = 10.0;
  for (std::size_t i = 1; i < v.size(); ++i) edge = std::min(edge, (v[0] - v[i]).norm());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int adjacent = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i != j && std::abs((v[i] - v[j]).norm() - edge) < 1e-9) ++adjacent;
    }
    EXPECT_EQ(adjacent, 5);
  }
  // Faces are equilateral, counter-clockwise from outside, each edge
  // shared by exactly two faces.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& f : bins().faces()) {
    for (int e = 0; e < 3; ++e) {
      const int a = f[std::size_t(e)], b = f[std::size_t((e + 1) % 3)];
      EXPECT_NEAR((v[std::size_t(a)] - v[std::size_t(b)]).norm(), edge, 1e-9);
      ++edge_use[{std::min(a, b), std::max(a, b)}];
    }
    const Vec3 n = (v[std::size_t(f[1])] - v[std::size_t(f[0])]).cross(v[std::size_t(f[2])] - v[std::size_t(f[0])]);
    EXPECT_GT(n.dot(v[std::size_t(f[0])]), 0.0);
  }
  EXPECT_EQ(edge_use.size(), 30u);
  for (const auto& [e, count] : edge_use) EXPECT_EQ(count, 2);
}

TEST(Icosahedron, FaceCentersMapToOwnFace) {
  for (int f = 0; f < IcosaBins::kFaceCount; ++f) {
    EXPECT_EQ(bins().lookup(bins().face_center(f)), f);
    EXPECT_EQ(bins().exact(bins().face_center(f)), f);
  }
}

TEST(Icosahedron, VerticesMapToIncidentFace) {
  const auto& faces = bins().faces();
  for (int v = 0; v < 12; ++v) {
    const Vec3 d = bins().vertices()[std::size_t(v)];
    for (int f : {bins().exact(d), bins().lookup(d)}) {
      const auto& face = faces[std::size_t(f)];
      EXPECT_TRUE(std::find(face.begin(), face.end(), v) != face.end()) << "vertex " << v << " face " << f;
    }
  }
}

TEST(Icosahedron, ExactMatchesNearestCentroid) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100000; ++i) {
    const Vec3 d = unit_vector(rng) * std::exp(std::normal_distribution<double>()(rng));
    ASSERT_EQ(bins().exact(d), nearest_face(bins(), d));
  }
}

TEST(Icosahedron, TableCellsHoldValidFaces) {
  const IcosaBins small(64, 128);
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 128; ++j) {
      const double theta = (i + 0.5) * M_PI / 64.0, phi = (j + 0.5) * 2.0 * M_PI / 128.0;
      const int f = small.lookup(Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)));
      EXPECT_GE(f, 0);
      EXPECT_LT(f, IcosaBins::kFaceCount);
    }
  }
  EXPECT_THROW(IcosaBins(32, 1024), InvalidArgument);
}

TEST(Icosahedron, LookupAgreesWithExact) {
  std::mt19937_64 rng(1);
  int agree = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec3 d = unit_vector(rng);
    agree += bins().lookup(d) == bins().exact(d);
  }
  EXPECT_GE(double(agree) / n, 0.996);
}

TEST(Icosahedron, FastAtan2Accuracy) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100000; ++i) {
    const double y = n(rng), x = n(rng);
    EXPECT_NEAR(IcosaBins::fast_atan2(y, x), std::atan2(y, x), 1e-5);
  }
}

TEST(InteriorFace, ArcSamplesAllLookUpToTheFace) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> spread(0.0, 0.4);
  int hits = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    const Vec3 u = unit_vector(rng);
    const Vec3 v = (u + spread(rng) * unit_vector(rng)).normalized() * (0.5 + spread(rng));
    const int f = bins().interior_face(u, v);
    if (f < 0) continue;
    ++hits;
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      const Vec3 d = (1 - t) * u + t * v;
      ASSERT_EQ(bins().lookup(d), f);
      ASSERT_EQ(bins().exact(d), f);
    }
  }
  EXPECT_GT(hits, 1000);
}

TEST(BinMask, MatchesLiteralSampling) {
  std::mt19937_64 rng(4);
  const DomainBounds box(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  std::uniform_real_distribution<double> len(1e-4, 1.5), rad(0.05, 2.0);
  UniformityOptions opt;
  for (int trial = 0; trial < 200000; ++trial) {
    const Vec3 q = uniform_point(rng, box);
    const Vec3 a = uniform_point(rng, box);
    const Segment s = make_segment(a, a + len(rng) * unit_vector(rng));
    const double r = trial % 3 == 0 ? std::numeric_limits<double>::infinity() : rad(rng);
    opt.samples = trial % 7 == 0 ? 1 + trial % 40 : 32;
    ASSERT_EQ(segment_bin_mask(q, s, r, bins(), opt), literal_mask(q, s, r, bins(), opt)) << "trial " << trial;
  }
}

TEST(BinMask, QueryOnSegmentSkipsCoincidentSample) {
  const Segment s = make_segment(Vec3(-1, 0, 0), Vec3(1, 0, 0));
  UniformityOptions opt;
  opt.samples = 3;
  const std::uint32_t mask = segment_bin_mask(Vec3::Zero(), s, 10.0, bins(), opt);
  EXPECT_EQ(mask, (1u << bins().lookup(Vec3(-1, 0, 0))) | (1u << bins().lookup(Vec3(1, 0, 0))));
}

TEST(BinMask, OutsideSphereIsEmpty) {
  const Segment s = make_segment(Vec3(3, 0, 0), Vec3(3, 1, 0));
  EXPECT_EQ(segment_bin_mask(Vec3::Zero(), s, 1.0, bins()), 0u);
}

TEST(BinMask, CloseToOversampledExact) {
  std::mt19937_64 rng(5);
  const DomainBounds box(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  std::uniform_real_distribution<double> len(0.01, 0.3);
  int equal = 0, subset = 0;
  const int trials = 2000;
  for (int trial = 0; trial < trials; ++trial) {
    const Vec3 q = uniform_point(rng, box);
    std::vector<Segment> segs;
    for (int i = 0; i < 12; ++i) {
      const Vec3 a = q + 0.3 * unit_vector(rng);
      segs.push_back(make_segment(a, a + len(rng) * unit_vector(rng), i));
    }
    std::uint32_t sampled = 0, dense = 0;
    for (const auto& s : segs) {
      sampled |= segment_bin_mask(q, s, std::numeric_limits<double>::infinity(), bins());
      dense |= oversampled_exact_mask(q, s, bins());
    }
    equal += sampled == dense;
    subset += (sampled & ~dense) == 0;
    EXPECT_LE(std::popcount(dense) - std::popcount(sampled), 2);
  }
  // Sampling can only miss a thin sliver of a face; extra bins come from
  // table cells straddling a face boundary.
  EXPECT_GE(double(equal) / trials, 0.9);
  EXPECT_GE(double(subset) / trials, 0.98);
}

TEST(Uniformity, TwentyAlignedSegmentsFlagEveryBin) {
  std::vector<Segment> segs;
  for (int f = 0; f < IcosaBins::kFaceCount; ++f) {
    const Vec3 c = bins().face_center(f);
    const Vec3 t = perpendicular(c);
    segs.push_back(make_segment(0.5 * c - 0.01 * t, 0.5 * c + 0.01 * t, f));
  }
  const auto nb = neighborhood_of(Vec3::Zero(), segs);
  const UniformityResult u = uniformity(nb, bins());
  EXPECT_EQ(u.mu, 1.0);
  EXPECT_EQ(u.flagged_count(), 20);
  double r = 0.0;
  for (const auto& s : segs) r = std::max(r, point_segment_distance(Vec3::Zero(), s, DistanceMetric::kLongest));
  EXPECT_EQ(u.radius_used, r);
}

TEST(Uniformity, OneShortSegmentFlagsOneBin) {
  const Vec3 c = bins().face_center(7);
  const std::vector<Segment> segs{make_segment(c, c + 0.01 * perpendicular(c))};
  const UniformityResult u = uniformity(neighborhood_of(Vec3::Zero(), segs), bins());
  EXPECT_EQ(u.mu, 0.05);
  EXPECT_TRUE(u.flagged_bins[7]);
}

TEST(Uniformity, BoundsOnRandomNeighborhoods) {
  std::mt19937_64 rng(6);
  const DomainBounds box(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  for (int trial = 0; trial < 2000; ++trial) {
    const auto segs = random_segments(rng, 1 + trial % 30, box, 0.5);
    const UniformityResult u = uniformity(neighborhood_of(uniform_point(rng, box), segs), bins());
    EXPECT_GE(u.mu, 0.05);
    EXPECT_LE(u.mu, 1.0);
    EXPECT_EQ(u.mu, u.flagged_count() / 20.0);
  }
  EXPECT_THROW(uniformity(Neighborhood{}, bins()), EmptyError);
}

TEST(Uniformity, MonotoneAtFixedRadius) {
  std::mt19937_64 rng(7);
  const DomainBounds box(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  for (int trial = 0; trial < 500; ++trial) {
    auto segs = random_segments(rng, 20, box, 0.3);
    const Vec3 q = uniform_point(rng, box);
    const auto full = neighborhood_of(q, segs);
    Neighborhood part = full;
    part.entries.resize(1 + trial % 19);
    const auto big = uniformity(full, bins(), 0.8);
    const auto small = uniformity(part, bins(), 0.8);
    for (int f = 0; f < 20; ++f) {
      if (small.flagged_bins[std::size_t(f)]) EXPECT_TRUE(big.flagged_bins[std::size_t(f)]);
    }
    EXPECT_GE(big.mu, small.mu);
  }
}

TEST(Uniformity, SymmetryRotationsKeepAlignedConfiguration) {
  std::vector<Segment> segs;
  for (int f = 0; f < IcosaBins::kFaceCount; ++f) {
    const Vec3 c = bins().face_center(f);
    const Vec3 t = perpendicular(c);
    segs.push_back(make_segment(0.5 * c - 0.01 * t, 0.5 * c + 0.01 * t, f));
  }
  const Vec3 vertex = bins().vertices()[0];
  const Vec3 center = bins().face_center(0);
  for (const Eigen::Matrix3d& R :
       {rotation_about(vertex, 2 * M_PI / 5), rotation_about(vertex, 4 * M_PI / 5), rotation_about(center, 2 * M_PI / 3)}) {
    std::vector<Segment> rotated;
    for (const auto& s : segs) rotated.push_back(make_segment(R * s.a, R * s.b, s.global_id));
    EXPECT_GE(uniformity(neighborhood_of(Vec3::Zero(), rotated), bins()).mu, 18.0 / 20.0);
  }
}

TEST(AverageDistance, Examples) {
  const Segment s1 = make_segment(Vec3(0, 0, 0), Vec3(1, 0, 0)), s2 = make_segment(Vec3(0, 1, 0), Vec3(1, 1, 0));
  Neighborhood nb;
  nb.entries = {{&s1, 2.0}};
  EXPECT_EQ(average_distance(nb), 2.0);
  nb.entries = {{&s1, 1.0}, {&s2, 3.0}};
  EXPECT_EQ(average_distance(nb), 2.0);
  EXPECT_THROW(average_distance(Neighborhood{}), EmptyError);
}

TEST(AverageDistance, MatchesRecomputedDistances) {
  std::mt19937_64 rng(8);
  const DomainBounds box(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  const auto segs = random_segments(rng, 200, box, 0.3);
  const SegmentIndex index(segs, box);
  for (int i = 0; i < 100; ++i) {
    const Vec3 q = uniform_point(rng, box);
    for (auto m : {DistanceMetric::kShortest, DistanceMetric::kLongest, DistanceMetric::kAverage}) {
      SearchConfig cfg = SearchConfig::knn(1 + i % 12, m);
      cfg.corner_exclusion = false;
      const Neighborhood nb = knn(index, q, cfg);
      double sum = 0.0;
      for (const auto& e : nb.entries) sum += point_segment_distance<double>(q, e.segment->a, e.segment->b, m);
      EXPECT_NEAR(average_distance(nb), sum / double(nb.size()), 1e-12);
    }
  }
}
