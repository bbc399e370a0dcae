#pragma once

#include "flowseg/neighborhood.hpp"
#include "flowseg/search.hpp"
#include "flowseg/tracer.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <vector>

namespace flowseg::testing {

inline Segment make_segment(const Vec3& a, const Vec3& b, int id = 0, int line = 0, int index = 0,
                            double speed = 1.0) {
  Segment s;
  s.global_id = id;
  s.streamline_id = line;
  s.index_on_curve = index;
  s.a = a;
  s.b = b;
  s.length = (b - a).norm();
  s.direction = (b - a) / s.length;
  s.speed = speed;
  return s;
}

inline Vec3 uniform_point(std::mt19937_64& rng, const DomainBounds& bounds) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 t(u(rng), u(rng), u(rng));
  return bounds.min_corner() + t.cwiseProduct(bounds.max_corner() - bounds.min_corner());
}

inline Vec3 unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

/// Some unit vector perpendicular to `v`.
inline Vec3 perpendicular(const Vec3& v) {
  const Vec3 other = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return v.cross(other).normalized();
}

/// Random segments with both endpoints in `bounds`; ids dense.
inline std::vector<Segment> random_segments(std::mt19937_64& rng, int n, const DomainBounds& bounds,
                                            double max_length) {
  std::uniform_real_distribution<double> len(1e-3, max_length);
  std::vector<Segment> out;
  out.reserve(std::size_t(n));
  while (int(out.size()) < n) {
    const Vec3 a = uniform_point(rng, bounds);
    const Vec3 b = a + len(rng) * unit_vector(rng);
    if (!bounds.contains(b)) continue;
    const int id = int(out.size());
    out.push_back(make_segment(a, b, id, id / 10, id % 10));
  }
  return out;
}

/// Segments snapped to a coarse lattice so that equal distances (ties)
/// are frequent.
inline std::vector<Segment> lattice_segments(std::mt19937_64& rng, int n, const DomainBounds& bounds) {
  std::uniform_int_distribution<int> cell(0, 4);
  std::uniform_int_distribution<int> axis(0, 2);
  const Vec3 step = (bounds.max_corner() - bounds.min_corner()) / 5.0;
  std::vector<Segment> out;
  for (int id = 0; id < n; ++id) {
    const Vec3 a = bounds.min_corner() + Vec3(cell(rng), cell(rng), cell(rng)).cwiseProduct(step);
    const Vec3 b = a + 0.5 * step[0] * Vec3::Unit(axis(rng));
    out.push_back(make_segment(a, b, id, id / 10, id % 10));
  }
  return out;
}

// Linear-scan oracles for the modified queries.

inline std::vector<std::pair<double, int>> scan(std::span<const Segment> segments, const Vec3& p, DistanceMetric m,
                                                const Exclusion* exclusion = nullptr) {
  std::vector<std::pair<double, int>> all;
  for (const auto& s : segments) {
    if (exclusion && exclusion->excludes(s)) continue;
    all.emplace_back(point_segment_distance(p, s, m), s.global_id);
  }
  std::sort(all.begin(), all.end());
  return all;
}

inline double nearest_corner(const DomainBounds& b, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? b.max_corner().x() : b.min_corner().x(), (c & 2) ? b.max_corner().y() : b.min_corner().y(),
                      (c & 4) ? b.max_corner().z() : b.min_corner().z());
    best = std::min(best, (corner - p).norm());
  }
  return best;
}

inline std::vector<std::pair<double, int>> oracle_knn(std::span<const Segment> segments, const DomainBounds& bounds,
                                                      const Vec3& p, int k, DistanceMetric m, bool corner_exclusion) {
  auto all = scan(segments, p, m);
  all.resize(std::min<std::size_t>(all.size(), std::size_t(k)));
  if (!corner_exclusion || all.empty()) return all;
  const double dc = nearest_corner(bounds, p);
  std::vector<std::pair<double, int>> kept;
  for (const auto& e : all) {
    if (e.first <= dc) kept.push_back(e);
  }
  if (kept.empty()) kept.push_back(all.front());
  return kept;
}

inline std::vector<std::pair<double, int>> oracle_rbn(std::span<const Segment> segments, const Vec3& p, double r,
                                                      DistanceMetric m, bool fallback) {
  const auto all = scan(segments, p, m);
  std::vector<std::pair<double, int>> kept;
  for (const auto& e : all) {
    if (e.first < r) kept.push_back(e);
  }
  if (kept.empty() && fallback && !all.empty()) kept.push_back(all.front());
  return kept;
}

inline std::vector<std::pair<double, int>> as_pairs(const Neighborhood& nb) {
  std::vector<std::pair<double, int>> out;
  for (const auto& e : nb.entries) out.emplace_back(e.distance, e.segment->global_id);
  return out;
}

/// Face whose centroid direction is closest to `d`; for a regular
/// icosahedron this is the face containing `d`.
inline int nearest_face(const IcosaBins& bins, const Vec3& d) {
  int best = 0;
  double best_dot = -2.0;
  const Vec3 u = d.normalized();
  for (int f = 0; f < IcosaBins::kFaceCount; ++f) {
    const double dot = bins.face_center(f).dot(u);
    if (dot > best_dot) {
      best_dot = dot;
      best = f;
    }
  }
  return best;
}

}  // namespace flowseg::testing
