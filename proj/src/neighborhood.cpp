#include "flowseg/neighborhood.hpp"

#include <array>
#include <bit>
#include <limits>
#include <numbers>

namespace flowseg {

IcosaBins::IcosaBins(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
  if (n_theta < 64 || n_phi < 64) throw InvalidArgument("icosahedral lookup needs at least 64x64 cells");
  theta_scale_ = double(n_theta_) / kPi;
  phi_scale_ = double(n_phi_) / kTwoPi;

  const double g = std::numbers::phi;
  const std::array<Vec3, 12> raw = {
      Vec3(0, 1, g),  Vec3(0, -1, g),  Vec3(0, 1, -g),  Vec3(0, -1, -g),
      Vec3(1, g, 0),  Vec3(-1, g, 0),  Vec3(1, -g, 0),  Vec3(-1, -g, 0),
      Vec3(g, 0, 1),  Vec3(-g, 0, 1),  Vec3(g, 0, -1),  Vec3(-g, 0, -1)};
  for (int i = 0; i < 12; ++i) vertices_[std::size_t(i)] = raw[std::size_t(i)].normalized();

  // Adjacent vertices sit at the largest off-diagonal dot product.
  double edge_dot = -1.0;
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) edge_dot = std::max(edge_dot, vertices_[i].dot(vertices_[j]));
  }
  const auto adjacent = [&](int i, int j) { return vertices_[i].dot(vertices_[j]) > edge_dot - 1e-9; };
  int f = 0;
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) {
      for (int k = j + 1; k < 12; ++k) {
        if (!(adjacent(i, j) && adjacent(j, k) && adjacent(i, k))) continue;
        if (f >= kFaceCount) throw Error("icosahedron construction produced too many faces");
        std::array<int, 3> face{i, j, k};
        if (vertices_[i].cross(vertices_[j]).dot(vertices_[k]) < 0.0) std::swap(face[1], face[2]);
        faces_[std::size_t(f++)] = face;
      }
    }
  }
  if (f != kFaceCount) throw Error("icosahedron construction produced too few faces");
  for (int i = 0; i < kFaceCount; ++i) {
    for (int e = 0; e < 3; ++e) {
      const Vec3& a = vertices_[faces_[i][std::size_t(e)]];
      const Vec3& b = vertices_[faces_[i][std::size_t((e + 1) % 3)]];
      edge_normals_[std::size_t(i)][std::size_t(e)] = a.cross(b).normalized();
    }
  }
  // A direction farther than this from every edge of its face shares the
  // face with the center of whichever table cell it lands in: the cell
  // center is at most half a cell away in each of theta and phi, plus the
  // atan2 error.
  const double reach = 0.5 * kPi / n_theta_ + 0.5 * kTwoPi / n_phi_ + 1e-4;
  safe_sin_ = std::sin(1.25 * reach);

  table_.resize(std::size_t(n_theta_) * std::size_t(n_phi_));
  for (int i = 0; i < n_theta_; ++i) {
    const double theta = (i + 0.5) * kPi / n_theta_;
    for (int j = 0; j < n_phi_; ++j) {
      const double phi = (j + 0.5) * kTwoPi / n_phi_;
      const Vec3 d(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
      table_[std::size_t(i) * std::size_t(n_phi_) + std::size_t(j)] = static_cast<std::uint8_t>(exact(d));
    }
  }
}

Vec3 IcosaBins::face_center(int f) const {
  const auto& face = faces_[std::size_t(f)];
  return (vertices_[face[0]] + vertices_[face[1]] + vertices_[face[2]]).normalized();
}

int IcosaBins::exact(const Vec3& d) const {
  int best_face = 0;
  double best_margin = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < kFaceCount; ++f) {
    const Vec3& a = vertices_[faces_[f][0]];
    const Vec3& b = vertices_[faces_[f][1]];
    const Vec3& c = vertices_[faces_[f][2]];
    const double m = std::min({a.cross(b).dot(d), b.cross(c).dot(d), c.cross(a).dot(d)});
    if (m >= 0.0) return f;
    // Rounding can leave an on-edge direction outside every face; fall back
    // to the face it misses by the least.
    if (m > best_margin) {
      best_margin = m;
      best_face = f;
    }
  }
  return best_face;
}

IcosaBins build_icosa_bins(int n_theta, int n_phi) { return IcosaBins(n_theta, n_phi); }

const IcosaBins& default_icosa_bins() {
  static const IcosaBins bins(512, 1024);
  return bins;
}

double average_distance(const Neighborhood& nb) {
  if (nb.empty()) throw EmptyError("average distance of an empty neighborhood");
  double sum = 0.0;
  for (const NeighborEntry& e : nb.entries) sum += e.distance;
  return sum / double(nb.size());
}

int UniformityResult::flagged_count() const {
  int n = 0;
  for (bool b : flagged_bins) n += b ? 1 : 0;
  return n;
}

std::uint32_t segment_bin_mask(const Vec3& query, const Segment& segment, double radius,
                               const IcosaBins& bins, const UniformityOptions& options) {
  const Vec3 ab = segment.b - segment.a;
  const Vec3 aq = segment.a - query;
  double t0 = 0.0, t1 = 1.0;
  if (aq.norm() > radius || (segment.b - query).norm() > radius) {
    // |aq + t ab|^2 = r^2
    const double A = ab.squaredNorm();
    const double B = 2.0 * aq.dot(ab);
    const double C = aq.squaredNorm() - radius * radius;
    const double disc = B * B - 4.0 * A * C;
    if (!(A > 0.0) || disc < 0.0) return 0;
    const double sq = std::sqrt(disc);
    t0 = std::max(0.0, (-B - sq) / (2.0 * A));
    t1 = std::min(1.0, (-B + sq) / (2.0 * A));
    if (t0 > t1) return 0;
  }
  const int n = std::max(options.samples, 1);
  if (n == 1) {
    const Vec3 d = aq + 0.5 * (t0 + t1) * ab;
    return d.norm() < options.min_sample_distance ? 0u : std::uint32_t(1) << bins.lookup(d);
  }
  const auto sample = [&](int i) { return Vec3(aq + (t0 + (t1 - t0) * double(i) / double(n - 1)) * ab); };
  // Sample directions between two samples lie on the arc joining them, so a
  // range whose ends sit inside one face contributes only that face.
  std::uint32_t mask = 0;
  std::array<std::pair<int, int>, 64> stack;
  int top = 0;
  stack[top++] = {0, n - 1};
  while (top > 0) {
    const auto [lo, hi] = stack[--top];
    if (hi - lo >= 3) {
      const Vec3 u = sample(lo), v = sample(hi);
      if (u.norm() >= options.min_sample_distance && v.norm() >= options.min_sample_distance) {
        const int f = bins.interior_face(u, v);
        if (f >= 0) {
          mask |= std::uint32_t(1) << f;
          continue;
        }
      }
      const int mid = (lo + hi) / 2;
      stack[top++] = {mid + 1, hi};
      stack[top++] = {lo, mid};
      continue;
    }
    for (int i = lo; i <= hi; ++i) {
      const Vec3 d = sample(i);
      if (d.norm() < options.min_sample_distance) continue;
      mask |= std::uint32_t(1) << bins.lookup(d);
    }
  }
  return mask;
}

UniformityResult uniformity_from_mask(std::uint32_t mask, double radius) {
  UniformityResult out;
  out.radius_used = radius;
  for (int f = 0; f < IcosaBins::kFaceCount; ++f) out.flagged_bins[std::size_t(f)] = (mask >> f) & 1u;
  out.mu = double(std::popcount(mask)) / double(IcosaBins::kFaceCount);
  return out;
}

UniformityResult uniformity(const Neighborhood& nb, const IcosaBins& bins, double radius,
                            const UniformityOptions& options) {
  if (nb.empty()) throw EmptyError("uniformity of an empty neighborhood");
  std::uint32_t mask = 0;
  for (const NeighborEntry& e : nb.entries) mask |= segment_bin_mask(nb.query, *e.segment, radius, bins, options);
  return uniformity_from_mask(mask, radius);
}

UniformityResult uniformity(const Neighborhood& nb, const IcosaBins& bins, const UniformityOptions& options) {
  if (nb.empty()) throw EmptyError("uniformity of an empty neighborhood");
  double radius = 0.0;
  for (const NeighborEntry& e : nb.entries) {
    radius = std::max(radius, point_segment_distance(nb.query, *e.segment, DistanceMetric::kLongest));
  }
  return uniformity(nb, bins, radius, options);
}

}  // namespace flowseg
