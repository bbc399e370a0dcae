#pragma once

#include "flowseg/search.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace flowseg {

/// The 20 faces of a regular icosahedron projected onto the unit sphere,
/// with a (theta, phi) lookup table mapping directions to faces.
class IcosaBins {
 public:
  static constexpr int kFaceCount = 20;

  /// Requires n_theta, n_phi >= 64.
  IcosaBins(int n_theta = 512, int n_phi = 1024);

  const std::array<Vec3, 12>& vertices() const { return vertices_; }
  /// Vertex indices of each face, counter-clockwise seen from outside.
  const std::array<std::array<int, 3>, kFaceCount>& faces() const { return faces_; }
  /// Unit direction through the centroid of face `f`.
  Vec3 face_center(int f) const;

  int n_theta() const { return n_theta_; }
  int n_phi() const { return n_phi_; }

  /// Face containing direction `d` by sign-of-determinant tests; boundary
  /// directions go to the lowest face index. `d` need not be normalized.
  int exact(const Vec3& d) const;

  /// Face stored in the table cell that contains the spherical coordinates
  /// of `d`. `d` need not be normalized.
  int lookup(const Vec3& d) const {
    const double rho = std::sqrt(d.x() * d.x() + d.y() * d.y());
    const double theta = fast_atan2(rho, d.z());
    double phi = fast_atan2(d.y(), d.x());
    if (phi < 0.0) phi += kTwoPi;
    int i = static_cast<int>(theta * theta_scale_);
    int j = static_cast<int>(phi * phi_scale_);
    i = i < n_theta_ ? i : n_theta_ - 1;
    j = j < n_phi_ ? j : j - n_phi_;
    return table_[std::size_t(i) * std::size_t(n_phi_) + std::size_t(j)];
  }

  /// Face F such that every direction on the great-circle arc from `u` to
  /// `v` lies inside F with enough margin that lookup() returns F for it;
  /// -1 when the arc comes close to a face boundary.
  int interior_face(const Vec3& u, const Vec3& v) const {
    const int f = lookup(u);
    const auto& n = edge_normals_[std::size_t(f)];
    const double mu = safe_sin_ * u.norm(), mv = safe_sin_ * v.norm();
    for (int e = 0; e < 3; ++e) {
      if (n[std::size_t(e)].dot(u) < mu || n[std::size_t(e)].dot(v) < mv) return -1;
    }
    return f;
  }

  /// atan2 with absolute error below 1e-5 rad; used only to pick table cells.
  static double fast_atan2(double y, double x) {
    const double ax = std::abs(x), ay = std::abs(y);
    const double hi = std::max(ax, ay);
    if (hi == 0.0) return 0.0;
    const double t = std::min(ax, ay) / hi;
    const double s = t * t;
    double r = ((((-0.0117212 * s + 0.05265332) * s - 0.11643287) * s + 0.19354346) * s - 0.33262347) * s +
               0.99997726;
    r *= t;
    if (ay > ax) r = kHalfPi - r;
    if (x < 0.0) r = kPi - r;
    return y < 0.0 ? -r : r;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  static constexpr double kHalfPi = 0.5 * kPi;
  static constexpr double kTwoPi = 2.0 * kPi;

  std::array<Vec3, 12> vertices_;
  std::array<std::array<int, 3>, kFaceCount> faces_;
  std::array<std::array<Vec3, 3>, kFaceCount> edge_normals_;  // unit, pointing into the face
  double safe_sin_ = 1.0;
  int n_theta_;
  int n_phi_;
  double theta_scale_;
  double phi_scale_;
  std::vector<std::uint8_t> table_;
};

IcosaBins build_icosa_bins(int n_theta = 512, int n_phi = 1024);

/// Process-wide 512 x 1024 table, built on first use.
const IcosaBins& default_icosa_bins();

/// Mean of the stored entry distances. Throws EmptyError.
double average_distance(const Neighborhood& nb);

struct UniformityOptions {
  int samples = 32;                    // per segment, along its clipped extent
  double min_sample_distance = 1e-12;  // samples this close to the query are skipped
};

struct UniformityResult {
  double mu = 0.0;
  std::array<bool, IcosaBins::kFaceCount> flagged_bins{};
  double radius_used = 0.0;

  int flagged_count() const;
};

/// Bins hit by samples of `segment` clipped to the sphere of `radius`
/// around `query`, as a 20-bit mask.
std::uint32_t segment_bin_mask(const Vec3& query, const Segment& segment, double radius,
                               const IcosaBins& bins, const UniformityOptions& options = {});

UniformityResult uniformity_from_mask(std::uint32_t mask, double radius);

/// Uniformity with the sphere radius set to the largest endpoint distance
/// of any neighbor, so every neighbor lies inside it. Throws EmptyError.
UniformityResult uniformity(const Neighborhood& nb, const IcosaBins& bins,
                            const UniformityOptions& options = {});
/// Uniformity at a caller-chosen sphere radius.
UniformityResult uniformity(const Neighborhood& nb, const IcosaBins& bins, double radius,
                            const UniformityOptions& options = {});

}  // namespace flowseg
