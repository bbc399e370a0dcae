#pragma once

#include "flowseg/core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowseg {

/// Axis-aligned box, min_corner < max_corner componentwise.
class DomainBounds {
 public:
  DomainBounds(const Vec3& min_corner, const Vec3& max_corner);

  const Vec3& min_corner() const { return min_; }
  const Vec3& max_corner() const { return max_; }
  Vec3 extent() const { return max_ - min_; }
  double diagonal() const { return extent().norm(); }

  /// Inclusive containment with an absolute slack `tol`.
  bool contains(const Vec3& p, double tol = 0.0) const;
  std::array<Vec3, 8> corners() const;

  bool operator==(const DomainBounds&) const = default;

 private:
  Vec3 min_;
  Vec3 max_;
};

/// Distance from `p` to the nearest of the 8 box corners.
double corner_distance(const DomainBounds& bounds, const Vec3& p);

/// Regular lattice geometry shared by vector and scalar grids. Nodes are laid
/// out x-fastest.
struct GridSpec {
  std::array<int, 3> dims{2, 2, 2};
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();

  /// Spacing chosen so the lattice spans `bounds` exactly.
  static GridSpec spanning(const DomainBounds& bounds, std::array<int, 3> dims);

  std::size_t size() const {
    return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * std::size_t(k));
  }
  std::array<int, 3> unravel(std::size_t idx) const;
  Vec3 node(int i, int j, int k) const {
    return origin + spacing.cwiseProduct(Vec3(i, j, k));
  }
  Vec3 node(std::size_t idx) const;
  DomainBounds bounds() const;

  /// Throws InvalidGridError unless dims >= 2 and spacing is positive and finite.
  void validate() const;
};

struct GridField {
  GridField(GridSpec grid, std::vector<Vec3> values);

  GridSpec grid;
  std::vector<Vec3> values;

  const Vec3& at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }
  bool operator==(const GridField& other) const;
};

struct ScalarGrid {
  GridSpec grid;
  std::vector<double> values;
};

enum class AnalyticKind { kRotor, kSaddleSpiral, kAbc };

/// Closed-form stand-in flows. Rotor: (-y, x, rotor_axial). Saddle-spiral:
/// (x, -y, saddle_amplitude * sin(pi z)). ABC: the Arnold-Beltrami-Childress
/// flow with coefficients abc_a, abc_b, abc_c.
struct AnalyticParams {
  double rotor_axial = 0.1;
  double saddle_amplitude = 0.3;
  double abc_a = 1.7320508075688772;
  double abc_b = 1.4142135623730951;
  double abc_c = 1.0;
};

struct AnalyticField {
  AnalyticKind kind = AnalyticKind::kRotor;
  AnalyticParams params;
  DomainBounds bounds{Vec3::Constant(-2.0), Vec3::Constant(2.0)};

  static AnalyticField rotor(AnalyticParams params = {});
  static AnalyticField saddle_spiral(AnalyticParams params = {});
  static AnalyticField abc(AnalyticParams params = {});
  static AnalyticField make(AnalyticKind kind, AnalyticParams params = {});

  Vec3 evaluate(const Vec3& p) const;
};

AnalyticKind parse_analytic_kind(std::string_view name);
std::string to_string(AnalyticKind kind);

/// Either a sampled grid or a closed-form flow; immutable after construction.
class VectorField {
 public:
  VectorField(GridField grid);          // NOLINT(google-explicit-constructor)
  VectorField(AnalyticField analytic);  // NOLINT(google-explicit-constructor)

  const DomainBounds& bounds() const { return bounds_; }
  const GridField* grid() const { return std::get_if<GridField>(&source_); }
  const AnalyticField* analytic() const { return std::get_if<AnalyticField>(&source_); }

  /// Throws DomainError when `p` is outside the bounds.
  Vec3 sample(const Vec3& p) const;

 private:
  std::variant<GridField, AnalyticField> source_;
  DomainBounds bounds_;
  double tolerance_;
};

/// Trilinear interpolation of x-fastest node data. Exact at nodes and for
/// globally linear data.
template <typename Scalar, typename Value>
Value trilinear(const GridSpec& grid, const std::vector<Value>& values, const Vector3<Scalar>& p) {
  std::array<int, 3> cell{};
  std::array<Scalar, 3> t{};
  for (int axis = 0; axis < 3; ++axis) {
    const Scalar u = (p[axis] - Scalar(grid.origin[axis])) / Scalar(grid.spacing[axis]);
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, grid.dims[axis] - 2);
    cell[axis] = i;
    t[axis] = u - Scalar(i);
  }
  const auto at = [&](int di, int dj, int dk) -> const Value& {
    return values[grid.index(cell[0] + di, cell[1] + dj, cell[2] + dk)];
  };
  const Scalar tx = t[0], ty = t[1], tz = t[2];
  const Value c00 = at(0, 0, 0) * (Scalar(1) - tx) + at(1, 0, 0) * tx;
  const Value c10 = at(0, 1, 0) * (Scalar(1) - tx) + at(1, 1, 0) * tx;
  const Value c01 = at(0, 0, 1) * (Scalar(1) - tx) + at(1, 0, 1) * tx;
  const Value c11 = at(0, 1, 1) * (Scalar(1) - tx) + at(1, 1, 1) * tx;
  const Value c0 = c00 * (Scalar(1) - ty) + c10 * ty;
  const Value c1 = c01 * (Scalar(1) - ty) + c11 * ty;
  return c0 * (Scalar(1) - tz) + c1 * tz;
}

Vec3 sample(const VectorField& field, const Vec3& p);
Vec3 sample(const GridField& field, const Vec3& p);
double sample(const ScalarGrid& grid, const Vec3& p);

/// Evaluates `field` at every node of `grid`.
GridField resample(const VectorField& field, const GridSpec& grid);

/// Frobenius norm of the central-difference Jacobian at every node
/// (one-sided differences on the boundary).
ScalarGrid gradient_magnitude_field(const GridField& field);
/// Grid fields are used as-is; analytic fields are resampled on `dims` first.
ScalarGrid gradient_magnitude_field(const VectorField& field, std::array<int, 3> dims);

/// Root-mean-square speed; analytic fields are sampled on a 16^3 lattice.
double rms_speed(const VectorField& field);

// VF1 grid files: a text header line followed by little-endian float64
// triples, x-fastest.
void save_grid(const GridField& field, std::ostream& out);
void save_grid(const GridField& field, const std::filesystem::path& path);
GridField load_grid(std::istream& in);
GridField load_grid(const std::filesystem::path& path);

/// FNV-1a over the serialized VF1 bytes.
std::uint64_t content_hash(const GridField& field);

}  // namespace flowseg
