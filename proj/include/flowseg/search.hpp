#pragma once

#include "flowseg/tracer.hpp"

#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowseg {

enum class DistanceMetric { kShortest, kLongest, kAverage };

DistanceMetric parse_metric(std::string_view name);
std::string to_string(DistanceMetric metric);

/// Point-to-segment distance under `metric`:
///   shortest - distance to the clamped projection onto [a, b]
///   longest  - the larger of the two endpoint distances
///   average  - (shortest + longest) / 2
template <typename Scalar>
Scalar point_segment_distance(const Vector3<Scalar>& p, const Vector3<Scalar>& a,
                              const Vector3<Scalar>& b, DistanceMetric metric) {
  const auto shortest = [&] {
    const Vector3<Scalar> ab = b - a;
    const Scalar len2 = ab.squaredNorm();
    Scalar t = len2 > Scalar(0) ? (p - a).dot(ab) / len2 : Scalar(0);
    t = std::clamp(t, Scalar(0), Scalar(1));
    return (p - (a + t * ab)).norm();
  };
  const auto longest = [&] { return std::max((p - a).norm(), (p - b).norm()); };
  switch (metric) {
    case DistanceMetric::kShortest: return shortest();
    case DistanceMetric::kLongest: return longest();
    case DistanceMetric::kAverage: return Scalar(0.5) * (shortest() + longest());
  }
  return Scalar(0);
}

inline double point_segment_distance(const Vec3& p, const Segment& s, DistanceMetric metric) {
  return point_segment_distance<double>(p, s.a, s.b, metric);
}

struct KnnParams {
  int k = 6;
};
struct RbnParams {
  double r = 0.1;
};

struct SearchConfig {
  std::variant<KnnParams, RbnParams> method = KnnParams{};
  DistanceMetric metric = DistanceMetric::kShortest;
  bool corner_exclusion = true;  // KNN only
  bool nearest_fallback = true;  // RBN only

  static SearchConfig knn(int k, DistanceMetric metric = DistanceMetric::kShortest);
  static SearchConfig rbn(double r, DistanceMetric metric = DistanceMetric::kShortest);

  bool is_knn() const { return std::holds_alternative<KnnParams>(method); }
  /// K for KNN, R for RBN.
  double parameter() const;
  SearchConfig with_parameter(double value) const;
  void validate() const;
};

/// Parses "knn:K[:metric]" or "rbn:R[:metric]".
SearchConfig parse_search_spec(std::string_view spec);
std::string to_string(const SearchConfig& cfg);

/// Borrowed reference into a SegmentIndex (or any segment storage that
/// outlives the entry) plus its distance to the query.
struct NeighborEntry {
  const Segment* segment = nullptr;
  double distance = 0.0;
};

struct Neighborhood {
  Vec3 query = Vec3::Zero();
  DistanceMetric metric = DistanceMetric::kShortest;
  std::vector<NeighborEntry> entries;  // ascending (distance, global_id)

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Segments skipped by a query: `segment_id` itself and every segment on
/// `streamline_id` whose curve index is within `window` of `index_on_curve`.
struct Exclusion {
  int segment_id = -1;
  int streamline_id = -1;
  int index_on_curve = 0;
  int window = 0;

  static Exclusion around(const Segment& s, int window) {
    return {s.global_id, s.streamline_id, s.index_on_curve, window};
  }
  bool excludes(const Segment& s) const {
    return s.global_id == segment_id ||
           (s.streamline_id == streamline_id && std::abs(s.index_on_curve - index_on_curve) <= window);
  }
};

/// Median-split KD-tree over segment midpoints with per-node bounding boxes
/// of the segment endpoints. Immutable after construction; queries are
/// reentrant. Results are ordered by (distance, global_id).
class SegmentIndex {
 public:
  /// `segments[i].global_id` must equal i. Throws EmptyError on empty input.
  SegmentIndex(std::vector<Segment> segments, const DomainBounds& bounds, int leaf_size = 8);

  std::span<const Segment> segments() const { return segments_; }
  const Segment& segment(int id) const { return segments_[std::size_t(id)]; }
  const DomainBounds& bounds() const { return bounds_; }
  std::size_t size() const { return segments_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  int depth() const { return depth_; }

  /// Unmodified top-k under `metric`. `upper_bound`, when finite, must not
  /// be below the true k-th distance; it only speeds up pruning.
  std::vector<NeighborEntry> nearest(const Vec3& p, int k, DistanceMetric metric,
                                     const Exclusion* exclusion = nullptr,
                                     double upper_bound = std::numeric_limits<double>::infinity()) const;
  /// Unmodified radius query: every segment with distance strictly below r.
  std::vector<NeighborEntry> within(const Vec3& p, double r, DistanceMetric metric,
                                    const Exclusion* exclusion = nullptr) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  int build(std::uint32_t begin, std::uint32_t end, int depth);

  std::vector<Segment> segments_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> leaf_a_;
  std::vector<Vec3> leaf_b_;
  DomainBounds bounds_;
  int leaf_size_;
  int depth_ = 0;
};

SegmentIndex build_index(std::vector<Segment> segments, const DomainBounds& bounds);

/// Length of the modified-KNN result taken from the ascending list `base`
/// (at least k entries, or all segments). With corner exclusion, entries
/// farther than `d_corner` are dropped, keeping the nearest if none remain.
std::size_t knn_prefix_length(std::span<const NeighborEntry> base, int k, double d_corner,
                              bool corner_exclusion);
/// Length of the modified-RBN result taken from `base`, which holds every
/// segment below some r_max >= r, or the single nearest segment when there
/// is none.
std::size_t rbn_prefix_length(std::span<const NeighborEntry> base, double r, bool nearest_fallback);

/// Candidate list whose prefixes answer RBN for every r <= r_max.
std::vector<NeighborEntry> rbn_base(const SegmentIndex& index, const Vec3& p, double r_max,
                                    DistanceMetric metric, bool nearest_fallback,
                                    const Exclusion* exclusion = nullptr);

/// What one shared query must cover for a set of cells.
struct CellEnvelope {
  int k_max = 0;       // 0 when there is no KNN cell
  double r_max = 0.0;  // 0 when there is no RBN cell
  bool nearest_fallback = false;
  DistanceMetric metric = DistanceMetric::kShortest;
};

/// Validates every cell; throws InvalidArgument when the cells are empty or
/// their metrics differ.
CellEnvelope envelope_of(std::span<const SearchConfig> cells);

/// Ascending candidate list answering, by prefixes, every KNN cell with
/// k <= k_max and every RBN cell with r <= r_max under one metric. Pass
/// k_max = 0 or r_max = 0 when there is no cell of that method.
/// `upper_bound` is forwarded to SegmentIndex::nearest.
std::vector<NeighborEntry> shared_base(const SegmentIndex& index, const Vec3& p, int k_max, double r_max,
                                       DistanceMetric metric, bool nearest_fallback,
                                       const Exclusion* exclusion = nullptr,
                                       double upper_bound = std::numeric_limits<double>::infinity());
/// Prefix length of `base` that answers `cfg` at a query with corner
/// distance `d_corner`.
std::size_t prefix_length(std::span<const NeighborEntry> base, const SearchConfig& cfg, double d_corner);

/// Modified KNN. Throws DomainError for a query outside the index bounds.
Neighborhood knn(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                 const Exclusion* exclusion = nullptr);
/// Modified RBN. Throws DomainError for a query outside the index bounds.
Neighborhood rbn(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                 const Exclusion* exclusion = nullptr);
/// Dispatches on cfg.method.
Neighborhood search(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                    const Exclusion* exclusion = nullptr);

}  // namespace flowseg
