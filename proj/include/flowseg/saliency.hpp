#pragma once

#include "flowseg/search.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace flowseg {

enum class RefRadiusRule { kFixed, kMeanNeighborDistance };

struct SaliencyConfig {
  SearchConfig search;
  int ref_samples = 16;
  RefRadiusRule ref_radius_rule = RefRadiusRule::kMeanNeighborDistance;
  double fixed_radius = 0.1;  // used by RefRadiusRule::kFixed
  /// Same-streamline segments within this many indices of the query segment
  /// are never returned as neighbors.
  int exclusion_window = 1;
  double epsilon = 1e-9;    // floor for start-point distances in the weights
  double min_speed = 0.0;   // reference samples slower than this are skipped

  void validate() const;
};

struct SaliencyRecord {
  int segment_id = 0;
  double s_cal = 0.0;
  double s_ref = 0.0;
  double ref_radius = 0.0;
  int n_neighbors = 0;
};

struct CalculatedSaliency {
  double value = 0.0;
  Neighborhood neighborhood;
  /// Mean distance from the query start point to the neighbors' start points.
  double mean_start_distance = 0.0;
};

/// Inverse-square-distance weighted mean angle between `seg` and its
/// neighbors, queried at seg.a. Returns nullopt when no neighbor remains
/// after exclusion.
std::optional<CalculatedSaliency> calculated_saliency(const Segment& seg, const SegmentIndex& index,
                                                      const SaliencyConfig& cfg);

/// Orthonormal (e1, e2) perpendicular to `v`, built from the canonical axis
/// least aligned with v.
std::pair<Vec3, Vec3> perpendicular_basis(const Vec3& v);

/// Mean angle between seg.direction and the field sampled at `samples`
/// points on the circle of `radius` around seg.a perpendicular to the
/// segment. Out-of-bounds and too-slow samples are skipped; nullopt when all
/// are skipped.
std::optional<double> reference_saliency(const Segment& seg, const VectorField& field, double radius, int samples,
                                         double min_speed = 0.0);

struct SaliencySet {
  double parameter = 0.0;
  std::vector<SaliencyRecord> records;
  std::size_t dropped_no_neighbor = 0;
  std::size_t dropped_no_reference = 0;
};

/// Scores every segment for each search cell. Cells must share one metric
/// and may mix KNN and RBN; cfg.search is not used. Each segment is queried
/// once and cells selecting the same neighbor prefix share their records.
std::vector<SaliencySet> saliency_cells(const VectorField& field, const SegmentIndex& index,
                                        const SaliencyConfig& cfg, std::span<const SearchConfig> cells,
                                        int threads = 1);

/// Scores every segment for each parameter value (K or R, following
/// cfg.search's method). Neighbors are found once with the largest
/// parameter; smaller values use prefixes. Output order follows `parameters`.
std::vector<SaliencySet> saliency_sweep(const VectorField& field, const SegmentIndex& index,
                                        const SaliencyConfig& cfg, std::span<const double> parameters,
                                        int threads = 1);

}  // namespace flowseg
