#pragma once

#include "flowseg/neighborhood.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowseg {

enum class WeightKind { kUniform, kGaussian, kInverseDistance };

WeightKind parse_weight_kind(std::string_view name);
std::string to_string(WeightKind kind);

struct WeightScheme {
  WeightKind kind = WeightKind::kInverseDistance;
  /// Gaussian width; when unset the neighborhood's mean distance is used.
  std::optional<double> sigma;
  /// Distances are clamped to at least epsilon before weighting.
  double epsilon = 1e-9;
};

enum class VectorMode { kDirect, kCentralDifference };

/// Which distance feeds the weights: the one the search produced, or the
/// shortest point-segment distance regardless of the search metric.
enum class WeightDistance { kSearchMetric, kShortest };

/// Normalized weights (sum 1) for the given neighbor distances.
Eigen::VectorXd compute_weights(std::span<const double> distances, const WeightScheme& scheme);

/// direction * speed, or for central-difference the mean of that vector over
/// the segment and its predecessor/successor on the same streamline.
/// `all` is the global segment array indexed by global_id.
Vec3 segment_vector(const Segment& s, VectorMode mode, std::span<const Segment> all);

/// Weighted sum over the neighborhood. Throws EmptyError.
Vec3 reconstruct_vector(const Neighborhood& nb, const WeightScheme& scheme, VectorMode mode,
                        std::span<const Segment> all, WeightDistance weight_distance = WeightDistance::kSearchMetric);

struct ReconstructionRecord {
  Vec3 grid_point = Vec3::Zero();
  Vec3 reconstructed = Vec3::Zero();
  Vec3 truth = Vec3::Zero();
  double error = 0.0;
  int n_neighbors = 0;
  double avg_distance = 0.0;
  double uniformity = 0.0;
};

struct ReconstructionSummary {
  std::size_t count = 0;
  double e_mean = 0.0;
  double e_p10 = 0.0;
  double e_p50 = 0.0;
  double e_p90 = 0.0;
  double e_max = 0.0;
  double mean_n_neighbors = 0.0;
  double mean_avg_distance = 0.0;
  double mean_uniformity = 0.0;
  double min_uniformity = 0.0;
  double max_uniformity = 0.0;
  /// Mean of |V - V_g| / |V_g| over points with |V_g| above the speed floor.
  std::optional<double> normalized_e_mean;
};

struct ReconstructionOptions {
  WeightScheme scheme;
  VectorMode mode = VectorMode::kDirect;
  WeightDistance weight_distance = WeightDistance::kSearchMetric;
  bool normalized_error = false;
  double min_speed = 0.0;  // floor for the normalized error
  UniformityOptions uniformity;
  int threads = 1;
};

struct ReconstructionResult {
  std::vector<ReconstructionRecord> records;
  ReconstructionSummary summary;
};

/// Nearest-rank percentile (pct in [0, 100]) of unsorted values.
double nearest_rank_percentile(std::vector<double> values, double pct);

ReconstructionSummary summarize(std::span<const ReconstructionRecord> records, bool normalized_error = false,
                                double min_speed = 0.0);

/// One record per node of `grid`, with `truth` sampled at the node.
ReconstructionResult reconstruct_field(const VectorField& truth, const GridSpec& grid, const SegmentIndex& index,
                                       const SearchConfig& cfg, const ReconstructionOptions& options,
                                       const IcosaBins& bins = default_icosa_bins());

/// Grid fields reconstruct on their own nodes.
ReconstructionResult reconstruct_field(const GridField& truth, const SegmentIndex& index, const SearchConfig& cfg,
                                       const ReconstructionOptions& options,
                                       const IcosaBins& bins = default_icosa_bins());

/// Records for several search cells sharing one metric (KNN and RBN may be
/// mixed). Each grid point is queried once and every cell is answered from a
/// prefix of the same ascending list, so cells that select the same prefix
/// share their record values. Output order follows `cells`. Throws
/// InvalidArgument when the metrics differ.
std::vector<ReconstructionResult> reconstruct_cells(const VectorField& truth, const GridSpec& grid,
                                                    const SegmentIndex& index, std::span<const SearchConfig> cells,
                                                    const ReconstructionOptions& options,
                                                    const IcosaBins& bins = default_icosa_bins());

/// Records for several parameter values of one search method at once. Each
/// grid point is queried once with the largest parameter and every smaller
/// value is answered from a prefix of that result. Output order follows
/// `parameters`.
std::vector<ReconstructionResult> reconstruct_sweep(const VectorField& truth, const GridSpec& grid,
                                                    const SegmentIndex& index, const SearchConfig& base,
                                                    std::span<const double> parameters,
                                                    const ReconstructionOptions& options,
                                                    const IcosaBins& bins = default_icosa_bins());

}  // namespace flowseg
