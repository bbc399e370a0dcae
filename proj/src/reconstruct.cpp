#include "flowseg/reconstruct.hpp"

#include "flowseg/parallel.hpp"

#include <limits>

namespace flowseg {

WeightKind parse_weight_kind(std::string_view name) {
  if (name == "idw" || name == "inverse-distance") return WeightKind::kInverseDistance;
  if (name == "uniform") return WeightKind::kUniform;
  if (name == "gaussian") return WeightKind::kGaussian;
  throw InvalidArgument("unknown weighting scheme '" + std::string(name) + "'");
}

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::kUniform: return "uniform";
    case WeightKind::kGaussian: return "gaussian";
    case WeightKind::kInverseDistance: return "idw";
  }
  return "?";
}

namespace {

// Normalized weights for distances d[0..n) written to w[0..n).
void fill_weights(const double* d, std::size_t n, const WeightScheme& scheme, double* w) {
  if (n == 0) throw EmptyError("weights of an empty neighborhood");
  if (scheme.kind == WeightKind::kUniform) {
    std::fill(w, w + n, 1.0 / double(n));
    return;
  }
  double sum = 0.0;
  if (scheme.kind == WeightKind::kInverseDistance) {
    for (std::size_t i = 0; i < n; ++i) {
      const double di = std::max(d[i], scheme.epsilon);
      w[i] = 1.0 / (di * di);
      sum = i == 0 ? w[i] : sum + w[i];
    }
  } else {
    double mean = 0.0, d0 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double di = std::max(d[i], scheme.epsilon);
      mean += di;
      d0 = std::min(d0, di);
    }
    mean /= double(n);
    const double sigma = std::max(scheme.sigma.value_or(mean), scheme.epsilon);
    // Shifted by the smallest distance so the nearest weight is exactly 1
    // and the sum can never underflow.
    for (std::size_t i = 0; i < n; ++i) {
      const double di = std::max(d[i], scheme.epsilon);
      w[i] = std::exp(-(di * di - d0 * d0) / (2.0 * sigma * sigma));
      sum = i == 0 ? w[i] : sum + w[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) w[i] /= sum;
}

Vec3 combine(std::span<const double> distances, std::span<const Vec3> vectors, const WeightScheme& scheme,
             std::vector<double>& scratch) {
  scratch.resize(distances.size());
  fill_weights(distances.data(), distances.size(), scheme, scratch.data());
  Vec3 out = scratch[0] * vectors[0];
  for (std::size_t i = 1; i < vectors.size(); ++i) out += scratch[i] * vectors[i];
  return out;
}

}  // namespace

Eigen::VectorXd compute_weights(std::span<const double> distances, const WeightScheme& scheme) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(distances.size()));
  fill_weights(distances.data(), distances.size(), scheme, w.data());
  return w;
}

Vec3 segment_vector(const Segment& s, VectorMode mode, std::span<const Segment> all) {
  const Vec3 direct = s.speed * s.direction;
  if (mode == VectorMode::kDirect) return direct;
  const auto neighbor = [&](int offset) -> Vec3 {
    const long id = long(s.global_id) + offset;
    if (id < 0 || id >= long(all.size())) return direct;
    const Segment& o = all[std::size_t(id)];
    if (o.streamline_id != s.streamline_id || o.index_on_curve != s.index_on_curve + offset) return direct;
    return o.speed * o.direction;
  };
  return (neighbor(-1) + direct + neighbor(1)) / 3.0;
}

namespace {

double weight_distance_of(const NeighborEntry& e, const Vec3& query, WeightDistance weight_distance) {
  return weight_distance == WeightDistance::kShortest
             ? point_segment_distance(query, *e.segment, DistanceMetric::kShortest)
             : e.distance;
}

Vec3 weighted_sum(std::span<const NeighborEntry> entries, const Vec3& query, const WeightScheme& scheme,
                  VectorMode mode, std::span<const Segment> all, WeightDistance weight_distance) {
  if (entries.empty()) throw EmptyError("reconstruction from an empty neighborhood");
  std::vector<double> distances(entries.size()), scratch;
  std::vector<Vec3> vectors(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    distances[i] = weight_distance_of(entries[i], query, weight_distance);
    vectors[i] = segment_vector(*entries[i].segment, mode, all);
  }
  return combine(distances, vectors, scheme, scratch);
}

}  // namespace

Vec3 reconstruct_vector(const Neighborhood& nb, const WeightScheme& scheme, VectorMode mode,
                        std::span<const Segment> all, WeightDistance weight_distance) {
  return weighted_sum(nb.entries, nb.query, scheme, mode, all, weight_distance);
}

namespace {

double percentile_of_sorted(const std::vector<double>& sorted, double pct) {
  const double rank = std::ceil(pct / 100.0 * double(sorted.size()) - 1e-9);
  const std::size_t r = std::clamp<std::size_t>(std::size_t(std::max(rank, 1.0)), 1, sorted.size());
  return sorted[r - 1];
}

}  // namespace

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw EmptyError("percentile of an empty sequence");
  std::sort(values.begin(), values.end());
  return percentile_of_sorted(values, pct);
}

ReconstructionSummary summarize(std::span<const ReconstructionRecord> records, bool normalized_error,
                                double min_speed) {
  ReconstructionSummary s;
  s.count = records.size();
  if (records.empty()) return s;
  std::vector<double> errors;
  errors.reserve(records.size());
  double normalized_sum = 0.0;
  std::size_t normalized_count = 0;
  s.min_uniformity = records.front().uniformity;
  s.max_uniformity = records.front().uniformity;
  for (const auto& r : records) {
    errors.push_back(r.error);
    s.e_mean += r.error;
    s.mean_n_neighbors += r.n_neighbors;
    s.mean_avg_distance += r.avg_distance;
    s.mean_uniformity += r.uniformity;
    s.min_uniformity = std::min(s.min_uniformity, r.uniformity);
    s.max_uniformity = std::max(s.max_uniformity, r.uniformity);
    const double truth_speed = r.truth.norm();
    if (truth_speed > min_speed && truth_speed > 0.0) {
      normalized_sum += r.error / truth_speed;
      ++normalized_count;
    }
  }
  const double m = double(records.size());
  s.e_mean /= m;
  s.mean_n_neighbors /= m;
  s.mean_avg_distance /= m;
  s.mean_uniformity /= m;
  std::sort(errors.begin(), errors.end());
  s.e_p10 = percentile_of_sorted(errors, 10.0);
  s.e_p50 = percentile_of_sorted(errors, 50.0);
  s.e_p90 = percentile_of_sorted(errors, 90.0);
  s.e_max = errors.back();
  if (normalized_error && normalized_count > 0) s.normalized_e_mean = normalized_sum / double(normalized_count);
  return s;
}

ReconstructionResult reconstruct_field(const VectorField& truth, const GridSpec& grid, const SegmentIndex& index,
                                       const SearchConfig& cfg, const ReconstructionOptions& options,
                                       const IcosaBins& bins) {
  cfg.validate();
  ReconstructionResult result;
  result.records.resize(grid.size());
  parallel_for(grid.size(), options.threads, [&](std::size_t n) {
    const Vec3 p = grid.node(n);
    const Neighborhood nb = search(index, p, cfg);
    ReconstructionRecord& r = result.records[n];
    r.grid_point = p;
    r.reconstructed = reconstruct_vector(nb, options.scheme, options.mode, index.segments(), options.weight_distance);
    r.truth = truth.sample(p);
    r.error = (r.reconstructed - r.truth).norm();
    r.n_neighbors = static_cast<int>(nb.size());
    r.avg_distance = average_distance(nb);
    r.uniformity = uniformity(nb, bins, options.uniformity).mu;
  });
  result.summary = summarize(result.records, options.normalized_error, options.min_speed);
  return result;
}

ReconstructionResult reconstruct_field(const GridField& truth, const SegmentIndex& index, const SearchConfig& cfg,
                                       const ReconstructionOptions& options, const IcosaBins& bins) {
  return reconstruct_field(VectorField(truth), truth.grid, index, cfg, options, bins);
}

std::vector<ReconstructionResult> reconstruct_cells(const VectorField& truth, const GridSpec& grid,
                                                    const SegmentIndex& index, std::span<const SearchConfig> cells,
                                                    const ReconstructionOptions& options, const IcosaBins& bins) {
  if (cells.empty()) return {};
  const CellEnvelope env = envelope_of(cells);

  std::vector<ReconstructionResult> results(cells.size());
  for (auto& r : results) r.records.resize(grid.size());

  const std::size_t row = std::size_t(grid.dims[0]);
  parallel_for(grid.size() / row, options.threads, [&](std::size_t row_index) {
    // Consecutive nodes of a row are one spacing apart and every metric is
    // 1-Lipschitz in the query, which bounds the next k-th distance.
    double bound = std::numeric_limits<double>::infinity();
    Vec3 previous = Vec3::Zero();
    std::vector<std::uint32_t> cumulative_mask;
    std::vector<double> cumulative_distance, cumulative_radius, weight_distances, scratch;
    std::vector<Vec3> vectors;
    std::vector<std::size_t> lengths(cells.size());
    for (std::size_t n = row_index * row; n < (row_index + 1) * row; ++n) {
      const Vec3 p = grid.node(n);
      const Vec3 v_truth = truth.sample(p);
      const double d_corner = corner_distance(index.bounds(), p);
      if (std::isfinite(bound)) bound = (bound + (p - previous).norm()) * (1.0 + 1e-9) + 1e-12;
      const std::vector<NeighborEntry> raw =
          shared_base(index, p, env.k_max, env.r_max, env.metric, env.nearest_fallback, nullptr, bound);
      previous = p;
      bound = env.k_max > 0 && raw.size() >= std::size_t(env.k_max)
                  ? raw[std::size_t(env.k_max) - 1].distance
                  : std::numeric_limits<double>::infinity();

      std::size_t longest = 0;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        lengths[c] = prefix_length(raw, cells[c], d_corner);
        if (lengths[c] == 0) throw EmptyError("reconstruction from an empty neighborhood");
        longest = std::max(longest, lengths[c]);
      }
      // Every member of a prefix lies inside that prefix's sphere, so a
      // segment's bin mask does not depend on which prefix it is used in.
      const double unclipped = std::numeric_limits<double>::infinity();
      cumulative_mask.resize(longest);
      cumulative_distance.resize(longest);
      cumulative_radius.resize(longest);
      weight_distances.resize(longest);
      vectors.resize(longest);
      std::uint32_t mask = 0;
      double dist_sum = 0.0, radius = 0.0;
      for (std::size_t i = 0; i < longest; ++i) {
        const Segment& seg = *raw[i].segment;
        mask |= segment_bin_mask(p, seg, unclipped, bins, options.uniformity);
        dist_sum += raw[i].distance;
        radius = std::max(radius, point_segment_distance(p, seg, DistanceMetric::kLongest));
        cumulative_mask[i] = mask;
        cumulative_distance[i] = dist_sum;
        cumulative_radius[i] = radius;
        weight_distances[i] = weight_distance_of(raw[i], p, options.weight_distance);
        vectors[i] = segment_vector(seg, options.mode, index.segments());
      }

      for (std::size_t c = 0; c < cells.size(); ++c) {
        ReconstructionRecord& r = results[c].records[n];
        const std::size_t len = lengths[c];
        std::size_t same = 0;
        while (same < c && lengths[same] != len) ++same;
        if (same < c) {
          r = results[same].records[n];
          continue;
        }
        r.grid_point = p;
        r.truth = v_truth;
        r.reconstructed = combine(std::span(weight_distances).first(len), std::span(vectors).first(len),
                                  options.scheme, scratch);
        r.error = (r.reconstructed - r.truth).norm();
        r.n_neighbors = static_cast<int>(len);
        r.avg_distance = cumulative_distance[len - 1] / double(len);
        r.uniformity = uniformity_from_mask(cumulative_mask[len - 1], cumulative_radius[len - 1]).mu;
      }
    }
  });
  for (auto& r : results) r.summary = summarize(r.records, options.normalized_error, options.min_speed);
  return results;
}

std::vector<ReconstructionResult> reconstruct_sweep(const VectorField& truth, const GridSpec& grid,
                                                    const SegmentIndex& index, const SearchConfig& base,
                                                    std::span<const double> parameters,
                                                    const ReconstructionOptions& options, const IcosaBins& bins) {
  std::vector<SearchConfig> cells;
  cells.reserve(parameters.size());
  for (double v : parameters) cells.push_back(base.with_parameter(v));
  return reconstruct_cells(truth, grid, index, cells, options, bins);
}

}  // namespace flowseg
