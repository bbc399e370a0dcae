#include "flowseg/saliency.hpp"

#include "flowseg/parallel.hpp"

#include <numbers>

namespace flowseg {

void SaliencyConfig::validate() const {
  search.validate();
  if (ref_samples < 4) throw InvalidArgument("saliency needs at least 4 reference samples");
  if (exclusion_window < 0) throw InvalidArgument("exclusion window must be non-negative");
  if (ref_radius_rule == RefRadiusRule::kFixed && !(fixed_radius > 0.0)) {
    throw InvalidArgument("fixed reference radius must be positive");
  }
}

namespace {

double start_point_weight(const Vec3& p, const Segment& neighbor, double epsilon) {
  const double d = std::max((neighbor.a - p).norm(), epsilon);
  return 1.0 / (d * d);
}

}  // namespace

std::optional<CalculatedSaliency> calculated_saliency(const Segment& seg, const SegmentIndex& index,
                                                      const SaliencyConfig& cfg) {
  cfg.validate();
  const Exclusion exclusion = Exclusion::around(seg, cfg.exclusion_window);
  CalculatedSaliency out;
  out.neighborhood = search(index, seg.a, cfg.search, &exclusion);
  if (out.neighborhood.empty()) return std::nullopt;
  double weighted = 0.0, total = 0.0, dist = 0.0;
  for (const NeighborEntry& e : out.neighborhood.entries) {
    const double w = start_point_weight(seg.a, *e.segment, cfg.epsilon);
    weighted += w * angle_between(seg.direction, e.segment->direction);
    total += w;
    dist += (e.segment->a - seg.a).norm();
  }
  out.value = weighted / total;
  out.mean_start_distance = dist / double(out.neighborhood.size());
  return out;
}

std::pair<Vec3, Vec3> perpendicular_basis(const Vec3& v) {
  const Vec3 dir = v.normalized();
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (std::abs(dir[a]) < std::abs(dir[axis])) axis = a;
  }
  const Vec3 e1 = dir.cross(Vec3::Unit(axis)).normalized();
  const Vec3 e2 = dir.cross(e1);
  return {e1, e2};
}

namespace {

std::vector<std::pair<double, double>> unit_circle(int samples) {
  std::vector<std::pair<double, double>> ring(std::size_t(std::max(samples, 0)));
  for (int i = 0; i < samples; ++i) {
    const double angle = 2.0 * std::numbers::pi * double(i) / double(samples);
    ring[std::size_t(i)] = {std::cos(angle), std::sin(angle)};
  }
  return ring;
}

std::optional<double> reference_on_ring(const Segment& seg, const VectorField& field, double radius,
                                        std::span<const std::pair<double, double>> ring, double min_speed) {
  const auto [e1, e2] = perpendicular_basis(seg.direction);
  double sum = 0.0;
  int used = 0;
  for (const auto& [c, s] : ring) {
    const Vec3 p = seg.a + radius * (c * e1 + s * e2);
    if (!field.bounds().contains(p)) continue;
    const Vec3 v = field.sample(p);
    const double speed = v.norm();
    if (speed <= 0.0 || speed < min_speed) continue;
    sum += angle_between(seg.direction, v);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum / double(used);
}

}  // namespace

std::optional<double> reference_saliency(const Segment& seg, const VectorField& field, double radius, int samples,
                                         double min_speed) {
  if (!(radius > 0.0)) throw InvalidArgument("reference saliency radius must be positive");
  if (samples < 1) throw InvalidArgument("reference saliency needs samples");
  return reference_on_ring(seg, field, radius, unit_circle(samples), min_speed);
}

std::vector<SaliencySet> saliency_cells(const VectorField& field, const SegmentIndex& index,
                                        const SaliencyConfig& cfg, std::span<const SearchConfig> cells,
                                        int threads) {
  std::vector<SaliencySet> sets(cells.size());
  if (cells.empty()) return sets;
  SaliencyConfig checked = cfg;
  checked.search = cells.front();
  checked.validate();
  const CellEnvelope env = envelope_of(cells);
  for (std::size_t c = 0; c < cells.size(); ++c) sets[c].parameter = cells[c].parameter();
  const std::span<const Segment> segments = index.segments();
  const auto ring = unit_circle(cfg.ref_samples);

  // Per (cell, segment): record or a drop reason (0 = kept, 1 = no
  // neighbor, 2 = no reference).
  std::vector<std::vector<SaliencyRecord>> scored(cells.size(), std::vector<SaliencyRecord>(segments.size()));
  std::vector<std::vector<std::uint8_t>> status(cells.size(), std::vector<std::uint8_t>(segments.size()));

  parallel_for(segments.size(), threads, [&](std::size_t s) {
    const Segment& seg = segments[s];
    const Exclusion exclusion = Exclusion::around(seg, cfg.exclusion_window);
    const std::vector<NeighborEntry> raw =
        shared_base(index, seg.a, env.k_max, env.r_max, env.metric, env.nearest_fallback, &exclusion);
    const double d_corner = corner_distance(index.bounds(), seg.a);

    std::vector<double> cum_weighted(raw.size()), cum_weight(raw.size()), cum_dist(raw.size());
    double weighted = 0.0, total = 0.0, dist = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double w = start_point_weight(seg.a, *raw[i].segment, cfg.epsilon);
      weighted += w * angle_between(seg.direction, raw[i].segment->direction);
      total += w;
      dist += (raw[i].segment->a - seg.a).norm();
      cum_weighted[i] = weighted;
      cum_weight[i] = total;
      cum_dist[i] = dist;
    }

    std::vector<std::size_t> lengths(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::size_t len = prefix_length(raw, cells[c], d_corner);
      lengths[c] = len;
      if (len == 0) {
        status[c][s] = 1;
        continue;
      }
      std::size_t same = 0;
      while (same < c && lengths[same] != len) ++same;
      if (same < c) {
        scored[c][s] = scored[same][s];
        status[c][s] = status[same][s];
        continue;
      }
      SaliencyRecord& r = scored[c][s];
      r.segment_id = seg.global_id;
      r.n_neighbors = static_cast<int>(len);
      r.s_cal = cum_weighted[len - 1] / cum_weight[len - 1];
      r.ref_radius = cfg.ref_radius_rule == RefRadiusRule::kFixed
                         ? cfg.fixed_radius
                         : std::max(cum_dist[len - 1] / double(len), cfg.epsilon);
      const std::optional<double> ref = reference_on_ring(seg, field, r.ref_radius, ring, cfg.min_speed);
      if (!ref) {
        status[c][s] = 2;
        continue;
      }
      r.s_ref = *ref;
    }
  });

  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (status[c][s] == 0) {
        sets[c].records.push_back(scored[c][s]);
      } else if (status[c][s] == 1) {
        ++sets[c].dropped_no_neighbor;
      } else {
        ++sets[c].dropped_no_reference;
      }
    }
  }
  return sets;
}

std::vector<SaliencySet> saliency_sweep(const VectorField& field, const SegmentIndex& index,
                                        const SaliencyConfig& cfg, std::span<const double> parameters,
                                        int threads) {
  std::vector<SearchConfig> cells;
  cells.reserve(parameters.size());
  for (double v : parameters) cells.push_back(cfg.search.with_parameter(v));
  return saliency_cells(field, index, cfg, cells, threads);
}

}  // namespace flowseg
