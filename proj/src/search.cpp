#include "flowseg/search.hpp"

#include <charconv>
#include <limits>
#include <numeric>
#include <sstream>

namespace flowseg {

DistanceMetric parse_metric(std::string_view name) {
  if (name == "shortest" || name == "min") return DistanceMetric::kShortest;
  if (name == "longest" || name == "max") return DistanceMetric::kLongest;
  if (name == "average" || name == "mean") return DistanceMetric::kAverage;
  throw InvalidArgument("unknown distance metric '" + std::string(name) + "'");
}

std::string to_string(DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::kShortest: return "shortest";
    case DistanceMetric::kLongest: return "longest";
    case DistanceMetric::kAverage: return "average";
  }
  return "?";
}

SearchConfig SearchConfig::knn(int k, DistanceMetric metric) {
  SearchConfig cfg;
  cfg.method = KnnParams{k};
  cfg.metric = metric;
  return cfg;
}

SearchConfig SearchConfig::rbn(double r, DistanceMetric metric) {
  SearchConfig cfg;
  cfg.method = RbnParams{r};
  cfg.metric = metric;
  return cfg;
}

double SearchConfig::parameter() const {
  if (const auto* k = std::get_if<KnnParams>(&method)) return double(k->k);
  return std::get<RbnParams>(method).r;
}

SearchConfig SearchConfig::with_parameter(double value) const {
  SearchConfig cfg = *this;
  if (is_knn()) {
    cfg.method = KnnParams{static_cast<int>(std::lround(value))};
  } else {
    cfg.method = RbnParams{value};
  }
  return cfg;
}

void SearchConfig::validate() const {
  if (const auto* k = std::get_if<KnnParams>(&method)) {
    if (k->k < 1) throw InvalidArgument("KNN requires k >= 1");
  } else if (!(std::get<RbnParams>(method).r > 0.0)) {
    throw InvalidArgument("RBN requires r > 0");
  }
}

SearchConfig parse_search_spec(std::string_view spec) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  if (parts.size() < 2 || parts.size() > 3) {
    throw InvalidArgument("search spec must look like knn:K[:metric] or rbn:R[:metric]");
  }
  const DistanceMetric metric = parts.size() == 3 ? parse_metric(parts[2]) : DistanceMetric::kShortest;
  double value = 0.0;
  const auto res = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), value);
  if (res.ec != std::errc{} || res.ptr != parts[1].data() + parts[1].size()) {
    throw InvalidArgument("bad search parameter '" + parts[1] + "'");
  }
  SearchConfig cfg;
  if (parts[0] == "knn") {
    cfg = SearchConfig::knn(static_cast<int>(value), metric);
  } else if (parts[0] == "rbn") {
    cfg = SearchConfig::rbn(value, metric);
  } else {
    throw InvalidArgument("unknown search method '" + parts[0] + "'");
  }
  cfg.validate();
  return cfg;
}

std::string to_string(const SearchConfig& cfg) {
  std::ostringstream out;
  if (cfg.is_knn()) {
    out << "knn:" << std::get<KnnParams>(cfg.method).k;
  } else {
    out << "rbn:" << std::get<RbnParams>(cfg.method).r;
  }
  out << ":" << to_string(cfg.metric);
  return out.str();
}

// --- SegmentIndex -------------------------------------------------------------

SegmentIndex::SegmentIndex(std::vector<Segment> segments, const DomainBounds& bounds, int leaf_size)
    : segments_(std::move(segments)), bounds_(bounds), leaf_size_(std::max(leaf_size, 1)) {
  if (segments_.empty()) throw EmptyError("cannot build a segment index over zero segments");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].global_id != static_cast<int>(i)) {
      throw InvalidArgument("segment global_id must be dense and match its position");
    }
  }
  order_.resize(segments_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * segments_.size() / std::size_t(leaf_size_) + 1);
  build(0, static_cast<std::uint32_t>(segments_.size()), 1);
  leaf_a_.reserve(order_.size());
  leaf_b_.reserve(order_.size());
  for (int id : order_) {
    leaf_a_.push_back(segments_[std::size_t(id)].a);
    leaf_b_.push_back(segments_[std::size_t(id)].b);
  }
}

int SegmentIndex::build(std::uint32_t begin, std::uint32_t end, int depth) {
  depth_ = std::max(depth_, depth);
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d mid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Segment& s = segments_[std::size_t(order_[i])];
    box.extend(s.a);
    box.extend(s.b);
    mid_box.extend(0.5 * (s.a + s.b));
  }
  nodes_[std::size_t(node_id)].box = box;
  nodes_[std::size_t(node_id)].begin = begin;
  nodes_[std::size_t(node_id)].end = end;
  if (end - begin <= std::uint32_t(leaf_size_)) return node_id;

  int axis = 0;
  mid_box.sizes().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  const auto key = [&](int id) {
    const Segment& s = segments_[std::size_t(id)];
    return std::pair(s.a[axis] + s.b[axis], id);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int l, int r) { return key(l) < key(r); });
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[std::size_t(node_id)].left = left;
  nodes_[std::size_t(node_id)].right = right;
  return node_id;
}

namespace {

struct Candidate {
  double distance;
  int id;
  bool operator<(const Candidate& o) const {
    return distance < o.distance || (distance == o.distance && id < o.id);
  }
};

// Slack absorbing rounding between the box bound and per-segment distances.
inline bool prunable(double lower_bound, double threshold) {
  return lower_bound > threshold * (1.0 + 1e-12);
}

std::vector<NeighborEntry> to_entries(std::vector<Candidate>& cands, std::span<const Segment> segments) {
  std::sort(cands.begin(), cands.end());
  std::vector<NeighborEntry> out;
  out.reserve(cands.size());
  for (const Candidate& c : cands) out.push_back({&segments[std::size_t(c.id)], c.distance});
  return out;
}

}  // namespace

std::vector<NeighborEntry> SegmentIndex::nearest(const Vec3& p, int k, DistanceMetric metric,
                                                 const Exclusion* exclusion, double upper_bound) const {
  if (k < 1) throw InvalidArgument("nearest: k must be >= 1");
  struct Pending {
    int node;
    double bound;
  };
  thread_local std::vector<Candidate> heap;  // max-heap, top = current k-th candidate
  thread_local std::vector<Pending> stack;
  heap.clear();
  stack.clear();
  const std::size_t cap = std::size_t(k);
  stack.push_back({0, std::sqrt(nodes_[0].box.squaredExteriorDistance(p))});
  while (!stack.empty()) {
    const Pending top = stack.back();
    stack.pop_back();
    if (prunable(top.bound, heap.size() == cap ? heap.front().distance : upper_bound)) continue;
    const Node& node = nodes_[std::size_t(top.node)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const int id = order_[i];
        if (exclusion && exclusion->excludes(segments_[std::size_t(id)])) continue;
        const Candidate c{point_segment_distance<double>(p, leaf_a_[i], leaf_b_[i], metric), id};
        if (heap.size() < cap) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      continue;
    }
    const double bl = std::sqrt(nodes_[std::size_t(node.left)].box.squaredExteriorDistance(p));
    const double br = std::sqrt(nodes_[std::size_t(node.right)].box.squaredExteriorDistance(p));
    // Push the farther child first so the nearer one is visited next.
    if (bl <= br) {
      stack.push_back({node.right, br});
      stack.push_back({node.left, bl});
    } else {
      stack.push_back({node.left, bl});
      stack.push_back({node.right, br});
    }
  }
  return to_entries(heap, segments_);
}

std::vector<NeighborEntry> SegmentIndex::within(const Vec3& p, double r, DistanceMetric metric,
                                                const Exclusion* exclusion) const {
  std::vector<Candidate> found;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[std::size_t(stack.back())];
    stack.pop_back();
    if (prunable(std::sqrt(node.box.squaredExteriorDistance(p)), r)) continue;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const int id = order_[i];
        if (exclusion && exclusion->excludes(segments_[std::size_t(id)])) continue;
        const double d = point_segment_distance<double>(p, leaf_a_[i], leaf_b_[i], metric);
        if (d < r) found.push_back({d, id});
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  return to_entries(found, segments_);
}

SegmentIndex build_index(std::vector<Segment> segments, const DomainBounds& bounds) {
  return SegmentIndex(std::move(segments), bounds);
}

// --- Modified queries -------------------------------------------------------

std::size_t knn_prefix_length(std::span<const NeighborEntry> base, int k, double d_corner,
                              bool corner_exclusion) {
  const std::size_t n = std::min(base.size(), std::size_t(std::max(k, 0)));
  if (!corner_exclusion) return n;
  std::size_t kept = 0;
  while (kept < n && base[kept].distance <= d_corner) ++kept;
  return kept == 0 ? std::min<std::size_t>(1, n) : kept;
}

std::size_t rbn_prefix_length(std::span<const NeighborEntry> base, double r, bool nearest_fallback) {
  std::size_t kept = 0;
  while (kept < base.size() && base[kept].distance < r) ++kept;
  if (kept == 0 && nearest_fallback) return std::min<std::size_t>(1, base.size());
  return kept;
}

std::vector<NeighborEntry> rbn_base(const SegmentIndex& index, const Vec3& p, double r_max,
                                    DistanceMetric metric, bool nearest_fallback,
                                    const Exclusion* exclusion) {
  std::vector<NeighborEntry> base = index.within(p, r_max, metric, exclusion);
  if (base.empty() && nearest_fallback) base = index.nearest(p, 1, metric, exclusion);
  return base;
}

CellEnvelope envelope_of(std::span<const SearchConfig> cells) {
  if (cells.empty()) throw InvalidArgument("no search cells");
  CellEnvelope env;
  env.metric = cells.front().metric;
  for (const SearchConfig& c : cells) {
    c.validate();
    if (c.metric != env.metric) throw InvalidArgument("cells of one sweep must share a metric");
    if (const auto* k = std::get_if<KnnParams>(&c.method)) {
      env.k_max = std::max(env.k_max, k->k);
    } else {
      env.r_max = std::max(env.r_max, std::get<RbnParams>(c.method).r);
      env.nearest_fallback = env.nearest_fallback || c.nearest_fallback;
    }
  }
  return env;
}

std::vector<NeighborEntry> shared_base(const SegmentIndex& index, const Vec3& p, int k_max, double r_max,
                                       DistanceMetric metric, bool nearest_fallback, const Exclusion* exclusion,
                                       double upper_bound) {
  if (k_max <= 0) return rbn_base(index, p, r_max, metric, nearest_fallback, exclusion);
  std::vector<NeighborEntry> base = index.nearest(p, k_max, metric, exclusion, upper_bound);
  // A full top-k whose last entry is still inside r_max may be missing
  // segments below r_max; the radius list then contains the top-k.
  if (r_max > 0.0 && base.size() == std::size_t(k_max) && base.back().distance < r_max) {
    base = index.within(p, r_max, metric, exclusion);
  }
  return base;
}

std::size_t prefix_length(std::span<const NeighborEntry> base, const SearchConfig& cfg, double d_corner) {
  if (const auto* knn_params = std::get_if<KnnParams>(&cfg.method)) {
    return knn_prefix_length(base, knn_params->k, d_corner, cfg.corner_exclusion);
  }
  return rbn_prefix_length(base, std::get<RbnParams>(cfg.method).r, cfg.nearest_fallback);
}

namespace {

void check_query(const SegmentIndex& index, const Vec3& p) {
  if (!index.bounds().contains(p, 1e-9 * index.bounds().diagonal())) {
    throw DomainError("query point outside index bounds");
  }
}

}  // namespace

Neighborhood knn(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                 const Exclusion* exclusion) {
  cfg.validate();
  check_query(index, p);
  const int k = std::get<KnnParams>(cfg.method).k;
  Neighborhood nb{p, cfg.metric, index.nearest(p, k, cfg.metric, exclusion)};
  nb.entries.resize(knn_prefix_length(nb.entries, k, corner_distance(index.bounds(), p), cfg.corner_exclusion));
  return nb;
}

Neighborhood rbn(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                 const Exclusion* exclusion) {
  cfg.validate();
  check_query(index, p);
  const double r = std::get<RbnParams>(cfg.method).r;
  Neighborhood nb{p, cfg.metric, rbn_base(index, p, r, cfg.metric, cfg.nearest_fallback, exclusion)};
  nb.entries.resize(rbn_prefix_length(nb.entries, r, cfg.nearest_fallback));
  return nb;
}

Neighborhood search(const SegmentIndex& index, const Vec3& p, const SearchConfig& cfg,
                    const Exclusion* exclusion) {
  return cfg.is_knn() ? knn(index, p, cfg, exclusion) : rbn(index, p, cfg, exclusion);
}

}  // namespace flowseg
