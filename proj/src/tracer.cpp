#include "flowseg/tracer.hpp"

#include "flowseg/io.hpp"
#include "flowseg/parallel.hpp"

#include <charconv>
#include <fstream>
#include <random>

namespace flowseg {

SeedStrategy parse_seed_strategy(std::string_view name) {
  if (name == "uniform") return SeedStrategy::kUniform;
  if (name == "jittered") return SeedStrategy::kJittered;
  if (name == "random") return SeedStrategy::kRandom;
  if (name == "feature" || name == "feature-aware") return SeedStrategy::kFeatureAware;
  throw InvalidArgument("unknown seeding strategy '" + std::string(name) + "'");
}

std::string to_string(SeedStrategy strategy) {
  switch (strategy) {
    case SeedStrategy::kUniform: return "uniform";
    case SeedStrategy::kJittered: return "jittered";
    case SeedStrategy::kRandom: return "random";
    case SeedStrategy::kFeatureAware: return "feature";
  }
  return "?";
}

void SeedSpec::validate() const {
  if (count_level < 1) throw InvalidArgument("SeedSpec: count_level must be >= 1");
  if (!(jitter_fraction >= 0.0 && jitter_fraction <= 1.0)) {
    throw InvalidArgument("SeedSpec: jitter_fraction must lie in [0, 1]");
  }
  if (count_level > max_seeds) {
    throw CapacityError("SeedSpec: count_level " + std::to_string(count_level) + " exceeds cap " +
                        std::to_string(max_seeds));
  }
}

namespace {

int lattice_side(int count_level) {
  return std::max(1, static_cast<int>(std::lround(std::cbrt(double(count_level)))));
}

double interest_at(const ScalarGrid& interest, const Vec3& p) {
  return trilinear(interest.grid, interest.values, p);
}

void anneal(std::vector<Vec3>& seeds, const DomainBounds& bounds, const Vec3& lattice_spacing,
            const ScalarGrid& interest, const AnnealingSchedule& schedule, std::mt19937_64& rng) {
  double mean = 0.0;
  for (double v : interest.values) mean += v;
  mean /= double(interest.values.size());
  double var = 0.0;
  for (double v : interest.values) var += (v - mean) * (v - mean);
  const double t0 = std::sqrt(var / double(interest.values.size()));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Vec3& seed : seeds) {
    Vec3 current = seed;
    double current_f = interest_at(interest, current);
    Vec3 best = current;
    double best_f = current_f;
    Vec3 sigma = lattice_spacing;
    double temperature = t0;
    for (int it = 0; it < schedule.iterations; ++it) {
      const Vec3 proposal = current + sigma.cwiseProduct(Vec3(gauss(rng), gauss(rng), gauss(rng)));
      const double u = unit(rng);
      if (bounds.contains(proposal)) {
        const double f = interest_at(interest, proposal);
        const double delta = f - current_f;
        if (delta >= 0.0 || (temperature > 0.0 && u < std::exp(delta / temperature))) {
          current = proposal;
          current_f = f;
          if (f > best_f) {
            best = proposal;
            best_f = f;
          }
        }
      }
      sigma *= schedule.sigma_decay;
      temperature *= schedule.temperature_decay;
    }
    seed = best;
  }
}

}  // namespace

std::vector<Vec3> generate_seeds(const SeedSpec& spec, const DomainBounds& bounds,
                                 const ScalarGrid* interest, const AnnealingSchedule& schedule) {
  spec.validate();
  const int n = lattice_side(spec.count_level);
  const std::size_t total = std::size_t(n) * std::size_t(n) * std::size_t(n);
  if (total > std::size_t(spec.max_seeds)) {
    throw CapacityError("seed lattice of " + std::to_string(total) + " points exceeds cap " +
                        std::to_string(spec.max_seeds));
  }
  if (spec.strategy == SeedStrategy::kFeatureAware && interest == nullptr) {
    throw InvalidArgument("feature-aware seeding needs an interest grid");
  }

  std::mt19937_64 rng(spec.rng_seed);
  const Vec3 spacing = bounds.extent() / double(n);
  std::vector<Vec3> seeds;
  seeds.reserve(total);

  if (spec.strategy == SeedStrategy::kRandom) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < total; ++s) {
      const Vec3 u(unit(rng), unit(rng), unit(rng));
      seeds.push_back(bounds.min_corner() + bounds.extent().cwiseProduct(u));
    }
    return seeds;
  }

  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        seeds.push_back(bounds.min_corner() + spacing.cwiseProduct(Vec3(i + 0.5, j + 0.5, k + 0.5)));
      }
    }
  }

  if (spec.strategy == SeedStrategy::kJittered) {
    // +-(jitter_fraction/2) of the lattice spacing keeps seeds inside their cell.
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    const Vec3 amplitude = 0.5 * spec.jitter_fraction * spacing;
    for (Vec3& s : seeds) s += amplitude.cwiseProduct(Vec3(sym(rng), sym(rng), sym(rng)));
  } else if (spec.strategy == SeedStrategy::kFeatureAware) {
    anneal(seeds, bounds, spacing, *interest, schedule, rng);
  }
  return seeds;
}

double default_min_speed(const VectorField& field) { return 1e-6 * rms_speed(field); }

double default_min_length(const DomainBounds& bounds) { return 1e-9 * bounds.diagonal(); }

namespace {

// Integrates the normalized field in one direction; every accepted step has
// chord length exactly `step` up to rounding.
std::vector<Vec3> integrate(const VectorField& field, const Vec3& seed, double sign,
                            const TraceOptions& options) {
  const DomainBounds& bounds = field.bounds();
  const auto direction = [&](const Vec3& p, Vec3& out) {
    if (!bounds.contains(p)) return false;
    const Vec3 v = field.sample(p);
    const double speed = v.norm();
    if (speed <= 0.0 || speed < options.min_speed) return false;
    out = (sign / speed) * v;
    return true;
  };

  std::vector<Vec3> points;
  const double h = options.step;
  Vec3 x = seed;
  Vec3 k1, k2, k3, k4;
  for (int s = 0; s < options.max_steps; ++s) {
    if (!direction(x, k1) || !direction(x + 0.5 * h * k1, k2) || !direction(x + 0.5 * h * k2, k3) ||
        !direction(x + h * k3, k4)) {
      break;
    }
    const Vec3 increment = k1 + 2.0 * k2 + 2.0 * k3 + k4;
    const double norm = increment.norm();
    if (!(norm > 1e-9)) break;  // stages cancel: flow reverses within one step
    const Vec3 next = x + (h / norm) * increment;
    if (!bounds.contains(next)) break;
    points.push_back(next);
    x = next;
  }
  return points;
}

}  // namespace

std::optional<Streamline> trace(const VectorField& field, const Vec3& seed, const TraceOptions& options) {
  if (!(options.step > 0.0)) throw InvalidArgument("trace: step must be positive");
  if (!field.bounds().contains(seed)) throw DomainError("trace: seed outside field bounds");
  const Vec3 v0 = field.sample(seed);
  if (v0.norm() <= 0.0 || v0.norm() < options.min_speed) return std::nullopt;

  std::vector<Vec3> backward = integrate(field, seed, -1.0, options);
  std::vector<Vec3> forward = integrate(field, seed, 1.0, options);

  Streamline line;
  line.points.reserve(backward.size() + forward.size() + 1);
  line.points.insert(line.points.end(), backward.rbegin(), backward.rend());
  line.points.push_back(seed);
  line.points.insert(line.points.end(), forward.begin(), forward.end());
  if (line.points.size() < 2) return std::nullopt;
  line.speeds.reserve(line.points.size());
  for (const Vec3& p : line.points) line.speeds.push_back(field.sample(p).norm());
  return line;
}

std::vector<Streamline> trace_all(const VectorField& field, std::span<const Vec3> seeds,
                                  const TraceOptions& options, int threads) {
  std::vector<std::optional<Streamline>> traced(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t i) { traced[i] = trace(field, seeds[i], options); });
  std::vector<Streamline> lines;
  for (auto& t : traced) {
    if (!t) continue;
    t->id = static_cast<int>(lines.size());
    lines.push_back(std::move(*t));
  }
  return lines;
}

std::vector<Segment> decompose(std::span<const Streamline> lines, double min_length) {
  std::vector<Segment> segments;
  for (const Streamline& line : lines) {
    for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
      const Vec3 d = line.points[i + 1] - line.points[i];
      const double len = d.norm();
      if (!(len > min_length) || len == 0.0) continue;
      Segment s;
      s.global_id = static_cast<int>(segments.size());
      s.streamline_id = line.id;
      s.index_on_curve = static_cast<int>(i);
      s.a = line.points[i];
      s.b = line.points[i + 1];
      s.direction = d / len;
      s.length = len;
      s.speed = 0.5 * (line.speeds[i] + line.speeds[i + 1]);
      segments.push_back(s);
    }
  }
  return segments;
}

// --- SL1 I/O ----------------------------------------------------------------

void save_lines(std::span<const Streamline> lines, std::ostream& out) {
  out << "SL1 " << lines.size() << "\n";
  for (const Streamline& line : lines) {
    out << line.points.size() << "\n";
    for (std::size_t i = 0; i < line.points.size(); ++i) {
      for (int a = 0; a < 3; ++a) io::write_f64(out, line.points[i][a]);
      io::write_f64(out, line.speeds[i]);
    }
  }
  if (!out) throw Error("failed writing SL1 streamlines");
}

void save_lines(std::span<const Streamline> lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save_lines(lines, out);
}

namespace {

std::string read_text_line(std::istream& in, std::size_t offset) {
  std::string line;
  char c = 0;
  while (line.size() < 256 && in.get(c) && c != '\n') line.push_back(c);
  if (c != '\n') throw ParseError("SL1: expected text line at offset " + std::to_string(offset));
  return line;
}

long long parse_count(std::string_view text, std::size_t offset) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || v < 0) {
    throw ParseError("SL1: malformed count '" + std::string(text) + "' at offset " + std::to_string(offset));
  }
  return v;
}

}  // namespace

std::vector<Streamline> load_lines(std::istream& in) {
  std::size_t offset = 0;
  const std::string header = read_text_line(in, offset);
  if (header.rfind("SL1 ", 0) != 0) throw ParseError("SL1: bad magic at offset 0");
  const long long count = parse_count(std::string_view(header).substr(4), 4);
  offset += header.size() + 1;

  std::vector<Streamline> lines;
  for (long long l = 0; l < count; ++l) {
    const std::string text = read_text_line(in, offset);
    const long long n = parse_count(text, offset);
    offset += text.size() + 1;
    Streamline line;
    line.id = static_cast<int>(l);
    line.points.resize(std::size_t(n));
    line.speeds.resize(std::size_t(n));
    for (long long i = 0; i < n; ++i) {
      double q[4];
      for (double& v : q) {
        if (!io::read_f64(in, v)) throw ParseError("SL1: payload truncated at offset " + std::to_string(offset));
        if (!std::isfinite(v)) throw ParseError("SL1: non-finite value at offset " + std::to_string(offset));
        offset += 8;
      }
      line.points[std::size_t(i)] = Vec3(q[0], q[1], q[2]);
      line.speeds[std::size_t(i)] = q[3];
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<Streamline> load_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open streamline file '" + path.string() + "'");
  return load_lines(in);
}

}  // namespace flowseg
