#pragma once

#include "flowseg/field.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace flowseg {

enum class SeedStrategy { kUniform, kJittered, kRandom, kFeatureAware };

SeedStrategy parse_seed_strategy(std::string_view name);
std::string to_string(SeedStrategy strategy);

struct SeedSpec {
  SeedStrategy strategy = SeedStrategy::kUniform;
  /// Requested seed count S_N; the lattice uses round(cbrt(S_N)) points per axis.
  int count_level = 125;
  double jitter_fraction = 0.9;
  std::uint64_t rng_seed = 0;
  int max_seeds = 1 << 20;

  void validate() const;
};

/// Simulated annealing schedule for feature-aware seeding.
struct AnnealingSchedule {
  int iterations = 200;
  double sigma_decay = 0.98;
  double temperature_decay = 0.97;
};

/// Seed positions inside `bounds`. `interest` is required for
/// feature-aware seeding (typically a gradient-magnitude grid).
std::vector<Vec3> generate_seeds(const SeedSpec& spec, const DomainBounds& bounds,
                                 const ScalarGrid* interest = nullptr,
                                 const AnnealingSchedule& schedule = {});

struct Streamline {
  int id = 0;
  std::vector<Vec3> points;
  std::vector<double> speeds;
};

struct Segment {
  int global_id = 0;
  int streamline_id = 0;
  int index_on_curve = 0;
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double speed = 0.0;
  double length = 0.0;
};

struct TraceOptions {
  double step = 0.01;
  int max_steps = 1000;  // per direction
  double min_speed = 0.0;
};

/// 1e-6 times the field's RMS speed.
double default_min_speed(const VectorField& field);
/// 1e-9 times the domain diagonal.
double default_min_length(const DomainBounds& bounds);

/// Bidirectional fixed-arc-length RK4 streamline through `seed`.
/// Returns nullopt when the seed is a (near) fixed point or fewer than two
/// points could be traced. Throws DomainError for a seed outside the field.
std::optional<Streamline> trace(const VectorField& field, const Vec3& seed, const TraceOptions& options);

/// Traces every seed, drops empty traces and assigns dense ids in seed order.
std::vector<Streamline> trace_all(const VectorField& field, std::span<const Vec3> seeds,
                                  const TraceOptions& options, int threads = 1);

/// One segment per consecutive point pair; segments shorter than
/// `min_length` are dropped. global_id follows (streamline, index) order.
std::vector<Segment> decompose(std::span<const Streamline> lines, double min_length = 0.0);

// SL1 streamline files.
void save_lines(std::span<const Streamline> lines, std::ostream& out);
void save_lines(std::span<const Streamline> lines, const std::filesystem::path& path);
std::vector<Streamline> load_lines(std::istream& in);
std::vector<Streamline> load_lines(const std::filesystem::path& path);

}  // namespace flowseg
