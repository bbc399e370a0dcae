#pragma once

#include "flowseg/analysis.hpp"
#include "flowseg/reconstruct.hpp"
#include "flowseg/saliency.hpp"
#include "flowseg/tracer.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flowseg {

/// A dataset of the matrix: an analytic stand-in resampled on the
/// experiment grid, or a VF1 grid file used as-is.
struct FieldSpec {
  std::string name;
  std::optional<AnalyticKind> kind;
  AnalyticParams params;
  std::filesystem::path grid_path;
};

enum class PointOutput { kNone, kBest, kAll };

struct ExperimentConfig {
  std::vector<FieldSpec> field_specs;
  /// Strategy, level and jitter per line set; rng_seed is derived per cell.
  std::vector<SeedSpec> seed_specs;
  std::vector<DistanceMetric> metrics;
  std::vector<int> knn_ks;
  /// Per field name; fields without an entry are calibrated automatically.
  std::map<std::string, std::vector<double>> rbn_rs;
  WeightScheme scheme;
  VectorMode mode = VectorMode::kDirect;
  bool corner_exclusion = true;
  bool nearest_fallback = true;
  SaliencyConfig saliency;
  bool saliency_enabled = true;
  std::array<int, 3> grid_dims{64, 64, 64};
  std::optional<double> step;      // default: half the smallest grid spacing
  std::optional<int> max_steps;    // default: largest grid dimension
  PointOutput point_output = PointOutput::kBest;
  std::filesystem::path output_dir = "flowseg-out";
  std::uint64_t rng_seed = 1;

  /// The desk-scale matrix: rotor, saddle and ABC on 64^3 grids, four
  /// seeding strategies at levels {125, 512, 1728}, three metrics, six Ks and
  /// six calibrated Rs.
  static ExperimentConfig desk_scale();

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
/// Reads a config file and applies the FLOWSEG_OUT override.
ExperimentConfig load_config(const std::filesystem::path& path);

struct CellKey {
  std::string dataset;
  std::string seeding;
  int level = 0;
  std::string method;  // "knn" or "rbn"
  DistanceMetric metric = DistanceMetric::kShortest;
  double parameter = 0.0;

  std::string id() const;
};

struct ExperimentReport {
  CellKey key;
  std::string kind;  // "reconstruction" or "saliency"
  std::string status = "done";
  std::string error;
  std::string line_set;  // content hash of the streamline set
  // reconstruction
  ReconstructionSummary summary;
  // saliency
  std::size_t saliency_records = 0;
  std::size_t saliency_dropped = 0;
  std::optional<double> ccc;
  std::optional<double> pcc;
  std::optional<double> pcc_p_value;
  double mean_s_cal = 0.0;
  double mean_s_ref = 0.0;
  std::string points_csv;  // relative to the output directory, empty if not written
  bool best = false;
};

nlohmann::ordered_json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& doc);

struct RunOptions {
  int jobs = 1;
  bool resume = false;
};

struct RunStatistics {
  std::size_t line_sets = 0;
  std::size_t line_sets_skipped = 0;  // resumed from an existing fragment
  std::size_t traces_computed = 0;    // line sets traced rather than loaded from cache
};

/// Runs every cell of the matrix, persisting per-line-set fragments, the
/// aggregated manifest.json and summary.csv under cfg.output_dir.
std::vector<ExperimentReport> run_matrix(const ExperimentConfig& cfg, const RunOptions& options = {},
                                         RunStatistics* stats = nullptr);

/// Minimum e_mean per (dataset, method) over reconstruction cells; ties go
/// to the smaller parameter, then metric order shortest, average, longest.
std::vector<ExperimentReport> select_best(const std::vector<ExperimentReport>& reports);

/// Reports stored in `dir`/manifest.json.
std::vector<ExperimentReport> load_manifest(const std::filesystem::path& dir);

/// One row per cell.
std::string reports_to_csv(const std::vector<ExperimentReport>& reports);

// Per-point persistence shared with the CLI.
void write_reconstruction_csv(std::span<const ReconstructionRecord> records, const std::filesystem::path& path);
std::vector<ReconstructionRecord> read_reconstruction_csv(const std::filesystem::path& path);
void write_saliency_csv(std::span<const SaliencyRecord> records, const std::filesystem::path& path);
nlohmann::ordered_json summary_to_json(const ReconstructionSummary& summary);

/// Shortest round-trip decimal form.
std::string format_number(double value);

/// R values whose mean neighbor counts approximate `ks`: for each K, the
/// mean over `probes` random grid points of the K-th smallest shortest
/// distance.
std::vector<double> calibrate_radii(const SegmentIndex& index, const GridSpec& grid, std::span<const int> ks,
                                    int probes, std::uint64_t seed);

}  // namespace flowseg
