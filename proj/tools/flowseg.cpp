#include "flowseg/analysis.hpp"
#include "flowseg/harness.hpp"
#include "flowseg/neighborhood.hpp"
#include "flowseg/reconstruct.hpp"
#include "flowseg/saliency.hpp"
#include "flowseg/search.hpp"
#include "flowseg/tracer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace flowseg;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument(std::string(what) + ": bad number '" + item + "'");
    }
  }
  if (out.size() != expected) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot open '" + out_path + "' for writing");
  out << text;
}

// Shared --metric/--knn/--rbn handling.
struct SearchArgs {
  std::string metric = "shortest";
  std::optional<int> k;
  std::optional<double> r;
  bool no_corner_exclusion = false;
  bool no_fallback = false;

  void add(CLI::App* cmd, bool modifiers) {
    cmd->add_option("--metric", metric, "shortest|longest|average");
    auto* knn = cmd->add_option("--knn", k, "K nearest segments");
    auto* rbn = cmd->add_option("--rbn", r, "segments within radius R");
    knn->excludes(rbn);
    if (modifiers) {
      cmd->add_flag("--no-corner-exclusion", no_corner_exclusion, "keep KNN entries beyond the nearest corner");
      cmd->add_flag("--no-fallback", no_fallback, "empty RBN results stay empty");
    }
  }

  SearchConfig config() const {
    if (!k && !r) throw InvalidArgument("one of --knn or --rbn is required");
    const DistanceMetric m = parse_metric(metric);
    SearchConfig cfg = k ? SearchConfig::knn(*k, m) : SearchConfig::rbn(*r, m);
    cfg.corner_exclusion = !no_corner_exclusion;
    cfg.nearest_fallback = !no_fallback;
    cfg.validate();
    return cfg;
  }
};

SegmentIndex index_lines(const std::vector<Streamline>& lines, const DomainBounds& bounds) {
  return SegmentIndex(decompose(lines, default_min_length(bounds)), bounds);
}

// Streamline files carry no domain; the bounding box of their points stands in.
DomainBounds bounds_of(const std::vector<Streamline>& lines) {
  Eigen::AlignedBox3d box;
  for (const auto& l : lines) {
    for (const auto& p : l.points) box.extend(p);
  }
  if (box.isEmpty()) throw EmptyError("streamline file holds no points");
  Vec3 lo = box.min(), hi = box.max();
  for (int a = 0; a < 3; ++a) {
    if (hi[a] <= lo[a]) {
      lo[a] -= 0.5;
      hi[a] += 0.5;
    }
  }
  return DomainBounds(lo, hi);
}

ordered_json neighborhood_json(const Neighborhood& nb) {
  ordered_json j;
  j["query"] = {nb.query.x(), nb.query.y(), nb.query.z()};
  j["metric"] = to_string(nb.metric);
  j["entries"] = ordered_json::array();
  for (const auto& e : nb.entries) {
    const Segment& s = *e.segment;
    j["entries"].push_back({{"segment_id", s.global_id},
                            {"streamline_id", s.streamline_id},
                            {"index_on_curve", s.index_on_curve},
                            {"distance", e.distance},
                            {"a", {s.a.x(), s.a.y(), s.a.z()}},
                            {"b", {s.b.x(), s.b.y(), s.b.z()}}});
  }
  return j;
}

double column(const ReconstructionRecord& r, const std::string& name) {
  if (name == "err") return r.error;
  if (name == "n") return r.n_neighbors;
  if (name == "avg_dist") return r.avg_distance;
  if (name == "uniformity") return r.uniformity;
  throw InvalidArgument("histogram column must be err, n, avg_dist or uniformity");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-centered neighbor search over streamline segments"};
  app.require_subcommand(1);

  // field gen
  auto* field_cmd = app.add_subcommand("field", "vector field utilities");
  field_cmd->require_subcommand(1);
  auto* gen = field_cmd->add_subcommand("gen", "resample an analytic field to a VF1 grid");
  std::string gen_kind, gen_dims = "64,64,64", gen_out;
  gen->add_option("--kind", gen_kind, "rotor|saddle|abc")->required();
  gen->add_option("--dims", gen_dims, "NX,NY,NZ");
  gen->add_option("--out", gen_out, "output file")->required();

  // trace
  auto* trace_cmd = app.add_subcommand("trace", "seed and trace streamlines");
  std::string tr_field, tr_strategy = "uniform", tr_out;
  int tr_level = 125;
  std::optional<double> tr_step;
  std::optional<int> tr_max_steps;
  std::uint64_t tr_rng = 1;
  double tr_jitter = 0.9;
  trace_cmd->add_option("--field", tr_field, "VF1 grid file")->required();
  trace_cmd->add_option("--strategy", tr_strategy, "uniform|jittered|random|feature");
  trace_cmd->add_option("--level", tr_level, "seed count level S_N");
  trace_cmd->add_option("--step", tr_step, "integration step (default: half the smallest spacing)");
  trace_cmd->add_option("--max-steps", tr_max_steps, "steps per direction (default: largest grid dimension)");
  trace_cmd->add_option("--jitter", tr_jitter, "jitter fraction");
  trace_cmd->add_option("--seed-rng", tr_rng, "random seed");
  trace_cmd->add_option("--out", tr_out, "SL1 output file")->required();

  // search
  auto* search_cmd = app.add_subcommand("search", "neighborhood of one query point as JSON");
  std::string se_lines, se_query;
  SearchArgs se_args;
  search_cmd->add_option("--lines", se_lines, "SL1 file")->required();
  search_cmd->add_option("--query", se_query, "X,Y,Z")->required();
  se_args.add(search_cmd, true);

  // characterize
  auto* char_cmd = app.add_subcommand("characterize", "average distance and uniformity per grid node");
  std::string ch_lines, ch_grid, ch_spec, ch_out;
  char_cmd->add_option("--lines", ch_lines, "SL1 file")->required();
  char_cmd->add_option("--grid", ch_grid, "VF1 file whose nodes are the queries")->required();
  char_cmd->add_option("--search", ch_spec, "knn:K[:metric] or rbn:R[:metric]")->required();
  char_cmd->add_option("--out", ch_out, "CSV output (default stdout)");

  // reconstruct
  auto* rec_cmd = app.add_subcommand("reconstruct", "reconstruct a field from streamline segments");
  std::string rc_field, rc_lines, rc_scheme = "idw", rc_out;
  std::optional<double> rc_sigma;
  bool rc_central = false, rc_normalized = false;
  SearchArgs rc_args;
  rec_cmd->add_option("--field", rc_field, "VF1 ground truth")->required();
  rec_cmd->add_option("--lines", rc_lines, "SL1 file")->required();
  rec_cmd->add_option("--scheme", rc_scheme, "idw|uniform|gaussian");
  rec_cmd->add_option("--sigma", rc_sigma, "gaussian width (default: mean distance)");
  rec_cmd->add_flag("--central-diff", rc_central, "central-difference segment vectors");
  rec_cmd->add_flag("--normalized-error", rc_normalized, "also report error relative to the true speed");
  rec_cmd->add_option("--out", rc_out, "CSV output")->required();
  rc_args.add(rec_cmd, true);

  // saliency
  auto* sal_cmd = app.add_subcommand("saliency", "calculated and reference saliency per segment");
  std::string sa_field, sa_lines, sa_radius = "auto", sa_out;
  int sa_samples = 16, sa_window = 1;
  SearchArgs sa_args;
  sal_cmd->add_option("--field", sa_field, "VF1 ground truth")->required();
  sal_cmd->add_option("--lines", sa_lines, "SL1 file")->required();
  sal_cmd->add_option("--ref-radius", sa_radius, "reference circle radius or auto");
  sal_cmd->add_option("--ref-samples", sa_samples, "reference circle samples");
  sal_cmd->add_option("--exclusion-window", sa_window, "same-curve neighbors excluded on each side");
  sal_cmd->add_option("--out", sa_out, "CSV output")->required();
  sa_args.add(sal_cmd, true);

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "compare KNN and RBN reconstruction CSVs");
  std::string an_knn, an_rbn, an_hist, an_out;
  bool an_good_bad = false, an_dominance = false, an_sparse = false;
  double an_low = 10.0, an_high = 90.0, an_threshold = 80.0;
  an_cmd->add_option("--knn-csv", an_knn, "KNN reconstruction CSV")->required();
  an_cmd->add_option("--rbn-csv", an_rbn, "RBN reconstruction CSV")->required();
  auto* g1 = an_cmd->add_flag("--good-bad", an_good_bad, "percentile groups per method");
  auto* g2 = an_cmd->add_flag("--dominance", an_dominance, "KNN/RBN dominance labels");
  auto* g3 = an_cmd->add_flag("--sparse", an_sparse, "single-neighbor RBN report");
  auto* g4 = an_cmd->add_option("--hist", an_hist, "COL:BINS histogram of both files, CSV");
  g1->excludes(g2, g3, g4);
  g2->excludes(g3, g4);
  g3->excludes(g4);
  an_cmd->add_option("--low", an_low, "good percentile");
  an_cmd->add_option("--high", an_high, "bad percentile");
  an_cmd->add_option("--threshold", an_threshold, "dominance percentile");
  an_cmd->add_option("--out", an_out, "output file (default stdout)");

  // run / best / report
  auto* run_cmd = app.add_subcommand("run", "run an experiment matrix");
  std::string run_config;
  RunOptions run_opts;
  run_cmd->add_option("--config", run_config, "JSON config")->required();
  run_cmd->add_option("--jobs", run_opts.jobs, "concurrent line sets");
  run_cmd->add_flag("--resume", run_opts.resume, "reuse finished line sets");

  auto* best_cmd = app.add_subcommand("best", "best reconstruction per dataset and method");
  std::string best_dir;
  best_cmd->add_option("--dir", best_dir, "output directory")->required();

  auto* report_cmd = app.add_subcommand("report", "all cells of a finished run");
  std::string rep_dir, rep_format = "csv";
  report_cmd->add_option("--dir", rep_dir, "output directory")->required();
  report_cmd->add_option("--format", rep_format, "csv|json")->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const AnalyticField analytic = AnalyticField::make(parse_analytic_kind(gen_kind));
      const auto d = parse_list(gen_dims, 3, "--dims");
      const std::array<int, 3> dims{int(d[0]), int(d[1]), int(d[2])};
      save_grid(resample(VectorField(analytic), GridSpec::spanning(analytic.bounds, dims)), fs::path(gen_out));
    } else if (*trace_cmd) {
      const GridField grid = load_grid(fs::path(tr_field));
      SeedSpec spec;
      spec.strategy = parse_seed_strategy(tr_strategy);
      spec.count_level = tr_level;
      spec.jitter_fraction = tr_jitter;
      spec.rng_seed = tr_rng;
      std::optional<ScalarGrid> interest;
      if (spec.strategy == SeedStrategy::kFeatureAware) interest = gradient_magnitude_field(grid);
      const VectorField field(grid);
      TraceOptions opts;
      opts.step = tr_step.value_or(0.5 * grid.grid.spacing.minCoeff());
      opts.max_steps = tr_max_steps.value_or(*std::max_element(grid.grid.dims.begin(), grid.grid.dims.end()));
      opts.min_speed = default_min_speed(field);
      const auto seeds = generate_seeds(spec, field.bounds(), interest ? &*interest : nullptr);
      save_lines(trace_all(field, seeds, opts), fs::path(tr_out));
    } else if (*search_cmd) {
      const auto lines = load_lines(fs::path(se_lines));
      const SegmentIndex index = index_lines(lines, bounds_of(lines));
      const auto q = parse_list(se_query, 3, "--query");
      const Neighborhood nb = search(index, Vec3(q[0], q[1], q[2]), se_args.config());
      std::cout << neighborhood_json(nb).dump(2) << '\n';
    } else if (*char_cmd) {
      const GridField grid = load_grid(fs::path(ch_grid));
      const auto lines = load_lines(fs::path(ch_lines));
      const SegmentIndex index = index_lines(lines, grid.grid.bounds());
      const SearchConfig cfg = parse_search_spec(ch_spec);
      const IcosaBins& bins = default_icosa_bins();
      UniformityOptions uopts;
      uopts.min_sample_distance = default_min_length(grid.grid.bounds());
      std::string out = "x,y,z,n_neighbors,avg_dist,uniformity\n";
      for (std::size_t i = 0; i < grid.grid.size(); ++i) {
        const Vec3 p = grid.grid.node(i);
        const Neighborhood nb = search(index, p, cfg);
        out += format_number(p.x()) + ',' + format_number(p.y()) + ',' + format_number(p.z()) + ',' +
               std::to_string(nb.size()) + ',';
        if (nb.empty()) {
          out += ",\n";
        } else {
          out += format_number(average_distance(nb)) + ',' + format_number(uniformity(nb, bins, uopts).mu) + '\n';
        }
      }
      emit(out, ch_out);
    } else if (*rec_cmd) {
      const GridField truth = load_grid(fs::path(rc_field));
      const VectorField field(truth);
      const auto lines = load_lines(fs::path(rc_lines));
      const SegmentIndex index = index_lines(lines, field.bounds());
      ReconstructionOptions opts;
      opts.scheme.kind = parse_weight_kind(rc_scheme);
      opts.scheme.sigma = rc_sigma;
      opts.scheme.epsilon = 1e-9 * field.bounds().diagonal();
      opts.mode = rc_central ? VectorMode::kCentralDifference : VectorMode::kDirect;
      opts.normalized_error = rc_normalized;
      opts.min_speed = default_min_speed(field);
      opts.uniformity.min_sample_distance = default_min_length(field.bounds());
      const SearchConfig cfg = rc_args.config();
      const ReconstructionResult result = reconstruct_field(truth, index, cfg, opts);
      write_reconstruction_csv(result.records, fs::path(rc_out));
      ordered_json summary = summary_to_json(result.summary);
      summary["search"] = to_string(cfg);
      summary["scheme"] = to_string(opts.scheme.kind);
      emit(summary.dump(2) + "\n", fs::path(rc_out).replace_extension(".summary.json").string());
    } else if (*sal_cmd) {
      const GridField truth = load_grid(fs::path(sa_field));
      const VectorField field(truth);
      const auto lines = load_lines(fs::path(sa_lines));
      const SegmentIndex index = index_lines(lines, field.bounds());
      SaliencyConfig cfg;
      cfg.search = sa_args.config();
      cfg.ref_samples = sa_samples;
      cfg.exclusion_window = sa_window;
      cfg.epsilon = 1e-9 * field.bounds().diagonal();
      cfg.min_speed = default_min_speed(field);
      if (sa_radius != "auto") {
        cfg.ref_radius_rule = RefRadiusRule::kFixed;
        cfg.fixed_radius = parse_list(sa_radius, 1, "--ref-radius")[0];
      }
      const double parameter = cfg.search.parameter();
      const auto sets = saliency_sweep(field, index, cfg, std::span<const double>(&parameter, 1));
      write_saliency_csv(sets[0].records, fs::path(sa_out));
      if (sets[0].dropped_no_neighbor + sets[0].dropped_no_reference > 0) {
        std::cerr << "dropped " << sets[0].dropped_no_neighbor << " segments without neighbors, "
                  << sets[0].dropped_no_reference << " without reference samples\n";
      }
    } else if (*an_cmd) {
      const auto knn = read_reconstruction_csv(fs::path(an_knn));
      const auto rbn = read_reconstruction_csv(fs::path(an_rbn));
      if (!an_hist.empty()) {
        const auto colon = an_hist.rfind(':');
        if (colon == std::string::npos) throw InvalidArgument("--hist expects COL:BINS");
        const std::string col = an_hist.substr(0, colon);
        const int bins = std::stoi(an_hist.substr(colon + 1));
        std::vector<double> a, b;
        for (const auto& r : knn) a.push_back(column(r, col));
        for (const auto& r : rbn) b.push_back(column(r, col));
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto* v : {&a, &b}) {
          for (double x : *v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
          }
        }
        if (!(hi > lo)) hi = lo + 1.0;
        const Histogram ha = histogram(a, bins, lo, hi), hb = histogram(b, bins, lo, hi);
        std::string out = "bin_lo,bin_hi,knn_count,rbn_count\n";
        for (int i = 0; i < bins; ++i) {
          out += format_number(ha.edges[std::size_t(i)]) + ',' + format_number(ha.edges[std::size_t(i) + 1]) + ',' +
                 std::to_string(ha.counts[std::size_t(i)]) + ',' + std::to_string(hb.counts[std::size_t(i)]) + '\n';
        }
        emit(out, an_out);
      } else if (an_dominance) {
        const DominanceResult d = dominance_groups(knn, rbn, an_threshold);
        std::size_t counts[3] = {0, 0, 0};
        for (auto l : d.labels) ++counts[int(l)];
        ordered_json j;
        j["threshold"] = d.threshold;
        j["points"] = d.labels.size();
        j["similar"] = counts[0];
        j["knn_dominant"] = counts[1];
        j["rbn_dominant"] = counts[2];
        ordered_json groups;
        for (int g = 0; g < 3; ++g) {
          std::vector<double> n, dist, mu;
          for (std::size_t i = 0; i < d.labels.size(); ++i) {
            if (int(d.labels[i]) != g) continue;
            n.push_back(knn[i].n_neighbors);
            dist.push_back(knn[i].avg_distance);
            mu.push_back(knn[i].uniformity);
          }
          const auto mean = [](const std::vector<double>& v) {
            return v.empty() ? ordered_json(nullptr) : ordered_json(std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()));
          };
          groups[to_string(DominanceGroup(g))] = {{"knn_mean_avg_dist", mean(dist)}, {"knn_mean_uniformity", mean(mu)}};
        }
        j["groups"] = groups;
        emit(j.dump(2) + "\n", an_out);
      } else if (an_sparse) {
        const SparseRbnReport s = sparse_rbn_report(rbn, knn);
        ordered_json j = {{"points", s.points},
                          {"sparse_points", s.sparse_points},
                          {"sparse_fraction", s.sparse_fraction},
                          {"sparse_knn_error", s.sparse_knn_error},
                          {"sparse_rbn_error", s.sparse_rbn_error},
                          {"dense_knn_error", s.dense_knn_error},
                          {"dense_rbn_error", s.dense_rbn_error}};
        emit(j.dump(2) + "\n", an_out);
      } else {
        ordered_json j;
        for (const auto& [name, recs] : {std::pair("knn", &knn), std::pair("rbn", &rbn)}) {
          const auto labels = percentile_groups(*recs, an_low, an_high);
          ordered_json m;
          for (auto g : {ErrorGroup::kGood, ErrorGroup::kMiddle, ErrorGroup::kBad}) {
            std::size_t count = 0;
            double err = 0.0, dist = 0.0, mu = 0.0;
            for (std::size_t i = 0; i < labels.size(); ++i) {
              if (labels[i] != g) continue;
              ++count;
              err += (*recs)[i].error;
              dist += (*recs)[i].avg_distance;
              mu += (*recs)[i].uniformity;
            }
            const double c = count > 0 ? double(count) : 1.0;
            m[to_string(g)] = {{"count", count},
                               {"mean_error", err / c},
                               {"mean_avg_dist", dist / c},
                               {"mean_uniformity", mu / c}};
          }
          j[name] = m;
        }
        emit(j.dump(2) + "\n", an_out);
      }
    } else if (*run_cmd) {
      const ExperimentConfig cfg = load_config(fs::path(run_config));
      RunStatistics stats;
      const auto reports = run_matrix(cfg, run_opts, &stats);
      std::size_t failed = 0;
      for (const auto& r : reports) failed += r.status == "failed" ? 1 : 0;
      std::cout << "cells " << reports.size() << " failed " << failed << " line_sets " << stats.line_sets
                << " resumed " << stats.line_sets_skipped << " traced " << stats.traces_computed << " -> "
                << cfg.output_dir.string() << '\n';
      return failed == 0 ? 0 : 3;
    } else if (*best_cmd) {
      ordered_json out = ordered_json::array();
      for (const auto& r : select_best(load_manifest(fs::path(best_dir)))) out.push_back(report_to_json(r));
      std::cout << out.dump(2) << '\n';
    } else if (*report_cmd) {
      const auto reports = load_manifest(fs::path(rep_dir));
      if (rep_format == "csv") {
        std::cout << reports_to_csv(reports);
      } else {
        ordered_json out = ordered_json::array();
        for (const auto& r : reports) out.push_back(report_to_json(r));
        std::cout << out.dump(2) << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "flowseg: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "flowseg: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
