#include "flowseg/harness.hpp"

#include "flowseg/io.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace flowseg {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

// --- Configuration ----------------------------------------------------------

ExperimentConfig ExperimentConfig::desk_scale() {
  ExperimentConfig cfg;
  for (AnalyticKind kind : {AnalyticKind::kRotor, AnalyticKind::kSaddleSpiral, AnalyticKind::kAbc}) {
    FieldSpec f;
    f.name = to_string(kind);
    f.kind = kind;
    cfg.field_specs.push_back(f);
  }
  for (SeedStrategy s : {SeedStrategy::kUniform, SeedStrategy::kJittered, SeedStrategy::kRandom,
                         SeedStrategy::kFeatureAware}) {
    for (int level : {125, 512, 1728}) {
      SeedSpec spec;
      spec.strategy = s;
      spec.count_level = level;
      cfg.seed_specs.push_back(spec);
    }
  }
  cfg.metrics = {DistanceMetric::kShortest, DistanceMetric::kAverage, DistanceMetric::kLongest};
  cfg.knn_ks = {2, 4, 6, 8, 12, 16};
  return cfg;
}

void ExperimentConfig::validate() const {
  if (field_specs.empty()) throw InvalidArgument("config: no fields");
  if (seed_specs.empty()) throw InvalidArgument("config: no seed specs");
  if (metrics.empty()) throw InvalidArgument("config: no metrics");
  for (const auto& f : field_specs) {
    if (f.name.empty()) throw InvalidArgument("config: field without a name");
    if (!f.kind && f.grid_path.empty()) throw InvalidArgument("config: field '" + f.name + "' has no kind or grid");
  }
  for (const auto& s : seed_specs) s.validate();
  for (int k : knn_ks) {
    if (k < 1) throw InvalidArgument("config: K values must be >= 1");
  }
  for (const auto& [name, rs] : rbn_rs) {
    const bool known = std::any_of(field_specs.begin(), field_specs.end(), [&](const FieldSpec& f) { return f.name == name; });
    if (!known) throw InvalidArgument("config: rbn_rs keyed to undeclared field '" + name + "'");
    for (double r : rs) {
      if (!(r > 0.0)) throw InvalidArgument("config: R values must be > 0");
    }
  }
  for (int d : grid_dims) {
    if (d < 2) throw InvalidArgument("config: grid dims must be >= 2");
  }
  saliency.validate();
}

namespace {

std::string to_string(PointOutput p) {
  switch (p) {
    case PointOutput::kNone: return "none";
    case PointOutput::kBest: return "best";
    case PointOutput::kAll: return "all";
  }
  return "?";
}

PointOutput parse_point_output(const std::string& s) {
  if (s == "none") return PointOutput::kNone;
  if (s == "best") return PointOutput::kBest;
  if (s == "all") return PointOutput::kAll;
  throw InvalidArgument("point_output must be none, best or all");
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg;
  cfg.field_specs.clear();
  cfg.seed_specs.clear();
  try {
    cfg.output_dir = doc.value("output_dir", std::string("flowseg-out"));
    cfg.rng_seed = doc.value("rng_seed", std::uint64_t{1});
    if (doc.contains("grid_dims")) cfg.grid_dims = doc.at("grid_dims").get<std::array<int, 3>>();

    for (const auto& f : doc.at("fields")) {
      FieldSpec spec;
      spec.name = f.at("name").get<std::string>();
      if (f.contains("kind")) spec.kind = parse_analytic_kind(f.at("kind").get<std::string>());
      if (f.contains("grid")) spec.grid_path = f.at("grid").get<std::string>();
      if (f.contains("params")) {
        const auto& p = f.at("params");
        spec.params.rotor_axial = p.value("rotor_axial", spec.params.rotor_axial);
        spec.params.saddle_amplitude = p.value("saddle_amplitude", spec.params.saddle_amplitude);
        spec.params.abc_a = p.value("abc_a", spec.params.abc_a);
        spec.params.abc_b = p.value("abc_b", spec.params.abc_b);
        spec.params.abc_c = p.value("abc_c", spec.params.abc_c);
      }
      cfg.field_specs.push_back(spec);
    }

    if (doc.contains("seed_specs")) {
      for (const auto& s : doc.at("seed_specs")) {
        SeedSpec spec;
        spec.strategy = parse_seed_strategy(s.at("strategy").get<std::string>());
        spec.count_level = s.at("level").get<int>();
        spec.jitter_fraction = s.value("jitter_fraction", 0.9);
        cfg.seed_specs.push_back(spec);
      }
    } else {
      const auto& seeding = doc.at("seeding");
      const double jitter = seeding.value("jitter_fraction", 0.9);
      for (const auto& name : seeding.at("strategies")) {
        for (const auto& level : seeding.at("levels")) {
          SeedSpec spec;
          spec.strategy = parse_seed_strategy(name.get<std::string>());
          spec.count_level = level.get<int>();
          spec.jitter_fraction = jitter;
          cfg.seed_specs.push_back(spec);
        }
      }
    }

    cfg.metrics.clear();
    for (const auto& m : doc.at("metrics")) cfg.metrics.push_back(parse_metric(m.get<std::string>()));
    cfg.knn_ks = doc.value("knn_ks", std::vector<int>{});
    if (doc.contains("rbn_rs") && doc.at("rbn_rs").is_object()) {
      for (const auto& [name, rs] : doc.at("rbn_rs").items()) cfg.rbn_rs[name] = rs.get<std::vector<double>>();
    }

    if (doc.contains("scheme")) {
      const auto& s = doc.at("scheme");
      if (s.is_string()) {
        cfg.scheme.kind = parse_weight_kind(s.get<std::string>());
      } else {
        cfg.scheme.kind = parse_weight_kind(s.at("kind").get<std::string>());
        if (s.contains("sigma") && !s.at("sigma").is_null()) cfg.scheme.sigma = s.at("sigma").get<double>();
      }
    }
    cfg.mode = doc.value("central_difference", false) ? VectorMode::kCentralDifference : VectorMode::kDirect;
    cfg.corner_exclusion = doc.value("corner_exclusion", true);
    cfg.nearest_fallback = doc.value("nearest_fallback", true);

    if (doc.contains("saliency")) {
      const auto& s = doc.at("saliency");
      cfg.saliency_enabled = s.value("enabled", true);
      cfg.saliency.ref_samples = s.value("ref_samples", 16);
      cfg.saliency.exclusion_window = s.value("exclusion_window", 1);
      if (s.contains("ref_radius") && s.at("ref_radius").is_number()) {
        cfg.saliency.ref_radius_rule = RefRadiusRule::kFixed;
        cfg.saliency.fixed_radius = s.at("ref_radius").get<double>();
      }
    }
    if (doc.contains("trace")) {
      const auto& t = doc.at("trace");
      if (t.contains("step") && !t.at("step").is_null()) cfg.step = t.at("step").get<double>();
      if (t.contains("max_steps") && !t.at("max_steps").is_null()) cfg.max_steps = t.at("max_steps").get<int>();
    }
    cfg.point_output = parse_point_output(doc.value("point_output", std::string("best")));
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json doc;
  doc["rng_seed"] = cfg.rng_seed;
  doc["grid_dims"] = cfg.grid_dims;
  doc["fields"] = ordered_json::array();
  for (const auto& f : cfg.field_specs) {
    ordered_json j;
    j["name"] = f.name;
    if (f.kind) {
      j["kind"] = to_string(*f.kind);
      j["params"] = {{"rotor_axial", f.params.rotor_axial},
                     {"saddle_amplitude", f.params.saddle_amplitude},
                     {"abc_a", f.params.abc_a},
                     {"abc_b", f.params.abc_b},
                     {"abc_c", f.params.abc_c}};
    }
    if (!f.grid_path.empty()) j["grid"] = f.grid_path.string();
    doc["fields"].push_back(j);
  }
  doc["seed_specs"] = ordered_json::array();
  for (const auto& s : cfg.seed_specs) {
    doc["seed_specs"].push_back(
        {{"strategy", to_string(s.strategy)}, {"level", s.count_level}, {"jitter_fraction", s.jitter_fraction}});
  }
  doc["metrics"] = ordered_json::array();
  for (auto m : cfg.metrics) doc["metrics"].push_back(to_string(m));
  doc["knn_ks"] = cfg.knn_ks;
  doc["rbn_rs"] = ordered_json::object();
  for (const auto& [name, rs] : cfg.rbn_rs) doc["rbn_rs"][name] = rs;
  doc["scheme"] = {{"kind", to_string(cfg.scheme.kind)}};
  doc["scheme"]["sigma"] = cfg.scheme.sigma ? ordered_json(*cfg.scheme.sigma) : ordered_json(nullptr);
  doc["central_difference"] = cfg.mode == VectorMode::kCentralDifference;
  doc["corner_exclusion"] = cfg.corner_exclusion;
  doc["nearest_fallback"] = cfg.nearest_fallback;
  doc["saliency"] = {{"enabled", cfg.saliency_enabled},
                     {"ref_samples", cfg.saliency.ref_samples},
                     {"exclusion_window", cfg.saliency.exclusion_window}};
  doc["saliency"]["ref_radius"] = cfg.saliency.ref_radius_rule == RefRadiusRule::kFixed
                                      ? ordered_json(cfg.saliency.fixed_radius)
                                      : ordered_json("auto");
  doc["trace"] = ordered_json::object();
  doc["trace"]["step"] = cfg.step ? ordered_json(*cfg.step) : ordered_json(nullptr);
  doc["trace"]["max_steps"] = cfg.max_steps ? ordered_json(*cfg.max_steps) : ordered_json(nullptr);
  doc["point_output"] = to_string(cfg.point_output);
  return doc;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg = config_from_json(doc);
  if (const char* env = std::getenv("FLOWSEG_OUT"); env != nullptr && *env != '\0') cfg.output_dir = env;
  return cfg;
}

// --- Reports ----------------------------------------------------------------

std::string CellKey::id() const {
  return dataset + "__" + seeding + "__" + std::to_string(level) + "__" + method + "__" + to_string(metric) + "__" +
         format_number(parameter);
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> number_or_null(const json& doc, const char* name) {
  if (!doc.contains(name) || doc.at(name).is_null()) return std::nullopt;
  return doc.at(name).get<double>();
}

int metric_rank(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::kShortest: return 0;
    case DistanceMetric::kAverage: return 1;
    case DistanceMetric::kLongest: return 2;
  }
  return 3;
}

// Strict "a is a better reconstruction than b" with the documented ties.
bool better_reconstruction(const ExperimentReport& a, const ExperimentReport& b) {
  if (a.summary.e_mean != b.summary.e_mean) return a.summary.e_mean < b.summary.e_mean;
  if (a.key.parameter != b.key.parameter) return a.key.parameter < b.key.parameter;
  return metric_rank(a.key.metric) < metric_rank(b.key.metric);
}

}  // namespace

ordered_json summary_to_json(const ReconstructionSummary& s) {
  ordered_json j;
  j["count"] = s.count;
  j["e_mean"] = s.e_mean;
  j["e_p10"] = s.e_p10;
  j["e_p50"] = s.e_p50;
  j["e_p90"] = s.e_p90;
  j["e_max"] = s.e_max;
  j["mean_n_neighbors"] = s.mean_n_neighbors;
  j["mean_avg_distance"] = s.mean_avg_distance;
  j["mean_uniformity"] = s.mean_uniformity;
  j["min_uniformity"] = s.min_uniformity;
  j["max_uniformity"] = s.max_uniformity;
  j["normalized_e_mean"] = optional_number(s.normalized_e_mean);
  return j;
}

ordered_json report_to_json(const ExperimentReport& r) {
  ordered_json j;
  j["id"] = r.key.id();
  j["kind"] = r.kind;
  j["dataset"] = r.key.dataset;
  j["seeding"] = r.key.seeding;
  j["level"] = r.key.level;
  j["method"] = r.key.method;
  j["metric"] = to_string(r.key.metric);
  j["parameter"] = r.key.parameter;
  j["status"] = r.status;
  j["error"] = r.error;
  j["line_set"] = r.line_set;
  if (r.kind == "reconstruction") {
    j["summary"] = summary_to_json(r.summary);
  } else {
    j["saliency"] = {{"records", r.saliency_records},
                     {"dropped", r.saliency_dropped},
                     {"ccc", optional_number(r.ccc)},
                     {"pcc", optional_number(r.pcc)},
                     {"pcc_p_value", optional_number(r.pcc_p_value)},
                     {"mean_s_cal", r.mean_s_cal},
                     {"mean_s_ref", r.mean_s_ref}};
  }
  j["points_csv"] = r.points_csv;
  j["best"] = r.best;
  return j;
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport r;
  r.kind = j.at("kind").get<std::string>();
  r.key.dataset = j.at("dataset").get<std::string>();
  r.key.seeding = j.at("seeding").get<std::string>();
  r.key.level = j.at("level").get<int>();
  r.key.method = j.at("method").get<std::string>();
  r.key.metric = parse_metric(j.at("metric").get<std::string>());
  r.key.parameter = j.at("parameter").get<double>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", std::string());
  r.line_set = j.value("line_set", std::string());
  if (j.contains("summary")) {
    const auto& s = j.at("summary");
    r.summary.count = s.at("count").get<std::size_t>();
    r.summary.e_mean = s.at("e_mean").get<double>();
    r.summary.e_p10 = s.at("e_p10").get<double>();
    r.summary.e_p50 = s.at("e_p50").get<double>();
    r.summary.e_p90 = s.at("e_p90").get<double>();
    r.summary.e_max = s.at("e_max").get<double>();
    r.summary.mean_n_neighbors = s.at("mean_n_neighbors").get<double>();
    r.summary.mean_avg_distance = s.at("mean_avg_distance").get<double>();
    r.summary.mean_uniformity = s.at("mean_uniformity").get<double>();
    r.summary.min_uniformity = s.value("min_uniformity", 0.0);
    r.summary.max_uniformity = s.value("max_uniformity", 0.0);
    r.summary.normalized_e_mean = number_or_null(s, "normalized_e_mean");
  }
  if (j.contains("saliency")) {
    const auto& s = j.at("saliency");
    r.saliency_records = s.at("records").get<std::size_t>();
    r.saliency_dropped = s.at("dropped").get<std::size_t>();
    r.ccc = number_or_null(s, "ccc");
    r.pcc = number_or_null(s, "pcc");
    r.pcc_p_value = number_or_null(s, "pcc_p_value");
    r.mean_s_cal = s.at("mean_s_cal").get<double>();
    r.mean_s_ref = s.at("mean_s_ref").get<double>();
  }
  r.points_csv = j.value("points_csv", std::string());
  r.best = j.value("best", false);
  return r;
}

std::vector<ExperimentReport> select_best(const std::vector<ExperimentReport>& reports) {
  std::vector<ExperimentReport> best;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& r : reports) {
    if (r.kind != "reconstruction" || r.status != "done") continue;
    const auto key = std::pair(r.key.dataset, r.key.method);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, best.size());
      best.push_back(r);
    } else if (better_reconstruction(r, best[it->second])) {
      best[it->second] = r;
    }
  }
  for (auto& r : best) r.best = true;
  return best;
}

std::string reports_to_csv(const std::vector<ExperimentReport>& reports) {
  std::ostringstream out;
  out << "id,kind,dataset,seeding,level,method,metric,parameter,status,e_mean,mean_n_neighbors,"
         "mean_avg_distance,mean_uniformity,ccc,pcc,pcc_p_value,best\n";
  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : reports) {
    out << r.key.id() << ',' << r.kind << ',' << r.key.dataset << ',' << r.key.seeding << ',' << r.key.level << ','
        << r.key.method << ',' << to_string(r.key.metric) << ',' << format_number(r.key.parameter) << ','
        << r.status << ',';
    if (r.kind == "reconstruction") {
      out << format_number(r.summary.e_mean) << ',' << format_number(r.summary.mean_n_neighbors) << ','
          << format_number(r.summary.mean_avg_distance) << ',' << format_number(r.summary.mean_uniformity)
          << ",,,";
    } else {
      out << ",,,," << opt(r.ccc) << ',' << opt(r.pcc) << ',' << opt(r.pcc_p_value);
    }
    out << ',' << (r.best ? 1 : 0) << '\n';
  }
  return out.str();
}

// --- Per-point files ----------------------------------------------------------

namespace {

void write_atomically(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'");
  return v;
}

}  // namespace

void write_reconstruction_csv(std::span<const ReconstructionRecord> records, const fs::path& path) {
  std::string out = "x,y,z,ex,ey,ez,err,n,avg_dist,uniformity\n";
  out.reserve(records.size() * 160);
  for (const auto& r : records) {
    for (int a = 0; a < 3; ++a) out += format_number(r.grid_point[a]) + ',';
    for (int a = 0; a < 3; ++a) out += format_number(r.reconstructed[a]) + ',';
    out += format_number(r.error) + ',' + std::to_string(r.n_neighbors) + ',' + format_number(r.avg_distance) + ',' +
           format_number(r.uniformity) + '\n';
  }
  write_atomically(path, out);
}

std::vector<ReconstructionRecord> read_reconstruction_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty reconstruction CSV '" + path.string() + "'");
  const auto header = split(line, ',');
  const auto col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("reconstruction CSV lacks column '" + name + "'");
    return std::size_t(std::distance(header.begin(), it));
  };
  const std::size_t cx = col("x"), cy = col("y"), cz = col("z"), cex = col("ex"), cey = col("ey"), cez = col("ez"),
                    cerr = col("err"), cn = col("n"), cd = col("avg_dist"), cu = col("uniformity");
  std::vector<ReconstructionRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw ParseError("reconstruction CSV row " + std::to_string(row) + " has wrong width");
    ReconstructionRecord r;
    r.grid_point = Vec3(parse_double(f[cx]), parse_double(f[cy]), parse_double(f[cz]));
    r.reconstructed = Vec3(parse_double(f[cex]), parse_double(f[cey]), parse_double(f[cez]));
    r.error = parse_double(f[cerr]);
    r.n_neighbors = static_cast<int>(parse_double(f[cn]));
    r.avg_distance = parse_double(f[cd]);
    r.uniformity = parse_double(f[cu]);
    records.push_back(r);
  }
  return records;
}

void write_saliency_csv(std::span<const SaliencyRecord> records, const fs::path& path) {
  std::string out = "segment_id,s_cal,s_ref,ref_radius,n_neighbors\n";
  out.reserve(records.size() * 80);
  for (const auto& r : records) {
    out += std::to_string(r.segment_id) + ',' + format_number(r.s_cal) + ',' + format_number(r.s_ref) + ',' +
           format_number(r.ref_radius) + ',' + std::to_string(r.n_neighbors) + '\n';
  }
  write_atomically(path, out);
}

// --- Radius calibration ---------------------------------------------------------

std::vector<double> calibrate_radii(const SegmentIndex& index, const GridSpec& grid, std::span<const int> ks,
                                    int probes, std::uint64_t seed) {
  if (ks.empty()) return {};
  const int k_max = *std::max_element(ks.begin(), ks.end());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  std::vector<double> sums(ks.size(), 0.0);
  for (int i = 0; i < probes; ++i) {
    const auto raw = index.nearest(grid.node(pick(rng)), k_max, DistanceMetric::kShortest);
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const std::size_t at = std::min(raw.size(), std::size_t(ks[c])) - 1;
      sums[c] += raw[at].distance;
    }
  }
  std::vector<double> radii;
  for (double s : sums) {
    std::ostringstream rounded;
    rounded << std::setprecision(4) << s / double(probes);
    const double r = std::stod(rounded.str());
    if (r > 0.0 && std::find(radii.begin(), radii.end(), r) == radii.end()) radii.push_back(r);
  }
  std::sort(radii.begin(), radii.end());
  return radii;
}

// --- Matrix execution -------------------------------------------------------

namespace {

struct Dataset {
  FieldSpec spec;
  VectorField field;
  GridField truth;
  std::string identity;  // hashed into trace cache keys
  ScalarGrid interest;
  double min_speed = 0.0;
  double min_length = 0.0;
  double epsilon = 0.0;
  double step = 0.0;
  int max_steps = 0;
  std::vector<double> radii;
};

Dataset load_dataset(const FieldSpec& spec, const ExperimentConfig& cfg) {
  if (spec.kind) {
    AnalyticField analytic = AnalyticField::make(*spec.kind, spec.params);
    VectorField field(analytic);
    GridField truth = resample(field, GridSpec::spanning(analytic.bounds, cfg.grid_dims));
    std::ostringstream id;
    id << "analytic:" << to_string(*spec.kind) << ':' << std::hex << content_hash(truth);
    Dataset d{spec, std::move(field), std::move(truth), id.str(), {}, 0, 0, 0, 0, 0, {}};
    return d;
  }
  GridField grid = load_grid(spec.grid_path);
  std::ostringstream id;
  id << "grid:" << std::hex << content_hash(grid);
  GridField truth = grid;
  return Dataset{spec, VectorField(std::move(grid)), std::move(truth), id.str(), {}, 0, 0, 0, 0, 0, {}};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::uint64_t line_set_seed(std::uint64_t root, const std::string& dataset, const SeedSpec& spec) {
  const std::string key = dataset + "/" + to_string(spec.strategy) + "/" + std::to_string(spec.count_level);
  return io::mix64(root ^ io::fnv1a(key));
}

struct LineSet {
  std::string hash;
  std::vector<Streamline> lines;
  bool traced = false;
};

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}
  void write(const std::string& line) {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    out_ << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << ' ' << line << '\n';
    out_.flush();
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

LineSet materialize(const Dataset& d, const SeedSpec& base, const ExperimentConfig& cfg, const fs::path& out_dir) {
  SeedSpec spec = base;
  spec.rng_seed = line_set_seed(cfg.rng_seed, d.spec.name, spec);
  std::ostringstream key;
  key << d.identity << '|' << to_string(spec.strategy) << '|' << spec.count_level << '|'
      << format_number(spec.jitter_fraction) << '|' << spec.rng_seed << '|' << format_number(d.step) << '|'
      << d.max_steps;
  LineSet ls;
  ls.hash = hex64(io::fnv1a(key.str()));
  const fs::path cache = out_dir / "lines" / (ls.hash + ".sl1");
  if (fs::exists(cache)) {
    try {
      ls.lines = load_lines(cache);
      return ls;
    } catch (const ParseError&) {
      // corrupt cache entry: retrace below
    }
  }
  const std::vector<Vec3> seeds = generate_seeds(spec, d.field.bounds(), &d.interest);
  ls.lines = trace_all(d.field, seeds, TraceOptions{d.step, d.max_steps, d.min_speed});
  ls.traced = true;
  std::ostringstream bytes(std::ios::binary);
  save_lines(ls.lines, bytes);
  write_atomically(cache, bytes.str());
  return ls;
}

struct JobResult {
  ordered_json fragment;
  std::vector<ExperimentReport> reports;
  bool skipped = false;
  bool traced = false;
};

std::string job_name(const Dataset& d, const SeedSpec& s) {
  return d.spec.name + "__" + to_string(s.strategy) + "__" + std::to_string(s.count_level);
}

std::vector<double> knn_parameters(const ExperimentConfig& cfg) {
  std::vector<double> ks;
  for (int k : cfg.knn_ks) ks.push_back(double(k));
  return ks;
}

// Best-so-far holders for per-point output within one line set.
struct BestReconstruction {
  std::optional<ExperimentReport> report;
  std::vector<ReconstructionRecord> records;
  std::size_t index = 0;
};
struct BestSaliency {
  std::optional<ExperimentReport> report;
  std::vector<SaliencyRecord> records;
  std::size_t index = 0;
};

bool better_saliency(const ExperimentReport& a, const ExperimentReport& b) {
  const double ca = a.ccc.value_or(-2.0), cb = b.ccc.value_or(-2.0);
  if (ca != cb) return ca > cb;
  if (a.key.parameter != b.key.parameter) return a.key.parameter < b.key.parameter;
  return metric_rank(a.key.metric) < metric_rank(b.key.metric);
}

JobResult run_job(const Dataset& d, const SeedSpec& spec, const ExperimentConfig& cfg, const std::string& fingerprint,
                  const RunOptions& options, RunLog& log) {
  JobResult job;
  const std::string name = job_name(d, spec);
  const fs::path fragment_path = cfg.output_dir / "cells" / (name + ".json");

  if (options.resume && fs::exists(fragment_path)) {
    try {
      std::ifstream in(fragment_path);
      const json frag = json::parse(in);
      if (frag.at("fingerprint").get<std::string>() == fingerprint) {
        job.fragment = ordered_json::parse(frag.dump());
        for (const auto& c : frag.at("cells")) job.reports.push_back(report_from_json(c));
        job.skipped = true;
        return job;
      }
    } catch (const std::exception&) {
      // unreadable fragment: recompute
    }
  }

  const auto started = std::chrono::steady_clock::now();
  // Cell skeletons in canonical order.
  std::vector<ExperimentReport> cells;
  const std::vector<double> ks = knn_parameters(cfg);
  for (DistanceMetric metric : cfg.metrics) {
    for (const auto& [method, params] : {std::pair<std::string, const std::vector<double>*>("knn", &ks),
                                         std::pair<std::string, const std::vector<double>*>("rbn", &d.radii)}) {
      for (double p : *params) {
        for (const char* kind : {"reconstruction", "saliency"}) {
          if (std::string(kind) == "saliency" && !cfg.saliency_enabled) continue;
          ExperimentReport r;
          r.key = {d.spec.name, to_string(spec.strategy), spec.count_level, method, metric, p};
          r.kind = kind;
          cells.push_back(r);
        }
      }
    }
  }
  const auto find_cell = [&](const std::string& kind, const std::string& method, DistanceMetric metric,
                             double p) -> ExperimentReport& {
    for (auto& c : cells) {
      if (c.kind == kind && c.key.method == method && c.key.metric == metric && c.key.parameter == p) return c;
    }
    throw Error("internal: missing cell");
  };

  ordered_json frag;
  frag["job"] = name;
  frag["fingerprint"] = fingerprint;

  std::optional<SegmentIndex> index;
  try {
    LineSet ls = materialize(d, spec, cfg, cfg.output_dir);
    job.traced = ls.traced;
    frag["line_set"] = ls.hash;
    frag["streamlines"] = ls.lines.size();
    index.emplace(decompose(ls.lines, d.min_length), d.field.bounds());
    frag["segments"] = index->size();
    for (auto& c : cells) c.line_set = ls.hash;
  } catch (const std::exception& e) {
    for (auto& c : cells) {
      c.status = "failed";
      c.error = e.what();
    }
    frag["line_set"] = "";
    frag["streamlines"] = 0;
    frag["segments"] = 0;
  }

  std::map<std::string, BestReconstruction> best_recon;
  std::map<std::string, BestSaliency> best_sal;

  if (index) {
    ReconstructionOptions ropt;
    ropt.scheme = cfg.scheme;
    ropt.scheme.epsilon = d.epsilon;
    ropt.mode = cfg.mode;
    ropt.min_speed = d.min_speed;
    ropt.uniformity.min_sample_distance = d.min_length;

    struct Group {
      std::vector<SearchConfig> searches;
      std::vector<std::pair<std::string, double>> labels;
    };
    for (DistanceMetric metric : cfg.metrics) {
      // KNN and RBN cells of one metric share a single query per point.
      // Without the nearest fallback an empty RBN neighborhood fails its
      // sweep, so the methods then run apart.
      std::vector<Group> groups(cfg.nearest_fallback ? 1 : 2);
      for (double k : ks) {
        SearchConfig c = SearchConfig::knn(int(k), metric);
        c.corner_exclusion = cfg.corner_exclusion;
        groups.front().searches.push_back(c);
        groups.front().labels.emplace_back("knn", k);
      }
      for (double r : d.radii) {
        SearchConfig c = SearchConfig::rbn(r, metric);
        c.nearest_fallback = cfg.nearest_fallback;
        groups.back().searches.push_back(c);
        groups.back().labels.emplace_back("rbn", r);
      }
      for (const auto& [searches, labels] : groups) {
        if (searches.empty()) continue;

        try {
          auto results = reconstruct_cells(d.field, d.truth.grid, *index, searches, ropt);
          for (std::size_t c = 0; c < searches.size(); ++c) {
            const auto& [method, param] = labels[c];
            ExperimentReport& cell = find_cell("reconstruction", method, metric, param);
            cell.summary = results[c].summary;
            if (cfg.point_output == PointOutput::kAll) {
              cell.points_csv = "points/" + cell.key.id() + ".csv";
              write_reconstruction_csv(results[c].records, cfg.output_dir / cell.points_csv);
            } else if (cfg.point_output == PointOutput::kBest) {
              BestReconstruction& slot = best_recon[method];
              if (!slot.report || better_reconstruction(cell, *slot.report)) {
                slot.report = cell;
                slot.records = results[c].records;
              }
            }
          }
        } catch (const std::exception& e) {
          for (const auto& [method, param] : labels) {
            ExperimentReport& cell = find_cell("reconstruction", method, metric, param);
            cell.status = "failed";
            cell.error = e.what();
          }
        }

        if (!cfg.saliency_enabled) continue;
        try {
          SaliencyConfig scfg = cfg.saliency;
          scfg.epsilon = d.epsilon;
          scfg.min_speed = d.min_speed;
          auto sets = saliency_cells(d.field, *index, scfg, searches);
          for (std::size_t c = 0; c < searches.size(); ++c) {
            const auto& [method, param] = labels[c];
            ExperimentReport& cell = find_cell("saliency", method, metric, param);
            const auto& recs = sets[c].records;
            cell.saliency_records = recs.size();
            cell.saliency_dropped = sets[c].dropped_no_neighbor + sets[c].dropped_no_reference;
            std::vector<double> cal, ref;
            cal.reserve(recs.size());
            ref.reserve(recs.size());
            for (const auto& r : recs) {
              cal.push_back(r.s_cal);
              ref.push_back(r.s_ref);
            }
            if (!recs.empty()) {
              cell.mean_s_cal = Eigen::Map<const Eigen::VectorXd>(cal.data(), Eigen::Index(cal.size())).mean();
              cell.mean_s_ref = Eigen::Map<const Eigen::VectorXd>(ref.data(), Eigen::Index(ref.size())).mean();
            }
            try {
              cell.ccc = ccc(cal, ref);
              const PearsonResult pr = pcc(cal, ref);
              cell.pcc = pr.r;
              cell.pcc_p_value = pr.p_value;
            } catch (const Error& e) {
              cell.error = e.what();
            }
            if (cfg.point_output == PointOutput::kAll) {
              cell.points_csv = "saliency/" + cell.key.id() + ".csv";
              write_saliency_csv(recs, cfg.output_dir / cell.points_csv);
            } else if (cfg.point_output == PointOutput::kBest) {
              BestSaliency& slot = best_sal[method];
              if (!slot.report || better_saliency(cell, *slot.report)) {
                slot.report = cell;
                slot.records = recs;
              }
            }
          }
        } catch (const std::exception& e) {
          for (const auto& [method, param] : labels) {
            ExperimentReport& cell = find_cell("saliency", method, metric, param);
            cell.status = "failed";
            cell.error = e.what();
          }
        }
      }
    }
  }

  for (auto& [method, slot] : best_recon) {
    if (!slot.report) continue;
    ExperimentReport& cell = find_cell("reconstruction", method, slot.report->key.metric, slot.report->key.parameter);
    cell.points_csv = "points/" + cell.key.id() + ".csv";
    write_reconstruction_csv(slot.records, cfg.output_dir / cell.points_csv);
  }
  for (auto& [method, slot] : best_sal) {
    if (!slot.report) continue;
    ExperimentReport& cell = find_cell("saliency", method, slot.report->key.metric, slot.report->key.parameter);
    cell.points_csv = "saliency/" + cell.key.id() + ".csv";
    write_saliency_csv(slot.records, cfg.output_dir / cell.points_csv);
  }

  frag["cells"] = ordered_json::array();
  for (const auto& c : cells) frag["cells"].push_back(report_to_json(c));
  write_atomically(fragment_path, frag.dump(1) + "\n");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log.write("job " + name + (job.traced ? " traced" : " cached-lines") + " seconds=" + format_number(secs));
  job.fragment = std::move(frag);
  job.reports = std::move(cells);
  return job;
}

}  // namespace

std::vector<ExperimentReport> run_matrix(const ExperimentConfig& cfg_in, const RunOptions& options,
                                         RunStatistics* stats) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  RunLog log(cfg.output_dir / "run.log");
  log.write("run start jobs=" + std::to_string(options.jobs) + (options.resume ? " resume" : ""));

  std::vector<Dataset> datasets;
  for (const auto& spec : cfg.field_specs) {
    Dataset d = load_dataset(spec, cfg);
    const double min_spacing = d.truth.grid.spacing.minCoeff();
    d.step = cfg.step.value_or(0.5 * min_spacing);
    d.max_steps = cfg.max_steps.value_or(*std::max_element(d.truth.grid.dims.begin(), d.truth.grid.dims.end()));
    d.min_speed = default_min_speed(d.field);
    d.min_length = default_min_length(d.field.bounds());
    d.epsilon = 1e-9 * d.field.bounds().diagonal();
    const bool needs_interest = std::any_of(cfg.seed_specs.begin(), cfg.seed_specs.end(), [](const SeedSpec& s) {
      return s.strategy == SeedStrategy::kFeatureAware;
    });
    if (needs_interest) d.interest = gradient_magnitude_field(d.truth);
    datasets.push_back(std::move(d));
  }

  // R sweeps: explicit per field, otherwise calibrated on the uniform line
  // set at the median level.
  for (auto& d : datasets) {
    if (auto it = cfg.rbn_rs.find(d.spec.name); it != cfg.rbn_rs.end()) {
      d.radii = it->second;
      continue;
    }
    std::vector<SeedSpec> candidates;
    for (const auto& s : cfg.seed_specs) {
      if (s.strategy == SeedStrategy::kUniform) candidates.push_back(s);
    }
    if (candidates.empty()) candidates = cfg.seed_specs;
    std::sort(candidates.begin(), candidates.end(),
              [](const SeedSpec& a, const SeedSpec& b) { return a.count_level < b.count_level; });
    const SeedSpec& probe = candidates[(candidates.size() - 1) / 2];
    LineSet ls = materialize(d, probe, cfg, cfg.output_dir);
    const SegmentIndex index(decompose(ls.lines, d.min_length), d.field.bounds());
    d.radii = calibrate_radii(index, d.truth.grid, cfg.knn_ks, 100, io::mix64(cfg.rng_seed ^ io::fnv1a(d.spec.name)));
    cfg.rbn_rs[d.spec.name] = d.radii;
  }

  ordered_json cfg_json = config_to_json(cfg);
  const std::string fingerprint = hex64(io::fnv1a(cfg_json.dump()));

  struct JobSpec {
    std::size_t dataset;
    std::size_t seed;
  };
  std::vector<JobSpec> jobs;
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    for (std::size_t si = 0; si < cfg.seed_specs.size(); ++si) jobs.push_back({di, si});
  }

  std::vector<JobResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        results[j] = run_job(datasets[jobs[j].dataset], cfg.seed_specs[jobs[j].seed], cfg, fingerprint, options, log);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(options.jobs, 1, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Single writer for the aggregated manifest.
  std::vector<ExperimentReport> reports;
  RunStatistics local;
  ordered_json line_sets = ordered_json::array();
  for (auto& r : results) {
    ++local.line_sets;
    local.line_sets_skipped += r.skipped ? 1 : 0;
    local.traces_computed += r.traced ? 1 : 0;
    line_sets.push_back({{"job", r.fragment.value("job", "")},
                         {"line_set", r.fragment.value("line_set", "")},
                         {"streamlines", r.fragment.value("streamlines", 0)},
                         {"segments", r.fragment.value("segments", 0)},
                         {"materializations", 1},
                         {"cells", r.reports.size()}});
    for (auto& rep : r.reports) reports.push_back(std::move(rep));
  }
  const std::vector<ExperimentReport> best = select_best(reports);
  for (auto& r : reports) {
    r.best = std::any_of(best.begin(), best.end(), [&](const ExperimentReport& b) {
      return b.kind == r.kind && b.key.id() == r.key.id();
    });
  }

  std::size_t n_recon = 0, n_sal = 0, n_failed = 0;
  ordered_json manifest;
  manifest["fingerprint"] = fingerprint;
  manifest["config"] = cfg_json;
  manifest["line_sets"] = line_sets;
  manifest["cells"] = ordered_json::array();
  for (const auto& r : reports) {
    (r.kind == "reconstruction" ? n_recon : n_sal) += 1;
    n_failed += r.status == "failed" ? 1 : 0;
    manifest["cells"].push_back(report_to_json(r));
  }
  manifest["counts"] = {{"reconstruction_cells", n_recon}, {"saliency_cells", n_sal}, {"failed_cells", n_failed}};
  write_atomically(cfg.output_dir / "manifest.json", manifest.dump(1) + "\n");
  write_atomically(cfg.output_dir / "summary.csv", reports_to_csv(reports));
  log.write("run done line_sets=" + std::to_string(local.line_sets) + " skipped=" +
            std::to_string(local.line_sets_skipped) + " traced=" + std::to_string(local.traces_computed));
  if (stats) *stats = local;
  return reports;
}

std::vector<ExperimentReport> load_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("no manifest.json in '" + dir.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  std::vector<ExperimentReport> out;
  for (const auto& c : doc.at("cells")) out.push_back(report_from_json(c));
  return out;
}

}  // namespace flowseg
