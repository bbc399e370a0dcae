#include "flowseg/field.hpp"

#include "flowseg/io.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace flowseg {

DomainBounds::DomainBounds(const Vec3& min_corner, const Vec3& max_corner)
    : min_(min_corner), max_(max_corner) {
  if (!(min_.array() < max_.array()).all() || !min_.allFinite() || !max_.allFinite()) {
    throw InvalidArgument("DomainBounds: min_corner must be < max_corner componentwise");
  }
}

bool DomainBounds::contains(const Vec3& p, double tol) const {
  return (p.array() >= min_.array() - tol).all() && (p.array() <= max_.array() + tol).all();
}

std::array<Vec3, 8> DomainBounds::corners() const {
  std::array<Vec3, 8> out;
  for (int c = 0; c < 8; ++c) {
    out[c] = Vec3((c & 1) ? max_.x() : min_.x(), (c & 2) ? max_.y() : min_.y(),
                  (c & 4) ? max_.z() : min_.z());
  }
  return out;
}

double corner_distance(const DomainBounds& bounds, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& c : bounds.corners()) best = std::min(best, (p - c).norm());
  return best;
}

// --- GridSpec ---------------------------------------------------------------

GridSpec GridSpec::spanning(const DomainBounds& bounds, std::array<int, 3> dims) {
  GridSpec g;
  g.dims = dims;
  g.origin = bounds.min_corner();
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InvalidGridError("grid needs at least 2 nodes along every axis");
    g.spacing[a] = bounds.extent()[a] / double(dims[a] - 1);
  }
  return g;
}

std::array<int, 3> GridSpec::unravel(std::size_t idx) const {
  const int i = int(idx % std::size_t(dims[0]));
  idx /= std::size_t(dims[0]);
  const int j = int(idx % std::size_t(dims[1]));
  const int k = int(idx / std::size_t(dims[1]));
  return {i, j, k};
}

Vec3 GridSpec::node(std::size_t idx) const {
  const auto [i, j, k] = unravel(idx);
  return node(i, j, k);
}

DomainBounds GridSpec::bounds() const {
  const Vec3 far = origin + spacing.cwiseProduct(Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1));
  return DomainBounds(origin, far);
}

void GridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InvalidGridError("grid needs at least 2 nodes along every axis");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw InvalidGridError("grid spacing must be positive and finite");
    }
  }
  if (!origin.allFinite()) throw InvalidGridError("grid origin must be finite");
}

GridField::GridField(GridSpec g, std::vector<Vec3> v) : grid(std::move(g)), values(std::move(v)) {
  grid.validate();
  if (values.size() != grid.size()) {
    throw InvalidGridError("grid value count " + std::to_string(values.size()) +
                           " does not match dims product " + std::to_string(grid.size()));
  }
}

bool GridField::operator==(const GridField& other) const {
  return grid.dims == other.grid.dims && grid.origin == other.grid.origin &&
         grid.spacing == other.grid.spacing && values == other.values;
}

// --- Analytic stand-ins -----------------------------------------------------

AnalyticField AnalyticField::rotor(AnalyticParams params) {
  return {AnalyticKind::kRotor, params, DomainBounds(Vec3::Constant(-2.0), Vec3::Constant(2.0))};
}

AnalyticField AnalyticField::saddle_spiral(AnalyticParams params) {
  return {AnalyticKind::kSaddleSpiral, params,
          DomainBounds(Vec3::Constant(-2.0), Vec3::Constant(2.0))};
}

AnalyticField AnalyticField::abc(AnalyticParams params) {
  return {AnalyticKind::kAbc, params,
          DomainBounds(Vec3::Zero(), Vec3::Constant(2.0 * std::numbers::pi))};
}

AnalyticField AnalyticField::make(AnalyticKind kind, AnalyticParams params) {
  switch (kind) {
    case AnalyticKind::kRotor: return rotor(params);
    case AnalyticKind::kSaddleSpiral: return saddle_spiral(params);
    case AnalyticKind::kAbc: return abc(params);
  }
  throw InvalidArgument("unknown analytic kind");
}

Vec3 AnalyticField::evaluate(const Vec3& p) const {
  const double x = p.x(), y = p.y(), z = p.z();
  switch (kind) {
    case AnalyticKind::kRotor:
      return {-y, x, params.rotor_axial};
    case AnalyticKind::kSaddleSpiral:
      return {x, -y, params.saddle_amplitude * std::sin(std::numbers::pi * z)};
    case AnalyticKind::kAbc: {
      const double a = params.abc_a, b = params.abc_b, c = params.abc_c;
      return {a * std::sin(z) + c * std::cos(y), b * std::sin(x) + a * std::cos(z),
              c * std::sin(y) + b * std::cos(x)};
    }
  }
  return Vec3::Zero();
}

AnalyticKind parse_analytic_kind(std::string_view name) {
  if (name == "rotor") return AnalyticKind::kRotor;
  if (name == "saddle" || name == "saddle-spiral") return AnalyticKind::kSaddleSpiral;
  if (name == "abc") return AnalyticKind::kAbc;
  throw InvalidArgument("unknown field kind '" + std::string(name) + "'");
}

std::string to_string(AnalyticKind kind) {
  switch (kind) {
    case AnalyticKind::kRotor: return "rotor";
    case AnalyticKind::kSaddleSpiral: return "saddle";
    case AnalyticKind::kAbc: return "abc";
  }
  return "?";
}

// --- VectorField ------------------------------------------------------------

VectorField::VectorField(GridField grid)
    : source_(std::move(grid)),
      bounds_(std::get<GridField>(source_).grid.bounds()),
      tolerance_(1e-9 * bounds_.diagonal()) {}

VectorField::VectorField(AnalyticField analytic)
    : source_(std::move(analytic)),
      bounds_(std::get<AnalyticField>(source_).bounds),
      tolerance_(1e-9 * bounds_.diagonal()) {}

Vec3 VectorField::sample(const Vec3& p) const {
  if (!bounds_.contains(p, tolerance_)) {
    std::ostringstream msg;
    msg << "sample point (" << p.x() << ", " << p.y() << ", " << p.z() << ") outside field bounds";
    throw DomainError(msg.str());
  }
  if (const auto* g = std::get_if<GridField>(&source_)) return trilinear(g->grid, g->values, p);
  return std::get<AnalyticField>(source_).evaluate(p);
}

Vec3 sample(const VectorField& field, const Vec3& p) { return field.sample(p); }

Vec3 sample(const GridField& field, const Vec3& p) {
  const DomainBounds b = field.grid.bounds();
  if (!b.contains(p, 1e-9 * b.diagonal())) throw DomainError("sample point outside grid bounds");
  return trilinear(field.grid, field.values, p);
}

double sample(const ScalarGrid& grid, const Vec3& p) {
  const DomainBounds b = grid.grid.bounds();
  if (!b.contains(p, 1e-9 * b.diagonal())) throw DomainError("sample point outside grid bounds");
  return trilinear(grid.grid, grid.values, p);
}

GridField resample(const VectorField& field, const GridSpec& grid) {
  grid.validate();
  std::vector<Vec3> values(grid.size());
  for (std::size_t n = 0; n < values.size(); ++n) values[n] = field.sample(grid.node(n));
  return GridField(grid, std::move(values));
}

ScalarGrid gradient_magnitude_field(const GridField& field) {
  const GridSpec& g = field.grid;
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 2) throw InvalidGridError("gradient needs at least 2 nodes along every axis");
  }
  ScalarGrid out{g, std::vector<double>(g.size())};
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        Eigen::Matrix3d jac;
        const std::array<int, 3> ijk{i, j, k};
        for (int a = 0; a < 3; ++a) {
          std::array<int, 3> lo = ijk, hi = ijk;
          lo[a] = std::max(ijk[a] - 1, 0);
          hi[a] = std::min(ijk[a] + 1, g.dims[a] - 1);
          const double h = double(hi[a] - lo[a]) * g.spacing[a];
          jac.col(a) = (field.at(hi[0], hi[1], hi[2]) - field.at(lo[0], lo[1], lo[2])) / h;
        }
        out.values[g.index(i, j, k)] = jac.norm();
      }
    }
  }
  return out;
}

ScalarGrid gradient_magnitude_field(const VectorField& field, std::array<int, 3> dims) {
  if (const GridField* g = field.grid()) return gradient_magnitude_field(*g);
  return gradient_magnitude_field(resample(field, GridSpec::spanning(field.bounds(), dims)));
}

double rms_speed(const VectorField& field) {
  const GridField* g = field.grid();
  GridField sampled = g ? *g : resample(field, GridSpec::spanning(field.bounds(), {16, 16, 16}));
  double sum = 0.0;
  for (const Vec3& v : sampled.values) sum += v.squaredNorm();
  return std::sqrt(sum / double(sampled.values.size()));
}

// --- VF1 I/O ----------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string vf1_header(const GridSpec& g) {
  std::string h = "VF1";
  for (int d : g.dims) h += " " + std::to_string(d);
  for (int a = 0; a < 3; ++a) h += " " + format_double(g.origin[a]);
  for (int a = 0; a < 3; ++a) h += " " + format_double(g.spacing[a]);
  h += "\n";
  return h;
}

}  // namespace

void save_grid(const GridField& field, std::ostream& out) {
  out << vf1_header(field.grid);
  for (const Vec3& v : field.values) {
    for (int a = 0; a < 3; ++a) io::write_f64(out, v[a]);
  }
  if (!out) throw Error("failed writing VF1 grid");
}

void save_grid(const GridField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save_grid(field, out);
}

GridField load_grid(std::istream& in) {
  std::string header;
  char c = 0;
  while (header.size() < 4096 && in.get(c) && c != '\n') header.push_back(c);
  if (c != '\n') throw ParseError("VF1: missing or overlong header line at offset 0");

  std::istringstream hs(header);
  std::string magic;
  GridSpec g;
  hs >> magic;
  if (magic != "VF1") throw ParseError("VF1: bad magic at offset 0");
  std::string tok;
  for (int a = 0; a < 3; ++a) {
    if (!(hs >> tok) || std::from_chars(tok.data(), tok.data() + tok.size(), g.dims[a]).ec != std::errc{}) {
      throw ParseError("VF1: malformed dims in header at offset 0");
    }
  }
  for (int field_no = 0; field_no < 6; ++field_no) {
    double v = 0.0;
    if (!(hs >> tok)) throw ParseError("VF1: truncated header at offset 0");
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      throw ParseError("VF1: malformed number '" + tok + "' in header at offset 0");
    }
    (field_no < 3 ? g.origin : g.spacing)[field_no % 3] = v;
  }
  if (hs >> tok) throw ParseError("VF1: trailing tokens in header at offset 0");
  try {
    g.validate();
  } catch (const InvalidGridError& e) {
    throw ParseError(std::string("VF1: invalid header at offset 0: ") + e.what());
  }

  const std::size_t payload_start = header.size() + 1;
  std::vector<Vec3> values(g.size());
  for (std::size_t n = 0; n < values.size(); ++n) {
    for (int a = 0; a < 3; ++a) {
      const std::size_t offset = payload_start + (3 * n + std::size_t(a)) * 8;
      double v = 0.0;
      if (!io::read_f64(in, v)) {
        throw ParseError("VF1: payload truncated at offset " + std::to_string(offset) + " (expected " +
                         std::to_string(g.size()) + " vectors)");
      }
      if (!std::isfinite(v)) throw ParseError("VF1: non-finite value at offset " + std::to_string(offset));
      values[n][a] = v;
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("VF1: payload larger than header dims at offset " +
                     std::to_string(payload_start + values.size() * 24));
  }
  return GridField(g, std::move(values));
}

GridField load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open grid file '" + path.string() + "'");
  return load_grid(in);
}

std::uint64_t content_hash(const GridField& field) {
  std::ostringstream out(std::ios::binary);
  save_grid(field, out);
  return io::fnv1a(out.str());
}

}  // namespace flowseg
