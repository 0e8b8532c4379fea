#include "gano/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>

#include "gano/errors.hpp"
#include "gano/rng.hpp"

namespace gano::geo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kOracleChunk = 32;

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

std::ofstream open_out(const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

double nearest_distance(Vec2 p, std::span<const Vec2> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& q : set) best = std::min(best, (p - q).norm2());
  return std::sqrt(best);
}

}  // namespace

// ---------------------------------------------------------------- shapes

double FourierShape::radius(double theta) const {
  double r = r0;
  for (const Harmonic& h : harmonics) {
    const double k = static_cast<double>(h.order);
    r += h.a * std::cos(k * theta) + h.b * std::sin(k * theta);
  }
  return r;
}

double FourierShape::radius_derivative(double theta) const {
  double d = 0.0;
  for (const Harmonic& h : harmonics) {
    const double k = static_cast<double>(h.order);
    d += k * (-h.a * std::sin(k * theta) + h.b * std::cos(k * theta));
  }
  return d;
}

Vec2 FourierShape::boundary_point(double theta) const {
  const double r = radius(theta);
  return {r * std::cos(theta), r * std::sin(theta)};
}

bool FourierShape::inside(Vec2 p) const { return p.norm() < radius(std::atan2(p.y, p.x)); }

double FourierShape::area() const {
  const Polyline line = discretize(*this);
  double a = 0.0;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    const Vec2 p = line.segment_start(i), q = line.segment_end(i);
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool shape_is_valid(const FourierShape& shape) {
  for (std::size_t i = 0; i < kRadiusCheckSamples; ++i) {
    const double r =
        shape.radius(kTwoPi * static_cast<double>(i) / static_cast<double>(kRadiusCheckSamples));
    if (!(r > 0.0) || r > kMaxRadius) return false;
  }
  return true;
}

FourierShape random_shape(std::uint64_t seed, Range r0_range, Range amp_range) {
  if (!(r0_range.lo > 0.0) || r0_range.hi < r0_range.lo || r0_range.hi > kMaxRadius)
    throw ValidationError("random_shape: r0 range must satisfy 0 < lo <= hi <= 0.5");
  if (amp_range.lo < 0.0 || amp_range.hi < amp_range.lo)
    throw ValidationError("random_shape: amplitude range must satisfy 0 <= lo <= hi");
  Rng rng(seed);
  constexpr int kMaxRejections = 100;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    FourierShape s;
    s.r0 = rng.uniform(r0_range.lo, r0_range.hi);
    for (int k = kMinOrder; k <= kMaxOrder; ++k) {
      Harmonic h{k, 0.0, 0.0};
      h.a = rng.uniform(amp_range.lo, amp_range.hi) * (rng.coin() ? 1.0 : -1.0);
      h.b = rng.uniform(amp_range.lo, amp_range.hi) * (rng.coin() ? 1.0 : -1.0);
      s.harmonics.push_back(h);
    }
    if (shape_is_valid(s)) return s;
  }
  throw ValidationError("random_shape: 100 consecutive samples violated 0 < r <= 0.5; "
                        "the r0/amplitude ranges are infeasible");
}

// ---------------------------------------------------------------- polylines

std::size_t Polyline::segment_count() const {
  if (points.size() < 2) return 0;
  return closed ? points.size() : points.size() - 1;
}

double Polyline::length() const {
  double l = 0.0;
  for (std::size_t i = 0; i < segment_count(); ++i) l += (segment_end(i) - segment_start(i)).norm();
  return l;
}

Polyline discretize(const FourierShape& shape, std::size_t segments) {
  if (segments < 3) throw ValidationError("discretize: need at least 3 segments");
  Polyline line;
  line.points.reserve(segments);
  for (std::size_t i = 0; i < segments; ++i)
    line.points.push_back(
        shape.boundary_point(kTwoPi * static_cast<double>(i) / static_cast<double>(segments)));
  return line;
}

Polyline resample_arclength(const Polyline& line, std::size_t n) {
  const std::size_t segs = line.segment_count();
  if (segs == 0 || n == 0) throw ValidationError("resample_arclength: empty input or n = 0");
  std::vector<double> cum(segs + 1, 0.0);
  for (std::size_t i = 0; i < segs; ++i)
    cum[i + 1] = cum[i] + (line.segment_end(i) - line.segment_start(i)).norm();
  const double total = cum.back();
  const double step =
      line.closed ? total / static_cast<double>(n) : total / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  Polyline out;
  out.closed = line.closed;
  out.points.reserve(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::min(step * static_cast<double>(k), total);
    while (seg + 1 < segs && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (s - cum[seg]) / len : 0.0;
    const Vec2 a = line.segment_start(seg), b = line.segment_end(seg);
    out.points.push_back(a + (b - a) * t);
  }
  return out;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = ab.norm2();
  double t = l2 > 0.0 ? dot(p - a, ab) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double distance_to_polyline(Vec2 p, const Polyline& line) {
  if (line.points.size() == 1) return (p - line.points[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < line.segment_count(); ++i)
    best = std::min(best, point_segment_distance(p, line.segment_start(i), line.segment_end(i)));
  return best;
}

// ---------------------------------------------------------------- oracle

SdfOracle::SdfOracle(const FourierShape& shape, std::size_t segments)
    : shape_(shape), boundary_(discretize(shape, segments)) {}

double SdfOracle::operator()(Vec2 p) const {
  // Segments are scanned in chunks whose bounding circles prune exactly.
  const std::size_t n = boundary_.points.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c0 = 0; c0 < n; c0 += kOracleChunk) {
    const std::size_t c1 = std::min(n, c0 + kOracleChunk);
    const Vec2 a = boundary_.points[c0];
    double reach = 0.0;
    for (std::size_t i = c0 + 1; i <= c1; ++i)
      reach = std::max(reach, (boundary_.points[i % n] - a).norm());
    if ((p - a).norm() - reach >= best) continue;
    for (std::size_t i = c0; i < c1; ++i)
      best = std::min(best, point_segment_distance(p, boundary_.points[i], boundary_.points[(i + 1) % n]));
  }
  return shape_.inside(p) ? -best : best;
}

double sdf_oracle(const FourierShape& shape, Vec2 p) { return SdfOracle(shape)(p); }

// ---------------------------------------------------------------- grids

double GridField::interpolate(Vec2 p) const {
  if (nx < 2 || ny < 2) throw ValidationError("GridField::interpolate: need at least 2x2 samples");
  const double fi = std::clamp((p.x - bounds.x_min) / dx() - 0.5, 0.0, static_cast<double>(nx - 1));
  const double fj = std::clamp((p.y - bounds.y_min) / dy() - 0.5, 0.0, static_cast<double>(ny - 1));
  const std::size_t i0 = std::min(static_cast<std::size_t>(fi), nx - 2);
  const std::size_t j0 = std::min(static_cast<std::size_t>(fj), ny - 2);
  const double tx = fi - static_cast<double>(i0);
  const double ty = fj - static_cast<double>(j0);
  const double v00 = at(i0, j0), v10 = at(i0 + 1, j0);
  const double v01 = at(i0, j0 + 1), v11 = at(i0 + 1, j0 + 1);
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
}

std::vector<Vec2> GridField::points() const {
  std::vector<Vec2> out;
  out.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) out.push_back(point(i, j));
  return out;
}

GridField make_grid(std::size_t n, Box bounds) { return GridField(n, n, bounds); }

// ---------------------------------------------------------------- marching squares

std::vector<Polyline> marching_squares(const GridField& grid, double iso) {
  const std::size_t nx = grid.nx, ny = grid.ny;
  if (nx < 3 || ny < 3 || grid.values.size() != nx * ny)
    throw ValidationError("marching_squares: grid needs at least 2x2 cells and nx*ny values");

  // A crossing is keyed by the grid edge it lies on: 2*node for the edge to
  // the +x neighbour, 2*node+1 for the edge to the +y neighbour.
  std::unordered_map<std::size_t, Vec2> crossing;
  auto node = [nx](std::size_t i, std::size_t j) { return j * nx + i; };
  auto edge_point = [&](std::size_t key) -> Vec2 {
    auto it = crossing.find(key);
    if (it != crossing.end()) return it->second;
    const std::size_t id = key / 2;
    const std::size_t i = id % nx, j = id / nx;
    const std::size_t i2 = (key % 2 == 0) ? i + 1 : i;
    const std::size_t j2 = (key % 2 == 0) ? j : j + 1;
    const double va = grid.at(i, j), vb = grid.at(i2, j2);
    const double t = (iso - va) / (vb - va);
    const Vec2 pa = grid.point(i, j), pb = grid.point(i2, j2);
    const Vec2 p = pa + (pb - pa) * t;
    crossing.emplace(key, p);
    return p;
  };

  std::vector<std::pair<std::size_t, std::size_t>> segments;
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double v0 = grid.at(i, j), v1 = grid.at(i + 1, j);
      const double v2 = grid.at(i + 1, j + 1), v3 = grid.at(i, j + 1);
      const int c = (v0 > iso ? 1 : 0) | (v1 > iso ? 2 : 0) | (v2 > iso ? 4 : 0) | (v3 > iso ? 8 : 0);
      if (c == 0 || c == 15) continue;
      const std::size_t e0 = 2 * node(i, j);          // bottom: v0-v1
      const std::size_t e1 = 2 * node(i + 1, j) + 1;  // right: v1-v2
      const std::size_t e2 = 2 * node(i, j + 1);      // top: v3-v2
      const std::size_t e3 = 2 * node(i, j) + 1;      // left: v0-v3
      if (c == 5 || c == 10) {
        const bool center_above = 0.25 * (v0 + v1 + v2 + v3) > iso;
        const bool cut_v1_v3 = (c == 5) == center_above;
        if (cut_v1_v3) {
          segments.emplace_back(e0, e1);
          segments.emplace_back(e2, e3);
        } else {
          segments.emplace_back(e3, e0);
          segments.emplace_back(e1, e2);
        }
        continue;
      }
      std::size_t ends[2];
      int k = 0;
      const bool b0 = c & 1, b1 = c & 2, b2 = c & 4, b3 = c & 8;
      if (b0 != b1) ends[k++] = e0;
      if (b1 != b2) ends[k++] = e1;
      if (b3 != b2) ends[k++] = e2;
      if (b0 != b3) ends[k++] = e3;
      segments.emplace_back(ends[0], ends[1]);
    }
  }

  std::unordered_map<std::size_t, std::vector<std::size_t>> incident;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    incident[segments[s].first].push_back(s);
    incident[segments[s].second].push_back(s);
  }
  std::vector<bool> used(segments.size(), false);
  std::vector<Polyline> lines;

  auto trace = [&](std::size_t start_seg, std::size_t start_key) {
    Polyline line;
    std::size_t key = start_key;
    std::size_t seg = start_seg;
    line.points.push_back(edge_point(key));
    while (true) {
      used[seg] = true;
      const std::size_t next = segments[seg].first == key ? segments[seg].second : segments[seg].first;
      key = next;
      std::size_t following = segments.size();
      for (std::size_t s : incident[key])
        if (!used[s]) following = s;
      if (following == segments.size()) {
        if (key == start_key) {
          line.closed = true;
        } else {
          line.points.push_back(edge_point(key));
          line.closed = false;
        }
        break;
      }
      line.points.push_back(edge_point(key));
      seg = following;
    }
    lines.push_back(std::move(line));
  };

  // Open chains start at crossings used by a single segment (grid border).
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    for (std::size_t key : {segments[s].first, segments[s].second}) {
      if (incident[key].size() == 1 && !used[s]) trace(s, key);
    }
  }
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) trace(s, segments[s].first);

  // Vertices of a chain are distinct by construction except for degenerate
  // crossings that land on a shared sample; drop consecutive duplicates.
  for (Polyline& line : lines) {
    auto& p = line.points;
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (line.closed && p.size() > 1 && p.front() == p.back()) p.pop_back();
  }
  return lines;
}

Polyline longest(const std::vector<Polyline>& lines) {
  Polyline best;
  double best_len = -1.0;
  for (const Polyline& l : lines) {
    const double len = l.length();
    if (len > best_len) {
      best_len = len;
      best = l;
    }
  }
  return best;
}

// ---------------------------------------------------------------- Hausdorff

namespace {

double directed(const std::vector<Polyline>& from, const std::vector<Polyline>& to) {
  double worst = 0.0;
  for (const Polyline& a : from) {
    for (const Vec2& p : a.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Polyline& b : to) best = std::min(best, distance_to_polyline(p, b));
      worst = std::max(worst, best);
    }
  }
  return worst;
}

bool all_empty(const std::vector<Polyline>& lines) {
  return std::all_of(lines.begin(), lines.end(), [](const Polyline& l) { return l.points.empty(); });
}

}  // namespace

double hausdorff(const std::vector<Polyline>& a, const std::vector<Polyline>& b) {
  if (all_empty(a) || all_empty(b)) throw ValidationError("hausdorff: empty input");
  return std::max(directed(a, b), directed(b, a));
}

double hausdorff(const Polyline& a, const Polyline& b) {
  return hausdorff(std::vector<Polyline>{a}, std::vector<Polyline>{b});
}

// ---------------------------------------------------------------- point metrics

double f1_score(std::span<const Vec2> pred, std::span<const Vec2> truth, double tau,
                double* precision, double* recall) {
  if (pred.empty() || truth.empty()) throw ValidationError("f1_score: empty point set");
  std::size_t hit_p = 0, hit_t = 0;
  for (const Vec2& p : pred)
    if (nearest_distance(p, truth) <= tau) ++hit_p;
  for (const Vec2& t : truth)
    if (nearest_distance(t, pred) <= tau) ++hit_t;
  const double pr = static_cast<double>(hit_p) / static_cast<double>(pred.size());
  const double rc = static_cast<double>(hit_t) / static_cast<double>(truth.size());
  if (precision) *precision = pr;
  if (recall) *recall = rc;
  return pr + rc > 0.0 ? 2.0 * pr * rc / (pr + rc) : 0.0;
}

double chamfer(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.empty() || b.empty()) throw ValidationError("chamfer: empty point set");
  double sa = 0.0, sb = 0.0;
  for (const Vec2& p : a) {
    const double d = nearest_distance(p, b);
    sa += d * d;
  }
  for (const Vec2& p : b) {
    const double d = nearest_distance(p, a);
    sb += d * d;
  }
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

double emd(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size())
    throw ValidationError("emd: point sets differ in size (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  if (a.empty()) throw ValidationError("emd: empty point set");
  if (a.size() > kMaxEmdPoints)
    throw ValidationError("emd: " + std::to_string(a.size()) + " points exceed the exact-assignment limit of 512");
  // Hungarian algorithm with potentials, O(n^3); 1-based rows and columns.
  const std::size_t n = a.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (a[i0 - 1] - b[j - 1]).norm() - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += (a[p[j] - 1] - b[j - 1]).norm();
  return total / static_cast<double>(n);
}

PointMetrics metrics(std::span<const Vec2> pred, std::span<const Vec2> truth, double tau,
                     bool require_emd) {
  PointMetrics m;
  m.f1 = f1_score(pred, truth, tau, &m.precision, &m.recall);
  m.chamfer = chamfer(pred, truth);
  if (require_emd || (pred.size() == truth.size() && pred.size() <= kMaxEmdPoints)) {
    m.emd = emd(pred, truth);
    m.has_emd = true;
  }
  return m;
}

RelErrors rel_errors(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw ValidationError("rel_errors: size mismatch " + std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()));
  double n1 = 0.0, d1 = 0.0, n2 = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    n1 += std::fabs(e);
    d1 += std::fabs(truth[i]);
    n2 += e * e;
    d2 += truth[i] * truth[i];
  }
  if (!(d2 > 0.0)) throw ValidationError("rel_errors: truth has zero norm");
  return {n1 / d1, std::sqrt(n2 / d2)};
}

// ---------------------------------------------------------------- CSV

void write_points_csv(const std::filesystem::path& path, std::span<const Vec2> points) {
  auto out = open_out(path);
  out << "x,y\n";
  for (const Vec2& p : points) out << p.x << ',' << p.y << '\n';
}

std::vector<Vec2> read_points_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<Vec2> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto v = split_doubles(line);
    if (v.size() != 2) throw ValidationError(path.string() + ": expected 2 columns, got: " + line);
    out.push_back({v[0], v[1]});
  }
  return out;
}

void write_polylines_csv(const std::filesystem::path& path, const std::vector<Polyline>& lines) {
  auto out = open_out(path);
  out << "contour,closed,x,y\n";
  for (std::size_t c = 0; c < lines.size(); ++c)
    for (const Vec2& p : lines[c].points)
      out << c << ',' << (lines[c].closed ? 1 : 0) << ',' << p.x << ',' << p.y << '\n';
}

void write_grid_csv(const std::filesystem::path& path, const GridField& grid) {
  auto out = open_out(path);
  out << "nx,ny,x_min,x_max,y_min,y_max\n";
  out << grid.nx << ',' << grid.ny << ',' << grid.bounds.x_min << ',' << grid.bounds.x_max << ','
      << grid.bounds.y_min << ',' << grid.bounds.y_max << '\n';
  out << "value\n";
  for (double v : grid.values) out << v << '\n';
}

GridField read_grid_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  const auto h = split_doubles(line);
  if (h.size() != 6) throw ValidationError(path.string() + ": malformed grid header");
  GridField g(static_cast<std::size_t>(h[0]), static_cast<std::size_t>(h[1]), Box{h[2], h[3], h[4], h[5]});
  std::getline(in, line);
  for (double& v : g.values) {
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": truncated grid values");
    v = std::stod(line);
  }
  return g;
}

void write_shape_csv(const std::filesystem::path& path, const FourierShape& shape) {
  auto out = open_out(path);
  out << "order,a,b\n";
  out << 0 << ',' << shape.r0 << ',' << 0 << '\n';
  for (const Harmonic& h : shape.harmonics) out << h.order << ',' << h.a << ',' << h.b << '\n';
}

FourierShape read_shape_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  FourierShape s;
  s.r0 = 0.0;
  bool have_r0 = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto v = split_doubles(line);
    if (v.size() != 3) throw ValidationError(path.string() + ": expected order,a,b rows");
    const int order = static_cast<int>(v[0]);
    if (order == 0) {
      s.r0 = v[1];
      have_r0 = true;
    } else {
      s.harmonics.push_back({order, v[1], v[2]});
    }
  }
  if (!have_r0) throw ValidationError(path.string() + ": missing base radius row");
  return s;
}

}  // namespace gano::geo
