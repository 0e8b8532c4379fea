#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gano::geo {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

struct Harmonic {
  int order = 3;
  double a = 0.0;  // cosine coefficient
  double b = 0.0;  // sine coefficient
  bool operator==(const Harmonic&) const = default;
};

/// Star-shaped boundary r(theta) = r0 + sum a_k cos(k theta) + b_k sin(k theta).
struct FourierShape {
  double r0 = 0.3;
  std::vector<Harmonic> harmonics;

  double radius(double theta) const;
  double radius_derivative(double theta) const;
  Vec2 boundary_point(double theta) const;
  /// Radial inside test; exact for star-shaped boundaries about the origin.
  bool inside(Vec2 p) const;
  /// Polygon area of the 2048-segment discretization.
  double area() const;
  bool operator==(const FourierShape&) const = default;
};

inline constexpr int kMinOrder = 3;
inline constexpr int kMaxOrder = 8;
inline constexpr double kMaxRadius = 0.5;
inline constexpr std::size_t kRadiusCheckSamples = 4096;
inline constexpr std::size_t kOracleSegments = 2048;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Coefficient magnitudes ~ U[amp.lo, amp.hi] with random sign, orders 3..8.
/// Resamples until 0 < r <= 0.5 on the check grid; 100 rejections in a row
/// throws ValidationError.
FourierShape random_shape(std::uint64_t seed, Range r0_range, Range amp_range);

/// True when 0 < r(theta) <= 0.5 on the 4096-point grid.
bool shape_is_valid(const FourierShape& shape);

struct Polyline {
  std::vector<Vec2> points;
  bool closed = true;

  std::size_t segment_count() const;
  Vec2 segment_start(std::size_t i) const { return points[i]; }
  Vec2 segment_end(std::size_t i) const { return points[(i + 1) % points.size()]; }
  double length() const;
};

/// Uniform-in-theta boundary discretization, no duplicated endpoint.
Polyline discretize(const FourierShape& shape, std::size_t segments = kOracleSegments);

/// n points equally spaced in arc length along the polyline.
Polyline resample_arclength(const Polyline& line, std::size_t n);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);
/// Distance from p to the nearest segment of the polyline.
double distance_to_polyline(Vec2 p, const Polyline& line);

/// Exact signed distance to the discretized boundary of a star-shaped shape.
class SdfOracle {
 public:
  explicit SdfOracle(const FourierShape& shape, std::size_t segments = kOracleSegments);

  double operator()(Vec2 p) const;
  const Polyline& boundary() const { return boundary_; }
  const FourierShape& shape() const { return shape_; }

 private:
  FourierShape shape_;
  Polyline boundary_;
};

/// Convenience wrapper; builds the polyline on every call.
double sdf_oracle(const FourierShape& shape, Vec2 p);

struct Box {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  bool operator==(const Box&) const = default;
};

/// Values sampled at cell centers of a uniform nx x ny partition of bounds,
/// row-major with x fastest: values[j * nx + i] sits at (x(i), y(j)).
struct GridField {
  std::size_t nx = 0;
  std::size_t ny = 0;
  Box bounds;
  std::vector<double> values;

  GridField() = default;
  GridField(std::size_t nx_, std::size_t ny_, Box b, double fill = 0.0)
      : nx(nx_), ny(ny_), bounds(b), values(nx_ * ny_, fill) {}

  double dx() const { return (bounds.x_max - bounds.x_min) / static_cast<double>(nx); }
  double dy() const { return (bounds.y_max - bounds.y_min) / static_cast<double>(ny); }
  double x(std::size_t i) const { return bounds.x_min + (static_cast<double>(i) + 0.5) * dx(); }
  double y(std::size_t j) const { return bounds.y_min + (static_cast<double>(j) + 0.5) * dy(); }
  Vec2 point(std::size_t i, std::size_t j) const { return {x(i), y(j)}; }
  double& at(std::size_t i, std::size_t j) { return values[j * nx + i]; }
  double at(std::size_t i, std::size_t j) const { return values[j * nx + i]; }
  /// Bilinear interpolation between sample points, clamped to the outermost
  /// samples outside their hull.
  double interpolate(Vec2 p) const;
  /// All sample positions in storage order.
  std::vector<Vec2> points() const;
};

/// Square grid over bounds with the same layout as GridField.
GridField make_grid(std::size_t n, Box bounds = {});

/// Iso-contours with linear interpolation along cell edges; saddle cells are
/// split using the cell-center average. Closed loops are returned closed.
std::vector<Polyline> marching_squares(const GridField& grid, double iso = 0.0);

/// Longest polyline by arc length; empty polyline when none.
Polyline longest(const std::vector<Polyline>& lines);

/// Symmetric Hausdorff distance using vertex-to-segment distances.
double hausdorff(const Polyline& a, const Polyline& b);
double hausdorff(const std::vector<Polyline>& a, const std::vector<Polyline>& b);

struct PointMetrics {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double chamfer = 0.0;
  double emd = 0.0;
  bool has_emd = false;
};

inline constexpr std::size_t kMaxEmdPoints = 512;

double f1_score(std::span<const Vec2> pred, std::span<const Vec2> truth, double tau,
                double* precision = nullptr, double* recall = nullptr);
/// Mean squared nearest-neighbour distance, summed over both directions.
double chamfer(std::span<const Vec2> a, std::span<const Vec2> b);
/// Mean Euclidean cost of the optimal perfect matching. Requires equal sizes
/// and at most 512 points.
double emd(std::span<const Vec2> a, std::span<const Vec2> b);
/// F1, Chamfer, and EMD when sizes allow it.
PointMetrics metrics(std::span<const Vec2> pred, std::span<const Vec2> truth, double tau,
                     bool require_emd = false);

struct RelErrors {
  double rel_l1 = 0.0;
  double rel_l2 = 0.0;
};

/// Relative L1 and L2 errors pooled over all channels of the flattened field.
RelErrors rel_errors(std::span<const double> pred, std::span<const double> truth);

// CSV helpers. Every writer creates parent directories.
void write_points_csv(const std::filesystem::path& path, std::span<const Vec2> points);
std::vector<Vec2> read_points_csv(const std::filesystem::path& path);
void write_polylines_csv(const std::filesystem::path& path, const std::vector<Polyline>& lines);
void write_grid_csv(const std::filesystem::path& path, const GridField& grid);
GridField read_grid_csv(const std::filesystem::path& path);
void write_shape_csv(const std::filesystem::path& path, const FourierShape& shape);
FourierShape read_shape_csv(const std::filesystem::path& path);

}  // namespace gano::geo
