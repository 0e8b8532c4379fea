#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/geometry.hpp"

namespace gano::forces {

inline constexpr double kDefaultRho = 1.0;
inline constexpr double kDefaultAlphaDeg = 4.0;
inline constexpr double kDefaultQInf = 0.0050;
inline constexpr double kDefaultChord = 1.0;
inline constexpr double kDefaultLambdaCd = 100.0;
inline constexpr double kDefaultCdMax = 0.020;
inline constexpr double kDefaultLambdaReg = 0.001;

double deg_to_rad(double deg);

/// Control-volume box and free-stream constants. Each side is split into
/// samples_per_side equal intervals sampled at their midpoints.
struct CvSpec {
  geo::Box box{-1.0, 2.0, -1.0, 1.0};
  std::size_t samples_per_side = 64;
  double rho = kDefaultRho;
  double alpha_deg = kDefaultAlphaDeg;
  double q_inf = kDefaultQInf;
  double chord = kDefaultChord;
  double p_inf = 0.0;

  void validate() const;
  double alpha() const { return deg_to_rad(alpha_deg); }
  double dx() const;  // spacing on bottom and top
  double dy() const;  // spacing on left and right
  std::vector<geo::Vec2> left() const;
  std::vector<geo::Vec2> right() const;
  std::vector<geo::Vec2> bottom() const;
  std::vector<geo::Vec2> top() const;
  /// left, right, bottom, top concatenated.
  std::vector<geo::Vec2> all_points() const;
};

/// Gauge-pressure flow sample.
struct FlowSample {
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
};

struct CvBoundary {
  std::vector<FlowSample> left, right, bottom, top;
  double dy = 0.0;
  double dx = 0.0;
};

struct Force {
  double fx = 0.0;
  double fy = 0.0;
};

/// Left/right contribute (p + rho u^2, rho u v) dy with signs (+, -);
/// bottom/top contribute (rho u v, p + rho v^2) dx with signs (+, -).
/// Throws ValidationError when a side has no samples.
Force cv_forces(const CvBoundary& b, double rho);

struct LiftDrag {
  double lift = 0.0;
  double drag = 0.0;
};

/// L = -Fx sin(alpha) + Fy cos(alpha), D = Fx cos(alpha) + Fy sin(alpha).
LiftDrag lift_drag(double fx, double fy, double alpha);

struct AeroCoeffs {
  double cl = 0.0;
  double cd = 0.0;
};

AeroCoeffs aero_coeffs(double lift, double drag, double q_inf, double chord);

/// -C_L + lambda_cd r^2 with r = max(0, C_D - cd_max); r instead of r^2 when
/// squared is false.
double aero_objective(double cl, double cd, double cd_max, double lambda_cd, bool squared = true);

struct SurfaceSample {
  double p = 0.0;
  geo::Vec2 normal;
  double area = 0.0;
};

/// -sum p n_x dA. Throws ValidationError on a normal off unit length by more
/// than 1e-10 or a non-positive area element.
double drag_proxy(std::span<const SurfaceSample> samples);

/// drag + lambda_reg ||z - z_init||^2.
double drag_objective(double drag, std::span<const double> z, std::span<const double> z_init,
                      double lambda_reg = kDefaultLambdaReg);

// Recorded counterparts. Side inputs are n x 3 matrices with columns u, v, p.

/// 1 x 2 row (Fx, Fy).
ad::Var cv_forces(ad::Var left, ad::Var right, ad::Var bottom, ad::Var top, double dx, double dy,
                  double rho);
/// 1 x 2 row (C_L, C_D) from a 1 x 2 force row.
ad::Var aero_coeffs(ad::Var force, double alpha, double q_inf, double chord);
/// 1 x 1 objective from a 1 x 2 (C_L, C_D) row.
ad::Var aero_objective(ad::Var coeffs, double cd_max, double lambda_cd, bool squared = true);
/// 1 x 1; z is a 1 x d row.
ad::Var drag_objective(ad::Var drag, ad::Var z, std::span<const double> z_init,
                       double lambda_reg = kDefaultLambdaReg);

}  // namespace gano::forces
