#include "gano/forces.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gano/errors.hpp"

namespace gano::forces {

using ad::Var;

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void CvSpec::validate() const {
  if (!(box.x_max > box.x_min) || !(box.y_max > box.y_min))
    throw ValidationError("CvSpec: degenerate control-volume box");
  if (samples_per_side == 0) throw ValidationError("CvSpec: samples_per_side must be >= 1");
  if (!(q_inf > 0.0) || !(chord > 0.0)) throw ValidationError("CvSpec: q_inf and chord must be > 0");
}

double CvSpec::dx() const { return (box.x_max - box.x_min) / static_cast<double>(samples_per_side); }
double CvSpec::dy() const { return (box.y_max - box.y_min) / static_cast<double>(samples_per_side); }

namespace {

std::vector<geo::Vec2> side(geo::Vec2 start, geo::Vec2 step, std::size_t n) {
  std::vector<geo::Vec2> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(start + step * (static_cast<double>(k) + 0.5));
  return out;
}

void require_samples(const std::vector<FlowSample>& s, const char* name) {
  if (s.empty()) throw ValidationError(std::string("cv_forces: ") + name + " side has no samples");
}

}  // namespace

std::vector<geo::Vec2> CvSpec::left() const { return side({box.x_min, box.y_min}, {0.0, dy()}, samples_per_side); }
std::vector<geo::Vec2> CvSpec::right() const { return side({box.x_max, box.y_min}, {0.0, dy()}, samples_per_side); }
std::vector<geo::Vec2> CvSpec::bottom() const { return side({box.x_min, box.y_min}, {dx(), 0.0}, samples_per_side); }
std::vector<geo::Vec2> CvSpec::top() const { return side({box.x_min, box.y_max}, {dx(), 0.0}, samples_per_side); }

std::vector<geo::Vec2> CvSpec::all_points() const {
  std::vector<geo::Vec2> out;
  for (const auto& s : {left(), right(), bottom(), top()}) out.insert(out.end(), s.begin(), s.end());
  return out;
}

Force cv_forces(const CvBoundary& b, double rho) {
  require_samples(b.left, "left");
  require_samples(b.right, "right");
  require_samples(b.bottom, "bottom");
  require_samples(b.top, "top");
  Force f;
  for (const FlowSample& s : b.left) {
    f.fx += (s.p + rho * s.u * s.u) * b.dy;
    f.fy += rho * s.u * s.v * b.dy;
  }
  for (const FlowSample& s : b.right) {
    f.fx -= (s.p + rho * s.u * s.u) * b.dy;
    f.fy -= rho * s.u * s.v * b.dy;
  }
  for (const FlowSample& s : b.bottom) {
    f.fx += rho * s.u * s.v * b.dx;
    f.fy += (s.p + rho * s.v * s.v) * b.dx;
  }
  for (const FlowSample& s : b.top) {
    f.fx -= rho * s.u * s.v * b.dx;
    f.fy -= (s.p + rho * s.v * s.v) * b.dx;
  }
  return f;
}

LiftDrag lift_drag(double fx, double fy, double alpha) {
  const double s = std::sin(alpha), c = std::cos(alpha);
  return {-fx * s + fy * c, fx * c + fy * s};
}

AeroCoeffs aero_coeffs(double lift, double drag, double q_inf, double chord) {
  if (!(q_inf > 0.0) || !(chord > 0.0)) throw ValidationError("aero_coeffs: q_inf and chord must be > 0");
  const double scale = q_inf * chord;
  return {lift / scale, drag / scale};
}

double aero_objective(double cl, double cd, double cd_max, double lambda_cd, bool squared) {
  const double r = std::max(0.0, cd - cd_max);
  return -cl + lambda_cd * (squared ? r * r : r);
}

double drag_proxy(std::span<const SurfaceSample> samples) {
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SurfaceSample& s = samples[i];
    if (std::fabs(s.normal.norm() - 1.0) > 1e-10)
      throw ValidationError("drag_proxy: normal " + std::to_string(i) + " is not unit length");
    if (!(s.area > 0.0)) throw ValidationError("drag_proxy: area element " + std::to_string(i) + " is not positive");
    d -= s.p * s.normal.x * s.area;
  }
  return d;
}

double drag_objective(double drag, std::span<const double> z, std::span<const double> z_init, double lambda_reg) {
  if (z.size() != z_init.size()) throw ValidationError("drag_objective: latent size mismatch");
  double a = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) a += (z[k] - z_init[k]) * (z[k] - z_init[k]);
  return drag + lambda_reg * a;
}

// ---------------------------------------------------------------- recorded

namespace {

struct SideSums {
  Var p;    // sum p
  Var uu;   // sum u^2
  Var uv;   // sum u v
  Var vv;   // sum v^2
};

SideSums side_sums(Var s, const char* name) {
  if (s.shape().cols != 3 || s.shape().rows == 0)
    throw ValidationError(std::string("cv_forces: ") + name + " side must be a non-empty n x 3 matrix, got " +
                          s.shape().str());
  const Var u = ad::slice_cols(s, 0, 1), v = ad::slice_cols(s, 1, 1), p = ad::slice_cols(s, 2, 1);
  return {ad::sum(p), ad::sum(ad::square(u)), ad::sum(ad::mul(u, v)), ad::sum(ad::square(v))};
}

}  // namespace

Var cv_forces(Var left, Var right, Var bottom, Var top, double dx, double dy, double rho) {
  const SideSums l = side_sums(left, "left"), r = side_sums(right, "right");
  const SideSums b = side_sums(bottom, "bottom"), t = side_sums(top, "top");
  const Var fx = ad::add(
      ad::scale(ad::sub(ad::add(l.p, ad::scale(l.uu, rho)), ad::add(r.p, ad::scale(r.uu, rho))), dy),
      ad::scale(ad::sub(b.uv, t.uv), rho * dx));
  const Var fy = ad::add(ad::scale(ad::sub(l.uv, r.uv), rho * dy),
                         ad::scale(ad::sub(ad::add(b.p, ad::scale(b.vv, rho)), ad::add(t.p, ad::scale(t.vv, rho))), dx));
  return ad::concat_cols(fx, fy);
}

Var aero_coeffs(Var force, double alpha, double q_inf, double chord) {
  if (!(q_inf > 0.0) || !(chord > 0.0)) throw ValidationError("aero_coeffs: q_inf and chord must be > 0");
  const double s = std::sin(alpha), c = std::cos(alpha), k = 1.0 / (q_inf * chord);
  const Var fx = ad::slice_cols(force, 0, 1), fy = ad::slice_cols(force, 1, 1);
  const Var lift = ad::add(ad::scale(fx, -s), ad::scale(fy, c));
  const Var drag = ad::add(ad::scale(fx, c), ad::scale(fy, s));
  return ad::concat_cols(ad::scale(lift, k), ad::scale(drag, k));
}

Var aero_objective(Var coeffs, double cd_max, double lambda_cd, bool squared) {
  const Var cl = ad::slice_cols(coeffs, 0, 1), cd = ad::slice_cols(coeffs, 1, 1);
  const Var r = ad::relu(ad::add_scalar(cd, -cd_max));
  const Var pen = squared ? ad::square(r) : r;
  return ad::add(ad::scale(cl, -1.0), ad::scale(pen, lambda_cd));
}

Var drag_objective(Var drag, Var z, std::span<const double> z_init, double lambda_reg) {
  if (z.shape().size() != z_init.size()) throw ValidationError("drag_objective: latent size mismatch");
  ad::Tensor zi(z.shape().rows, z.shape().cols, std::vector<double>(z_init.begin(), z_init.end()));
  const Var diff = ad::sub(z, z.tape->constant(std::move(zi)));
  return ad::add(drag, ad::scale(ad::sum(ad::square(diff)), lambda_reg));
}

}  // namespace gano::forces
