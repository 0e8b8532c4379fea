#include "gano/synthetic_flow.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "gano/errors.hpp"

namespace gano::flow {

namespace {

constexpr double kMaxCamberAngle = 0.3;  // radians
constexpr double kMinRadius = 0.05;      // keeps the doublet finite near the origin

}  // namespace

FlowModel describe(const geo::FourierShape& shape, const FlowParams& params) {
  if (!(params.u_inf > 0.0) || !(params.rho > 0.0) || !(params.wake_ramp > 0.0))
    throw ValidationError("flow::describe: u_inf, rho and wake_ramp must be > 0");
  FlowModel m;
  m.params = params;
  m.radius = std::sqrt(shape.area() / std::numbers::pi);
  if (!(m.radius > 0.0)) throw ValidationError("flow::describe: shape has no area");

  double odd_sine = 0.0;
  double roughness = 0.0;
  for (const auto& h : shape.harmonics) {
    if (h.order % 2 == 1) odd_sine += h.b;
    roughness += static_cast<double>(h.order * h.order) * (h.a * h.a + h.b * h.b);
  }
  const double beta =
      kMaxCamberAngle * std::tanh(params.camber_gain * odd_sine / (kMaxCamberAngle * m.radius));
  const double alpha = forces::deg_to_rad(params.alpha_deg);
  m.circulation = 4.0 * std::numbers::pi * params.u_inf * m.radius * std::sin(alpha + beta);
  m.cd = params.cd_base + params.cd_roughness * roughness / (m.radius * m.radius);
  m.wake_width = m.radius;
  // Linearized momentum deficit of the wake through the downstream face,
  // 2 rho U^2 A w sqrt(2 pi), matched to rho U^2 C_D / 2.
  m.wake_amplitude = m.cd / (4.0 * m.wake_width * std::sqrt(2.0 * std::numbers::pi));
  return m;
}

forces::FlowSample evaluate(const FlowModel& model, geo::Vec2 x) {
  const FlowParams& p = model.params;
  const double alpha = forces::deg_to_rad(p.alpha_deg);
  const std::complex<double> e_ia = std::polar(1.0, alpha);
  std::complex<double> zeta(x.x, x.y);
  if (std::abs(zeta) < kMinRadius) zeta = zeta == 0.0 ? std::complex<double>(kMinRadius, 0.0)
                                                      : zeta * (kMinRadius / std::abs(zeta));
  const double r2 = model.radius * model.radius;
  // Complex velocity u - i v of the uniform stream, the doublet and a clockwise vortex.
  const std::complex<double> w = p.u_inf * std::conj(e_ia) - p.u_inf * r2 * e_ia / (zeta * zeta) +
                                 std::complex<double>(0.0, model.circulation / (2.0 * std::numbers::pi)) / zeta;
  double u = w.real();
  double v = -w.imag();
  const double pressure = 0.5 * p.rho * (p.u_inf * p.u_inf - (u * u + v * v));

  const double xs = x.x * std::cos(alpha) + x.y * std::sin(alpha);
  const double ns = -x.x * std::sin(alpha) + x.y * std::cos(alpha);
  const double onset = 0.5 * (1.0 + std::tanh(xs / p.wake_ramp));
  const double deficit = model.wake_amplitude * p.u_inf * onset *
                         std::exp(-ns * ns / (2.0 * model.wake_width * model.wake_width));
  u -= deficit * std::cos(alpha);
  v -= deficit * std::sin(alpha);
  return {u, v, pressure};
}

forces::AeroCoeffs reference_coeffs(const FlowModel& model) {
  return {2.0 * model.circulation / model.params.u_inf, model.cd};
}

}  // namespace gano::flow
