#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gano/forces.hpp"
#include "gano/geometry.hpp"

namespace gano::flow {

/// Closed-form test harness for the control-volume loop: lifting potential
/// flow past the circle of equal area, plus a Gaussian wake deficit whose
/// momentum loss grows with boundary roughness. Not a flow solver.
struct FlowParams {
  double u_inf = 0.1;
  double alpha_deg = forces::kDefaultAlphaDeg;
  double rho = forces::kDefaultRho;
  double cd_base = 0.01;
  double cd_roughness = 0.02;  // per unit of sum k^2 (a_k^2 + b_k^2) / R^2
  double camber_gain = 2.0;    // beta = camber_gain * sum_{k odd} b_k / R, clipped
  double wake_ramp = 0.2;      // streamwise onset length of the wake
};

struct FlowModel {
  FlowParams params;
  double radius = 0.0;        // equal-area radius R
  double circulation = 0.0;   // clockwise; lift = rho U Gamma
  double cd = 0.0;            // drag coefficient the wake is sized for
  double wake_width = 0.0;
  double wake_amplitude = 0.0;
};

FlowModel describe(const geo::FourierShape& shape, const FlowParams& params = {});

/// Velocity and gauge pressure p - p_inf at x.
forces::FlowSample evaluate(const FlowModel& model, geo::Vec2 x);

/// Reference coefficients: C_L = 2 Gamma / (U c), C_D = model.cd, for chord 1.
forces::AeroCoeffs reference_coeffs(const FlowModel& model);

}  // namespace gano::flow
