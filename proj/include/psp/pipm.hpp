#pragma once

#include <functional>

#include "psp/types.hpp"

namespace psp {

// Prismatic-inverted-pendulum dynamics on a piecewise-linear CoM surface.
// All functions are pure; the flywheel torque enters the horizontal
// accelerations scaled by omega^2/(m g) and the vertical acceleration is
// slaved to the surface (zdd = a*xdd + b*ydd).

/// Asymptotic slope omega = sqrt(g / z_apex) for a foot on the given surface.
/// Throws InvalidSurface when the CoM plane is at or below the foot.
double asymptotic_slope(const SurfaceParams& surface, const Vec3& foot, double gravity);

/// Time derivative of the full phase state under the PIPM control system.
PhaseState vector_field(const PhaseState& state, const StepContext& ctx,
                        const FlywheelTorque& torque);

/// Same field with the commanded omega of `u` overriding the nominal one
/// (u.omega <= 0 falls back to ctx.omega()).
PhaseState controlled_field(const PhaseState& state, const StepContext& ctx,
                            const ControlInput& u);

/// Sagittal slice: returns (xd, xdd).
PlanarState sagittal_field(const PlanarState& state, const StepContext& ctx,
                           const FlywheelTorque& torque);

/// Lateral slice: returns (yd, ydd). Torque coupling is (tau_x + a*tau_z).
PlanarState lateral_field(const PlanarState& state, const StepContext& ctx,
                          const FlywheelTorque& torque);

/// Analytical zero-torque solution of the planar pendulum about `foot_pos`:
/// x(t) = (x0 - xf) cosh(wt) + (v0/w) sinh(wt) + xf,  v(t) by differentiation.
PlanarState closed_form_state(double x0, double v0, double foot_pos, double omega, double t);

/// Convenience overload pulling foot/omega from the step context (sagittal axis).
PlanarState closed_form_state(double x0, double v0, const StepContext& ctx, double t);

using StopPredicate = std::function<bool(const PhaseState&, double /*t*/)>;
using ControlSchedule = std::function<ControlInput(double /*t*/)>;

struct IntegrateOptions {
  double dt{1e-3};         // fixed RK4 step [s]
  double horizon{30.0};    // max integration time [s]
  double zeta0{0.0};       // progression value at the initial sample
  double t0{0.0};          // timestamp of the initial sample
};

/// Fixed-step RK4 under a piecewise-constant control schedule, sampled every
/// step until `stop` fires. Progression zeta accumulates |dx| along the
/// sagittal axis. Throws HorizonExceeded when `stop` never fires.
Trajectory integrate(const PhaseState& state0, const StepContext& ctx,
                     const ControlSchedule& control, const StopPredicate& stop,
                     const IntegrateOptions& opts = {});

}  // namespace psp
