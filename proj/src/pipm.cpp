#include "psp/pipm.hpp"

#include <cmath>

#include "psp/manifold.hpp"

namespace psp {

namespace {
constexpr double kMaxSlope = 10.0;
}

StepContext StepContext::make(int index, const Vec3& foot, const SurfaceParams& surface,
                              double apex_velocity, double mass, double gravity) {
  if (!std::isfinite(surface.a) || !std::isfinite(surface.b) || !std::isfinite(surface.c)) {
    throw InvalidSurface("surface parameters must be finite");
  }
  if (std::abs(surface.a) >= kMaxSlope || std::abs(surface.b) >= kMaxSlope) {
    throw InvalidSurface("near-vertical CoM plane rejected (|slope| >= 10)");
  }
  if (mass <= 0.0 || gravity <= 0.0) {
    throw DomainError("mass and gravity must be positive");
  }
  if (apex_velocity < 0.0) {
    throw DomainError("apex velocity must be non-negative");
  }
  StepContext ctx;
  ctx.index_ = index;
  ctx.foot_ = foot;
  ctx.surface_ = surface;
  ctx.mass_ = mass;
  ctx.gravity_ = gravity;
  ctx.apex_velocity_ = apex_velocity;
  ctx.omega_ = asymptotic_slope(surface, foot, gravity);
  ctx.z_apex_ = gravity / (ctx.omega_ * ctx.omega_);
  return ctx;
}

double asymptotic_slope(const SurfaceParams& surface, const Vec3& foot, double gravity) {
  const double z_apex = surface.a * foot.x() + surface.b * foot.y() + surface.c - foot.z();
  if (!(z_apex > 0.0)) {
    throw InvalidSurface("CoM plane at or below the foot (z_apex <= 0)");
  }
  return std::sqrt(gravity / z_apex);
}

PhaseState vector_field(const PhaseState& state, const StepContext& ctx,
                        const FlywheelTorque& torque) {
  const double w2 = ctx.omega() * ctx.omega();
  const double mg = ctx.mass() * ctx.gravity();
  const SurfaceParams& s = ctx.surface();

  const double xdd =
      w2 * (state.x() - ctx.foot().x()) - (w2 / mg) * (torque.tau_y + s.b * torque.tau_z);
  const double ydd =
      w2 * (state.y() - ctx.foot().y()) - (w2 / mg) * (torque.tau_x + s.a * torque.tau_z);
  const double zdd = s.a * xdd + s.b * ydd;

  PhaseState d;
  d.pos = state.vel;
  d.vel = Vec3(xdd, ydd, zdd);
  return d;
}

PlanarState sagittal_field(const PlanarState& state, const StepContext& ctx,
                           const FlywheelTorque& torque) {
  const double w2 = ctx.omega() * ctx.omega();
  const double mg = ctx.mass() * ctx.gravity();
  const double acc = w2 * (state.pos - ctx.foot().x()) -
                     (w2 / mg) * (torque.tau_y + ctx.surface().b * torque.tau_z);
  return {state.vel, acc};
}

PlanarState lateral_field(const PlanarState& state, const StepContext& ctx,
                          const FlywheelTorque& torque) {
  const double w2 = ctx.omega() * ctx.omega();
  const double mg = ctx.mass() * ctx.gravity();
  const double acc = w2 * (state.pos - ctx.foot().y()) -
                     (w2 / mg) * (torque.tau_x + ctx.surface().a * torque.tau_z);
  return {state.vel, acc};
}

PlanarState closed_form_state(double x0, double v0, double foot_pos, double omega, double t) {
  const double ch = std::cosh(omega * t);
  const double sh = std::sinh(omega * t);
  const double dx0 = x0 - foot_pos;
  return {dx0 * ch + (v0 / omega) * sh + foot_pos, omega * dx0 * sh + v0 * ch};
}

PlanarState closed_form_state(double x0, double v0, const StepContext& ctx, double t) {
  return closed_form_state(x0, v0, ctx.foot().x(), ctx.omega(), t);
}

PhaseState controlled_field(const PhaseState& state, const StepContext& ctx,
                            const ControlInput& u) {
  const double omega = u.omega > 0.0 ? u.omega : ctx.omega();
  const double w2 = omega * omega;
  const double mg = ctx.mass() * ctx.gravity();
  const SurfaceParams& s = ctx.surface();
  const double xdd = w2 * (state.x() - ctx.foot().x()) -
                     (w2 / mg) * (u.torque.tau_y + s.b * u.torque.tau_z);
  const double ydd = w2 * (state.y() - ctx.foot().y()) -
                     (w2 / mg) * (u.torque.tau_x + s.a * u.torque.tau_z);
  PhaseState d;
  d.pos = state.vel;
  d.vel = Vec3(xdd, ydd, s.a * xdd + s.b * ydd);
  return d;
}

namespace {

PhaseState rk4_step(const PhaseState& s, const StepContext& ctx, const ControlInput& u,
                    double dt) {
  auto add = [](const PhaseState& a, const PhaseState& b, double h) {
    PhaseState r;
    r.pos = a.pos + h * b.pos;
    r.vel = a.vel + h * b.vel;
    return r;
  };
  const PhaseState k1 = controlled_field(s, ctx, u);
  const PhaseState k2 = controlled_field(add(s, k1, dt / 2), ctx, u);
  const PhaseState k3 = controlled_field(add(s, k2, dt / 2), ctx, u);
  const PhaseState k4 = controlled_field(add(s, k3, dt), ctx, u);
  PhaseState out;
  out.pos = s.pos + (dt / 6.0) * (k1.pos + 2.0 * k2.pos + 2.0 * k3.pos + k4.pos);
  out.vel = s.vel + (dt / 6.0) * (k1.vel + 2.0 * k2.vel + 2.0 * k3.vel + k4.vel);
  return out;
}

}  // namespace

Trajectory integrate(const PhaseState& state0, const StepContext& ctx,
                     const ControlSchedule& control, const StopPredicate& stop,
                     const IntegrateOptions& opts) {
  Trajectory traj;
  PhaseState s = state0;
  double t = opts.t0;
  double zeta = opts.zeta0;

  auto record = [&](const ControlInput& u) {
    TrajectorySample sample;
    sample.t = t;
    sample.zeta = zeta;
    sample.state = s;
    sample.control = u;
    sample.sigma =
        sigma_apex(s.x(), s.vx(), ctx.apex_velocity(), ctx.foot().x(), ctx.omega());
    traj.samples.push_back(sample);
  };

  record(control(t));
  if (stop(s, t)) return traj;

  const double t_end = opts.t0 + opts.horizon;
  while (t < t_end) {
    const ControlInput u = control(t);
    const PhaseState next = rk4_step(s, ctx, u, opts.dt);
    zeta += std::abs(next.x() - s.x());
    s = next;
    t += opts.dt;
    record(u);
    if (stop(s, t)) return traj;
  }
  throw HorizonExceeded("stop predicate never fired within the integration horizon");
}

}  // namespace psp
