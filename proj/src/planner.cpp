#include "psp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psp/manifold.hpp"

namespace psp {

namespace {

constexpr double kTimeEps = 1e-12;

// ---------------------------------------------------------------------------
// Closed-form helpers for zero-torque sagittal arcs
// ---------------------------------------------------------------------------

// First time t >= 0 at which the zero-torque flow from (x0, v0) about
// foot_pos reaches x_target. Empty when the flow never gets there.
std::optional<double> crossing_time(double x0, double v0, double foot_pos, double omega,
                                    double x_target) {
  const double A = x0 - foot_pos;
  const double B = v0 / omega;
  const double C = x_target - foot_pos;
  // A cosh(wt) + B sinh(wt) = C  =>  (A+B) u^2 - 2C u + (A-B) = 0,  u = e^{wt}
  const double p = A + B;
  const double q = A - B;
  std::vector<double> roots;
  if (std::abs(p) < 1e-14) {
    if (std::abs(C) > 1e-14) roots.push_back(q / (2.0 * C));
  } else {
    const double disc = C * C - p * q;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    roots.push_back((C + s) / p);
    roots.push_back((C - s) / p);
  }
  std::optional<double> best;
  for (double u : roots) {
    if (u < 1.0 - 1e-12) continue;  // t < 0
    const double t = std::log(std::max(u, 1.0)) / omega;
    if (!best || t < *best) best = t;
  }
  return best;
}

struct SagittalArc {
  std::vector<double> t;  // local times, last entry is the exact exit time
  std::vector<double> x;
  std::vector<double> v;
};

// Zero-torque arc from (xe, ve) sampled every dt until x_exit, with an exact
// terminal sample at the crossing time.
SagittalArc sample_to_position(double xe, double ve, const StepContext& ctx, double x_exit,
                               double dt) {
  const auto t_exit = crossing_time(xe, ve, ctx.foot().x(), ctx.omega(), x_exit);
  if (!t_exit) {
    throw NoTransition("sagittal flow never reaches the requested exit position");
  }
  SagittalArc arc;
  for (double t = 0.0; t < *t_exit - kTimeEps; t += dt) {
    const PlanarState s = closed_form_state(xe, ve, ctx, t);
    arc.t.push_back(t);
    arc.x.push_back(s.pos);
    arc.v.push_back(s.vel);
  }
  const PlanarState exit = closed_form_state(xe, ve, ctx, *t_exit);
  arc.t.push_back(*t_exit);
  arc.x.push_back(exit.pos);
  arc.v.push_back(exit.vel);
  return arc;
}

// Fixed-duration arc (used when a step has no outgoing transition).
SagittalArc sample_for_time(double xe, double ve, const StepContext& ctx, double duration,
                            double dt) {
  SagittalArc arc;
  for (double t = 0.0; t <= duration + kTimeEps; t += dt) {
    const PlanarState s = closed_form_state(xe, ve, ctx, t);
    arc.t.push_back(t);
    arc.x.push_back(s.pos);
    arc.v.push_back(s.vel);
  }
  return arc;
}

// ---------------------------------------------------------------------------
// Natural cubic spline (for the numeric transition fallback)
// ---------------------------------------------------------------------------

class CubicSpline {
 public:
  CubicSpline(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)), m_(xs_.size(), 0.0) {
    const std::size_t n = xs_.size();
    if (n < 3) return;
    std::vector<double> a(n, 0.0), b(n, 2.0), c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1];
      const double h1 = xs_[i + 1] - xs_[i];
      a[i] = h0 / (h0 + h1);
      c[i] = h1 / (h0 + h1);
      d[i] = 6.0 / (h0 + h1) *
             ((ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0);
    }
    // Thomas algorithm with natural boundary conditions m_0 = m_{n-1} = 0.
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = (d[i] - c[i] * (i + 2 < n ? m_[i + 1] : 0.0)) / b[i];
      if (i == 1) break;
    }
  }

  double operator()(double x) const {
    const std::size_t n = xs_.size();
    std::size_t i = std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin();
    i = std::clamp<std::size_t>(i, 1, n - 1);
    const double h = xs_[i] - xs_[i - 1];
    const double u = (xs_[i] - x) / h;
    const double w = (x - xs_[i - 1]) / h;
    return m_[i - 1] * u * u * u * h * h / 6.0 + m_[i] * w * w * w * h * h / 6.0 +
           (ys_[i - 1] - m_[i - 1] * h * h / 6.0) * u +
           (ys_[i] - m_[i] * h * h / 6.0) * w;
  }

 private:
  std::vector<double> xs_, ys_;
  std::vector<double> m_;  // second derivatives at knots
};

double manifold_speed(const StepContext& ctx, double x) {
  const double dx = x - ctx.foot().x();
  const double va = ctx.apex_velocity();
  return std::sqrt(va * va + ctx.omega() * ctx.omega() * dx * dx);
}

}  // namespace

// ---------------------------------------------------------------------------
// Step transitions
// ---------------------------------------------------------------------------

TransitionRecord find_transition(const StepContext& step_q, const StepContext& step_q1) {
  const double wq2 = step_q.omega() * step_q.omega();
  const double w12 = step_q1.omega() * step_q1.omega();
  const double xq = step_q.foot().x();
  const double x1 = step_q1.foot().x();
  const double vaq2 = step_q.apex_velocity() * step_q.apex_velocity();
  const double va12 = step_q1.apex_velocity() * step_q1.apex_velocity();

  // Equating the two sigma = 0 conics v^2 = va^2 + w^2 (x - xf)^2 yields a
  // quadratic in x.
  const double A = wq2 - w12;
  const double B = -2.0 * (wq2 * xq - w12 * x1);
  const double C = wq2 * xq * xq - w12 * x1 * x1 + vaq2 - va12;

  const double lo = std::min(xq, x1);
  const double hi = std::max(xq, x1);
  std::vector<double> candidates;
  if (std::abs(A) < 1e-12 * std::max(wq2, w12)) {
    if (std::abs(B) < 1e-14) throw NoTransition("identical adjacent manifolds");
    candidates.push_back(-C / B);
  } else {
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) throw NoTransition("adjacent step manifolds do not intersect");
    const double s = std::sqrt(disc);
    candidates.push_back((-B + s) / (2.0 * A));
    candidates.push_back((-B - s) / (2.0 * A));
  }

  std::optional<double> best;
  const double mid = 0.5 * (lo + hi);
  for (double x : candidates) {
    if (x < lo - 1e-9 || x > hi + 1e-9) continue;
    const double v = manifold_speed(step_q, x);
    if (!(v > 0.0)) continue;
    if (!best || std::abs(x - mid) < std::abs(*best - mid)) best = x;
  }
  if (!best) {
    throw NoTransition("no manifold intersection with v > 0 between the apices");
  }

  TransitionRecord rec;
  rec.state = {*best, manifold_speed(step_q, *best)};
  rec.zeta_trans = *best;  // progression identified with sagittal position
  rec.guard_kind = GuardKind::position;
  return rec;
}

TransitionRecord find_transition_spline(const StepContext& step_q, const StepContext& step_q1,
                                        int samples_per_curve) {
  const double lo = std::min(step_q.foot().x(), step_q1.foot().x());
  const double hi = std::max(step_q.foot().x(), step_q1.foot().x());
  if (hi - lo < 1e-12) throw NoTransition("coincident apices");

  std::vector<double> xs(samples_per_curve), vq(samples_per_curve), v1(samples_per_curve);
  for (int i = 0; i < samples_per_curve; ++i) {
    const double x = lo + (hi - lo) * i / (samples_per_curve - 1);
    xs[i] = x;
    vq[i] = manifold_speed(step_q, x);
    v1[i] = manifold_speed(step_q1, x);
  }
  const CubicSpline sq(xs, vq);
  const CubicSpline s1(xs, v1);
  auto diff = [&](double x) { return sq(x) - s1(x); };

  double a = lo, b = hi;
  double fa = diff(a), fb = diff(b);
  if (fa * fb > 0.0) {
    throw NoTransition("spline difference has no sign change between apices");
  }
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = diff(m);
    if (fa * fm <= 0.0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
  }
  const double x = 0.5 * (a + b);

  TransitionRecord rec;
  rec.state = {x, 0.5 * (sq(x) + s1(x))};
  rec.zeta_trans = x;
  rec.guard_kind = GuardKind::position;
  return rec;
}

// ---------------------------------------------------------------------------
// Lateral foot placement (Algorithm-2 secant search)
// ---------------------------------------------------------------------------

namespace {

double lateral_apex_velocity(double y0, double vy0, double y_foot, double omega,
                             double t_apex) {
  // Zero-torque lateral flow; exact integral of the pendulum about y_foot.
  return omega * (y0 - y_foot) * std::sinh(omega * t_apex) + vy0 * std::cosh(omega * t_apex);
}

}  // namespace

LateralSearchResult lateral_foot_search(double y_init, double vy_init, double t_apex,
                                        double omega, double y_foot_guess,
                                        const LateralSearchOptions& opts) {
  auto objective = [&](double y_foot) {
    return lateral_apex_velocity(y_init, vy_init, y_foot, omega, t_apex);
  };

  double y_prev = y_foot_guess;
  double f_prev = objective(y_prev);
  if (std::abs(f_prev) <= opts.v_tol) {
    return {y_prev, 1, std::abs(f_prev)};
  }

  double y_cur = y_prev + opts.seed_delta;
  double f_cur = objective(y_cur);
  for (int n = 2; n <= opts.max_iter; ++n) {
    if (std::abs(f_cur) <= opts.v_tol) {
      return {y_cur, n, std::abs(f_cur)};
    }
    const double slope = (f_cur - f_prev) / (y_cur - y_prev);
    if (slope == 0.0 || !std::isfinite(slope)) {
      throw NotConverged("lateral apex velocity insensitive to the foot placement");
    }
    const double y_next = y_cur - f_cur / slope;
    if (y_next < opts.y_min || y_next > opts.y_max) {
      throw OutOfRange("lateral foot iterate left the feasible range");
    }
    y_prev = y_cur;
    f_prev = f_cur;
    y_cur = y_next;
    f_cur = objective(y_cur);
  }
  if (std::abs(f_cur) <= opts.v_tol) {
    return {y_cur, opts.max_iter, std::abs(f_cur)};
  }
  throw NotConverged("lateral foot search exceeded the iteration budget");
}

// ---------------------------------------------------------------------------
// Nominal plan assembly
// ---------------------------------------------------------------------------

namespace {

struct LateralArc {
  std::vector<double> y, vy;
};

LateralArc sample_lateral(double y0, double vy0, double y_foot, double omega,
                          const std::vector<double>& times) {
  LateralArc arc;
  arc.y.reserve(times.size());
  arc.vy.reserve(times.size());
  for (double t : times) {
    const double ch = std::cosh(omega * t);
    const double sh = std::sinh(omega * t);
    arc.y.push_back((y0 - y_foot) * ch + vy0 / omega * sh + y_foot);
    arc.vy.push_back(omega * (y0 - y_foot) * sh + vy0 * ch);
  }
  return arc;
}

TrajectorySample make_sample(double t, double zeta, double x, double vx, double y, double vy,
                             const StepContext& ctx) {
  TrajectorySample s;
  s.t = t;
  s.zeta = zeta;
  s.state.pos = Vec3(x, y, ctx.surface_z(x, y));
  s.state.vel = Vec3(vx, vy, ctx.surface().a * vx + ctx.surface().b * vy);
  s.control.omega = ctx.omega();
  s.sigma = sigma_apex(x, vx, ctx.apex_velocity(), ctx.foot().x(), ctx.omega());
  return s;
}

// Moves a foot laterally while keeping the step's apex height (and omega)
// unchanged by compensating the surface bias.
StepContext refoot_lateral(const StepContext& ctx, double y_foot) {
  Vec3 foot = ctx.foot();
  SurfaceParams surf = ctx.surface();
  surf.c += surf.b * (foot.y() - y_foot);
  foot.y() = y_foot;
  return StepContext::make(ctx.index(), foot, surf, ctx.apex_velocity(), ctx.mass(),
                           ctx.gravity());
}

}  // namespace

StepPlan generate_nominal(std::span<const SurfaceParams> surfaces, std::span<const Vec3> feet,
                          std::span<const double> apex_velocities,
                          const NominalOptions& opts) {
  const std::size_t n = feet.size();
  if (n == 0 || surfaces.size() != n || apex_velocities.size() != n) {
    throw ConfigError("generate_nominal needs matching non-empty per-step inputs");
  }

  StepPlan plan;
  plan.headings.assign(n, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    plan.steps.push_back(StepContext::make(static_cast<int>(q), feet[q], surfaces[q],
                                           apex_velocities[q], opts.mass, opts.gravity));
  }
  for (std::size_t q = 0; q + 1 < n; ++q) {
    plan.transitions.push_back(find_transition(plan.steps[q], plan.steps[q + 1]));
  }

  const double x_start = opts.x0.value_or(plan.steps[0].foot().x());
  const double v_start = opts.v0.value_or(plan.steps[0].apex_velocity());

  double t_base = 0.0;
  double x_entry = x_start;
  double v_entry = v_start;
  double y_entry = opts.y0;
  double vy_entry = opts.vy0;

  for (std::size_t q = 0; q < n; ++q) {
    StepContext& ctx = plan.steps[q];

    // Sagittal arc of the step.
    SagittalArc sag;
    if (q + 1 < n) {
      sag = sample_to_position(x_entry, v_entry, ctx, plan.transitions[q].state.pos, opts.dt);
    } else if (ctx.apex_velocity() > 1e-12 && x_entry < ctx.foot().x() - 1e-12) {
      sag = sample_to_position(x_entry, v_entry, ctx, ctx.foot().x(), opts.dt);
    } else {
      sag = sample_for_time(x_entry, v_entry, ctx, opts.single_step_time, opts.dt);
    }

    // Lateral foot from the Algorithm-2 search, timed by the sagittal apex.
    double t_apex = 0.0;
    if (x_entry < ctx.foot().x() - 1e-12 && v_entry > 0.0) {
      const auto ta = crossing_time(x_entry, v_entry, ctx.foot().x(), ctx.omega(),
                                    ctx.foot().x());
      t_apex = ta.value_or(0.0);
    }
    if (opts.lateral_search && t_apex > 0.0) {
      const auto found = lateral_foot_search(y_entry, vy_entry, t_apex, ctx.omega(),
                                             ctx.foot().y(), opts.lateral);
      ctx = refoot_lateral(ctx, found.y_foot);
    }

    const LateralArc lat =
        sample_lateral(y_entry, vy_entry, ctx.foot().y(), ctx.omega(), sag.t);

    Trajectory traj;
    traj.samples.reserve(sag.t.size());
    for (std::size_t i = 0; i < sag.t.size(); ++i) {
      traj.samples.push_back(make_sample(t_base + sag.t[i], sag.x[i] - x_start, sag.x[i],
                                         sag.v[i], lat.y[i], lat.vy[i], ctx));
    }
    plan.step_trajectories.push_back(std::move(traj));

    if (q + 1 < n) {
      plan.transitions[q].t = t_base + sag.t.back();
      plan.transitions[q].zeta_trans = plan.transitions[q].state.pos - x_start;
      x_entry = plan.transitions[q].state.pos;
      v_entry = plan.transitions[q].state.vel;
    }
    t_base += sag.t.back();
    y_entry = lat.y.back();
    vy_entry = lat.vy.back();
  }
  return plan;
}

Trajectory StepPlan::flatten() const {
  Trajectory out;
  for (const auto& traj : step_trajectories) {
    for (const auto& s : traj.samples) {
      if (!out.samples.empty() && s.t <= out.samples.back().t + kTimeEps) continue;
      out.samples.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Steering
// ---------------------------------------------------------------------------

StepPlan steering_plan(std::span<const Keyframe> keyframes, const SteeringOptions& opts) {
  const std::size_t n = keyframes.size();
  if (n == 0) throw ConfigError("steering_plan needs at least one keyframe");
  if (!opts.surfaces.empty() && opts.surfaces.size() != n) {
    throw ConfigError("per-step surfaces must match the keyframe count");
  }
  const NominalOptions& nopt = opts.nominal;

  StepPlan plan;

  // Global walking state.
  Vec3 com_pos(keyframes[0].foot.x(), nopt.y0, 0.0);
  Vec3 com_vel(0.0, 0.0, 0.0);
  {
    // Initial state: apex of the first step, oriented along its heading.
    const double th = keyframes[0].theta;
    const Vec3 ex(std::cos(th), std::sin(th), 0.0);
    const Vec3 ey(-std::sin(th), std::cos(th), 0.0);
    com_pos = keyframes[0].foot + nopt.y0 * ey;
    com_vel = keyframes[0].apex_velocity * ex + nopt.vy0 * ey;
  }
  Vec3 prev_foot = keyframes[0].foot;
  double t_base = 0.0;
  double zeta_base = 0.0;

  for (std::size_t q = 0; q < n; ++q) {
    const double th = keyframes[q].theta;
    plan.headings.push_back(th);
    const Vec3 ex(std::cos(th), std::sin(th), 0.0);
    const Vec3 ey(-std::sin(th), std::cos(th), 0.0);

    // Local origin: intersection of the local sagittal axis through the
    // current CoM with the line previous-foot -> foot guess.
    Vec3 origin = com_pos;
    origin.z() = 0.0;
    if (q > 0) {
      const Vec3 seg = keyframes[q].foot - prev_foot;
      const double denom = ex.x() * (-seg.y()) - ex.y() * (-seg.x());
      if (std::abs(denom) > 1e-9) {
        const Vec3 rhs = prev_foot - com_pos;
        const double s = (rhs.x() * (-seg.y()) - rhs.y() * (-seg.x())) / denom;
        origin = com_pos + s * ex;
        origin.z() = 0.0;
      }
    }

    auto to_local_x = [&](const Vec3& p) { return (p - origin).dot(ex); };
    auto to_local_y = [&](const Vec3& p) { return (p - origin).dot(ey); };

    SurfaceParams surf =
        opts.surfaces.empty() ? SurfaceParams{} : opts.surfaces[q];
    const double xf = to_local_x(keyframes[q].foot);
    const double yf_guess = to_local_y(keyframes[q].foot);
    const double zf = keyframes[q].foot.z();
    // Anchor the surface bias so the apex height is honored in local frame.
    surf.c = zf + opts.apex_height - surf.a * xf - surf.b * yf_guess;

    const double x_entry = to_local_x(com_pos);
    const double v_entry = com_vel.dot(ex);
    const double y_entry = to_local_y(com_pos);
    const double vy_entry = com_vel.dot(ey);

    // Heading changes rotate the entry velocity, so the entry state is
    // generally off the keyframe apex manifold. Plan the step on the manifold
    // actually passing through the entry state (its effective apex velocity).
    double va = keyframes[q].apex_velocity;
    if (q > 0) {
      const double w = asymptotic_slope(surf, Vec3(xf, yf_guess, zf), nopt.gravity);
      const double disc = v_entry * v_entry - w * w * (xf - x_entry) * (xf - x_entry);
      if (!(disc > 0.0)) {
        throw NoTransition("entry state cannot pass over the next foot after steering");
      }
      va = std::sqrt(disc);
    }

    StepContext ctx = StepContext::make(static_cast<int>(q), Vec3(xf, yf_guess, zf), surf,
                                        va, nopt.mass, nopt.gravity);

    // Next step's manifold expressed in this step's frame.
    std::optional<TransitionRecord> trans;
    if (q + 1 < n) {
      SurfaceParams surf1 =
          opts.surfaces.empty() ? SurfaceParams{} : opts.surfaces[q + 1];
      const double xf1 = to_local_x(keyframes[q + 1].foot);
      const double yf1 = to_local_y(keyframes[q + 1].foot);
      const double zf1 = keyframes[q + 1].foot.z();
      surf1.c = zf1 + opts.apex_height - surf1.a * xf1 - surf1.b * yf1;
      const StepContext next =
          StepContext::make(static_cast<int>(q) + 1, Vec3(xf1, yf1, zf1), surf1,
                            keyframes[q + 1].apex_velocity, nopt.mass, nopt.gravity);
      trans = find_transition(ctx, next);
    }

    SagittalArc sag;
    if (trans) {
      sag = sample_to_position(x_entry, v_entry, ctx, trans->state.pos, nopt.dt);
    } else if (ctx.apex_velocity() > 1e-12 && x_entry < ctx.foot().x() - 1e-12) {
      sag = sample_to_position(x_entry, v_entry, ctx, ctx.foot().x(), nopt.dt);
    } else {
      sag = sample_for_time(x_entry, v_entry, ctx, nopt.single_step_time, nopt.dt);
    }

    double t_apex = 0.0;
    if (x_entry < ctx.foot().x() - 1e-12 && v_entry > 0.0) {
      t_apex = crossing_time(x_entry, v_entry, ctx.foot().x(), ctx.omega(), ctx.foot().x())
                   .value_or(0.0);
    }
    if (nopt.lateral_search && t_apex > 0.0) {
      const auto found = lateral_foot_search(y_entry, vy_entry, t_apex, ctx.omega(),
                                             yf_guess, nopt.lateral);
      ctx = refoot_lateral(ctx, found.y_foot);
    }
    const LateralArc lat =
        sample_lateral(y_entry, vy_entry, ctx.foot().y(), ctx.omega(), sag.t);

    // Transform samples to the global frame.
    Trajectory traj;
    traj.samples.reserve(sag.t.size());
    double zeta = zeta_base;
    double prev_x = sag.x.front();
    for (std::size_t i = 0; i < sag.t.size(); ++i) {
      zeta += std::abs(sag.x[i] - prev_x);
      prev_x = sag.x[i];
      const double zl = ctx.surface_z(sag.x[i], lat.y[i]);
      TrajectorySample s;
      s.t = t_base + sag.t[i];
      s.zeta = zeta;
      s.state.pos = origin + sag.x[i] * ex + lat.y[i] * ey + Vec3(0, 0, zl);
      s.state.vel = sag.v[i] * ex + lat.vy[i] * ey +
                    Vec3(0, 0, ctx.surface().a * sag.v[i] + ctx.surface().b * lat.vy[i]);
      s.control.omega = ctx.omega();
      s.sigma = sigma_apex(sag.x[i], sag.v[i], ctx.apex_velocity(), ctx.foot().x(),
                           ctx.omega());
      traj.samples.push_back(s);
    }
    plan.step_trajectories.push_back(std::move(traj));
    plan.steps.push_back(ctx);
    if (trans) {
      trans->t = t_base + sag.t.back();
      trans->zeta_trans = zeta;
      // report the switch position along the path, not in the step frame
      trans->state.pos += origin.dot(ex);
      plan.transitions.push_back(*trans);
    }

    // Advance global state to the step exit.
    const auto& last = plan.step_trajectories.back().samples.back();
    com_pos = last.state.pos;
    com_vel = last.state.vel;
    prev_foot = origin + ctx.foot().x() * ex + ctx.foot().y() * ey +
                Vec3(0, 0, keyframes[q].foot.z());
    t_base += sag.t.back();
    zeta_base = zeta;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Multi-contact blending
// ---------------------------------------------------------------------------

namespace {

struct BoundaryState {
  Vec3 pos, vel, acc;
};

BoundaryState interpolate_boundary(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  if (s.size() < 2) {
    return {s.front().state.pos, s.front().state.vel, Vec3::Zero()};
  }
  std::size_t i = 1;
  while (i + 1 < s.size() && s[i].t < t) ++i;
  const auto& a = s[i - 1];
  const auto& b = s[i];
  const double h = b.t - a.t;
  const double u = h > kTimeEps ? std::clamp((t - a.t) / h, 0.0, 1.0) : 0.0;
  BoundaryState out;
  out.pos = (1.0 - u) * a.state.pos + u * b.state.pos;
  out.vel = (1.0 - u) * a.state.vel + u * b.state.vel;
  out.acc = h > kTimeEps ? Vec3((b.state.vel - a.state.vel) / h) : Vec3::Zero();
  return out;
}

// Quintic with prescribed position/velocity/acceleration at both ends of [0, T].
struct Quintic {
  double c[6];

  static Quintic fit(double p0, double v0, double a0, double p1, double v1, double a1,
                     double T) {
    Quintic q{};
    q.c[0] = p0;
    q.c[1] = v0;
    q.c[2] = a0 / 2.0;
    const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
    const double dp = p1 - p0 - v0 * T - 0.5 * a0 * T2;
    const double dv = v1 - v0 - a0 * T;
    const double da = a1 - a0;
    q.c[3] = (20.0 * dp - 8.0 * dv * T + da * T2) / (2.0 * T3);
    q.c[4] = (-30.0 * dp + 14.0 * dv * T - 2.0 * da * T2) / (2.0 * T4);
    q.c[5] = (12.0 * dp - 6.0 * dv * T + da * T2) / (2.0 * T5);
    return q;
  }

  double pos(double t) const {
    return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
  }
  double vel(double t) const {
    return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])));
  }
  double acc(double t) const {
    return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]));
  }
};

}  // namespace

Trajectory multicontact_blend(const Trajectory& traj_q, const Trajectory& traj_q1,
                              double time_fraction, double dt) {
  if (traj_q.empty() || traj_q1.empty()) {
    throw DegenerateWindow("blend needs non-empty trajectories on both sides");
  }
  const double t_junction = traj_q1.front().t;
  const double step_time = traj_q.back().t - traj_q.front().t;
  const double window = time_fraction * step_time;
  if (!(window > 0.0)) throw DegenerateWindow("blend duration must be positive");

  const double ta = std::max(t_junction - 0.5 * window, traj_q.front().t);
  const double tb = std::min(t_junction + 0.5 * window, traj_q1.back().t);
  if (!(tb > ta)) throw DegenerateWindow("blend window collapsed to zero");

  const BoundaryState b0 = interpolate_boundary(traj_q, ta);
  const BoundaryState b1 = interpolate_boundary(traj_q1, tb);
  const double T = tb - ta;

  Quintic qx = Quintic::fit(b0.pos.x(), b0.vel.x(), b0.acc.x(), b1.pos.x(), b1.vel.x(),
                            b1.acc.x(), T);
  Quintic qy = Quintic::fit(b0.pos.y(), b0.vel.y(), b0.acc.y(), b1.pos.y(), b1.vel.y(),
                            b1.acc.y(), T);
  Quintic qz = Quintic::fit(b0.pos.z(), b0.vel.z(), b0.acc.z(), b1.pos.z(), b1.vel.z(),
                            b1.acc.z(), T);

  // zeta continues the incoming step's x-progression convention.
  const TrajectorySample& anchor = traj_q.samples.back();
  const double zeta_offset = anchor.zeta - anchor.state.x();

  Trajectory out;
  auto push = [&](double tau) {
    TrajectorySample s;
    s.t = ta + tau;
    s.state.pos = Vec3(qx.pos(tau), qy.pos(tau), qz.pos(tau));
    s.state.vel = Vec3(qx.vel(tau), qy.vel(tau), qz.vel(tau));
    s.zeta = s.state.x() + zeta_offset;
    s.sigma = 0.0;  // dual contact: the single-step deviation metric is not defined
    out.samples.push_back(s);
  };
  for (double tau = 0.0; tau < T - kTimeEps; tau += dt) push(tau);
  push(T);
  return out;
}

Trajectory blend_plan(const StepPlan& plan, double time_fraction, double dt) {
  if (plan.step_trajectories.size() <= 1) return plan.flatten();

  Trajectory out;
  auto append_range = [&](const Trajectory& traj, double t_lo, double t_hi) {
    for (const auto& s : traj.samples) {
      if (s.t < t_lo - kTimeEps || s.t > t_hi + kTimeEps) continue;
      if (!out.samples.empty() && s.t <= out.samples.back().t + kTimeEps) continue;
      out.samples.push_back(s);
    }
  };

  double lo = plan.step_trajectories.front().samples.front().t;
  for (std::size_t q = 0; q + 1 < plan.step_trajectories.size(); ++q) {
    const Trajectory blend = multicontact_blend(plan.step_trajectories[q],
                                                plan.step_trajectories[q + 1], time_fraction,
                                                dt);
    append_range(plan.step_trajectories[q], lo, blend.samples.front().t);
    for (const auto& s : blend.samples) {
      if (!out.samples.empty() && s.t <= out.samples.back().t + kTimeEps) continue;
      out.samples.push_back(s);
    }
    lo = blend.samples.back().t;
  }
  append_range(plan.step_trajectories.back(), lo,
               std::numeric_limits<double>::infinity());
  return out;
}

std::vector<double> time_parametrize(std::span<const TrajectorySample> trace) {
  if (trace.empty()) return {};
  std::vector<double> out(trace.size());
  out[0] = trace[0].t;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double v_prev = trace[i - 1].state.vx();
    const double v_cur = trace[i].state.vx();
    if (std::abs(v_prev) < 1e-6 || std::abs(v_cur) < 1e-6) {
      throw ZeroVelocity("sagittal velocity vanishes on a single-contact arc");
    }
    const double dx = trace[i].state.x() - trace[i - 1].state.x();
    out[i] = out[i - 1] + dx * 0.5 * (1.0 / v_prev + 1.0 / v_cur);
  }
  return out;
}

}  // namespace psp
