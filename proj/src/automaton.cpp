#include "psp/automaton.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "psp/manifold.hpp"
#include "psp/pipm.hpp"

namespace psp {

namespace {

double step_sigma(const PhaseState& s, const StepContext& ctx) {
  return sigma_apex(s.x(), s.vx(), ctx.apex_velocity(), ctx.foot().x(), ctx.omega());
}

bool legal_edge(ContactMode from, ContactMode to, bool allow_instantaneous) {
  if (from == to) return true;
  if (from == ContactMode::dual || to == ContactMode::dual) return true;
  return allow_instantaneous;
}

ContactMode flip(ContactMode m) {
  return m == ContactMode::left ? ContactMode::right : ContactMode::left;
}

const char* category_name(DisturbanceCategory c) {
  switch (c) {
    case DisturbanceCategory::a1: return "a1";
    case DisturbanceCategory::a2: return "a2";
    case DisturbanceCategory::a3: return "a3";
    case DisturbanceCategory::a4: return "a4";
    default: return "none";
  }
}

}  // namespace

bool evaluate_guard(const Guard& guard, const HybridState& hs, const StepContext& next_ctx) {
  if (!std::isfinite(guard.threshold)) throw ConfigError("guard threshold must be finite");
  switch (guard.kind) {
    case GuardKind::position:
      return hs.state.x() >= guard.threshold;
    case GuardKind::velocity:
      // forward deceleration crossing: fires once the sagittal speed has
      // dropped to the transition value
      return hs.state.vx() <= guard.threshold;
    case GuardKind::progression:
      return hs.zeta >= guard.threshold;
    case GuardKind::manifold:
      return step_sigma(hs.state, next_ctx) >= -guard.threshold;
  }
  return false;
}

HybridState apply_transition(const HybridState& hs, TransitionClass cls, TransitionForm form,
                             ContactMode next_mode, const Vec3& delta_v,
                             bool allow_instantaneous) {
  (void)cls;
  if (!legal_edge(hs.mode, next_mode, allow_instantaneous)) {
    throw InvalidEdge("single-contact to single-contact switch without an "
                      "intervening dual-contact mode");
  }
  HybridState out = hs;
  out.mode = next_mode;
  if (form == TransitionForm::jump) out.state.vel += delta_v;
  return out;
}

namespace {

struct RecoveryState {
  bool active{false};
  PolicyTable table;
  bool table_ok{false};
  double epsilon{0.0};
  ControlPair u_eps{};  // DP control latched at the bundle entry
  ControlPair u_ref{};
};

// Per-step DP geometry: stage grid from the disturbed position to the nominal
// transition, references bound to the step context.
DpConfig bind_dp_config(const DpConfig& proto, const StepContext& ctx, double x_now,
                        double x_trans, double v_desired, double omega_halfwidth) {
  DpConfig cfg = proto;
  cfg.x_foot = ctx.foot().x();
  cfg.omega_ref = ctx.omega();
  cfg.omega_min = ctx.omega() - omega_halfwidth;
  cfg.omega_max = ctx.omega() + omega_halfwidth;
  cfg.apex_velocity = ctx.apex_velocity();
  cfg.v_desired = v_desired;
  cfg.mass = ctx.mass();
  cfg.gravity = ctx.gravity();
  cfg.stage_min = std::floor(x_now / cfg.stage_res) * cfg.stage_res;
  cfg.stage_max = std::ceil(x_trans / cfg.stage_res) * cfg.stage_res;
  if (cfg.stage_max <= cfg.stage_min) cfg.stage_max = cfg.stage_min + cfg.stage_res;
  return cfg;
}

double apex_crossing_time(double x0, double v0, double x_foot, double omega) {
  const double r = omega * (x_foot - x0) / v0;
  if (!(v0 > 0.0) || r >= 1.0) {
    throw NoTransition("state does not pass over the re-planned foot");
  }
  return r <= -1.0 ? 0.0 : std::atanh(std::max(r, 0.0)) / omega;
}

}  // namespace

ExecutionTrace run_automaton(const StepPlan& plan, std::span<const Disturbance> disturbances,
                             const AutomatonConfig& cfg) {
  const int n_steps = static_cast<int>(plan.steps.size());
  if (n_steps == 0 || plan.step_trajectories.size() != plan.steps.size()) {
    throw ConfigError("empty or inconsistent step plan");
  }
  for (double h : plan.headings) {
    if (std::abs(h) > 1e-12) {
      throw ConfigError("run_automaton requires a straight-line (zero-heading) plan");
    }
  }

  ExecutionTrace out;
  std::vector<StepContext> steps(plan.steps.begin(), plan.steps.end());
  std::vector<TransitionRecord> guards(plan.transitions.begin(), plan.transitions.end());

  double nominal_duration = 0.0;
  for (const auto& tr : plan.step_trajectories) {
    if (!tr.empty()) nominal_duration += tr.back().t - tr.front().t;
  }
  const double t_max = nominal_duration + cfg.horizon_margin;

  PhaseState state = plan.step_trajectories.front().front().state;
  double t = plan.step_trajectories.front().front().t;
  double zeta = plan.step_trajectories.front().front().zeta;
  ContactMode mode = cfg.first_mode;

  auto partial = [&]() {
    ExecutionTrace copy = out;
    copy.realized_steps = steps;
    return copy;
  };

  auto push_sample = [&](int step_idx, const StepContext& ctx, const ControlInput& u) {
    TrajectorySample s;
    s.t = t;
    s.zeta = zeta;
    s.state = state;
    s.control = u;
    s.sigma = step_sigma(state, ctx);
    out.trace.samples.push_back(s);
    out.modes.push_back(mode);
    out.sample_step.push_back(step_idx);
  };

  std::vector<double> switch_times;  // realized switch instants, for relabeling

  for (int i = 0; i < n_steps; ++i) {
    const StepContext& ctx = steps[i];
    const bool has_next = i + 1 < n_steps;
    const double eps_here =
        cfg.epsilon > 0.0 ? cfg.epsilon
                          : default_epsilon(ctx.apex_velocity(), ctx.omega());

    // Guard for the outgoing edge, calibrated to the nominal transition.
    Guard guard;
    guard.kind = cfg.guard;
    guard.from_step = i;
    if (has_next) {
      const TransitionRecord& tr = guards[i];
      switch (cfg.guard) {
        case GuardKind::position: guard.threshold = tr.state.pos; break;
        case GuardKind::velocity: guard.threshold = tr.state.vel; break;
        case GuardKind::progression: guard.threshold = tr.zeta_trans; break;
        case GuardKind::manifold:
          guard.threshold =
              cfg.epsilon > 0.0
                  ? cfg.epsilon
                  : default_epsilon(steps[i + 1].apex_velocity(), steps[i + 1].omega());
          break;
      }
    }

    // Disturbances owned by this step, as progression thresholds.
    const double zeta_start = zeta;
    const double zeta_end = has_next
                                ? guards[i].zeta_trans
                                : zeta + std::abs(plan.step_trajectories[i].back().state.x() -
                                                  plan.step_trajectories[i].front().state.x());
    std::vector<std::pair<double, const Disturbance*>> pending;
    for (const Disturbance& d : disturbances) {
      if (d.step_index == i) {
        pending.emplace_back(zeta_start + d.fraction * (zeta_end - zeta_start), &d);
      }
    }
    std::sort(pending.begin(), pending.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t next_dist = 0;

    const double step_deadline =
        has_next ? t_max
                 : t + (plan.step_trajectories[i].back().t - plan.step_trajectories[i].front().t);

    RecoveryState rec;
    rec.u_ref = {ctx.omega(), 0.0};
    rec.u_eps = rec.u_ref;

    bool switched = false;
    while (!switched) {
      // Disturbance jumps fire at their progression thresholds.
      while (next_dist < pending.size() && zeta >= pending[next_dist].first - 1e-12) {
        const Disturbance& d = *pending[next_dist].second;
        ++next_dist;
        HybridState pre{zeta, mode, state};
        HybridState post = apply_transition(pre, TransitionClass::disturbed,
                                            TransitionForm::jump, mode, d.delta_v);
        PlanarState pre_s{pre.state.x(), pre.state.vx()};
        PlanarState post_s{post.state.x(), post.state.vx()};
        const DisturbanceReport rep = classify_disturbance(pre_s, post_s, ctx);
        state = post.state;

        TransitionEvent ev;
        ev.cls = TransitionClass::disturbed;
        ev.form = TransitionForm::jump;
        ev.pre = pre;
        ev.post = post;
        ev.t = t;
        ev.note = std::string("disturbance ") + category_name(rep.category);
        out.events.push_back(ev);

        // Arm the DP recovery policy for this step's remaining stages.
        if (has_next && rep.category != DisturbanceCategory::none) {
          rec.active = true;
          rec.epsilon = eps_here;
          const double x_trans = guards[i].state.pos;
          if (state.x() < x_trans - cfg.dp.stage_res) {
            DpConfig dp = bind_dp_config(cfg.dp, ctx, state.x(), x_trans,
                                         guards[i].state.vel, cfg.omega_halfwidth);
            try {
              if (!cfg.table_cache.empty()) {
                std::ostringstream name;
                name << std::hex << dp.fingerprint() << ".pt";
                rec.table = load_or_build(dp, cfg.table_cache / name.str());
              } else {
                rec.table = build_policy_table(dp);
              }
              rec.table_ok = true;
            } catch (const Error&) {
              rec.table_ok = false;
            }
          }
          TransitionEvent on;
          on.cls = TransitionClass::controlled;
          on.form = TransitionForm::switching;
          on.pre = post;
          on.post = post;
          on.t = t;
          on.note = rec.table_ok ? "dp recovery engaged" : "dp recovery unavailable";
          out.events.push_back(on);
        }
      }

      // Control for this flow sample.
      ControlInput u;
      u.omega = ctx.omega();
      if (rec.active && rec.table_ok) {
        out.dp_recovery_used = true;
        const double sigma = step_sigma(state, ctx);
        ControlPair u_dp = rec.u_ref;
        try {
          const PolicyLookup lk = lookup_policy(rec.table, state.x(), state.vx());
          if (lk.feasible) u_dp = lk.control;
        } catch (const OutOfTable&) {
          // past the table: fall back to the reference control
        }
        if (std::abs(sigma) > rec.epsilon) rec.u_eps = u_dp;
        const ControlPair u_sat =
            saturate_control(u_dp, sigma, rec.epsilon, rec.u_eps, rec.u_ref);
        u.omega = u_sat.omega;
        u.torque.tau_y = u_sat.tau_y;
      }

      push_sample(i, ctx, u);

      // Outgoing-edge guard.
      if (has_next && evaluate_guard(guard, {zeta, mode, state}, steps[i + 1])) {
        const double sigma_next = step_sigma(state, steps[i + 1]);
        const double eps_next =
            cfg.epsilon > 0.0
                ? cfg.epsilon
                : default_epsilon(steps[i + 1].apex_velocity(), steps[i + 1].omega());
        if (std::abs(sigma_next) > eps_next) {
          // Transition state outside the next step's bundle: re-plan the
          // next foot so the disturbed state lies exactly on its manifold.
          const StepContext& old_next = steps[i + 1];
          const double v_apex_next = old_next.apex_velocity();
          double x_rep = 0.0;
          try {
            x_rep = replan_foot(state.x(), state.vx(), v_apex_next, old_next.omega());
          } catch (const InfeasibleApex& e) {
            throw UnrecoverableError(e.what(), partial());
          }
          if (std::abs(x_rep - state.x()) > cfg.max_step_length) {
            throw UnrecoverableError("re-planned foot outside the kinematic range",
                                     partial());
          }
          double y_rep = old_next.foot().y();
          try {
            const double t_apex =
                apex_crossing_time(state.x(), state.vx(), x_rep, old_next.omega());
            if (t_apex > 0.0) {
              const LateralSearchResult lat = lateral_foot_search(
                  state.y(), state.vy(), t_apex, old_next.omega(), y_rep);
              y_rep = lat.y_foot;
            }
          } catch (const Error&) {
            // keep the nominal lateral placement when the search fails
          }
          SurfaceParams srf = old_next.surface();
          srf.c += srf.a * (old_next.foot().x() - x_rep) +
                   srf.b * (old_next.foot().y() - y_rep);
          const Vec3 old_foot = old_next.foot();
          const Vec3 new_foot{x_rep, y_rep, old_foot.z()};
          steps[i + 1] =
              StepContext::make(old_next.index(), new_foot, srf, v_apex_next,
                                old_next.mass(), old_next.gravity());
          out.replans.push_back({i, t, old_foot, new_foot, state.vx()});

          TransitionEvent rp;
          rp.cls = TransitionClass::controlled;
          rp.form = TransitionForm::switching;
          rp.pre = {zeta, mode, state};
          rp.post = rp.pre;
          rp.t = t;
          rp.note = "foot replan";
          out.events.push_back(rp);

          // The downstream guard must reference the re-planned geometry.
          if (i + 2 < n_steps) {
            TransitionRecord tr2 = find_transition(steps[i + 1], steps[i + 2]);
            tr2.zeta_trans = zeta + std::abs(tr2.state.pos - state.x());
            guards[i + 1] = tr2;
          }
        }

        // Lateral re-placement: if the incoming lateral state no longer
        // zeroes the lateral velocity at the next sagittal apex, move the
        // next foot sideways (surface bias compensated so omega is kept).
        {
          const StepContext& nx = steps[i + 1];
          try {
            const double t_apex =
                apex_crossing_time(state.x(), state.vx(), nx.foot().x(), nx.omega());
            if (t_apex > 0.0) {
              const double w = nx.omega();
              const double vy_apex = w * (state.y() - nx.foot().y()) * std::sinh(w * t_apex) +
                                     state.vy() * std::cosh(w * t_apex);
              if (std::abs(vy_apex) > 1e-3) {
                const LateralSearchResult lat = lateral_foot_search(
                    state.y(), state.vy(), t_apex, w, nx.foot().y());
                SurfaceParams srf = nx.surface();
                srf.c += srf.b * (nx.foot().y() - lat.y_foot);
                const Vec3 new_foot{nx.foot().x(), lat.y_foot, nx.foot().z()};
                const Vec3 old_foot = nx.foot();
                steps[i + 1] = StepContext::make(nx.index(), new_foot, srf,
                                                 nx.apex_velocity(), nx.mass(), nx.gravity());
                if (out.replans.empty() || out.replans.back().t != t) {
                  out.replans.push_back({i, t, old_foot, new_foot, state.vx()});
                  TransitionEvent rp;
                  rp.cls = TransitionClass::controlled;
                  rp.form = TransitionForm::switching;
                  rp.pre = {zeta, mode, state};
                  rp.post = rp.pre;
                  rp.t = t;
                  rp.note = "lateral foot replan";
                  out.events.push_back(rp);
                }
              }
            }
          } catch (const Error&) {
            // unreachable apex or failed search: keep the planned placement
          }
        }

        HybridState pre{zeta, mode, state};
        const ContactMode next_mode = flip(mode);
        HybridState post = apply_transition(pre, TransitionClass::autonomous,
                                            TransitionForm::switching, next_mode,
                                            Vec3::Zero(), true);
        TransitionEvent ev;
        ev.cls = TransitionClass::autonomous;
        ev.form = TransitionForm::switching;
        ev.pre = pre;
        ev.post = post;
        ev.t = t;
        ev.note = "step switch";
        out.events.push_back(ev);
        out.realized_transitions.push_back({zeta, {state.x(), state.vx()}, t, cfg.guard});
        switch_times.push_back(t);
        mode = next_mode;
        switched = true;
        break;
      }
      if (!has_next && t >= step_deadline - 1e-12) {
        switched = true;
        break;
      }
      if (t > t_max) {
        throw UnrecoverableError("transition guard never fired", partial());
      }

      // One RK4 flow step.
      const double dt = cfg.dt;
      const ControlInput& uu = u;
      auto f = [&](const PhaseState& s) { return controlled_field(s, ctx, uu); };
      const PhaseState k1 = f(state);
      PhaseState s2;
      s2.pos = state.pos + 0.5 * dt * k1.pos;
      s2.vel = state.vel + 0.5 * dt * k1.vel;
      const PhaseState k2 = f(s2);
      PhaseState s3;
      s3.pos = state.pos + 0.5 * dt * k2.pos;
      s3.vel = state.vel + 0.5 * dt * k2.vel;
      const PhaseState k3 = f(s3);
      PhaseState s4;
      s4.pos = state.pos + dt * k3.pos;
      s4.vel = state.vel + dt * k3.vel;
      const PhaseState k4 = f(s4);
      const double x_prev = state.x();
      state.pos += dt / 6.0 * (k1.pos + 2 * k2.pos + 2 * k3.pos + k4.pos);
      state.vel += dt / 6.0 * (k1.vel + 2 * k2.vel + 2 * k3.vel + k4.vel);
      zeta += std::abs(state.x() - x_prev);
      t += dt;
    }
  }

  // Dual-contact relabeling around each realized switch instant.
  if (!cfg.instantaneous_switch && cfg.blend_fraction > 0.0 && !switch_times.empty()) {
    std::size_t sw = 0;
    double prev_switch = out.trace.samples.front().t;
    for (std::size_t k = 0; k < out.trace.samples.size() && sw < switch_times.size(); ++k) {
      const double ts = switch_times[sw];
      const double window = cfg.blend_fraction * (ts - prev_switch);
      const double tk = out.trace.samples[k].t;
      if (tk >= ts - 0.5 * window && tk <= ts + 0.5 * window) {
        out.modes[k] = ContactMode::dual;
      }
      if (tk > ts + 0.5 * window) {
        prev_switch = ts;
        ++sw;
      }
    }
  }

  out.realized_steps = steps;
  return out;
}

}  // namespace psp
