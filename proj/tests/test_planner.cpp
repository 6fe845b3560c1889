#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "psp/manifold.hpp"
#include "psp/planner.hpp"

using namespace psp;

namespace {

StepContext make_step(int idx, double xf, double va, double apex_height = 1.0) {
  return StepContext::make(idx, Vec3{xf, 0.0, 0.0}, SurfaceParams{0.0, 0.0, apex_height},
                           va);
}

std::vector<SurfaceParams> flat_surfaces(int n, double h = 1.0) {
  return std::vector<SurfaceParams>(n, SurfaceParams{0.0, 0.0, h});
}

std::vector<Vec3> line_feet(int n, double spacing = 0.4) {
  std::vector<Vec3> feet(n);
  for (int i = 0; i < n; ++i) feet[i] = Vec3{i * spacing, 0.0, 0.0};
  return feet;
}

// lateral apex velocity for a candidate foot, the quantity the search zeroes
double lateral_apex_velocity(double y0, double vy0, double y_foot, double w, double t_apex) {
  return w * (y0 - y_foot) * std::sinh(w * t_apex) + vy0 * std::cosh(w * t_apex);
}

}  // namespace

TEST_CASE("closed-form and spline transition solvers agree") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double x0 = u(rng);
    const double x1 = x0 + 0.3 + 0.3 * u(rng);
    const double va0 = 0.4 + 0.6 * u(rng);
    const double va1 = 0.4 + 0.6 * u(rng);
    const double h0 = 0.9 + 0.3 * u(rng);
    const double h1 = 0.9 + 0.3 * u(rng);
    const StepContext a = make_step(0, x0, va0, h0);
    const StepContext b = make_step(1, x1, va1, h1);
    TransitionRecord closed, spline;
    try {
      closed = find_transition(a, b);
    } catch (const NoTransition&) {
      continue;  // geometry without an intersection: both solvers must agree on that
    }
    spline = find_transition_spline(a, b);
    CHECK(std::abs(closed.state.pos - spline.state.pos) < 1e-6);
    CHECK(std::abs(closed.state.vel - spline.state.vel) < 1e-6);
  }
}

TEST_CASE("symmetric adjacent steps meet exactly midway") {
  const StepContext a = make_step(0, 0.4, 0.6);
  const StepContext b = make_step(1, 0.8, 0.6);
  const TransitionRecord tr = find_transition(a, b);
  CHECK(tr.state.pos == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(tr.state.vel > 0.6);  // faster than the apex away from it
}

TEST_CASE("transition velocity lies on both manifolds") {
  const StepContext a = make_step(0, 0.2, 0.5, 1.1);
  const StepContext b = make_step(1, 0.7, 0.8, 0.95);
  const TransitionRecord tr = find_transition(a, b);
  CHECK(std::abs(sigma_apex(tr.state.pos, tr.state.vel, a.apex_velocity(), a.foot().x(),
                            a.omega())) < 1e-9);
  CHECK(std::abs(sigma_apex(tr.state.pos, tr.state.vel, b.apex_velocity(), b.foot().x(),
                            b.omega())) < 1e-9);
}

TEST_CASE("disjoint manifolds are reported") {
  // the second step is so much faster that its manifold clears the first one
  const StepContext a = make_step(0, 0.4, 0.2);
  const StepContext b = make_step(1, 0.5, 3.0);
  CHECK_THROWS_AS(find_transition(a, b), NoTransition);
}

TEST_CASE("lateral search matches a bisection oracle") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = 3.13;
  for (int k = 0; k < 100; ++k) {
    const double y0 = 0.4 * (u(rng) - 0.5);
    const double vy0 = 0.6 * (u(rng) - 0.5);
    const double t_apex = 0.1 + 0.4 * u(rng);
    const LateralSearchResult res = lateral_foot_search(y0, vy0, t_apex, w, y0);
    CHECK(res.iterations <= 20);
    CHECK(std::abs(res.residual) < 1e-4);

    // bisection on the monotone apex-velocity function
    double lo = y0 - 5.0, hi = y0 + 5.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (lateral_apex_velocity(y0, vy0, mid, w, t_apex) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    CHECK(std::abs(res.y_foot - 0.5 * (lo + hi)) < 1e-4);
  }
}

TEST_CASE("lateral search respects the foot range") {
  LateralSearchOptions opts;
  opts.y_min = -0.01;
  opts.y_max = 0.01;
  CHECK_THROWS_AS(lateral_foot_search(0.0, 0.5, 0.3, 3.13, 0.0, opts), OutOfRange);
}

TEST_CASE("nominal plan: counts, monotone progression, manifold consistency") {
  const int n = 6;
  const auto surfaces = flat_surfaces(n);
  const auto feet = line_feet(n);
  const std::vector<double> vels(n, 0.6);
  const StepPlan plan = generate_nominal(surfaces, feet, vels);
  REQUIRE(plan.steps.size() == n);
  REQUIRE(plan.transitions.size() == n - 1);
  REQUIRE(plan.step_trajectories.size() == n);

  const Trajectory flat = plan.flatten();
  for (std::size_t i = 1; i < flat.samples.size(); ++i) {
    CHECK(flat.samples[i].t > flat.samples[i - 1].t);
    CHECK(flat.samples[i].zeta >= flat.samples[i - 1].zeta);
  }
  // each step's own deviation stays on its nominal manifold
  for (int q = 0; q < n; ++q) {
    for (const TrajectorySample& s : plan.step_trajectories[q].samples) {
      CHECK(std::abs(s.sigma) < 1e-9);
    }
  }
  // transitions are continuous in position and velocity across the switch
  for (int q = 0; q + 1 < n; ++q) {
    const auto& last = plan.step_trajectories[q].samples.back();
    const auto& first = plan.step_trajectories[q + 1].samples.front();
    CHECK((last.state.pos - first.state.pos).norm() < 1e-9);
    CHECK((last.state.vel - first.state.vel).norm() < 1e-9);
  }
}

TEST_CASE("nominal plan keeps the lateral excursion bounded") {
  const int n = 12;
  const StepPlan plan = generate_nominal(flat_surfaces(n), line_feet(n),
                                         std::vector<double>(n, 0.6));
  double max_y = 0.0;
  for (const auto& traj : plan.step_trajectories) {
    for (const auto& s : traj.samples) max_y = std::max(max_y, std::abs(s.state.y()));
  }
  CHECK(max_y < 0.35);
  // feet alternate sides
  for (int q = 1; q < n; ++q) {
    if (std::abs(plan.steps[q].foot().y()) < 1e-9) continue;
    CHECK(plan.steps[q].foot().y() * plan.steps[q - 1].foot().y() <= 1e-12);
  }
}

TEST_CASE("steering with zero headings reproduces the straight-line plan") {
  const int n = 5;
  std::vector<Keyframe> kfs(n);
  const auto feet = line_feet(n);
  for (int i = 0; i < n; ++i) {
    kfs[i].foot = feet[i];
    kfs[i].theta = 0.0;
    kfs[i].apex_velocity = 0.6;
  }
  const StepPlan straight =
      generate_nominal(flat_surfaces(n), feet, std::vector<double>(n, 0.6));
  const StepPlan steered = steering_plan(kfs);
  REQUIRE(straight.transitions.size() == steered.transitions.size());
  for (std::size_t q = 0; q < straight.transitions.size(); ++q) {
    CHECK(std::abs(straight.transitions[q].state.pos - steered.transitions[q].state.pos) <
          1e-6);
    CHECK(std::abs(straight.transitions[q].state.vel - steered.transitions[q].state.vel) <
          1e-6);
  }
}

TEST_CASE("steering is equivariant under global rotation") {
  const int n = 6;
  std::vector<Keyframe> kfs(n);
  // feet on a circular arc with tangent headings, so each entry state can
  // reach the next foot
  const double radius = 2.0, dth = 0.2;
  for (int i = 0; i < n; ++i) {
    const double th = dth * i;
    kfs[i].foot = Vec3{radius * std::sin(th), radius * (1.0 - std::cos(th)), 0.0};
    kfs[i].theta = th;
    kfs[i].apex_velocity = 0.6;
  }
  const double phi = 0.7;
  const Eigen::Rotation2Dd R(phi);
  std::vector<Keyframe> rotated = kfs;
  for (Keyframe& k : rotated) {
    const Eigen::Vector2d p = R * Eigen::Vector2d(k.foot.x(), k.foot.y());
    k.foot = Vec3{p.x(), p.y(), k.foot.z()};
    k.theta += phi;
  }
  const StepPlan a = steering_plan(kfs);
  const StepPlan b = steering_plan(rotated);
  REQUIRE(a.step_trajectories.size() == b.step_trajectories.size());
  for (std::size_t q = 0; q < a.step_trajectories.size(); ++q) {
    const auto& sa = a.step_trajectories[q].samples;
    const auto& sb = b.step_trajectories[q].samples;
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); i += 50) {
      const Eigen::Vector2d p = R * Eigen::Vector2d(sa[i].state.x(), sa[i].state.y());
      CHECK(p.x() == doctest::Approx(sb[i].state.x()).epsilon(1e-8));
      CHECK(p.y() == doctest::Approx(sb[i].state.y()).epsilon(1e-8));
      CHECK(sa[i].state.z() == doctest::Approx(sb[i].state.z()).epsilon(1e-8));
    }
  }
}

TEST_CASE("multi-contact blend joins the step traces with C2 continuity") {
  const int n = 3;
  const StepPlan plan = generate_nominal(flat_surfaces(n), line_feet(n),
                                         std::vector<double>(n, 0.6));
  const Trajectory blended = multicontact_blend(plan.step_trajectories[0],
                                                plan.step_trajectories[1]);
  REQUIRE(blended.size() >= 4);
  const double t0 = blended.front().t;
  const double t1 = blended.back().t;

  auto sample_at = [](const Trajectory& tr, double t) {
    for (std::size_t i = 1; i < tr.samples.size(); ++i) {
      if (tr.samples[i].t >= t - 1e-12) {
        const auto& a = tr.samples[i - 1];
        const auto& b = tr.samples[i];
        const double u = (t - a.t) / (b.t - a.t);
        TrajectorySample out = a;
        out.state.pos = (1 - u) * a.state.pos + u * b.state.pos;
        out.state.vel = (1 - u) * a.state.vel + u * b.state.vel;
        return out;
      }
    }
    return tr.samples.back();
  };
  const TrajectorySample left = sample_at(plan.step_trajectories[0], t0);
  const TrajectorySample right = sample_at(plan.step_trajectories[1], t1);
  CHECK((blended.front().state.pos - left.state.pos).norm() < 1e-9);
  CHECK((blended.front().state.vel - left.state.vel).norm() < 1e-9);
  CHECK((blended.back().state.pos - right.state.pos).norm() < 1e-9);
  CHECK((blended.back().state.vel - right.state.vel).norm() < 1e-9);

  // interior acceleration continuity: second differences stay bounded
  double max_jerk = 0.0;
  for (std::size_t i = 2; i < blended.samples.size(); ++i) {
    const double dt = blended.samples[i].t - blended.samples[i - 1].t;
    if (dt < 1e-9) continue;
    const Vec3 a1 = (blended.samples[i].state.vel - blended.samples[i - 1].state.vel) / dt;
    const double dt0 = blended.samples[i - 1].t - blended.samples[i - 2].t;
    if (dt0 < 1e-9) continue;
    const Vec3 a0 =
        (blended.samples[i - 1].state.vel - blended.samples[i - 2].state.vel) / dt0;
    max_jerk = std::max(max_jerk, (a1 - a0).norm() / dt);
  }
  CHECK(max_jerk < 1e3);  // no impulsive acceleration steps inside the blend
}

TEST_CASE("degenerate blend windows are rejected") {
  Trajectory a, b;
  TrajectorySample s;
  a.samples.push_back(s);
  b.samples.push_back(s);
  CHECK_THROWS_AS(multicontact_blend(a, b), DegenerateWindow);
}

TEST_CASE("time parametrization is consistent with the sagittal speeds") {
  const int n = 3;
  const StepPlan plan = generate_nominal(flat_surfaces(n), line_feet(n),
                                         std::vector<double>(n, 0.6));
  const auto& samples = plan.step_trajectories[1].samples;
  const std::vector<double> ts = time_parametrize(samples);
  REQUIRE(ts.size() == samples.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(std::abs((ts[i] - ts[0]) - (samples[i].t - samples[0].t)) < 1e-6);
  }
}

TEST_CASE("time parametrization rejects stationary samples") {
  std::vector<TrajectorySample> samples(3);
  samples[0].state.vel = Vec3{0.5, 0, 0};
  samples[1].state.vel = Vec3::Zero();
  samples[2].state.vel = Vec3{0.5, 0, 0};
  samples[0].state.pos = Vec3{0, 0, 1};
  samples[1].state.pos = Vec3{0.1, 0, 1};
  samples[2].state.pos = Vec3{0.2, 0, 1};
  CHECK_THROWS_AS(time_parametrize(samples), ZeroVelocity);
}
