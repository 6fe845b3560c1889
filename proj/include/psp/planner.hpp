#pragma once

#include <optional>
#include <span>

#include "psp/pipm.hpp"
#include "psp/types.hpp"

namespace psp {

// Keyframe-driven nominal trajectory generation: per-step sigma = 0 manifolds
// stitched at analytically solved step transitions, lateral foot placement by
// secant search, steering through per-step local frames, and quintic
// multi-contact blending of the switch instants.

/// Per-step gait target: apex velocity, foot placement, heading.
struct Keyframe {
  double apex_velocity{0.0};  // [m/s]
  Vec3 foot{Vec3::Zero()};    // [m]
  double theta{0.0};          // heading [rad], in (-pi, pi]
};

enum class GuardKind { position, velocity, progression, manifold };

/// Solved switch between two adjacent steps' nominal manifolds.
struct TransitionRecord {
  double zeta_trans{0.0};  // progression value at the switch
  PlanarState state{};     // sagittal (x, v) at the switch, in the solve frame
  double t{0.0};           // plan time of the switch [s]
  GuardKind guard_kind{GuardKind::position};
};

struct StepPlan {
  std::vector<StepContext> steps;          // planning-frame contexts
  std::vector<TransitionRecord> transitions;
  std::vector<Trajectory> step_trajectories;  // world-frame sample traces
  std::vector<double> headings;               // per-step heading [rad]

  /// Concatenated samples of all steps, strictly increasing in t and zeta.
  Trajectory flatten() const;
};

/// Intersection of two adjacent steps' sigma = 0 conics, closed form.
/// Throws NoTransition when the manifolds do not meet with v > 0 between
/// the apices.
TransitionRecord find_transition(const StepContext& step_q, const StepContext& step_q1);

/// Same intersection via cubic-spline fits of the sampled manifold curves and
/// root-finding on their difference. Cross-check path for find_transition.
TransitionRecord find_transition_spline(const StepContext& step_q, const StepContext& step_q1,
                                        int samples_per_curve = 400);

struct LateralSearchOptions {
  double y_min{-1e9};          // feasible foot range [m]
  double y_max{1e9};
  int max_iter{20};
  double v_tol{1e-4};          // |vy| tolerance at the sagittal apex [m/s]
  double seed_delta{1e-3};     // perturbation seeding the first secant slope [m]
};

struct LateralSearchResult {
  double y_foot{0.0};
  int iterations{0};
  double residual{0.0};  // |vy_apex| at the returned placement
};

/// Secant search for the lateral foot placement that zeroes the lateral
/// velocity at the sagittal apex instant t_apex (step timing fixed by the
/// sagittal transition). Throws NotConverged / OutOfRange.
LateralSearchResult lateral_foot_search(double y_init, double vy_init, double t_apex,
                                        double omega, double y_foot_guess,
                                        const LateralSearchOptions& opts = {});

struct NominalOptions {
  double dt{1e-3};
  bool lateral_search{true};    // pick y_foot by Algorithm-2 search
  double y0{0.0};               // initial lateral state
  double vy0{0.0};
  std::optional<double> x0{};   // initial sagittal state; default: first apex
  std::optional<double> v0{};
  double single_step_time{0.5}; // trace length when there is no outgoing transition [s]
  LateralSearchOptions lateral{};
  double mass{1.0};
  double gravity{9.81};
};

/// Algorithm-1 nominal plan: one sigma = 0 arc per step, transitions solved in
/// closed form, lateral dynamics synchronized to the sagittal timing.
StepPlan generate_nominal(std::span<const SurfaceParams> surfaces, std::span<const Vec3> feet,
                          std::span<const double> apex_velocities,
                          const NominalOptions& opts = {});

struct SteeringOptions {
  double apex_height{1.0};               // z_apex above each foot [m]
  std::vector<SurfaceParams> surfaces;   // optional per-step local-frame surfaces
  NominalOptions nominal{};
};

/// Steerable walking: per-step local frames from the keyframe headings, local
/// sagittal planning + lateral search, results transformed to the global frame.
StepPlan steering_plan(std::span<const Keyframe> keyframes, const SteeringOptions& opts = {});

/// Quintic blend replacing the instantaneous switch between two step traces.
/// The window spans time_fraction of step q's duration, centered on the
/// junction; boundary position/velocity/acceleration are matched on each side.
Trajectory multicontact_blend(const Trajectory& traj_q, const Trajectory& traj_q1,
                              double time_fraction = 0.25, double dt = 1e-3);

/// Flattened plan with every transition replaced by its multi-contact blend.
/// `blend_step` marks each flattened sample with the step index that owns it
/// (dual-contact samples carry the incoming step).
Trajectory blend_plan(const StepPlan& plan, double time_fraction = 0.25, double dt = 1e-3);

/// Re-derive timestamps from the sagittal trace via dt = dx/v (trapezoid).
/// Throws ZeroVelocity when |v| < 1e-6 on a single-contact arc.
std::vector<double> time_parametrize(std::span<const TrajectorySample> trace);

}  // namespace psp
