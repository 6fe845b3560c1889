#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "psp/types.hpp"

namespace psp {

// Offline dynamic-programming recovery policy over a sagittal
// position-discretized stage grid, boundary-layer control saturation,
// Lyapunov recoverability bounds, disturbance classification and analytic
// foot re-planning.

struct ControlPair {
  double omega{0.0};  // [1/s]
  double tau_y{0.0};  // [N m]
};

struct DpConfig {
  // Stage grid: sagittal positions from stage_min to stage_max (inclusive).
  double stage_min{0.9};
  double stage_max{1.5};
  double stage_res{0.01};
  // Velocity state grid.
  double v_min{0.03};
  double v_max{1.5};
  double v_res{0.01};
  // Control grids.
  double omega_min{2.83};
  double omega_max{3.43};
  int omega_count{13};
  double tau_min{-3.0};
  double tau_max{3.0};
  int tau_count{25};
  // Cost weights and discount.
  double alpha{100.0};
  double beta{4e4};
  double gamma1{5.0};
  double gamma2{5.0};
  double eta{1.0};
  // References and geometry.
  double omega_ref{3.13};
  double tau_ref{0.0};
  double v_desired{0.6};
  double mass{1.0};
  double gravity{9.81};
  double apex_velocity{0.6};
  double x_foot{1.2};
  // Stage acceleration is evaluated at the stage start by default; midpoint
  // evaluation available behind this flag.
  bool midpoint_acceleration{false};
  // Worker threads for the per-stage cell backups.
  int workers{1};

  void validate() const;
  int stage_count() const;     // number of stage nodes (>= 2)
  int velocity_count() const;  // number of velocity nodes (>= 1)
  double stage_position(int n) const { return stage_min + n * stage_res; }
  double velocity(int j) const { return v_min + j * v_res; }
  std::uint64_t fingerprint() const;
};

struct PolicyCell {
  double omega{0.0};
  double tau_y{0.0};
  double value{0.0};
  std::int32_t next_velocity{-1};  // successor velocity index; -1 at terminal / infeasible
  bool feasible{false};
};

/// Immutable once built; safe for concurrent lookups.
struct PolicyTable {
  DpConfig config{};
  std::uint64_t config_fingerprint{0};
  std::vector<PolicyCell> cells;  // (stage-major) stage_count x velocity_count

  const PolicyCell& cell(int stage, int v_index) const {
    return cells[static_cast<std::size_t>(stage) * config.velocity_count() + v_index];
  }
};

/// Backward value iteration over the stage grid (App.-H style position
/// discretization). Infeasible cells carry value = +inf.
PolicyTable build_policy_table(const DpConfig& cfg);

struct PolicyLookup {
  ControlPair control{};
  double value{0.0};
  int stage{0};
  int v_index{0};
  bool feasible{false};
};

/// Nearest-cell retrieval. Throws OutOfTable outside the grid ranges.
PolicyLookup lookup_policy(const PolicyTable& table, double x, double v);

/// Versioned binary persistence with the config fingerprint embedded.
void save_policy_table(const PolicyTable& table, const std::filesystem::path& path);
PolicyTable load_policy_table(const std::filesystem::path& path);

/// Loads the cached table when its fingerprint matches cfg; rebuilds (and
/// rewrites the cache) otherwise.
PolicyTable load_or_build(const DpConfig& cfg, const std::filesystem::path& cache_path);

/// Boundary-layer saturation: outside |sigma| > epsilon the DP control passes
/// through; inside, a linear blend of the bundle-entry and reference controls.
ControlPair saturate_control(const ControlPair& u_dp, double sigma, double epsilon,
                             const ControlPair& u_eps, const ControlPair& u_ref);

/// Rate of V = sigma^2/2 along the controlled pendulum flow:
/// Vdot = -2 v_apex^2 sigma v tau_y / (m g). Independent of omega.
double lyapunov_rate(double v, double sigma, double tau_y, double v_apex, double mass,
                     double gravity);

/// Closed-form sigma rate (Vdot / sigma).
double sigma_rate(double v, double tau_y, double v_apex, double mass, double gravity);

/// Maximum recoverable tube radius sigma0_max = eps + (sqrt2/2) nu dx tau_y,
/// nu = 2 sqrt2 v_apex^2 / (m g).
double max_tube_radius(double epsilon, double x_trans, double x0, double tau_y,
                       double v_apex, double mass, double gravity);

struct VelocityInterval {
  double v_lo{0.0};
  double v_hi{0.0};
};

struct RecoverabilityEstimate {
  double epsilon{0.0};
  double zeta_trans{0.0};  // terminal stage position
  // Per stage node: recoverable velocity intervals (grid-resolution runs).
  std::vector<std::vector<VelocityInterval>> intervals;
};

/// Rolls out the stored DP policy from every grid cell; a cell is recoverable
/// iff the rollout reaches the terminal stage inside B(epsilon).
RecoverabilityEstimate estimate_recoverability_bundle(const PolicyTable& table,
                                                      double epsilon);

/// Supremum-control recoverability: integrate with tau_y = tau_max sign(sigma)
/// from (x0, v0) to the terminal stage position and test |sigma| <= epsilon.
bool recoverable_supremum(double x0, double v0, const DpConfig& cfg, double epsilon,
                          double dt = 1e-4);

/// Re-planned sagittal foot placement delivering the requested next apex
/// velocity from the disturbed transition state (Capture Point when
/// v_apex_next = 0). Throws InfeasibleApex when v_trans < v_apex_next.
double replan_foot(double x_trans, double v_trans_disturbed, double v_apex_next,
                   double omega);

enum class DisturbanceCategory { none, a1, a2, a3, a4 };

struct DisturbanceReport {
  double delta_v{0.0};
  int direction{0};             // sign of the velocity jump
  bool crossed_asymptote{false};  // post-state on the other side of v = w(x - xf)
  bool direction_flipped{false};  // sign(v) changed
  DisturbanceCategory category{DisturbanceCategory::none};
};

/// Fig.-9 style classification of an instantaneous velocity jump at fixed
/// position.
DisturbanceReport classify_disturbance(const PlanarState& pre, const PlanarState& post,
                                       const StepContext& ctx);

/// Scenario-level disturbance description: applied to a given step at a given
/// fraction of its progression, as an instantaneous velocity jump.
struct Disturbance {
  int step_index{0};
  double fraction{0.5};  // of the step's sagittal progression
  Vec3 delta_v{Vec3::Zero()};
};

}  // namespace psp
