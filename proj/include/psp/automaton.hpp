#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psp/planner.hpp"
#include "psp/recovery.hpp"
#include "psp/types.hpp"

namespace psp {

// Hybrid execution of a step plan: discrete contact modes, guard-triggered
// switching, disturbance jumps, DP-policy recovery rolls and analytic foot
// re-planning, all sequenced by a deterministic fixed-step loop.

enum class ContactMode { left, right, dual };

struct HybridState {
  double zeta{0.0};
  ContactMode mode{ContactMode::left};
  PhaseState state{};
};

/// Guard predicate owned by the edge between step `from_step` and the next.
struct Guard {
  GuardKind kind{GuardKind::manifold};
  double threshold{0.0};
  int from_step{0};
};

enum class TransitionClass { autonomous, controlled, timed, disturbed };
enum class TransitionForm { switching, jump };

struct TransitionEvent {
  TransitionClass cls{TransitionClass::autonomous};
  TransitionForm form{TransitionForm::switching};
  HybridState pre{};
  HybridState post{};
  double t{0.0};
  std::string note;
};

/// True when the guard fires at `hs` (closed thresholds). The manifold guard
/// tests the next step's deviation sigma_{q+1} >= -threshold.
bool evaluate_guard(const Guard& guard, const HybridState& hs, const StepContext& next_ctx);

/// Applies a transition map to the hybrid state. Switching transitions keep
/// the continuous state and change only the mode; jump transitions add
/// `delta_v` to the velocity. Illegal mode edges (single -> single without
/// `allow_instantaneous`) throw InvalidEdge.
HybridState apply_transition(const HybridState& hs, TransitionClass cls, TransitionForm form,
                             ContactMode next_mode, const Vec3& delta_v = Vec3::Zero(),
                             bool allow_instantaneous = false);

struct AutomatonConfig {
  double dt{1e-3};
  GuardKind guard{GuardKind::manifold};
  // Invariant-bundle radius; <= 0 picks the per-step default.
  double epsilon{0.0};
  // Dual-contact window as a fraction of the incoming step's duration.
  // instantaneous_switch skips the dual mode entirely.
  bool instantaneous_switch{false};
  double blend_fraction{0.25};
  ContactMode first_mode{ContactMode::left};
  // Replanned feet farther than this from the transition point are rejected.
  double max_step_length{1.5};
  // Prototype for the per-step recovery tables; grid geometry (stage range,
  // x_foot, omega band, references) is rebound to each step.
  DpConfig dp{};
  double omega_halfwidth{0.3};
  // Optional policy-table cache directory; empty disables caching.
  std::filesystem::path table_cache{};
  // Extra integration time allowed past the nominal plan duration.
  double horizon_margin{5.0};
};

struct ReplanRecord {
  int step{0};             // step whose *next* foot was re-planned
  double t{0.0};
  Vec3 old_foot{Vec3::Zero()};
  Vec3 new_foot{Vec3::Zero()};
  double v_transition{0.0};
};

struct ExecutionTrace {
  Trajectory trace;                       // full sampled run
  std::vector<ContactMode> modes;         // per sample
  std::vector<int> sample_step;           // owning step per sample
  std::vector<TransitionEvent> events;
  std::vector<ReplanRecord> replans;
  std::vector<StepContext> realized_steps;
  std::vector<TransitionRecord> realized_transitions;
  bool dp_recovery_used{false};
};

/// Raised when a disturbance cannot be absorbed; carries the partial run.
struct UnrecoverableError : Unrecoverable {
  UnrecoverableError(const std::string& msg, ExecutionTrace partial)
      : Unrecoverable(msg), trace(std::move(partial)) {}
  ExecutionTrace trace;
};

/// Executes the plan under the given disturbances: nominal in-mode flow,
/// disturbed jumps at their configured progression fractions, DP-policy
/// recovery with boundary-layer saturation, and foot re-planning when the
/// transition state leaves the invariant bundle. Deterministic for identical
/// inputs. Requires a straight-line (zero-heading) plan.
ExecutionTrace run_automaton(const StepPlan& plan, std::span<const Disturbance> disturbances,
                             const AutomatonConfig& cfg = {});

}  // namespace psp
