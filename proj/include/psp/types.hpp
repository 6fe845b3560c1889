#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace psp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Error hierarchy. Planning and control failures are reported as exceptions
// carrying enough context to diagnose the offending scenario.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSurface : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct HorizonExceeded : Error {
  using Error::Error;
};
struct NoTransition : Error {
  using Error::Error;
};
struct NotConverged : Error {
  using Error::Error;
};
struct OutOfRange : Error {
  using Error::Error;
};
struct DegenerateWindow : Error {
  using Error::Error;
};
struct ZeroVelocity : Error {
  using Error::Error;
};
struct DegenerateContacts : Error {
  using Error::Error;
};
struct IllConditioned : Error {
  using Error::Error;
};
struct EmptyWindow : Error {
  using Error::Error;
};
struct OutOfTable : Error {
  using Error::Error;
};
struct InfeasibleApex : Error {
  using Error::Error;
};
struct InvalidEdge : Error {
  using Error::Error;
};
struct Unrecoverable : Error {
  using Error::Error;
};
struct InvalidRange : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Core value types
// ---------------------------------------------------------------------------

/// Full center-of-mass phase-space state: position and velocity in 3D.
struct PhaseState {
  Vec3 pos{Vec3::Zero()};
  Vec3 vel{Vec3::Zero()};

  double x() const { return pos.x(); }
  double y() const { return pos.y(); }
  double z() const { return pos.z(); }
  double vx() const { return vel.x(); }
  double vy() const { return vel.y(); }
  double vz() const { return vel.z(); }

  bool finite() const { return pos.allFinite() && vel.allFinite(); }
};

/// Planar slice of the phase state (sagittal or lateral axis).
struct PlanarState {
  double pos{0.0};
  double vel{0.0};
};

/// Piecewise-linear CoM surface: z = a*x + b*y + c.
struct SurfaceParams {
  double a{0.0};  // sagittal slope
  double b{0.0};  // lateral slope
  double c{0.0};  // height bias [m]
};

/// Flywheel moments about the three body axes.
struct FlywheelTorque {
  double tau_x{0.0};
  double tau_y{0.0};
  double tau_z{0.0};
};

/// Continuous control applied during a flow segment.
struct ControlInput {
  double omega{0.0};  // asymptotic slope actually commanded [1/s]
  FlywheelTorque torque{};
};

/// Per-step parameters tying a contact to its CoM surface. Immutable once
/// built; construct through make() so the slope/apex invariants hold.
class StepContext {
 public:
  static StepContext make(int index, const Vec3& foot, const SurfaceParams& surface,
                          double apex_velocity, double mass = 1.0, double gravity = 9.81);

  int index() const { return index_; }
  const Vec3& foot() const { return foot_; }
  const SurfaceParams& surface() const { return surface_; }
  double omega() const { return omega_; }
  double mass() const { return mass_; }
  double gravity() const { return gravity_; }
  double apex_velocity() const { return apex_velocity_; }
  double z_apex() const { return z_apex_; }

  /// Surface height directly above (x, y).
  double surface_z(double x, double y) const {
    return surface_.a * x + surface_.b * y + surface_.c;
  }

 private:
  StepContext() = default;

  int index_{0};
  Vec3 foot_{Vec3::Zero()};
  SurfaceParams surface_{};
  double omega_{0.0};
  double mass_{1.0};
  double gravity_{9.81};
  double apex_velocity_{0.0};
  double z_apex_{0.0};
};

/// One sample of an executed or planned trajectory.
struct TrajectorySample {
  double t{0.0};      // time [s]
  double zeta{0.0};   // phase progression
  PhaseState state{};
  ControlInput control{};
  double sigma{0.0};  // tangent-manifold deviation of the owning step
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  bool empty() const { return samples.empty(); }
  const TrajectorySample& front() const { return samples.front(); }
  const TrajectorySample& back() const { return samples.back(); }
  std::size_t size() const { return samples.size(); }
};

}  // namespace psp
