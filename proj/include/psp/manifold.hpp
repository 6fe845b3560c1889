#pragma once

#include <span>

#include "psp/types.hpp"

namespace psp {

// Analytical tangent (sigma) and cotangent (zeta) phase-space manifolds of the
// planar pendulum, plus the deviation metric built on them. sigma = 0 is the
// nominal trajectory; zeta is an arc-length-like progression coordinate whose
// isolines cross sigma-isolines orthogonally.

/// Tangent manifold through an arbitrary initial condition (x0, v0).
double sigma_general(double x, double v, double x0, double v0, double x_foot, double omega);

/// Simplified tangent manifold when the initial condition is the apex:
/// sigma = (v_apex^2/w^2) (v^2 - v_apex^2 - w^2 (x - x_foot)^2).
double sigma_apex(double x, double v, double v_apex, double x_foot, double omega);

/// Cotangent manifold zeta = zeta0 * (v/v0)^(w^2) * (x - x_foot)/(x0 - x_foot).
/// Defined on the forward-walking quadrant only (v > 0, x > x_foot); throws
/// DomainError elsewhere.
double zeta(double x, double v, double zeta0, double x0, double v0, double x_foot,
            double omega);

struct ManifoldGradients {
  Vec2 grad_sigma;  // d sigma / d(x, v)
  Vec2 grad_zeta;   // d zeta  / d(x, v)
};

/// Analytic gradients of sigma (apex form) and zeta at (x, v). The zeta seed
/// fixes the scaling (zeta0 at (x0, v0)). Forward-walking domain only.
ManifoldGradients manifold_gradients(double x, double v, double v_apex, double x_foot,
                                     double omega, double zeta0, double x0, double v0);

/// Phase-space sensitivity norm kappa = sqrt( 1/(z_trans - z_d) int sigma^2 dzeta ),
/// trapezoidal over the trace samples whose zeta lies in [zeta_d, zeta_trans].
double sensitivity_norm(std::span<const TrajectorySample> trace, double zeta_d,
                        double zeta_trans);

struct BundleSpec {
  double epsilon{0.0};     // sigma-units radius of the invariant bundle
  double zeta_trans{0.0};  // progression value of the next transition
};

/// Invariant-bundle membership |sigma| <= epsilon (closed bound).
bool in_invariant_bundle(double sigma, double epsilon);

/// Default bundle radius: the sigma of an apex-velocity perturbation `dv`.
double default_epsilon(double v_apex, double omega, double dv = 0.05);

}  // namespace psp
