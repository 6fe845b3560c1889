#pragma once

#include "psp/types.hpp"

namespace psp {

// Dual-contact reaction-force resolution. Two point feet carry a 6D CoM
// wrench plus one internal-tension degree of freedom along the inter-foot
// axis; the 7x6 grasp matrix maps stacked foot forces to (wrench, f_int).

struct ContactPair {
  Vec3 p_left{Vec3::Zero()};
  Vec3 p_right{Vec3::Zero()};
  Vec3 p_com{Vec3::Zero()};
};

struct WrenchPlusInternal {
  Vec3 force{Vec3::Zero()};   // f_com + m g  [N]
  Vec3 moment{Vec3::Zero()};  // tau_com      [N m]
  double f_int{0.0};          // internal tension along the inter-foot axis [N]
};

using GraspMatrix = Eigen::Matrix<double, 7, 6>;

/// Rows 1-3 sum forces, rows 4-6 sum moments (p_foot_i - p_com) x f_i, row 7
/// is the half-difference projection onto the unit left-to-right axis.
/// Throws DegenerateContacts when the feet coincide.
GraspMatrix build_grasp_matrix(const ContactPair& pair);

struct ReactionForces {
  Vec3 f_left{Vec3::Zero()};
  Vec3 f_right{Vec3::Zero()};
};

/// Minimum-norm pseudo-inverse solution of G * f = (wrench, f_int).
/// Throws IllConditioned when the grasp matrix condition number exceeds the cap.
ReactionForces solve_reaction_forces(const WrenchPlusInternal& wrench, const GraspMatrix& G,
                                     double condition_cap = 1e8);

/// True iff the force lies inside (or on) the friction cone about `normal`.
bool friction_check(const Vec3& force, const Vec3& surface_normal, double cone_half_angle);

}  // namespace psp
