#include "psp/multicontact.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace psp {

namespace {

Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

GraspMatrix build_grasp_matrix(const ContactPair& pair) {
  const Vec3 axis = pair.p_left - pair.p_right;
  const double len = axis.norm();
  if (len < 1e-12) {
    throw DegenerateContacts("contact points coincide; internal-force axis undefined");
  }
  const Vec3 n = axis / len;

  GraspMatrix G = GraspMatrix::Zero();
  G.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
  G.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();
  G.block<3, 3>(3, 0) = skew(pair.p_left - pair.p_com);
  G.block<3, 3>(3, 3) = skew(pair.p_right - pair.p_com);
  G.block<1, 3>(6, 0) = 0.5 * n.transpose();
  G.block<1, 3>(6, 3) = -0.5 * n.transpose();
  return G;
}

ReactionForces solve_reaction_forces(const WrenchPlusInternal& wrench, const GraspMatrix& G,
                                     double condition_cap) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > condition_cap) {
    throw IllConditioned("grasp matrix condition number exceeds cap");
  }
  svd.setThreshold(1e-10);

  Eigen::Matrix<double, 7, 1> rhs;
  rhs << wrench.force, wrench.moment, wrench.f_int;
  const Eigen::Matrix<double, 6, 1> f = svd.solve(rhs);

  ReactionForces out;
  out.f_left = f.head<3>();
  out.f_right = f.tail<3>();
  return out;
}

bool friction_check(const Vec3& force, const Vec3& surface_normal, double cone_half_angle) {
  const double fn = force.norm();
  if (fn < 1e-12) return true;  // zero force is trivially feasible
  const double cos_angle = force.dot(surface_normal) / fn;
  const double angle = std::acos(std::clamp(cos_angle, -1.0, 1.0));
  return angle <= cone_half_angle + 1e-12;
}

}  // namespace psp
