#include "psp/manifold.hpp"

#include <cmath>

namespace psp {

double sigma_general(double x, double v, double x0, double v0, double x_foot, double omega) {
  const double w2 = omega * omega;
  const double dx0 = x0 - x_foot;
  const double dx = x - x_foot;
  return dx0 * dx0 * (2.0 * v0 * v0 - v * v + w2 * (x - x0) * (x + x0 - 2.0 * x_foot)) -
         v0 * v0 * dx * dx + v0 * v0 * (v * v - v0 * v0) / w2;
}

double sigma_apex(double x, double v, double v_apex, double x_foot, double omega) {
  const double w2 = omega * omega;
  const double dx = x - x_foot;
  return (v_apex * v_apex / w2) * (v * v - v_apex * v_apex - w2 * dx * dx);
}

namespace {

void check_forward_domain(double x, double v, double x0, double v0, double x_foot) {
  if (!(v > 0.0) || !(x > x_foot) || !(v0 > 0.0) || !(x0 > x_foot)) {
    throw DomainError("cotangent manifold requires forward walking (v > 0, x > x_foot)");
  }
}

}  // namespace

double zeta(double x, double v, double zeta0, double x0, double v0, double x_foot,
            double omega) {
  check_forward_domain(x, v, x0, v0, x_foot);
  const double w2 = omega * omega;
  return zeta0 * std::pow(v / v0, w2) * (x - x_foot) / (x0 - x_foot);
}

ManifoldGradients manifold_gradients(double x, double v, double v_apex, double x_foot,
                                     double omega, double zeta0, double x0, double v0) {
  check_forward_domain(x, v, x0, v0, x_foot);
  const double w2 = omega * omega;
  const double va2 = v_apex * v_apex;

  ManifoldGradients g;
  g.grad_sigma = Vec2(-2.0 * va2 * (x - x_foot), 2.0 * va2 * v / w2);

  const double pow_term = std::pow(v / v0, w2);
  g.grad_zeta = Vec2(zeta0 * pow_term / (x0 - x_foot),
                     zeta0 * w2 * pow_term / v * (x - x_foot) / (x0 - x_foot));
  return g;
}

double sensitivity_norm(std::span<const TrajectorySample> trace, double zeta_d,
                        double zeta_trans) {
  if (!(zeta_trans > zeta_d)) {
    throw EmptyWindow("sensitivity norm needs zeta_trans > zeta_d");
  }
  // Trapezoid of sigma^2 over the samples inside [zeta_d, zeta_trans].
  double integral = 0.0;
  bool any = false;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& a = trace[i - 1];
    const auto& b = trace[i];
    if (b.zeta < zeta_d || a.zeta > zeta_trans) continue;
    const double za = std::max(a.zeta, zeta_d);
    const double zb = std::min(b.zeta, zeta_trans);
    if (zb <= za) continue;
    any = true;
    integral += 0.5 * (a.sigma * a.sigma + b.sigma * b.sigma) * (zb - za);
  }
  if (!any) {
    throw EmptyWindow("trajectory does not cover the [zeta_d, zeta_trans] window");
  }
  return std::sqrt(integral / (zeta_trans - zeta_d));
}

bool in_invariant_bundle(double sigma, double epsilon) {
  return std::abs(sigma) <= epsilon;
}

double default_epsilon(double v_apex, double omega, double dv) {
  const double va2 = v_apex * v_apex;
  const double vp = v_apex + dv;
  return (va2 / (omega * omega)) * (vp * vp - va2);
}

}  // namespace psp
