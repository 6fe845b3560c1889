#include "psp/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include "psp/manifold.hpp"

namespace psp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint32_t kTableMagic = 0x50535054;  // "PSPT"
constexpr std::uint32_t kTableVersion = 1;
}  // namespace

void DpConfig::validate() const {
  if (!(stage_max > stage_min) || !(stage_res > 0.0)) {
    throw ConfigError("DP stage grid is empty");
  }
  if (!(v_max > v_min) || !(v_res > 0.0)) {
    throw ConfigError("DP velocity grid is empty");
  }
  if (omega_count < 1 || !(omega_max >= omega_min) || omega_min <= 0.0) {
    throw ConfigError("DP omega grid invalid");
  }
  if (tau_count < 1 || !(tau_max >= tau_min)) {
    throw ConfigError("DP torque range invalid");
  }
  if (eta < 0.0 || eta > 1.0) throw ConfigError("discount must be in [0, 1]");
  if (alpha < 0.0 || beta < 0.0 || gamma1 < 0.0 || gamma2 < 0.0) {
    throw ConfigError("cost weights must be non-negative");
  }
  if (mass <= 0.0 || gravity <= 0.0) throw ConfigError("mass/gravity must be positive");
  if (workers < 1) throw ConfigError("worker count must be >= 1");
}

int DpConfig::stage_count() const {
  return static_cast<int>(std::llround((stage_max - stage_min) / stage_res)) + 1;
}

int DpConfig::velocity_count() const {
  return static_cast<int>(std::llround((v_max - v_min) / v_res)) + 1;
}

std::uint64_t DpConfig::fingerprint() const {
  // FNV-1a over the packed field bytes, in declaration order.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const double doubles[] = {stage_min, stage_max, stage_res, v_min,    v_max,
                            v_res,     omega_min, omega_max, tau_min,  tau_max,
                            alpha,     beta,      gamma1,    gamma2,   eta,
                            omega_ref, tau_ref,   v_desired, mass,     gravity,
                            apex_velocity, x_foot};
  mix(doubles, sizeof(doubles));
  const std::int32_t ints[] = {omega_count, tau_count,
                               midpoint_acceleration ? 1 : 0};
  mix(ints, sizeof(ints));
  return h;
}

// ---------------------------------------------------------------------------
// Policy table build
// ---------------------------------------------------------------------------

PolicyTable build_policy_table(const DpConfig& cfg) {
  cfg.validate();
  const int ns = cfg.stage_count();
  const int nv = cfg.velocity_count();
  const double mg = cfg.mass * cfg.gravity;
  const double dx = cfg.stage_res;

  std::vector<double> omegas(cfg.omega_count);
  for (int i = 0; i < cfg.omega_count; ++i) {
    omegas[i] = cfg.omega_count == 1
                    ? cfg.omega_min
                    : cfg.omega_min + (cfg.omega_max - cfg.omega_min) * i /
                                          (cfg.omega_count - 1);
  }

  PolicyTable table;
  table.config = cfg;
  table.config_fingerprint = cfg.fingerprint();
  table.cells.assign(static_cast<std::size_t>(ns) * nv, PolicyCell{});

  auto sigma_at = [&](double x, double v) {
    return sigma_apex(x, v, cfg.apex_velocity, cfg.x_foot, cfg.omega_ref);
  };

  // Terminal stage: V_N(v) = alpha (v - v_des)^2.
  for (int j = 0; j < nv; ++j) {
    PolicyCell& c = table.cells[static_cast<std::size_t>(ns - 1) * nv + j];
    const double dv = cfg.velocity(j) - cfg.v_desired;
    c.value = cfg.alpha * dv * dv;
    c.omega = cfg.omega_ref;
    c.tau_y = cfg.tau_ref;
    c.next_velocity = -1;
    c.feasible = true;
  }

  // Backward sweep. Within a stage, cell backups are independent.
  for (int n = ns - 2; n >= 0; --n) {
    const double x_n = cfg.stage_position(n);
    const double x_n1 = cfg.stage_position(n + 1);
    const double x_eval = cfg.midpoint_acceleration ? x_n + 0.5 * dx : x_n;
    const PolicyCell* next_row = &table.cells[static_cast<std::size_t>(n + 1) * nv];
    PolicyCell* row = &table.cells[static_cast<std::size_t>(n) * nv];

    auto backup_range = [&](int j_lo, int j_hi) {
      for (int j = j_lo; j < j_hi; ++j) {
        const double v_n = cfg.velocity(j);
        const double sig_n = sigma_at(x_n, v_n);
        double best_value = kInf;
        PolicyCell best{};
        for (int k = 0; k < nv; ++k) {
          if (!next_row[k].feasible || !std::isfinite(next_row[k].value)) continue;
          const double v_n1 = cfg.velocity(k);
          const double accel = (v_n1 * v_n1 - v_n * v_n) / (2.0 * dx);
          const double sig_n1 = sigma_at(x_n1, v_n1);
          const double sigma_term = 0.5 * cfg.beta * (sig_n * sig_n + sig_n1 * sig_n1);
          for (double omega : omegas) {
            const double tau =
                mg * (x_eval - cfg.x_foot) - mg * accel / (omega * omega);
            if (tau < cfg.tau_min || tau > cfg.tau_max) continue;
            const double dw = omega - cfg.omega_ref;
            const double stage_cost =
                dx * (sigma_term + cfg.gamma1 * tau * tau + cfg.gamma2 * dw * dw);
            const double total = stage_cost + cfg.eta * next_row[k].value;
            if (total < best_value) {
              best_value = total;
              best.omega = omega;
              best.tau_y = tau;
              best.next_velocity = k;
            }
          }
        }
        if (std::isfinite(best_value)) {
          best.value = best_value;
          best.feasible = true;
          row[j] = best;
        } else {
          row[j] = PolicyCell{};
          row[j].value = kInf;
          row[j].feasible = false;
          row[j].next_velocity = -1;
        }
      }
    };

    if (cfg.workers > 1) {
      std::vector<std::thread> pool;
      const int chunk = (nv + cfg.workers - 1) / cfg.workers;
      for (int w = 0; w < cfg.workers; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(nv, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(backup_range, lo, hi);
      }
      for (auto& th : pool) th.join();
    } else {
      backup_range(0, nv);
    }
  }
  return table;
}

PolicyLookup lookup_policy(const PolicyTable& table, double x, double v) {
  const DpConfig& cfg = table.config;
  if (x < cfg.stage_min - 0.5 * cfg.stage_res || x > cfg.stage_max + 0.5 * cfg.stage_res ||
      v < cfg.v_min - 0.5 * cfg.v_res || v > cfg.v_max + 0.5 * cfg.v_res) {
    throw OutOfTable("query outside the policy table ranges");
  }
  const int n = std::clamp(
      static_cast<int>(std::llround((x - cfg.stage_min) / cfg.stage_res)), 0,
      cfg.stage_count() - 1);
  const int j = std::clamp(static_cast<int>(std::llround((v - cfg.v_min) / cfg.v_res)), 0,
                           cfg.velocity_count() - 1);
  const PolicyCell& c = table.cell(n, j);
  PolicyLookup out;
  out.control = {c.omega, c.tau_y};
  out.value = c.value;
  out.stage = n;
  out.v_index = j;
  out.feasible = c.feasible;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_policy_table(const PolicyTable& table, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open policy table file for writing: " + path.string());
  write_pod(os, kTableMagic);
  write_pod(os, kTableVersion);
  write_pod(os, table.config_fingerprint);
  write_pod(os, table.config);
  const std::uint64_t count = table.cells.size();
  write_pod(os, count);
  os.write(reinterpret_cast<const char*>(table.cells.data()),
           static_cast<std::streamsize>(count * sizeof(PolicyCell)));
  if (!os) throw Error("policy table write failed: " + path.string());
}

PolicyTable load_policy_table(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open policy table file: " + path.string());
  std::uint32_t magic = 0, version = 0;
  read_pod(is, magic);
  read_pod(is, version);
  if (magic != kTableMagic || version != kTableVersion) {
    throw Error("unrecognized policy table format: " + path.string());
  }
  PolicyTable table;
  read_pod(is, table.config_fingerprint);
  read_pod(is, table.config);
  std::uint64_t count = 0;
  read_pod(is, count);
  table.cells.resize(count);
  is.read(reinterpret_cast<char*>(table.cells.data()),
          static_cast<std::streamsize>(count * sizeof(PolicyCell)));
  if (!is) throw Error("policy table read failed: " + path.string());
  return table;
}

PolicyTable load_or_build(const DpConfig& cfg, const std::filesystem::path& cache_path) {
  if (std::filesystem::exists(cache_path)) {
    try {
      PolicyTable cached = load_policy_table(cache_path);
      if (cached.config_fingerprint == cfg.fingerprint()) return cached;
    } catch (const Error&) {
      // fall through to rebuild
    }
  }
  PolicyTable fresh = build_policy_table(cfg);
  std::filesystem::create_directories(cache_path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : cache_path.parent_path());
  save_policy_table(fresh, cache_path);
  return fresh;
}

// ---------------------------------------------------------------------------
// Control laws and bounds
// ---------------------------------------------------------------------------

ControlPair saturate_control(const ControlPair& u_dp, double sigma, double epsilon,
                             const ControlPair& u_eps, const ControlPair& u_ref) {
  if (!(epsilon > 0.0)) throw DomainError("boundary layer epsilon must be positive");
  const double mag = std::abs(sigma);
  if (mag > epsilon) return u_dp;
  const double w = mag / epsilon;
  return {w * u_eps.omega + (1.0 - w) * u_ref.omega,
          w * u_eps.tau_y + (1.0 - w) * u_ref.tau_y};
}

double sigma_rate(double v, double tau_y, double v_apex, double mass, double gravity) {
  return -2.0 * v_apex * v_apex * v * tau_y / (mass * gravity);
}

double lyapunov_rate(double v, double sigma, double tau_y, double v_apex, double mass,
                     double gravity) {
  return sigma * sigma_rate(v, tau_y, v_apex, mass, gravity);
}

double max_tube_radius(double epsilon, double x_trans, double x0, double tau_y,
                       double v_apex, double mass, double gravity) {
  const double nu = 2.0 * std::sqrt(2.0) * v_apex * v_apex / (mass * gravity);
  return epsilon + 0.5 * std::sqrt(2.0) * nu * (x_trans - x0) * tau_y;
}

// ---------------------------------------------------------------------------
// Recoverability
// ---------------------------------------------------------------------------

RecoverabilityEstimate estimate_recoverability_bundle(const PolicyTable& table,
                                                      double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  const DpConfig& cfg = table.config;
  const int ns = cfg.stage_count();
  const int nv = cfg.velocity_count();

  auto sigma_at = [&](double x, double v) {
    return sigma_apex(x, v, cfg.apex_velocity, cfg.x_foot, cfg.omega_ref);
  };

  RecoverabilityEstimate est;
  est.epsilon = epsilon;
  est.zeta_trans = cfg.stage_max;
  est.intervals.resize(ns);

  for (int n = 0; n < ns; ++n) {
    std::vector<bool> recoverable(nv, false);
    for (int j = 0; j < nv; ++j) {
      // On-grid rollout following the stored optimal successors.
      int stage = n;
      int vi = j;
      bool ok = true;
      while (stage < ns - 1) {
        const PolicyCell& c = table.cell(stage, vi);
        if (!c.feasible || c.next_velocity < 0) {
          ok = false;
          break;
        }
        vi = c.next_velocity;
        ++stage;
      }
      if (!ok) continue;
      recoverable[j] =
          std::abs(sigma_at(cfg.stage_position(ns - 1), cfg.velocity(vi))) <= epsilon;
    }
    // Contiguous grid runs become velocity intervals.
    for (int j = 0; j < nv;) {
      if (!recoverable[j]) {
        ++j;
        continue;
      }
      int k = j;
      while (k + 1 < nv && recoverable[k + 1]) ++k;
      est.intervals[n].push_back({cfg.velocity(j), cfg.velocity(k)});
      j = k + 1;
    }
  }
  return est;
}

bool recoverable_supremum(double x0, double v0, const DpConfig& cfg, double epsilon,
                          double dt) {
  const double mg = cfg.mass * cfg.gravity;
  const double w_ref = cfg.omega_ref;
  auto sigma_at = [&](double x, double v) {
    return sigma_apex(x, v, cfg.apex_velocity, cfg.x_foot, cfg.omega_ref);
  };
  auto accel = [&](double x, double tau) {
    return w_ref * w_ref * (x - cfg.x_foot) - w_ref * w_ref / mg * tau;
  };

  double x = x0, v = v0, t = 0.0;
  const double horizon = 10.0;
  while (x < cfg.stage_max && t < horizon) {
    if (v <= 0.0) return false;  // stalled before the transition
    const double tau = cfg.tau_max * (sigma_at(x, v) >= 0.0 ? 1.0 : -1.0);
    // RK4 on (x, v) with tau held over the step.
    const double k1x = v, k1v = accel(x, tau);
    const double k2x = v + 0.5 * dt * k1v, k2v = accel(x + 0.5 * dt * k1x, tau);
    const double k3x = v + 0.5 * dt * k2v, k3v = accel(x + 0.5 * dt * k2x, tau);
    const double k4x = v + dt * k3v, k4v = accel(x + dt * k3x, tau);
    x += dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    t += dt;
  }
  if (t >= horizon) return false;
  return std::abs(sigma_at(x, v)) <= epsilon;
}

// ---------------------------------------------------------------------------
// Foot re-planning and disturbance classification
// ---------------------------------------------------------------------------

double replan_foot(double x_trans, double v_trans_disturbed, double v_apex_next,
                   double omega) {
  const double d = v_trans_disturbed * v_trans_disturbed - v_apex_next * v_apex_next;
  if (d < 0.0) {
    throw InfeasibleApex(
        "requested next apex velocity exceeds what forward foot placement can deliver");
  }
  return x_trans + std::sqrt(d) / omega;
}

DisturbanceReport classify_disturbance(const PlanarState& pre, const PlanarState& post,
                                       const StepContext& ctx) {
  DisturbanceReport rep;
  rep.delta_v = post.vel - pre.vel;
  rep.direction = rep.delta_v > 0.0 ? 1 : (rep.delta_v < 0.0 ? -1 : 0);

  const double asym_pre = pre.vel - ctx.omega() * (pre.pos - ctx.foot().x());
  const double asym_post = post.vel - ctx.omega() * (post.pos - ctx.foot().x());
  rep.crossed_asymptote = (asym_pre > 0.0) != (asym_post > 0.0);
  rep.direction_flipped =
      (pre.vel > 0.0) != (post.vel > 0.0) && pre.vel != 0.0 && post.vel != 0.0;

  if (rep.direction == 0) {
    rep.category = DisturbanceCategory::none;
  } else if (rep.direction > 0) {
    rep.category =
        rep.crossed_asymptote ? DisturbanceCategory::a2 : DisturbanceCategory::a1;
  } else {
    rep.category =
        rep.direction_flipped ? DisturbanceCategory::a4 : DisturbanceCategory::a3;
  }
  return rep;
}

}  // namespace psp
