#include "psp/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace psp {

using nlohmann::json;

Terrain generate_terrain(std::uint64_t seed, int steps, double dh_min, double dh_max,
                         double tilt, double step_length) {
  if (!(dh_min > 0.0) || !(dh_max > dh_min)) {
    throw InvalidRange("terrain height band requires 0 < dh_min < dh_max");
  }
  if (steps < 1) throw InvalidRange("terrain needs at least one step");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(dh_min, dh_max);
  std::uniform_int_distribution<int> coin(0, 1);

  Terrain terr;
  terr.seed = seed;
  terr.step_length = step_length;
  terr.heights.resize(steps);
  terr.tilts.resize(steps);
  double h = 0.0;
  for (int k = 0; k < steps; ++k) {
    terr.heights[k] = h;
    terr.tilts[k] = coin(rng) ? tilt : -tilt;
    const double dh = mag(rng) * (coin(rng) ? 1.0 : -1.0);
    h += dh;
  }
  return terr;
}

TerrainSurfaces surfaces_from_terrain(const Terrain& terrain, double apex_height) {
  if (!(apex_height > 0.0)) throw InvalidRange("apex height must be positive");
  TerrainSurfaces out;
  const int n = static_cast<int>(terrain.heights.size());
  out.surfaces.resize(n);
  out.feet.resize(n);
  for (int k = 0; k < n; ++k) {
    const double xf = k * terrain.step_length;
    out.feet[k] = Vec3{xf, 0.0, terrain.heights[k]};
    SurfaceParams s;
    s.a = std::tan(terrain.tilts[k]);
    s.b = 0.0;
    // apex sits apex_height vertically above the foot: a*xf + c - zf = z_apex
    s.c = terrain.heights[k] + apex_height - s.a * xf;
    out.surfaces[k] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON scenario schema
// ---------------------------------------------------------------------------

namespace {

const char* guard_name(GuardKind k) {
  switch (k) {
    case GuardKind::position: return "position";
    case GuardKind::velocity: return "velocity";
    case GuardKind::progression: return "progression";
    case GuardKind::manifold: return "manifold";
  }
  return "manifold";
}

GuardKind guard_from_name(const std::string& s) {
  if (s == "position") return GuardKind::position;
  if (s == "velocity") return GuardKind::velocity;
  if (s == "progression") return GuardKind::progression;
  if (s == "manifold") return GuardKind::manifold;
  throw ConfigError("unknown guard kind: " + s);
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(std::string("field '") + field + "' must be a 3-element array");
  }
  return Vec3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string scenario_to_json(const Scenario& scn) {
  json j;
  j["name"] = scn.name;
  j["seed"] = scn.seed;
  j["apex_height_m"] = scn.apex_height;
  j["apex_velocity_mps"] = scn.apex_velocity;
  if (!scn.apex_velocities.empty()) j["apex_velocities_mps"] = scn.apex_velocities;
  if (scn.terrain) {
    const TerrainSpec& t = *scn.terrain;
    j["terrain"] = {{"seed", t.seed},        {"steps", t.steps},
                    {"dh_min_m", t.dh_min},  {"dh_max_m", t.dh_max},
                    {"tilt_rad", t.tilt},    {"step_length_m", t.step_length}};
  }
  if (scn.circle) {
    const CircleSpec& c = *scn.circle;
    j["circle"] = {{"radius_m", c.radius},
                   {"steps", c.steps},
                   {"step_angle_rad", c.step_angle}};
  }
  if (!scn.surfaces.empty()) {
    json arr = json::array();
    for (const SurfaceParams& s : scn.surfaces) {
      arr.push_back({{"a", s.a}, {"b", s.b}, {"c_m", s.c}});
    }
    j["surfaces"] = arr;
  }
  if (!scn.feet.empty()) {
    json arr = json::array();
    for (const Vec3& f : scn.feet) arr.push_back(vec3_to_json(f));
    j["feet_m"] = arr;
  }
  if (!scn.keyframes.empty()) {
    json arr = json::array();
    for (const Keyframe& k : scn.keyframes) {
      arr.push_back({{"apex_velocity_mps", k.apex_velocity},
                     {"foot_m", vec3_to_json(k.foot)},
                     {"heading_rad", k.theta}});
    }
    j["keyframes"] = arr;
  }
  if (!scn.disturbances.empty()) {
    json arr = json::array();
    for (const Disturbance& d : scn.disturbances) {
      arr.push_back({{"step_index", d.step_index},
                     {"fraction", d.fraction},
                     {"delta_v_mps", vec3_to_json(d.delta_v)}});
    }
    j["disturbances"] = arr;
  }
  j["blend_fraction"] = scn.blend_fraction;
  j["guard"] = guard_name(scn.guard);
  j["epsilon"] = scn.epsilon;
  j["dt_s"] = scn.dt;
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  Scenario scn;
  try {
    scn.name = j.value("name", std::string{});
    scn.seed = j.value("seed", std::uint64_t{0});
    scn.apex_height = j.value("apex_height_m", 1.0);
    scn.apex_velocity = j.value("apex_velocity_mps", 0.6);
    if (j.contains("apex_velocities_mps")) {
      scn.apex_velocities = j["apex_velocities_mps"].get<std::vector<double>>();
    }
    if (j.contains("terrain")) {
      const json& t = j["terrain"];
      TerrainSpec ts;
      ts.seed = t.value("seed", scn.seed);
      ts.steps = t.at("steps").get<int>();
      ts.dh_min = t.value("dh_min_m", 0.1);
      ts.dh_max = t.value("dh_max_m", 0.3);
      ts.tilt = t.value("tilt_rad", 0.17453292519943295);
      ts.step_length = t.value("step_length_m", 0.4);
      scn.terrain = ts;
    }
    if (j.contains("circle")) {
      const json& c = j["circle"];
      CircleSpec cs;
      cs.radius = c.value("radius_m", 2.0);
      cs.steps = c.at("steps").get<int>();
      cs.step_angle = c.value("step_angle_rad", 0.2617993877991494);
      scn.circle = cs;
    }
    if (j.contains("surfaces")) {
      for (const json& s : j["surfaces"]) {
        scn.surfaces.push_back({s.value("a", 0.0), s.value("b", 0.0), s.value("c_m", 0.0)});
      }
    }
    if (j.contains("feet_m")) {
      for (const json& f : j["feet_m"]) scn.feet.push_back(vec3_from_json(f, "feet_m"));
    }
    if (j.contains("keyframes")) {
      for (const json& k : j["keyframes"]) {
        Keyframe kf;
        kf.apex_velocity = k.at("apex_velocity_mps").get<double>();
        kf.foot = vec3_from_json(k.at("foot_m"), "keyframes.foot_m");
        kf.theta = k.value("heading_rad", 0.0);
        scn.keyframes.push_back(kf);
      }
    }
    if (j.contains("disturbances")) {
      for (const json& d : j["disturbances"]) {
        Disturbance ds;
        ds.step_index = d.at("step_index").get<int>();
        ds.fraction = d.value("fraction", 0.5);
        ds.delta_v = vec3_from_json(d.at("delta_v_mps"), "disturbances.delta_v_mps");
        scn.disturbances.push_back(ds);
      }
    }
    scn.blend_fraction = j.value("blend_fraction", 0.25);
    scn.guard = guard_from_name(j.value("guard", std::string("manifold")));
    scn.epsilon = j.value("epsilon", 0.0);
    scn.dt = j.value("dt_s", 1e-3);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario field error: ") + e.what());
  }
  return scn;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& scn, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write scenario file: " + path.string());
  os << scenario_to_json(scn);
}

// ---------------------------------------------------------------------------
// Plan / simulate
// ---------------------------------------------------------------------------

namespace {

std::vector<Keyframe> circle_keyframes(const CircleSpec& c, double apex_velocity) {
  std::vector<Keyframe> kfs(c.steps);
  // walk a circle of the given radius starting at the origin heading +x;
  // the circle center sits at (0, radius)
  const double arc = 2.0 * c.radius * std::sin(0.5 * c.step_angle);
  (void)arc;
  for (int k = 0; k < c.steps; ++k) {
    const double th = k * c.step_angle;
    kfs[k].foot = Vec3{c.radius * std::sin(th), c.radius * (1.0 - std::cos(th)), 0.0};
    kfs[k].theta = th;
    kfs[k].apex_velocity = apex_velocity;
  }
  return kfs;
}

std::vector<double> resolve_apex_velocities(const Scenario& scn, std::size_t n) {
  if (!scn.apex_velocities.empty()) {
    if (scn.apex_velocities.size() != n) {
      throw ConfigError("apex_velocities_mps length does not match the step count");
    }
    return scn.apex_velocities;
  }
  return std::vector<double>(n, scn.apex_velocity);
}

}  // namespace

StepPlan plan_scenario(const Scenario& scn) {
  NominalOptions nopts;
  nopts.dt = scn.dt;

  std::vector<Keyframe> kfs = scn.keyframes;
  if (scn.circle) kfs = circle_keyframes(*scn.circle, scn.apex_velocity);
  if (!kfs.empty()) {
    SteeringOptions sopts;
    sopts.apex_height = scn.apex_height;
    sopts.nominal = nopts;
    return steering_plan(kfs, sopts);
  }

  std::vector<SurfaceParams> surfaces = scn.surfaces;
  std::vector<Vec3> feet = scn.feet;
  if (scn.terrain) {
    const TerrainSpec& ts = *scn.terrain;
    const Terrain terr = generate_terrain(ts.seed, ts.steps, ts.dh_min, ts.dh_max,
                                          ts.tilt, ts.step_length);
    TerrainSurfaces built = surfaces_from_terrain(terr, scn.apex_height);
    surfaces = std::move(built.surfaces);
    feet = std::move(built.feet);
  }
  if (surfaces.empty() || surfaces.size() != feet.size()) {
    throw ConfigError("scenario needs terrain, keyframes, or matching surfaces/feet");
  }
  const std::vector<double> vels = resolve_apex_velocities(scn, surfaces.size());
  return generate_nominal(surfaces, feet, vels, nopts);
}

ExecutionTrace simulate_scenario(const Scenario& scn, const AutomatonConfig& base) {
  const StepPlan plan = plan_scenario(scn);
  AutomatonConfig cfg = base;
  cfg.dt = scn.dt;
  cfg.guard = scn.guard;
  cfg.epsilon = scn.epsilon;
  cfg.blend_fraction = scn.blend_fraction;
  return run_automaton(plan, scn.disturbances, cfg);
}

// ---------------------------------------------------------------------------
// Deterministic export
// ---------------------------------------------------------------------------

namespace {

// Byte-stable float text: enough digits to round-trip, locale-independent.
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* mode_name(ContactMode m) {
  switch (m) {
    case ContactMode::left: return "left";
    case ContactMode::right: return "right";
    case ContactMode::dual: return "dual";
  }
  return "left";
}

void write_csv_rows(std::ostream& os, const Trajectory& traj,
                    const std::vector<ContactMode>* modes, const std::vector<int>* steps) {
  os << "t_s,zeta,step,mode,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,omega,tau_x_nm,tau_y_nm,"
        "tau_z_nm,sigma\n";
  for (std::size_t k = 0; k < traj.samples.size(); ++k) {
    const TrajectorySample& s = traj.samples[k];
    os << fmt(s.t) << ',' << fmt(s.zeta) << ',' << (steps ? (*steps)[k] : -1) << ','
       << (modes ? mode_name((*modes)[k]) : "left") << ',' << fmt(s.state.x()) << ','
       << fmt(s.state.y()) << ',' << fmt(s.state.z()) << ',' << fmt(s.state.vx()) << ','
       << fmt(s.state.vy()) << ',' << fmt(s.state.vz()) << ',' << fmt(s.control.omega)
       << ',' << fmt(s.control.torque.tau_x) << ',' << fmt(s.control.torque.tau_y) << ','
       << fmt(s.control.torque.tau_z) << ',' << fmt(s.sigma) << '\n';
  }
}

json scenario_meta(const Scenario& scn) {
  return json{{"scenario", scn.name}, {"seed", scn.seed}};
}

}  // namespace

void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path,
                     const Scenario& scn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write trace file: " + path.string());
  write_csv_rows(os, trace.trace, &trace.modes, &trace.sample_step);

  json meta = scenario_meta(scn);
  meta["samples"] = trace.trace.size();
  meta["dp_recovery_used"] = trace.dp_recovery_used;
  json events = json::array();
  for (const TransitionEvent& ev : trace.events) {
    events.push_back({{"t_s", ev.t}, {"note", ev.note}});
  }
  meta["events"] = events;
  json replans = json::array();
  for (const ReplanRecord& r : trace.replans) {
    replans.push_back({{"step", r.step},
                       {"t_s", r.t},
                       {"old_foot_m", vec3_to_json(r.old_foot)},
                       {"new_foot_m", vec3_to_json(r.new_foot)},
                       {"v_transition_mps", r.v_transition}});
  }
  meta["replans"] = replans;
  std::ofstream ms(path.string() + ".meta.json", std::ios::binary | std::ios::trunc);
  ms << meta.dump(2) << "\n";
}

void write_plan_csv(const StepPlan& plan, const std::filesystem::path& path,
                    const Scenario& scn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write trace file: " + path.string());
  // Mirror flatten()'s duplicate-timestamp skip while tracking ownership.
  Trajectory flat;
  std::vector<int> steps;
  for (std::size_t i = 0; i < plan.step_trajectories.size(); ++i) {
    for (const TrajectorySample& s : plan.step_trajectories[i].samples) {
      if (!flat.samples.empty() && s.t <= flat.samples.back().t + 1e-12) continue;
      flat.samples.push_back(s);
      steps.push_back(static_cast<int>(i));
    }
  }
  write_csv_rows(os, flat, nullptr, &steps);

  json meta = scenario_meta(scn);
  meta["samples"] = flat.size();
  meta["steps"] = plan.steps.size();
  json transitions = json::array();
  for (const TransitionRecord& tr : plan.transitions) {
    transitions.push_back({{"zeta", tr.zeta_trans},
                           {"x_m", tr.state.pos},
                           {"vx_mps", tr.state.vel},
                           {"t_s", tr.t}});
  }
  meta["transitions"] = transitions;
  std::ofstream ms(path.string() + ".meta.json", std::ios::binary | std::ios::trunc);
  ms << meta.dump(2) << "\n";
}

}  // namespace psp
