#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "psp/automaton.hpp"
#include "psp/planner.hpp"
#include "psp/types.hpp"

namespace psp {

// Batch-facing layer: seeded rough-terrain generation, JSON scenario files,
// and deterministic CSV trace export with a JSON metadata sidecar.

struct Terrain {
  std::uint64_t seed{0};
  double step_length{0.4};           // [m]
  std::vector<double> heights;       // per-step foot height [m]
  std::vector<double> tilts;         // per-step sagittal pitch [rad], signed
};

/// Seeded rough terrain: height increments |dh| drawn uniformly from
/// [dh_min, dh_max] with a random sign, per-step pitch = +/- tilt with a
/// random sign. Throws InvalidRange unless 0 < dh_min < dh_max.
Terrain generate_terrain(std::uint64_t seed, int steps, double dh_min = 0.1,
                         double dh_max = 0.3, double tilt = 0.17453292519943295,
                         double step_length = 0.4);

struct TerrainSurfaces {
  std::vector<SurfaceParams> surfaces;
  std::vector<Vec3> feet;
};

/// Per-step CoM plane parallel to the local terrain pitch, offset so the apex
/// sits apex_height vertically above each foot.
TerrainSurfaces surfaces_from_terrain(const Terrain& terrain, double apex_height = 1.0);

struct TerrainSpec {
  std::uint64_t seed{0};
  int steps{0};
  double dh_min{0.1};
  double dh_max{0.3};
  double tilt{0.17453292519943295};
  double step_length{0.4};
};

struct CircleSpec {
  double radius{2.0};
  int steps{24};
  double step_angle{0.2617993877991494};  // [rad] heading increment per step
};

struct Scenario {
  std::string name;
  std::uint64_t seed{0};
  double apex_height{1.0};         // [m]
  double apex_velocity{0.6};       // [m/s] constant default
  std::vector<double> apex_velocities;  // optional per-step override
  std::optional<TerrainSpec> terrain;
  std::optional<CircleSpec> circle;
  std::vector<SurfaceParams> surfaces;  // explicit geometry alternative
  std::vector<Vec3> feet;
  std::vector<Keyframe> keyframes;      // explicit steering alternative
  std::vector<Disturbance> disturbances;
  double blend_fraction{0.25};
  GuardKind guard{GuardKind::manifold};
  double epsilon{0.0};             // bundle radius; <= 0 selects the default
  double dt{1e-3};
};

/// JSON (de)serialization; field names carry explicit units. Parse failures
/// throw ConfigError with the offending field in the message.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scn);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scn, const std::filesystem::path& path);

/// Nominal plan for the scenario's geometry (steering when keyframes or a
/// circle are given, straight-line otherwise).
StepPlan plan_scenario(const Scenario& scn);

/// Executes the scenario's plan under its disturbances.
ExecutionTrace simulate_scenario(const Scenario& scn, const AutomatonConfig& base = {});

/// Deterministic CSV export (17-significant-digit floats, '\n' line ends)
/// plus a sidecar `<path>.meta.json` with events, replans and provenance.
void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path,
                     const Scenario& scn);
void write_plan_csv(const StepPlan& plan, const std::filesystem::path& path,
                    const Scenario& scn);

}  // namespace psp
