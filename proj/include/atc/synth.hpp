#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atc/detect.hpp"
#include "atc/label.hpp"
#include "atc/trajectory.hpp"

namespace atc::synth {

/// Scenario shape: straight or two-leg crossings of the region box, with a
/// designated fraction of flights paired into crossing conflicts that receive
/// a scripted controller reaction and the matching maneuver.
struct ScenarioSpec {
    double lon_min = -10.0, lon_max = 3.0;
    double lat_min = 36.0, lat_max = 44.0;

    int flight_count = 40;
    double conflict_pair_fraction = 0.5;  // fraction of flights consumed by conflict pairs

    double speed_min_kt = 400.0;
    double speed_max_kt = 520.0;
    std::vector<double> flight_levels;  // ft; defaults to FL290..FL400 every 1000 ft

    double reaction_delay_min_s = 30.0;  // event time after the conflict first holds
    double reaction_delay_max_s = 90.0;
    double pilot_delay_min_s = 5.0;  // maneuver onset after the event
    double pilot_delay_max_s = 20.0;
    double a1_fraction = 0.5;  // speed-change share of scripted actions

    double max_arrival_offset_s = 8.0;  // pair arrival-time skew at the crossing point
    double dogleg_fraction = 0.35;      // non-conflict flights that fly a two-leg route

    std::uint64_t seed = 1;
};

/// Ground truth for one scripted reaction.
struct ScriptedReaction {
    std::size_t flight_a = 0;  // maneuvering flight index
    std::size_t flight_b = 0;  // partner index
    std::int64_t conflict_start_t = 0;  // first nominal constraint satisfaction
    std::int64_t conflict_end_t = 0;    // last nominal constraint satisfaction
    double event_t = 0.0;
    std::int64_t maneuver_start_t = 0;
    std::int64_t maneuver_end_t = 0;
    label::ActionClass action = label::ActionClass::A1;
};

struct Scenario {
    std::vector<traj::Trajectory> flights;
    std::vector<traj::AtcoEvent> events;
    std::map<std::string, geo::GeoPoint> airports;
    std::vector<ScriptedReaction> reactions;
    std::vector<std::pair<std::size_t, std::size_t>> intended_conflicts;
};

/// Deterministic generation; throws after bounded retries when the spec
/// cannot produce feasible geometry.
Scenario generate(const ScenarioSpec& spec);

/// The detection configuration the generator validates its geometry against.
detect::DetectConfig detect_config_for(const ScenarioSpec& spec);

struct ScenarioFiles {
    std::string surveillance;
    std::string events;
    std::string airports;
    std::string truth_labels;
};

/// Serialize to the ingestion formats plus an airports table and a nominal
/// ground-truth label file (labeler output schema, feature columns zeroed).
ScenarioFiles render_files(const Scenario& scenario, int k_neighbor_slots = 4);

void write_scenario(const Scenario& scenario, const std::string& dir, int k_neighbor_slots = 4);

}  // namespace atc::synth
