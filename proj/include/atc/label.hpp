#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atc/detect.hpp"
#include "atc/trajectory.hpp"

namespace atc::label {

enum class Mode { C0, C1, C2 };
enum class ActionClass { A0, A1, A2 };

const char* to_string(Mode m);
const char* to_string(ActionClass a);
std::optional<Mode> mode_from_string(const std::string& s);
std::optional<ActionClass> action_from_string(const std::string& s);

/// Next-point deltas used as continuous action targets. Course/speed deltas
/// are per 5 s grid step; d_t is the time to the next emitted row.
struct ContinuousActions {
    double d_course = 0.0;  // degrees
    double d_sh = 0.0;      // knots
    double d_sv = 0.0;      // ft/min
    double d_t = 0.0;       // seconds
};

struct LabelConfig {
    double augment_window_s = 250.0;  // annotation window before each action point
    double window_duration_s = 70.0;  // conflict search window for the actual RATP
    int step = 6;                     // subsampling period for C0/C2 rows
    std::map<std::string, ActionClass> code_map = {{"SPD", ActionClass::A1},
                                                   {"DCT", ActionClass::A2}};
};

struct LabeledRow {
    detect::EnrichedPoint point;
    Mode mode = Mode::C0;
    ActionClass action = ActionClass::A0;
    ContinuousActions cont;
    bool is_actual_ratp = false;
    bool is_annotated_ratp = false;
};

struct LabeledFlight {
    traj::FlightId id;
    std::vector<LabeledRow> rows;
};

struct LabeledDataset {
    std::vector<LabeledFlight> flights;
};

struct LabelReport {
    std::size_t events_located = 0;
    std::size_t pairs_rejected = 0;   // associated events with no conflict in the window
    std::size_t flights_dropped = 0;  // flights whose every association was rejected
};

/// Resolution-action class for a raw event code; throws naming the code when
/// the mapping does not cover it.
ActionClass action_from_code(const std::string& mwm_code, const LabelConfig& cfg);

/// Among the conflict-bearing points within window_duration before (and
/// including) the associated point, the one temporally closest to it. Empty
/// when no such point exists, which rejects the (flight, event) pair.
std::optional<std::size_t> locate_actual_ratp(const detect::EnrichedFlight& flight,
                                              std::size_t assoc_point_index,
                                              const LabelConfig& cfg);

/// Mode/action annotation of one flight. `actions` maps actual-RATP point
/// indices to their action class. Points inside an augmentation window that
/// carry no conflict are dropped; the final grid point is dropped because it
/// has no successor to diff against. Kinematic deltas come from `track`,
/// which must be the resampled trajectory the enrichment was built from.
LabeledFlight annotate_modes(const detect::EnrichedFlight& flight, const traj::Trajectory& track,
                             const std::vector<std::pair<std::size_t, ActionClass>>& actions,
                             const LabelConfig& cfg);

/// Keep every C1 row; keep every step-th row of each C0/C2 run. Counters
/// reset at C1 rows and at flight start. d_t is refreshed to the gap to the
/// next retained row.
LabeledFlight subsample(const LabeledFlight& flight, int step);

struct PriorRow {
    int step = 0;
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

/// Mode distribution after subsampling at each step; rows sum to one.
/// Expects the pre-subsampling dataset; throws when it is empty.
std::vector<PriorRow> prior_report(const LabeledDataset& dataset, const std::vector<int>& steps);

std::string prior_csv(const std::vector<PriorRow>& rows);

/// Full annotation pass: locate actual RATPs from the associations and
/// annotate each flight. Flights whose associations are all rejected are
/// dropped. Subsampling is a separate step so mode priors can be reported
/// on the pre-subsampling rows.
LabeledDataset label_flights(const std::vector<detect::EnrichedFlight>& flights,
                             const std::vector<traj::Trajectory>& tracks,
                             const traj::AssociationReport& assoc,
                             const std::vector<traj::AtcoEvent>& events, const LabelConfig& cfg,
                             LabelReport* report = nullptr);

LabeledDataset subsample_dataset(const LabeledDataset& dataset, int step);

std::string labeled_csv(const LabeledDataset& dataset, int k);
LabeledDataset load_labeled(const std::string& path, int k);

}  // namespace atc::label
