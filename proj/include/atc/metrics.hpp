#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atc/label.hpp"
#include "atc/trajectory.hpp"

namespace atc::metrics {

/// Gaussian score of a temporal distance, score(x) = exp(-0.5 (x / 5n)^2).
/// n converts seconds into 5-second decision intervals.
struct ScoreParams {
    int n = 5;
};

double score(double x_seconds, const ScoreParams& params);

/// Truth and prediction for one trajectory point, with the action-point
/// markers the weighting scheme measures distances against.
struct EvalPoint {
    double t = 0.0;
    label::Mode truth_mode = label::Mode::C0;
    label::ActionClass truth_action = label::ActionClass::A0;
    label::Mode pred_mode = label::Mode::C0;
    label::ActionClass pred_action = label::ActionClass::A0;
    bool is_actual_ratp = false;
    bool is_annotated_ratp = false;
};

struct EvalFlight {
    traj::FlightId id;
    std::vector<EvalPoint> points;  // strictly increasing t
};

using EvalStream = std::vector<EvalFlight>;

enum class Taxonomy { Modes, Actions };

/// Per-class accumulators. Weighted true counts absorb the complement of
/// each fractional false weight: tp_weighted = #TP + sum(1 - w_fp) and
/// tn_weighted = #TN + sum(1 - w_fn).
struct WeightedCounts {
    double tp_weighted = 0.0;
    double fp_weighted = 0.0;
    double fn_weighted = 0.0;
    double tn_weighted = 0.0;
    std::int64_t tp_count = 0;
    std::int64_t fp_count = 0;
    std::int64_t fn_count = 0;
    std::int64_t tn_count = 0;

    WeightedCounts& operator+=(const WeightedCounts& o);
};

/// Run the weighted case machine for one class of one taxonomy over the
/// stream. Classes belong to the generic groups G0 = {C0, C2} / {A0} and
/// G1 = {C1} / {A1, A2}; mispredictions across groups are weighted by the
/// temporal distance to the nearest action point, mispredictions within a
/// group count fully. With `force_unit_weights` every error weighs 1, which
/// reduces the result to the standard contingency counts.
WeightedCounts accumulate(const EvalStream& stream, Taxonomy taxonomy, int class_id,
                          const ScoreParams& params, bool force_unit_weights = false);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool empty = false;  // no occurrences: 0/0 reported as 0
};

Prf wp_wr_wf1(const WeightedCounts& counts);

struct CriticalMissParams {
    double near_window_s = 70.0;    // how far a predicted action may sit from an action point
    double assoc_window_s = 250.0;  // annotated points this far before an actual belong to it
};

/// Number of recorded resolution actions (actual action points) with no
/// predicted-action point at or within the window of any of their actual or
/// annotated points.
int critical_misses(const EvalStream& stream, const CriticalMissParams& params = {});

struct ClassReport {
    std::string name;
    WeightedCounts weighted;
    WeightedCounts plain;
    Prf weighted_prf;
    Prf plain_prf;
};

struct Report {
    std::vector<ClassReport> modes;    // C0, C1, C2
    std::vector<ClassReport> actions;  // A0, A1, A2
    int critical_misses = 0;
    int actual_ratps = 0;
};

Report evaluate(const EvalStream& stream, const ScoreParams& params);

std::string report_csv(const Report& r);
std::string report_json(const Report& r);

/// Plot data for the score function, one (x, score) row per second.
std::string score_curve_csv(const ScoreParams& params, int x_max_s = 120);

}  // namespace atc::metrics
