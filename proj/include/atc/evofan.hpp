#pragma once

#include <string>
#include <vector>

#include "atc/geo.hpp"
#include "atc/trajectory.hpp"

namespace atc::evo {

/// Per-step course and horizontal-speed deviation representatives, fitted
/// from historical trajectories: each dimension is split into n
/// equal-frequency bins of the pooled per-5 s differences and represented by
/// its bin median. Medians are ascending.
struct DeviationStats {
    int n = 0;
    std::vector<double> course_medians;  // degrees per step
    std::vector<double> speed_medians;   // knots per step

    std::string to_json() const;
    static DeviationStats from_json(const std::string& text);
};

/// One straight-line candidate future: constant course/speed motion from the
/// anchor, altitude evolving at the anchor's vertical speed.
struct Projection {
    double course = 0.0;   // degrees
    double h_speed = 0.0;  // knots
};

/// The candidate futures of one aircraft state: the cross product of
/// {0} + course medians with {0} + speed medians, nominal projection first.
struct EvolutionFan {
    geo::GeoPoint anchor;
    geo::Kinematics anchor_kin;
    std::int64_t anchor_t = 0;
    double horizon_s = 0.0;
    std::vector<Projection> projections;  // size (n+1)^2, index 0 nominal

    const Projection& nominal() const { return projections.front(); }

    /// Dead-reckoned position dt seconds past the anchor along projection i.
    geo::GeoPoint position_at(std::size_t i, double dt) const;
};

/// Default projection horizon: the largest lookahead any of the pair
/// constraints uses (time to CPA below 30 minutes).
inline constexpr double kDefaultHorizonS = 1800.0;

/// Pool per-step course/speed differences over all trajectories and reduce
/// each dimension to n equal-frequency bin medians. Throws when a dimension
/// has fewer than n values.
DeviationStats fit_deviation_stats(const std::vector<traj::Trajectory>& trajectories, int n);

/// Equal-frequency bin medians of one pooled sample (exposed for reuse).
std::vector<double> equal_frequency_medians(std::vector<double> values, int n);

EvolutionFan build_fan(const traj::TrajPoint& point, const DeviationStats& stats,
                       double horizon_s = kDefaultHorizonS);

}  // namespace atc::evo
