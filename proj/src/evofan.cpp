#include "atc/evofan.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace atc::evo {

std::string DeviationStats::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["course_medians"] = course_medians;
    j["speed_medians"] = speed_medians;
    return j.dump(2) + "\n";
}

DeviationStats DeviationStats::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DeviationStats s;
    s.n = j.at("n").get<int>();
    s.course_medians = j.at("course_medians").get<std::vector<double>>();
    s.speed_medians = j.at("speed_medians").get<std::vector<double>>();
    if (static_cast<int>(s.course_medians.size()) != s.n ||
        static_cast<int>(s.speed_medians.size()) != s.n) {
        throw std::runtime_error("deviation stats: median count does not match n");
    }
    return s;
}

std::vector<double> equal_frequency_medians(std::vector<double> values, int n) {
    if (n == 0) return {};
    if (static_cast<int>(values.size()) < n) {
        throw std::runtime_error("equal_frequency_medians: need at least " + std::to_string(n) +
                                 " values, got " + std::to_string(values.size()));
    }
    std::sort(values.begin(), values.end());
    const std::size_t count = values.size();
    std::vector<double> medians;
    medians.reserve(n);
    for (int b = 0; b < n; ++b) {
        const std::size_t lo = count * static_cast<std::size_t>(b) / static_cast<std::size_t>(n);
        const std::size_t hi = count * (static_cast<std::size_t>(b) + 1) / static_cast<std::size_t>(n);
        const std::size_t len = hi - lo;
        // Even-count bins take the mean of the two central values.
        const double median = (len % 2 == 1)
                                  ? values[lo + len / 2]
                                  : 0.5 * (values[lo + len / 2 - 1] + values[lo + len / 2]);
        medians.push_back(median);
    }
    return medians;
}

DeviationStats fit_deviation_stats(const std::vector<traj::Trajectory>& trajectories, int n) {
    std::vector<double> dcourse, dspeed;
    for (const auto& tr : trajectories) {
        for (std::size_t i = 1; i < tr.points.size(); ++i) {
            dcourse.push_back(geo::wrap180(tr.points[i].kin.course - tr.points[i - 1].kin.course));
            dspeed.push_back(tr.points[i].kin.h_speed - tr.points[i - 1].kin.h_speed);
        }
    }
    DeviationStats s;
    s.n = n;
    try {
        s.course_medians = equal_frequency_medians(std::move(dcourse), n);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("course deviations: ") + e.what());
    }
    try {
        s.speed_medians = equal_frequency_medians(std::move(dspeed), n);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("speed deviations: ") + e.what());
    }
    return s;
}

EvolutionFan build_fan(const traj::TrajPoint& point, const DeviationStats& stats,
                       double horizon_s) {
    EvolutionFan fan;
    fan.anchor = point.pos;
    fan.anchor_kin = point.kin;
    fan.anchor_t = point.t;
    fan.horizon_s = horizon_s;

    std::vector<double> dc{0.0}, ds{0.0};
    dc.insert(dc.end(), stats.course_medians.begin(), stats.course_medians.end());
    ds.insert(ds.end(), stats.speed_medians.begin(), stats.speed_medians.end());

    fan.projections.reserve(dc.size() * ds.size());
    for (double c : dc) {
        for (double s : ds) {
            Projection p;
            p.course = geo::norm360(point.kin.course + c);
            p.h_speed = std::max(0.0, point.kin.h_speed + s);
            fan.projections.push_back(p);
        }
    }
    return fan;
}

geo::GeoPoint EvolutionFan::position_at(std::size_t i, double dt) const {
    const Projection& p = projections.at(i);
    const double dist = p.h_speed * dt / 3600.0;
    geo::GeoPoint out = geo::destination(anchor, p.course, dist);
    out.alt = anchor.alt + anchor_kin.v_speed * dt / 60.0;
    return out;
}

}  // namespace atc::evo
