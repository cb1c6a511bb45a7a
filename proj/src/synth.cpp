#include "atc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "atc/csv.hpp"

namespace atc::synth {

namespace {

constexpr std::int64_t kBaseT = 1600000000;  // grid-aligned epoch origin
constexpr double kStepS = 5.0;
constexpr double kMaxTurnPerStep = 15.0;  // 3 deg/s standard-rate cap
constexpr double kMaxAccelPerStep = 5.0;  // 1 kt/s

double step_course(double cur, double desired, double max_step) {
    double d = geo::wrap180(desired - cur);
    d = std::clamp(d, -max_step, max_step);
    return geo::norm360(cur + d);
}

struct ManeuverPlan {
    label::ActionClass action = label::ActionClass::A1;
    std::int64_t start_t = 0;
    double speed_delta = 0.0;         // A1
    double turn_deg = 0.0;            // A2, signed
    double hold_s = 240.0;            // A2 offset-leg duration
    geo::GeoPoint rejoin_target;      // A2
};

std::int64_t maneuver_duration_s(const ManeuverPlan& p) {
    if (p.action == label::ActionClass::A1) {
        return static_cast<std::int64_t>(std::ceil(std::fabs(p.speed_delta) / 1.0));
    }
    return static_cast<std::int64_t>(std::ceil(std::fabs(p.turn_deg) / kMaxTurnPerStep)) * 5;
}

/// One aircraft of a conflict pair: flies direct to the meet point, then
/// holds course; a maneuver plan overrides from its start time.
std::vector<geo::GeoPoint> simulate_pair_aircraft(const geo::GeoPoint& start,
                                                  const geo::GeoPoint& meet, double speed_kt,
                                                  double alt, std::int64_t t0, int n_steps,
                                                  const ManeuverPlan* plan) {
    std::vector<geo::GeoPoint> out;
    out.reserve(n_steps);
    geo::GeoPoint pos = start;
    pos.alt = alt;
    double course = geo::initial_bearing(start, meet);
    double cur_speed = speed_kt, target_speed = speed_kt;
    enum class Lat { DirectMeet, Hold, TurnOut, OffsetHold, Rejoin };
    Lat lat = Lat::DirectMeet;
    double turn_remaining = 0.0;
    double hold_remaining = 0.0;

    for (int i = 0; i < n_steps; ++i) {
        out.push_back(pos);
        const std::int64_t t = t0 + 5 * i;
        if (plan && t >= plan->start_t) {
            if (plan->action == label::ActionClass::A1) {
                target_speed = speed_kt + plan->speed_delta;
            } else if (lat == Lat::DirectMeet || lat == Lat::Hold) {
                lat = Lat::TurnOut;
                turn_remaining = plan->turn_deg;
                hold_remaining = plan->hold_s;
            }
        }
        cur_speed += std::clamp(target_speed - cur_speed, -kMaxAccelPerStep, kMaxAccelPerStep);
        const double step_dist = cur_speed * kStepS / 3600.0;

        switch (lat) {
            case Lat::DirectMeet:
                if (geo::horizontal_distance(pos, meet) <= step_dist * 1.25) {
                    lat = Lat::Hold;
                } else {
                    course = geo::initial_bearing(pos, meet);
                }
                break;
            case Lat::Hold:
                break;
            case Lat::TurnOut: {
                const double s = std::clamp(turn_remaining, -kMaxTurnPerStep, kMaxTurnPerStep);
                course = geo::norm360(course + s);
                turn_remaining -= s;
                if (std::fabs(turn_remaining) < 1e-9) lat = Lat::OffsetHold;
                break;
            }
            case Lat::OffsetHold:
                hold_remaining -= kStepS;
                if (hold_remaining <= 0.0) lat = Lat::Rejoin;
                break;
            case Lat::Rejoin:
                course = step_course(course, geo::initial_bearing(pos, plan->rejoin_target),
                                     kMaxTurnPerStep);
                break;
        }
        pos = geo::destination(pos, course, step_dist);
        pos.alt = alt;
    }
    return out;
}

/// Straight or two-leg background flight.
std::vector<geo::GeoPoint> simulate_route(const geo::GeoPoint& start, double course0,
                                          double speed_kt, double alt, int n_steps,
                                          int dogleg_step, double dogleg_turn) {
    std::vector<geo::GeoPoint> out;
    out.reserve(n_steps);
    geo::GeoPoint pos = start;
    pos.alt = alt;
    double course = course0;
    double turn_remaining = 0.0;
    for (int i = 0; i < n_steps; ++i) {
        out.push_back(pos);
        if (i == dogleg_step) turn_remaining = dogleg_turn;
        if (std::fabs(turn_remaining) > 1e-9) {
            const double s = std::clamp(turn_remaining, -kMaxTurnPerStep, kMaxTurnPerStep);
            course = geo::norm360(course + s);
            turn_remaining -= s;
        }
        pos = geo::destination(pos, course, speed_kt * kStepS / 3600.0);
        pos.alt = alt;
    }
    return out;
}

traj::Trajectory to_trajectory(const std::string& callsign, const std::string& apt_o,
                               const std::string& apt_d, std::int64_t t0,
                               const std::vector<geo::GeoPoint>& positions) {
    traj::RawFlight fl;
    fl.callsign = callsign;
    fl.apt_from = apt_o;
    fl.apt_to = apt_d;
    fl.date = t0 / 86400;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        traj::RawTrackPoint p;
        p.callsign = callsign;
        p.apt_from = apt_o;
        p.apt_to = apt_d;
        p.pos = positions[i];
        p.t = t0 + 5 * static_cast<std::int64_t>(i);
        fl.points.push_back(p);
    }
    auto segs = traj::resample_5s(fl);
    if (segs.size() != 1) throw std::logic_error("synth: generated flight split unexpectedly");
    return std::move(segs[0]);
}

struct CellGate {
    double lon0, lat0, cell;
    int d_th;
    std::pair<int, int> cell_of(const geo::GeoPoint& p) const {
        return {static_cast<int>(std::floor((p.lon - lon0) / cell)),
                static_cast<int>(std::floor((p.lat - lat0) / cell))};
    }
    bool near(const geo::GeoPoint& a, const geo::GeoPoint& b) const {
        const auto [ax, ay] = cell_of(a);
        const auto [bx, by] = cell_of(b);
        return std::abs(ax - bx) <= d_th && std::abs(ay - by) <= d_th;
    }
};

bool nominal_conflict_at(const traj::Trajectory& a, const traj::Trajectory& b, std::int64_t t,
                         const detect::DetectConfig& cfg, const CellGate& gate) {
    const auto ia = a.index_at(t);
    const auto ib = b.index_at(t);
    if (!ia || !ib) return false;
    const auto& pa = a.points[*ia];
    const auto& pb = b.points[*ib];
    if (!detect::in_sa(pa.pos, cfg) || !detect::in_sa(pb.pos, cfg)) return false;
    if (!gate.near(pa.pos, pb.pos)) return false;
    return detect::pair_conflict_nominal(pa, pb, cfg);
}

struct Draw {
    std::mt19937_64 g;
    explicit Draw(std::uint64_t seed) : g(seed) {}
    double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(g); }
    int uni_int(int a, int b) { return std::uniform_int_distribution<int>(a, b)(g); }
    bool chance(double p) { return uni(0.0, 1.0) < p; }
};

std::string pad3(std::size_t n) {
    std::string s = std::to_string(n);
    while (s.size() < 3) s = "0" + s;
    return s;
}

}  // namespace

detect::DetectConfig detect_config_for(const ScenarioSpec& spec) {
    detect::DetectConfig cfg;
    cfg.lon_min = spec.lon_min;
    cfg.lon_max = spec.lon_max;
    cfg.lat_min = spec.lat_min;
    cfg.lat_max = spec.lat_max;
    return cfg;
}

Scenario generate(const ScenarioSpec& spec) {
    Draw rng(spec.seed);
    Scenario sc;
    const detect::DetectConfig cfg = detect_config_for(spec);
    detect::DetectConfig margin_cfg = cfg;
    margin_cfg.cpa_d_h_th_nm += 3.0;  // headroom for fan-widened detection
    const CellGate gate{cfg.lon_min, cfg.lat_min, cfg.cell_size_deg, cfg.d_th_cells};

    std::vector<double> levels = spec.flight_levels;
    if (levels.empty()) {
        for (double ft = 29000.0; ft <= 40000.0; ft += 1000.0) levels.push_back(ft);
    }
    // One time slot per flight level so that same-level flights never
    // co-occur except inside a designated conflict pair.
    std::map<double, std::int64_t> next_free;
    auto acquire_slot = [&](double alt, std::int64_t duration) {
        auto it = next_free.emplace(alt, kBaseT).first;
        const std::int64_t start = it->second + 5 * rng.uni_int(0, 12);
        it->second = start + duration + 60;
        return start;
    };

    const int pair_count =
        static_cast<int>(std::floor(spec.flight_count * spec.conflict_pair_fraction / 2.0));
    const int single_count = spec.flight_count - 2 * pair_count;
    std::size_t level_cursor = 0;
    auto next_level = [&] { return levels[level_cursor++ % levels.size()]; };

    const double lon_margin = 0.15 * (spec.lon_max - spec.lon_min);
    const double lat_margin = 0.15 * (spec.lat_max - spec.lat_min);

    for (int pi = 0; pi < pair_count; ++pi) {
        bool built = false;
        for (int attempt = 0; attempt < 20 && !built; ++attempt) {
            const double alt = next_level();
            const geo::GeoPoint meet{rng.uni(spec.lon_min + lon_margin, spec.lon_max - lon_margin),
                                     rng.uni(spec.lat_min + lat_margin, spec.lat_max - lat_margin),
                                     alt};
            const double course1 = rng.uni(0.0, 360.0);
            const double theta = (rng.chance(0.5) ? 1.0 : -1.0) * rng.uni(35.0, 145.0);
            const double course2 = geo::norm360(course1 + theta);
            const double v1 = rng.uni(spec.speed_min_kt, spec.speed_max_kt);
            const double v2 = rng.uni(spec.speed_min_kt, spec.speed_max_kt);
            const double tau_meet = 5.0 * std::round(rng.uni(1450.0, 1650.0) / 5.0);
            const double offset = rng.uni(-spec.max_arrival_offset_s, spec.max_arrival_offset_s);
            const int n_steps = static_cast<int>((tau_meet + 400.0) / 5.0) + 1;

            const geo::GeoPoint start1 =
                geo::destination(meet, geo::norm360(course1 + 180.0), v1 * tau_meet / 3600.0);
            const geo::GeoPoint start2 = geo::destination(meet, geo::norm360(course2 + 180.0),
                                                          v2 * (tau_meet + offset) / 3600.0);

            const std::int64_t duration = 5 * (n_steps - 1);
            const std::int64_t t0 = acquire_slot(alt, duration);

            auto pos1 = simulate_pair_aircraft(start1, meet, v1, alt, t0, n_steps, nullptr);
            auto pos2 = simulate_pair_aircraft(start2, meet, v2, alt, t0, n_steps, nullptr);

            const std::size_t idx1 = sc.flights.size();
            const std::string cs1 = "F" + pad3(idx1), cs2 = "F" + pad3(idx1 + 1);
            auto tr1 = to_trajectory(cs1, "O" + pad3(idx1), "D" + pad3(idx1), t0, pos1);
            auto tr2 = to_trajectory(cs2, "O" + pad3(idx1 + 1), "D" + pad3(idx1 + 1), t0, pos2);

            // First nominal constraint satisfaction, including the cell gate.
            std::int64_t t_c = -1;
            for (std::int64_t t = t0; t <= t0 + duration; t += 5) {
                if (nominal_conflict_at(tr1, tr2, t, cfg, gate)) {
                    t_c = t;
                    break;
                }
            }
            const std::int64_t t_meet_abs = t0 + static_cast<std::int64_t>(tau_meet);
            if (t_c < 0 || t_meet_abs - t_c < 700) continue;  // need room to maneuver

            const double event_t = std::round(static_cast<double>(t_c) +
                                              rng.uni(spec.reaction_delay_min_s,
                                                      spec.reaction_delay_max_s));
            const std::int64_t maneuver_start = static_cast<std::int64_t>(std::round(
                event_t + rng.uni(spec.pilot_delay_min_s, spec.pilot_delay_max_s)));

            // Conflict must hold continuously from onset through the event so
            // the reaction point is locatable next to it.
            bool continuous = true;
            for (std::int64_t t = t_c; t <= static_cast<std::int64_t>(event_t) + 5 && continuous;
                 t += 5) {
                if (t > t0 + duration) break;
                continuous = nominal_conflict_at(tr1, tr2, t, cfg, gate);
            }
            if (!continuous) continue;

            // Right of way: the aircraft that sees the other on its right
            // gives way and receives the scripted action.
            const auto i1 = tr1.index_at(t_c), i2 = tr2.index_at(t_c);
            const double rel = geo::wrap180(
                geo::initial_bearing(tr1.points[*i1].pos, tr2.points[*i2].pos) -
                tr1.points[*i1].kin.course);
            const bool first_maneuvers = rel >= 0.0;
            const label::ActionClass action =
                rng.chance(spec.a1_fraction) ? label::ActionClass::A1 : label::ActionClass::A2;
            const double turn_side = rel >= 0.0 ? 1.0 : -1.0;

            auto& man_tr = first_maneuvers ? tr1 : tr2;
            auto& oth_tr = first_maneuvers ? tr2 : tr1;
            const auto& man_start = first_maneuvers ? start1 : start2;
            const double man_speed = first_maneuvers ? v1 : v2;
            const double man_course = first_maneuvers ? course1 : course2;
            const std::string man_cs = first_maneuvers ? cs1 : cs2;

            const geo::GeoPoint dest_extension =
                geo::destination(meet, man_course, 300.0);

            for (int strength = 0; strength < 5 && !built; ++strength) {
                ManeuverPlan plan;
                plan.action = action;
                plan.start_t = maneuver_start;
                plan.speed_delta = -(60.0 + 20.0 * strength);
                plan.turn_deg = turn_side * (35.0 + 10.0 * strength);
                plan.rejoin_target = dest_extension;

                auto man_pos = simulate_pair_aircraft(man_start, meet, man_speed, alt, t0, n_steps,
                                                      &plan);
                auto man_traj = to_trajectory(man_cs, "O" + pad3(first_maneuvers ? idx1 : idx1 + 1),
                                              "D" + pad3(first_maneuvers ? idx1 : idx1 + 1), t0,
                                              man_pos);

                std::int64_t man_end = maneuver_start + maneuver_duration_s(plan);
                man_end += (5 - man_end % 5) % 5;

                bool clean = true;
                for (std::int64_t t = man_end; t <= t0 + duration && clean; t += 5) {
                    clean = !nominal_conflict_at(man_traj, oth_tr, t, margin_cfg, gate);
                }
                if (!clean) continue;

                std::int64_t conflict_end = t_c;
                for (std::int64_t t = t_c; t <= t0 + duration; t += 5) {
                    if (nominal_conflict_at(man_traj, oth_tr, t, cfg, gate)) conflict_end = t;
                }

                man_tr = std::move(man_traj);
                ScriptedReaction r;
                r.flight_a = first_maneuvers ? idx1 : idx1 + 1;
                r.flight_b = first_maneuvers ? idx1 + 1 : idx1;
                r.conflict_start_t = t_c;
                r.conflict_end_t = conflict_end;
                r.event_t = event_t;
                r.maneuver_start_t = maneuver_start;
                r.maneuver_end_t = man_end;
                r.action = action;
                sc.reactions.push_back(r);
                sc.intended_conflicts.emplace_back(idx1, idx1 + 1);

                traj::AtcoEvent ev;
                ev.callsign = man_cs;
                ev.apt_from = man_tr.id.apt_from;
                ev.apt_to = man_tr.id.apt_to;
                ev.t = event_t;
                ev.mwm_code = action == label::ActionClass::A1 ? "SPD" : "DCT";
                ev.sector = "";
                sc.events.push_back(ev);
                built = true;
            }
            if (built) {
                sc.airports["O" + pad3(idx1)] = geo::destination(start1, geo::norm360(course1 + 180.0), 120.0);
                sc.airports["D" + pad3(idx1)] = geo::destination(meet, course1, 300.0);
                sc.airports["O" + pad3(idx1 + 1)] = geo::destination(start2, geo::norm360(course2 + 180.0), 120.0);
                sc.airports["D" + pad3(idx1 + 1)] = geo::destination(meet, course2, 300.0);
                sc.flights.push_back(std::move(tr1));
                sc.flights.push_back(std::move(tr2));
            }
        }
        if (!built) {
            throw std::runtime_error("synth: could not construct a feasible conflict pair");
        }
    }

    for (int si = 0; si < single_count; ++si) {
        const double alt = next_level();
        const double speed = rng.uni(spec.speed_min_kt, spec.speed_max_kt);
        const int n_steps = rng.uni_int(160, 220);
        const geo::GeoPoint start{rng.uni(spec.lon_min + lon_margin, spec.lon_max - lon_margin),
                                  rng.uni(spec.lat_min + lat_margin, spec.lat_max - lat_margin),
                                  alt};
        const double course = rng.uni(0.0, 360.0);
        int dogleg_step = -1;
        double dogleg_turn = 0.0;
        if (rng.chance(spec.dogleg_fraction)) {
            dogleg_step = rng.uni_int(n_steps / 4, n_steps / 2);
            dogleg_turn = (rng.chance(0.5) ? 1.0 : -1.0) * rng.uni(10.0, 30.0);
        }
        const std::int64_t duration = 5 * (n_steps - 1);
        const std::int64_t t0 = acquire_slot(alt, duration);
        auto pos = simulate_route(start, course, speed, alt, n_steps, dogleg_step, dogleg_turn);
        const std::size_t idx = sc.flights.size();
        const std::string cs = "F" + pad3(idx);
        auto tr = to_trajectory(cs, "O" + pad3(idx), "D" + pad3(idx), t0, pos);
        sc.airports["O" + pad3(idx)] = geo::destination(start, geo::norm360(course + 180.0), 120.0);
        sc.airports["D" + pad3(idx)] = geo::destination(pos.back(), course, 150.0);
        sc.flights.push_back(std::move(tr));
    }
    return sc;
}

ScenarioFiles render_files(const Scenario& scenario, int k) {
    ScenarioFiles out;
    out.surveillance = traj::points_csv(scenario.flights);
    out.events = traj::events_csv(scenario.events);

    out.airports = "code,lon_deg,lat_deg\n";
    for (const auto& [code, pos] : scenario.airports) {
        out.airports += code + "," + csv::format_double(pos.lon) + "," +
                        csv::format_double(pos.lat) + "\n";
    }

    // Nominal ground-truth labels in the training schema: mode timeline from
    // the scripted construction, feature columns zeroed.
    label::LabeledDataset truth;
    for (std::size_t fi = 0; fi < scenario.flights.size(); ++fi) {
        const auto& tr = scenario.flights[fi];
        const ScriptedReaction* r = nullptr;
        bool is_partner = false;
        for (const auto& sr : scenario.reactions) {
            if (sr.flight_a == fi) r = &sr;
            if (sr.flight_b == fi) {
                r = &sr;
                is_partner = true;
            }
        }
        std::int64_t event_point_t = -1;
        if (r && !is_partner) {
            const auto idx = tr.index_at(5 * static_cast<std::int64_t>(std::llround(r->event_t / 5.0)));
            if (idx) event_point_t = tr.points[*idx].t;
        }
        label::LabeledFlight lf;
        lf.id = tr.id;
        for (const auto& p : tr.points) {
            label::LabeledRow row;
            row.point.t = p.t;
            row.point.h = p.pos.alt;
            row.point.s_h = p.kin.h_speed;
            row.point.s_v = p.kin.v_speed;
            row.point.slots.resize(k);
            if (r && p.t >= r->conflict_start_t && p.t <= r->conflict_end_t) {
                row.mode = label::Mode::C2;
                row.point.conflict = true;
            }
            if (p.t == event_point_t) {
                row.mode = label::Mode::C1;
                row.point.conflict = true;
                row.action = r->action;
                row.is_actual_ratp = true;
            }
            row.cont.d_t = 5.0;
            lf.rows.push_back(std::move(row));
        }
        truth.flights.push_back(std::move(lf));
    }
    out.truth_labels = label::labeled_csv(truth, k);
    return out;
}

void write_scenario(const Scenario& scenario, const std::string& dir, int k) {
    std::filesystem::create_directories(dir);
    const auto files = render_files(scenario, k);
    csv::write_file(dir + "/surveillance.csv", files.surveillance);
    csv::write_file(dir + "/events.csv", files.events);
    csv::write_file(dir + "/airports.csv", files.airports);
    csv::write_file(dir + "/truth_labels.csv", files.truth_labels);
}

}  // namespace atc::synth
