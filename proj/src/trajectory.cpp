#include "atc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "atc/csv.hpp"

namespace atc::traj {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t utc_day(std::int64_t t) { return floor_div(t, 86400); }

}  // namespace

std::string FlightId::str() const {
    return callsign + "|" + apt_from + "|" + apt_to + "|" + std::to_string(date) + "|" +
           std::to_string(segment);
}

std::optional<FlightId> FlightId::parse(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find('|', start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    if (parts.size() != 5) return std::nullopt;
    FlightId id;
    id.callsign = parts[0];
    id.apt_from = parts[1];
    id.apt_to = parts[2];
    std::int64_t date = 0, seg = 0;
    if (!csv::parse_int(parts[3], date) || !csv::parse_int(parts[4], seg)) return std::nullopt;
    id.date = date;
    id.segment = static_cast<int>(seg);
    return id;
}

std::optional<std::size_t> Trajectory::index_at(std::int64_t t) const {
    if (points.empty() || t < first_t() || t > last_t()) return std::nullopt;
    const std::int64_t off = t - first_t();
    if (off % kResampleStep != 0) return std::nullopt;
    return static_cast<std::size_t>(off / kResampleStep);
}

IngestResult ingest_surveillance(const std::string& path) {
    return ingest_surveillance_lines(csv::read_lines(path));
}

IngestResult ingest_surveillance_lines(const std::vector<std::string>& lines) {
    IngestResult result;
    IngestReport& rep = result.report;

    struct Key {
        std::string callsign, from, to;
        std::int64_t date;
        bool operator<(const Key& o) const {
            return std::tie(callsign, from, to, date) < std::tie(o.callsign, o.from, o.to, o.date);
        }
    };
    std::map<Key, std::vector<RawTrackPoint>> groups;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (i == 0 && line.rfind("callsign", 0) == 0) continue;  // header
        if (line.empty()) continue;
        const auto f = csv::split(line);
        const std::string where = "line " + std::to_string(i + 1);
        if (f.size() != 7) {
            rep.row_errors.push_back(where + ": expected 7 fields, got " + std::to_string(f.size()));
            ++rep.rows_rejected;
            continue;
        }
        RawTrackPoint p;
        p.callsign = f[0];
        p.apt_from = f[1];
        p.apt_to = f[2];
        std::int64_t t = 0;
        if (p.callsign.empty() || !csv::parse_double(f[3], p.pos.lon) ||
            !csv::parse_double(f[4], p.pos.lat) || !csv::parse_double(f[5], p.pos.alt) ||
            !csv::parse_int(f[6], t)) {
            rep.row_errors.push_back(where + ": malformed field");
            ++rep.rows_rejected;
            continue;
        }
        if (p.pos.lon < -180.0 || p.pos.lon > 180.0 || p.pos.lat < -90.0 || p.pos.lat > 90.0 ||
            !std::isfinite(p.pos.alt)) {
            rep.row_errors.push_back(where + ": position out of range");
            ++rep.rows_rejected;
            continue;
        }
        p.t = t;
        groups[Key{p.callsign, p.apt_from, p.apt_to, utc_day(t)}].push_back(p);
    }

    for (auto& [key, pts] : groups) {
        std::stable_sort(pts.begin(), pts.end(),
                         [](const RawTrackPoint& a, const RawTrackPoint& b) { return a.t < b.t; });
        RawFlight fl;
        fl.callsign = key.callsign;
        fl.apt_from = key.from;
        fl.apt_to = key.to;
        fl.date = key.date;
        for (const auto& p : pts) {
            if (!fl.points.empty() && fl.points.back().t == p.t) {
                ++rep.duplicates_dropped;
                continue;
            }
            fl.points.push_back(p);
        }
        result.flights.push_back(std::move(fl));
    }
    return result;
}

namespace {

geo::GeoPoint lerp(const geo::GeoPoint& a, const geo::GeoPoint& b, double alpha) {
    geo::GeoPoint out;
    out.lon = a.lon + alpha * (b.lon - a.lon);
    out.lat = a.lat + alpha * (b.lat - a.lat);
    out.alt = a.alt + alpha * (b.alt - a.alt);
    return out;
}

void attach_kinematics(Trajectory& traj) {
    const auto& pts = traj.points;
    const std::size_t n = pts.size();
    std::vector<double> course(n, std::nan(""));
    for (std::size_t i = 1; i < n; ++i) {
        if (geo::horizontal_distance(pts[i - 1].pos, pts[i].pos) >= 1e-9) {
            course[i] = geo::initial_bearing(pts[i - 1].pos, pts[i].pos);
        }
    }
    // First point takes its course from the first moving interval; interior
    // degenerate intervals hold the previous course.
    double first_course = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        if (!std::isnan(course[i])) {
            first_course = course[i];
            break;
        }
    }
    double prev = first_course;
    for (std::size_t i = 1; i < n; ++i) {
        if (std::isnan(course[i])) course[i] = prev;
        prev = course[i];
    }
    for (std::size_t i = 1; i < n; ++i) {
        geo::TimedPoint a{pts[i - 1].pos, pts[i - 1].t};
        geo::TimedPoint b{pts[i].pos, pts[i].t};
        traj.points[i].kin = geo::estimate_kinematics(a, b, course[i]);
    }
    if (n >= 2) {
        traj.points[0].kin = traj.points[1].kin;
        traj.points[0].kin.course = first_course;
    }
}

}  // namespace

std::vector<Trajectory> resample_5s(const RawFlight& flight, std::int64_t max_gap_s,
                                    IngestReport* report) {
    if (flight.points.size() < 2) {
        throw std::invalid_argument("resample_5s: flight " + flight.callsign +
                                    " needs at least 2 points");
    }
    // Split the raw sequence at long gaps first.
    std::vector<std::pair<std::size_t, std::size_t>> raw_segments;  // [first, last]
    std::size_t seg_start = 0;
    for (std::size_t i = 1; i < flight.points.size(); ++i) {
        if (flight.points[i].t - flight.points[i - 1].t > max_gap_s) {
            raw_segments.emplace_back(seg_start, i - 1);
            seg_start = i;
        }
    }
    raw_segments.emplace_back(seg_start, flight.points.size() - 1);

    std::vector<Trajectory> out;
    int segment = 0;
    for (const auto& [lo, hi] : raw_segments) {
        if (hi - lo + 1 < 2) {
            if (report) ++report->segments_dropped;
            continue;
        }
        const std::int64_t t0 = flight.points[lo].t;
        const std::int64_t t1 = flight.points[hi].t;
        std::int64_t g0 = floor_div(t0 + kResampleStep - 1, kResampleStep) * kResampleStep;
        std::int64_t g1 = floor_div(t1, kResampleStep) * kResampleStep;
        if (g1 - g0 < kResampleStep) {
            if (report) ++report->segments_dropped;
            continue;
        }
        Trajectory traj;
        traj.id = FlightId{flight.callsign, flight.apt_from, flight.apt_to, flight.date, segment};
        std::size_t i = lo;
        for (std::int64_t t = g0; t <= g1; t += kResampleStep) {
            while (i < hi && flight.points[i + 1].t <= t) ++i;
            const auto& a = flight.points[i];
            TrajPoint p;
            p.t = t;
            if (a.t == t) {
                p.pos = a.pos;  // exact grid hit: copy, bit for bit
            } else {
                const auto& b = flight.points[i + 1];
                const double alpha = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
                p.pos = lerp(a.pos, b.pos, alpha);
            }
            traj.points.push_back(p);
        }
        attach_kinematics(traj);
        out.push_back(std::move(traj));
        ++segment;
    }
    return out;
}

std::vector<Trajectory> filter_level_segments(const Trajectory& t, double max_abs_vs_fpm,
                                              std::int64_t min_duration_s) {
    std::vector<Trajectory> out;
    int segment = t.id.segment;
    std::size_t run_start = 0;
    bool in_run = false;
    auto flush = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
        if (hi <= lo) return;
        const std::int64_t dur = t.points[hi - 1].t - t.points[lo].t;
        if (dur < min_duration_s) return;
        Trajectory seg;
        seg.id = t.id;
        seg.id.segment = segment++;
        seg.points.assign(t.points.begin() + lo, t.points.begin() + hi);
        attach_kinematics(seg);
        out.push_back(std::move(seg));
    };
    for (std::size_t i = 0; i < t.points.size(); ++i) {
        const bool level = std::fabs(t.points[i].kin.v_speed) < max_abs_vs_fpm;
        if (level && !in_run) {
            in_run = true;
            run_start = i;
        } else if (!level && in_run) {
            in_run = false;
            flush(run_start, i);
        }
    }
    if (in_run) flush(run_start, t.points.size());
    return out;
}

AssociationReport associate_events(const std::vector<AtcoEvent>& events,
                                   const std::vector<Trajectory>& trajectories) {
    AssociationReport rep;
    for (std::size_t e = 0; e < events.size(); ++e) {
        const AtcoEvent& ev = events[e];
        std::vector<std::size_t> matches;
        for (std::size_t ti = 0; ti < trajectories.size(); ++ti) {
            const Trajectory& tr = trajectories[ti];
            if (tr.points.empty()) continue;
            if (tr.id.callsign != ev.callsign || tr.id.apt_from != ev.apt_from ||
                tr.id.apt_to != ev.apt_to) {
                continue;
            }
            if (static_cast<double>(tr.first_t()) <= ev.t &&
                ev.t <= static_cast<double>(tr.last_t())) {
                matches.push_back(ti);
            }
        }
        if (matches.empty()) {
            rep.failed.emplace_back(e, AssocFailure::NoMatch);
            continue;
        }
        if (matches.size() > 1) {
            rep.failed.emplace_back(e, AssocFailure::Ambiguous);
            continue;
        }
        const Trajectory& tr = trajectories[matches[0]];
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tr.points.size(); ++i) {
            const double d = std::fabs(static_cast<double>(tr.points[i].t) - ev.t);
            if (d < best_d) {  // strict: ties keep the earlier point
                best_d = d;
                best = i;
            }
        }
        rep.associated.push_back(Association{e, matches[0], best});
    }
    return rep;
}

std::vector<AtcoEvent> load_events(const std::string& path) {
    const auto lines = csv::read_lines(path);
    std::vector<AtcoEvent> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == 0 && lines[i].rfind("callsign", 0) == 0) continue;
        if (lines[i].empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != 6) throw std::runtime_error("events line " + std::to_string(i + 1) + ": expected 6 fields");
        AtcoEvent ev;
        ev.callsign = f[0];
        ev.apt_from = f[1];
        ev.apt_to = f[2];
        ev.mwm_code = f[3];
        if (!csv::parse_double(f[4], ev.t)) {
            throw std::runtime_error("events line " + std::to_string(i + 1) + ": bad timestamp");
        }
        ev.sector = f[5];
        out.push_back(std::move(ev));
    }
    return out;
}

std::string events_csv(const std::vector<AtcoEvent>& events) {
    std::string out = std::string(kEventHeader) + "\n";
    for (const auto& ev : events) {
        out += ev.callsign + "," + ev.apt_from + "," + ev.apt_to + "," + ev.mwm_code + "," +
               csv::format_double(ev.t) + "," + ev.sector + "\n";
    }
    return out;
}

std::string points_csv(const std::vector<Trajectory>& trajectories) {
    std::string out = std::string(kSurveillanceHeader) + "\n";
    for (const auto& tr : trajectories) {
        for (const auto& p : tr.points) {
            out += tr.id.callsign + "," + tr.id.apt_from + "," + tr.id.apt_to + "," +
                   csv::format_double(p.pos.lon) + "," + csv::format_double(p.pos.lat) + "," +
                   csv::format_double(p.pos.alt) + "," + std::to_string(p.t) + "\n";
        }
    }
    return out;
}

std::vector<Trajectory> load_trajectories(const std::string& path, IngestReport* report,
                                          std::int64_t max_gap_s) {
    IngestResult in = ingest_surveillance(path);
    std::vector<Trajectory> out;
    for (const auto& fl : in.flights) {
        if (fl.points.size() < 2) {
            ++in.report.segments_dropped;
            continue;
        }
        auto segs = resample_5s(fl, max_gap_s, &in.report);
        for (auto& s : segs) out.push_back(std::move(s));
    }
    if (report) *report = in.report;
    return out;
}

}  // namespace atc::traj
