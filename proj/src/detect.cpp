#include "atc/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "atc/csv.hpp"

namespace atc::detect {

using geo::Vec2;

bool point_in_polygon(const std::vector<std::pair<double, double>>& poly, double lon, double lat) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& [xi, yi] = poly[i];
        const auto& [xj, yj] = poly[j];
        const bool crosses = (yi > lat) != (yj > lat);
        if (crosses && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

bool in_sa(const geo::GeoPoint& p, const DetectConfig& cfg) {
    if (cfg.setting == Setting::SectorRelated) {
        return !cfg.sector.empty() && point_in_polygon(cfg.sector, p.lon, p.lat);
    }
    return p.lon >= cfg.lon_min && p.lon <= cfg.lon_max && p.lat >= cfg.lat_min &&
           p.lat <= cfg.lat_max;
}

std::pair<int, int> GridIndex::cell_of(const geo::GeoPoint& p) const {
    return {static_cast<int>(std::floor((p.lon - lon0_) / cell_)),
            static_cast<int>(std::floor((p.lat - lat0_) / cell_))};
}

GridIndex GridIndex::build(const std::vector<traj::Trajectory>& fleet, const DetectConfig& cfg) {
    GridIndex g;
    g.fleet_ = &fleet;
    g.lon0_ = cfg.lon_min;
    g.lat0_ = cfg.lat_min;
    g.cell_ = cfg.cell_size_deg;
    for (std::size_t ti = 0; ti < fleet.size(); ++ti) {
        const auto& tr = fleet[ti];
        for (std::size_t pi = 0; pi < tr.points.size(); ++pi) {
            const auto& p = tr.points[pi];
            if (!in_sa(p.pos, cfg)) continue;
            g.cells_[p.t][g.cell_of(p.pos)].push_back(Entry{ti, pi});
        }
    }
    return g;
}

std::vector<GridIndex::Entry> GridIndex::near(std::int64_t t, int cx, int cy, int cells) const {
    std::vector<Entry> out;
    const auto it = cells_.find(t);
    if (it == cells_.end()) return out;
    const auto& bucket = it->second;
    for (int x = cx - cells; x <= cx + cells; ++x) {
        for (int y = cy - cells; y <= cy + cells; ++y) {
            const auto c = bucket.find({x, y});
            if (c != bucket.end()) out.insert(out.end(), c->second.begin(), c->second.end());
        }
    }
    return out;
}

std::vector<GridIndex::Entry> GridIndex::at_time(std::int64_t t) const {
    std::vector<Entry> out;
    const auto it = cells_.find(t);
    if (it == cells_.end()) return out;
    for (const auto& [cell, entries] : it->second) {
        out.insert(out.end(), entries.begin(), entries.end());
    }
    return out;
}

bool GridIndex::empty_at(std::int64_t t) const {
    const auto it = cells_.find(t);
    return it == cells_.end() || it->second.empty();
}

namespace {

struct PlanarProj {
    Vec2 u;            // unit course direction
    double spd = 0.0;  // nm per second
    Vec2 v;            // velocity, nm per second
};

PlanarProj planar_proj(const evo::Projection& p) {
    PlanarProj out;
    const double c = geo::deg2rad(p.course);
    out.u = {std::sin(c), std::cos(c)};
    out.spd = p.h_speed / 3600.0;
    out.v = {out.spd * out.u.x, out.spd * out.u.y};
    return out;
}

struct Thresholds {
    double ct_th_s;
    double cpa_t_th_s;
    double cpa_d_h_th_nm;
};

// One projection pair against the pairwise constraint set (vertical gate is
// handled once per pair, outside).
bool cr_check(const Vec2& pa, const PlanarProj& a, const Vec2& pb, const PlanarProj& b,
              const Thresholds& th) {
    const double den = geo::cross(a.u, b.u);
    if (std::fabs(den) < 1e-12) return false;  // parallel tracks never cross
    const Vec2 w = pb - pa;
    const double sa = geo::cross(w, b.u) / den;
    const double sb = geo::cross(w, a.u) / den;
    if (sa < 0.0 || sb < 0.0) return false;  // crossing point already behind one aircraft

    const double inf = std::numeric_limits<double>::infinity();
    const double ta = a.spd > 0.0 ? sa / a.spd : inf;
    const double tb = b.spd > 0.0 ? sb / b.spd : inf;
    if (!(std::min(ta, tb) < th.ct_th_s)) return false;

    const Vec2 dv = b.v - a.v;
    const double v2 = geo::dot(dv, dv);
    double t_cpa, d_cpa;
    if (v2 < 1e-18) {
        t_cpa = 0.0;
        d_cpa = geo::norm(w);
    } else {
        t_cpa = std::max(0.0, -geo::dot(w, dv) / v2);
        d_cpa = geo::norm(w + t_cpa * dv);
    }
    if (!(t_cpa < th.cpa_t_th_s)) return false;
    return d_cpa < th.cpa_d_h_th_nm;
}

}  // namespace

bool pair_conflict(const traj::TrajPoint& a, const traj::TrajPoint& b,
                   const evo::DeviationStats& stats, const DetectConfig& cfg) {
    if (!(std::fabs(a.pos.alt - b.pos.alt) < cfg.vertical_threshold(a.pos.alt, b.pos.alt))) {
        return false;
    }
    const geo::TangentFrame frame(geo::pair_frame_center(a.pos, b.pos));
    const Vec2 pa = frame.to_plane(a.pos);
    const Vec2 pb = frame.to_plane(b.pos);
    const Thresholds th{cfg.ct_th_min * 60.0, cfg.cpa_t_th_min * 60.0, cfg.cpa_d_h_th_nm};

    const auto fan_a = evo::build_fan(a, stats);
    const auto fan_b = evo::build_fan(b, stats);
    std::vector<PlanarProj> projs_b;
    projs_b.reserve(fan_b.projections.size());
    for (const auto& p : fan_b.projections) projs_b.push_back(planar_proj(p));

    for (const auto& raw_a : fan_a.projections) {
        const PlanarProj pra = planar_proj(raw_a);
        for (const auto& prb : projs_b) {
            if (cr_check(pa, pra, pb, prb, th)) return true;
        }
    }
    return false;
}

bool pair_conflict_nominal(const traj::TrajPoint& a, const traj::TrajPoint& b,
                           const DetectConfig& cfg) {
    static const evo::DeviationStats empty_stats;
    return pair_conflict(a, b, empty_stats, cfg);
}

NeighborFeatures nominal_features(const traj::TrajPoint& own, const traj::TrajPoint& other,
                                  const geo::GeoPoint* fixpoint) {
    NeighborFeatures f;
    const geo::TangentFrame frame(geo::pair_frame_center(own.pos, other.pos));
    const Vec2 po = frame.to_plane(own.pos);
    const Vec2 pi = frame.to_plane(other.pos);
    const Vec2 vo = geo::velocity_nm_s(own.kin);
    const Vec2 vi = geo::velocity_nm_s(other.kin);

    const auto cpa = geo::cpa_planar(po, vo, own.pos.alt, own.kin.v_speed,
                                     pi, vi, other.pos.alt, other.kin.v_speed);
    f.d_h_cpa = cpa.d_h_cpa;
    f.d_v_cpa = cpa.d_v_cpa;
    f.t_cpa = cpa.t_cpa;

    const auto cp = geo::crossing_planar(po, own.kin.course, own.kin.h_speed,
                                         pi, other.kin.course, other.kin.h_speed);
    if (cp.exists) {
        f.d_cp = cp.d_cp;
        f.t_cp = cp.t_cp;
    }

    const double a_rad = geo::deg2rad(geo::wrap180(other.kin.course - own.kin.course));
    f.sin_a = std::sin(a_rad);
    f.cos_a = std::cos(a_rad);

    // Ownship bearing relative to the intruder's track, taken at the CPA.
    const Vec2 own_cpa = po + cpa.t_cpa * vo;
    const Vec2 intr_cpa = pi + cpa.t_cpa * vi;
    const Vec2 d = own_cpa - intr_cpa;
    if (geo::norm(d) < 1e-12) {
        f.sin_b = 0.0;
        f.cos_b = 1.0;
    } else {
        const double bearing = geo::rad2deg(std::atan2(d.x, d.y));
        const double b_rad = geo::deg2rad(geo::wrap180(bearing - other.kin.course));
        f.sin_b = std::sin(b_rad);
        f.cos_b = std::cos(b_rad);
    }

    if (fixpoint) {
        f.d_f = geo::horizontal_distance(own.pos, *fixpoint);
        if (f.d_f < 1e-9) {
            f.sin_bf = 0.0;
            f.cos_bf = 1.0;
        } else {
            const double bf = geo::wrap180(geo::initial_bearing(own.pos, *fixpoint) - own.kin.course);
            f.sin_bf = std::sin(geo::deg2rad(bf));
            f.cos_bf = std::cos(geo::deg2rad(bf));
        }
    }
    return f;
}

std::vector<Neighbor> neighbors(std::size_t focal, std::int64_t t, const GridIndex& grid,
                                const evo::DeviationStats& stats, const DetectConfig& cfg,
                                const geo::GeoPoint* fixpoint) {
    std::vector<Neighbor> out;
    const auto& fleet = grid.fleet();
    const auto& tr = fleet[focal];
    const auto idx = tr.index_at(t);
    if (!idx) return out;
    const traj::TrajPoint& own = tr.points[*idx];
    if (!in_sa(own.pos, cfg)) return out;

    std::vector<GridIndex::Entry> candidates;
    if (cfg.setting == Setting::SectorRelated) {
        candidates = grid.at_time(t);
    } else {
        const auto [cx, cy] = grid.cell_of(own.pos);
        candidates = grid.near(t, cx, cy, cfg.d_th_cells);
    }

    for (const auto& e : candidates) {
        if (e.traj == focal) continue;
        const traj::TrajPoint& other = fleet[e.traj].points[e.point];
        if (!pair_conflict(own, other, stats, cfg)) continue;
        Neighbor n;
        n.traj_index = e.traj;
        n.features = nominal_features(own, other, fixpoint);
        out.push_back(std::move(n));
    }
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.features.t_cpa != b.features.t_cpa) return a.features.t_cpa < b.features.t_cpa;
        return a.traj_index < b.traj_index;
    });
    return out;
}

namespace {

geo::GeoPoint box_exit_toward_destination(const geo::GeoPoint& origin,
                                          const geo::GeoPoint& destination,
                                          const DetectConfig& cfg) {
    const double dx = destination.lon - origin.lon;
    const double dy = destination.lat - origin.lat;
    if (dx == 0.0 && dy == 0.0) {
        throw std::runtime_error("fixpoint: origin and destination coincide");
    }
    // Clip the infinite origin-destination line against the SA box and take
    // the boundary crossing on the destination side.
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {origin.lon - cfg.lon_min, cfg.lon_max - origin.lon,
                         origin.lat - cfg.lat_min, cfg.lat_max - origin.lat};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) {
                throw std::runtime_error("fixpoint: origin-destination line runs parallel outside the area box");
            }
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0) {
            t0 = std::max(t0, r);
        } else {
            t1 = std::min(t1, r);
        }
    }
    if (t0 > t1) throw std::runtime_error("fixpoint: origin-destination line misses the area box");
    geo::GeoPoint out;
    out.lon = origin.lon + t1 * dx;
    out.lat = origin.lat + t1 * dy;
    out.alt = 0.0;
    return out;
}

// Intersection parameter of segment a->b with segment c->d along a->b.
std::optional<double> segment_intersection(double ax, double ay, double bx, double by,
                                           double cx, double cy, double dx, double dy) {
    const double r_x = bx - ax, r_y = by - ay;
    const double s_x = dx - cx, s_y = dy - cy;
    const double den = r_x * s_y - r_y * s_x;
    if (std::fabs(den) < 1e-15) return std::nullopt;
    const double u = ((cx - ax) * s_y - (cy - ay) * s_x) / den;
    const double v = ((cx - ax) * r_y - (cy - ay) * r_x) / den;
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return std::nullopt;
    return u;
}

}  // namespace

geo::GeoPoint fixpoint(const traj::Trajectory& t, const DetectConfig& cfg) {
    if (cfg.setting == Setting::SectorIgnorant) {
        const auto o = cfg.airports.find(t.id.apt_from);
        if (o == cfg.airports.end()) {
            throw std::runtime_error("fixpoint: unknown origin airport " + t.id.apt_from);
        }
        const auto d = cfg.airports.find(t.id.apt_to);
        if (d == cfg.airports.end()) {
            throw std::runtime_error("fixpoint: unknown destination airport " + t.id.apt_to);
        }
        return box_exit_toward_destination(o->second, d->second, cfg);
    }

    if (cfg.sector.size() < 3) throw std::runtime_error("fixpoint: sector polygon not configured");
    const auto& poly = cfg.sector;
    for (std::size_t i = 0; i + 1 < t.points.size(); ++i) {
        const auto& a = t.points[i].pos;
        const auto& b = t.points[i + 1].pos;
        if (!point_in_polygon(poly, a.lon, a.lat) || point_in_polygon(poly, b.lon, b.lat)) continue;
        // Inside-to-outside transition: first boundary crossing along it.
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < poly.size(); ++e) {
            const auto& [cx, cy] = poly[e];
            const auto& [dx2, dy2] = poly[(e + 1) % poly.size()];
            const auto u = segment_intersection(a.lon, a.lat, b.lon, b.lat, cx, cy, dx2, dy2);
            if (u && *u < best) best = *u;
        }
        if (std::isfinite(best)) {
            geo::GeoPoint out;
            out.lon = a.lon + best * (b.lon - a.lon);
            out.lat = a.lat + best * (b.lat - a.lat);
            out.alt = 0.0;
            return out;
        }
    }
    throw std::runtime_error("fixpoint: trajectory never exits the sector");
}

std::vector<double> EnrichedPoint::features() const {
    std::vector<double> out;
    out.reserve(3 + slots.size() * (kFeaturesPerNeighbor + 1));
    out.push_back(h);
    out.push_back(s_h);
    out.push_back(s_v);
    for (const auto& s : slots) {
        out.push_back(s.f.sin_bf);
        out.push_back(s.f.cos_bf);
        out.push_back(s.f.d_f);
        out.push_back(s.f.d_h_cpa);
        out.push_back(s.f.d_v_cpa);
        out.push_back(s.f.t_cpa);
        out.push_back(s.f.d_cp);
        out.push_back(s.f.t_cp);
        out.push_back(s.f.sin_a);
        out.push_back(s.f.cos_a);
        out.push_back(s.f.sin_b);
        out.push_back(s.f.cos_b);
        out.push_back(s.present ? 1.0 : 0.0);
    }
    return out;
}

EnrichedFlight enrich(std::size_t focal, const GridIndex& grid, const evo::DeviationStats& stats,
                      const DetectConfig& cfg) {
    const auto& tr = grid.fleet()[focal];
    EnrichedFlight out;
    out.id = tr.id;
    out.fixpoint = fixpoint(tr, cfg);
    out.points.reserve(tr.points.size());
    const int k = cfg.max_neighbors;
    for (const auto& p : tr.points) {
        EnrichedPoint ep;
        ep.t = p.t;
        ep.h = p.pos.alt;
        ep.s_h = p.kin.h_speed;
        ep.s_v = p.kin.v_speed;
        auto ns = neighbors(focal, p.t, grid, stats, cfg, &out.fixpoint);
        ep.conflict = !ns.empty();
        if (ns.size() > static_cast<std::size_t>(k)) {
            out.neighbor_overflow += ns.size() - k;
            ns.resize(k);
        }
        ep.slots.resize(k);
        for (std::size_t i = 0; i < ns.size(); ++i) {
            ep.slots[i].present = true;
            ep.slots[i].f = ns[i].features;
        }
        out.points.push_back(std::move(ep));
    }
    return out;
}

std::string enriched_header(int k) {
    std::string out = "flight_id,timestamp,h,s_h,s_v,conflict";
    const char* names[kFeaturesPerNeighbor] = {"sin_bf", "cos_bf", "d_f", "d_h_cpa", "d_v_cpa",
                                               "t_cpa", "d_cp", "t_cp", "sin_a", "cos_a",
                                               "sin_b", "cos_b"};
    for (int i = 0; i < k; ++i) {
        for (const char* n : names) out += ",n" + std::to_string(i) + "_" + n;
        out += ",n" + std::to_string(i) + "_present";
    }
    return out;
}

std::string enriched_row(const traj::FlightId& id, const EnrichedPoint& p) {
    std::string out = id.str() + "," + std::to_string(p.t) + "," + csv::format_double(p.h) + "," +
                      csv::format_double(p.s_h) + "," + csv::format_double(p.s_v) + "," +
                      (p.conflict ? "1" : "0");
    for (const auto& s : p.slots) {
        const double vals[kFeaturesPerNeighbor] = {
            s.f.sin_bf, s.f.cos_bf, s.f.d_f, s.f.d_h_cpa, s.f.d_v_cpa, s.f.t_cpa,
            s.f.d_cp, s.f.t_cp, s.f.sin_a, s.f.cos_a, s.f.sin_b, s.f.cos_b};
        for (double v : vals) out += "," + csv::format_double(v);
        out += s.present ? ",1" : ",0";
    }
    return out;
}

std::string enriched_csv(const std::vector<EnrichedFlight>& flights, int k) {
    std::string out = enriched_header(k) + "\n";
    for (const auto& fl : flights) {
        for (const auto& p : fl.points) out += enriched_row(fl.id, p) + "\n";
    }
    return out;
}

std::vector<EnrichedFlight> load_enriched(const std::string& path, int k) {
    const auto lines = csv::read_lines(path);
    std::vector<EnrichedFlight> out;
    const std::size_t expected = 6 + static_cast<std::size_t>(k) * (kFeaturesPerNeighbor + 1);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (li == 0 || lines[li].empty()) continue;
        const auto f = csv::split(lines[li]);
        if (f.size() != expected) {
            throw std::runtime_error("enriched line " + std::to_string(li + 1) + ": expected " +
                                     std::to_string(expected) + " fields, got " +
                                     std::to_string(f.size()));
        }
        const auto id = traj::FlightId::parse(f[0]);
        if (!id) throw std::runtime_error("enriched line " + std::to_string(li + 1) + ": bad flight id");
        if (out.empty() || !(out.back().id == *id)) {
            EnrichedFlight fl;
            fl.id = *id;
            out.push_back(std::move(fl));
        }
        EnrichedPoint p;
        std::int64_t t = 0;
        if (!csv::parse_int(f[1], t)) throw std::runtime_error("enriched: bad timestamp");
        p.t = t;
        auto num = [&](std::size_t i) {
            double v = 0.0;
            if (!csv::parse_double(f[i], v)) {
                throw std::runtime_error("enriched line " + std::to_string(li + 1) + ": bad number");
            }
            return v;
        };
        p.h = num(2);
        p.s_h = num(3);
        p.s_v = num(4);
        p.conflict = f[5] == "1";
        p.slots.resize(k);
        std::size_t c = 6;
        for (int s = 0; s < k; ++s) {
            auto& slot = p.slots[s];
            slot.f.sin_bf = num(c++);
            slot.f.cos_bf = num(c++);
            slot.f.d_f = num(c++);
            slot.f.d_h_cpa = num(c++);
            slot.f.d_v_cpa = num(c++);
            slot.f.t_cpa = num(c++);
            slot.f.d_cp = num(c++);
            slot.f.t_cp = num(c++);
            slot.f.sin_a = num(c++);
            slot.f.cos_a = num(c++);
            slot.f.sin_b = num(c++);
            slot.f.cos_b = num(c++);
            slot.present = f[c++] == "1";
        }
        out.back().points.push_back(std::move(p));
    }
    return out;
}

}  // namespace atc::detect
