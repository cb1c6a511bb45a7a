#include "atc/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atc::geo {

double norm360(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d < 0.0) d += 360.0;
    if (d >= 360.0) d = 0.0;  // fmod can land exactly on 360 after the add
    return d;
}

double wrap180(double deg) {
    double d = norm360(deg);
    return d >= 180.0 ? d - 360.0 : d;
}

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double horizontal_distance(const GeoPoint& a, const GeoPoint& b) {
    const double lat1 = deg2rad(a.lat), lat2 = deg2rad(b.lat);
    const double dlat = lat2 - lat1;
    const double dlon = deg2rad(b.lon - a.lon);
    const double sdlat = std::sin(dlat * 0.5);
    const double sdlon = std::sin(dlon * 0.5);
    const double h = sdlat * sdlat + std::cos(lat1) * std::cos(lat2) * sdlon * sdlon;
    const double c = 2.0 * std::atan2(std::sqrt(h), std::sqrt(std::max(0.0, 1.0 - h)));
    return kEarthRadiusNm * c;
}

double initial_bearing(const GeoPoint& a, const GeoPoint& b) {
    const double lat1 = deg2rad(a.lat), lat2 = deg2rad(b.lat);
    const double dlon = deg2rad(b.lon - a.lon);
    const double y = std::sin(dlon) * std::cos(lat2);
    const double x = std::cos(lat1) * std::sin(lat2) - std::sin(lat1) * std::cos(lat2) * std::cos(dlon);
    return norm360(rad2deg(std::atan2(y, x)));
}

GeoPoint destination(const GeoPoint& p, double course_deg, double dist_nm) {
    const double delta = dist_nm / kEarthRadiusNm;
    const double theta = deg2rad(course_deg);
    const double lat1 = deg2rad(p.lat), lon1 = deg2rad(p.lon);
    const double sin_lat2 = std::sin(lat1) * std::cos(delta) + std::cos(lat1) * std::sin(delta) * std::cos(theta);
    const double lat2 = std::asin(std::clamp(sin_lat2, -1.0, 1.0));
    const double lon2 = lon1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(lat1),
                                          std::cos(delta) - std::sin(lat1) * sin_lat2);
    GeoPoint out;
    out.lat = rad2deg(lat2);
    out.lon = wrap180(rad2deg(lon2));
    out.alt = p.alt;
    return out;
}

GeoPoint midpoint(const GeoPoint& a, const GeoPoint& b) {
    const double lat1 = deg2rad(a.lat), lat2 = deg2rad(b.lat);
    const double dlon = deg2rad(b.lon - a.lon);
    const double bx = std::cos(lat2) * std::cos(dlon);
    const double by = std::cos(lat2) * std::sin(dlon);
    const double lat3 = std::atan2(std::sin(lat1) + std::sin(lat2),
                                   std::sqrt((std::cos(lat1) + bx) * (std::cos(lat1) + bx) + by * by));
    const double lon3 = deg2rad(a.lon) + std::atan2(by, std::cos(lat1) + bx);
    GeoPoint out;
    out.lat = rad2deg(lat3);
    out.lon = wrap180(rad2deg(lon3));
    out.alt = 0.5 * (a.alt + b.alt);
    return out;
}

Vec2 TangentFrame::to_plane(const GeoPoint& p) const {
    const double d = horizontal_distance(center, p);
    if (d <= 0.0) return {0.0, 0.0};
    const double b = deg2rad(initial_bearing(center, p));
    return {d * std::sin(b), d * std::cos(b)};
}

GeoPoint TangentFrame::from_plane(const Vec2& v, double alt) const {
    const double d = norm(v);
    GeoPoint out = center;
    out.alt = alt;
    if (d <= 0.0) return out;
    out = destination(center, rad2deg(std::atan2(v.x, v.y)), d);
    out.alt = alt;
    return out;
}

Vec2 velocity_nm_s(const Kinematics& k) {
    const double s = k.h_speed / 3600.0;
    const double c = deg2rad(k.course);
    return {s * std::sin(c), s * std::cos(c)};
}

CpaResult cpa_planar(Vec2 pa, Vec2 va, double alt_a, double vs_a,
                     Vec2 pb, Vec2 vb, double alt_b, double vs_b) {
    const Vec2 dp = pb - pa;
    const Vec2 dv = vb - va;
    const double v2 = dot(dv, dv);
    CpaResult r;
    if (v2 < 1e-18) {
        // Identical velocities: separation is constant.
        r.t_cpa = 0.0;
        r.d_h_cpa = norm(dp);
        r.d_v_cpa = std::fabs(alt_b - alt_a);
        return r;
    }
    r.t_cpa = std::max(0.0, -dot(dp, dv) / v2);
    r.d_h_cpa = norm(dp + r.t_cpa * dv);
    const double dvs = (vs_b - vs_a) / 60.0;  // ft/s
    r.d_v_cpa = std::fabs((alt_b - alt_a) + r.t_cpa * dvs);
    return r;
}

CrossingResult crossing_planar(Vec2 pa, double course_a, double speed_a,
                               Vec2 pb, double course_b, double speed_b) {
    CrossingResult r;
    const Vec2 ua{std::sin(deg2rad(course_a)), std::cos(deg2rad(course_a))};
    const Vec2 ub{std::sin(deg2rad(course_b)), std::cos(deg2rad(course_b))};
    const double den = cross(ua, ub);
    if (std::fabs(den) < 1e-12) return r;  // parallel tracks
    r.exists = true;
    const Vec2 w = pb - pa;
    const double sa = cross(w, ub) / den;  // nm along a's ray
    const double sb = cross(w, ua) / den;  // nm along b's ray
    r.crossed = (sa < 0.0) || (sb < 0.0);

    const double inf = std::numeric_limits<double>::infinity();
    const double ta = speed_a > 0.0 ? sa / (speed_a / 3600.0) : inf;
    const double tb = speed_b > 0.0 ? sb / (speed_b / 3600.0) : inf;
    r.t_cp = std::min(ta, tb);
    if (std::isfinite(r.t_cp)) {
        const Vec2 qa = pa + r.t_cp * Vec2{speed_a / 3600.0 * ua.x, speed_a / 3600.0 * ua.y};
        const Vec2 qb = pb + r.t_cp * Vec2{speed_b / 3600.0 * ub.x, speed_b / 3600.0 * ub.y};
        r.d_cp = norm(qa - qb);
    } else {
        r.d_cp = norm(w);
    }
    return r;
}

namespace {

// Canonical argument order so that pairwise results are exactly symmetric:
// every CpaResult/CrossingResult field is invariant under a swap, and fixing
// the order makes the floating-point evaluation identical for both calls.
bool swap_for_canonical_order(const GeoPoint& a, const GeoPoint& b) {
    if (a.lon != b.lon) return b.lon < a.lon;
    if (a.lat != b.lat) return b.lat < a.lat;
    return b.alt < a.alt;
}

}  // namespace

GeoPoint pair_frame_center(const GeoPoint& a, const GeoPoint& b) {
    return swap_for_canonical_order(a, b) ? midpoint(b, a) : midpoint(a, b);
}

CpaResult cpa(const GeoPoint& pa, const Kinematics& ka,
              const GeoPoint& pb, const Kinematics& kb) {
    if (swap_for_canonical_order(pa, pb)) return cpa(pb, kb, pa, ka);
    const TangentFrame frame(midpoint(pa, pb));
    return cpa_planar(frame.to_plane(pa), velocity_nm_s(ka), pa.alt, ka.v_speed,
                      frame.to_plane(pb), velocity_nm_s(kb), pb.alt, kb.v_speed);
}

CrossingResult crossing_point(const GeoPoint& pa, const Kinematics& ka,
                              const GeoPoint& pb, const Kinematics& kb) {
    if (swap_for_canonical_order(pa, pb)) return crossing_point(pb, kb, pa, ka);
    const TangentFrame frame(midpoint(pa, pb));
    return crossing_planar(frame.to_plane(pa), ka.course, ka.h_speed,
                           frame.to_plane(pb), kb.course, kb.h_speed);
}

Kinematics estimate_kinematics(const TimedPoint& prev, const TimedPoint& cur,
                               std::optional<double> fallback_course) {
    if (cur.t <= prev.t) throw std::invalid_argument("estimate_kinematics: cur.t must exceed prev.t");
    const double dt = static_cast<double>(cur.t - prev.t);
    const double d = horizontal_distance(prev.pos, cur.pos);
    Kinematics k;
    if (d < 1e-9) {
        k.course = fallback_course ? norm360(*fallback_course) : 0.0;
    } else {
        k.course = initial_bearing(prev.pos, cur.pos);
    }
    k.h_speed = d / dt * 3600.0;
    k.v_speed = (cur.pos.alt - prev.pos.alt) / dt * 60.0;
    return k;
}

}  // namespace atc::geo
