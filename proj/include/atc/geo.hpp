#pragma once

#include <cstdint>
#include <optional>

namespace atc::geo {

// Mean-sphere Earth radius. Every distance in the library derives from this
// constant, so results are reproducible bit-for-bit given its value.
inline constexpr double kEarthRadiusNm = 6371000.0 / 1852.0;
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Normalize an angle in degrees to [0, 360).
double norm360(double deg);

/// Wrap an angle in degrees to [-180, 180).
double wrap180(double deg);

struct GeoPoint {
    double lon = 0.0;  // degrees, [-180, 180]
    double lat = 0.0;  // degrees, [-90, 90]
    double alt = 0.0;  // feet
};

struct Kinematics {
    double course = 0.0;   // degrees clockwise from true north, [0, 360)
    double h_speed = 0.0;  // knots
    double v_speed = 0.0;  // feet per minute, signed
};

struct TimedPoint {
    GeoPoint pos;
    std::int64_t t = 0;  // seconds since epoch
};

struct CpaResult {
    double t_cpa = 0.0;    // seconds until closest approach (clamped at 0)
    double d_h_cpa = 0.0;  // horizontal separation at CPA, nm
    double d_v_cpa = 0.0;  // vertical separation at CPA, feet
};

struct CrossingResult {
    bool exists = false;   // tracks are not parallel
    bool crossed = false;  // intersection lies behind at least one aircraft
    double d_cp = 0.0;     // nm between the aircraft when the first reaches the crossing point
    double t_cp = 0.0;     // seconds until the first aircraft reaches it
};

/// Planar coordinates on a local tangent plane: x east, y north, nautical miles.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 v);

/// Great-circle (haversine) distance in nautical miles. Symmetric, >= 0.
double horizontal_distance(const GeoPoint& a, const GeoPoint& b);

/// Initial great-circle bearing a -> b, degrees in [0, 360).
double initial_bearing(const GeoPoint& a, const GeoPoint& b);

/// Point reached from p after dist_nm along the given initial course.
/// Altitude is carried over unchanged.
GeoPoint destination(const GeoPoint& p, double course_deg, double dist_nm);

/// Great-circle midpoint of a and b (altitude = mean of the two).
GeoPoint midpoint(const GeoPoint& a, const GeoPoint& b);

/// Midpoint evaluated in a canonical argument order, so the result is
/// bit-identical for (a,b) and (b,a). Pairwise geometry built on this frame
/// center is exactly symmetric.
GeoPoint pair_frame_center(const GeoPoint& a, const GeoPoint& b);

/// Azimuthal equidistant projection centered on `center`. Distances and
/// bearings from the center are exact; the frame is intended for encounter
/// geometry within a few hundred nm of the center.
struct TangentFrame {
    GeoPoint center;

    explicit TangentFrame(const GeoPoint& c) : center(c) {}

    Vec2 to_plane(const GeoPoint& p) const;
    GeoPoint from_plane(const Vec2& v, double alt = 0.0) const;
};

/// Ground velocity on the tangent plane, nm per second.
Vec2 velocity_nm_s(const Kinematics& k);

/// Closest point of approach for two straight-line planar states.
/// Velocities are in nm/s, vertical speeds in ft/min. A zero relative
/// velocity degenerates to t_cpa = 0 with the current separation.
CpaResult cpa_planar(Vec2 pa, Vec2 va, double alt_a, double vs_a,
                     Vec2 pb, Vec2 vb, double alt_b, double vs_b);

/// Track-ray intersection for two planar states (course deg, speed kt).
CrossingResult crossing_planar(Vec2 pa, double course_a, double speed_a,
                               Vec2 pb, double course_b, double speed_b);

/// CPA of two aircraft states, computed on a tangent plane centered at the
/// midpoint of their positions.
CpaResult cpa(const GeoPoint& pa, const Kinematics& ka,
              const GeoPoint& pb, const Kinematics& kb);

/// Crossing point of the two ground tracks, same plane convention as cpa().
CrossingResult crossing_point(const GeoPoint& pa, const Kinematics& ka,
                              const GeoPoint& pb, const Kinematics& kb);

/// Course, horizontal and vertical speed from two consecutive fixes.
/// Requires cur.t > prev.t. When the horizontal displacement is degenerate
/// the course falls back to `fallback_course` (or 0 if absent).
Kinematics estimate_kinematics(const TimedPoint& prev, const TimedPoint& cur,
                               std::optional<double> fallback_course = std::nullopt);

}  // namespace atc::geo
