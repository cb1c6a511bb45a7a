#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atc/geo.hpp"

namespace atc::traj {

/// One parsed surveillance row.
struct RawTrackPoint {
    std::string callsign;
    std::string apt_from;
    std::string apt_to;
    geo::GeoPoint pos;
    std::int64_t t = 0;
};

/// Flights are keyed by callsign, airport pair and UTC day; the same callsign
/// recurs daily, so the day keeps different flights apart. `segment` numbers
/// the contiguous resampled pieces of one flight in time order.
struct FlightId {
    std::string callsign;
    std::string apt_from;
    std::string apt_to;
    std::int64_t date = 0;  // UTC day number (epoch seconds / 86400)
    int segment = 0;

    std::string str() const;
    static std::optional<FlightId> parse(const std::string& s);

    friend bool operator==(const FlightId&, const FlightId&) = default;
};

struct TrajPoint {
    geo::GeoPoint pos;
    std::int64_t t = 0;
    geo::Kinematics kin;
};

/// A contiguous resampled segment: strictly increasing timestamps, every one
/// a multiple of 5 s, consecutive gaps exactly 5 s.
struct Trajectory {
    FlightId id;
    std::vector<TrajPoint> points;

    std::int64_t first_t() const { return points.front().t; }
    std::int64_t last_t() const { return points.back().t; }

    /// Index of the point at timestamp t, if t lies on this segment's grid.
    std::optional<std::size_t> index_at(std::int64_t t) const;
};

struct AtcoEvent {
    std::string callsign;
    std::string apt_from;
    std::string apt_to;
    double t = 0.0;  // seconds; integer in files, fractional values accepted
    std::string mwm_code;
    std::string sector;
};

struct Association {
    std::size_t event_index = 0;
    std::size_t traj_index = 0;
    std::size_t point_index = 0;
};

enum class AssocFailure { NoMatch, Ambiguous };

struct AssociationReport {
    std::vector<Association> associated;
    std::vector<std::pair<std::size_t, AssocFailure>> failed;  // event index, reason
};

struct RawFlight {
    std::string callsign;
    std::string apt_from;
    std::string apt_to;
    std::int64_t date = 0;
    std::vector<RawTrackPoint> points;  // time sorted, duplicates removed
};

struct IngestReport {
    std::vector<std::string> row_errors;   // "line N: message"
    std::size_t rows_rejected = 0;
    std::size_t duplicates_dropped = 0;
    std::size_t segments_dropped = 0;      // resampled segments with < 2 points
};

struct IngestResult {
    std::vector<RawFlight> flights;
    IngestReport report;
};

inline constexpr std::int64_t kResampleStep = 5;
inline constexpr const char* kSurveillanceHeader =
    "callsign,apt_from,apt_to,lon_deg,lat_deg,alt_ft,timestamp_s";
inline constexpr const char* kEventHeader =
    "callsign,apt_from,apt_to,mwm_code,time_annotation_s,sector";

/// Parse surveillance rows, group them into flights by (callsign, airports,
/// UTC day), sort each group by time and drop duplicate timestamps.
IngestResult ingest_surveillance(const std::string& path);
IngestResult ingest_surveillance_lines(const std::vector<std::string>& lines);

/// Linear interpolation onto the 5 s grid. Gaps over `max_gap_s` split the
/// flight into separate segments; segments with fewer than two grid points
/// are dropped and counted in the report.
std::vector<Trajectory> resample_5s(const RawFlight& flight, std::int64_t max_gap_s = 60,
                                    IngestReport* report = nullptr);

/// Keep the level portions of a segment: maximal runs with |v_speed| below
/// `max_abs_vs_fpm` lasting at least `min_duration_s`.
std::vector<Trajectory> filter_level_segments(const Trajectory& t, double max_abs_vs_fpm = 500.0,
                                              std::int64_t min_duration_s = 120);

/// Match events to trajectories on callsign, airport pair, and time coverage;
/// within the match, pick the temporally closest point (earlier point on a
/// tie). Events matching zero or multiple trajectories are reported.
AssociationReport associate_events(const std::vector<AtcoEvent>& events,
                                   const std::vector<Trajectory>& trajectories);

std::vector<AtcoEvent> load_events(const std::string& path);
std::string events_csv(const std::vector<AtcoEvent>& events);

/// Trajectory points serialized back to the surveillance schema, losslessly.
std::string points_csv(const std::vector<Trajectory>& trajectories);

/// Ingest + resample a points CSV written by points_csv() or a generator.
std::vector<Trajectory> load_trajectories(const std::string& path, IngestReport* report = nullptr,
                                          std::int64_t max_gap_s = 60);

}  // namespace atc::traj
