#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "atc/evofan.hpp"
#include "atc/geo.hpp"
#include "atc/trajectory.hpp"

namespace atc::detect {

enum class Setting { SectorIgnorant, SectorRelated };

struct DetectConfig {
    Setting setting = Setting::SectorIgnorant;

    // SA bounding box (sector-ignorant) / bounding box of the indexed area.
    double lon_min = -10.0, lon_max = 3.0;
    double lat_min = 36.0, lat_max = 44.0;

    // Sector polygon (lon, lat), used when setting == SectorRelated.
    std::vector<std::pair<double, double>> sector;

    double cell_size_deg = 0.5;
    int d_th_cells = 5;  // Chebyshev cell distance gate; ignored in sector-related mode

    double ct_th_min = 20.0;       // crossing-time threshold
    double cpa_d_h_th_nm = 15.0;   // horizontal CPA distance threshold
    double cpa_t_th_min = 30.0;    // time-to-CPA threshold
    double d_v_low_ft = 1000.0;    // vertical threshold below the RVSM boundary
    double d_v_high_ft = 2000.0;   // vertical threshold at/above it
    double rvsm_boundary_ft = 41000.0;

    int max_neighbors = 4;  // K fixed-width neighbor slots per enriched point

    // Airport coordinates for the sector-ignorant fixpoint construction.
    std::map<std::string, geo::GeoPoint> airports;

    double vertical_threshold(double alt_a, double alt_b) const {
        return std::min(alt_a, alt_b) < rvsm_boundary_ft ? d_v_low_ft : d_v_high_ft;
    }
};

/// Pairwise features of one conflicting intruder, computed from the nominal
/// (zero-deviation) projections plus the ownship's fixpoint geometry.
struct NeighborFeatures {
    double sin_bf = 0.0, cos_bf = 1.0;  // relative bearing of the fixpoint
    double d_f = 0.0;                   // distance to the fixpoint, nm
    double d_h_cpa = 0.0;               // nm
    double d_v_cpa = 0.0;               // ft
    double t_cpa = 0.0;                 // s
    double d_cp = 0.0;                  // nm
    double t_cp = 0.0;                  // s
    double sin_a = 0.0, cos_a = 1.0;    // track intersection angle
    double sin_b = 0.0, cos_b = 1.0;    // ownship bearing w.r.t. the intruder at CPA
};

inline constexpr int kFeaturesPerNeighbor = 12;  // plus one presence flag per slot

struct Neighbor {
    std::size_t traj_index = 0;
    NeighborFeatures features;
};

struct NeighborSlot {
    bool present = false;
    NeighborFeatures f;
};

struct EnrichedPoint {
    std::int64_t t = 0;
    double h = 0.0;    // altitude, ft
    double s_h = 0.0;  // horizontal speed, kt
    double s_v = 0.0;  // vertical speed, fpm
    bool conflict = false;
    std::vector<NeighborSlot> slots;  // exactly K, ascending t_cpa, zero padded

    /// Model feature layout: [h, s_h, s_v] then per slot 12 features + presence.
    std::vector<double> features() const;
};

struct EnrichedFlight {
    traj::FlightId id;
    geo::GeoPoint fixpoint;
    std::vector<EnrichedPoint> points;
    std::size_t neighbor_overflow = 0;  // conflicting neighbors beyond the K slots
};

/// Spatio-temporal index: flights per grid cell per resampled timestamp.
class GridIndex {
  public:
    struct Entry {
        std::size_t traj = 0;
        std::size_t point = 0;
    };

    static GridIndex build(const std::vector<traj::Trajectory>& fleet, const DetectConfig& cfg);

    /// Entries in cells within `cells` Chebyshev distance of (cx, cy) at t.
    std::vector<Entry> near(std::int64_t t, int cx, int cy, int cells) const;

    /// All entries indexed at t (sector-related gathering).
    std::vector<Entry> at_time(std::int64_t t) const;

    const std::vector<traj::Trajectory>& fleet() const { return *fleet_; }

    std::pair<int, int> cell_of(const geo::GeoPoint& p) const;
    bool empty_at(std::int64_t t) const;

  private:
    const std::vector<traj::Trajectory>* fleet_ = nullptr;
    double lon0_ = 0.0, lat0_ = 0.0, cell_ = 0.5;
    std::unordered_map<std::int64_t, std::map<std::pair<int, int>, std::vector<Entry>>> cells_;
};

bool point_in_polygon(const std::vector<std::pair<double, double>>& poly, double lon, double lat);

/// Whether the position lies inside the configured area of responsibility.
bool in_sa(const geo::GeoPoint& p, const DetectConfig& cfg);

/// Pair conflict test: true when at least one pair of fan projections (one
/// per aircraft) jointly satisfies all constraints: crossing point ahead of
/// both and reached within ct_th, CPA distance and time below thresholds,
/// current altitude difference below the applicable vertical threshold.
bool pair_conflict(const traj::TrajPoint& a, const traj::TrajPoint& b,
                   const evo::DeviationStats& stats, const DetectConfig& cfg);

/// Nominal-trajectories-only variant of the constraint test.
bool pair_conflict_nominal(const traj::TrajPoint& a, const traj::TrajPoint& b,
                           const DetectConfig& cfg);

/// Pairwise feature block from the nominal projections.
NeighborFeatures nominal_features(const traj::TrajPoint& own, const traj::TrajPoint& other,
                                  const geo::GeoPoint* fixpoint);

/// Conflicting intruders of the focal flight at time t. Candidates come from
/// the grid cells within d_th_cells of the focal cell (sector-ignorant) or
/// from every indexed flight (sector-related).
std::vector<Neighbor> neighbors(std::size_t focal, std::int64_t t, const GridIndex& grid,
                                const evo::DeviationStats& stats, const DetectConfig& cfg,
                                const geo::GeoPoint* fixpoint = nullptr);

/// Reference point for the bearing/distance features: the sector exit point
/// (sector-related) or the SA-box exit of the origin-destination line
/// (sector-ignorant). Throws when the construction is impossible.
geo::GeoPoint fixpoint(const traj::Trajectory& t, const DetectConfig& cfg);

EnrichedFlight enrich(std::size_t focal, const GridIndex& grid, const evo::DeviationStats& stats,
                      const DetectConfig& cfg);

std::string enriched_header(int k);
std::string enriched_row(const traj::FlightId& id, const EnrichedPoint& p);
std::string enriched_csv(const std::vector<EnrichedFlight>& flights, int k);
std::vector<EnrichedFlight> load_enriched(const std::string& path, int k);

}  // namespace atc::detect
