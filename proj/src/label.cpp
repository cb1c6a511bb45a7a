#include "atc/label.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "atc/csv.hpp"
#include "atc/geo.hpp"

namespace atc::label {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::C0: return "C0";
        case Mode::C1: return "C1";
        case Mode::C2: return "C2";
    }
    return "?";
}

const char* to_string(ActionClass a) {
    switch (a) {
        case ActionClass::A0: return "A0";
        case ActionClass::A1: return "A1";
        case ActionClass::A2: return "A2";
    }
    return "?";
}

std::optional<Mode> mode_from_string(const std::string& s) {
    if (s == "C0") return Mode::C0;
    if (s == "C1") return Mode::C1;
    if (s == "C2") return Mode::C2;
    return std::nullopt;
}

std::optional<ActionClass> action_from_string(const std::string& s) {
    if (s == "A0") return ActionClass::A0;
    if (s == "A1") return ActionClass::A1;
    if (s == "A2") return ActionClass::A2;
    return std::nullopt;
}

ActionClass action_from_code(const std::string& mwm_code, const LabelConfig& cfg) {
    const auto it = cfg.code_map.find(mwm_code);
    if (it == cfg.code_map.end()) {
        throw std::runtime_error("unmapped resolution action code: " + mwm_code);
    }
    return it->second;
}

std::optional<std::size_t> locate_actual_ratp(const detect::EnrichedFlight& flight,
                                              std::size_t assoc_point_index,
                                              const LabelConfig& cfg) {
    const std::int64_t t_assoc = flight.points.at(assoc_point_index).t;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i <= assoc_point_index; ++i) {
        const auto& p = flight.points[i];
        if (!p.conflict) continue;
        if (static_cast<double>(t_assoc - p.t) > cfg.window_duration_s) continue;
        best = i;  // scanning forward, so the last hit is the temporally closest
    }
    return best;
}

LabeledFlight annotate_modes(const detect::EnrichedFlight& flight, const traj::Trajectory& track,
                             const std::vector<std::pair<std::size_t, ActionClass>>& actions,
                             const LabelConfig& cfg) {
    if (flight.points.size() != track.points.size()) {
        throw std::invalid_argument("annotate_modes: enrichment and trajectory disagree on length");
    }
    LabeledFlight out;
    out.id = flight.id;
    const std::size_t n = flight.points.size();
    if (n < 2) return out;

    std::vector<bool> is_actual(n, false);
    std::vector<ActionClass> action_at(n, ActionClass::A0);
    for (const auto& [idx, cls] : actions) {
        is_actual.at(idx) = true;
        action_at.at(idx) = cls;
    }

    // The last grid point has no successor for the delta targets.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& p = flight.points[i];
        bool in_window = false;
        for (const auto& [ridx, cls] : actions) {
            (void)cls;
            const std::int64_t t_r = flight.points[ridx].t;
            const double lead = static_cast<double>(t_r - p.t);
            if (lead > 0.0 && lead <= cfg.augment_window_s) {
                in_window = true;
                break;
            }
        }

        LabeledRow row;
        row.point = p;
        if (is_actual[i]) {
            row.mode = Mode::C1;
            row.is_actual_ratp = true;
            row.action = action_at[i];
        } else if (in_window) {
            if (!p.conflict) continue;  // augmentation keeps only conflict-bearing points
            row.mode = Mode::C1;
            row.is_annotated_ratp = true;
        } else {
            row.mode = p.conflict ? Mode::C2 : Mode::C0;
        }
        const auto& k0 = track.points[i].kin;
        const auto& k1 = track.points[i + 1].kin;
        row.cont.d_course = geo::wrap180(k1.course - k0.course);
        row.cont.d_sh = k1.h_speed - k0.h_speed;
        row.cont.d_sv = k1.v_speed - k0.v_speed;
        row.cont.d_t = static_cast<double>(track.points[i + 1].t - track.points[i].t);
        out.rows.push_back(std::move(row));
    }
    return out;
}

LabeledFlight subsample(const LabeledFlight& flight, int step) {
    if (step < 1) throw std::invalid_argument("subsample: step must be >= 1");
    LabeledFlight out;
    out.id = flight.id;
    int counter = 0;
    for (const auto& row : flight.rows) {
        if (row.mode == Mode::C1) {
            out.rows.push_back(row);
            counter = 0;
        } else {
            ++counter;
            if (counter % step == 0) out.rows.push_back(row);
        }
    }
    // Refresh the time-to-next-row target over the retained rows.
    for (std::size_t i = 0; i + 1 < out.rows.size(); ++i) {
        out.rows[i].cont.d_t =
            static_cast<double>(out.rows[i + 1].point.t - out.rows[i].point.t);
    }
    return out;
}

std::vector<PriorRow> prior_report(const LabeledDataset& dataset, const std::vector<int>& steps) {
    std::vector<PriorRow> out;
    for (int step : steps) {
        std::size_t c[3] = {0, 0, 0};
        for (const auto& fl : dataset.flights) {
            const auto sub = subsample(fl, step);
            for (const auto& r : sub.rows) ++c[static_cast<int>(r.mode)];
        }
        const double total = static_cast<double>(c[0] + c[1] + c[2]);
        if (total == 0.0) throw std::runtime_error("prior_report: empty dataset");
        out.push_back(PriorRow{step, c[0] / total, c[1] / total, c[2] / total});
    }
    return out;
}

std::string prior_csv(const std::vector<PriorRow>& rows) {
    std::string out = "step,C0,C1,C2\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + csv::format_double(r.c0) + "," +
               csv::format_double(r.c1) + "," + csv::format_double(r.c2) + "\n";
    }
    return out;
}

LabeledDataset label_flights(const std::vector<detect::EnrichedFlight>& flights,
                             const std::vector<traj::Trajectory>& tracks,
                             const traj::AssociationReport& assoc,
                             const std::vector<traj::AtcoEvent>& events, const LabelConfig& cfg,
                             LabelReport* report) {
    LabelReport rep;
    // Collect located RATPs per flight index; remember which flights had
    // associations so fully-rejected ones can be dropped.
    std::vector<std::vector<std::pair<std::size_t, ActionClass>>> ratps(flights.size());
    std::vector<int> assoc_count(flights.size(), 0);
    std::vector<int> located_count(flights.size(), 0);

    for (const auto& a : assoc.associated) {
        // Associations index the trajectory list; map to the enriched flight
        // with the same id.
        std::size_t fi = flights.size();
        for (std::size_t i = 0; i < flights.size(); ++i) {
            if (flights[i].id == tracks[a.traj_index].id) {
                fi = i;
                break;
            }
        }
        if (fi == flights.size()) continue;  // flight not enriched (e.g. no fixpoint)
        ++assoc_count[fi];
        const auto ratp = locate_actual_ratp(flights[fi], a.point_index, cfg);
        if (!ratp) {
            ++rep.pairs_rejected;
            continue;
        }
        ++located_count[fi];
        ++rep.events_located;
        ratps[fi].emplace_back(*ratp, action_from_code(events[a.event_index].mwm_code, cfg));
    }

    LabeledDataset out;
    for (std::size_t fi = 0; fi < flights.size(); ++fi) {
        if (assoc_count[fi] > 0 && located_count[fi] == 0) {
            ++rep.flights_dropped;  // recorded action with no detectable conflict context
            continue;
        }
        const traj::Trajectory* track = nullptr;
        for (const auto& t : tracks) {
            if (t.id == flights[fi].id) {
                track = &t;
                break;
            }
        }
        if (!track) continue;
        auto labeled = annotate_modes(flights[fi], *track, ratps[fi], cfg);
        if (!labeled.rows.empty()) out.flights.push_back(std::move(labeled));
    }
    if (report) *report = rep;
    return out;
}

LabeledDataset subsample_dataset(const LabeledDataset& dataset, int step) {
    LabeledDataset out;
    for (const auto& fl : dataset.flights) {
        auto sub = subsample(fl, step);
        if (!sub.rows.empty()) out.flights.push_back(std::move(sub));
    }
    return out;
}

std::string labeled_csv(const LabeledDataset& dataset, int k) {
    // The enriched layout with the label columns appended.
    std::string out = detect::enriched_header(k) +
                      ",mode,action,d_course,d_sh,d_sv,d_t,is_actual_ratp,is_annotated_ratp\n";
    for (const auto& fl : dataset.flights) {
        for (const auto& r : fl.rows) {
            out += detect::enriched_row(fl.id, r.point);
            out += std::string(",") + to_string(r.mode) + "," + to_string(r.action) + "," +
                   csv::format_double(r.cont.d_course) + "," + csv::format_double(r.cont.d_sh) +
                   "," + csv::format_double(r.cont.d_sv) + "," + csv::format_double(r.cont.d_t) +
                   "," + (r.is_actual_ratp ? "1" : "0") + "," + (r.is_annotated_ratp ? "1" : "0") +
                   "\n";
        }
    }
    return out;
}

LabeledDataset load_labeled(const std::string& path, int k) {
    const auto lines = csv::read_lines(path);
    LabeledDataset out;
    const std::size_t enriched_cols = 6 + static_cast<std::size_t>(k) * 13;
    const std::size_t expected = enriched_cols + 8;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (li == 0 || lines[li].empty()) continue;
        const auto f = csv::split(lines[li]);
        if (f.size() != expected) {
            throw std::runtime_error("labeled line " + std::to_string(li + 1) + ": expected " +
                                     std::to_string(expected) + " fields, got " +
                                     std::to_string(f.size()));
        }
        const auto id = traj::FlightId::parse(f[0]);
        if (!id) throw std::runtime_error("labeled line " + std::to_string(li + 1) + ": bad flight id");

        auto num = [&](std::size_t i) {
            double v = 0.0;
            if (!csv::parse_double(f[i], v)) {
                throw std::runtime_error("labeled line " + std::to_string(li + 1) + ": bad number");
            }
            return v;
        };

        LabeledRow r;
        std::int64_t t = 0;
        csv::parse_int(f[1], t);
        r.point.t = t;
        r.point.h = num(2);
        r.point.s_h = num(3);
        r.point.s_v = num(4);
        r.point.conflict = f[5] == "1";
        r.point.slots.resize(k);
        std::size_t c = 6;
        for (int s = 0; s < k; ++s) {
            auto& slot = r.point.slots[s];
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
        const auto mode = mode_from_string(f[c]);
        const auto action = action_from_string(f[c + 1]);
        if (!mode || !action) {
            throw std::runtime_error("labeled line " + std::to_string(li + 1) + ": bad label");
        }
        r.mode = *mode;
        r.action = *action;
        r.cont.d_course = num(c + 2);
        r.cont.d_sh = num(c + 3);
        r.cont.d_sv = num(c + 4);
        r.cont.d_t = num(c + 5);
        r.is_actual_ratp = f[c + 6] == "1";
        r.is_annotated_ratp = f[c + 7] == "1";

        if (out.flights.empty() || !(out.flights.back().id == *id)) {
            LabeledFlight fl;
            fl.id = *id;
            out.flights.push_back(std::move(fl));
        }
        out.flights.back().rows.push_back(std::move(r));
    }
    return out;
}

}  // namespace atc::label
