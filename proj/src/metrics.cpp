#include "atc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "atc/csv.hpp"

namespace atc::metrics {

double score(double x_seconds, const ScoreParams& params) {
    const double z = x_seconds / (5.0 * params.n);
    return std::exp(-0.5 * z * z);
}

WeightedCounts& WeightedCounts::operator+=(const WeightedCounts& o) {
    tp_weighted += o.tp_weighted;
    fp_weighted += o.fp_weighted;
    fn_weighted += o.fn_weighted;
    tn_weighted += o.tn_weighted;
    tp_count += o.tp_count;
    fp_count += o.fp_count;
    fn_count += o.fn_count;
    tn_count += o.tn_count;
    return *this;
}

namespace {

int label_of(const EvalPoint& p, Taxonomy tx, bool truth) {
    if (tx == Taxonomy::Modes) {
        return static_cast<int>(truth ? p.truth_mode : p.pred_mode);
    }
    return static_cast<int>(truth ? p.truth_action : p.pred_action);
}

// Generic group membership: "assigning a resolution action".
bool in_g1(Taxonomy tx, int label) {
    if (tx == Taxonomy::Modes) return label == static_cast<int>(label::Mode::C1);
    return label != static_cast<int>(label::ActionClass::A0);
}

double closest_distance(const std::vector<double>& sorted_ts, double t) {
    if (sorted_ts.empty()) return std::numeric_limits<double>::infinity();
    const auto it = std::lower_bound(sorted_ts.begin(), sorted_ts.end(), t);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted_ts.end()) best = std::min(best, *it - t);
    if (it != sorted_ts.begin()) best = std::min(best, t - *(it - 1));
    return best;
}

struct FlightMarkers {
    std::vector<double> actual;   // sorted timestamps of actual action points
    std::vector<double> any_ratp; // actual plus annotated
};

FlightMarkers markers_of(const EvalFlight& fl) {
    FlightMarkers m;
    for (const auto& p : fl.points) {
        if (p.is_actual_ratp) m.actual.push_back(p.t);
        if (p.is_actual_ratp || p.is_annotated_ratp) m.any_ratp.push_back(p.t);
    }
    return m;
}

}  // namespace

WeightedCounts accumulate(const EvalStream& stream, Taxonomy taxonomy, int class_id,
                          const ScoreParams& params, bool force_unit_weights) {
    WeightedCounts out;
    for (const auto& fl : stream) {
        const FlightMarkers m = markers_of(fl);
        bool has_g1_truth = false;
        for (const auto& p : fl.points) has_g1_truth |= in_g1(taxonomy, label_of(p, taxonomy, true));
        if (has_g1_truth && m.actual.empty()) {
            throw std::runtime_error("inconsistent stream: flight " + fl.id.str() +
                                     " has action truths but no actual action point");
        }
        for (const auto& p : fl.points) {
            const int y = label_of(p, taxonomy, true);
            const int pr = label_of(p, taxonomy, false);
            if (pr == class_id && y == class_id) {
                ++out.tp_count;
                out.tp_weighted += 1.0;
            } else if (pr == class_id) {
                // False positive for this class; weight by the temporal
                // distance to the relevant action points.
                double w = 1.0;
                if (!force_unit_weights) {
                    if (!in_g1(taxonomy, class_id) && in_g1(taxonomy, y)) {
                        w = score(closest_distance(m.actual, p.t), params);
                    } else if (in_g1(taxonomy, class_id) && !in_g1(taxonomy, y)) {
                        w = 1.0 - score(closest_distance(m.any_ratp, p.t), params);
                    }
                    // Same-group subclass confusion keeps w = 1.
                }
                ++out.fp_count;
                out.fp_weighted += w;
                out.tp_weighted += 1.0 - w;
            } else if (y == class_id) {
                double w = 1.0;
                if (!force_unit_weights) {
                    if (!in_g1(taxonomy, class_id) && in_g1(taxonomy, pr)) {
                        w = 1.0 - score(closest_distance(m.any_ratp, p.t), params);
                    } else if (in_g1(taxonomy, class_id) && !in_g1(taxonomy, pr)) {
                        w = score(closest_distance(m.actual, p.t), params);
                    }
                }
                ++out.fn_count;
                out.fn_weighted += w;
                out.tn_weighted += 1.0 - w;
            } else {
                ++out.tn_count;
                out.tn_weighted += 1.0;
            }
        }
    }
    return out;
}

Prf wp_wr_wf1(const WeightedCounts& c) {
    Prf out;
    const double p_den = static_cast<double>(c.tp_count + c.fp_count);
    const double r_den = c.tp_weighted + c.fn_weighted;
    out.empty = (p_den == 0.0 && r_den == 0.0);
    out.precision = p_den > 0.0 ? c.tp_weighted / p_den : 0.0;
    out.recall = r_den > 0.0 ? c.tp_weighted / r_den : 0.0;
    const double f_den = out.precision + out.recall;
    out.f1 = f_den > 0.0 ? 2.0 * out.precision * out.recall / f_den : 0.0;
    return out;
}

int critical_misses(const EvalStream& stream, const CriticalMissParams& params) {
    int misses = 0;
    for (const auto& fl : stream) {
        std::vector<double> predicted_action_ts;
        for (const auto& p : fl.points) {
            if (p.pred_mode == label::Mode::C1) predicted_action_ts.push_back(p.t);
        }
        for (const auto& p : fl.points) {
            if (!p.is_actual_ratp) continue;
            // The action's marker set: the actual point plus its annotated
            // companions in the augmentation window before it.
            std::vector<double> ratps{p.t};
            for (const auto& q : fl.points) {
                if (!q.is_annotated_ratp) continue;
                const double lead = p.t - q.t;
                if (lead > 0.0 && lead <= params.assoc_window_s) ratps.push_back(q.t);
            }
            bool hit = false;
            for (double tp : predicted_action_ts) {
                for (double tr : ratps) {
                    if (std::fabs(tp - tr) <= params.near_window_s) {
                        hit = true;
                        break;
                    }
                }
                if (hit) break;
            }
            if (!hit) ++misses;
        }
    }
    return misses;
}

Report evaluate(const EvalStream& stream, const ScoreParams& params) {
    Report r;
    const char* mode_names[3] = {"C0", "C1", "C2"};
    const char* action_names[3] = {"A0", "A1", "A2"};
    for (int c = 0; c < 3; ++c) {
        ClassReport cr;
        cr.name = mode_names[c];
        cr.weighted = accumulate(stream, Taxonomy::Modes, c, params);
        cr.plain = accumulate(stream, Taxonomy::Modes, c, params, true);
        cr.weighted_prf = wp_wr_wf1(cr.weighted);
        cr.plain_prf = wp_wr_wf1(cr.plain);
        r.modes.push_back(std::move(cr));
    }
    for (int c = 0; c < 3; ++c) {
        ClassReport cr;
        cr.name = action_names[c];
        cr.weighted = accumulate(stream, Taxonomy::Actions, c, params);
        cr.plain = accumulate(stream, Taxonomy::Actions, c, params, true);
        cr.weighted_prf = wp_wr_wf1(cr.weighted);
        cr.plain_prf = wp_wr_wf1(cr.plain);
        r.actions.push_back(std::move(cr));
    }
    r.critical_misses = critical_misses(stream);
    for (const auto& fl : stream) {
        for (const auto& p : fl.points) r.actual_ratps += p.is_actual_ratp ? 1 : 0;
    }
    return r;
}

namespace {

void report_rows(std::string& out, const std::vector<ClassReport>& classes) {
    for (const auto& c : classes) {
        out += c.name + "," + csv::format_double(c.weighted_prf.precision) + "," +
               csv::format_double(c.weighted_prf.recall) + "," +
               csv::format_double(c.weighted_prf.f1) + "," +
               csv::format_double(c.plain_prf.precision) + "," +
               csv::format_double(c.plain_prf.recall) + "," + csv::format_double(c.plain_prf.f1) +
               "," + std::to_string(c.plain.tp_count) + "," + std::to_string(c.plain.fp_count) +
               "," + std::to_string(c.plain.fn_count) + "," + std::to_string(c.plain.tn_count) +
               "\n";
    }
}

nlohmann::json class_json(const ClassReport& c) {
    nlohmann::json j;
    j["class"] = c.name;
    j["weighted"] = {{"precision", c.weighted_prf.precision},
                     {"recall", c.weighted_prf.recall},
                     {"f1", c.weighted_prf.f1},
                     {"empty", c.weighted_prf.empty}};
    j["standard"] = {{"precision", c.plain_prf.precision},
                     {"recall", c.plain_prf.recall},
                     {"f1", c.plain_prf.f1},
                     {"empty", c.plain_prf.empty}};
    j["counts"] = {{"tp", c.plain.tp_count},
                   {"fp", c.plain.fp_count},
                   {"fn", c.plain.fn_count},
                   {"tn", c.plain.tn_count}};
    j["weighted_counts"] = {{"tp", c.weighted.tp_weighted},
                            {"fp", c.weighted.fp_weighted},
                            {"fn", c.weighted.fn_weighted},
                            {"tn", c.weighted.tn_weighted}};
    return j;
}

}  // namespace

std::string report_csv(const Report& r) {
    std::string out =
        "class,wp,wr,wf1,precision,recall,f1,tp,fp,fn,tn\n";
    report_rows(out, r.modes);
    report_rows(out, r.actions);
    out += "critical_misses," + std::to_string(r.critical_misses) + ",,,,,,,,,\n";
    out += "actual_ratps," + std::to_string(r.actual_ratps) + ",,,,,,,,,\n";
    return out;
}

std::string report_json(const Report& r) {
    nlohmann::json j;
    for (const auto& c : r.modes) j["modes"].push_back(class_json(c));
    for (const auto& c : r.actions) j["actions"].push_back(class_json(c));
    j["critical_misses"] = r.critical_misses;
    j["actual_ratps"] = r.actual_ratps;
    return j.dump(2) + "\n";
}

std::string score_curve_csv(const ScoreParams& params, int x_max_s) {
    std::string out = "x_s,score\n";
    for (int x = 0; x <= x_max_s; ++x) {
        out += std::to_string(x) + "," + csv::format_double(score(x, params)) + "\n";
    }
    return out;
}

}  // namespace atc::metrics
