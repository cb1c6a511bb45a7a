#pragma once

// Test-side oracle for the weighted evaluation scheme: a literal per-point
// transcription of the weighting cases with linear scans for every distance,
// kept independent of the library implementation it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "atc/metrics.hpp"

namespace atc::testsupport {

struct OracleCounts {
    double tp_w = 0, fp_w = 0, fn_w = 0, tn_w = 0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline double oracle_score(double x, int n) {
    return std::exp(-0.5 * std::pow(x / (5.0 * n), 2.0));
}

inline double oracle_dist(const metrics::EvalFlight& fl, double t, bool actual_only) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : fl.points) {
        const bool marker =
            actual_only ? q.is_actual_ratp : (q.is_actual_ratp || q.is_annotated_ratp);
        if (marker) best = std::min(best, std::fabs(q.t - t));
    }
    return best;
}

inline OracleCounts oracle_accumulate(const metrics::EvalStream& stream, metrics::Taxonomy tx,
                                      int cls, int n_param) {
    using metrics::Taxonomy;
    OracleCounts o;
    for (const auto& fl : stream) {
        for (const auto& p : fl.points) {
            const int y = tx == Taxonomy::Modes ? static_cast<int>(p.truth_mode)
                                                : static_cast<int>(p.truth_action);
            const int pr = tx == Taxonomy::Modes ? static_cast<int>(p.pred_mode)
                                                 : static_cast<int>(p.pred_action);
            auto g1 = [&](int v) { return tx == Taxonomy::Modes ? v == 1 : v != 0; };
            if (pr == cls && y == cls) {
                o.tp += 1;
                o.tp_w += 1.0;
            } else if (pr == cls) {
                double w;
                if (!g1(cls)) {
                    if (g1(y)) {
                        w = oracle_score(oracle_dist(fl, p.t, true), n_param);
                    } else {
                        w = 1.0;
                    }
                } else {
                    if (!g1(y)) {
                        w = 1.0 - oracle_score(oracle_dist(fl, p.t, false), n_param);
                    } else {
                        w = 1.0;
                    }
                }
                o.fp += 1;
                o.fp_w += w;
                o.tp_w += 1.0 - w;
            } else if (y == cls) {
                double w;
                if (!g1(cls)) {
                    if (g1(pr)) {
                        w = 1.0 - oracle_score(oracle_dist(fl, p.t, false), n_param);
                    } else {
                        w = 1.0;
                    }
                } else {
                    if (!g1(pr)) {
                        w = oracle_score(oracle_dist(fl, p.t, true), n_param);
                    } else {
                        w = 1.0;
                    }
                }
                o.fn += 1;
                o.fn_w += w;
                o.tn_w += 1.0 - w;
            } else {
                o.tn += 1;
                o.tn_w += 1.0;
            }
        }
    }
    return o;
}

/// Random but internally consistent evaluation stream: action truths only on
/// flights that carry an actual action point.
inline metrics::EvalStream random_stream(std::mt19937_64& rng, int max_points = 200,
                                         int flights = 3) {
    using label::ActionClass;
    using label::Mode;
    std::uniform_int_distribution<int> n_pts(10, max_points);
    std::uniform_int_distribution<int> n_act(0, 2);
    std::uniform_int_distribution<int> mode3(0, 2);
    std::uniform_int_distribution<int> act3(0, 2);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    metrics::EvalStream stream;
    for (int f = 0; f < flights; ++f) {
        metrics::EvalFlight fl;
        fl.id = traj::FlightId{"F" + std::to_string(f), "AAA", "BBB", 0, 0};
        const int n = n_pts(rng);
        const int actuals = n_act(rng);
        std::vector<int> actual_idx;
        for (int a = 0; a < actuals; ++a) {
            actual_idx.push_back(std::uniform_int_distribution<int>(2, n - 1)(rng));
        }
        for (int i = 0; i < n; ++i) {
            metrics::EvalPoint p;
            p.t = 5.0 * i;
            const bool is_actual =
                std::find(actual_idx.begin(), actual_idx.end(), i) != actual_idx.end();
            if (is_actual) {
                p.is_actual_ratp = true;
                p.truth_mode = Mode::C1;
                p.truth_action = coin(rng) < 0.5 ? ActionClass::A1 : ActionClass::A2;
            } else {
                bool annotated = false;
                for (int a : actual_idx) {
                    const double lead = 5.0 * (a - i);
                    if (lead > 0.0 && lead <= 250.0 && coin(rng) < 0.4) annotated = true;
                }
                if (annotated) {
                    p.is_annotated_ratp = true;
                    p.truth_mode = Mode::C1;
                    p.truth_action = ActionClass::A0;
                } else {
                    p.truth_mode = coin(rng) < 0.7 ? Mode::C0 : Mode::C2;
                    p.truth_action = ActionClass::A0;
                }
            }
            p.pred_mode = static_cast<Mode>(mode3(rng));
            p.pred_action = static_cast<ActionClass>(act3(rng));
            fl.points.push_back(p);
        }
        if (actual_idx.empty()) {
            for (auto& p : fl.points) {
                if (p.truth_mode == Mode::C1) p.truth_mode = Mode::C2;
                p.truth_action = ActionClass::A0;
                p.is_annotated_ratp = false;
            }
        }
        stream.push_back(std::move(fl));
    }
    return stream;
}

}  // namespace atc::testsupport
