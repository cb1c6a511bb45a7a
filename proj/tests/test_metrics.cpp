#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "atc/metrics.hpp"
#include "support/metrics_oracle.hpp"

using namespace atc;
using namespace atc::metrics;
using label::ActionClass;
using label::Mode;
using testsupport::oracle_accumulate;
using testsupport::random_stream;

TEST_CASE("score function") {
    ScoreParams p;
    CHECK(score(0.0, p) == 1.0);
    CHECK(score(20.0, p) == doctest::Approx(0.7261).epsilon(1e-4));
    CHECK(score(70.0, p) == doctest::Approx(0.0198).epsilon(1e-2));
    CHECK(std::fabs(score(70.0, p) - 0.0198) < 1e-4);
    CHECK(score(1e9, p) < 1e-12);
    for (double x : {0.0, 5.0, 25.0, 100.0}) {
        CHECK(score(x, p) > 0.0);
        CHECK(score(x, p) <= 1.0);
    }
}

TEST_CASE("worked two-point fixture for class C1") {
    EvalFlight fl;
    fl.id = traj::FlightId{"A1", "AAA", "BBB", 0, 0};
    EvalPoint p1;
    p1.t = 100.0;
    p1.truth_mode = Mode::C1;
    p1.pred_mode = Mode::C2;
    p1.is_actual_ratp = true;
    EvalPoint p2;
    p2.t = 130.0;
    p2.truth_mode = Mode::C2;
    p2.pred_mode = Mode::C1;
    fl.points = {p1, p2};
    EvalStream stream{fl};

    ScoreParams params;
    auto counts = accumulate(stream, Taxonomy::Modes, static_cast<int>(Mode::C1), params);
    CHECK(counts.fn_weighted == doctest::Approx(1.0));
    CHECK(counts.fp_weighted == doctest::Approx(0.5132).epsilon(1e-3));
    auto prf = wp_wr_wf1(counts);
    CHECK(prf.precision == doctest::Approx(0.4868).epsilon(1e-3));
    CHECK(prf.recall == doctest::Approx(0.3274).epsilon(1e-3));
    CHECK(prf.f1 == doctest::Approx(0.3915).epsilon(1e-3));
}

TEST_CASE("perfect predictions give unit metrics and unweighted counts") {
    std::mt19937_64 rng(1);
    auto stream = random_stream(rng);
    for (auto& fl : stream) {
        for (auto& p : fl.points) {
            p.pred_mode = p.truth_mode;
            p.pred_action = p.truth_action;
        }
    }
    ScoreParams params;
    for (int c = 0; c < 3; ++c) {
        auto w = accumulate(stream, Taxonomy::Modes, c, params);
        auto u = accumulate(stream, Taxonomy::Modes, c, params, true);
        CHECK(w.tp_weighted == doctest::Approx(static_cast<double>(u.tp_count)));
        CHECK(w.fp_weighted == 0.0);
        CHECK(w.fn_weighted == 0.0);
        auto prf = wp_wr_wf1(w);
        if (!prf.empty) {
            CHECK(prf.precision == doctest::Approx(1.0));
            CHECK(prf.recall == doctest::Approx(1.0));
            CHECK(prf.f1 == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("case machine matches the independent oracle") {
    std::mt19937_64 rng(7777);
    ScoreParams params;
    for (int rep = 0; rep < 1000; ++rep) {
        auto stream = random_stream(rng, 200, 2);
        for (auto tx : {Taxonomy::Modes, Taxonomy::Actions}) {
            for (int cls = 0; cls < 3; ++cls) {
                auto got = accumulate(stream, tx, cls, params);
                auto exp = oracle_accumulate(stream, tx, cls, params.n);
                CHECK(std::fabs(got.tp_weighted - exp.tp_w) < 1e-9);
                CHECK(std::fabs(got.fp_weighted - exp.fp_w) < 1e-9);
                CHECK(std::fabs(got.fn_weighted - exp.fn_w) < 1e-9);
                CHECK(std::fabs(got.tn_weighted - exp.tn_w) < 1e-9);
                CHECK(got.tp_count == exp.tp);
                CHECK(got.fp_count == exp.fp);
                CHECK(got.fn_count == exp.fn);
                CHECK(got.tn_count == exp.tn);
            }
        }
    }
}

TEST_CASE("unit weights reduce to standard precision and recall") {
    std::mt19937_64 rng(4242);
    ScoreParams params;
    for (int rep = 0; rep < 100; ++rep) {
        auto stream = random_stream(rng, 80, 2);
        for (auto tx : {Taxonomy::Modes, Taxonomy::Actions}) {
            for (int cls = 0; cls < 3; ++cls) {
                auto c = accumulate(stream, tx, cls, params, true);
                // Plain counting, written out independently.
                long tp = 0, fp = 0, fn = 0;
                for (const auto& fl : stream) {
                    for (const auto& p : fl.points) {
                        const int y = tx == Taxonomy::Modes ? static_cast<int>(p.truth_mode)
                                                            : static_cast<int>(p.truth_action);
                        const int pr = tx == Taxonomy::Modes ? static_cast<int>(p.pred_mode)
                                                             : static_cast<int>(p.pred_action);
                        tp += (y == cls && pr == cls) ? 1 : 0;
                        fp += (y != cls && pr == cls) ? 1 : 0;
                        fn += (y == cls && pr != cls) ? 1 : 0;
                    }
                }
                auto prf = wp_wr_wf1(c);
                const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
                const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
                CHECK(prf.precision == doctest::Approx(precision).epsilon(1e-12));
                CHECK(prf.recall == doctest::Approx(recall).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("count identities and metric ranges") {
    std::mt19937_64 rng(31);
    ScoreParams params;
    for (int rep = 0; rep < 200; ++rep) {
        auto stream = random_stream(rng, 120, 2);
        for (auto tx : {Taxonomy::Modes, Taxonomy::Actions}) {
            for (int cls = 0; cls < 3; ++cls) {
                auto c = accumulate(stream, tx, cls, params);
                // tp_weighted = #TP + sum(1 - w_fp) stays within its bounds.
                CHECK(c.tp_weighted >= static_cast<double>(c.tp_count) - 1e-9);
                CHECK(c.tp_weighted <= static_cast<double>(c.tp_count + c.fp_count) + 1e-9);
                CHECK(c.fp_weighted >= -1e-9);
                CHECK(c.fp_weighted <= static_cast<double>(c.fp_count) + 1e-9);
                CHECK(c.fn_weighted >= -1e-9);
                CHECK(c.fn_weighted <= static_cast<double>(c.fn_count) + 1e-9);
                CHECK(std::fabs((c.fp_weighted + (c.tp_weighted - c.tp_count)) -
                                static_cast<double>(c.fp_count)) < 1e-9);
                auto prf = wp_wr_wf1(c);
                CHECK(prf.precision >= 0.0);
                CHECK(prf.precision <= 1.0 + 1e-12);
                CHECK(prf.recall >= 0.0);
                CHECK(prf.recall <= 1.0 + 1e-12);
                CHECK(prf.f1 <= std::max(prf.precision, prf.recall) + 1e-12);
            }
        }
    }
}

TEST_CASE("zero occurrences report zeros with the empty flag") {
    EvalFlight fl;
    fl.id = traj::FlightId{"A1", "AAA", "BBB", 0, 0};
    EvalPoint p;
    p.t = 0.0;
    p.truth_mode = Mode::C0;
    p.pred_mode = Mode::C0;
    fl.points = {p};
    ScoreParams params;
    auto c = accumulate({fl}, Taxonomy::Modes, static_cast<int>(Mode::C2), params);
    auto prf = wp_wr_wf1(c);
    CHECK(prf.empty);
    CHECK(prf.precision == 0.0);
    CHECK(prf.recall == 0.0);
    CHECK(prf.f1 == 0.0);
}

TEST_CASE("inconsistent stream throws") {
    EvalFlight fl;
    fl.id = traj::FlightId{"A1", "AAA", "BBB", 0, 0};
    EvalPoint p;
    p.t = 0.0;
    p.truth_mode = Mode::C1;  // action truth but no actual action point anywhere
    p.pred_mode = Mode::C0;
    fl.points = {p};
    ScoreParams params;
    CHECK_THROWS(accumulate({fl}, Taxonomy::Modes, 1, params));
}

TEST_CASE("critical misses") {
    auto make_flight = [](std::vector<EvalPoint> pts) {
        EvalFlight fl;
        fl.id = traj::FlightId{"A1", "AAA", "BBB", 0, 0};
        fl.points = std::move(pts);
        return fl;
    };
    auto pt = [](double t, Mode truth, Mode pred, bool actual = false, bool annotated = false) {
        EvalPoint p;
        p.t = t;
        p.truth_mode = truth;
        p.pred_mode = pred;
        p.is_actual_ratp = actual;
        p.is_annotated_ratp = annotated;
        return p;
    };

    SUBCASE("prediction exactly at the actual point: no miss") {
        auto fl = make_flight({pt(100, Mode::C1, Mode::C1, true)});
        CHECK(critical_misses({fl}) == 0);
    }
    SUBCASE("prediction 60 s after the actual point is inside the window") {
        auto fl = make_flight({pt(100, Mode::C1, Mode::C2, true), pt(160, Mode::C2, Mode::C1)});
        CHECK(critical_misses({fl}) == 0);
    }
    SUBCASE("prediction exactly 70 s away still counts as near") {
        auto fl = make_flight({pt(100, Mode::C1, Mode::C2, true), pt(170, Mode::C2, Mode::C1)});
        CHECK(critical_misses({fl}) == 0);
    }
    SUBCASE("prediction 75 s away is a miss") {
        auto fl = make_flight({pt(100, Mode::C1, Mode::C2, true), pt(175, Mode::C2, Mode::C1)});
        CHECK(critical_misses({fl}) == 1);
    }
    SUBCASE("no action prediction at all is a miss per action") {
        auto fl = make_flight({pt(100, Mode::C1, Mode::C2, true), pt(600, Mode::C1, Mode::C2, true)});
        CHECK(critical_misses({fl}) == 2);
    }
    SUBCASE("a hit near an annotated companion saves the action") {
        auto fl = make_flight({pt(50, Mode::C1, Mode::C1, false, true),
                               pt(250, Mode::C1, Mode::C2, true)});
        CHECK(critical_misses({fl}) == 0);
    }
}

TEST_CASE("report output") {
    std::mt19937_64 rng(2);
    auto stream = random_stream(rng, 60, 2);
    ScoreParams params;
    auto rep = evaluate(stream, params);
    CHECK(rep.modes.size() == 3);
    CHECK(rep.actions.size() == 3);
    const auto csv_text = report_csv(rep);
    CHECK(csv_text.find("C1") != std::string::npos);
    CHECK(csv_text.find("critical_misses") != std::string::npos);
    const auto json_text = report_json(rep);
    CHECK(json_text.find("\"modes\"") != std::string::npos);
    const auto curve = score_curve_csv(params);
    CHECK(curve.find("x_s,score") == 0);
}
