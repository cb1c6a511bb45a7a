#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "atc/pipeline.hpp"

using atc::pipeline::ConfigError;
using atc::pipeline::PipelineConfig;

namespace {

int run_stage(const char* stage, const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error [%s]: %s\n", stage, e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error [%s]: %s\n", stage, e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conflict detection and controller-reaction imitation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "Configuration file (key = value)");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Override the scenario and model seeds")
        ->each([&](const std::string&) { seed_set = true; });

    auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario");

    auto* ingest = app.add_subcommand("ingest", "Parse and resample surveillance data");
    std::string surveillance_path;
    ingest->add_option("--surveillance", surveillance_path, "Surveillance CSV")->required();

    auto* enrich = app.add_subcommand("enrich", "Fit deviation statistics and detect conflicts");
    std::string trajectories_path, airports_path, stats_path;
    enrich->add_option("--trajectories", trajectories_path, "Resampled trajectory CSV")->required();
    enrich->add_option("--airports", airports_path, "Airport coordinates CSV");
    enrich->add_option("--stats", stats_path, "Existing deviation-stats JSON (skips refitting)");

    auto* lbl = app.add_subcommand("label", "Assign modes and action classes");
    std::string enriched_path, label_traj_path, events_path;
    lbl->add_option("--enriched", enriched_path, "Enriched point CSV")->required();
    lbl->add_option("--trajectories", label_traj_path, "Resampled trajectory CSV")->required();
    lbl->add_option("--events", events_path, "Controller event CSV")->required();

    auto* train = app.add_subcommand("train", "Train a reaction model");
    std::string labeled_path, model_kind = "vae";
    train->add_option("--labeled", labeled_path, "Labeled dataset CSV")->required();
    train->add_option("--model-kind", model_kind, "vae | encoder");

    auto* predict = app.add_subcommand("predict", "Predict modes and actions");
    std::string model_path, predict_labeled, feedback = "self";
    predict->add_option("--model", model_path, "Trained model file")->required();
    predict->add_option("--labeled", predict_labeled, "Labeled dataset CSV")->required();
    predict->add_option("--feedback", feedback, "self | teacher");

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against the truth");
    std::string truth_path, pred_path;
    evaluate->add_option("--truth", truth_path, "Labeled truth CSV")->required();
    evaluate->add_option("--pred", pred_path, "Prediction CSV (or a labeled CSV)")->required();

    auto* report = app.add_subcommand("report", "Emit metric tables and plot data");
    std::string report_pred;
    report->add_option("--pred", report_pred, "Prediction CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    PipelineConfig cfg;
    if (!config_path.empty()) {
        try {
            cfg = atc::pipeline::load_config(config_path);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "config error: %s\n", e.what());
            return 2;
        }
    }
    if (seed_set) {
        cfg.model.seed = seed;
        cfg.scenario.seed = seed;
    }

    if (synth->parsed()) {
        return run_stage("synth", [&] { atc::pipeline::stage_synth(cfg, out_dir); });
    }
    if (ingest->parsed()) {
        return run_stage("ingest",
                         [&] { atc::pipeline::stage_ingest(cfg, surveillance_path, out_dir); });
    }
    if (enrich->parsed()) {
        return run_stage("enrich", [&] {
            atc::pipeline::stage_enrich(cfg, trajectories_path, airports_path, out_dir, stats_path);
        });
    }
    if (lbl->parsed()) {
        return run_stage("label", [&] {
            atc::pipeline::stage_label(cfg, enriched_path, label_traj_path, events_path, out_dir);
        });
    }
    if (train->parsed()) {
        return run_stage("train",
                         [&] { atc::pipeline::stage_train(cfg, labeled_path, model_kind, out_dir); });
    }
    if (predict->parsed()) {
        return run_stage("predict", [&] {
            atc::pipeline::stage_predict(cfg, model_path, predict_labeled, feedback, out_dir);
        });
    }
    if (evaluate->parsed()) {
        return run_stage("evaluate",
                         [&] { atc::pipeline::stage_evaluate(cfg, truth_path, pred_path, out_dir); });
    }
    if (report->parsed()) {
        return run_stage("report", [&] { atc::pipeline::stage_report(cfg, report_pred, out_dir); });
    }
    return 2;
}
