#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "atc/detect.hpp"
#include "atc/evofan.hpp"
#include "atc/label.hpp"
#include "atc/metrics.hpp"
#include "atc/model.hpp"
#include "atc/synth.hpp"

namespace atc::pipeline {

/// Thrown on configuration problems (maps to exit code 2 in the CLI).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every tunable of every stage, with its default. The scenario generator
/// shares the detection area box.
struct PipelineConfig {
    detect::DetectConfig detect;
    label::LabelConfig label;
    model::ModelConfig model;
    metrics::ScoreParams score;

    int fan_bins = 20;
    double fan_horizon_s = evo::kDefaultHorizonS;

    std::int64_t max_gap_s = 60;
    bool level_filter = false;
    double level_vs_fpm = 500.0;
    std::int64_t level_min_duration_s = 120;

    synth::ScenarioSpec scenario;
};

/// Parse the key = value configuration text; '#' starts a comment. Unknown
/// keys and malformed values raise ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

/// Full echo of the effective configuration, sorted by key; parsing it back
/// reproduces the same configuration.
std::string render_config(const PipelineConfig& cfg);

void write_effective_config(const PipelineConfig& cfg, const std::string& out_dir);

// Stage entry points shared by the command-line tool. Each writes its
// outputs plus the effective configuration into out_dir.
void stage_synth(const PipelineConfig& cfg, const std::string& out_dir);
void stage_ingest(const PipelineConfig& cfg, const std::string& surveillance_path,
                  const std::string& out_dir);
/// stats_path, when nonempty, loads a previously written deviation-stats
/// sidecar instead of refitting from the trajectories.
void stage_enrich(const PipelineConfig& cfg, const std::string& trajectories_path,
                  const std::string& airports_path, const std::string& out_dir,
                  const std::string& stats_path = "");
void stage_label(const PipelineConfig& cfg, const std::string& enriched_path,
                 const std::string& trajectories_path, const std::string& events_path,
                 const std::string& out_dir);
void stage_train(const PipelineConfig& cfg, const std::string& labeled_path,
                 const std::string& model_kind, const std::string& out_dir);
void stage_predict(const PipelineConfig& cfg, const std::string& model_path,
                   const std::string& labeled_path, const std::string& feedback,
                   const std::string& out_dir);
void stage_evaluate(const PipelineConfig& cfg, const std::string& truth_path,
                    const std::string& pred_path, const std::string& out_dir);
void stage_report(const PipelineConfig& cfg, const std::string& pred_path,
                  const std::string& out_dir);

/// Load airport coordinates (code,lon_deg,lat_deg).
std::map<std::string, geo::GeoPoint> load_airports(const std::string& path);

/// Build the evaluation stream by joining a truth file (labeled schema) with
/// a prediction file (predictions schema, or another labeled file whose
/// mode/action columns serve as the predictions).
metrics::EvalStream build_eval_stream(const PipelineConfig& cfg, const std::string& truth_path,
                                      const std::string& pred_path);

}  // namespace atc::pipeline
