#include "atc/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "atc/csv.hpp"

namespace atc::pipeline {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    if (!csv::parse_double(v, d)) throw ConfigError("config key " + key + ": bad number '" + v + "'");
    return d;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t i = 0;
    if (!csv::parse_int(v, i)) throw ConfigError("config key " + key + ": bad integer '" + v + "'");
    return i;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": bad boolean '" + v + "'");
}

struct KeyDef {
    std::string key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

std::string fmt(double v) { return csv::format_double(v); }

const std::vector<KeyDef>& key_defs() {
    static const std::vector<KeyDef> defs = [] {
        std::vector<KeyDef> d;
        auto add = [&d](const std::string& key,
                        std::function<void(PipelineConfig&, const std::string&)> set,
                        std::function<std::string(const PipelineConfig&)> get) {
            d.push_back(KeyDef{key, std::move(set), std::move(get)});
        };

        add("detect.setting",
            [](PipelineConfig& c, const std::string& v) {
                if (v == "sector_ignorant") {
                    c.detect.setting = detect::Setting::SectorIgnorant;
                } else if (v == "sector_related") {
                    c.detect.setting = detect::Setting::SectorRelated;
                } else {
                    throw ConfigError("detect.setting must be sector_ignorant or sector_related");
                }
            },
            [](const PipelineConfig& c) {
                return c.detect.setting == detect::Setting::SectorIgnorant
                           ? std::string("sector_ignorant")
                           : std::string("sector_related");
            });
        add("detect.lon_min",
            [](PipelineConfig& c, const std::string& v) { c.detect.lon_min = to_double("detect.lon_min", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.lon_min); });
        add("detect.lon_max",
            [](PipelineConfig& c, const std::string& v) { c.detect.lon_max = to_double("detect.lon_max", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.lon_max); });
        add("detect.lat_min",
            [](PipelineConfig& c, const std::string& v) { c.detect.lat_min = to_double("detect.lat_min", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.lat_min); });
        add("detect.lat_max",
            [](PipelineConfig& c, const std::string& v) { c.detect.lat_max = to_double("detect.lat_max", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.lat_max); });
        add("detect.sector",
            [](PipelineConfig& c, const std::string& v) {
                c.detect.sector.clear();
                if (v.empty()) return;
                for (const auto& part : split_on(v, ';')) {
                    const auto ll = split_on(part, ',');
                    if (ll.size() != 2) throw ConfigError("detect.sector: expected lon,lat pairs");
                    c.detect.sector.emplace_back(to_double("detect.sector", ll[0]),
                                                 to_double("detect.sector", ll[1]));
                }
            },
            [](const PipelineConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.detect.sector.size(); ++i) {
                    if (i) out += ";";
                    out += fmt(c.detect.sector[i].first) + "," + fmt(c.detect.sector[i].second);
                }
                return out;
            });
        add("detect.cell_size_deg",
            [](PipelineConfig& c, const std::string& v) { c.detect.cell_size_deg = to_double("detect.cell_size_deg", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.cell_size_deg); });
        add("detect.d_th_cells",
            [](PipelineConfig& c, const std::string& v) { c.detect.d_th_cells = static_cast<int>(to_int("detect.d_th_cells", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.detect.d_th_cells); });
        add("detect.ct_th_min",
            [](PipelineConfig& c, const std::string& v) { c.detect.ct_th_min = to_double("detect.ct_th_min", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.ct_th_min); });
        add("detect.cpa_d_h_th_nm",
            [](PipelineConfig& c, const std::string& v) { c.detect.cpa_d_h_th_nm = to_double("detect.cpa_d_h_th_nm", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.cpa_d_h_th_nm); });
        add("detect.cpa_t_th_min",
            [](PipelineConfig& c, const std::string& v) { c.detect.cpa_t_th_min = to_double("detect.cpa_t_th_min", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.cpa_t_th_min); });
        add("detect.d_v_low_ft",
            [](PipelineConfig& c, const std::string& v) { c.detect.d_v_low_ft = to_double("detect.d_v_low_ft", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.d_v_low_ft); });
        add("detect.d_v_high_ft",
            [](PipelineConfig& c, const std::string& v) { c.detect.d_v_high_ft = to_double("detect.d_v_high_ft", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.d_v_high_ft); });
        add("detect.rvsm_boundary_ft",
            [](PipelineConfig& c, const std::string& v) { c.detect.rvsm_boundary_ft = to_double("detect.rvsm_boundary_ft", v); },
            [](const PipelineConfig& c) { return fmt(c.detect.rvsm_boundary_ft); });
        add("detect.max_neighbors",
            [](PipelineConfig& c, const std::string& v) { c.detect.max_neighbors = static_cast<int>(to_int("detect.max_neighbors", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.detect.max_neighbors); });

        add("label.augment_window_s",
            [](PipelineConfig& c, const std::string& v) { c.label.augment_window_s = to_double("label.augment_window_s", v); },
            [](const PipelineConfig& c) { return fmt(c.label.augment_window_s); });
        add("label.window_duration_s",
            [](PipelineConfig& c, const std::string& v) { c.label.window_duration_s = to_double("label.window_duration_s", v); },
            [](const PipelineConfig& c) { return fmt(c.label.window_duration_s); });
        add("label.step",
            [](PipelineConfig& c, const std::string& v) { c.label.step = static_cast<int>(to_int("label.step", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.label.step); });
        add("label.code_map",
            [](PipelineConfig& c, const std::string& v) {
                c.label.code_map.clear();
                for (const auto& part : split_on(v, ';')) {
                    if (part.empty()) continue;
                    const auto kv = split_on(part, ':');
                    if (kv.size() != 2) throw ConfigError("label.code_map: expected CODE:CLASS pairs");
                    const auto cls = label::action_from_string(kv[1]);
                    if (!cls) throw ConfigError("label.code_map: unknown class " + kv[1]);
                    c.label.code_map[kv[0]] = *cls;
                }
            },
            [](const PipelineConfig& c) {
                std::string out;
                for (const auto& [code, cls] : c.label.code_map) {
                    if (!out.empty()) out += ";";
                    out += code + ":" + label::to_string(cls);
                }
                return out;
            });

        add("model.lstm_layers",
            [](PipelineConfig& c, const std::string& v) { c.model.lstm_layers = static_cast<int>(to_int("model.lstm_layers", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.model.lstm_layers); });
        add("model.lstm_units",
            [](PipelineConfig& c, const std::string& v) { c.model.lstm_units = static_cast<int>(to_int("model.lstm_units", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.model.lstm_units); });
        add("model.gumbel_temperature",
            [](PipelineConfig& c, const std::string& v) { c.model.gumbel_temperature = to_double("model.gumbel_temperature", v); },
            [](const PipelineConfig& c) { return fmt(c.model.gumbel_temperature); });
        add("model.learning_rate",
            [](PipelineConfig& c, const std::string& v) { c.model.learning_rate = to_double("model.learning_rate", v); },
            [](const PipelineConfig& c) { return fmt(c.model.learning_rate); });
        add("model.epochs",
            [](PipelineConfig& c, const std::string& v) { c.model.epochs = static_cast<int>(to_int("model.epochs", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.model.epochs); });
        add("model.batch_size",
            [](PipelineConfig& c, const std::string& v) { c.model.batch_size = static_cast<int>(to_int("model.batch_size", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.model.batch_size); });
        add("model.seed",
            [](PipelineConfig& c, const std::string& v) { c.model.seed = static_cast<std::uint64_t>(to_int("model.seed", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.model.seed); });

        add("score.n",
            [](PipelineConfig& c, const std::string& v) { c.score.n = static_cast<int>(to_int("score.n", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.score.n); });

        add("fan.bins",
            [](PipelineConfig& c, const std::string& v) { c.fan_bins = static_cast<int>(to_int("fan.bins", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.fan_bins); });
        add("fan.horizon_s",
            [](PipelineConfig& c, const std::string& v) { c.fan_horizon_s = to_double("fan.horizon_s", v); },
            [](const PipelineConfig& c) { return fmt(c.fan_horizon_s); });

        add("ingest.max_gap_s",
            [](PipelineConfig& c, const std::string& v) { c.max_gap_s = to_int("ingest.max_gap_s", v); },
            [](const PipelineConfig& c) { return std::to_string(c.max_gap_s); });
        add("ingest.level_filter",
            [](PipelineConfig& c, const std::string& v) { c.level_filter = to_bool("ingest.level_filter", v); },
            [](const PipelineConfig& c) { return c.level_filter ? "true" : "false"; });
        add("ingest.level_vs_fpm",
            [](PipelineConfig& c, const std::string& v) { c.level_vs_fpm = to_double("ingest.level_vs_fpm", v); },
            [](const PipelineConfig& c) { return fmt(c.level_vs_fpm); });
        add("ingest.level_min_duration_s",
            [](PipelineConfig& c, const std::string& v) { c.level_min_duration_s = to_int("ingest.level_min_duration_s", v); },
            [](const PipelineConfig& c) { return std::to_string(c.level_min_duration_s); });

        add("scenario.flight_count",
            [](PipelineConfig& c, const std::string& v) { c.scenario.flight_count = static_cast<int>(to_int("scenario.flight_count", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.scenario.flight_count); });
        add("scenario.conflict_pair_fraction",
            [](PipelineConfig& c, const std::string& v) { c.scenario.conflict_pair_fraction = to_double("scenario.conflict_pair_fraction", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.conflict_pair_fraction); });
        add("scenario.speed_min_kt",
            [](PipelineConfig& c, const std::string& v) { c.scenario.speed_min_kt = to_double("scenario.speed_min_kt", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.speed_min_kt); });
        add("scenario.speed_max_kt",
            [](PipelineConfig& c, const std::string& v) { c.scenario.speed_max_kt = to_double("scenario.speed_max_kt", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.speed_max_kt); });
        add("scenario.flight_levels",
            [](PipelineConfig& c, const std::string& v) {
                c.scenario.flight_levels.clear();
                if (v.empty()) return;
                for (const auto& part : split_on(v, ';')) {
                    c.scenario.flight_levels.push_back(to_double("scenario.flight_levels", part));
                }
            },
            [](const PipelineConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.scenario.flight_levels.size(); ++i) {
                    if (i) out += ";";
                    out += fmt(c.scenario.flight_levels[i]);
                }
                return out;
            });
        add("scenario.reaction_delay_min_s",
            [](PipelineConfig& c, const std::string& v) { c.scenario.reaction_delay_min_s = to_double("scenario.reaction_delay_min_s", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.reaction_delay_min_s); });
        add("scenario.reaction_delay_max_s",
            [](PipelineConfig& c, const std::string& v) { c.scenario.reaction_delay_max_s = to_double("scenario.reaction_delay_max_s", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.reaction_delay_max_s); });
        add("scenario.pilot_delay_min_s",
            [](PipelineConfig& c, const std::string& v) { c.scenario.pilot_delay_min_s = to_double("scenario.pilot_delay_min_s", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.pilot_delay_min_s); });
        add("scenario.pilot_delay_max_s",
            [](PipelineConfig& c, const std::string& v) { c.scenario.pilot_delay_max_s = to_double("scenario.pilot_delay_max_s", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.pilot_delay_max_s); });
        add("scenario.a1_fraction",
            [](PipelineConfig& c, const std::string& v) { c.scenario.a1_fraction = to_double("scenario.a1_fraction", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.a1_fraction); });
        add("scenario.max_arrival_offset_s",
            [](PipelineConfig& c, const std::string& v) { c.scenario.max_arrival_offset_s = to_double("scenario.max_arrival_offset_s", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.max_arrival_offset_s); });
        add("scenario.dogleg_fraction",
            [](PipelineConfig& c, const std::string& v) { c.scenario.dogleg_fraction = to_double("scenario.dogleg_fraction", v); },
            [](const PipelineConfig& c) { return fmt(c.scenario.dogleg_fraction); });
        add("scenario.seed",
            [](PipelineConfig& c, const std::string& v) { c.scenario.seed = static_cast<std::uint64_t>(to_int("scenario.seed", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.scenario.seed); });

        std::sort(d.begin(), d.end(), [](const KeyDef& a, const KeyDef& b) { return a.key < b.key; });
        return d;
    }();
    return defs;
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& def : key_defs()) {
            if (def.key == key) {
                def.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::string text;
    for (const auto& line : csv::read_lines(path)) text += line + "\n";
    return parse_config(text);
}

std::string render_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& def : key_defs()) out += def.key + " = " + def.get(cfg) + "\n";
    return out;
}

void write_effective_config(const PipelineConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    csv::write_file(out_dir + "/effective_config.cfg", render_config(cfg));
}

std::map<std::string, geo::GeoPoint> load_airports(const std::string& path) {
    std::map<std::string, geo::GeoPoint> out;
    const auto lines = csv::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == 0 || lines[i].empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != 3) throw std::runtime_error("airports line " + std::to_string(i + 1) + ": expected 3 fields");
        geo::GeoPoint p;
        if (!csv::parse_double(f[1], p.lon) || !csv::parse_double(f[2], p.lat)) {
            throw std::runtime_error("airports line " + std::to_string(i + 1) + ": bad coordinates");
        }
        out[f[0]] = p;
    }
    return out;
}

void stage_synth(const PipelineConfig& cfg, const std::string& out_dir) {
    synth::ScenarioSpec spec = cfg.scenario;
    spec.lon_min = cfg.detect.lon_min;
    spec.lon_max = cfg.detect.lon_max;
    spec.lat_min = cfg.detect.lat_min;
    spec.lat_max = cfg.detect.lat_max;
    const auto sc = synth::generate(spec);
    synth::write_scenario(sc, out_dir, cfg.detect.max_neighbors);
    write_effective_config(cfg, out_dir);
}

void stage_ingest(const PipelineConfig& cfg, const std::string& surveillance_path,
                  const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto in = traj::ingest_surveillance(surveillance_path);
    std::vector<traj::Trajectory> trajectories;
    for (const auto& fl : in.flights) {
        if (fl.points.size() < 2) {
            ++in.report.segments_dropped;
            continue;
        }
        for (auto& seg : traj::resample_5s(fl, cfg.max_gap_s, &in.report)) {
            if (cfg.level_filter) {
                for (auto& lvl : traj::filter_level_segments(seg, cfg.level_vs_fpm,
                                                             cfg.level_min_duration_s)) {
                    trajectories.push_back(std::move(lvl));
                }
            } else {
                trajectories.push_back(std::move(seg));
            }
        }
    }
    csv::write_file(out_dir + "/trajectories.csv", traj::points_csv(trajectories));
    std::string report = "flights," + std::to_string(in.flights.size()) + "\n";
    report += "trajectories," + std::to_string(trajectories.size()) + "\n";
    report += "rows_rejected," + std::to_string(in.report.rows_rejected) + "\n";
    report += "duplicates_dropped," + std::to_string(in.report.duplicates_dropped) + "\n";
    report += "segments_dropped," + std::to_string(in.report.segments_dropped) + "\n";
    for (const auto& e : in.report.row_errors) report += "error," + e + "\n";
    csv::write_file(out_dir + "/ingest_report.csv", report);
    write_effective_config(cfg, out_dir);
}

void stage_enrich(const PipelineConfig& cfg, const std::string& trajectories_path,
                  const std::string& airports_path, const std::string& out_dir,
                  const std::string& stats_path) {
    std::filesystem::create_directories(out_dir);
    auto trajectories = traj::load_trajectories(trajectories_path, nullptr, cfg.max_gap_s);
    evo::DeviationStats stats;
    if (stats_path.empty()) {
        stats = evo::fit_deviation_stats(trajectories, cfg.fan_bins);
    } else {
        std::string text;
        for (const auto& line : csv::read_lines(stats_path)) text += line + "\n";
        stats = evo::DeviationStats::from_json(text);
    }
    csv::write_file(out_dir + "/deviation_stats.json", stats.to_json());

    detect::DetectConfig dcfg = cfg.detect;
    if (!airports_path.empty()) dcfg.airports = load_airports(airports_path);
    auto grid = detect::GridIndex::build(trajectories, dcfg);

    std::vector<detect::EnrichedFlight> enriched;
    std::vector<std::string> failures;
    for (std::size_t f = 0; f < trajectories.size(); ++f) {
        try {
            enriched.push_back(detect::enrich(f, grid, stats, dcfg));
        } catch (const std::exception& e) {
            failures.push_back(trajectories[f].id.str() + ": " + e.what());
        }
    }
    csv::write_file(out_dir + "/enriched.csv", detect::enriched_csv(enriched, dcfg.max_neighbors));
    std::string report = "enriched," + std::to_string(enriched.size()) + "\n";
    report += "skipped," + std::to_string(failures.size()) + "\n";
    for (const auto& msg : failures) report += "skip," + msg + "\n";
    csv::write_file(out_dir + "/enrich_report.csv", report);
    write_effective_config(cfg, out_dir);
}

void stage_label(const PipelineConfig& cfg, const std::string& enriched_path,
                 const std::string& trajectories_path, const std::string& events_path,
                 const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto enriched = detect::load_enriched(enriched_path, cfg.detect.max_neighbors);
    auto trajectories = traj::load_trajectories(trajectories_path, nullptr, cfg.max_gap_s);
    auto events = traj::load_events(events_path);
    auto assoc = traj::associate_events(events, trajectories);

    label::LabelReport lrep;
    auto annotated = label::label_flights(enriched, trajectories, assoc, events, cfg.label, &lrep);
    const auto priors = label::prior_report(annotated, {1, 2, 3, 4, 5, 6});
    csv::write_file(out_dir + "/priors.csv", label::prior_csv(priors));
    auto dataset = label::subsample_dataset(annotated, cfg.label.step);
    csv::write_file(out_dir + "/labeled.csv", label::labeled_csv(dataset, cfg.detect.max_neighbors));

    std::string report = "events," + std::to_string(events.size()) + "\n";
    report += "associated," + std::to_string(assoc.associated.size()) + "\n";
    report += "unassociated," + std::to_string(assoc.failed.size()) + "\n";
    report += "events_located," + std::to_string(lrep.events_located) + "\n";
    report += "pairs_rejected," + std::to_string(lrep.pairs_rejected) + "\n";
    report += "flights_dropped," + std::to_string(lrep.flights_dropped) + "\n";
    report += "labeled_flights," + std::to_string(dataset.flights.size()) + "\n";
    csv::write_file(out_dir + "/label_report.csv", report);
    write_effective_config(cfg, out_dir);
}

void stage_train(const PipelineConfig& cfg, const std::string& labeled_path,
                 const std::string& model_kind, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    if (model_kind != "vae" && model_kind != "encoder") {
        throw ConfigError("model kind must be vae or encoder, got " + model_kind);
    }
    auto dataset = label::load_labeled(labeled_path, cfg.detect.max_neighbors);
    auto model = model::train(dataset, cfg.model, model_kind == "vae");
    model::save_model(model, out_dir + "/model.bin");
    csv::write_file(out_dir + "/loss_curve.csv", model::loss_curve_csv(model.loss_curve));
    write_effective_config(cfg, out_dir);
}

namespace {

std::string predictions_csv(const std::vector<model::Sequence>& seqs,
                            const model::TrainResult& m, model::Feedback fb) {
    std::string out =
        "flight_id,timestamp,truth_mode,truth_action,pred_mode,pred_action,"
        "p_c0,p_c1,p_c2,p_a0,p_a1,p_a2,pred_d_course,pred_d_sh,pred_d_sv,pred_d_t,"
        "is_actual_ratp,is_annotated_ratp\n";
    for (const auto& seq : seqs) {
        const auto rows = model::predict(m, seq, fb);
        for (std::size_t t = 0; t < rows.size(); ++t) {
            const auto& r = rows[t];
            out += seq.id.str() + "," + csv::format_double(seq.ts[t]) + "," +
                   label::to_string(static_cast<label::Mode>(seq.modes[t])) + "," +
                   label::to_string(static_cast<label::ActionClass>(seq.actions[t])) + "," +
                   label::to_string(static_cast<label::Mode>(r.mode)) + "," +
                   label::to_string(static_cast<label::ActionClass>(r.action));
            for (double p : r.mode_probs) out += "," + csv::format_double(p);
            for (double p : r.action_probs) out += "," + csv::format_double(p);
            for (double v : r.cont) out += "," + csv::format_double(v);
            out += seq.actual[t] ? ",1" : ",0";
            out += seq.annotated[t] ? ",1" : ",0";
            out += "\n";
        }
    }
    return out;
}

struct PredFileRow {
    label::Mode mode;
    label::ActionClass action;
};

// Predictions keyed by (flight id, timestamp); accepts the predictions
// schema or a labeled file used as its own prediction.
std::unordered_map<std::string, PredFileRow> load_predictions(const std::string& path, int k) {
    std::unordered_map<std::string, PredFileRow> out;
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw std::runtime_error("empty prediction file: " + path);
    const auto header = csv::split(lines[0]);
    const bool pred_schema =
        std::find(header.begin(), header.end(), "pred_mode") != header.end() &&
        std::find(header.begin(), header.end(), "truth_mode") != header.end();
    if (pred_schema) {
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto f = csv::split(lines[i]);
            if (f.size() != header.size()) {
                throw std::runtime_error("predictions line " + std::to_string(i + 1) + ": bad field count");
            }
            const auto mode = label::mode_from_string(f[4]);
            const auto action = label::action_from_string(f[5]);
            if (!mode || !action) {
                throw std::runtime_error("predictions line " + std::to_string(i + 1) + ": bad label");
            }
            double ts = 0.0;
            csv::parse_double(f[1], ts);
            out[f[0] + "@" + csv::format_double(ts)] = PredFileRow{*mode, *action};
        }
        return out;
    }
    const auto ds = label::load_labeled(path, k);
    for (const auto& fl : ds.flights) {
        for (const auto& r : fl.rows) {
            out[fl.id.str() + "@" + csv::format_double(static_cast<double>(r.point.t))] =
                PredFileRow{r.mode, r.action};
        }
    }
    return out;
}

}  // namespace

void stage_predict(const PipelineConfig& cfg, const std::string& model_path,
                   const std::string& labeled_path, const std::string& feedback,
                   const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    model::Feedback fb;
    if (feedback == "self") {
        fb = model::Feedback::SelfFed;
    } else if (feedback == "teacher") {
        fb = model::Feedback::TeacherForced;
    } else {
        throw ConfigError("feedback must be self or teacher, got " + feedback);
    }
    auto m = model::load_model(model_path);
    auto dataset = label::load_labeled(labeled_path, cfg.detect.max_neighbors);
    auto seqs = model::to_sequences(dataset);
    for (const auto& s : seqs) {
        if (!s.feats.empty() && static_cast<int>(s.feats[0].size()) != m.cfg.feature_dim) {
            throw std::runtime_error("feature layout mismatch: model expects " +
                                     std::to_string(m.cfg.feature_dim) + " features, data has " +
                                     std::to_string(s.feats[0].size()));
        }
    }
    csv::write_file(out_dir + "/predictions.csv", predictions_csv(seqs, m, fb));
    write_effective_config(cfg, out_dir);
}

metrics::EvalStream build_eval_stream(const PipelineConfig& cfg, const std::string& truth_path,
                                      const std::string& pred_path) {
    const auto truth = label::load_labeled(truth_path, cfg.detect.max_neighbors);
    const auto preds = load_predictions(pred_path, cfg.detect.max_neighbors);
    metrics::EvalStream stream;
    for (const auto& fl : truth.flights) {
        metrics::EvalFlight ef;
        ef.id = fl.id;
        for (const auto& r : fl.rows) {
            const std::string key =
                fl.id.str() + "@" + csv::format_double(static_cast<double>(r.point.t));
            const auto it = preds.find(key);
            if (it == preds.end()) {
                throw std::runtime_error("no prediction for " + fl.id.str() + " at t=" +
                                         std::to_string(r.point.t));
            }
            metrics::EvalPoint p;
            p.t = static_cast<double>(r.point.t);
            p.truth_mode = r.mode;
            p.truth_action = r.action;
            p.pred_mode = it->second.mode;
            p.pred_action = it->second.action;
            p.is_actual_ratp = r.is_actual_ratp;
            p.is_annotated_ratp = r.is_annotated_ratp;
            ef.points.push_back(p);
        }
        stream.push_back(std::move(ef));
    }
    return stream;
}

void stage_evaluate(const PipelineConfig& cfg, const std::string& truth_path,
                    const std::string& pred_path, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto stream = build_eval_stream(cfg, truth_path, pred_path);
    const auto report = metrics::evaluate(stream, cfg.score);
    csv::write_file(out_dir + "/metrics.csv", metrics::report_csv(report));
    csv::write_file(out_dir + "/metrics.json", metrics::report_json(report));
    write_effective_config(cfg, out_dir);
}

void stage_report(const PipelineConfig& cfg, const std::string& pred_path,
                  const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    csv::write_file(out_dir + "/score_curve.csv", metrics::score_curve_csv(cfg.score));

    // Mode-sequence plot data: predictions laid out over a global sequence
    // index, with flight starts and actual action points marked.
    const auto lines = csv::read_lines(pred_path);
    std::string out =
        "seq,flight_id,timestamp,truth_mode,pred_mode,p_c0,p_c1,p_c2,flight_start,is_actual_ratp\n";
    std::string prev_flight;
    std::size_t seq = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() < 18) throw std::runtime_error("predictions line " + std::to_string(i + 1) + ": bad field count");
        const bool start = f[0] != prev_flight;
        prev_flight = f[0];
        out += std::to_string(seq++) + "," + f[0] + "," + f[1] + "," + f[2] + "," + f[4] + "," +
               f[6] + "," + f[7] + "," + f[8] + "," + (start ? "1" : "0") + "," + f[16] + "\n";
    }
    csv::write_file(out_dir + "/mode_sequences.csv", out);
    write_effective_config(cfg, out_dir);
}

}  // namespace atc::pipeline
