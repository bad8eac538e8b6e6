#include "dtwin/pipeline.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/intervention.hpp"
#include "dtwin/rng.hpp"
#include "dtwin/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace dtwin {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr Stage kAllStages[] = {Stage::Generate, Stage::Simulate, Stage::Sense, Stage::Fuse,
                                Stage::Calibrate, Stage::Graph, Stage::Equity, Stage::Intervene};

struct StageRun {
    fs::path dir;
    std::map<std::string, std::string> input_hashes;

    std::string read_input(const char* name) {
        auto content = read_file(dir / name);
        input_hashes[name] = fnv1a64_hex(content);
        return content;
    }
    std::optional<std::string> read_optional(const char* name) {
        if (!fs::exists(dir / name)) return std::nullopt;
        return read_input(name);
    }
    void write(const char* name, const std::string& content) const {
        atomic_write_file(dir / name, content);
    }
};

void update_manifest(const StageRun& run, Stage stage, const PipelineConfig& cfg) {
    json manifest;
    const auto path = run.dir / artifacts::kManifest;
    if (fs::exists(path)) {
        try {
            manifest = json::parse(read_file(path));
        } catch (const std::exception&) {
            manifest = json::object();
        }
    }
    json entry;
    entry["config_hash"] = config_hash(cfg);
    entry["seed"] = cfg.seed;
    json inputs = json::object();
    for (const auto& [name, hash] : run.input_hashes) inputs[name] = hash;
    entry["inputs"] = inputs;

    json stages = json::object();
    for (const Stage s : kAllStages) {
        const char* name = stage_name(s);
        if (s == stage) stages[name] = entry;
        else if (manifest.contains("stages") && manifest["stages"].contains(name))
            stages[name] = manifest["stages"][name];
    }
    json out;
    out["stages"] = stages;
    atomic_write_file(path, out.dump(2) + "\n");
}

// --- stage bodies ---

void stage_generate(StageRun& run, const PipelineConfig& cfg) {
    auto district = generate_district(cfg.district, cfg.seed);
    district = assign_sensors(std::move(district), cfg.district.sensor_fraction, cfg.seed);
    const auto timeline = build_timeline(cfg.scenario);
    run.write(artifacts::kNodes, district_to_csv(district));
    run.write(artifacts::kTime, timeline_to_csv(timeline));
}

void stage_simulate(StageRun& run, const PipelineConfig& cfg) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    const auto truth = simulate_district_truth(district, timeline, cfg.thermal, cfg.seed);
    run.write(artifacts::kTruth, truth_to_csv(truth));
}

StreamSet load_streams(StageRun& run) {
    StreamSet s;
    s.iot = stream_matrix_from_csv(run.read_input(artifacts::kIot));
    s.uav = stream_matrix_from_csv(run.read_input(artifacts::kUav));
    s.uav_idx = stream_idx_from_csv(run.read_input(artifacts::kUavIdx));
    s.sat = stream_matrix_from_csv(run.read_input(artifacts::kSat));
    s.sat_idx = stream_idx_from_csv(run.read_input(artifacts::kSatIdx));
    return s;
}

void stage_sense(StageRun& run, const PipelineConfig& cfg) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    const auto truth = truth_from_csv(run.read_input(artifacts::kTruth));
    const auto streams = synthesize_streams(truth, district, timeline, cfg.sensing, cfg.seed);
    run.write(artifacts::kIot, stream_matrix_to_csv(streams.iot));
    run.write(artifacts::kUav, stream_matrix_to_csv(streams.uav));
    run.write(artifacts::kUavIdx, stream_idx_to_csv(streams.uav_idx));
    run.write(artifacts::kSat, stream_matrix_to_csv(streams.sat));
    run.write(artifacts::kSatIdx, stream_idx_to_csv(streams.sat_idx));
}

void stage_fuse(StageRun& run, const PipelineConfig& cfg) {
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    auto streams = load_streams(run);
    if (streams.steps() != timeline.steps())
        throw ConfigError("stream width does not match the timeline");
    const auto st = fuse_weights(streams, cfg.fusion);
    run.write(artifacts::kFusionSeries, fusion_history_to_csv(st));
    json j;
    j["final"] = {{"iot", st.w_ema[0]}, {"uav", st.w_ema[1]}, {"sat", st.w_ema[2]}};
    j["steps"] = st.history.size();
    run.write(artifacts::kFusionJson, j.dump(2) + "\n");
}

json metrics_to_json(const ValidationMetrics& m) {
    auto src = [](const std::optional<SourceMetrics>& s) -> json {
        if (!s) return nullptr;
        return json{{"rmse_c", s->rmse}, {"mae_c", s->mae}, {"count", s->count}};
    };
    json j;
    j["iot"] = src(m.iot);
    j["uav"] = src(m.uav);
    j["sat"] = src(m.sat);
    j["pooled"] = json{{"rmse_c", m.pooled.rmse}, {"mae_c", m.pooled.mae},
                       {"count", m.pooled.count}};
    return j;
}

void stage_calibrate(StageRun& run, const PipelineConfig& cfg) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    const auto streams = load_streams(run);
    const auto params = train(district, timeline, streams, cfg.thermal, cfg.calib, cfg.seed);
    const auto metrics = validate(params, district, timeline, streams, cfg.calib);

    json j;
    j["types"] = json::object();
    for (int t = 0; t < kNumBuildingTypes; ++t) {
        const auto bt = static_cast<BuildingType>(t);
        const auto p = params.mapped_params(bt);
        j["types"][type_token(bt)] = {{"c_w", p.c_w},     {"c_z", p.c_z},
                                      {"r_wo", p.r_wo},   {"r_wz", p.r_wz},
                                      {"q_int", p.q_int}, {"q_max", p.q_max},
                                      {"deadband", p.deadband}};
    }
    j["raw"] = params.raw;
    j["net"] = {{"emb", params.emb},       {"w1", params.w1}, {"b1", params.b1},
                {"w2", params.w2},         {"b2", params.b2}, {"emb_dim", params.emb_dim},
                {"hidden", params.hidden}};
    j["train_nodes"] = params.train_nodes;
    j["val_nodes"] = params.val_nodes;
    run.write(artifacts::kCalibParams, j.dump(2) + "\n");
    run.write(artifacts::kMetricsJson, metrics_to_json(metrics).dump(2) + "\n");
    run.write(artifacts::kMetricsCsv, metrics_to_csv(metrics));
}

void stage_graph(StageRun& run, const PipelineConfig& cfg) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    auto graph = build_knn_graph(district, cfg.graph);
    graph = grl_update(std::move(graph), timeline, cfg.graph);
    const auto report = centrality_and_criticals(graph, cfg.graph);

    json j;
    j["sigma"] = graph.sigma;
    j["connected"] = graph_connected(graph);
    json nodes = json::array();
    for (const auto& n : report.nodes) {
        nodes.push_back({{"id", n.id},
                         {"betweenness", n.betweenness},
                         {"closeness", n.closeness},
                         {"eigenvector", n.eigenvector},
                         {"b_rank", n.b_rank},
                         {"c_rank", n.c_rank},
                         {"e_rank", n.e_rank},
                         {"crit_score", n.crit_score},
                         {"community", n.community}});
    }
    j["nodes"] = nodes;
    j["community_top"] = report.community_top;
    j["global_top"] = report.global_top;
    run.write(artifacts::kGraphReport, j.dump(2) + "\n");
    run.write(artifacts::kEdges, edges_to_csv(graph, cfg.graph.eps));
}

void stage_equity(StageRun& run, const PipelineConfig& cfg) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));
    const auto risks = node_risks(district, timeline, cfg.equity);
    const auto idx = community_index(risks, district, cfg.equity);
    run.write(artifacts::kEquityPerNode, risks_to_csv(risks));

    json j;
    j["r_eq"] = idx.r_eq;
    j["gamma"] = idx.gamma;
    j["beta_phys"] = idx.beta_phys;
    j["beta_sens"] = idx.beta_sens;
    j["exposure"] = risks.empty() ? 0.0 : risks.front().exposure;
    json deciles = json::array();
    for (const auto& d : idx.deciles)
        deciles.push_back({{"mean", d.mean}, {"weighted_mean", d.weighted_mean}, {"pop", d.pop}});
    j["deciles"] = deciles;
    run.write(artifacts::kEquitySummary, j.dump(2) + "\n");
}

double indoor_overheating_hours(const std::vector<std::vector<double>>& truth, double dt_h,
                                double threshold_c) {
    double oh = 0.0;
    for (const auto& row : truth)
        for (const double v : row) oh += (v > threshold_c) ? dt_h : 0.0;
    return oh;
}

void stage_intervene(StageRun& run, const PipelineConfig& cfg, const PipelineOptions& opts) {
    const auto district = district_from_csv(run.read_input(artifacts::kNodes));
    const auto timeline = timeline_from_csv(run.read_input(artifacts::kTime));

    EquityConfig eq_cfg = cfg.equity;
    std::vector<NodeRisk> baseline;
    const auto per_node = run.read_optional(artifacts::kEquityPerNode);
    if (per_node) {
        baseline = risks_from_csv(*per_node);
        if (const auto summary = run.read_optional(artifacts::kEquitySummary)) {
            const auto j = json::parse(*summary);
            eq_cfg.beta_phys = j.value("beta_phys", eq_cfg.beta_phys);
            eq_cfg.beta_sens = j.value("beta_sens", eq_cfg.beta_sens);
        }
    } else {
        // Fallback frame: V = E = 0.5, exposure = 0.5.
        baseline.resize(district.nodes.size());
        for (std::size_t i = 0; i < baseline.size(); ++i) {
            baseline[i].id = district.nodes[i].id;
            baseline[i].exposure = 0.5;
            baseline[i].v = 0.5;
            baseline[i].e = 0.5;
            baseline[i].r_node =
                0.5 * (eq_cfg.beta_phys * 0.5 + eq_cfg.beta_sens * 0.5);
        }
    }

    OhResimulation resim;
    const OhResimulation* resim_ptr = nullptr;
    if (opts.resimulate_oh) {
        const auto truth = truth_from_csv(run.read_input(artifacts::kTruth));
        resim.baseline_oh = indoor_overheating_hours(truth, timeline.dt_h, cfg.oh_threshold_c);
        resim.resimulate = [&, truth](const Intervention& iv) -> double {
            if (iv.id != "I3" && iv.id != "I4")
                return indoor_overheating_hours(truth, timeline.dt_h, cfg.oh_threshold_c);
            std::vector<bool> suppress(district.nodes.size(), false);
            for (const int id : iv.mask) suppress[static_cast<std::size_t>(id)] = true;
            const auto redo =
                simulate_district_truth(district, timeline, cfg.thermal, cfg.seed, &suppress);
            return indoor_overheating_hours(redo, timeline.dt_h, cfg.oh_threshold_c);
        };
        resim_ptr = &resim;
    }

    const auto ivs = standard_interventions(baseline, district);
    std::vector<InterventionOutcome> outcomes;
    outcomes.reserve(ivs.size());
    for (const auto& iv : ivs) {
        const auto post = apply_intervention(baseline, iv, eq_cfg);
        outcomes.push_back(eval_metrics(baseline, post, district, timeline, iv,
                                        cfg.oh_threshold_c, resim_ptr));
    }
    mark_fronts(outcomes);
    run.write(artifacts::kInterventionTable, outcomes_to_csv(outcomes));

    json j;
    json arr = json::array();
    for (const auto& o : outcomes) {
        json e = {{"id", o.id},
                  {"name", o.name},
                  {"d_rpop_pct", o.d_rpop_pct},
                  {"d_r95_pct", o.d_r95_pct},
                  {"d_oh_pct", o.d_oh_pct},
                  {"staff_hours_per_day", o.staff_hours_per_day},
                  {"cost_kusd", o.cost_kusd},
                  {"on_staff_front", o.on_staff_front},
                  {"on_cost_front", o.on_cost_front},
                  {"empty_mask_warning", o.empty_mask_warning}};
        e["eff_cost"] = o.eff_cost ? json(*o.eff_cost) : json(nullptr);
        e["eff_staff"] = o.eff_staff ? json(*o.eff_staff) : json(nullptr);
        arr.push_back(e);
    }
    j["outcomes"] = arr;
    j["resimulated_oh"] = opts.resimulate_oh;
    run.write(artifacts::kInterventionReport, j.dump(2) + "\n");
}

void emit_plots(const fs::path& dir, const PipelineConfig& cfg);
void emit_summary(const fs::path& dir, const PipelineConfig& cfg);

} // namespace

const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Generate: return "generate";
    case Stage::Simulate: return "simulate";
    case Stage::Sense: return "sense";
    case Stage::Fuse: return "fuse";
    case Stage::Calibrate: return "calibrate";
    case Stage::Graph: return "graph";
    case Stage::Equity: return "equity";
    case Stage::Intervene: return "intervene";
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (const Stage s : kAllStages)
        if (name == stage_name(s)) return s;
    throw ConfigError("unknown stage: " + name);
}

void run_stage(Stage stage, const PipelineConfig& cfg, const PipelineOptions& opts) {
    StageRun run{fs::path(cfg.out_dir), {}};
    fs::create_directories(run.dir);
    switch (stage) {
    case Stage::Generate: stage_generate(run, cfg); break;
    case Stage::Simulate: stage_simulate(run, cfg); break;
    case Stage::Sense: stage_sense(run, cfg); break;
    case Stage::Fuse: stage_fuse(run, cfg); break;
    case Stage::Calibrate: stage_calibrate(run, cfg); break;
    case Stage::Graph: stage_graph(run, cfg); break;
    case Stage::Equity: stage_equity(run, cfg); break;
    case Stage::Intervene: stage_intervene(run, cfg, opts); break;
    }
    update_manifest(run, stage, cfg);
}

namespace {

std::size_t pick_plot_node(const District& d, BuildingType t) {
    // Prefer a sensor-equipped node of the type.
    for (std::size_t i = 0; i < d.nodes.size(); ++i)
        if (d.nodes[i].btype == t && d.nodes[i].has_sensor) return i;
    for (std::size_t i = 0; i < d.nodes.size(); ++i)
        if (d.nodes[i].btype == t) return i;
    return 0;
}

void emit_plots(const fs::path& dir, const PipelineConfig& cfg) {
    const auto plots = dir / "plots";
    const auto district = district_from_csv(read_file(dir / artifacts::kNodes));
    const auto timeline = timeline_from_csv(read_file(dir / artifacts::kTime));
    const auto truth = truth_from_csv(read_file(dir / artifacts::kTruth));

    const auto school = pick_plot_node(district, BuildingType::School);
    const auto clinic = pick_plot_node(district, BuildingType::Clinic);
    const double setpoint = cfg.thermal.type_params[0].setpoint;

    {
        std::ostringstream out;
        out << "time_h,T_out,T_z_school,T_z_clinic,setpoint\n";
        for (std::size_t t = 0; t < timeline.steps(); ++t) {
            out << format_num(timeline.t_h[t]) << ',' << format_num(timeline.t_out[t]) << ','
                << format_num(truth[t][school]) << ',' << format_num(truth[t][clinic]) << ','
                << format_num(setpoint) << '\n';
        }
        atomic_write_file(plots / "indoor_outdoor.csv", out.str());
    }
    // Fusion weights series doubles as the plot-ready file.
    atomic_write_file(plots / "fusion_weights.csv", read_file(dir / artifacts::kFusionSeries));

    {
        const auto j = json::parse(read_file(dir / artifacts::kEquitySummary));
        std::ostringstream out;
        out << "decile,mean,weighted_mean,pop\n";
        int d = 1;
        for (const auto& row : j["deciles"]) {
            out << 'D' << d++ << ',' << format_num(row["mean"].get<double>()) << ','
                << format_num(row["weighted_mean"].get<double>()) << ','
                << format_num(row["pop"].get<double>()) << '\n';
        }
        atomic_write_file(plots / "risk_deciles.csv", out.str());
    }
    {
        const auto j = json::parse(read_file(dir / artifacts::kInterventionReport));
        std::ostringstream out;
        out << "id,staff_hours,cost_kusd,d_rpop_pct,d_r95_pct,d_oh_pct,on_staff_front,on_cost_front\n";
        for (const auto& o : j["outcomes"]) {
            out << o["id"].get<std::string>() << ','
                << format_num(o["staff_hours_per_day"].get<double>()) << ','
                << format_num(o["cost_kusd"].get<double>()) << ','
                << format_num(o["d_rpop_pct"].get<double>()) << ','
                << format_num(o["d_r95_pct"].get<double>()) << ','
                << format_num(o["d_oh_pct"].get<double>()) << ','
                << (o["on_staff_front"].get<bool>() ? 1 : 0) << ','
                << (o["on_cost_front"].get<bool>() ? 1 : 0) << '\n';
        }
        atomic_write_file(plots / "intervention_pareto.csv", out.str());
    }
    if (fs::exists(dir / artifacts::kCalibParams)) {
        // Model rollout vs merged observations for the two showcase nodes.
        StageRun tmp{dir, {}};
        const auto streams = load_streams(tmp);
        const auto j = json::parse(read_file(dir / artifacts::kCalibParams));
        CalibParams params;
        params.emb_dim = j["net"]["emb_dim"].get<int>();
        params.hidden = j["net"]["hidden"].get<int>();
        params.emb = j["net"]["emb"].get<std::vector<double>>();
        params.w1 = j["net"]["w1"].get<std::vector<double>>();
        params.b1 = j["net"]["b1"].get<std::vector<double>>();
        params.w2 = j["net"]["w2"].get<std::vector<double>>();
        params.b2 = j["net"]["b2"].get<std::vector<double>>();
        params.raw = j["raw"].get<std::array<std::array<double, 7>, kNumBuildingTypes>>();
        for (int t = 0; t < kNumBuildingTypes; ++t) {
            params.setpoint[static_cast<std::size_t>(t)] =
                cfg.thermal.type_params[static_cast<std::size_t>(t)].setpoint;
            params.solar_peak[static_cast<std::size_t>(t)] =
                cfg.thermal.type_params[static_cast<std::size_t>(t)].solar_peak;
        }
        CalibProblem prob(district, timeline, streams, cfg.calib);
        const auto roll_school =
            prob.rollout(params, static_cast<int>(school), 0, timeline.steps() - 1);
        const auto roll_clinic =
            prob.rollout(params, static_cast<int>(clinic), 0, timeline.steps() - 1);
        std::ostringstream out;
        out << "time_h,pred_school,iot_school,pred_clinic,iot_clinic\n";
        for (std::size_t t = 0; t < timeline.steps(); ++t) {
            out << format_num(timeline.t_h[t]) << ',' << format_num(roll_school[t][1]) << ','
                << (is_missing(streams.iot[school][t]) ? std::string{}
                                                       : format_num(streams.iot[school][t]))
                << ',' << format_num(roll_clinic[t][1]) << ','
                << (is_missing(streams.iot[clinic][t]) ? std::string{}
                                                       : format_num(streams.iot[clinic][t]))
                << '\n';
        }
        atomic_write_file(plots / "prediction_vs_obs.csv", out.str());
    }

    if (cfg.emit_svg) {
        std::vector<std::pair<std::string, std::vector<double>>> series;
        std::vector<double> w_iot, w_uav, w_sat;
        const auto fusion = parse_csv(read_file(dir / artifacts::kFusionSeries));
        for (const auto& row : fusion.rows) {
            w_iot.push_back(parse_double(row[1]));
            w_uav.push_back(parse_double(row[2]));
            w_sat.push_back(parse_double(row[3]));
        }
        std::vector<double> x(w_iot.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = timeline.t_h[i];
        series = {{"iot", w_iot}, {"uav", w_uav}, {"sat", w_sat}};
        atomic_write_file(plots / "fusion_weights.svg",
                          svg_line_chart("fusion weights", x, series));

        const auto j = json::parse(read_file(dir / artifacts::kEquitySummary));
        std::vector<std::string> labels;
        std::vector<double> means, wmeans;
        int d = 1;
        for (const auto& row : j["deciles"]) {
            labels.push_back("D" + std::to_string(d++));
            means.push_back(row["mean"].get<double>());
            wmeans.push_back(row["weighted_mean"].get<double>());
        }
        atomic_write_file(plots / "risk_deciles.svg",
                          svg_bar_chart("risk by decile", labels,
                                        {{"mean", means}, {"weighted_mean", wmeans}}));
    }
}

void emit_summary(const fs::path& dir, const PipelineConfig& cfg) {
    const auto district = district_from_csv(read_file(dir / artifacts::kNodes));
    const auto timeline = timeline_from_csv(read_file(dir / artifacts::kTime));
    const auto truth = truth_from_csv(read_file(dir / artifacts::kTruth));

    json j;
    // Blackout peak band across school nodes.
    double peak_lo = 0.0, peak_hi = 0.0;
    bool first_school = true;
    for (std::size_t i = 0; i < district.nodes.size(); ++i) {
        if (district.nodes[i].btype != BuildingType::School) continue;
        double peak = -1e30;
        for (std::size_t t = 0; t < timeline.steps(); ++t)
            if (timeline.outage[t] != 0) peak = std::max(peak, truth[t][i]);
        if (first_school) {
            peak_lo = peak_hi = peak;
            first_school = false;
        } else {
            peak_lo = std::min(peak_lo, peak);
            peak_hi = std::max(peak_hi, peak);
        }
    }
    j["school_blackout_peak_c"] = {{"min", peak_lo}, {"max", peak_hi}};

    const auto fusion = json::parse(read_file(dir / artifacts::kFusionJson));
    j["final_fusion_weights"] = fusion["final"];

    if (fs::exists(dir / artifacts::kMetricsJson)) {
        const auto metrics = json::parse(read_file(dir / artifacts::kMetricsJson));
        j["pooled_rmse_c"] = metrics["pooled"]["rmse_c"];
        j["pooled_mae_c"] = metrics["pooled"]["mae_c"];
    } else {
        j["pooled_rmse_c"] = nullptr;
        j["pooled_mae_c"] = nullptr;
    }

    const auto equity = json::parse(read_file(dir / artifacts::kEquitySummary));
    j["r_eq"] = equity["r_eq"];

    const auto report = json::parse(read_file(dir / artifacts::kInterventionReport));
    j["interventions"] = report["outcomes"];
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& o : report["outcomes"])
        ranked.emplace_back(o["d_rpop_pct"].get<double>(), o["id"].get<std::string>());
    std::sort(ranked.begin(), ranked.end());
    json best = json::array();
    for (const auto& [v, id] : ranked) {
        (void)v;
        best.push_back(id);
    }
    j["interventions_by_improvement"] = best;

    atomic_write_file(dir / artifacts::kSummary, j.dump(2) + "\n");
}

} // namespace

void run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts) {
    for (const Stage s : kAllStages) {
        if (s == Stage::Calibrate && !cfg.run_calibration) continue;
        run_stage(s, cfg, opts);
    }
    const fs::path dir(cfg.out_dir);
    emit_plots(dir, cfg);
    emit_summary(dir, cfg);
}

} // namespace dtwin
