#include "dtwin/config.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

namespace dtwin {

namespace {

struct KeyDef {
    std::string key;
    std::string section;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
}

long to_long(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != std::floor(x)) throw ConfigError("expected integer for " + key + ": '" + v + "'");
    return static_cast<long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected boolean for " + key + ": '" + v + "'");
}

const char* kTypeKeys[kNumBuildingTypes] = {"mf", "sf", "com", "sch", "gro", "cli"};

std::vector<KeyDef> build_registry() {
    std::vector<KeyDef> defs;
    auto num = [&defs](const std::string& section, const std::string& key, auto getter,
                       auto setter) {
        defs.push_back({key, section,
                        [getter](const PipelineConfig& c) { return format_num(getter(c)); },
                        [setter, key](PipelineConfig& c, const std::string& v) {
                            setter(c, to_double(key, v));
                        }});
    };
    auto integer = [&defs](const std::string& section, const std::string& key, auto getter,
                           auto setter) {
        defs.push_back({key, section,
                        [getter](const PipelineConfig& c) { return std::to_string(getter(c)); },
                        [setter, key](PipelineConfig& c, const std::string& v) {
                            setter(c, to_long(key, v));
                        }});
    };
    auto boolean = [&defs](const std::string& section, const std::string& key, auto getter,
                           auto setter) {
        defs.push_back({key, section,
                        [getter](const PipelineConfig& c) {
                            return getter(c) ? std::string("true") : std::string("false");
                        },
                        [setter, key](PipelineConfig& c, const std::string& v) {
                            setter(c, to_bool(key, v));
                        }});
    };

    // --- run ---
    integer("run", "seed", [](const PipelineConfig& c) { return static_cast<long>(c.seed); },
            [](PipelineConfig& c, long v) { c.seed = static_cast<std::uint64_t>(v); });
    defs.push_back({"out_dir", "run",
                    [](const PipelineConfig& c) { return c.out_dir; },
                    [](PipelineConfig& c, const std::string& v) { c.out_dir = v; }});
    boolean("run", "run_calibration",
            [](const PipelineConfig& c) { return c.run_calibration; },
            [](PipelineConfig& c, bool v) { c.run_calibration = v; });
    boolean("run", "emit_svg", [](const PipelineConfig& c) { return c.emit_svg; },
            [](PipelineConfig& c, bool v) { c.emit_svg = v; });
    num("run", "oh_threshold_c", [](const PipelineConfig& c) { return c.oh_threshold_c; },
        [](PipelineConfig& c, double v) { c.oh_threshold_c = v; });

    // --- district ---
    integer("district", "district.n", [](const PipelineConfig& c) { return long(c.district.n); },
            [](PipelineConfig& c, long v) { c.district.n = static_cast<int>(v); });
    for (int t = 0; t < kNumBuildingTypes; ++t) {
        const std::string tk = kTypeKeys[t];
        num("district", "district.frac_" + tk,
            [t](const PipelineConfig& c) { return c.district.fractions[size_t(t)]; },
            [t](PipelineConfig& c, double v) { c.district.fractions[size_t(t)] = v; });
        num("district", "district.pop_lo_" + tk,
            [t](const PipelineConfig& c) { return c.district.pop_lo[size_t(t)]; },
            [t](PipelineConfig& c, double v) { c.district.pop_lo[size_t(t)] = v; });
        num("district", "district.pop_hi_" + tk,
            [t](const PipelineConfig& c) { return c.district.pop_hi[size_t(t)]; },
            [t](PipelineConfig& c, double v) { c.district.pop_hi[size_t(t)] = v; });
        num("district", "district.vuln_" + tk,
            [t](const PipelineConfig& c) { return c.district.vuln_base[size_t(t)]; },
            [t](PipelineConfig& c, double v) { c.district.vuln_base[size_t(t)] = v; });
    }
    num("district", "district.income_noise_sd",
        [](const PipelineConfig& c) { return c.district.income_noise_sd; },
        [](PipelineConfig& c, double v) { c.district.income_noise_sd = v; });
    num("district", "district.vuln_noise_sd",
        [](const PipelineConfig& c) { return c.district.vuln_noise_sd; },
        [](PipelineConfig& c, double v) { c.district.vuln_noise_sd = v; });
    num("district", "district.sensor_fraction",
        [](const PipelineConfig& c) { return c.district.sensor_fraction; },
        [](PipelineConfig& c, double v) { c.district.sensor_fraction = v; });
    integer("district", "district.min_schools",
            [](const PipelineConfig& c) { return long(c.district.min_schools); },
            [](PipelineConfig& c, long v) { c.district.min_schools = int(v); });
    integer("district", "district.min_groceries",
            [](const PipelineConfig& c) { return long(c.district.min_groceries); },
            [](PipelineConfig& c, long v) { c.district.min_groceries = int(v); });
    integer("district", "district.min_clinics",
            [](const PipelineConfig& c) { return long(c.district.min_clinics); },
            [](PipelineConfig& c, long v) { c.district.min_clinics = int(v); });

    // --- scenario ---
    num("scenario", "scenario.duration_h",
        [](const PipelineConfig& c) { return c.scenario.duration_h; },
        [](PipelineConfig& c, double v) { c.scenario.duration_h = v; });
    num("scenario", "scenario.dt_min", [](const PipelineConfig& c) { return c.scenario.dt_min; },
        [](PipelineConfig& c, double v) { c.scenario.dt_min = v; });
    num("scenario", "scenario.temp_mean_c",
        [](const PipelineConfig& c) { return c.scenario.temp_mean_c; },
        [](PipelineConfig& c, double v) { c.scenario.temp_mean_c = v; });
    num("scenario", "scenario.temp_amp_c",
        [](const PipelineConfig& c) { return c.scenario.temp_amp_c; },
        [](PipelineConfig& c, double v) { c.scenario.temp_amp_c = v; });
    num("scenario", "scenario.temp_phase",
        [](const PipelineConfig& c) { return c.scenario.temp_phase; },
        [](PipelineConfig& c, double v) { c.scenario.temp_phase = v; });
    num("scenario", "scenario.outage_period_h",
        [](const PipelineConfig& c) { return c.scenario.outage_period_h; },
        [](PipelineConfig& c, double v) { c.scenario.outage_period_h = v; });
    num("scenario", "scenario.outage_length_h",
        [](const PipelineConfig& c) { return c.scenario.outage_length_h; },
        [](PipelineConfig& c, double v) { c.scenario.outage_length_h = v; });
    num("scenario", "scenario.outage_phase_h",
        [](const PipelineConfig& c) { return c.scenario.outage_phase_h; },
        [](PipelineConfig& c, double v) { c.scenario.outage_phase_h = v; });
    num("scenario", "scenario.smoke", [](const PipelineConfig& c) { return c.scenario.smoke; },
        [](PipelineConfig& c, double v) { c.scenario.smoke = v; });

    // --- thermal ---
    for (int t = 0; t < kNumBuildingTypes; ++t) {
        const std::string tk = kTypeKeys[t];
        auto park = [t](PipelineConfig& c) -> Rc2Params& {
            return c.thermal.type_params[size_t(t)];
        };
        auto parkc = [t](const PipelineConfig& c) -> const Rc2Params& {
            return c.thermal.type_params[size_t(t)];
        };
        num("thermal", "thermal." + tk + ".c_w",
            [parkc](const PipelineConfig& c) { return parkc(c).c_w; },
            [park](PipelineConfig& c, double v) { park(c).c_w = v; });
        num("thermal", "thermal." + tk + ".c_z",
            [parkc](const PipelineConfig& c) { return parkc(c).c_z; },
            [park](PipelineConfig& c, double v) { park(c).c_z = v; });
        num("thermal", "thermal." + tk + ".r_wo",
            [parkc](const PipelineConfig& c) { return parkc(c).r_wo; },
            [park](PipelineConfig& c, double v) { park(c).r_wo = v; });
        num("thermal", "thermal." + tk + ".r_wz",
            [parkc](const PipelineConfig& c) { return parkc(c).r_wz; },
            [park](PipelineConfig& c, double v) { park(c).r_wz = v; });
        num("thermal", "thermal." + tk + ".q_int",
            [parkc](const PipelineConfig& c) { return parkc(c).q_int; },
            [park](PipelineConfig& c, double v) { park(c).q_int = v; });
        num("thermal", "thermal." + tk + ".solar_peak",
            [parkc](const PipelineConfig& c) { return parkc(c).solar_peak; },
            [park](PipelineConfig& c, double v) { park(c).solar_peak = v; });
    }
    num("thermal", "thermal.setpoint_c",
        [](const PipelineConfig& c) { return c.thermal.type_params[0].setpoint; },
        [](PipelineConfig& c, double v) {
            for (auto& p : c.thermal.type_params) p.setpoint = v;
        });
    num("thermal", "thermal.deadband_c",
        [](const PipelineConfig& c) { return c.thermal.type_params[0].deadband; },
        [](PipelineConfig& c, double v) {
            for (auto& p : c.thermal.type_params) p.deadband = v;
        });
    num("thermal", "thermal.qmax_margin", [](const PipelineConfig& c) { return c.qmax_margin; },
        [](PipelineConfig& c, double v) { c.qmax_margin = v; });
    num("thermal", "thermal.design_peak_c",
        [](const PipelineConfig& c) { return c.design_peak_c; },
        [](PipelineConfig& c, double v) { c.design_peak_c = v; });
    defs.push_back({"thermal.truth_mode", "thermal",
                    [](const PipelineConfig& c) {
                        return c.thermal.truth.mode == TruthMode::CoupledTruth
                                   ? std::string("coupled")
                                   : std::string("rc2");
                    },
                    [](PipelineConfig& c, const std::string& v) {
                        if (v == "coupled") c.thermal.truth.mode = TruthMode::CoupledTruth;
                        else if (v == "rc2") c.thermal.truth.mode = TruthMode::Rc2Truth;
                        else throw ConfigError("thermal.truth_mode must be coupled|rc2");
                    }});
    num("thermal", "thermal.outage_bump_c",
        [](const PipelineConfig& c) { return c.thermal.truth.outage_bump_c; },
        [](PipelineConfig& c, double v) { c.thermal.truth.outage_bump_c = v; });
    num("thermal", "thermal.rc2_jitter_sd",
        [](const PipelineConfig& c) { return c.thermal.truth.rc2_jitter_sd; },
        [](PipelineConfig& c, double v) { c.thermal.truth.rc2_jitter_sd = v; });
    num("thermal", "thermal.coupled_tau_lo_h",
        [](const PipelineConfig& c) { return c.thermal.truth.tau_lo_h; },
        [](PipelineConfig& c, double v) { c.thermal.truth.tau_lo_h = v; });
    num("thermal", "thermal.coupled_tau_hi_h",
        [](const PipelineConfig& c) { return c.thermal.truth.tau_hi_h; },
        [](PipelineConfig& c, double v) { c.thermal.truth.tau_hi_h = v; });
    num("thermal", "thermal.coupled_offset_abs_c",
        [](const PipelineConfig& c) { return c.thermal.truth.offset_abs_c; },
        [](PipelineConfig& c, double v) { c.thermal.truth.offset_abs_c = v; });
    num("thermal", "thermal.school_tau_lo_h",
        [](const PipelineConfig& c) { return c.thermal.truth.school_tau_lo_h; },
        [](PipelineConfig& c, double v) { c.thermal.truth.school_tau_lo_h = v; });
    num("thermal", "thermal.school_tau_hi_h",
        [](const PipelineConfig& c) { return c.thermal.truth.school_tau_hi_h; },
        [](PipelineConfig& c, double v) { c.thermal.truth.school_tau_hi_h = v; });
    num("thermal", "thermal.school_offset_abs_c",
        [](const PipelineConfig& c) { return c.thermal.truth.school_offset_abs_c; },
        [](PipelineConfig& c, double v) { c.thermal.truth.school_offset_abs_c = v; });

    // --- sensing ---
    num("sensing", "sensing.iot_sigma_c",
        [](const PipelineConfig& c) { return c.sensing.iot_sigma_c; },
        [](PipelineConfig& c, double v) { c.sensing.iot_sigma_c = v; });
    num("sensing", "sensing.uav_sigma_c",
        [](const PipelineConfig& c) { return c.sensing.uav_sigma_c; },
        [](PipelineConfig& c, double v) { c.sensing.uav_sigma_c = v; });
    num("sensing", "sensing.sat_sigma_c",
        [](const PipelineConfig& c) { return c.sensing.sat_sigma_c; },
        [](PipelineConfig& c, double v) { c.sensing.sat_sigma_c = v; });
    num("sensing", "sensing.uav_period_min",
        [](const PipelineConfig& c) { return c.sensing.uav_period_min; },
        [](PipelineConfig& c, double v) { c.sensing.uav_period_min = v; });
    num("sensing", "sensing.sat_period_min",
        [](const PipelineConfig& c) { return c.sensing.sat_period_min; },
        [](PipelineConfig& c, double v) { c.sensing.sat_period_min = v; });
    integer("sensing", "sensing.sat_smooth_k",
            [](const PipelineConfig& c) { return long(c.sensing.sat_smooth_k); },
            [](PipelineConfig& c, long v) { c.sensing.sat_smooth_k = int(v); });

    // --- fusion ---
    integer("fusion", "fusion.window", [](const PipelineConfig& c) { return long(c.fusion.window); },
            [](PipelineConfig& c, long v) { c.fusion.window = int(v); });
    num("fusion", "fusion.beta", [](const PipelineConfig& c) { return c.fusion.beta; },
        [](PipelineConfig& c, double v) { c.fusion.beta = v; });
    num("fusion", "fusion.tau", [](const PipelineConfig& c) { return c.fusion.tau; },
        [](PipelineConfig& c, double v) { c.fusion.tau = v; });
    num("fusion", "fusion.tau_u", [](const PipelineConfig& c) { return c.fusion.tau_u; },
        [](PipelineConfig& c, double v) { c.fusion.tau_u = v; });
    num("fusion", "fusion.tau_s", [](const PipelineConfig& c) { return c.fusion.tau_s; },
        [](PipelineConfig& c, double v) { c.fusion.tau_s = v; });
    num("fusion", "fusion.delta_ref", [](const PipelineConfig& c) { return c.fusion.delta_ref; },
        [](PipelineConfig& c, double v) { c.fusion.delta_ref = v; });

    // --- calibration ---
    integer("calibration", "calib.epochs",
            [](const PipelineConfig& c) { return long(c.calib.epochs); },
            [](PipelineConfig& c, long v) { c.calib.epochs = int(v); });
    integer("calibration", "calib.windows_per_epoch",
            [](const PipelineConfig& c) { return long(c.calib.windows_per_epoch); },
            [](PipelineConfig& c, long v) { c.calib.windows_per_epoch = int(v); });
    integer("calibration", "calib.window_len",
            [](const PipelineConfig& c) { return long(c.calib.window_len); },
            [](PipelineConfig& c, long v) { c.calib.window_len = int(v); });
    num("calibration", "calib.lr", [](const PipelineConfig& c) { return c.calib.lr; },
        [](PipelineConfig& c, double v) { c.calib.lr = v; });
    num("calibration", "calib.lr_decay", [](const PipelineConfig& c) { return c.calib.lr_decay; },
        [](PipelineConfig& c, double v) { c.calib.lr_decay = v; });
    integer("calibration", "calib.lr_decay_every",
            [](const PipelineConfig& c) { return long(c.calib.lr_decay_every); },
            [](PipelineConfig& c, long v) { c.calib.lr_decay_every = int(v); });
    num("calibration", "calib.grad_clip", [](const PipelineConfig& c) { return c.calib.grad_clip; },
        [](PipelineConfig& c, double v) { c.calib.grad_clip = v; });
    num("calibration", "calib.lambda_phys",
        [](const PipelineConfig& c) { return c.calib.lambda_phys; },
        [](PipelineConfig& c, double v) { c.calib.lambda_phys = v; });
    num("calibration", "calib.huber_delta",
        [](const PipelineConfig& c) { return c.calib.huber_delta; },
        [](PipelineConfig& c, double v) { c.calib.huber_delta = v; });
    num("calibration", "calib.phys_scale", [](const PipelineConfig& c) { return c.calib.phys_scale; },
        [](PipelineConfig& c, double v) { c.calib.phys_scale = v; });
    num("calibration", "calib.soft_weight",
        [](const PipelineConfig& c) { return c.calib.soft_weight; },
        [](PipelineConfig& c, double v) { c.calib.soft_weight = v; });
    num("calibration", "calib.soft_lo_c", [](const PipelineConfig& c) { return c.calib.soft_lo_c; },
        [](PipelineConfig& c, double v) { c.calib.soft_lo_c = v; });
    num("calibration", "calib.soft_hi_c", [](const PipelineConfig& c) { return c.calib.soft_hi_c; },
        [](PipelineConfig& c, double v) { c.calib.soft_hi_c = v; });
    integer("calibration", "calib.phys_samples",
            [](const PipelineConfig& c) { return long(c.calib.phys_samples); },
            [](PipelineConfig& c, long v) { c.calib.phys_samples = int(v); });
    num("calibration", "calib.min_iot_avail",
        [](const PipelineConfig& c) { return c.calib.min_iot_avail; },
        [](PipelineConfig& c, double v) { c.calib.min_iot_avail = v; });
    num("calibration", "calib.train_frac", [](const PipelineConfig& c) { return c.calib.train_frac; },
        [](PipelineConfig& c, double v) { c.calib.train_frac = v; });
    integer("calibration", "calib.emb_dim",
            [](const PipelineConfig& c) { return long(c.calib.emb_dim); },
            [](PipelineConfig& c, long v) { c.calib.emb_dim = int(v); });
    integer("calibration", "calib.hidden",
            [](const PipelineConfig& c) { return long(c.calib.hidden); },
            [](PipelineConfig& c, long v) { c.calib.hidden = int(v); });
    integer("calibration", "calib.sat_min_obs",
            [](const PipelineConfig& c) { return long(c.calib.sat_min_obs); },
            [](PipelineConfig& c, long v) { c.calib.sat_min_obs = int(v); });
    boolean("calibration", "calib.full_batch",
            [](const PipelineConfig& c) { return c.calib.full_batch; },
            [](PipelineConfig& c, bool v) { c.calib.full_batch = v; });

    // --- graph ---
    integer("graph", "graph.k", [](const PipelineConfig& c) { return long(c.graph.k); },
            [](PipelineConfig& c, long v) { c.graph.k = int(v); });
    num("graph", "graph.eta", [](const PipelineConfig& c) { return c.graph.eta; },
        [](PipelineConfig& c, double v) { c.graph.eta = v; });
    num("graph", "graph.gamma", [](const PipelineConfig& c) { return c.graph.gamma; },
        [](PipelineConfig& c, double v) { c.graph.gamma = v; });
    num("graph", "graph.sigma", [](const PipelineConfig& c) { return c.graph.sigma; },
        [](PipelineConfig& c, double v) { c.graph.sigma = v; });
    integer("graph", "graph.m_per_community",
            [](const PipelineConfig& c) { return long(c.graph.m_per_community); },
            [](PipelineConfig& c, long v) { c.graph.m_per_community = int(v); });
    integer("graph", "graph.top_k", [](const PipelineConfig& c) { return long(c.graph.top_k); },
            [](PipelineConfig& c, long v) { c.graph.top_k = int(v); });
    num("graph", "graph.eps", [](const PipelineConfig& c) { return c.graph.eps; },
        [](PipelineConfig& c, double v) { c.graph.eps = v; });
    num("graph", "graph.heat_threshold_c",
        [](const PipelineConfig& c) { return c.graph.heat_threshold_c; },
        [](PipelineConfig& c, double v) { c.graph.heat_threshold_c = v; });
    num("graph", "graph.heat_scale_c", [](const PipelineConfig& c) { return c.graph.heat_scale_c; },
        [](PipelineConfig& c, double v) { c.graph.heat_scale_c = v; });
    for (int t = 0; t < kNumBuildingTypes; ++t) {
        const std::string tk = kTypeKeys[t];
        num("graph", "graph.prior_" + tk,
            [t](const PipelineConfig& c) { return c.graph.priors[size_t(t)]; },
            [t](PipelineConfig& c, double v) { c.graph.priors[size_t(t)] = v; });
    }

    // --- equity ---
    num("equity", "equity.gamma", [](const PipelineConfig& c) { return c.equity.gamma; },
        [](PipelineConfig& c, double v) { c.equity.gamma = v; });
    num("equity", "equity.beta_phys", [](const PipelineConfig& c) { return c.equity.beta_phys; },
        [](PipelineConfig& c, double v) { c.equity.beta_phys = v; });
    num("equity", "equity.beta_sens", [](const PipelineConfig& c) { return c.equity.beta_sens; },
        [](PipelineConfig& c, double v) { c.equity.beta_sens = v; });
    num("equity", "equity.eps_exp", [](const PipelineConfig& c) { return c.equity.eps_exp; },
        [](PipelineConfig& c, double v) { c.equity.eps_exp = v; });
    num("equity", "equity.heat_threshold_c",
        [](const PipelineConfig& c) { return c.equity.heat_threshold_c; },
        [](PipelineConfig& c, double v) { c.equity.heat_threshold_c = v; });
    num("equity", "equity.heat_scale_c",
        [](const PipelineConfig& c) { return c.equity.heat_scale_c; },
        [](PipelineConfig& c, double v) { c.equity.heat_scale_c = v; });
    integer("equity", "equity.smooth_k",
            [](const PipelineConfig& c) { return long(c.equity.smooth_k); },
            [](PipelineConfig& c, long v) { c.equity.smooth_k = int(v); });

    return defs;
}

const std::vector<KeyDef>& registry() {
    static const std::vector<KeyDef> defs = build_registry();
    return defs;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void finalize_thermal(PipelineConfig& cfg) {
    for (auto& p : cfg.thermal.type_params) {
        const double smoke = cfg.scenario.smoke;
        const double peak_need = (cfg.design_peak_c - p.setpoint) /
                                     (p.r_wo / std::max(1e-9, 1.0 - smoke) + p.r_wz) +
                                 p.q_int + p.solar_peak;
        p.q_max = cfg.qmax_margin * std::max(0.0, peak_need);
    }
}

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto val = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& def : registry()) {
            if (def.key == key) {
                def.set(cfg, val);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown config key: " + key);
    }
    finalize_thermal(cfg);
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config_text(read_file(path));
}

std::string config_to_text(const PipelineConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& def : registry()) {
        if (def.section != section) {
            section = def.section;
            out << (out.tellp() > 0 ? "\n" : "") << "# " << section << "\n";
        }
        out << def.key << " = " << def.get(cfg) << "\n";
    }
    return out.str();
}

std::string config_hash(const PipelineConfig& cfg) {
    return fnv1a64_hex(config_to_text(cfg));
}

} // namespace dtwin
