#include "dtwin/thermal.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {

struct Derivs {
    double dt_w, dt_z;
};

Derivs rc2_rhs(const Rc2State& s, const Rc2Params& p, double t_out_eff, double q_total) {
    Derivs d;
    d.dt_w = ((t_out_eff - s.t_w) / p.r_wo + (s.t_z - s.t_w) / p.r_wz) / p.c_w;
    d.dt_z = ((s.t_w - s.t_z) / p.r_wz + q_total) / p.c_z;
    return d;
}

} // namespace

Rc2State rc2_step(Rc2State s, const Rc2Params& p, double t_out_eff, double q_total, double dt_h) {
    if (!(dt_h > 0.0)) throw ConfigError("rc2_step requires positive dt");
    const Derivs k1 = rc2_rhs(s, p, t_out_eff, q_total);
    Rc2State mid{s.t_w + 0.5 * dt_h * k1.dt_w, s.t_z + 0.5 * dt_h * k1.dt_z};
    const Derivs k2 = rc2_rhs(mid, p, t_out_eff, q_total);
    return {s.t_w + dt_h * k2.dt_w, s.t_z + dt_h * k2.dt_z};
}

double solar_gain(double peak_kw, double t_h) {
    const double hod = std::fmod(t_h, 24.0);
    return peak_kw * std::max(0.0, std::sin(M_PI * (hod - 6.0) / 12.0));
}

StepForcing resolve_forcing(const Rc2Params& p, const HazardTimeline& tl, std::size_t step,
                            double t_z, bool outage_suppressed) {
    StepForcing f;
    const bool outage = !outage_suppressed && tl.outage[step] != 0;
    f.outage = outage;
    f.t_out_eff = tl.t_out[step];
    // Smoke reduces the effective envelope conductance 1/R_wo.
    const double smoke = tl.smoke[step];
    f.r_wo_eff = p.r_wo / std::max(1e-9, 1.0 - smoke);
    f.q_sol = solar_gain(p.solar_peak, tl.t_h[step]);
    f.q_hvac = 0.0;
    if (!outage && t_z > p.setpoint + p.deadband)
        f.q_hvac = -std::min(p.q_max, (t_z - p.setpoint) / p.deadband * p.q_max);
    f.q_total = p.q_int + f.q_sol + f.q_hvac;
    return f;
}

std::vector<Rc2State> rc2_rollout(const Rc2Params& p, const HazardTimeline& tl, std::size_t begin,
                                  std::size_t len, Rc2State init,
                                  std::vector<StepForcing>* forcing, bool outage_suppressed) {
    if (tl.steps() == 0) throw ConfigError("rollout requires a non-empty timeline");
    if (begin + len > tl.steps()) throw ConfigError("rollout range exceeds timeline");
    std::vector<Rc2State> out;
    out.reserve(len + 1);
    out.push_back(init);
    if (forcing) forcing->clear();
    Rc2State s = init;
    for (std::size_t i = 0; i < len; ++i) {
        const auto f = resolve_forcing(p, tl, begin + i, s.t_z, outage_suppressed);
        Rc2Params eff = p;
        eff.r_wo = f.r_wo_eff;
        s = rc2_step(s, eff, f.t_out_eff, f.q_total, tl.dt_h);
        out.push_back(s);
        if (forcing) forcing->push_back(f);
    }
    return out;
}

ThermalConfig default_thermal_config() {
    ThermalConfig cfg;
    auto mk = [](double cw, double cz, double rwo, double rwz, double qint, double solar) {
        Rc2Params p;
        p.c_w = cw;
        p.c_z = cz;
        p.r_wo = rwo;
        p.r_wz = rwz;
        p.q_int = qint;
        p.solar_peak = solar;
        p.setpoint = 24.0;
        p.deadband = 0.5;
        // Sized to hold the setpoint at peak outdoor forcing with smoke on.
        const double peak_need =
            (40.0 - p.setpoint) / (rwo / 0.85 + rwz) + qint + solar;
        p.q_max = 1.3 * peak_need;
        return p;
    };
    cfg.type_params[static_cast<int>(BuildingType::MultiFamily)] = mk(10.0, 2.0, 0.50, 0.10, 0.3, 1.0);
    cfg.type_params[static_cast<int>(BuildingType::SingleFamily)] = mk(6.0, 1.2, 0.65, 0.15, 0.2, 0.8);
    cfg.type_params[static_cast<int>(BuildingType::Commercial)] = mk(9.0, 2.2, 0.45, 0.08, 0.8, 1.5);
    cfg.type_params[static_cast<int>(BuildingType::School)] = mk(14.0, 2.8, 0.55, 0.12, 1.0, 2.0);
    cfg.type_params[static_cast<int>(BuildingType::Grocery)] = mk(8.0, 1.8, 0.40, 0.10, 0.6, 1.2);
    cfg.type_params[static_cast<int>(BuildingType::Clinic)] = mk(13.0, 2.5, 0.60, 0.12, 0.7, 1.5);
    return cfg;
}

const Rc2Params& params_for(const ThermalConfig& cfg, BuildingType t) {
    return cfg.type_params[static_cast<int>(t)];
}

namespace {

std::vector<double> coupled_series(const HazardTimeline& tl, double tau_h, double offset_c,
                                   double bump_c, bool outage_suppressed) {
    const auto steps = tl.steps();
    std::vector<double> tz(steps);
    // The blackout drift is a level shift held while the outage lasts; the
    // first-order lag carries it in and out.
    auto target_at = [&](std::size_t i) {
        const bool outage = !outage_suppressed && tl.outage[i] != 0;
        return (1.0 - tl.smoke[i]) * (tl.t_out[i] + offset_c) + (outage ? bump_c : 0.0);
    };
    tz[0] = target_at(0);
    for (std::size_t i = 0; i + 1 < steps; ++i)
        tz[i + 1] = tz[i] + (tl.dt_h / tau_h) * (target_at(i) - tz[i]);
    return tz;
}

} // namespace

std::vector<double> simulate_building(const Rc2Params& params, const HazardTimeline& tl,
                                      TruthMode mode, const TruthConfig& cfg, std::uint64_t seed,
                                      BuildingType btype, bool outage_suppressed) {
    if (tl.steps() == 0) throw ConfigError("simulate_building requires a non-empty timeline");
    Rng rng(seed);
    if (mode == TruthMode::CoupledTruth) {
        const bool school = btype == BuildingType::School;
        const double tau_lo = school ? cfg.school_tau_lo_h : cfg.tau_lo_h;
        const double tau_hi = school ? cfg.school_tau_hi_h : cfg.tau_hi_h;
        const double off = school ? cfg.school_offset_abs_c : cfg.offset_abs_c;
        const double tau = rng.uniform(tau_lo, tau_hi);
        const double offset = rng.uniform(-off, off);
        return coupled_series(tl, tau, offset, cfg.outage_bump_c, outage_suppressed);
    }

    Rc2Params p = params;
    p.c_w *= std::exp(rng.normal(0.0, cfg.rc2_jitter_sd));
    p.c_z *= std::exp(rng.normal(0.0, cfg.rc2_jitter_sd));
    p.r_wo *= std::exp(rng.normal(0.0, cfg.rc2_jitter_sd));
    p.r_wz *= std::exp(rng.normal(0.0, cfg.rc2_jitter_sd));
    p.q_int *= std::exp(rng.normal(0.0, cfg.rc2_jitter_sd));

    // Start on-setpoint with the wall in balance against the first sample.
    const double rwo0 = p.r_wo / std::max(1e-9, 1.0 - tl.smoke[0]);
    Rc2State s;
    s.t_z = p.setpoint;
    s.t_w = (tl.t_out[0] / rwo0 + s.t_z / p.r_wz) / (1.0 / rwo0 + 1.0 / p.r_wz);

    std::vector<double> tz(tl.steps());
    tz[0] = s.t_z;
    for (std::size_t i = 0; i + 1 < tl.steps(); ++i) {
        const auto f = resolve_forcing(p, tl, i, s.t_z, outage_suppressed);
        Rc2Params eff = p;
        eff.r_wo = f.r_wo_eff;
        // Blackout drift enters as a held shift on the driving temperature.
        const double drive = f.t_out_eff + (f.outage ? cfg.outage_bump_c : 0.0);
        s = rc2_step(s, eff, drive, f.q_total, tl.dt_h);
        tz[i + 1] = s.t_z;
    }
    return tz;
}

std::vector<std::vector<double>> simulate_district_truth(
    const District& district, const HazardTimeline& tl, const ThermalConfig& cfg,
    std::uint64_t seed, const std::vector<bool>* suppress_outage) {
    const auto steps = tl.steps();
    const auto n = district.nodes.size();
    std::vector<std::vector<double>> truth(steps, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        const auto& node = district.nodes[j];
        const bool suppress = suppress_outage && (*suppress_outage)[j];
        const auto series = simulate_building(
            params_for(cfg, node.btype), tl, cfg.truth.mode, cfg.truth,
            mix_seed(seed, 0x7100 + static_cast<std::uint64_t>(node.id)), node.btype, suppress);
        for (std::size_t t = 0; t < steps; ++t) truth[t][j] = series[t];
    }
    return truth;
}

std::string truth_to_csv(const std::vector<std::vector<double>>& truth) {
    std::ostringstream out;
    out << "t_index";
    if (!truth.empty())
        for (std::size_t j = 0; j < truth.front().size(); ++j) out << ",n" << j;
    out << '\n';
    for (std::size_t t = 0; t < truth.size(); ++t) {
        out << t;
        for (const double v : truth[t]) out << ',' << format_num(v);
        out << '\n';
    }
    return out.str();
}

std::vector<std::vector<double>> truth_from_csv(const std::string& text) {
    const auto table = parse_csv(text);
    std::vector<std::vector<double>> truth;
    truth.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        std::vector<double> vals;
        vals.reserve(row.size() - 1);
        for (std::size_t j = 1; j < row.size(); ++j) vals.push_back(parse_double(row[j]));
        truth.push_back(std::move(vals));
    }
    return truth;
}

double surface_flux(const SurfaceFluxParams& p, double t_s_k, double t_inf_k, double t_sur_k) {
    if (t_s_k < 0.0 || t_inf_k < 0.0 || t_sur_k < 0.0)
        throw ConfigError("surface_flux temperatures must be absolute (Kelvin)");
    const double conv = p.h_conv * (t_s_k - t_inf_k);
    const double rad = p.emissivity * p.sigma *
                       (std::pow(t_s_k, 4) - std::pow(t_sur_k, 4));
    return conv + rad;
}

std::vector<double> pm25_rollout(const Pm25Params& p, const std::vector<double>& c_out, double c0,
                                 double dt_h) {
    if (!(dt_h > 0.0)) throw ConfigError("pm25_rollout requires positive dt");
    if (c0 < 0.0) throw ConfigError("pm25 initial concentration must be nonnegative");
    const double loss = p.ach + p.k_dep + (p.volume > 0.0 ? p.cadr / p.volume : 0.0);
    std::vector<double> c(c_out.size());
    if (c.empty()) return c;
    c[0] = c0;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        const double gain = p.ach * p.penetration * c_out[i] + p.s_ind;
        const double k1 = gain - loss * c[i];
        const double mid = c[i] + 0.5 * dt_h * k1;
        const double k2 = gain - loss * mid;
        c[i + 1] = std::max(0.0, c[i] + dt_h * k2);
    }
    return c;
}

DamageResult damage(const DamageModel& m, double eps_s) {
    const double x = std::max(0.0, eps_s - m.eps0);
    DamageResult r;
    r.d = 1.0 - std::exp(-m.beta * x);
    r.k_eff = (1.0 - r.d) * m.k0;
    return r;
}

} // namespace dtwin
