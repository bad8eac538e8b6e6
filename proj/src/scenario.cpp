#include "dtwin/scenario.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"

#include <cmath>
#include <sstream>

namespace dtwin {

HazardTimeline build_timeline(const ScenarioConfig& cfg) {
    if (!(cfg.dt_min > 0.0) || !(cfg.duration_h > 0.0))
        throw ConfigError("timeline duration and dt must be positive");
    const double dt_h = cfg.dt_min / 60.0;
    const double steps_f = cfg.duration_h / dt_h;
    const auto steps = static_cast<std::size_t>(std::llround(steps_f));
    if (std::abs(steps_f - static_cast<double>(steps)) > 1e-9 || steps == 0)
        throw ConfigError("dt must divide the scenario duration");

    HazardTimeline tl;
    tl.dt_h = dt_h;
    tl.t_h.resize(steps);
    tl.t_out.resize(steps);
    tl.outage.resize(steps);
    tl.smoke.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) * dt_h;
        tl.t_h[i] = t;
        tl.t_out[i] = cfg.temp_mean_c +
                      cfg.temp_amp_c * std::sin(2.0 * M_PI * (t / 24.0 - cfg.temp_phase));
        double ph = std::fmod(t - cfg.outage_phase_h, cfg.outage_period_h);
        if (ph < 0.0) ph += cfg.outage_period_h;
        tl.outage[i] = (ph < cfg.outage_length_h) ? 1 : 0;
        tl.smoke[i] = cfg.smoke;
    }
    return tl;
}

std::string timeline_to_csv(const HazardTimeline& tl) {
    std::ostringstream out;
    out << "t_index,time_h,T_out,outage,smoke\n";
    for (std::size_t i = 0; i < tl.steps(); ++i) {
        out << i << ',' << format_num(tl.t_h[i]) << ',' << format_num(tl.t_out[i]) << ','
            << tl.outage[i] << ',' << format_num(tl.smoke[i]) << '\n';
    }
    return out.str();
}

HazardTimeline timeline_from_csv(const std::string& text) {
    const auto t = parse_csv(text);
    HazardTimeline tl;
    const auto c_t = t.col("time_h"), c_T = t.col("T_out"), c_o = t.col("outage"),
               c_s = t.col("smoke");
    for (const auto& row : t.rows) {
        tl.t_h.push_back(parse_double(row[c_t]));
        tl.t_out.push_back(parse_double(row[c_T]));
        tl.outage.push_back(static_cast<int>(parse_double(row[c_o])));
        tl.smoke.push_back(parse_double(row[c_s]));
    }
    if (tl.t_h.size() >= 2) tl.dt_h = tl.t_h[1] - tl.t_h[0];
    return tl;
}

double compound_stress(const HazardCoupling& coupling, double temp_c, double structural) {
    if (coupling.terms.empty()) throw ConfigError("compound stress needs at least one hazard");
    double wsum = 0.0;
    for (const auto& term : coupling.terms) {
        if (term.weight < 0.0) throw ConfigError("hazard weights must be nonnegative");
        wsum += term.weight;
    }
    if (wsum <= 0.0) throw ConfigError("hazard weights must not all be zero");
    double h = 0.0;
    for (const auto& term : coupling.terms) {
        const double fx = term.transform ? term.transform(term.intensity, temp_c, structural)
                                         : term.intensity;
        h += (term.weight / wsum) * fx;
    }
    return h;
}

void update_coupling_weights(HazardCoupling& coupling, const std::vector<double>& rewards,
                             const std::vector<double>& qualities, double alpha) {
    const auto n = coupling.terms.size();
    if (rewards.size() != n || qualities.size() != n)
        throw ConfigError("reward/quality vectors must match the hazard count");
    double rbar = 0.0, xbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rbar += rewards[i];
        xbar += qualities[i];
    }
    rbar /= static_cast<double>(n);
    xbar /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        coupling.terms[i].weight += alpha * (rewards[i] - rbar) * (qualities[i] - xbar);
}

double transition_probability(const TransitionModel& m, double temp_c, double structural,
                              double t_h) {
    const double z = m.theta0 + m.theta1 * temp_c + m.theta2 * structural + m.theta3 * t_h;
    return 1.0 / (1.0 + std::exp(-z));
}

ResilienceSeries resilience_trajectory(const std::vector<double>& t_h,
                                       const std::vector<double>& performance, double baseline,
                                       double t0_h) {
    if (baseline <= 0.0) throw ConfigError("resilience baseline L0 must be positive");
    if (t_h.size() != performance.size() || t_h.empty())
        throw ConfigError("resilience series shape mismatch");
    if (t_h.back() <= t0_h) throw ConfigError("series must extend past t0");

    ResilienceSeries out;
    out.t_h = t_h;
    out.performance = performance;
    out.baseline = baseline;
    out.t0_h = t0_h;
    out.r.assign(t_h.size(), 1.0);

    double integral = 0.0;
    bool started = false;
    double prev_t = t0_h, prev_dev = 0.0;
    for (std::size_t i = 0; i < t_h.size(); ++i) {
        if (t_h[i] <= t0_h) continue;
        const double dev = std::abs(performance[i] - baseline);
        if (!started) {
            // Deficit at t0 interpolated as the first in-range deviation.
            prev_dev = dev;
            started = true;
        }
        integral += 0.5 * (prev_dev + dev) * (t_h[i] - prev_t);
        out.r[i] = 1.0 - integral / (baseline * (t_h[i] - t0_h));
        prev_t = t_h[i];
        prev_dev = dev;
    }
    return out;
}

} // namespace dtwin
