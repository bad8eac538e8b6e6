#pragma once

#include <functional>
#include <string>
#include <vector>

namespace dtwin {

/// Shared hazard time grid: outdoor temperature, rolling-outage indicator and
/// smoke modulation factor at every step.
struct HazardTimeline {
    double dt_h = 1.0 / 6.0;       // hours per step
    std::vector<double> t_h;       // step start times, hours
    std::vector<double> t_out;     // outdoor temperature, degC
    std::vector<int> outage;       // 0/1
    std::vector<double> smoke;     // [0,1] ventilation modulation

    std::size_t steps() const { return t_h.size(); }
};

struct ScenarioConfig {
    double duration_h = 72.0;
    double dt_min = 10.0;
    double temp_mean_c = 32.0;     // diurnal sinusoid: mean + amp*sin(2*pi*(t/24 - phase))
    double temp_amp_c = 8.0;
    double temp_phase = 0.15;
    double outage_period_h = 6.0;
    double outage_length_h = 4.0;
    double outage_phase_h = 0.0;   // first outage starts here
    double smoke = 0.15;
};

HazardTimeline build_timeline(const ScenarioConfig& config);

std::string timeline_to_csv(const HazardTimeline& tl);
HazardTimeline timeline_from_csv(const std::string& text);

/// One hazard entry in the generic coupling formula: an intensity plus a
/// transform f(H, T, S). The default transform is the identity on H.
struct HazardTerm {
    double weight = 1.0;           // adaptive importance, nonnegative
    double intensity = 0.0;
    std::function<double(double H, double T, double S)> transform; // null => identity
};

struct HazardCoupling {
    std::vector<HazardTerm> terms;
};

/// Weighted compound stress: sum of normalized weights times transformed
/// intensities, given temperature and structural state.
double compound_stress(const HazardCoupling& coupling, double temp_c, double structural);

/// Reliability-style update of the coupling weights (same centered-covariance
/// rule as the fusion module); optional hook, not used by the default pipeline.
void update_coupling_weights(HazardCoupling& coupling, const std::vector<double>& rewards,
                             const std::vector<double>& qualities, double alpha);

struct TransitionModel {
    double theta0 = 0.0, theta1 = 0.0, theta2 = 0.0, theta3 = 0.0;
};

/// Logistic probability that one hazard triggers another given temperature,
/// structural state and elapsed time.
double transition_probability(const TransitionModel& model, double temp_c, double structural,
                              double t_h);

struct ResilienceSeries {
    std::vector<double> t_h;
    std::vector<double> performance;  // L(t)
    double baseline = 1.0;            // L0
    double t0_h = 0.0;
    std::vector<double> r;            // R(t); 1 at and before t0
};

/// Normalized loss-and-restoration trajectory: R(t) = 1 - integral of
/// |L - L0| over (t0, t] divided by L0*(t - t0), trapezoidal on the grid.
ResilienceSeries resilience_trajectory(const std::vector<double>& t_h,
                                       const std::vector<double>& performance, double baseline,
                                       double t0_h);

} // namespace dtwin
