#pragma once

#include "dtwin/district.hpp"
#include "dtwin/scenario.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace dtwin {

/// Lumped 2R2C envelope/zone parameters. Capacitances kWh/degC, resistances
/// degC/kW, gains kW.
struct Rc2Params {
    double c_w = 10.0, c_z = 2.0;
    double r_wo = 0.5, r_wz = 0.1;
    double q_int = 0.3;
    double q_max = 30.0;
    double deadband = 0.5;
    double setpoint = 24.0;
    double solar_peak = 1.0;
};

struct Rc2State {
    double t_w = 24.0, t_z = 24.0;
};

/// One midpoint RK2 step of the wall/zone energy balance with frozen forcing.
Rc2State rc2_step(Rc2State s, const Rc2Params& p, double t_out_eff, double q_total, double dt_h);

/// Half-sine solar gain over 06:00-18:00 local time.
double solar_gain(double peak_kw, double t_h);

/// Per-step forcing assembled by the rollout drivers (thermostat sampled at
/// the step start, smoke scaling applied to the envelope conductance).
struct StepForcing {
    double t_out_eff = 0.0;
    double r_wo_eff = 0.0;
    double q_sol = 0.0;
    double q_hvac = 0.0;
    double q_total = 0.0;
    bool outage = false;
};

StepForcing resolve_forcing(const Rc2Params& p, const HazardTimeline& tl, std::size_t step,
                            double t_z, bool outage_suppressed);

/// Roll the 2R2C model over timeline steps [begin, begin+len); returns len+1
/// states (initial state included). Optionally records the per-step forcing.
std::vector<Rc2State> rc2_rollout(const Rc2Params& p, const HazardTimeline& tl, std::size_t begin,
                                  std::size_t len, Rc2State init,
                                  std::vector<StepForcing>* forcing = nullptr,
                                  bool outage_suppressed = false);

enum class TruthMode { Rc2Truth, CoupledTruth };

struct TruthConfig {
    TruthMode mode = TruthMode::CoupledTruth;
    double outage_bump_c = 1.2;     // zone bump at each 0->1 outage onset
    double rc2_jitter_sd = 0.05;    // lognormal sd on per-node RC params (Rc2Truth)
    // First-order coupling constants (CoupledTruth); schools draw from the
    // interior of the generic band so their blackout peaks stay in the
    // documented range.
    double tau_lo_h = 2.0, tau_hi_h = 8.0;
    double offset_abs_c = 2.0;
    double school_tau_lo_h = 4.5, school_tau_hi_h = 6.5;
    double school_offset_abs_c = 0.5;
};

struct ThermalConfig {
    std::array<Rc2Params, kNumBuildingTypes> type_params;
    TruthConfig truth;
};

/// Per-type defaults with Q_max sized to hold the setpoint under peak
/// outdoor forcing (margin applied).
ThermalConfig default_thermal_config();

const Rc2Params& params_for(const ThermalConfig& cfg, BuildingType t);

/// Zone-temperature series for one building under the chosen truth mode.
/// Rc2Truth jitters the RC parameters per node; CoupledTruth uses the
/// first-order statistical coupling. Both add the outage-onset bump.
std::vector<double> simulate_building(const Rc2Params& params, const HazardTimeline& tl,
                                      TruthMode mode, const TruthConfig& cfg, std::uint64_t seed,
                                      BuildingType btype, bool outage_suppressed = false);

/// Truth matrix, time-major: truth[t][n]. Per-node seeds derived from `seed`
/// and the node id. `suppress_outage` optionally disables the outage (HVAC
/// loss, drift bumps) for the flagged nodes.
std::vector<std::vector<double>> simulate_district_truth(
    const District& district, const HazardTimeline& tl, const ThermalConfig& cfg,
    std::uint64_t seed, const std::vector<bool>* suppress_outage = nullptr);

std::string truth_to_csv(const std::vector<std::vector<double>>& truth);
std::vector<std::vector<double>> truth_from_csv(const std::string& text);

// --- side models ---

struct SurfaceFluxParams {
    double h_conv = 10.0;                  // W/m2K
    double emissivity = 0.9;               // [0,1]
    double sigma = 5.670374419e-8;         // W/m2K^4
};

/// Combined convective-radiative boundary flux, temperatures in Kelvin.
double surface_flux(const SurfaceFluxParams& p, double t_s_k, double t_inf_k, double t_sur_k);

struct Pm25Params {
    double ach = 1.0;          // air exchange, 1/h
    double penetration = 0.8;  // [0,1]
    double k_dep = 0.2;        // 1/h
    double cadr = 0.0;         // m3/h
    double volume = 250.0;     // m3
    double s_ind = 0.0;        // ug/m3/h
};

/// RK2 integration of the single-zone particulate balance; clipped at zero.
/// Returns a series aligned with c_out (index 0 carries c0).
std::vector<double> pm25_rollout(const Pm25Params& p, const std::vector<double>& c_out, double c0,
                                 double dt_h);

struct DamageModel {
    double beta = 1.0;   // 1/strain
    double eps0 = 0.0;   // threshold strain
    double k0 = 1.0;     // initial stiffness
};

struct DamageResult {
    double d = 0.0;      // damage index [0,1)
    double k_eff = 0.0;  // degraded stiffness
};

DamageResult damage(const DamageModel& m, double eps_s);

} // namespace dtwin
