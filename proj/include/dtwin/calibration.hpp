#pragma once

#include "dtwin/district.hpp"
#include "dtwin/scenario.hpp"
#include "dtwin/sensing.hpp"
#include "dtwin/thermal.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace dtwin {

struct CalibConfig {
    int epochs = 300;
    int windows_per_epoch = 32;
    int window_len = 36;           // steps (6 h at 10-min resolution)
    double lr = 0.02;
    double lr_decay = 0.5;
    int lr_decay_every = 120;      // epochs
    double grad_clip = 10.0;       // global norm
    double lambda_phys = 12.0;
    double huber_delta = 1.0;      // degC
    double phys_scale = 1.0;       // S in the residual normalization
    double soft_weight = 0.05;     // internal scale of the blackout soft bounds
    double soft_lo_c = 31.5;
    double soft_hi_c = 35.5;
    int phys_samples = 8;          // residual points per window
    double min_iot_avail = 0.30;   // well-observed node threshold
    double train_frac = 0.8;
    int emb_dim = 4;
    int hidden = 16;
    int sat_min_obs = 24;          // SAT columns per node needed to report SAT
    int restarts = 6;              // multi-start inits over HVAC capacity/deadband scales
    bool full_batch = false;       // fixed windows + monotone line-search descent
};

/// Trainable state: per-type raw (log) physical parameters and a small
/// init-state regressor (per-type embedding -> hidden tanh layer -> T_w0/T_z0).
/// Setpoint and solar peak are carried along as fixed per-type constants.
struct CalibParams {
    // raw order: c_w, c_z, r_wo, r_wz, q_int, q_max, deadband
    std::array<std::array<double, 7>, kNumBuildingTypes> raw{};
    std::vector<double> emb;  // kNumBuildingTypes * emb_dim
    std::vector<double> w1;   // (emb_dim + 2) * hidden
    std::vector<double> b1;   // hidden
    std::vector<double> w2;   // hidden * 2
    std::vector<double> b2;   // 2
    int emb_dim = 4;
    int hidden = 16;
    std::array<double, kNumBuildingTypes> setpoint{};
    std::array<double, kNumBuildingTypes> solar_peak{};
    std::vector<int> train_nodes, val_nodes;

    Rc2Params mapped_params(BuildingType t) const;
    std::array<double, 2> initial_state(BuildingType t, double t0_h) const;
};

/// Raw parameters start at the log of the per-type defaults. The HVAC
/// capacity and deadband inits can be rescaled: the thermostat gate gives the
/// deadband an almost-everywhere-zero gradient, so only multi-start can move
/// it between regimes.
CalibParams init_calib_params(const ThermalConfig& thermal, const CalibConfig& cfg,
                              std::uint64_t seed, double qmax_init_scale = 1.0,
                              double db_init_scale = 1.0);

std::vector<double> pack_params(const CalibParams& p);
void unpack_params(const std::vector<double>& v, CalibParams& p);

/// Streams merged to one observation matrix [node][t] with IoT -> UAV -> SAT
/// priority; NaN where nothing observed.
std::vector<std::vector<double>> merge_observations(const StreamSet& streams);

struct WindowSpec {
    int node = 0;
    std::size_t start = 0;
    std::size_t len = 0;
};

struct LossReport {
    double l_seq = 0.0, l_phys = 0.0, l_soft = 0.0, total = 0.0;
    double lambda_phys = 12.0;
    std::size_t obs_count = 0;
};

/// Bundles the data context and exposes the windowed loss with analytic
/// gradients (packed layout of pack_params).
class CalibProblem {
public:
    CalibProblem(const District& district, const HazardTimeline& timeline,
                 const StreamSet& streams, const CalibConfig& cfg);

    LossReport window_loss(const CalibParams& p, const WindowSpec& w,
                           std::vector<double>* grad, std::uint64_t phys_seed) const;
    LossReport batch_loss(const CalibParams& p, const std::vector<WindowSpec>& windows,
                          std::vector<double>* grad, std::uint64_t phys_seed) const;

    /// Sensor nodes whose IoT availability meets the threshold.
    std::vector<int> well_observed_nodes() const;

    /// Model zone-temperature rollout over [start, start+len] from the
    /// regressed initial state; returns len+1 (T_w, T_z) pairs.
    std::vector<std::array<double, 2>> rollout(const CalibParams& p, int node, std::size_t start,
                                               std::size_t len) const;

    const std::vector<std::vector<double>>& observations() const { return obs_; }
    const District& district() const { return *district_; }
    const HazardTimeline& timeline() const { return *timeline_; }
    const CalibConfig& config() const { return cfg_; }

private:
    const District* district_;
    const HazardTimeline* timeline_;
    const StreamSet* streams_;
    CalibConfig cfg_;
    std::vector<std::vector<double>> obs_;
};

struct SourceMetrics {
    double rmse = 0.0, mae = 0.0;
    std::size_t count = 0;
};

struct ValidationMetrics {
    std::optional<SourceMetrics> iot, uav, sat;  // sat absent under the obs-count floor
    SourceMetrics pooled;
};

/// Fit per-type parameters and the init-state net against the merged streams.
/// Adaptive per-parameter steps (Adam), gradient-norm clipping, step decay;
/// full-batch mode swaps in fixed windows with a monotone backtracking step.
CalibParams train(const District& district, const HazardTimeline& timeline,
                  const StreamSet& streams, const ThermalConfig& thermal,
                  const CalibConfig& cfg, std::uint64_t seed);

/// Full-series rollouts for the held-out nodes; RMSE/MAE per source at that
/// source's observed points.
ValidationMetrics validate(const CalibParams& params, const District& district,
                           const HazardTimeline& timeline, const StreamSet& streams,
                           const CalibConfig& cfg);

double huber(double r, double delta);

/// Mean squared 2R2C balance residual of a trajectory at the given
/// window-relative offsets (time derivative via centered differences on the
/// rollout grid, both residuals normalized by `scale`).
double physics_residual(const Rc2Params& params, const HazardTimeline& timeline,
                        std::size_t start, const std::vector<std::array<double, 2>>& states,
                        const std::vector<std::size_t>& sample_offsets, double scale);

std::string metrics_to_csv(const ValidationMetrics& m);

} // namespace dtwin
