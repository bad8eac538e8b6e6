#pragma once

#include "dtwin/sensing.hpp"
#include "dtwin/thermal.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <vector>

namespace dtwin {

struct FusionConfig {
    int window = 6;          // trailing window, steps
    double beta = 0.9;       // EMA factor
    double tau = 0.25;       // softmax temperature
    double tau_u = 12.0;     // UAV freshness half-life, steps
    double tau_s = 48.0;     // SAT freshness half-life, steps
    double delta_ref = 1.0;  // consistency scale, degC
};

struct StreamScores {
    double iot = 0.0, uav = 0.0, sat = 0.0;

    std::array<double, 3> as_array() const { return {iot, uav, sat}; }
};

/// Availability/consistency/freshness scores for the three streams at step t.
/// Availability is the non-missing fraction of the trailing window across all
/// rows; sparse streams use their last W observed columns and gate by
/// exp(-age/tau).
StreamScores stream_scores(const StreamSet& streams, std::size_t t, const FusionConfig& config);

struct FusionState {
    std::array<double, 3> w_ema{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    // Per-step post-EMA weights [w_iot, w_uav, w_sat].
    std::vector<std::array<double, 3>> history;
};

std::array<double, 3> tempered_softmax(const std::array<double, 3>& scores, double tau);

/// Score -> tempered softmax -> EMA -> renormalize, per step over the run.
FusionState fuse_weights(const StreamSet& streams, const FusionConfig& config);

struct RlWeights {
    std::vector<double> w;
    double alpha = 0.1;
};

/// Centered-covariance reliability update: w += alpha*(r - rbar)*(x - xbar).
RlWeights rl_weight_update(RlWeights state, const std::vector<double>& rewards,
                           const std::vector<double>& qualities);

struct KalmanModel {
    Eigen::MatrixXd a, b, c;       // continuous-time state/input/observation
    Eigen::MatrixXd q_proc, r_meas;
    Eigen::VectorXd x;             // state mean
    Eigen::MatrixXd p;             // state covariance
};

/// Discrete predict (first-order hold, Ad = I + A*dt) plus the standard
/// measurement update. A missing observation runs predict only.
void kalman_assimilate(KalmanModel& model, const Eigen::VectorXd& u,
                       const std::optional<Eigen::VectorXd>& y, double dt_h);

/// State-space linearization of the 2R2C node: x=[T_w,T_z], u=[T_out_eff,
/// Q_total], y=T_z.
KalmanModel make_rc2_kalman(const Rc2Params& params, double q_proc_diag, double r_meas_diag);

/// Weighted blend of the latest per-stream values for one node at step t,
/// renormalizing over the streams that are currently available. Empty when
/// nothing has been observed yet.
std::optional<double> fused_observation(const StreamSet& streams, std::size_t node, std::size_t t,
                                        const std::array<double, 3>& weights);

std::string fusion_history_to_csv(const FusionState& st);

} // namespace dtwin
