#include "dtwin/fusion.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {

struct WindowQuality {
    double availability = 0.0;
    double consistency = 0.5;
};

/// Quality of a span of columns: non-missing fraction plus smoothness mapped
/// through 1/(1 + mean|diff|/delta_ref). Fewer than two valid adjacent points
/// falls back to the 0.5 consistency default.
WindowQuality window_quality(const std::vector<std::vector<double>>& m, std::size_t c_begin,
                             std::size_t c_end, double delta_ref) {
    WindowQuality q;
    std::size_t total = 0, present = 0, pairs = 0;
    double diff_sum = 0.0;
    for (const auto& row : m) {
        for (std::size_t c = c_begin; c < c_end; ++c) {
            ++total;
            if (!is_missing(row[c])) ++present;
            if (c > c_begin && !is_missing(row[c]) && !is_missing(row[c - 1])) {
                diff_sum += std::abs(row[c] - row[c - 1]);
                ++pairs;
            }
        }
    }
    q.availability = total > 0 ? static_cast<double>(present) / static_cast<double>(total) : 0.0;
    if (pairs > 0) q.consistency = 1.0 / (1.0 + (diff_sum / static_cast<double>(pairs)) / delta_ref);
    return q;
}

/// Index of the last observed column at or before global step t; -1 if none.
long last_column_at(const std::vector<std::size_t>& idx, std::size_t t) {
    long last = -1;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] <= t) last = static_cast<long>(k);
        else break;
    }
    return last;
}

} // namespace

StreamScores stream_scores(const StreamSet& s, std::size_t t, const FusionConfig& cfg) {
    if (t >= s.steps()) throw ConfigError("stream_scores step out of range");
    const auto w = static_cast<std::size_t>(std::max(1, cfg.window));
    StreamScores out;

    // Dense IoT: trailing window in global step space.
    {
        const std::size_t c_end = t + 1;
        const std::size_t c_begin = c_end >= w ? c_end - w : 0;
        const auto q = window_quality(s.iot, c_begin, c_end, cfg.delta_ref);
        out.iot = 0.8 * q.availability + 0.2 * q.consistency;
    }
    // Sparse streams: trailing window in observed-column space, freshness gate.
    auto sparse_score = [&](const std::vector<std::vector<double>>& m,
                            const std::vector<std::size_t>& idx, double tau_fresh) {
        const long last = last_column_at(idx, t);
        if (last < 0) return 0.0;
        const auto c_end = static_cast<std::size_t>(last) + 1;
        const std::size_t c_begin = c_end >= w ? c_end - w : 0;
        const auto q = window_quality(m, c_begin, c_end, cfg.delta_ref);
        const double age = static_cast<double>(t - idx[static_cast<std::size_t>(last)]);
        const double fresh = std::exp(-age / tau_fresh);
        return (0.8 * q.availability + 0.2 * q.consistency) * fresh;
    };
    out.uav = sparse_score(s.uav, s.uav_idx, cfg.tau_u);
    out.sat = sparse_score(s.sat, s.sat_idx, cfg.tau_s);
    return out;
}

std::array<double, 3> tempered_softmax(const std::array<double, 3>& scores, double tau) {
    const double m = std::max({scores[0], scores[1], scores[2]});
    std::array<double, 3> w{};
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        w[i] = std::exp((scores[i] - m) / tau);
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

FusionState fuse_weights(const StreamSet& streams, const FusionConfig& cfg) {
    if (streams.steps() == 0) throw ConfigError("fuse_weights requires at least one step");
    FusionState st;
    st.history.reserve(streams.steps());
    for (std::size_t t = 0; t < streams.steps(); ++t) {
        const auto scores = stream_scores(streams, t, cfg);
        const auto w = tempered_softmax(scores.as_array(), cfg.tau);
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) {
            st.w_ema[i] = cfg.beta * st.w_ema[i] + (1.0 - cfg.beta) * w[i];
            sum += st.w_ema[i];
        }
        for (auto& v : st.w_ema) v /= sum;
        st.history.push_back(st.w_ema);
    }
    return st;
}

RlWeights rl_weight_update(RlWeights state, const std::vector<double>& rewards,
                           const std::vector<double>& qualities) {
    const auto n = state.w.size();
    if (rewards.size() != n || qualities.size() != n)
        throw ConfigError("rl_weight_update length mismatch");
    double rbar = 0.0, xbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rbar += rewards[i];
        xbar += qualities[i];
    }
    rbar /= static_cast<double>(n);
    xbar /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        state.w[i] += state.alpha * (rewards[i] - rbar) * (qualities[i] - xbar);
    return state;
}

void kalman_assimilate(KalmanModel& m, const Eigen::VectorXd& u,
                       const std::optional<Eigen::VectorXd>& y, double dt_h) {
    const auto n = m.x.size();
    const Eigen::MatrixXd ad = Eigen::MatrixXd::Identity(n, n) + m.a * dt_h;
    const Eigen::MatrixXd bd = m.b * dt_h;
    m.x = ad * m.x + bd * u;
    m.p = ad * m.p * ad.transpose() + m.q_proc;
    if (!y) return;

    const Eigen::MatrixXd s = m.c * m.p * m.c.transpose() + m.r_meas;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
    if (!lu.isInvertible()) throw NumericError("singular innovation covariance");
    const Eigen::MatrixXd k = m.p * m.c.transpose() * lu.inverse();
    m.x = m.x + k * (*y - m.c * m.x);
    m.p = (Eigen::MatrixXd::Identity(n, n) - k * m.c) * m.p;
}

KalmanModel make_rc2_kalman(const Rc2Params& p, double q_proc_diag, double r_meas_diag) {
    KalmanModel m;
    m.a.resize(2, 2);
    m.a << -(1.0 / p.r_wo + 1.0 / p.r_wz) / p.c_w, (1.0 / p.r_wz) / p.c_w,
        (1.0 / p.r_wz) / p.c_z, -(1.0 / p.r_wz) / p.c_z;
    m.b.resize(2, 2);
    m.b << (1.0 / p.r_wo) / p.c_w, 0.0, 0.0, 1.0 / p.c_z;
    m.c.resize(1, 2);
    m.c << 0.0, 1.0;
    m.q_proc = Eigen::MatrixXd::Identity(2, 2) * q_proc_diag;
    m.r_meas = Eigen::MatrixXd::Identity(1, 1) * r_meas_diag;
    m.x = Eigen::VectorXd::Constant(2, p.setpoint);
    m.p = Eigen::MatrixXd::Identity(2, 2);
    return m;
}

std::optional<double> fused_observation(const StreamSet& s, std::size_t node, std::size_t t,
                                        const std::array<double, 3>& weights) {
    double wsum = 0.0, acc = 0.0;
    if (!is_missing(s.iot[node][t])) {
        acc += weights[0] * s.iot[node][t];
        wsum += weights[0];
    }
    const long ku = last_column_at(s.uav_idx, t);
    if (ku >= 0 && !is_missing(s.uav[node][static_cast<std::size_t>(ku)])) {
        acc += weights[1] * s.uav[node][static_cast<std::size_t>(ku)];
        wsum += weights[1];
    }
    const long ks = last_column_at(s.sat_idx, t);
    if (ks >= 0 && !is_missing(s.sat[node][static_cast<std::size_t>(ks)])) {
        acc += weights[2] * s.sat[node][static_cast<std::size_t>(ks)];
        wsum += weights[2];
    }
    if (wsum <= 0.0) return std::nullopt;
    return acc / wsum;
}

std::string fusion_history_to_csv(const FusionState& st) {
    std::ostringstream out;
    out << "t_index,w_iot,w_uav,w_sat\n";
    for (std::size_t t = 0; t < st.history.size(); ++t) {
        const auto& w = st.history[t];
        out << t << ',' << format_num(w[0]) << ',' << format_num(w[1]) << ','
            << format_num(w[2]) << '\n';
    }
    return out.str();
}

} // namespace dtwin
