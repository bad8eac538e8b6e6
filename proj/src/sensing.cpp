#include "dtwin/sensing.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dtwin {

bool is_missing(double v) { return std::isnan(v); }
double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

namespace {

std::vector<std::size_t> sample_indices(std::size_t steps, double dt_h, double period_min) {
    const auto stride = static_cast<std::size_t>(std::llround(period_min / 60.0 / dt_h));
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < steps; t += std::max<std::size_t>(1, stride)) idx.push_back(t);
    return idx;
}

/// Indices of the k nearest nodes to `self` (including self), id tie-break.
std::vector<std::size_t> nearest_nodes(const District& d, std::size_t self, int k) {
    std::vector<std::size_t> order(d.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto& a = d.nodes[self];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const auto& ni = d.nodes[i];
        const auto& nj = d.nodes[j];
        const double di = (ni.x - a.x) * (ni.x - a.x) + (ni.y - a.y) * (ni.y - a.y);
        const double dj = (nj.x - a.x) * (nj.x - a.x) + (nj.y - a.y) * (nj.y - a.y);
        if (di != dj) return di < dj;
        return ni.id < nj.id;
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(1, k))));
    return order;
}

} // namespace

StreamSet synthesize_streams(const std::vector<std::vector<double>>& truth,
                             const District& district, const HazardTimeline& timeline,
                             const SensingConfig& cfg, std::uint64_t seed) {
    const auto steps = timeline.steps();
    const auto n = district.nodes.size();
    if (truth.size() != steps || (steps > 0 && truth.front().size() != n))
        throw ConfigError("truth matrix shape does not match district/timeline");

    StreamSet s;
    s.iot_sigma = cfg.iot_sigma_c;
    s.uav_sigma = cfg.uav_sigma_c;
    s.sat_sigma = cfg.sat_sigma_c;
    s.uav_idx = sample_indices(steps, timeline.dt_h, cfg.uav_period_min);
    s.sat_idx = sample_indices(steps, timeline.dt_h, cfg.sat_period_min);

    s.iot.assign(n, std::vector<double>(steps, missing_value()));
    s.uav.assign(n, std::vector<double>(s.uav_idx.size(), 0.0));
    s.sat.assign(n, std::vector<double>(s.sat_idx.size(), 0.0));

    for (std::size_t j = 0; j < n; ++j) {
        Rng iot_rng(mix_seed(seed, 0xA000 + j));
        if (district.nodes[j].has_sensor) {
            for (std::size_t t = 0; t < steps; ++t) {
                const double noise = iot_rng.normal(0.0, cfg.iot_sigma_c);
                if (timeline.outage[t] == 0) s.iot[j][t] = truth[t][j] + noise;
            }
        }
        Rng uav_rng(mix_seed(seed, 0xB000 + j));
        for (std::size_t k = 0; k < s.uav_idx.size(); ++k)
            s.uav[j][k] = truth[s.uav_idx[k]][j] + uav_rng.normal(0.0, cfg.uav_sigma_c);

        Rng sat_rng(mix_seed(seed, 0xC000 + j));
        const auto box = nearest_nodes(district, j, cfg.sat_smooth_k);
        for (std::size_t k = 0; k < s.sat_idx.size(); ++k) {
            double mean = 0.0;
            for (auto b : box) mean += truth[s.sat_idx[k]][b];
            mean /= static_cast<double>(box.size());
            s.sat[j][k] = mean + sat_rng.normal(0.0, cfg.sat_sigma_c);
        }
    }
    return s;
}

std::string stream_matrix_to_csv(const std::vector<std::vector<double>>& m) {
    std::ostringstream out;
    out << "id";
    if (!m.empty())
        for (std::size_t t = 0; t < m.front().size(); ++t) out << ",c" << t;
    out << '\n';
    for (std::size_t j = 0; j < m.size(); ++j) {
        out << j;
        for (const double v : m[j]) {
            out << ',';
            if (!is_missing(v)) out << format_num(v);
        }
        out << '\n';
    }
    return out.str();
}

std::vector<std::vector<double>> stream_matrix_from_csv(const std::string& text) {
    const auto table = parse_csv(text);
    std::vector<std::vector<double>> m;
    m.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        std::vector<double> vals;
        vals.reserve(row.size() - 1);
        for (std::size_t j = 1; j < row.size(); ++j) {
            const auto v = parse_opt(row[j]);
            vals.push_back(v ? *v : missing_value());
        }
        m.push_back(std::move(vals));
    }
    return m;
}

std::string stream_idx_to_csv(const std::vector<std::size_t>& idx) {
    std::ostringstream out;
    out << "t_index\n";
    for (auto i : idx) out << i << '\n';
    return out.str();
}

std::vector<std::size_t> stream_idx_from_csv(const std::string& text) {
    const auto table = parse_csv(text);
    std::vector<std::size_t> idx;
    for (const auto& row : table.rows)
        idx.push_back(static_cast<std::size_t>(parse_double(row[0])));
    return idx;
}

} // namespace dtwin
