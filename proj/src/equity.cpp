#include "dtwin/equity.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dtwin {

std::vector<double> percentile_rank(const std::vector<double>& values) {
    const auto n = values.size();
    if (n == 0) throw ConfigError("percentile_rank on empty series");
    if (n == 1) return {0.5};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> out(n, 0.5);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Average rank over the tie group, mapped linearly to [0,1]; a fully
        // constant series lands on 0.5 everywhere.
        const double avg_rank = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k)
            out[order[k]] = avg_rank / static_cast<double>(n - 1);
        i = j + 1;
    }
    return out;
}

std::vector<double> knn_smooth(const std::vector<std::array<double, 2>>& xy,
                               const std::vector<double>& values, int k) {
    const auto n = xy.size();
    if (values.size() != n) throw ConfigError("knn_smooth shape mismatch");
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw ConfigError("knn_smooth K out of range");

    std::vector<double> out(n, 0.0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double da = (xy[a][0] - xy[i][0]) * (xy[a][0] - xy[i][0]) +
                              (xy[a][1] - xy[i][1]) * (xy[a][1] - xy[i][1]);
            const double db = (xy[b][0] - xy[i][0]) * (xy[b][0] - xy[i][0]) +
                              (xy[b][1] - xy[i][1]) * (xy[b][1] - xy[i][1]);
            if (da != db) return da < db;
            return a < b;
        });
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += values[order[static_cast<std::size_t>(j)]];
        out[i] = acc / static_cast<double>(k);
    }
    return out;
}

double exposure_sys(const HazardTimeline& tl, const EquityConfig& cfg) {
    if (tl.steps() == 0) throw ConfigError("exposure_sys on empty timeline");
    double heat_norm = 0.0;
    if (tl.steps() >= 12) {
        double excess = 0.0;
        for (const double t : tl.t_out) excess += std::max(t - cfg.heat_threshold_c, 0.0);
        excess /= static_cast<double>(tl.steps());
        heat_norm = std::min(excess / cfg.heat_scale_c, 1.0);
    }
    double outage_frac = 0.0;
    for (const int o : tl.outage) outage_frac += (o > 0) ? 1.0 : 0.0;
    outage_frac /= static_cast<double>(tl.steps());
    return std::max(0.5 * outage_frac + 0.5 * heat_norm, cfg.eps_exp);
}

std::vector<NodeRisk> node_risks(const District& district, const HazardTimeline& timeline,
                                 const EquityConfig& cfg) {
    if (district.nodes.empty()) throw ConfigError("node_risks on empty district");
    const auto n = district.nodes.size();
    std::vector<double> vuln(n), burden(n);
    std::vector<std::array<double, 2>> xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        vuln[i] = district.nodes[i].vuln;
        burden[i] = district.nodes[i].energy_burden;
        xy[i] = {district.nodes[i].x, district.nodes[i].y};
    }

    auto v = percentile_rank(vuln);
    auto e = percentile_rank(burden);
    if (cfg.smooth_k > 1 && static_cast<std::size_t>(cfg.smooth_k) <= n) {
        v = percentile_rank(knn_smooth(xy, v, cfg.smooth_k));
        e = percentile_rank(knn_smooth(xy, e, cfg.smooth_k));
    }

    const double exposure = exposure_sys(timeline, cfg);
    std::vector<double> composite(n);
    for (std::size_t i = 0; i < n; ++i)
        composite[i] = cfg.beta_phys * v[i] + cfg.beta_sens * e[i];
    double lo = composite[0], hi = composite[0];
    for (const double c : composite) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    if (hi - lo < 1e-9) composite = percentile_rank(composite);

    std::vector<NodeRisk> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = district.nodes[i].id;
        out[i].exposure = exposure;
        out[i].v = v[i];
        out[i].e = e[i];
        out[i].r_node = exposure * composite[i];
    }
    return out;
}

EquityIndex community_index(const std::vector<NodeRisk>& risks, const District& district,
                            const EquityConfig& cfg) {
    if (risks.size() != district.nodes.size() || risks.empty())
        throw ConfigError("community_index shape mismatch");
    EquityIndex idx;
    idx.gamma = cfg.gamma;
    idx.beta_phys = cfg.beta_phys;
    idx.beta_sens = cfg.beta_sens;

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < risks.size(); ++i) {
        const double pop = district.nodes[i].pop;
        if (pop <= 0.0) throw ConfigError("populations must be positive");
        num += pop * risks[i].v * (1.0 + cfg.gamma * risks[i].e);
        den += pop;
    }
    idx.r_eq = num / den;

    // Deciles by r_node rank, D1 lowest risk .. D10 highest.
    const auto n = risks.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (risks[a].r_node != risks[b].r_node) return risks[a].r_node < risks[b].r_node;
        return risks[a].id < risks[b].id;
    });
    for (int d = 0; d < 10; ++d) {
        const auto lo = static_cast<std::size_t>(d) * n / 10;
        const auto hi = static_cast<std::size_t>(d + 1) * n / 10;
        double sum = 0.0, wsum = 0.0, pop = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
            const auto i = order[k];
            sum += risks[i].r_node;
            wsum += district.nodes[i].pop * risks[i].r_node;
            pop += district.nodes[i].pop;
        }
        const auto count = static_cast<double>(hi - lo);
        idx.deciles[static_cast<std::size_t>(d)].mean = count > 0 ? sum / count : 0.0;
        idx.deciles[static_cast<std::size_t>(d)].weighted_mean = pop > 0 ? wsum / pop : 0.0;
        idx.deciles[static_cast<std::size_t>(d)].pop = pop;
    }
    return idx;
}

std::string risks_to_csv(const std::vector<NodeRisk>& risks) {
    std::ostringstream out;
    out << "id,exposure,V,E,r_node\n";
    for (const auto& r : risks) {
        out << r.id << ',' << format_num(r.exposure) << ',' << format_num(r.v) << ','
            << format_num(r.e) << ',' << format_num(r.r_node) << '\n';
    }
    return out.str();
}

std::vector<NodeRisk> risks_from_csv(const std::string& text) {
    const auto t = parse_csv(text);
    const auto c_id = t.col("id"), c_x = t.col("exposure"), c_v = t.col("V"), c_e = t.col("E"),
               c_r = t.col("r_node");
    std::vector<NodeRisk> out;
    for (const auto& row : t.rows) {
        NodeRisk r;
        r.id = static_cast<int>(parse_double(row[c_id]));
        r.exposure = parse_double(row[c_x]);
        r.v = parse_double(row[c_v]);
        r.e = parse_double(row[c_e]);
        r.r_node = parse_double(row[c_r]);
        out.push_back(r);
    }
    return out;
}

} // namespace dtwin
