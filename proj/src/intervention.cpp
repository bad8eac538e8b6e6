#include "dtwin/intervention.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dtwin {

std::vector<NodeRisk> apply_intervention(const std::vector<NodeRisk>& risks,
                                         const Intervention& iv, const EquityConfig& cfg) {
    std::unordered_set<int> masked(iv.mask.begin(), iv.mask.end());
    std::vector<NodeRisk> out = risks;
    for (auto& r : out) {
        if (!masked.count(r.id)) continue;
        r.exposure = clip(r.exposure * iv.exposure_scale, 0.0, 1.0);
        r.v = clip(r.v + iv.d_v, 0.0, 1.0);
        r.e = clip(r.e + iv.d_e, 0.0, 1.0);
        r.r_node = r.exposure * (cfg.beta_phys * r.v + cfg.beta_sens * r.e);
    }
    return out;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw ConfigError("percentile of empty series");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

double pop_weighted_mean(const std::vector<NodeRisk>& risks, const District& d) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < risks.size(); ++i) {
        num += d.nodes[i].pop * risks[i].r_node;
        den += d.nodes[i].pop;
    }
    return den > 0.0 ? num / den : 0.0;
}

double mean_exposure(const std::vector<NodeRisk>& risks) {
    double acc = 0.0;
    for (const auto& r : risks) acc += r.exposure;
    return risks.empty() ? 0.0 : acc / static_cast<double>(risks.size());
}

} // namespace

InterventionOutcome eval_metrics(const std::vector<NodeRisk>& baseline,
                                 const std::vector<NodeRisk>& post, const District& district,
                                 const HazardTimeline& timeline, const Intervention& iv,
                                 double oh_threshold_c, const OhResimulation* resim) {
    if (baseline.size() != post.size() || baseline.size() != district.nodes.size())
        throw ConfigError("eval_metrics node sets must match");

    InterventionOutcome out;
    out.id = iv.id;
    out.name = iv.name;
    out.staff_hours_per_day = iv.staff_hours_per_day;
    out.cost_kusd = iv.cost_kusd;
    out.empty_mask_warning = iv.mask.empty();

    constexpr double kEps = 1e-12;
    const double rbar = pop_weighted_mean(baseline, district);
    const double rbar_post = pop_weighted_mean(post, district);
    out.d_rpop_pct = 100.0 * (rbar_post - rbar) / (rbar + kEps);

    std::vector<double> base_r, post_r;
    base_r.reserve(baseline.size());
    post_r.reserve(post.size());
    for (const auto& r : baseline) base_r.push_back(r.r_node);
    for (const auto& r : post) post_r.push_back(r.r_node);
    const double q95 = percentile_linear(base_r, 95.0);
    const double q95_post = percentile_linear(post_r, 95.0);
    out.d_r95_pct = 100.0 * (q95_post - q95) / (q95 + kEps);

    if (resim && resim->resimulate) {
        const double oh = resim->baseline_oh;
        const double oh_post = resim->resimulate(iv);
        out.d_oh_pct = 100.0 * (oh_post - oh) / (oh + kEps);
    } else {
        // Proxy: outdoor overheating hours scaled by the mean exposure ratio.
        double oh = 0.0;
        for (const double t : timeline.t_out)
            oh += (t > oh_threshold_c) ? timeline.dt_h : 0.0;
        const double exp_base = mean_exposure(baseline);
        const double ratio = exp_base > 0.0 ? mean_exposure(post) / exp_base : 1.0;
        const double oh_post = oh * ratio;
        out.d_oh_pct = 100.0 * (oh_post - oh) / (oh + kEps);
    }

    if (iv.cost_kusd > 0.0) out.eff_cost = out.d_rpop_pct / iv.cost_kusd;
    if (iv.staff_hours_per_day > 0.0) out.eff_staff = out.d_rpop_pct / iv.staff_hours_per_day;
    return out;
}

namespace {

std::vector<int> top_fraction_mask(const std::vector<NodeRisk>& risks, double fraction) {
    const auto n = risks.size();
    const auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-12));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (risks[a].r_node != risks[b].r_node) return risks[a].r_node > risks[b].r_node;
        return risks[a].id < risks[b].id;
    });
    std::vector<int> mask;
    for (std::size_t i = 0; i < want && i < n; ++i) mask.push_back(risks[order[i]].id);
    return mask;
}

} // namespace

std::vector<Intervention> standard_interventions(const std::vector<NodeRisk>& risks,
                                                 const District& district) {
    const auto decile = top_fraction_mask(risks, 0.10);
    const auto top15 = top_fraction_mask(risks, 0.15);
    const auto clinics = district.ids_of_type(BuildingType::Clinic);

    std::vector<Intervention> ivs(5);
    ivs[0] = {"I1", "Preemptive Cooling Center", decile, 0.70, -0.05, -0.10, 8.0, 50.0};
    ivs[1] = {"I2", "Reactive Opening", decile, 0.90, 0.0, -0.05, 3.0, 15.0};
    ivs[2] = {"I3", "Microgrid Clinic-First", clinics, 0.50, -0.05, 0.0, 0.0, 120.0};
    ivs[3] = {"I4", "Microgrid Vulnerable Block", top15, 0.65, 0.0, 0.0, 0.0, 180.0};
    ivs[4] = {"I5", "Targeted Outreach Retrofits", decile, 1.0, -0.03, -0.12, 6.0, 30.0};
    return ivs;
}

std::vector<std::size_t> pareto_front(const std::vector<std::pair<double, double>>& points) {
    if (points.empty()) throw ConfigError("pareto_front needs at least one outcome");
    const auto n = points.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].first != points[b].first) return points[a].first < points[b].first;
        return points[a].second < points[b].second;
    });

    // Single sweep over x-groups; duplicates never strictly dominate each
    // other, so equal (x,y) pairs are all kept.
    std::vector<std::size_t> front;
    double min_y_strict = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && points[order[j + 1]].first == points[order[i]].first) ++j;
        const double group_min_y = points[order[i]].second;
        for (std::size_t k = i; k <= j; ++k) {
            const double y = points[order[k]].second;
            const bool dominated = (min_y_strict <= y) || (group_min_y < y);
            if (!dominated) front.push_back(order[k]);
        }
        min_y_strict = std::min(min_y_strict, group_min_y);
        i = j + 1;
    }
    std::sort(front.begin(), front.end());
    return front;
}

void mark_fronts(std::vector<InterventionOutcome>& outcomes) {
    std::vector<std::pair<double, double>> staff, cost;
    staff.reserve(outcomes.size());
    cost.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        staff.emplace_back(o.staff_hours_per_day, o.d_rpop_pct);
        cost.emplace_back(o.cost_kusd, o.d_rpop_pct);
    }
    for (auto& o : outcomes) {
        o.on_staff_front = false;
        o.on_cost_front = false;
    }
    for (auto i : pareto_front(staff)) outcomes[i].on_staff_front = true;
    for (auto i : pareto_front(cost)) outcomes[i].on_cost_front = true;
}

std::string outcomes_to_csv(const std::vector<InterventionOutcome>& outcomes) {
    std::ostringstream out;
    out << "id,name,d_rpop_pct,d_r95_pct,d_oh_pct,staff_hours,cost_kusd,on_staff_front,on_cost_front\n";
    for (const auto& o : outcomes) {
        out << o.id << ',' << o.name << ',' << format_num(o.d_rpop_pct) << ','
            << format_num(o.d_r95_pct) << ',' << format_num(o.d_oh_pct) << ','
            << format_num(o.staff_hours_per_day) << ',' << format_num(o.cost_kusd) << ','
            << (o.on_staff_front ? 1 : 0) << ',' << (o.on_cost_front ? 1 : 0) << '\n';
    }
    return out.str();
}

} // namespace dtwin
