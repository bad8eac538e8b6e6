#pragma once

#include "dtwin/district.hpp"
#include "dtwin/equity.hpp"
#include "dtwin/scenario.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dtwin {

struct Intervention {
    std::string id;
    std::string name;
    std::vector<int> mask;         // node ids the intervention applies to
    double exposure_scale = 1.0;   // s in (0,1]
    double d_v = 0.0;              // additive rank delta, <= 0 improves
    double d_e = 0.0;
    double staff_hours_per_day = 0.0;
    double cost_kusd = 0.0;
};

struct InterventionOutcome {
    std::string id;
    std::string name;
    double d_rpop_pct = 0.0;   // negative = improvement
    double d_r95_pct = 0.0;
    double d_oh_pct = 0.0;
    double staff_hours_per_day = 0.0;
    double cost_kusd = 0.0;
    std::optional<double> eff_cost;    // d_rpop / cost, when cost > 0
    std::optional<double> eff_staff;   // d_rpop / staff, when staff > 0
    bool empty_mask_warning = false;
    bool on_staff_front = false;
    bool on_cost_front = false;
};

/// Apply one intervention to the masked nodes: scale exposure, shift the rank
/// deltas, clip to [0,1], recompute r_node. Empty mask is an identity with a
/// warning flag surfaced by eval_metrics.
std::vector<NodeRisk> apply_intervention(const std::vector<NodeRisk>& risks,
                                         const Intervention& iv, const EquityConfig& config);

/// Linear-interpolation percentile (q in [0,100]) between order statistics.
double percentile_linear(std::vector<double> values, double q);

/// Optional hook: pooled indoor overheating hours with the intervention in
/// effect (re-simulation mode); baseline hours come through `baseline_oh`.
struct OhResimulation {
    double baseline_oh = 0.0;
    std::function<double(const Intervention&)> resimulate;
};

InterventionOutcome eval_metrics(const std::vector<NodeRisk>& baseline,
                                 const std::vector<NodeRisk>& post, const District& district,
                                 const HazardTimeline& timeline, const Intervention& iv,
                                 double oh_threshold_c = 30.0,
                                 const OhResimulation* resim = nullptr);

/// The five standard scenarios: preemptive cooling center, reactive opening,
/// clinic-first microgrid, vulnerable-block microgrid, targeted outreach.
std::vector<Intervention> standard_interventions(const std::vector<NodeRisk>& risks,
                                                 const District& district);

/// Non-dominated subset minimizing (resource, improvement); ties kept.
/// Returns indices into `points`.
std::vector<std::size_t> pareto_front(const std::vector<std::pair<double, double>>& points);

/// Marks on_staff_front / on_cost_front across a set of outcomes.
void mark_fronts(std::vector<InterventionOutcome>& outcomes);

std::string outcomes_to_csv(const std::vector<InterventionOutcome>& outcomes);

} // namespace dtwin
