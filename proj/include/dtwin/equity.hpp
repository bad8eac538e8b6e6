#pragma once

#include "dtwin/district.hpp"
#include "dtwin/scenario.hpp"

#include <array>
#include <vector>

namespace dtwin {

struct EquityConfig {
    double gamma = 0.5;          // equity amplification
    double beta_phys = 0.6;
    double beta_sens = 0.4;
    double eps_exp = 0.05;       // exposure floor
    double heat_threshold_c = 30.0;
    double heat_scale_c = 10.0;  // mean excess mapped to [0,1] by /scale
    int smooth_k = 5;            // spatial KNN smoothing; 1 disables
};

/// Average-rank percentile normalization to [0,1]; constant input maps to 0.5.
std::vector<double> percentile_rank(const std::vector<double>& values);

/// Replace each value by the mean over its K nearest nodes (self included,
/// Euclidean distance, id tie-break).
std::vector<double> knn_smooth(const std::vector<std::array<double, 2>>& xy,
                               const std::vector<double>& values, int k);

/// Systemic exposure scalar: floor(0.5*outage_frac + 0.5*heat_norm). The heat
/// term needs at least 12 samples, otherwise it is zero.
double exposure_sys(const HazardTimeline& timeline, const EquityConfig& config);

struct NodeRisk {
    int id = 0;
    double exposure = 0.0;
    double v = 0.0;       // rank-normalized physical vulnerability
    double e = 0.0;       // rank-normalized socio-economic sensitivity
    double r_node = 0.0;  // exposure * (beta_phys*V + beta_sens*E)
};

std::vector<NodeRisk> node_risks(const District& district, const HazardTimeline& timeline,
                                 const EquityConfig& config);

struct DecileRow {
    double mean = 0.0;           // unweighted mean risk in the decile
    double weighted_mean = 0.0;  // population-weighted mean risk
    double pop = 0.0;
};

struct EquityIndex {
    double r_eq = 0.0;
    double gamma = 0.5;
    double beta_phys = 0.6;
    double beta_sens = 0.4;
    std::array<DecileRow, 10> deciles{};
};

/// Population-weighted community index over the ranked V/E and the D1..D10
/// decile table of node risk (D10 = most at risk).
EquityIndex community_index(const std::vector<NodeRisk>& risks, const District& district,
                            const EquityConfig& config);

std::string risks_to_csv(const std::vector<NodeRisk>& risks);
std::vector<NodeRisk> risks_from_csv(const std::string& text);

} // namespace dtwin
