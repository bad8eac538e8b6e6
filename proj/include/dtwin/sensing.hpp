#pragma once

#include "dtwin/district.hpp"
#include "dtwin/scenario.hpp"

#include <cstdint>
#include <vector>

namespace dtwin {

/// Missing observations are NaN in memory, empty cells on disk.
bool is_missing(double v);
double missing_value();

/// Virtual observation streams. Matrices are node-major: m[node][column].
/// IoT has one column per timeline step; UAV/SAT columns map to global step
/// indices through uav_idx / sat_idx (strictly increasing).
struct StreamSet {
    std::vector<std::vector<double>> iot;
    std::vector<std::vector<double>> uav;
    std::vector<std::size_t> uav_idx;
    std::vector<std::vector<double>> sat;
    std::vector<std::size_t> sat_idx;
    double iot_sigma = 0.4, uav_sigma = 0.8, sat_sigma = 1.2;

    std::size_t nodes() const { return iot.size(); }
    std::size_t steps() const { return iot.empty() ? 0 : iot.front().size(); }
};

struct SensingConfig {
    double iot_sigma_c = 0.4;
    double uav_sigma_c = 0.8;
    double sat_sigma_c = 1.2;
    double uav_period_min = 60.0;
    double sat_period_min = 360.0;
    int sat_smooth_k = 5;   // neighbors in the SAT box average; 1 disables
};

/// Synthesize IoT/UAV/SAT streams from the truth matrix (time-major,
/// truth[t][n]). IoT reports only at sensor nodes outside outages; UAV and
/// SAT observe every node on their sampling grids; SAT values are spatially
/// averaged over each node's nearest neighbors before noising.
StreamSet synthesize_streams(const std::vector<std::vector<double>>& truth,
                             const District& district, const HazardTimeline& timeline,
                             const SensingConfig& config, std::uint64_t seed);

std::string stream_matrix_to_csv(const std::vector<std::vector<double>>& m);
std::vector<std::vector<double>> stream_matrix_from_csv(const std::string& text);
std::string stream_idx_to_csv(const std::vector<std::size_t>& idx);
std::vector<std::size_t> stream_idx_from_csv(const std::string& text);

} // namespace dtwin
