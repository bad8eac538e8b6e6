#pragma once

#include "dtwin/affiliation.hpp"
#include "dtwin/calibration.hpp"
#include "dtwin/district.hpp"
#include "dtwin/equity.hpp"
#include "dtwin/fusion.hpp"
#include "dtwin/scenario.hpp"
#include "dtwin/sensing.hpp"
#include "dtwin/thermal.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace dtwin {

struct PipelineConfig {
    std::uint64_t seed = 3;
    std::string out_dir = "out";
    DistrictConfig district;
    ScenarioConfig scenario;
    ThermalConfig thermal = default_thermal_config();
    double qmax_margin = 1.3;        // HVAC sizing margin over the design load
    double design_peak_c = 40.0;
    SensingConfig sensing;
    FusionConfig fusion;
    CalibConfig calib;
    GrlConfig graph;
    EquityConfig equity;
    double oh_threshold_c = 30.0;    // overheating-hours threshold
    bool run_calibration = true;
    bool emit_svg = false;
};

/// Re-derive the per-type HVAC capacity from the sizing rule after parameter
/// overrides.
void finalize_thermal(PipelineConfig& cfg);

/// Parse `key = value` lines ('#' comments); unknown keys are rejected.
/// Values apply on top of the defaults.
PipelineConfig parse_config_text(const std::string& text);

PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical serialization: every key with its current value, grouped by
/// module. parse_config_text(config_to_text(c)) reproduces c.
std::string config_to_text(const PipelineConfig& cfg);

/// FNV hash of the canonical serialization.
std::string config_hash(const PipelineConfig& cfg);

} // namespace dtwin
