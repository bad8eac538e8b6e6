#pragma once

#include "dtwin/config.hpp"

#include <filesystem>
#include <string>

namespace dtwin {

enum class Stage { Generate, Simulate, Sense, Fuse, Calibrate, Graph, Equity, Intervene };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct PipelineOptions {
    bool resimulate_oh = false;
};

/// Run one stage against the artifact directory. Inputs are read from disk
/// (MissingArtifactError when absent), outputs written atomically, and the
/// manifest entry for the stage refreshed.
void run_stage(Stage stage, const PipelineConfig& cfg, const PipelineOptions& opts = {});

/// All stages in order plus summary.json and the plot-ready CSV bundle.
/// Calibration is governed by cfg.run_calibration.
void run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts = {});

// Artifact file names within the output directory.
namespace artifacts {
inline constexpr const char* kNodes = "nodes.csv";
inline constexpr const char* kTime = "time.csv";
inline constexpr const char* kTruth = "truth.csv";
inline constexpr const char* kIot = "iot.csv";
inline constexpr const char* kUav = "uav.csv";
inline constexpr const char* kUavIdx = "uav_idx.csv";
inline constexpr const char* kSat = "sat.csv";
inline constexpr const char* kSatIdx = "sat_idx.csv";
inline constexpr const char* kFusionSeries = "fusion_weights_series.csv";
inline constexpr const char* kFusionJson = "fusion_weights.json";
inline constexpr const char* kCalibParams = "calib_params.json";
inline constexpr const char* kMetricsJson = "metrics.json";
inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kGraphReport = "graph_report.json";
inline constexpr const char* kEdges = "edges.csv";
inline constexpr const char* kEquityPerNode = "equity_per_node.csv";
inline constexpr const char* kEquitySummary = "equity_summary.json";
inline constexpr const char* kInterventionTable = "intervention_table.csv";
inline constexpr const char* kInterventionReport = "intervention_report.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kSummary = "summary.json";
} // namespace artifacts

} // namespace dtwin
