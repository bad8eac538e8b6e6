#pragma once

#include "dtwin/district.hpp"
#include "dtwin/scenario.hpp"

#include <array>
#include <vector>

namespace dtwin {

struct GraphEdge {
    int u = 0, v = 0;      // node ids, u < v
    double d = 0.0;        // Euclidean distance
    double w0 = 0.0;       // initial weight exp(-d/sigma)
    double w = 0.0;        // current weight, clipped to [1e-2, 10]
};

struct AffiliationGraph {
    std::vector<NodeRecord> nodes;   // copied district nodes (id-indexed order)
    std::vector<GraphEdge> edges;
    double sigma = 0.0;
};

struct GrlConfig {
    int k = 8;                 // neighbors per node, <= 8
    double eta = 0.01;         // reinforcement step
    double gamma = 0.995;      // decay
    double sigma = 0.0;        // distance scale; <= 0 derives mean-NN distance
    int m_per_community = 2;   // criticals per community
    int top_k = 10;            // global criticals
    double eps = 1e-6;
    double heat_threshold_c = 30.0;
    double heat_scale_c = 10.0;
    // Type priors, order MF/SF/COM/SCH/GRO/CLI.
    std::array<double, kNumBuildingTypes> priors{0.5, 0.3, 0.4, 0.8, 0.6, 1.0};
};

inline constexpr double kEdgeWeightMin = 1e-2;
inline constexpr double kEdgeWeightMax = 10.0;

/// Union of each node's k nearest neighbors (Euclidean, id tie-break),
/// deduplicated undirected, weights initialized to exp(-d/sigma).
AffiliationGraph build_knn_graph(const District& district, const GrlConfig& config);

bool graph_connected(const AffiliationGraph& g);

/// Stress proxy in [0,1] at one timeline step: half outage, half normalized
/// heat excess.
double stress_proxy(const HazardTimeline& tl, std::size_t step, const GrlConfig& config);

/// Reinforcement sweep over the timeline: prior-driven node scores are
/// mean-centered, each edge moves by eta*(u_score + v_score) under decay
/// gamma, clipped to the weight box.
AffiliationGraph grl_update(AffiliationGraph graph, const HazardTimeline& timeline,
                            const GrlConfig& config);

struct NodeCentrality {
    int id = 0;
    double betweenness = 0.0;  // raw values
    double closeness = 0.0;
    double eigenvector = 0.0;
    double b_rank = 0.0;       // rank-normalized
    double c_rank = 0.0;
    double e_rank = 0.0;
    double crit_score = 0.0;
    int community = 0;
};

struct CriticalReport {
    std::vector<NodeCentrality> nodes;
    std::vector<std::vector<int>> community_top;  // per community, top-M ids
    std::vector<int> global_top;                  // top-K ids
    std::vector<double> edge_gain;                // (w - w0)/(w0 + eps), edge order
};

/// Exact cost-weighted betweenness (Brandes over costs 1/(w+eps)), returned
/// per node id. Pair (s,t) counted once.
std::vector<double> betweenness_centrality(const AffiliationGraph& g, double eps);

std::vector<double> closeness_centrality(const AffiliationGraph& g, double eps);

/// Power iteration on the weight matrix, per connected component, tol 1e-9.
std::vector<double> eigenvector_centrality(const AffiliationGraph& g, int max_iter = 10000);

/// Greedy agglomerative modularity maximization on edge weights; returns a
/// community id per node (0-based, relabeled by smallest member id).
std::vector<int> greedy_modularity_communities(const AffiliationGraph& g);

CriticalReport centrality_and_criticals(const AffiliationGraph& g, const GrlConfig& config);

std::string edges_to_csv(const AffiliationGraph& g, double eps);

} // namespace dtwin
