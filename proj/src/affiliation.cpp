#include "dtwin/affiliation.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/equity.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

namespace dtwin {

namespace {

double node_distance(const NodeRecord& a, const NodeRecord& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Adjacency as (neighbor index, edge index) lists; node ids assumed 0..n-1.
std::vector<std::vector<std::pair<int, int>>> adjacency(const AffiliationGraph& g) {
    std::vector<std::vector<std::pair<int, int>>> adj(g.nodes.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        adj[static_cast<std::size_t>(g.edges[e].u)].emplace_back(g.edges[e].v, static_cast<int>(e));
        adj[static_cast<std::size_t>(g.edges[e].v)].emplace_back(g.edges[e].u, static_cast<int>(e));
    }
    return adj;
}

} // namespace

AffiliationGraph build_knn_graph(const District& district, const GrlConfig& cfg) {
    const auto n = district.nodes.size();
    if (n < 2) throw ConfigError("knn graph needs at least two nodes");
    if (cfg.k < 1 || static_cast<std::size_t>(cfg.k) >= n)
        throw ConfigError("knn degree k must satisfy 1 <= k < N");

    AffiliationGraph g;
    g.nodes = district.nodes;

    double sigma = cfg.sigma;
    if (sigma <= 0.0) {
        // Mean nearest-neighbor distance of the district.
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                best = std::min(best, node_distance(g.nodes[i], g.nodes[j]));
            }
            acc += best;
        }
        sigma = acc / static_cast<double>(n);
    }
    g.sigma = sigma;

    std::map<std::pair<int, int>, double> edge_set;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double da = node_distance(g.nodes[i], g.nodes[a]);
            const double db = node_distance(g.nodes[i], g.nodes[b]);
            if (da != db) return da < db;
            return g.nodes[a].id < g.nodes[b].id;
        });
        for (int k = 0; k < cfg.k; ++k) {
            const auto j = order[static_cast<std::size_t>(k)];
            const int u = std::min(g.nodes[i].id, g.nodes[j].id);
            const int v = std::max(g.nodes[i].id, g.nodes[j].id);
            edge_set[{u, v}] = node_distance(g.nodes[i], g.nodes[j]);
        }
    }
    for (const auto& [key, d] : edge_set) {
        GraphEdge e;
        e.u = key.first;
        e.v = key.second;
        e.d = d;
        e.w0 = std::exp(-d / sigma);
        e.w = e.w0;
        g.edges.push_back(e);
    }
    return g;
}

bool graph_connected(const AffiliationGraph& g) {
    if (g.nodes.empty()) return true;
    const auto adj = adjacency(g);
    std::vector<char> seen(g.nodes.size(), 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    std::size_t count = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
            (void)e;
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++count;
                q.push(v);
            }
        }
    }
    return count == g.nodes.size();
}

double stress_proxy(const HazardTimeline& tl, std::size_t step, const GrlConfig& cfg) {
    const double heat =
        std::min(std::max(tl.t_out[step] - cfg.heat_threshold_c, 0.0) / cfg.heat_scale_c, 1.0);
    return 0.5 * (tl.outage[step] != 0 ? 1.0 : 0.0) + 0.5 * heat;
}

AffiliationGraph grl_update(AffiliationGraph graph, const HazardTimeline& timeline,
                            const GrlConfig& cfg) {
    if (timeline.steps() == 0) throw ConfigError("grl_update requires a non-empty timeline");
    const auto n = graph.nodes.size();
    std::vector<double> prior(n);
    for (std::size_t i = 0; i < n; ++i)
        prior[i] = cfg.priors[static_cast<std::size_t>(graph.nodes[i].btype)];

    std::vector<double> score(n);
    for (std::size_t t = 0; t < timeline.steps(); ++t) {
        const double s = stress_proxy(timeline, t, cfg);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            score[i] = prior[i] * (1.0 + s);
            mean += score[i];
        }
        mean /= static_cast<double>(n);
        for (auto& v : score) v -= mean;
        for (auto& e : graph.edges) {
            const double g_t = score[static_cast<std::size_t>(e.u)] +
                               score[static_cast<std::size_t>(e.v)];
            e.w = clip(cfg.gamma * e.w + cfg.eta * g_t, kEdgeWeightMin, kEdgeWeightMax);
        }
    }
    return graph;
}

std::vector<double> betweenness_centrality(const AffiliationGraph& g, double eps) {
    const auto n = g.nodes.size();
    const auto adj = adjacency(g);
    std::vector<double> bc(n, 0.0);

    // Brandes with Dijkstra on traversal costs 1/(w+eps).
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        std::vector<double> sigma(n, 0.0);
        std::vector<std::vector<int>> pred(n);
        std::vector<int> stack_order;
        using QE = std::pair<double, int>;
        std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
        dist[s] = 0.0;
        sigma[s] = 1.0;
        pq.emplace(0.0, static_cast<int>(s));
        std::vector<char> done(n, 0);
        while (!pq.empty()) {
            const auto [du, u] = pq.top();
            pq.pop();
            if (done[static_cast<std::size_t>(u)]) continue;
            done[static_cast<std::size_t>(u)] = 1;
            stack_order.push_back(u);
            for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
                const double cost = 1.0 / (g.edges[static_cast<std::size_t>(e)].w + eps);
                const double nd = du + cost;
                auto& dv = dist[static_cast<std::size_t>(v)];
                if (nd < dv - 1e-15) {
                    dv = nd;
                    sigma[static_cast<std::size_t>(v)] = sigma[static_cast<std::size_t>(u)];
                    pred[static_cast<std::size_t>(v)] = {u};
                    pq.emplace(nd, v);
                } else if (std::abs(nd - dv) <= 1e-15) {
                    sigma[static_cast<std::size_t>(v)] += sigma[static_cast<std::size_t>(u)];
                    pred[static_cast<std::size_t>(v)].push_back(u);
                }
            }
        }
        std::vector<double> delta(n, 0.0);
        for (auto it = stack_order.rbegin(); it != stack_order.rend(); ++it) {
            const int w = *it;
            for (const int p : pred[static_cast<std::size_t>(w)]) {
                delta[static_cast<std::size_t>(p)] +=
                    sigma[static_cast<std::size_t>(p)] / sigma[static_cast<std::size_t>(w)] *
                    (1.0 + delta[static_cast<std::size_t>(w)]);
            }
            if (static_cast<std::size_t>(w) != s)
                bc[static_cast<std::size_t>(w)] += delta[static_cast<std::size_t>(w)];
        }
    }
    // Each unordered pair was accumulated from both endpoints.
    for (auto& v : bc) v *= 0.5;
    return bc;
}

std::vector<double> closeness_centrality(const AffiliationGraph& g, double eps) {
    const auto n = g.nodes.size();
    const auto adj = adjacency(g);
    std::vector<double> cc(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        using QE = std::pair<double, int>;
        std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
        dist[s] = 0.0;
        pq.emplace(0.0, static_cast<int>(s));
        while (!pq.empty()) {
            const auto [du, u] = pq.top();
            pq.pop();
            if (du > dist[static_cast<std::size_t>(u)]) continue;
            for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
                const double cost = 1.0 / (g.edges[static_cast<std::size_t>(e)].w + eps);
                if (du + cost < dist[static_cast<std::size_t>(v)]) {
                    dist[static_cast<std::size_t>(v)] = du + cost;
                    pq.emplace(du + cost, v);
                }
            }
        }
        double sum = 0.0;
        std::size_t reach = 0;
        for (std::size_t v = 0; v < n; ++v) {
            if (v != s && std::isfinite(dist[v])) {
                sum += dist[v];
                ++reach;
            }
        }
        if (reach > 0 && sum > 0.0) {
            // Wasserman-Faust correction keeps per-component values comparable.
            const double r = static_cast<double>(reach);
            cc[s] = (r / sum) * (r / static_cast<double>(n - 1));
        }
    }
    return cc;
}

namespace {

std::vector<int> connected_components(const AffiliationGraph& g) {
    const auto n = g.nodes.size();
    const auto adj = adjacency(g);
    std::vector<int> comp(n, -1);
    int c = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        std::queue<int> q;
        q.push(static_cast<int>(s));
        comp[s] = c;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
                (void)e;
                if (comp[static_cast<std::size_t>(v)] < 0) {
                    comp[static_cast<std::size_t>(v)] = c;
                    q.push(v);
                }
            }
        }
        ++c;
    }
    return comp;
}

} // namespace

std::vector<double> eigenvector_centrality(const AffiliationGraph& g, int max_iter) {
    const auto n = g.nodes.size();
    const auto adj = adjacency(g);
    const auto comp = connected_components(g);
    const int ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;

    std::vector<double> out(n, 0.0);
    for (int c = 0; c < ncomp; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (comp[i] == c) members.push_back(i);
        if (members.size() == 1) {
            out[members[0]] = 1.0;
            continue;
        }
        std::vector<double> x(n, 0.0), nx(n, 0.0);
        for (auto m : members) x[m] = 1.0 / std::sqrt(static_cast<double>(members.size()));
        bool converged = false;
        for (int it = 0; it < max_iter && !converged; ++it) {
            for (auto m : members) {
                double acc = 0.0;
                for (const auto& [v, e] : adj[m])
                    acc += g.edges[static_cast<std::size_t>(e)].w * x[static_cast<std::size_t>(v)];
                nx[m] = acc;
            }
            double norm = 0.0;
            for (auto m : members) norm += nx[m] * nx[m];
            norm = std::sqrt(norm);
            if (norm <= 0.0) break;
            double diff = 0.0;
            for (auto m : members) {
                nx[m] /= norm;
                diff = std::max(diff, std::abs(nx[m] - x[m]));
                x[m] = nx[m];
            }
            converged = diff < 1e-9;
        }
        if (!converged)
            throw NumericError("eigenvector centrality power iteration did not converge");
        for (auto m : members) out[m] = std::abs(x[m]);
    }
    return out;
}

std::vector<int> greedy_modularity_communities(const AffiliationGraph& g) {
    const auto n = g.nodes.size();
    // Community bookkeeping on total edge weight m, between-community weights
    // e[c][c'] and community strength a[c].
    double m2 = 0.0;
    for (const auto& e : g.edges) m2 += e.w;
    if (m2 <= 0.0 || g.edges.empty()) {
        std::vector<int> out(n);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }

    std::vector<int> comm(n);
    std::iota(comm.begin(), comm.end(), 0);
    std::vector<char> alive(n, 1);
    std::vector<std::map<int, double>> between(n);
    std::vector<double> strength(n, 0.0);
    for (const auto& e : g.edges) {
        between[static_cast<std::size_t>(e.u)][e.v] += e.w;
        between[static_cast<std::size_t>(e.v)][e.u] += e.w;
        strength[static_cast<std::size_t>(e.u)] += e.w;
        strength[static_cast<std::size_t>(e.v)] += e.w;
    }

    while (true) {
        double best_gain = 1e-12;
        int best_a = -1, best_b = -1;
        for (std::size_t a = 0; a < n; ++a) {
            if (!alive[a]) continue;
            for (const auto& [b, w] : between[a]) {
                if (b <= static_cast<int>(a) || !alive[static_cast<std::size_t>(b)]) continue;
                // Modularity delta for merging: e_ab/m - 2*a_a*a_b.
                const double dq = w / m2 -
                                  2.0 * (strength[a] / (2.0 * m2)) *
                                      (strength[static_cast<std::size_t>(b)] / (2.0 * m2));
                if (dq > best_gain) {
                    best_gain = dq;
                    best_a = static_cast<int>(a);
                    best_b = b;
                }
            }
        }
        if (best_a < 0) break;
        // Merge best_b into best_a (smallest id wins as representative).
        const auto a = static_cast<std::size_t>(best_a);
        const auto b = static_cast<std::size_t>(best_b);
        for (const auto& [c, w] : between[b]) {
            if (c == best_a) continue;
            between[a][c] += w;
            between[static_cast<std::size_t>(c)][best_a] += w;
            between[static_cast<std::size_t>(c)].erase(best_b);
        }
        between[a].erase(best_b);
        strength[a] += strength[b];
        alive[b] = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (comm[i] == best_b) comm[i] = best_a;
    }

    // Relabel 0..C-1 ordered by smallest member id.
    std::map<int, int> relabel;
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = relabel.find(comm[i]);
        if (it == relabel.end())
            it = relabel.emplace(comm[i], static_cast<int>(relabel.size())).first;
        out[i] = it->second;
    }
    return out;
}

CriticalReport centrality_and_criticals(const AffiliationGraph& g, const GrlConfig& cfg) {
    const auto n = g.nodes.size();
    CriticalReport rep;
    rep.nodes.resize(n);

    const auto b = betweenness_centrality(g, cfg.eps);
    const auto c = closeness_centrality(g, cfg.eps);
    const auto e = eigenvector_centrality(g);
    const auto comm = greedy_modularity_communities(g);

    const auto b_rank = percentile_rank(b);
    const auto c_rank = percentile_rank(c);
    const auto e_rank = percentile_rank(e);
    std::vector<double> pop(n), req(n);
    for (std::size_t i = 0; i < n; ++i) {
        pop[i] = g.nodes[i].pop;
        req[i] = g.nodes[i].req;
    }
    const auto pop_rank = percentile_rank(pop);
    const auto req_rank = percentile_rank(req);

    for (std::size_t i = 0; i < n; ++i) {
        auto& nc = rep.nodes[i];
        nc.id = g.nodes[i].id;
        nc.betweenness = b[i];
        nc.closeness = c[i];
        nc.eigenvector = e[i];
        nc.b_rank = b_rank[i];
        nc.c_rank = c_rank[i];
        nc.e_rank = e_rank[i];
        const double s_cent = 0.5 * b_rank[i] + 0.3 * c_rank[i] + 0.2 * e_rank[i];
        const double s_dem = (0.5 + 0.5 * pop_rank[i]) * (0.5 + 0.5 * req_rank[i]);
        nc.crit_score = s_cent * s_dem;
        nc.community = comm[i];
    }

    const int ncomm = n > 0 ? *std::max_element(comm.begin(), comm.end()) + 1 : 0;
    rep.community_top.resize(static_cast<std::size_t>(ncomm));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a2, std::size_t b2) {
        if (rep.nodes[a2].crit_score != rep.nodes[b2].crit_score)
            return rep.nodes[a2].crit_score > rep.nodes[b2].crit_score;
        return rep.nodes[a2].id < rep.nodes[b2].id;
    });
    for (auto i : order) {
        auto& bucket = rep.community_top[static_cast<std::size_t>(comm[i])];
        if (static_cast<int>(bucket.size()) < cfg.m_per_community)
            bucket.push_back(rep.nodes[i].id);
        if (static_cast<int>(rep.global_top.size()) < cfg.top_k)
            rep.global_top.push_back(rep.nodes[i].id);
    }

    rep.edge_gain.reserve(g.edges.size());
    for (const auto& edge : g.edges)
        rep.edge_gain.push_back((edge.w - edge.w0) / (edge.w0 + cfg.eps));
    return rep;
}

std::string edges_to_csv(const AffiliationGraph& g, double eps) {
    std::ostringstream out;
    out << "u,v,d,w0,w,gain\n";
    for (const auto& e : g.edges) {
        out << e.u << ',' << e.v << ',' << format_num(e.d) << ',' << format_num(e.w0) << ','
            << format_num(e.w) << ',' << format_num((e.w - e.w0) / (e.w0 + eps)) << '\n';
    }
    return out.str();
}

} // namespace dtwin
