#include "dtwin/district.hpp"

#include "dtwin/csvio.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {
constexpr std::array<const char*, kNumBuildingTypes> kTokens{"MF", "SF", "COM", "SCH", "GRO", "CLI"};
constexpr double kIncomeLo = 20.0;
constexpr double kIncomeHi = 180.0;
} // namespace

const char* type_token(BuildingType t) { return kTokens[static_cast<int>(t)]; }

BuildingType type_from_token(const std::string& s) {
    for (int i = 0; i < kNumBuildingTypes; ++i)
        if (s == kTokens[i]) return static_cast<BuildingType>(i);
    throw std::runtime_error("unknown building type token: " + s);
}

std::vector<int> District::ids_of_type(BuildingType t) const {
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.btype == t) out.push_back(n.id);
    return out;
}

int District::count_of_type(BuildingType t) const {
    int c = 0;
    for (const auto& n : nodes) c += (n.btype == t) ? 1 : 0;
    return c;
}

namespace {

void patch_facility_minima(std::vector<NodeRecord>& nodes, const DistrictConfig& cfg, Rng& rng) {
    struct Need { BuildingType t; int min; };
    const Need needs[] = {{BuildingType::School, cfg.min_schools},
                          {BuildingType::Grocery, cfg.min_groceries},
                          {BuildingType::Clinic, cfg.min_clinics}};
    for (const auto& need : needs) {
        int have = 0;
        for (const auto& n : nodes) have += (n.btype == need.t) ? 1 : 0;
        while (have < need.min) {
            // Convert a random MultiFamily node (largest class, least
            // distributional distortion); fall back to SF then COM if exhausted.
            const BuildingType donors[] = {BuildingType::MultiFamily, BuildingType::SingleFamily,
                                           BuildingType::Commercial};
            std::vector<std::size_t> candidates;
            for (BuildingType donor : donors) {
                for (std::size_t i = 0; i < nodes.size(); ++i)
                    if (nodes[i].btype == donor) candidates.push_back(i);
                if (!candidates.empty()) break;
            }
            if (candidates.empty())
                throw ConfigError("district too small to satisfy facility minima");
            const auto pick = candidates[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<long>(candidates.size()) - 1))];
            nodes[pick].btype = need.t;
            ++have;
        }
    }
}

} // namespace

District generate_district(const DistrictConfig& cfg, std::uint64_t seed) {
    double frac_sum = 0.0;
    for (double f : cfg.fractions) {
        if (f < 0.0) throw ConfigError("type fraction must be nonnegative");
        frac_sum += f;
    }
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw ConfigError("type fractions must sum to 1");
    const int min_needed = cfg.min_schools + cfg.min_groceries + cfg.min_clinics;
    if (cfg.n < std::max(4, min_needed))
        throw ConfigError("district size too small for critical-facility minima");

    District d;
    d.seed = seed;
    d.nodes.resize(static_cast<std::size_t>(cfg.n));

    Rng rng(mix_seed(seed, 0x115));
    for (int i = 0; i < cfg.n; ++i) {
        auto& n = d.nodes[static_cast<std::size_t>(i)];
        n.id = i;
        n.x = rng.uniform();
        n.y = rng.uniform();
    }
    // Types sampled independently per node from the fractions.
    for (auto& n : d.nodes) {
        const double u = rng.uniform();
        double acc = 0.0;
        n.btype = static_cast<BuildingType>(kNumBuildingTypes - 1);
        for (int k = 0; k < kNumBuildingTypes; ++k) {
            acc += cfg.fractions[static_cast<std::size_t>(k)];
            if (u < acc) {
                n.btype = static_cast<BuildingType>(k);
                break;
            }
        }
    }
    Rng patch_rng(mix_seed(seed, 0x116));
    patch_facility_minima(d.nodes, cfg, patch_rng);

    Rng attr_rng(mix_seed(seed, 0x117));
    for (auto& n : d.nodes) {
        const auto k = static_cast<std::size_t>(n.btype);
        n.pop = static_cast<double>(attr_rng.uniform_int(
            static_cast<long>(cfg.pop_lo[k]), static_cast<long>(cfg.pop_hi[k])));
        n.income = clip(30.0 + 70.0 * (0.5 * n.x + 0.5 * n.y) +
                            attr_rng.normal(0.0, cfg.income_noise_sd),
                        kIncomeLo, kIncomeHi);
        const double inorm = (n.income - kIncomeLo) / (kIncomeHi - kIncomeLo);
        const double spatial = 0.5 + 0.5 * std::sin(2.0 * M_PI * n.x) * std::sin(2.0 * M_PI * n.y);
        n.energy_burden = clip(0.8 * (1.0 - inorm) + 0.2 * spatial, 0.0, 1.0);
        n.vuln = clip(cfg.vuln_base[k] + attr_rng.normal(0.0, cfg.vuln_noise_sd), 0.0, 1.0);
    }

    // Demand proxy: population min-max scaled over the district.
    double pmin = d.nodes.front().pop, pmax = pmin;
    for (const auto& n : d.nodes) {
        pmin = std::min(pmin, n.pop);
        pmax = std::max(pmax, n.pop);
    }
    for (auto& n : d.nodes)
        n.req = (pmax > pmin) ? (n.pop - pmin) / (pmax - pmin) : 0.5;

    return d;
}

District assign_sensors(District district, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigError("sensor fraction must lie in (0, 1]");
    const auto n = district.nodes.size();
    const auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-12));
    for (auto& node : district.nodes) node.has_sensor = false;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x5e25));
    rng.shuffle(order);
    for (std::size_t i = 0; i < want && i < n; ++i)
        district.nodes[order[i]].has_sensor = true;
    return district;
}

std::string district_to_csv(const District& d) {
    std::ostringstream out;
    out << "id,x,y,type,pop,income,energy_burden,vuln,has_sensor,req\n";
    for (const auto& n : d.nodes) {
        out << n.id << ',' << format_num(n.x) << ',' << format_num(n.y) << ','
            << type_token(n.btype) << ',' << format_num(n.pop) << ','
            << format_num(n.income) << ',' << format_num(n.energy_burden) << ','
            << format_num(n.vuln) << ',' << (n.has_sensor ? 1 : 0) << ','
            << format_num(n.req) << '\n';
    }
    return out.str();
}

District district_from_csv(const std::string& text) {
    const auto t = parse_csv(text);
    District d;
    const auto c_id = t.col("id"), c_x = t.col("x"), c_y = t.col("y"), c_type = t.col("type"),
               c_pop = t.col("pop"), c_inc = t.col("income"), c_eb = t.col("energy_burden"),
               c_v = t.col("vuln"), c_s = t.col("has_sensor"), c_r = t.col("req");
    for (const auto& row : t.rows) {
        NodeRecord n;
        n.id = static_cast<int>(parse_double(row[c_id]));
        n.x = parse_double(row[c_x]);
        n.y = parse_double(row[c_y]);
        n.btype = type_from_token(row[c_type]);
        n.pop = parse_double(row[c_pop]);
        n.income = parse_double(row[c_inc]);
        n.energy_burden = parse_double(row[c_eb]);
        n.vuln = parse_double(row[c_v]);
        n.has_sensor = parse_double(row[c_s]) != 0.0;
        n.req = parse_double(row[c_r]);
        d.nodes.push_back(n);
    }
    return d;
}

} // namespace dtwin
