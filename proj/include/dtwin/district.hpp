#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dtwin {

enum class BuildingType { MultiFamily, SingleFamily, Commercial, School, Grocery, Clinic };

inline constexpr int kNumBuildingTypes = 6;

const char* type_token(BuildingType t);            // MF/SF/COM/SCH/GRO/CLI
BuildingType type_from_token(const std::string& s);

struct NodeRecord {
    int id = 0;
    double x = 0.0, y = 0.0;          // position in the unit square
    BuildingType btype = BuildingType::MultiFamily;
    double pop = 0.0;                 // persons
    double income = 0.0;              // k$
    double energy_burden = 0.0;       // [0,1]
    double vuln = 0.0;                // [0,1]
    bool has_sensor = false;
    double req = 0.0;                 // demand proxy, population min-max scaled to [0,1]
};

struct District {
    std::vector<NodeRecord> nodes;
    std::uint64_t seed = 0;

    std::size_t size() const { return nodes.size(); }
    std::vector<int> ids_of_type(BuildingType t) const;
    int count_of_type(BuildingType t) const;
};

struct DistrictConfig {
    int n = 120;
    // Type fractions, order MF/SF/COM/SCH/GRO/CLI; must sum to 1.
    std::array<double, kNumBuildingTypes> fractions{0.45, 0.33, 0.15, 0.02, 0.03, 0.02};
    // Population ranges per type, same order.
    std::array<double, kNumBuildingTypes> pop_lo{20, 2, 1, 100, 20, 10};
    std::array<double, kNumBuildingTypes> pop_hi{60, 5, 15, 500, 80, 60};
    // Vulnerability baselines per type, same order.
    std::array<double, kNumBuildingTypes> vuln_base{0.55, 0.45, 0.40, 0.70, 0.50, 0.65};
    double income_noise_sd = 8.0;
    double vuln_noise_sd = 0.05;
    double sensor_fraction = 0.10;
    // Critical-facility minima: schools / groceries / clinics.
    int min_schools = 1;
    int min_groceries = 2;
    int min_clinics = 1;
};

/// Build the synthetic district: positions uniform in the unit square, types
/// sampled from the configured fractions and patched to meet facility minima,
/// income rising toward the upper-right corner, energy burden inверse to income
/// with a mild spatial sinusoid, type-based vulnerability with Gaussian noise.
/// Deterministic for a given (config, seed); sensors are NOT assigned here.
District generate_district(const DistrictConfig& config, std::uint64_t seed);

/// Flag exactly ceil(fraction * N) nodes as sensor-equipped, sampled without
/// replacement, deterministic per seed.
District assign_sensors(District district, double fraction, std::uint64_t seed);

std::string district_to_csv(const District& d);
District district_from_csv(const std::string& text);

} // namespace dtwin
