#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtwin {

/// Format a double with 12 significant digits — enough for 1e-9 round-trips
/// through the CSV artifacts.
std::string format_num(double v);

/// Append one CSV cell for an optional value; missing prints as empty cell.
std::string format_opt(const std::optional<double>& v);

/// Write `content` to `path` atomically (temp file in the same directory,
/// then rename). Creates parent directories as needed.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit, hex-encoded. Used for manifest input/config hashes.
std::uint64_t fnv1a64(const std::string& data);
std::string fnv1a64_hex(const std::string& data);

/// Minimal CSV table: header row plus string cells; empty cell = missing.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const; // throws if absent
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

double parse_double(const std::string& cell);
std::optional<double> parse_opt(const std::string& cell);

} // namespace dtwin
