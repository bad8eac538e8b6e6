#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dtwin {

/// Minimal dependency-free SVG writers for the optional plot outputs.
std::string svg_line_chart(const std::string& title, const std::vector<double>& x,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series);

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<std::pair<std::string, std::vector<double>>>& series);

} // namespace dtwin
