#include "dtwin/svg.hpp"

#include "dtwin/csvio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {

constexpr int kW = 800, kH = 400, kMargin = 50;
const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

struct Range {
    double lo = 0.0, hi = 1.0;
};

Range span(const std::vector<double>& v, Range r) {
    for (const double x : v) {
        r.lo = std::min(r.lo, x);
        r.hi = std::max(r.hi, x);
    }
    if (r.hi - r.lo < 1e-12) r.hi = r.lo + 1.0;
    return r;
}

std::string header(const std::string& title) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    return out.str();
}

} // namespace

std::string svg_line_chart(const std::string& title, const std::vector<double>& x,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    Range xr{x.empty() ? 0.0 : x.front(), x.empty() ? 1.0 : x.front()};
    xr = span(x, xr);
    Range yr{1e300, -1e300};
    for (const auto& [name, ys] : series) {
        (void)name;
        yr = span(ys, yr);
    }
    auto px = [&](double v) {
        return kMargin + (v - xr.lo) / (xr.hi - xr.lo) * (kW - 2 * kMargin);
    };
    auto py = [&](double v) {
        return kH - kMargin - (v - yr.lo) / (yr.hi - yr.lo) * (kH - 2 * kMargin);
    };
    std::ostringstream out;
    out << header(title);
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
        << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
        << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
    int ci = 0;
    for (const auto& [name, ys] : series) {
        out << "<polyline fill=\"none\" stroke=\"" << kColors[ci % 5] << "\" points=\"";
        for (std::size_t i = 0; i < x.size() && i < ys.size(); ++i)
            out << format_num(px(x[i])) << ',' << format_num(py(ys[i])) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << kW - kMargin + 4 << "\" y=\"" << kMargin + 16 * ci
            << "\" font-size=\"11\" fill=\"" << kColors[ci % 5] << "\">" << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    Range yr{0.0, 0.0};
    for (const auto& [name, ys] : series) {
        (void)name;
        yr = span(ys, yr);
    }
    const auto groups = labels.size();
    const auto per = std::max<std::size_t>(1, series.size());
    const double gw = static_cast<double>(kW - 2 * kMargin) / std::max<std::size_t>(1, groups);
    const double bw = gw / static_cast<double>(per + 1);
    auto py = [&](double v) {
        return kH - kMargin - (v - yr.lo) / (yr.hi - yr.lo) * (kH - 2 * kMargin);
    };
    std::ostringstream out;
    out << header(title);
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
        << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
    for (std::size_t gi = 0; gi < groups; ++gi) {
        for (std::size_t si = 0; si < series.size(); ++si) {
            const auto& ys = series[si].second;
            if (gi >= ys.size()) continue;
            const double x0 = kMargin + gw * static_cast<double>(gi) +
                              bw * (0.5 + static_cast<double>(si));
            const double y0 = py(std::max(ys[gi], 0.0));
            const double h = std::abs(py(0.0) - py(ys[gi]));
            out << "<rect x=\"" << format_num(x0) << "\" y=\"" << format_num(y0) << "\" width=\""
                << format_num(bw * 0.9) << "\" height=\"" << format_num(h) << "\" fill=\""
                << kColors[si % 5] << "\"/>\n";
        }
        out << "<text x=\"" << format_num(kMargin + gw * (static_cast<double>(gi) + 0.5))
            << "\" y=\"" << kH - kMargin + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
            << labels[gi] << "</text>\n";
    }
    int ci = 0;
    for (const auto& [name, ys] : series) {
        (void)ys;
        out << "<text x=\"" << kW - kMargin + 4 << "\" y=\"" << kMargin + 16 * ci
            << "\" font-size=\"11\" fill=\"" << kColors[ci % 5] << "\">" << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace dtwin
