#include "kf/grid_spec.hpp"

#include <cmath>
#include <cstddef>

#include "kf/error.hpp"
#include "kf/report.hpp"

namespace kf {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_real(const std::string& tok, const std::string& spec) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used > 0 && used == tok.size() && std::isfinite(v), "bad number '" + tok + "' in grid '" + spec + "'");
    return v;
}

int to_int(const std::string& tok, const std::string& spec) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used > 0 && used == tok.size(), "bad integer '" + tok + "' in '" + spec + "'");
    return v;
}

// start:stop:points, returns the three fields
bool triple(const std::string& spec, double& a, double& b, std::size_t& n) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) return false;
    a = to_real(parts[0], spec);
    b = to_real(parts[1], spec);
    const int p = to_int(parts[2], spec);
    require(p >= 1, "grid '" + spec + "': need at least one point");
    require(p == 1 ? a <= b : a < b, "grid '" + spec + "': start must be below stop");
    n = static_cast<std::size_t>(p);
    return true;
}

}  // namespace

std::vector<double> parse_real_list(const std::string& spec) {
    require(!spec.empty(), "empty list");
    std::vector<double> out;
    for (const auto& t : split(spec, ',')) out.push_back(to_real(t, spec));
    return out;
}

std::vector<double> parse_linear_grid(const std::string& spec) {
    double a = 0, b = 0;
    std::size_t n = 0;
    if (!triple(spec, a, b, n)) return parse_real_list(spec);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

std::vector<double> parse_geometric_grid(const std::string& spec) {
    std::vector<double> out;
    if (spec.rfind("2^", 0) == 0 && spec.find("..") != std::string::npos) {
        const auto dots = spec.find("..");
        std::string rest = spec.substr(dots + 2);
        int step = 1;
        if (const auto colon = rest.find(':'); colon != std::string::npos) {
            step = to_int(rest.substr(colon + 1), spec);
            rest = rest.substr(0, colon);
        }
        require(rest.rfind("2^", 0) == 0, "grid '" + spec + "': expected 2^a..2^b");
        const int a = to_int(spec.substr(2, dots - 2), spec), b = to_int(rest.substr(2), spec);
        require(a <= b && step >= 1, "grid '" + spec + "': need a <= b and a positive step");
        require(a >= -1000 && b <= 1000, "grid '" + spec + "': exponent out of range");
        out = pow2_grid(a, b, step);
    } else {
        double a = 0, b = 0;
        std::size_t n = 0;
        if (triple(spec, a, b, n)) {
            require(a > 0, "grid '" + spec + "': geometric grids need a positive start");
            out = n == 1 ? std::vector<double>{a} : geometric_grid(a, b, n);
        } else {
            out = parse_real_list(spec);
        }
    }
    for (double v : out) require(v > 0, "grid '" + spec + "': values must be positive");
    return out;
}

std::vector<int> parse_int_list(const std::string& spec) {
    require(!spec.empty(), "empty list");
    std::vector<int> out;
    if (const auto dots = spec.find(".."); dots != std::string::npos) {
        std::string rest = spec.substr(dots + 2);
        int step = 1;
        if (const auto colon = rest.find(':'); colon != std::string::npos) {
            step = to_int(rest.substr(colon + 1), spec);
            rest = rest.substr(0, colon);
        }
        const int a = to_int(spec.substr(0, dots), spec), b = to_int(rest, spec);
        require(a <= b && step >= 1, "range '" + spec + "': need first <= last and a positive step");
        for (int v = a; v <= b; v += step) out.push_back(v);
        return out;
    }
    for (const auto& t : split(spec, ',')) out.push_back(to_int(t, spec));
    return out;
}

}  // namespace kf
