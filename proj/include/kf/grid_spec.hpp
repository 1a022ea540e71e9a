#pragma once

#include <string>
#include <vector>

namespace kf {

// "start:stop:points" (equally spaced) or a comma list "v1,v2,...".
std::vector<double> parse_linear_grid(const std::string& spec);

// "start:stop:points" (equally spaced in log), "2^a..2^b" or "2^a..2^b:step" (exact powers of two),
// or a comma list. Every value must be positive.
std::vector<double> parse_geometric_grid(const std::string& spec);

// Comma list of integers, or "first..last" / "first..last:step".
std::vector<int> parse_int_list(const std::string& spec);

// Comma list of reals.
std::vector<double> parse_real_list(const std::string& spec);

}  // namespace kf
