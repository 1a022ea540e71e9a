#pragma once

#include <string>

#include <json.hpp>

#include "kf/measure.hpp"

namespace kf {

// JSON schema: {"type": "atomic" | "density" | "self_similar" | "cantor" | "sum" | "shifted", ...}
MeasureSpec measure_from_json(const nlohmann::json& j);
nlohmann::json measure_to_json(const MeasureSpec& m);
MeasureSpec load_measure_file(const std::string& path);

// Built-in constructions. Accepts "name" or "name(arg,...)":
//   lebesgue, cantor, salem(p), example_5_2_oscillating[(p)], example_5_2_zero,
//   comb_exponential(alpha,beta[,atoms]), comb_powerlaw(u1,u2[,atoms])
MeasureSpec builtin_measure(const std::string& spec);
bool is_builtin_name(const std::string& spec);

// Resolve a CLI argument: builtin name or path to a JSON file.
MeasureSpec resolve_measure(const std::string& arg);

MeasureSpec make_salem(double p);
MeasureSpec make_oscillating_cantor(double p = 0.5);
MeasureSpec make_zero_dimension_cantor();
MeasureSpec make_exponential_comb(double alpha, double beta, int atoms = 0);
MeasureSpec make_powerlaw_comb(double u1, double u2, int atoms = 1 << 17);

}  // namespace kf
