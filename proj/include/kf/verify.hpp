#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kf {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0;
    double time_limit = 0;  // part of the criterion; exceeding it fails the check
};

enum class Suite { Quick, Full };

struct VerifyOptions {
    std::uint64_t seed = 20240611;
    unsigned workers = 1;
    // called after each check, for progress output
    std::function<void(const CriterionResult&)> on_result;
};

// The acceptance criteria, numbered 1..9.
CriterionResult run_criterion(int id, const VerifyOptions& opt = {});
int criterion_count();

// Full runs criteria 1..9; Quick runs a single-atom, a level-10 Lebesgue and a level-16 Cantor check.
std::vector<CriterionResult> run_suite(Suite suite, const VerifyOptions& opt = {});

std::string format_result(const CriterionResult& r);

}  // namespace kf
