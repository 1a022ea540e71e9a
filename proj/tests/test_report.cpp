#include <doctest.h>

#include <cmath>

#include "kf/grid_spec.hpp"
#include "kf/measure_io.hpp"
#include "kf/report.hpp"
#include "kf/verify.hpp"

using namespace kf;

TEST_CASE("slope of floor(sqrt x)") {
    const auto xs = geometric_grid(1e4, 1e8, 30);
    std::vector<double> n;
    for (double x : xs) n.push_back(std::floor(std::sqrt(x)));
    const SlopeEstimate s = slope_estimates(xs, n);
    CHECK(std::abs(s.lower - 0.5) <= 0.02);
    CHECK(std::abs(s.upper - 0.5) <= 0.02);
    CHECK(std::abs(s.ls_slope - 0.5) <= 0.02);
    CHECK(s.r2 > 0.999);
}

TEST_CASE("slope of floor(log x) is near zero") {
    // the ratio log log x / log x only drops below 0.05 beyond x ~ 1e39
    const auto xs = geometric_grid(1e40, 1e300, 40);
    std::vector<double> n;
    for (double x : xs) n.push_back(std::floor(std::log(x)));
    const SlopeEstimate s = slope_estimates(xs, n);
    CHECK(std::abs(s.lower) <= 0.05);
    CHECK(std::abs(s.upper) <= 0.05);
    CHECK(std::abs(s.ls_slope) <= 0.05);
}

TEST_CASE("slope of C x^s corrects the constant") {
    const auto xs = pow2_grid(40, 100, 2);
    std::vector<double> n;
    for (double x : xs) n.push_back(std::floor(0.01 * std::pow(x, 0.3)));
    const SlopeEstimate s = slope_estimates(xs, n);
    CHECK(s.upper < 0.3 - 0.05);  // pointwise ratios carry log(0.01)/log x
    CHECK(s.ls_slope == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(s.upper_corrected == doctest::Approx(0.3).epsilon(1e-2));
    CHECK_THROWS_AS(slope_estimates(std::vector<double>{2, 4}, std::vector<double>{1, 2}), InvalidInput);
}

TEST_CASE("grids") {
    const auto g = geometric_grid(10, 1000, 3);
    CHECK(g.front() == 10);
    CHECK(g[1] == doctest::Approx(100));
    CHECK(g.back() == 1000);
    CHECK(pow2_grid(0, 6, 3) == std::vector<double>{1, 8, 64});
    CHECK(parse_geometric_grid("2^20..2^24:2") == std::vector<double>{std::ldexp(1.0, 20), std::ldexp(1.0, 22),
                                                                    std::ldexp(1.0, 24)});
    CHECK(parse_geometric_grid("2^3..2^5") == std::vector<double>{8, 16, 32});
    CHECK(parse_geometric_grid("1e3:1e5:3")[1] == doctest::Approx(1e4));
    CHECK(parse_geometric_grid("5,7") == std::vector<double>{5, 7});
    CHECK(parse_linear_grid("-1:3:161").size() == 161);
    CHECK(parse_linear_grid("-1:3:161")[40] == doctest::Approx(0.0));
    CHECK(parse_int_list("8,12,16") == std::vector<int>{8, 12, 16});
    CHECK(parse_int_list("8..14:2") == std::vector<int>{8, 10, 12, 14});
    CHECK_THROWS_AS(parse_geometric_grid("0:10:3"), InvalidInput);
    CHECK_THROWS_AS(parse_geometric_grid("10:1:3"), InvalidInput);
    CHECK_THROWS_AS(parse_linear_grid("1:2:x"), InvalidInput);
    CHECK_THROWS_AS(parse_int_list("8,,9"), InvalidInput);
    CHECK_THROWS_AS(parse_geometric_grid("-1,2"), InvalidInput);
}

TEST_CASE("estimate bands") {
    const Estimate b = Estimate::band(0.3, 0.2, "x");
    CHECK(b.value == 0.3);
    CHECK(b.lo == 0.2);
    CHECK(b.hi == 0.3);
    CHECK(Estimate{}.available() == false);
    CHECK(Estimate::point(0.1, "y").available());
}

TEST_CASE("oscillating report") {
    ReportConfig cfg;
    cfg.node_budget = 4'000'000;
    const DimReport r = full_report(builtin_measure("example_5_2_oscillating"), cfg, "osc");
    CHECK(r.counting == "bracket-only");
    CHECK(r.chain_holds());
    CHECK(r.sandwich_holds());
    CHECK(std::abs(r.s_lower.value - 3.0 / 13) <= 0.02);
    CHECK(std::abs(r.s_upper.value - 3.0 / 11) <= 0.02);
    CHECK(r.s_lower.value <= r.s_upper.value);
    CHECK(r.missing.empty());
    const auto j = report_to_json(r);
    CHECK(j.at("schema") == "kf.dimreport/1");
    CHECK(j.at("chain_holds") == true);
    CHECK(j.at("chain_verdicts").size() == r.chain.size());
    CHECK(report_summary(r).find("s_upper") != std::string::npos);
}

TEST_CASE("report does not depend on the worker count") {
    ReportConfig cfg;
    cfg.node_budget = 1'000'000;
    cfg.levels = {8, 10, 12};
    const MeasureSpec m = builtin_measure("example_5_2_zero");
    cfg.workers = 1;
    const auto a = report_to_json(full_report(m, cfg, "z")).dump();
    cfg.workers = 3;
    const auto b = report_to_json(full_report(m, cfg, "z")).dump();
    CHECK(a == b);
}

TEST_CASE("atomic measures are counted exactly") {
    ReportConfig cfg;
    cfg.node_budget = 2'000'000;
    const DimReport r = full_report(make_exponential_comb(1, 1), cfg, "comb");
    CHECK(r.counting == "exact-atomic");
    CHECK(r.exact_counts.size() == r.x_grid.size());
    CHECK(r.s_upper.value <= 0.15);
    CHECK(r.chain_holds());
}

TEST_CASE("quick verification suite") {
    const auto results = run_suite(Suite::Quick);
    CHECK(results.size() == 3);
    for (const auto& r : results) CHECK_MESSAGE(r.passed, format_result(r));
    CHECK(criterion_count() == 9);
    CHECK_THROWS_AS(run_criterion(10), InvalidInput);
}
