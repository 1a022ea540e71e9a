#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kf/lq.hpp"
#include "kf/measure.hpp"
#include "kf/partition.hpp"
#include "kf/string_spectrum.hpp"

namespace kf {

// Growth exponent of a counting-type curve N(x).
//
// lower/upper are the tail minimum and maximum of the pointwise ratios log N(x_i) / log x_i (log of
// a zero count taken as 0). The least-squares line log N = intercept + slope log x is fitted to all
// positive points. The corrected ratios (log N(x_i) - intercept) / log x_i remove the constant
// factor in N, which at x ~ 2^40 still moves a pointwise ratio by log C / log x.
struct SlopeEstimate {
    double lower = 0, upper = 0;
    double lower_corrected = 0, upper_corrected = 0;
    double ls_slope = 0, intercept = 0, r2 = 0;
    std::pair<std::size_t, std::size_t> window;  // [first, last) grid indices of the tail
    std::size_t positive_points = 0;
};

// Needs x_i > 1 and at least 6 points with positive counts.
SlopeEstimate slope_estimates(const std::vector<double>& x, const std::vector<double>& counts,
                              double tail_fraction = 0.5);
SlopeEstimate slope_estimates(const std::vector<double>& x, const std::vector<std::size_t>& counts,
                              double tail_fraction = 0.5);

// `points` values from start to stop, equally spaced in log x
std::vector<double> geometric_grid(double start, double stop, std::size_t points);
// 2^a, 2^(a+step), ..., up to 2^b
std::vector<double> pow2_grid(int a, int b, int step = 1);

// A finite-scale estimate of a limit quantity. `value` is the plain tail proxy; [lo, hi] also
// contains a first-order bias-corrected proxy (intercept-free ratios for curves, 1/n extrapolation
// for level sequences). NaN when the quantity could not be computed.
struct Estimate {
    double value = std::numeric_limits<double>::quiet_NaN();
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
    std::string source;

    bool available() const { return value == value; }
    static Estimate point(double v, std::string source);
    static Estimate band(double v, double other, std::string source);
};

// lhs <= rhs up to the slack. Finite data can refute an inequality but never certify it: `holds`
// means "not refuted", i.e. lhs.lo <= rhs.hi + slack. `holds_central` compares the plain proxies.
struct Verdict {
    std::string inequality;
    double lhs = 0, rhs = 0;
    double lhs_lo = 0, rhs_hi = 0;
    double slack = 0;
    bool holds = false;
    bool holds_central = false;
    bool evaluated = false;  // false when an ingredient is missing
};

enum class Counting { Auto, ExactAtomic, BracketOnly };

struct ReportConfig {
    std::vector<int> levels = {8, 10, 12, 14, 16, 18, 20};
    std::vector<double> q_grid = default_q_grid();
    std::vector<double> x_grid = pow2_grid(20, 60, 2);
    std::vector<double> alpha_grid = default_alpha_grid();
    std::vector<double> m_list = {1.5, 2.0, 3.0};
    Counting counting = Counting::Auto;
    Boundary bc = Boundary::Dirichlet;
    double slack = 0.05;
    double tail_fraction = 0.5;
    // Tree nodes allowed per partition traversal. The x-grid is cut to the prefix that fits.
    std::size_t node_budget = 20'000'000;
    LqOptions lq;
    PartitionOptions partition;
    unsigned workers = 1;
};

struct DimReport {
    std::string measure_id;
    std::string counting;  // "exact-atomic" or "bracket-only"
    double slack = 0.05;

    std::vector<double> x_grid;  // the prefix of the requested grid that was computed
    std::size_t requested_points = 0;
    std::vector<std::size_t> nr_counts;
    std::vector<std::pair<double, std::vector<std::size_t>>> nl_counts;  // per m
    std::vector<std::size_t> exact_counts;                            // exact-atomic only
    SlopeEstimate nr_slope, exact_slope;
    std::vector<std::pair<double, SlopeEstimate>> nl_slopes;

    Estimate s_lower, s_upper, h_lower, h_upper;
    std::vector<std::pair<double, Estimate>> hm_lower;
    Estimate F_lower, F_upper, qbar, qlow;
    std::vector<std::pair<int, double>> q_per_level;
    std::vector<std::pair<int, double>> F_per_level;  // sup over alpha of log N_alpha(n) / (n log 2 (1+alpha))

    BetaCurve beta;  // largest level
    double delta_star = std::numeric_limits<double>::quiet_NaN();
    double delta_bar = std::numeric_limits<double>::quiet_NaN();
    double delta_under = std::numeric_limits<double>::quiet_NaN();
    double rho = std::numeric_limits<double>::quiet_NaN();

    std::vector<Verdict> chain;      // F_ <= h^m_ <= s_ <= h_ <= h^ = s^ = q^ = F^
    std::vector<Verdict> sandwich;   // delta_/(1+delta^) <= s_ <= s^ <= delta*/(1+delta*) <= 1/2
    std::vector<Verdict> heuristic;  // (a q + beta(q)) / (1 + b) <= s_ at q = 0 and q = qbar

    struct Rigidity {
        bool applies = false;  // s_upper >= 0.48
        double max_deviation = 0;  // max over q in [0,1] of |beta_n(q) - (1 - q)|
        bool holds = true;
    } rigidity;
    struct MaxDimension {
        bool evaluated = false;
        bool s_at_max = false;        // |s_upper - delta*/(1+delta*)| <= 0.03
        bool deltas_agree = false;    // |delta_bar - delta_star| <= 0.05
    } max_dimension;
    struct Regularity {
        bool evaluated = false;
        double sup_hm = 0;  // sup over m of the h^m lower proxies
        bool consistent = false;  // within slack of h_upper
    } regularity;

    std::vector<std::string> warnings;
    std::vector<std::string> missing;

    bool chain_holds() const;
    bool sandwich_holds() const;
};

DimReport full_report(const MeasureSpec& m, const ReportConfig& cfg = {}, std::string measure_id = {});

nlohmann::json report_to_json(const DimReport& r);
std::string report_summary(const DimReport& r);

}  // namespace kf
