#include "kf/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "kf/lq.hpp"
#include "kf/measure.hpp"
#include "kf/measure_io.hpp"
#include "kf/partition.hpp"
#include "kf/report.hpp"
#include "kf/string_spectrum.hpp"

namespace kf {

namespace {

using Clock = std::chrono::steady_clock;

const double kCantorQbar = std::numbers::ln2 / std::log(6.0);

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

// sorted distinct points in (0,1)
std::vector<double> random_positions(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(1e-3, 1 - 1e-3);
    std::set<double> s;
    while (s.size() < n) s.insert(u(rng));
    return {s.begin(), s.end()};
}

std::vector<double> random_masses(std::mt19937_64& rng, std::size_t n) {
    std::vector<double> m(n);
    for (auto& v : m) v = log_uniform(rng, 1e-2, 1e1);
    return m;
}

// eigenvalues of K f = lambda M f by a dense solver
Eigen::VectorXd dense_eigenvalues(const Pencil& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n), M = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = p.diag[static_cast<std::size_t>(i)];
        M(i, i) = p.mass[static_cast<std::size_t>(i)];
        if (i + 1 < n) K(i, i + 1) = K(i + 1, i) = p.off[static_cast<std::size_t>(i)];
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, M, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

CriterionResult single_atom(std::uint64_t seed, int trials) {
    std::mt19937_64 rng(seed);
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        const double z = std::uniform_real_distribution<double>(-5, 5)(rng);
        const double p = log_uniform(rng, 1e-3, 1e3), a = log_uniform(rng, 1e-3, 1e3), b = log_uniform(rng, 1e-3, 1e3);
        const Pencil pen = assemble(make_string({z}, {p}, z - a, z + b), Boundary::Dirichlet);
        const double lam = eigenvalue_k(pen, 1), want = (a + b) / (p * a * b);
        worst = std::max(worst, std::abs(lam - want) / want);
    }
    CriterionResult r;
    r.passed = worst <= 1e-12;
    r.detail = fmt::format("{} random strings, max relative error {:.3g} (limit 1e-12)", trials, worst);
    return r;
}

CriterionResult oracle_equivalence(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t checked = 0, skipped = 0, mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
        const Boundary bc = t % 2 ? Boundary::Neumann : Boundary::Dirichlet;
        const Pencil p = assemble(make_string(random_positions(rng, n), random_masses(rng, n), 0.0, 1.0), bc);
        const Eigen::VectorXd ev = dense_eigenvalues(p);
        // range of the positive spectrum (Neumann contributes a zero eigenvalue)
        double top = std::max(ev.maxCoeff(), 0.0), bottom = top;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (ev(i) > 1e-9 * top) bottom = std::min(bottom, ev(i));
        if (top <= 0) top = bottom = 1;
        for (int k = 0; k < 100; ++k) {
            const double x = log_uniform(rng, bottom / 10, top * 10);
            bool near = false;
            std::size_t want = 0;
            for (Eigen::Index i = 0; i < ev.size(); ++i) {
                if (std::abs(x - ev(i)) <= 1e-10 * std::max(std::abs(ev(i)), x)) near = true;
                want += ev(i) <= x;
            }
            if (near) {
                ++skipped;
                continue;
            }
            ++checked;
            mismatches += count_leq(p, x) != want;
        }
    }
    CriterionResult r;
    r.passed = mismatches == 0;
    r.detail = fmt::format("{} comparisons, {} mismatches, {} skipped near eigenvalues", checked, mismatches, skipped);
    return r;
}

CriterionResult bracketing(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t checks = 0, failures = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
        const auto pos = random_positions(rng, n);
        const MeasureSpec m = make_atomic(pos, random_masses(rng, n));
        // cuts strictly between neighbouring atoms or outside the atoms, never on one
        std::vector<double> gaps{0.0};
        gaps.insert(gaps.end(), pos.begin(), pos.end());
        gaps.push_back(1.0);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(12, n + 1))(rng);
        std::set<double> cuts;
        while (cuts.size() < k) {
            const std::size_t g = std::uniform_int_distribution<std::size_t>(0, gaps.size() - 2)(rng);
            const double w = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
            const double c = gaps[g] + w * (gaps[g + 1] - gaps[g]);
            if (c > 0 && c < 1 && !std::binary_search(pos.begin(), pos.end(), c)) cuts.insert(c);
        }
        for (int j = 0; j < 20; ++j) {
            const double x = log_uniform(rng, 1e-1, 1e9);
            const BracketingReport b = bracketing_check(m, Interval{0, 1, Closure::Closed}, {cuts.begin(), cuts.end()}, x);
            ++checks;
            failures += !b.ok();
        }
    }
    CriterionResult r;
    r.passed = failures == 0;
    r.detail = fmt::format("{} (measure, x) pairs, {} violations", checks, failures);
    return r;
}

CriterionResult weyl_lebesgue(int level) {
    const MeasureSpec m = discretize_to_atoms(make_lebesgue(), level);
    const Pencil p = assemble(m, Interval{0, 1, Closure::Closed}, Boundary::Dirichlet);
    double worst = 0;
    for (double x : geometric_grid(1e3, 1e5, 41)) {
        const double ratio = static_cast<double>(count_leq(p, x)) / std::sqrt(x) * std::numbers::pi;
        worst = std::max(worst, std::abs(ratio - 1));
    }
    CriterionResult r;
    r.passed = worst <= 0.10;
    r.detail = fmt::format("level {}: max |pi N(x)/sqrt(x) - 1| = {:.4f} on [1e3, 1e5] (limit 0.10)", level, worst);
    return r;
}

CriterionResult cantor() {
    const MeasureSpec m = make_cantor_measure();
    std::vector<std::string> parts;
    bool ok = true;

    const double q = self_similar_qbar(*m.as<SelfSimilar>());
    ok &= std::abs(q - kCantorQbar) <= 1e-10;
    parts.push_back(fmt::format("closed form {:.12f} (err {:.1e})", q, std::abs(q - kCantorQbar)));

    const FixedPointEstimate fp = qbar_estimate(m, {12, 16, 20});
    const bool q_ok = std::abs(fp.qbar_proxy - kCantorQbar) <= 0.02;
    ok &= q_ok;
    parts.push_back(fmt::format("qbar proxy {:.4f} (|d| {:.4f}{})", fp.qbar_proxy, std::abs(fp.qbar_proxy - kCantorQbar),
                                q_ok ? "" : " > 0.02"));

    const auto xs = pow2_grid(20, 60, 2);
    const auto nr = NR_curve(m, xs);
    const SlopeEstimate s = slope_estimates(xs, nr);
    const bool nr_ok = std::abs(s.ls_slope - kCantorQbar) <= 0.02;
    ok &= nr_ok;
    parts.push_back(fmt::format("NR slope {:.4f}{}", s.ls_slope, nr_ok ? "" : " (> 0.02 off)"));

    const FEstimate f = F_estimate(m, {8, 10, 12, 14, 16, 18, 20}, default_alpha_grid());
    const bool f_ok = std::abs(f.lower - kCantorQbar) <= 0.03 && std::abs(f.upper - kCantorQbar) <= 0.03;
    ok &= f_ok;
    parts.push_back(fmt::format("F [{:.4f}, {:.4f}]{}", f.lower, f.upper, f_ok ? "" : " (> 0.03 off)"));

    CriterionResult r;
    r.passed = ok;
    r.detail = fmt::format("target {:.4f}; {}", kCantorQbar, fmt::join(parts, "; "));
    return r;
}

CriterionResult oscillating() {
    const MeasureSpec m = make_oscillating_cantor(0.5);
    const auto xs = pow2_grid(20, 60, 2);
    const SlopeEstimate up = slope_estimates(xs, NR_curve(m, xs));
    double low = -1, best_m = 0;
    for (double mm : {1.5, 2.0, 3.0}) {
        const SlopeEstimate s = slope_estimates(xs, NL_curve(m, xs, mm));
        if (s.lower > low) {
            low = s.lower;
            best_m = mm;
        }
    }
    const double want_up = 3.0 / 11, want_low = 3.0 / 13;
    CriterionResult r;
    r.passed = std::abs(up.upper - want_up) <= 0.02 && std::abs(low - want_low) <= 0.02;
    r.detail = fmt::format("s_upper {:.4f} (3/11 = {:.4f}), s_lower {:.4f} from m = {:g} (3/13 = {:.4f})", up.upper,
                           want_up, low, best_m, want_low);
    return r;
}

CriterionResult exponential_comb() {
    const double a = 1, b = 1;
    const MeasureSpec m = make_exponential_comb(a, b);
    const double c1 = (1 - std::exp(-b)) * (std::exp(a) - 1) * (std::exp(b) - 1) / (2 * (std::exp(b) - std::exp(-b)));
    const double c2 = (1 + std::exp(-b)) * std::exp(a) / 2;
    const Pencil p = assemble(m, Interval{0, 1, Closure::Closed}, Boundary::Dirichlet);
    int bad = 0;
    std::vector<std::string> row;
    for (int e = 3; e <= 12; ++e) {
        const double x = std::pow(10.0, e);
        const std::size_t n = count_leq(p, x);
        const double lo = std::floor(std::log(x * c1) / (a + b)), hi = 2 + std::log(c2 * x) / (a + b);
        const auto nd = static_cast<double>(n);
        bad += !(lo <= nd && nd <= hi);
        row.push_back(fmt::format("{}", n));
    }
    CriterionResult r;
    r.passed = bad == 0;
    r.detail = fmt::format("N(10^3..10^12) = {}; {} outside the bounds", fmt::join(row, ","), bad);
    return r;
}

CriterionResult powerlaw_comb() {
    const MeasureSpec m = make_powerlaw_comb(2, 1);
    const auto xs = pow2_grid(20, 60, 2);
    const CountingCurve c = counting_curve(m, Interval{0, 1, Closure::Closed}, Boundary::Dirichlet, xs);
    const SlopeEstimate s = slope_estimates(xs, c.counts);
    const double b0 = beta_n(m, 20, 0);
    CriterionResult r;
    r.passed = std::abs(s.lower - 0.25) <= 0.04 && std::abs(s.upper - 0.25) <= 0.04 && std::abs(b0 - 0.5) <= 0.05;
    r.detail = fmt::format("s in [{:.4f}, {:.4f}] (1/4), beta_20(0) = {:.4f} (1/2)", s.lower, s.upper, b0);
    return r;
}

CriterionResult rigidity_suite(unsigned workers) {
    ReportConfig cfg;
    cfg.node_budget = 4'000'000;
    cfg.workers = workers;
    const std::vector<std::string> names = {"lebesgue",
                                            "cantor",
                                            "salem",
                                            "example_5_2_oscillating",
                                            "example_5_2_zero",
                                            "comb_exponential(1,1)",
                                            "comb_powerlaw(2,1)"};
    std::vector<std::string> bad;
    double cantor_s = 0;
    for (const auto& n : names) {
        const DimReport rep = full_report(builtin_measure(n), cfg, n);
        for (const auto& v : rep.chain)
            if (!v.evaluated || !v.holds) bad.push_back(n + ": " + v.inequality);
        for (const auto& v : rep.sandwich)
            if (!v.evaluated || !v.holds) bad.push_back(n + ": " + v.inequality);
        if (n == "cantor") cantor_s = rep.s_upper.value;
    }
    const MeasureSpec atom = make_atomic({0.5}, {1.0});
    const double atom_s = full_report(atom, cfg, "atom").s_upper.value;
    const double sum_s = full_report(make_sum(make_cantor_measure(), atom), cfg, "cantor+atom").s_upper.value;
    const double want = std::max(cantor_s, atom_s);
    const bool sum_ok = std::abs(sum_s - want) <= 0.03;
    CriterionResult r;
    r.passed = bad.empty() && sum_ok;
    r.detail = fmt::format("{} built-ins, {} failed verdicts{}{}; s_upper(cantor+atom) = {:.4f} vs max = {:.4f}",
                           names.size(), bad.size(), bad.empty() ? "" : ": ", fmt::join(bad, ", "), sum_s, want);
    return r;
}

// quick checks

CriterionResult quick_cantor16() {
    // q_16 and beta_16(0) of the dyadic level-16 Cantor cells, from an exact rational recount
    constexpr double kQ16 = 0.407515, kBeta16 = 0.6922;
    const MeasureSpec m = make_cantor_measure();
    const LevelSum s(m, 16);
    const double q = fixed_point(s), b0 = s.beta(0);
    CriterionResult r;
    r.passed = std::abs(q - kQ16) <= 1e-5 && std::abs(b0 - kBeta16) <= 1e-3;
    r.detail = fmt::format("q_16 = {:.6f} (independent {:.6f}), beta_16(0) = {:.4f} ({:.4f})", q, kQ16, b0, kBeta16);
    return r;
}

struct Check {
    int id;
    const char* name;
    double limit;
    std::function<CriterionResult(const VerifyOptions&)> run;
};

const std::vector<Check>& full_checks() {
    static const std::vector<Check> c = {
        {1, "single-atom exactness", 1, [](const VerifyOptions& o) { return single_atom(o.seed, 100); }},
        {2, "oracle equivalence", 60, [](const VerifyOptions& o) { return oracle_equivalence(o.seed + 1); }},
        {3, "bracketing identities", 60, [](const VerifyOptions& o) { return bracketing(o.seed + 2); }},
        {4, "Weyl asymptotics for Lebesgue", 30, [](const VerifyOptions&) { return weyl_lebesgue(14); }},
        {5, "Cantor measure", 60, [](const VerifyOptions&) { return cantor(); }},
        {6, "oscillating spectral dimension", 120, [](const VerifyOptions&) { return oscillating(); }},
        {7, "exponential Dirac comb", 10, [](const VerifyOptions&) { return exponential_comb(); }},
        {8, "power-law Dirac comb", 60, [](const VerifyOptions&) { return powerlaw_comb(); }},
        {9, "inequality chain and rigidity", 120, [](const VerifyOptions& o) { return rigidity_suite(o.workers); }},
    };
    return c;
}

const std::vector<Check>& quick_checks() {
    static const std::vector<Check> c = {
        {1, "single atom", 1, [](const VerifyOptions& o) { return single_atom(o.seed, 100); }},
        {2, "Lebesgue level 10", 10, [](const VerifyOptions&) { return weyl_lebesgue(10); }},
        {3, "Cantor level 16", 10, [](const VerifyOptions&) { return quick_cantor16(); }},
    };
    return c;
}

CriterionResult run_check(const Check& c, const VerifyOptions& opt) {
    const auto t0 = Clock::now();
    CriterionResult r;
    try {
        r = c.run(opt);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.id = c.id;
    r.name = c.name;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    r.time_limit = c.limit;
    if (r.seconds > r.time_limit) {
        r.passed = false;
        r.detail += fmt::format("; took {:.1f} s, limit {:g} s", r.seconds, r.time_limit);
    }
    if (opt.on_result) opt.on_result(r);
    return r;
}

}  // namespace

int criterion_count() { return static_cast<int>(full_checks().size()); }

CriterionResult run_criterion(int id, const VerifyOptions& opt) {
    require(id >= 1 && id <= criterion_count(), "verify: no criterion " + std::to_string(id));
    return run_check(full_checks()[static_cast<std::size_t>(id - 1)], opt);
}

std::vector<CriterionResult> run_suite(Suite suite, const VerifyOptions& opt) {
    std::vector<CriterionResult> out;
    for (const auto& c : suite == Suite::Full ? full_checks() : quick_checks()) out.push_back(run_check(c, opt));
    return out;
}

std::string format_result(const CriterionResult& r) {
    return fmt::format("[{}] {}. {}: {} ({:.2f} s)", r.passed ? "PASS" : "FAIL", r.id, r.name, r.detail, r.seconds);
}

}  // namespace kf
