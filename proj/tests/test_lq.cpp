#include <doctest.h>

#include <cmath>

#include "kf/lq.hpp"
#include "kf/measure.hpp"
#include "kf/measure_io.hpp"

using namespace kf;

namespace {

// beta of the binary Salem measure: the level-n sum is (p^q + (1-p)^q)^n exactly
double salem_beta(double p, double q) { return std::log2(std::pow(p, q) + std::pow(1 - p, q)); }

double bisect(double lo, double hi, auto f) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("Lebesgue has beta_n(q) = 1 - q") {
    const MeasureSpec m = make_lebesgue();
    for (int n : {4, 10, 16})
        for (double q : {-1.0, 0.0, 0.5, 1.0, 2.5}) CHECK(beta_n(m, n, q) == doctest::Approx(1 - q).epsilon(1e-12));
    CHECK(fixed_point_qn(m, 10) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("Salem beta_n against the closed form") {
    const double p = 0.05;
    const MeasureSpec m = make_salem(p);
    for (int n : {8, 14, 18})
        for (double q : {0.0, 0.25, 0.5, 1.0, 2.0})
            CHECK(beta_n(m, n, q) == doctest::Approx(salem_beta(p, q)).epsilon(1e-9));
    const double qbar = bisect(0, 1, [&](double q) { return salem_beta(p, q) - q; });
    CHECK(fixed_point_qn(m, 18) == doctest::Approx(qbar).epsilon(1e-8));
}

TEST_CASE("Salem derivative at one is the entropy") {
    const double p = 0.05;
    const MeasureSpec m = make_salem(p);
    const auto c = beta_curve(m, 14, default_q_grid());
    const DerivativesAtOne d = derivatives_at_one({c});
    const double entropy = -(p * std::log2(p) + (1 - p) * std::log2(1 - p));
    CHECK(d.delta_upper == doctest::Approx(entropy).epsilon(1e-5));
    CHECK(d.delta_lower == doctest::Approx(entropy).epsilon(1e-5));
}

TEST_CASE("Cantor dyadic fixed points match an exact rational recount") {
    const MeasureSpec m = make_cantor_measure();
    CHECK(fixed_point_qn(m, 12) == doctest::Approx(0.413118).epsilon(2e-6));
    CHECK(fixed_point_qn(m, 16) == doctest::Approx(0.407515).epsilon(2e-6));
    CHECK(fixed_point_qn(m, 20) == doctest::Approx(0.403267).epsilon(2e-6));
    CHECK(beta_n(m, 12, 0) == doctest::Approx(0.7083205).epsilon(1e-6));
    CHECK(beta_n(m, 16, 0) == doctest::Approx(0.6922174).epsilon(1e-6));
    const FixedPointEstimate e = qbar_estimate(m, {12, 16, 20});
    CHECK(e.qbar_proxy == doctest::Approx(0.407515).epsilon(2e-6));
    CHECK(e.qlow_proxy == doctest::Approx(0.403267).epsilon(2e-6));
    CHECK_FALSE(e.exceeds_half);
}

TEST_CASE("self-similar closed forms") {
    const MeasureSpec cm = make_cantor_measure(), sm = make_salem(0.05);
    const SelfSimilar& c = *cm.as<SelfSimilar>();
    CHECK(satisfies_osc(c));
    const double d = std::log(2.0) / std::log(3.0);
    for (double q : {-1.0, 0.0, 0.5, 2.0}) CHECK(self_similar_beta(c, q) == doctest::Approx((1 - q) * d).epsilon(1e-10));
    CHECK(std::abs(self_similar_qbar(c) - std::log(2.0) / std::log(6.0)) <= 1e-10);
    const SelfSimilar& s = *sm.as<SelfSimilar>();
    for (double q : {0.0, 0.3, 2.0}) CHECK(self_similar_beta(s, q) == doctest::Approx(salem_beta(0.05, q)).epsilon(1e-10));
}

TEST_CASE("generation scale recovers the Cantor box dimension") {
    LqOptions opt;
    opt.scale = Scale::Generation;
    const MeasureSpec m = make_cantor_measure();
    CHECK(beta_n(m, 12, 0, opt) == doctest::Approx(std::log(2.0) / std::log(3.0)).epsilon(1e-12));
    CHECK(fixed_point_qn(m, 12, opt) == doctest::Approx(std::log(2.0) / std::log(6.0)).epsilon(1e-9));
    CHECK_THROWS_AS(beta_n(make_lebesgue(), 8, 0, opt), InvalidInput);
}

TEST_CASE("beta_n is convex, nonincreasing and vanishes at one") {
    for (const char* name : {"cantor", "salem", "example_5_2_oscillating", "example_5_2_zero", "comb_powerlaw(2,1)"}) {
        const MeasureSpec m = builtin_measure(name);
        const LevelSum s(m, 14);
        CHECK(std::abs(s.beta(1)) <= 1e-9);
        double prev = s.beta(0);
        for (int i = 1; i <= 30; ++i) {
            const double q = i * 0.1;
            const double b = s.beta(q);
            CHECK(b <= prev + 1e-12);
            const double mid = s.beta(q - 0.05);
            CHECK(mid <= 0.5 * (b + prev) + 1e-9);
            prev = b;
        }
    }
}

TEST_CASE("beta_curve and its grid") {
    const auto g = default_q_grid();
    CHECK(g.front() == -1.0);
    CHECK(g.back() == 3.0);
    CHECK(std::is_sorted(g.begin(), g.end()));
    const auto c = beta_curve(make_cantor_measure(), 10, g);
    CHECK(c.values.size() == c.q_grid.size());
    CHECK(c.at(0) == doctest::Approx(beta_n(make_cantor_measure(), 10, 0)));
    CHECK_THROWS_AS(c.at(0.123456), InvalidInput);
}

TEST_CASE("Legendre transform of a line") {
    const auto c = beta_curve(make_lebesgue(), 8, default_q_grid());
    // min over q in [-1, 3] of (1 - q) + alpha q
    CHECK(legendre(c, 0.5) == doctest::Approx(-0.5));
    CHECK(legendre(c, 1.0) == doctest::Approx(1.0));
    CHECK(legendre(c, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("tail range") {
    CHECK(tail_range(7, 0.5) == std::pair<std::size_t, std::size_t>{3, 7});
    CHECK(tail_range(3, 0.5) == std::pair<std::size_t, std::size_t>{1, 3});
    CHECK(tail_range(1, 0.5) == std::pair<std::size_t, std::size_t>{0, 1});
}

TEST_CASE("oscillating fixed points alternate between 3/11 and 3/13") {
    LqOptions opt;
    opt.scale = Scale::Generation;
    std::vector<int> levels;
    for (int n = 8; n <= 8192; n *= 2) levels.push_back(n);
    const FixedPointEstimate e = qbar_estimate(make_oscillating_cantor(0.5), levels, opt);
    CHECK(std::abs(e.qbar_proxy - 3.0 / 11) <= 0.03);
    CHECK(std::abs(e.qlow_proxy - 3.0 / 13) <= 0.03);
    CHECK(e.qlow_proxy < e.qbar_proxy - 0.03);
}

TEST_CASE("fixed point proxies of simple measures") {
    const FixedPointEstimate l = qbar_estimate(make_lebesgue(), {4, 6, 8, 10, 12, 14, 16});
    CHECK(std::abs(l.qbar_proxy - 0.5) <= 1e-9);
    CHECK(std::abs(l.qlow_proxy - 0.5) <= 1e-9);
    CHECK(qbar_estimate(make_atomic({0.3}, {1.0}), {4, 8}).qbar_proxy == doctest::Approx(0.0));
}
