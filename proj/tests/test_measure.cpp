#include <doctest.h>

#include <cmath>
#include <random>

#include "kf/measure.hpp"
#include "kf/measure_io.hpp"

using namespace kf;

namespace {

double mass(const MeasureSpec& m, double lo, double hi, Closure c = Closure::LeftOpen) {
    const MassBounds b = interval_mass(m, Interval{lo, hi, c});
    CHECK(b.lower <= b.upper);
    return b.mid();
}

// Cantor function at j / 2^n from exact ternary digits (3j < 2^63 for n <= 61)
double cantor_F(std::uint64_t j, int n) {
    const std::uint64_t den = std::uint64_t{1} << n;
    if (j == den) return 1.0;
    double acc = 0, w = 0.5;
    for (int i = 0; i < 80 && j > 0; ++i) {
        j *= 3;
        const std::uint64_t d = j / den;
        j %= den;
        if (d == 1) return acc + w;
        if (d == 2) acc += w;
        w /= 2;
    }
    return acc;
}

}  // namespace

TEST_CASE("Lebesgue interval masses are lengths") {
    const MeasureSpec m = make_lebesgue();
    CHECK(m.total_mass() == doctest::Approx(1.0));
    CHECK(mass(m, 0.25, 0.75) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mass(m, 0.1, 0.1) == 0.0);
    const MassBounds c = cell_mass(m, DyadicCell{10, 7});
    CHECK(c.lower == doctest::Approx(std::ldexp(1.0, -10)).epsilon(1e-15));
}

TEST_CASE("atomic closures") {
    const MeasureSpec m = make_atomic({0.25, 0.5}, {1.0, 2.0});
    CHECK(mass(m, 0.25, 0.5, Closure::LeftOpen) == 2.0);
    CHECK(mass(m, 0.25, 0.5, Closure::Closed) == 3.0);
    CHECK(mass(m, 0.25, 0.5, Closure::Open) == 0.0);
    CHECK(m.has_atoms());
    CHECK_THROWS_AS(make_atomic({0.5, 0.25}, {1, 1}), InvalidInput);
    CHECK_THROWS_AS(make_atomic({0.5}, {-1}), InvalidInput);
}

TEST_CASE("Cantor masses match the Cantor function") {
    const MeasureSpec m = make_cantor_measure();
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> lev(1, 30);
    for (int t = 0; t < 200; ++t) {
        const int n = lev(rng);
        const std::uint64_t k = std::uniform_int_distribution<std::uint64_t>(1, std::uint64_t{1} << n)(rng);
        const DyadicCell c{n, k};
        const double want = cantor_F(k, n) - cantor_F(k - 1, n);
        const MassBounds b = cell_mass(m, c);
        // The built-in ratio is the double nearest 1/3. F is Hoelder with exponent log2/log3, so that
        // 1e-17 change in the maps moves F by up to about (1e-17)^0.63 ~ 2e-11.
        CHECK(b.lower <= want + 1e-10);
        CHECK(b.upper >= want - 1e-10);
        // additivity holds for the measure as built, to rounding
        const MassBounds l = cell_mass(m, c.left_child()), r = cell_mass(m, c.right_child());
        CHECK(l.lower + r.lower <= b.upper + 1e-15);
        CHECK(l.upper + r.upper >= b.lower - 1e-15);
    }
}

TEST_CASE("dyadic mass vector accounts for the total mass") {
    for (const char* name : {"cantor", "salem", "example_5_2_oscillating", "comb_exponential(1,1)"}) {
        const MeasureSpec m = builtin_measure(name);
        const auto v = dyadic_mass_vector(m, 12);
        double lo = 0, hi = 0;
        for (const auto& c : v) {
            lo += c.mass.lower;
            hi += c.mass.upper;
            CHECK(c.mass.upper > 0);
        }
        CHECK(lo <= m.total_mass() * (1 + 1e-12));
        CHECK(hi >= m.total_mass() * (1 - 1e-12));
    }
}

TEST_CASE("Salem cell masses are products of the weights") {
    const MeasureSpec m = make_salem(0.05);
    // cell index k-1 in binary: number of zero digits picks p, ones pick 1-p
    for (std::uint64_t k : {1ull, 2ull, 77ull, 1000ull, 4096ull}) {
        const int n = 12;
        const int ones = __builtin_popcountll(k - 1);
        const double want = std::pow(0.95, ones) * std::pow(0.05, n - ones);
        const MassBounds b = cell_mass(m, DyadicCell{n, k});
        CHECK(b.mid() == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("sum and shift") {
    const MeasureSpec a = make_atomic({0.3}, {2.0});
    const MeasureSpec s = make_sum(make_lebesgue(), a);
    CHECK(s.total_mass() == doctest::Approx(3.0));
    CHECK(mass(s, 0.25, 0.5) == doctest::Approx(2.25));
    const MeasureSpec sh = make_shifted(a, 0.1);
    CHECK(mass(sh, 0.35, 0.45) == doctest::Approx(2.0));
    CHECK(mass(sh, 0.25, 0.35) == 0.0);
}

TEST_CASE("discretisation keeps the mass") {
    const MeasureSpec d = discretize_to_atoms(make_cantor_measure(), 10);
    CHECK(d.as<Atomic>() != nullptr);
    CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("JSON round trip") {
    for (const char* name : {"cantor", "lebesgue", "example_5_2_oscillating", "comb_powerlaw(2,1,100)"}) {
        const MeasureSpec m = builtin_measure(name);
        const MeasureSpec back = measure_from_json(measure_to_json(m));
        CHECK(back.kind() == m.kind());
        CHECK(back.total_mass() == doctest::Approx(m.total_mass()));
        for (double lo : {0.0, 0.1, 0.37}) CHECK(mass(back, lo, lo + 0.3) == doctest::Approx(mass(m, lo, lo + 0.3)));
    }
}

TEST_CASE("built-in names") {
    CHECK(is_builtin_name("salem(0.1)"));
    CHECK_FALSE(is_builtin_name("nope"));
    CHECK_THROWS_AS(builtin_measure("salem(2)"), InvalidInput);
    CHECK_THROWS_AS(builtin_measure("cantor(1)"), InvalidInput);
    CHECK_THROWS_AS(builtin_measure("salem(abc)"), InvalidInput);
    CHECK_THROWS_AS(builtin_measure("unknown"), InvalidInput);
}
