#include <doctest.h>

#include <cmath>

#include "kf/measure.hpp"
#include "kf/measure_io.hpp"
#include "kf/partition.hpp"

using namespace kf;

TEST_CASE("Lebesgue stopping partitions are uniform") {
    const MeasureSpec m = make_lebesgue();
    // nu Lambda = 4^-n on level n, so the leaves sit at the first n with 4^-n < 2^-k
    for (int k = 2; k <= 40; k += 3) CHECK(NR_upper(m, std::ldexp(1.0, k)) == std::size_t{1} << (k / 2 + 1));
}

TEST_CASE("Cantor NR matches an exact rational recount") {
    const MeasureSpec m = make_cantor_measure();
    const std::vector<double> xs{std::ldexp(1.0, 12), std::ldexp(1.0, 16), std::ldexp(1.0, 20), std::ldexp(1.0, 24),
                                 std::ldexp(1.0, 28)};
    const std::vector<std::size_t> want{56, 154, 466, 1308, 3834};
    CHECK(NR_curve(m, xs) == want);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(NR_upper(m, xs[i]) == want[i]);
}

TEST_CASE("stopping partition leaves satisfy the stopping rule") {
    for (const char* name : {"cantor", "salem", "example_5_2_oscillating"}) {
        const MeasureSpec m = builtin_measure(name);
        const double t = std::ldexp(1.0, -18);
        const StoppingPartition p = stopping_partition(m, t);
        CHECK(p.cardinality == p.cells.size());
        long double covered = 0;
        for (std::size_t i = 0; i < p.cells.size(); ++i) {
            const DyadicCell& c = p.cells[i];
            const MassBounds b = cell_mass(m, c);
            CHECK(b.upper > 0);
            CHECK(b.lower * static_cast<double>(c.length()) < t);
            if (c.level > 0) CHECK(cell_mass(m, c.parent()).upper * static_cast<double>(c.parent().length()) >= t);
            if (i > 0) CHECK(p.cells[i - 1].hi() <= c.lo());
            covered += c.length();
        }
        CHECK(covered <= 1.0L);
    }
}

TEST_CASE("NR is monotone in x") {
    const auto xs = std::vector<double>{1e2, 1e4, 1e6, 1e8, 1e10};
    for (const char* name : {"salem", "example_5_2_zero", "comb_exponential(1,1)"}) {
        const auto c = NR_curve(builtin_measure(name), xs);
        for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] >= c[i - 1]);
    }
}

TEST_CASE("atoms on dyadic cut points") {
    const MeasureSpec m = make_atomic({0.5}, {1.0});
    CHECK_THROWS_AS(NR_upper(m, 100), InvalidInput);
    PartitionOptions opt;
    opt.allow_atom_cuts = true;
    // the only positive-mass leaf is (1/2 - 2^-7, 1/2]
    CHECK(NR_upper(m, 100, opt) == 1);
    const MeasureSpec off = make_atomic({0.3}, {1.0});
    CHECK_NOTHROW(NR_upper(off, 100));
}

TEST_CASE("packings are certified and below NR") {
    for (const char* name : {"lebesgue", "cantor", "example_5_2_oscillating"}) {
        const MeasureSpec m = builtin_measure(name);
        for (double mm : {1.5, 2.0, 3.0}) {
            const double x = std::ldexp(1.0, 20);
            const PackingResult p = NL_m_lower(m, x, mm);
            CHECK(p.count >= 1);
            CHECK(p.witness.size() == p.count);
            CHECK(verify_packing(m, p));
            CHECK(p.count <= NR_upper(m, x));
        }
    }
}

TEST_CASE("NL_curve equals the single-x cell packing") {
    const MeasureSpec m = make_cantor_measure();
    const std::vector<double> xs{std::ldexp(1.0, 20), std::ldexp(1.0, 26), std::ldexp(1.0, 32)};
    const auto c = NL_curve(m, xs, 2.0);
    PackingOptions opt;
    opt.coarse_max_level = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(c[i] == NL_m_lower(m, xs[i], 2.0, opt).count);
}

TEST_CASE("Lebesgue packing counts from the threshold algebra") {
    // a cell of length L = 2^-k is a candidate iff L^2 >= 4/(x(m-1)); padded by (m-1)L/2 per side it
    // must stay inside [0,1], so aligned cells j = 1, 1 + s, ... with spacing s = m for
    // integer m fit while j + m/2 + 1/2 <= 2^k
    auto expected = [](double x, int mm) {
        int k = 0;
        while (std::pow(std::ldexp(1.0, -(k + 1)), 2) >= 4 / (x * (mm - 1))) ++k;
        const double L = std::ldexp(1.0, -k), pad = (mm - 1) * L / 2;
        std::size_t count = 0;
        // greedy left to right over aligned cells
        double right = 0;
        for (std::uint64_t j = 0; j < (std::uint64_t{1} << k); ++j) {
            const double lo = static_cast<double>(j) * L - pad, hi = static_cast<double>(j + 1) * L + pad;
            if (lo >= right && lo >= 0 && hi <= 1) {
                ++count;
                right = hi;
            }
        }
        return count;
    };
    const std::vector<double> xs{3 * std::ldexp(1.0, 20), 3 * std::ldexp(1.0, 25), 3 * std::ldexp(1.0, 30)};
    for (int mm : {2, 3}) {
        const auto c = NL_curve(make_lebesgue(), xs, mm);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            CHECK(c[i] == expected(xs[i], mm));
            if (mm == 3) CHECK(static_cast<double>(c[i]) >= std::floor(std::sqrt(xs[i]) / (6 * std::sqrt(2.0))) - 1);
        }
    }
    CHECK(NL_curve(make_lebesgue(), {std::ldexp(1.0, 20)}, 2.0)[0] == 255);
}

TEST_CASE("gamma_n partitions") {
    const MeasureSpec m = make_lebesgue();
    const GammaResult g = gamma_n(m, 16, GammaMode::Dyadic);
    CHECK(g.cells == 16);
    CHECK(g.bound == doctest::Approx(1.0 / 256));
    CHECK(g.partition.size() == 16);
    double last = 1;
    for (std::size_t n : {1, 4, 32, 100}) {
        const GammaResult r = gamma_n(make_cantor_measure(), n, GammaMode::Bisection);
        CHECK(r.cells == n);
        CHECK(r.bound <= last);
        last = r.bound;
    }
}

TEST_CASE("coarse counts") {
    const CoarseTable t = coarse_counts(make_lebesgue(), 10, {0.5, 0.99, 1.0, 2.0});
    CHECK(t.counts == std::vector<std::size_t>{0, 0, 1024, 1024});
    const CoarseTable c = coarse_counts(make_cantor_measure(), 14, default_alpha_grid());
    for (std::size_t i = 1; i < c.counts.size(); ++i) CHECK(c.counts[i] >= c.counts[i - 1]);
}

TEST_CASE("F proxies for Cantor bracket the fixed point") {
    const FEstimate f = F_estimate(make_cantor_measure(), {8, 10, 12, 14, 16}, default_alpha_grid());
    CHECK(f.lower <= f.upper);
    CHECK(std::abs(f.lower - std::log(2.0) / std::log(6.0)) <= 0.03);
    CHECK(std::abs(f.upper - std::log(2.0) / std::log(6.0)) <= 0.03);
}
