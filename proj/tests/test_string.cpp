#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "kf/measure.hpp"
#include "kf/measure_io.hpp"
#include "kf/string_spectrum.hpp"

using namespace kf;

namespace {

Eigen::VectorXd oracle(const Pencil& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n), M = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = p.diag[static_cast<std::size_t>(i)];
        M(i, i) = p.mass[static_cast<std::size_t>(i)];
        if (i + 1 < n) K(i, i + 1) = K(i + 1, i) = p.off[static_cast<std::size_t>(i)];
    }
    return Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd>(K, M, Eigen::EigenvaluesOnly).eigenvalues();
}

StieltjesString random_string(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.01, 0.99), w(0.1, 5);
    std::set<double> s;
    while (s.size() < n) s.insert(u(rng));
    std::vector<double> m(n);
    for (auto& v : m) v = w(rng);
    return make_string({s.begin(), s.end()}, m, 0, 1);
}

}  // namespace

TEST_CASE("single atom") {
    const double z = 0.3, p = 2.0, a = 0.1, b = 0.4;
    const Pencil d = assemble(make_string({z}, {p}, z - a, z + b), Boundary::Dirichlet);
    CHECK(eigenvalue_k(d, 1) == doctest::Approx((a + b) / (p * a * b)).epsilon(1e-13));
    const Pencil n = assemble(make_string({z}, {p}, z - a, z + b), Boundary::Neumann);
    CHECK(std::abs(eigenvalue_k(n, 1)) <= 1e-12);
}

TEST_CASE("pencil layout") {
    const auto s = make_string({0.25, 0.5}, {1.0, 2.0}, 0, 1);
    REQUIRE(s.gaps.size() == 3);
    const Pencil d = assemble(s, Boundary::Dirichlet);
    CHECK(d.diag[0] == doctest::Approx(4 + 4));
    CHECK(d.diag[1] == doctest::Approx(4 + 2));
    CHECK(d.off[0] == doctest::Approx(-4));
    const Pencil n = assemble(s, Boundary::Neumann);
    CHECK(n.diag[0] == doctest::Approx(4));
    CHECK(n.diag[1] == doctest::Approx(4));
    CHECK_THROWS_AS(make_string({0.5, 0.25}, {1, 1}, 0, 1), InvalidInput);
    CHECK_THROWS_AS(make_string({0.0}, {1}, 0, 1), InvalidInput);
}

TEST_CASE("two symmetric equal atoms") {
    const Pencil p = assemble(make_string({1.0 / 3, 2.0 / 3}, {1.0, 1.0}, 0, 1), Boundary::Dirichlet);
    // K = [[6,-3],[-3,6]]: eigenvalues 3 and 9
    CHECK(eigenvalue_k(p, 1) == doctest::Approx(3.0));
    CHECK(eigenvalue_k(p, 2) == doctest::Approx(9.0));
    CHECK(count_leq(p, 2.999) == 0);
    CHECK(count_leq(p, 3.001) == 1);
    CHECK(count_leq(p, 1e6) == 2);
}

TEST_CASE("count_leq agrees with the dense oracle") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        const Boundary bc = t % 2 ? Boundary::Neumann : Boundary::Dirichlet;
        const Pencil p = assemble(random_string(rng, n), bc);
        const Eigen::VectorXd ev = oracle(p);
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            // just below and just above each eigenvalue
            if (ev(i) > 1e-8) {
                CHECK(count_leq(p, ev(i) * (1 - 1e-7)) == static_cast<std::size_t>(i));
                CHECK(count_leq(p, ev(i) * (1 + 1e-7)) == static_cast<std::size_t>(i + 1));
            }
            const double e = eigenvalue_k(p, static_cast<std::size_t>(i + 1));
            CHECK(std::abs(e - ev(i)) <= 1e-9 * std::max(1.0, std::abs(ev(i))));
        }
    }
}

TEST_CASE("counting is monotone and bounded by the size") {
    std::mt19937_64 rng(5);
    const Pencil p = assemble(random_string(rng, 30), Boundary::Dirichlet);
    std::size_t last = 0;
    for (double x = 0.1; x < 1e8; x *= 1.7) {
        const std::size_t c = count_leq(p, x);
        CHECK(c >= last);
        CHECK(c <= p.size());
        last = c;
    }
    CHECK_THROWS_AS(count_leq(p, -1), InvalidInput);
}

TEST_CASE("certified counts flag exact eigenvalues") {
    const Pencil p = assemble(make_string({1.0 / 3, 2.0 / 3}, {1.0, 1.0}, 0, 1), Boundary::Dirichlet);
    CHECK_FALSE(count_leq_certified(p, 3.0).certified);
    CHECK(count_leq_certified(p, 4.0).certified);
}

TEST_CASE("Neumann has a zero eigenvalue and differs by at most two") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto s = random_string(rng, std::uniform_int_distribution<std::size_t>(1, 30)(rng));
        const Pencil d = assemble(s, Boundary::Dirichlet), n = assemble(s, Boundary::Neumann);
        CHECK(count_leq(n, 1e-9) >= 1);
        for (double x : {1.0, 10.0, 100.0, 1e4}) {
            const auto cd = count_leq(d, x), cn = count_leq(n, x);
            CHECK(cn >= cd);
            CHECK(cn - cd <= 2);
        }
    }
}

TEST_CASE("bracketing on random atomic measures") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
        std::set<double> s;
        std::uniform_real_distribution<double> u(0.01, 0.99);
        while (s.size() < n) s.insert(u(rng));
        const std::vector<double> pos(s.begin(), s.end());
        const MeasureSpec m = make_atomic(pos, std::vector<double>(n, 1.0 / static_cast<double>(n)));
        std::vector<double> cuts;
        for (std::size_t i = 0; i + 1 < pos.size(); i += 3) cuts.push_back(0.5 * (pos[i] + pos[i + 1]));
        for (double x : {5.0, 50.0, 500.0, 5e4}) {
            const auto r = bracketing_check(m, Interval{0, 1, Closure::Closed}, cuts, x);
            CHECK(r.ok());
            CHECK(r.cuts == cuts.size());
        }
    }
    const MeasureSpec m = make_atomic({0.25, 0.5}, {1, 1});
    CHECK_THROWS_AS(bracketing_check(m, Interval{0, 1, Closure::Closed}, {0.5}, 10), InvalidInput);
}

TEST_CASE("Weyl law for discretised Lebesgue") {
    const MeasureSpec m = discretize_to_atoms(make_lebesgue(), 12);
    const auto c = counting_curve(m, Interval{0, 1, Closure::Closed}, Boundary::Dirichlet, {1e3, 1e4, 1e5});
    for (std::size_t i = 0; i < c.x.size(); ++i)
        CHECK(static_cast<double>(c.counts[i]) * M_PI / std::sqrt(c.x[i]) == doctest::Approx(1.0).epsilon(0.1));
    CHECK(c.provenance == "exact-atomic");
    const auto d = counting_curve(make_lebesgue(), Interval{0, 1, Closure::Closed}, Boundary::Dirichlet, {1e4}, 12);
    CHECK(d.counts[0] == c.counts[1]);
    CHECK_THROWS_AS(counting_curve(make_lebesgue(), Interval{0, 1, Closure::Closed}, Boundary::Dirichlet, {1e4}),
                    InvalidInput);
}

TEST_CASE("exponential comb counts grow like log x / 2") {
    const MeasureSpec m = make_exponential_comb(1, 1);
    const Pencil p = assemble(m, Interval{0, 1, Closure::Closed}, Boundary::Dirichlet);
    // counts between the comb's explicit two-sided bounds, frozen at these x
    CHECK(count_leq(p, 1e3) == 3);
    CHECK(count_leq(p, 1e6) == 6);
    CHECK(count_leq(p, 1e12) == 13);
}
