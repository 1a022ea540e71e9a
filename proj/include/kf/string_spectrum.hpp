#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "kf/measure.hpp"

namespace kf {

enum class Boundary { Dirichlet, Neumann };

const char* to_string(Boundary bc);

struct StieltjesString {
    double a = 0.0, b = 1.0;
    std::vector<double> positions;
    std::vector<double> masses;
    std::vector<double> gaps;  // N + 1 entries: x_1 - a, x_2 - x_1, ..., b - x_N
};

// Generalized eigenproblem K f = lambda M f with K symmetric tridiagonal and M diagonal.
struct Pencil {
    std::vector<double> diag;
    std::vector<double> off;     // size N - 1
    std::vector<double> mass;
    // spring constants w_0 .. w_N (w_i = 1/gap_i), with the end springs zeroed under Neumann
    std::vector<double> springs;
    Boundary bc = Boundary::Dirichlet;

    std::size_t size() const { return mass.size(); }
};

StieltjesString make_string(const std::vector<double>& positions, const std::vector<double>& masses, double a,
                            double b);
Pencil assemble(const StieltjesString& s, Boundary bc);
// Every atom of `atomic` must lie strictly inside I.
Pencil assemble(const MeasureSpec& atomic, const Interval& I, Boundary bc);

// Number of negative pivots of K - x M in the LDL^T factorisation (zero pivots count as negative).
std::size_t inertia_count(const Pencil& p, double x);

struct CertifiedCount {
    std::size_t count = 0;
    bool certified = true;  // false when x lies within relative delta of an eigenvalue
};

// Number of eigenvalues <= x.
std::size_t count_leq(const Pencil& p, double x);
CertifiedCount count_leq_certified(const Pencil& p, double x, double delta = 1e-12);

// k-th eigenvalue (1-based), resolved to full double precision by bisection on the inertia count.
double eigenvalue_k(const Pencil& p, std::size_t k);

struct CountingCurve {
    std::vector<double> x;
    std::vector<std::size_t> counts;
    std::vector<bool> near_eigenvalue;
    Boundary bc = Boundary::Dirichlet;
    std::string provenance;  // "exact-atomic" or "discretized(level)"
};

// Atomic measures are counted exactly; anything else requires a discretisation level.
CountingCurve counting_curve(const MeasureSpec& m, const Interval& I, Boundary bc, const std::vector<double>& x_grid,
                             std::optional<int> level = std::nullopt);

struct BracketingReport {
    std::size_t n_dirichlet = 0;  // N(x)
    std::size_t n_neumann = 0;    // N^N(x)
    std::size_t sum_sub = 0;      // sum of Dirichlet counts on the pieces
    std::size_t cuts = 0;         // interior cut points
    bool subadditive_ok = false;  // sum_sub <= N <= sum_sub + cuts
    bool neumann_ok = false;      // 0 <= N^N - N <= 2
    bool ok() const { return subadditive_ok && neumann_ok; }
};

// Counts on a ν-partition of I given by interior cut points (which must avoid atoms).
BracketingReport bracketing_check(const MeasureSpec& atomic, const Interval& I, std::vector<double> cuts, double x);

// Dirichlet count of the atoms of `atoms` lying in (lo, hi); zero if there are none.
std::size_t piece_count(const Atomic& atoms, double lo, double hi, double x);

}  // namespace kf
