#include "kf/string_spectrum.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

namespace kf {

const char* to_string(Boundary bc) { return bc == Boundary::Dirichlet ? "dirichlet" : "neumann"; }

StieltjesString make_string(const std::vector<double>& positions, const std::vector<double>& masses, double a,
                            double b) {
    require(!positions.empty(), "string: empty atom list");
    require(positions.size() == masses.size(), "string: positions and masses differ in length");
    require(std::isfinite(a) && std::isfinite(b) && a < b, "string: need a < b");
    StieltjesString s{a, b, positions, masses, {}};
    s.gaps.reserve(positions.size() + 1);
    double prev = a;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        require(masses[i] > 0 && std::isfinite(masses[i]), "string: masses must be positive");
        require(positions[i] > prev, i == 0 ? "string: atom on or outside the left boundary"
                                            : "string: positions must strictly increase");
        s.gaps.push_back(positions[i] - prev);
        prev = positions[i];
    }
    require(b > prev, "string: atom on or outside the right boundary");
    s.gaps.push_back(b - prev);
    return s;
}

Pencil assemble(const StieltjesString& s, Boundary bc) {
    const std::size_t n = s.positions.size();
    Pencil p;
    p.bc = bc;
    p.mass = s.masses;
    p.springs.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) p.springs[i] = 1.0 / s.gaps[i];
    if (bc == Boundary::Neumann) {
        // eigenfunctions are constant on the two end components
        p.springs.front() = 0.0;
        p.springs.back() = 0.0;
    }
    p.diag.resize(n);
    p.off.resize(n ? n - 1 : 0);
    for (std::size_t i = 0; i < n; ++i) p.diag[i] = p.springs[i] + p.springs[i + 1];
    for (std::size_t i = 0; i + 1 < n; ++i) p.off[i] = -p.springs[i + 1];
    return p;
}

Pencil assemble(const MeasureSpec& atomic, const Interval& I, Boundary bc) {
    const Atomic atoms = atoms_of(atomic);
    require(atomic.as<Atomic>() || (!atoms.positions.empty() && atoms.masses.size() == atoms.positions.size()),
            "assemble: measure has no atoms");
    // a purely atomic measure is required; sums and shifts of atomic parts are fine
    double atom_mass = 0;
    for (double w : atoms.masses) atom_mass += w;
    require(std::abs(atom_mass - atomic.total_mass()) <= 1e-12 * atomic.total_mass(),
            "assemble: measure is not purely atomic");
    return assemble(make_string(atoms.positions, atoms.masses, I.lo, I.hi), bc);
}

// Stationary form of the LDL^T recurrence: d_i = w_i + t_i with
//   t_1 = w_0 - x m_1,  t_i = w_{i-1} t_{i-1} / d_{i-1} - x m_i.
// For the Neumann pencil (w_0 = w_N = 0) every t_i is O(x), so the sign of the last pivot is accurate
// even for tiny x.
std::size_t inertia_count(const Pencil& p, double x) {
    const std::size_t n = p.size();
    const auto& w = p.springs;
    std::size_t neg = 0;
    double t = w[0] - x * p.mass[0];
    for (std::size_t i = 0;; ++i) {
        double d = w[i + 1] + t;
        if (d == 0.0) d = -DBL_MIN * std::max(1.0, std::abs(w[i + 1]));
        if (d < 0) ++neg;
        if (i + 1 == n) break;
        t = w[i + 1] * (t / d) - x * p.mass[i + 1];
        if (!std::isfinite(t)) t = -DBL_MAX;
    }
    return neg;
}

CertifiedCount count_leq_certified(const Pencil& p, double x, double delta) {
    require(x >= 0 && std::isfinite(x), "count_leq: x must be finite and nonnegative");
    if (x == 0.0) return {inertia_count(p, 0.0), true};
    const std::size_t up = inertia_count(p, x * (1 + delta));
    const std::size_t down = inertia_count(p, x * (1 - delta));
    return {up, up == down};
}

std::size_t count_leq(const Pencil& p, double x) { return count_leq_certified(p, x).count; }

double eigenvalue_k(const Pencil& p, std::size_t k) {
    require(k >= 1 && k <= p.size(), "eigenvalue_k: k out of range");
    if (inertia_count(p, 0.0) >= k) return 0.0;
    // Gershgorin bound for M^{-1} K
    double hi = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double r = std::abs(p.diag[i]);
        if (i > 0) r += std::abs(p.off[i - 1]);
        if (i + 1 < p.size()) r += std::abs(p.off[i]);
        hi = std::max(hi, r / p.mass[i]);
    }
    hi *= 1.0 + 1e-12;
    double lo = 0;
    // invariant: count(lo) < k <= count(hi)
    for (int it = 0; it < 5000; ++it) {
        const double mid = (lo > 0 && hi / lo > 4) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (inertia_count(p, mid) >= k) hi = mid;
        else lo = mid;
        if (lo == 0 && hi < DBL_MIN) break;
    }
    return hi;
}

CountingCurve counting_curve(const MeasureSpec& m, const Interval& I, Boundary bc, const std::vector<double>& x_grid,
                             std::optional<int> level) {
    CountingCurve c;
    c.bc = bc;
    c.x = x_grid;
    if (x_grid.empty()) {
        c.provenance = m.as<Atomic>() ? "exact-atomic" : "discretized";
        return c;
    }
    Pencil p;
    if (m.as<Atomic>()) {
        p = assemble(m, I, bc);
        c.provenance = "exact-atomic";
    } else {
        require(level.has_value(), "counting_curve: non-atomic measure needs a discretisation level");
        p = assemble(discretize_to_atoms(m, *level), I, bc);
        c.provenance = "discretized(" + std::to_string(*level) + ")";
    }
    for (double x : x_grid) {
        const auto r = count_leq_certified(p, x);
        c.counts.push_back(r.count);
        c.near_eigenvalue.push_back(!r.certified);
    }
    return c;
}

std::size_t piece_count(const Atomic& atoms, double lo, double hi, double x) {
    auto first = std::upper_bound(atoms.positions.begin(), atoms.positions.end(), lo);
    auto last = std::lower_bound(first, atoms.positions.end(), hi);
    if (first == last) return 0;
    const auto i0 = static_cast<std::size_t>(first - atoms.positions.begin());
    const auto i1 = static_cast<std::size_t>(last - atoms.positions.begin());
    std::vector<double> pos(atoms.positions.begin() + i0, atoms.positions.begin() + i1);
    std::vector<double> mass(atoms.masses.begin() + i0, atoms.masses.begin() + i1);
    return count_leq(assemble(make_string(pos, mass, lo, hi), Boundary::Dirichlet), x);
}

BracketingReport bracketing_check(const MeasureSpec& atomic, const Interval& I, std::vector<double> cuts, double x) {
    const Atomic atoms = atoms_of(atomic);
    std::sort(cuts.begin(), cuts.end());
    for (double c : cuts) {
        require(c > I.lo && c < I.hi, "bracketing_check: cut points must lie inside the interval");
        require(!std::binary_search(atoms.positions.begin(), atoms.positions.end(), c),
                "bracketing_check: cut point hits an atom");
    }
    require(std::adjacent_find(cuts.begin(), cuts.end()) == cuts.end(), "bracketing_check: repeated cut point");
    BracketingReport r;
    r.cuts = cuts.size();
    r.n_dirichlet = count_leq(assemble(atomic, I, Boundary::Dirichlet), x);
    r.n_neumann = count_leq(assemble(atomic, I, Boundary::Neumann), x);
    double lo = I.lo;
    cuts.push_back(I.hi);
    for (double c : cuts) {
        r.sum_sub += piece_count(atoms, lo, c, x);
        lo = c;
    }
    r.subadditive_ok = r.sum_sub <= r.n_dirichlet && r.n_dirichlet <= r.sum_sub + r.cuts;
    r.neumann_ok = r.n_neumann >= r.n_dirichlet && r.n_neumann - r.n_dirichlet <= 2;
    return r;
}

}  // namespace kf
