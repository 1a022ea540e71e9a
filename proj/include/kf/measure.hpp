#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "kf/error.hpp"

namespace kf {

inline constexpr int kMaxLevel = 60;

// 2^-level, exact in long double
inline long double dyadic_length(int level) {
    static const auto table = [] {
        std::array<long double, 65> t{};
        long double v = 1.0L;
        for (auto& x : t) {
            x = v;
            v *= 0.5L;
        }
        return t;
    }();
    return table[static_cast<std::size_t>(level)];
}

// (lo,hi], [lo,hi] or (lo,hi)
enum class Closure { LeftOpen, Closed, Open };

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    Closure closure = Closure::LeftOpen;
};

// A_k^n = ((k-1) 2^-n, k 2^-n], 1 <= k <= 2^n. Endpoints are exact in long double up to level 63.
struct DyadicCell {
    int level = 0;
    std::uint64_t index = 1;

    long double lo() const { return static_cast<long double>(index - 1) * dyadic_length(level); }
    long double hi() const { return static_cast<long double>(index) * dyadic_length(level); }
    long double length() const { return dyadic_length(level); }
    DyadicCell left_child() const { return {level + 1, 2 * index - 1}; }
    DyadicCell right_child() const { return {level + 1, 2 * index}; }
    DyadicCell parent() const { return {level - 1, (index + 1) / 2}; }
    bool operator==(const DyadicCell&) const = default;
};

struct MassBounds {
    double lower = 0.0;
    double upper = 0.0;
    bool budget_exhausted = false;

    double mid() const { return 0.5 * (lower + upper); }
    double width() const { return upper - lower; }
    bool exact() const { return lower == upper; }
};

MassBounds operator+(const MassBounds& a, const MassBounds& b);

struct Atomic {
    std::vector<double> positions;  // strictly increasing, inside (0,1)
    std::vector<double> masses;     // positive
};

// density d_i on (b_{i-1}, b_i]
struct PiecewiseDensity {
    std::vector<double> breakpoints;
    std::vector<double> densities;
};

// T_i(x) = ratios[i] * x + offsets[i]
struct SelfSimilar {
    std::vector<double> ratios;
    std::vector<double> offsets;
    std::vector<double> weights;
    bool overlap_allowed = false;
};

// S1(x) = r1 x + c1, S2(x) = r2 x + c2 on [0,1]; c1 = 0 and c2 = 1 - r2 are enforced.
struct CantorSystem {
    double r1 = 0.0, r2 = 0.0, c1 = 0.0, c2 = 0.0, p1 = 0.5, p2 = 0.5;
};

struct Environment {
    enum class Kind {
        Explicit,  // prefix then cycle repeated forever
        Block,     // systems[0] on 2^{2l} <= i <= 2^{2l+1}, systems[1] on 2^{2l+1} < i <= 2^{2l+2}
        Indexed    // generation i uses ratio base^-i for both maps
    };
    Kind kind = Kind::Explicit;
    std::vector<std::size_t> prefix;
    std::vector<std::size_t> cycle;
    double base = 4.0;  // Indexed only
    double p1 = 0.5;    // Indexed only
};

struct HomogeneousCantor {
    std::vector<CantorSystem> systems;
    Environment environment;

    // generation is 1-based
    CantorSystem system_at(std::uint64_t generation) const;
    bool equal_ratios() const;
};

class MeasureSpec;
using MeasurePtr = std::shared_ptr<const MeasureSpec>;

struct Sum {
    MeasurePtr left;
    MeasurePtr right;
};

// pushforward under x -> scale * x + offset
struct Shifted {
    MeasurePtr inner;
    double offset = 0.0;
    double scale = 1.0;
};

class MeasureSpec {
public:
    using Node = std::variant<Atomic, PiecewiseDensity, SelfSimilar, HomogeneousCantor, Sum, Shifted>;

    // Validates the node; throws InvalidInput on violation.
    explicit MeasureSpec(Node node);

    const Node& node() const { return node_; }
    double total_mass() const { return total_; }
    std::string kind() const;

    template <class T>
    const T* as() const { return std::get_if<T>(&node_); }

    // Smallest interval [a,b] containing the support (conservative for IFS types).
    std::pair<double, double> hull() const { return hull_; }
    bool has_atoms() const { return has_atoms_; }
    bool has_overlapping_ifs() const { return has_overlap_; }

private:
    Node node_;
    double total_ = 0.0;
    std::pair<double, double> hull_{0.0, 1.0};
    bool has_atoms_ = false;
    bool has_overlap_ = false;
};

struct QueryOptions {
    double tol = 1e-13;
    std::size_t node_budget = 10'000'000;
    // Distance (in ambient coordinates) under which a point is snapped onto a cylinder endpoint.
    long double snap = 0.0L;
};

MassBounds interval_mass(const MeasureSpec& m, const Interval& I, double tol = 1e-13,
                         std::size_t node_budget = 10'000'000);

// Long-double entry point used by the partition code; no snapping.
MassBounds interval_mass(const MeasureSpec& m, long double lo, long double hi, Closure closure,
                         const QueryOptions& opt);

MassBounds cell_mass(const MeasureSpec& m, DyadicCell cell, const QueryOptions& opt = {});

struct CellMass {
    DyadicCell cell;
    MassBounds mass;
};

// Positive-mass cells at level n, in increasing order. Cells whose upper bound is at most
// `detect` are dropped.
std::vector<CellMass> dyadic_mass_vector(const MeasureSpec& m, int n, const QueryOptions& opt = {},
                                         double detect = 0.0);

// All atoms (transformed into ambient coordinates) sorted by position; masses summed for ties.
Atomic atoms_of(const MeasureSpec& m);

struct DyadicShift {
    MeasureSpec measure;
    double offset;
};

DyadicShift shift_off_dyadics(const MeasureSpec& m, double budget, int max_level = kMaxLevel);

MeasureSpec affine_pushforward(const MeasureSpec& m, double c, double d);

enum class Placement { Midpoint, Barycenter };

MeasureSpec discretize_to_atoms(const MeasureSpec& m, int n, Placement placement = Placement::Midpoint,
                                const QueryOptions& opt = {});

// Convenience constructors.
MeasureSpec make_atomic(std::vector<double> positions, std::vector<double> masses);
MeasureSpec make_density(std::vector<double> breakpoints, std::vector<double> densities);
MeasureSpec make_lebesgue();
MeasureSpec make_self_similar(std::vector<double> ratios, std::vector<double> offsets,
                              std::vector<double> weights, bool overlap_allowed = false);
MeasureSpec make_cantor_measure();
MeasureSpec make_sum(const MeasureSpec& a, const MeasureSpec& b);
MeasureSpec make_shifted(const MeasureSpec& inner, double offset, double scale = 1.0);

}  // namespace kf
