#pragma once

// Internal helpers shared between translation units of the library.

#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kf/measure.hpp"

namespace kf::detail {

// x -> scale * x + offset, evaluated in long double
struct Affine {
    long double scale = 1.0L;
    long double offset = 0.0L;

    long double apply(long double x) const { return scale * x + offset; }
    long double invert(long double y) const { return (y - offset) / scale; }
    Affine then(long double c, long double d) const {  // first (c,d), then *this
        return {scale * c, scale * d + offset};
    }
};

inline constexpr long double kEps = LDBL_EPSILON;

// exact rounding error of s = a + b
inline long double two_sum_err(long double a, long double b, long double s) {
    const long double bb = s - a;
    return (a - (s - bb)) + (b - bb);
}

// s - e and s + e rounded outward; the extra relative margin absorbs the final rounding
inline long double down(long double s, long double e) {
    if (e == 0) return s;
    const long double r = s - e;
    return r - (2 * kEps * std::abs(r) + LDBL_MIN);
}
inline long double up(long double s, long double e) {
    if (e == 0) return s;
    const long double r = s + e;
    return r + (2 * kEps * std::abs(r) + LDBL_MIN);
}

// one IFS map y -> s y + b with weight p; build with make_maps
struct MapLD {
    long double b = 0, s = 1, p = 1;
    bool pow2 = false;  // s is a power of two, so scaling by 1/s is exact
    long double inv = 1;
    bool p_pow2 = false;
    long double cum = 0, cum_err = 0;  // total weight of the maps to the left, with a rounding bound
    long double end_lo = 1, end_hi = 1;  // enclosure of b + s
};

// maps sorted by offset; fills the derived fields
std::vector<MapLD> make_maps(const std::vector<long double>& b, const std::vector<double>& s,
                             const std::vector<double>& p);

struct LDRange {
    long double lo = 0, hi = 0;
};

// Partial CDF sum acc + w * (local value) with rigorous bounds on the rounding committed so far.
struct WalkAccum {
    long double acc = 0, w = 1;
    long double err = 0;    // absolute, on acc
    long double w_rel = 0;  // relative, on w
    bool w_pow2 = true;

    // step into the cylinder of mp
    void pass(const MapLD& mp) {
        const long double t = w * mp.cum;
        if (!w_pow2) err += std::abs(t) * (w_rel + kEps);
        if (mp.cum_err != 0) err += w * mp.cum_err * (1 + w_rel + kEps);
        const long double s = acc + t;
        err += std::abs(two_sum_err(acc, t, s));
        acc = s;
        w *= mp.p;
        if (!mp.p_pow2) {
            w_rel += 2 * kEps;
            w_pow2 = false;
        }
    }

    LDRange range(long double l, long double h) const { return {at(l, false), at(h, true)}; }

private:
    long double at(long double x, bool upper) const {
        const long double t = w * x;
        long double e = err;
        if (!w_pow2) e += std::abs(t) * (w_rel + kEps);
        const long double s = acc + t;
        e += std::abs(two_sum_err(acc, t, s));
        e *= 1 + 4 * kEps;
        return upper ? up(s, e) : down(s, e);
    }
};

// Deepest known cylinder containing a dyadic cell, for one IFS-type component. The cylinder is
// off + scale [0,1] in node coordinates.
struct WalkContext {
    std::uint64_t depth = 0;
    WalkAccum acc;
    long double off = 0, scale = 1, inv = 1;
    long double off_err = 0, scale_rel = 0;
    bool scale_pow2 = true;
    bool flat = false;  // the cell misses every cylinder interior, so F is constant on it
};

struct AtomListLD {
    std::vector<long double> pos;
    std::vector<double> mass;
};

// Atoms in ambient coordinates, sorted, ties merged.
AtomListLD atoms_ld(const MeasureSpec& m);

bool is_atom_position(const AtomListLD& atoms, long double x);

// Round a long double pair to doubles: nearest when equal, outward otherwise.
MassBounds to_bounds(long double lo, long double hi, bool exhausted = false);

// Cell masses from cached distribution-function values: IFS-type components are read off values
// nu((0, y]) computed once per endpoint, atomic and density components are summed directly.
// Holds pointers into the measure, which must outlive it.
class CdfMasses {
public:
    static constexpr std::size_t kMaxWalks = 4;
    using Value = LDRange;
    using Values = std::array<Value, kMaxWalks>;
    using Contexts = std::array<WalkContext, kMaxWalks>;

    CdfMasses(const MeasureSpec& m, const QueryOptions& opt);

    // false when the measure contains an overlapping IFS or too many IFS components
    bool usable() const { return usable_; }
    std::size_t walks() const { return walks_.size(); }
    Values cdf(long double y) const;
    MassBounds mass(long double a, long double b, const Values& Fa, const Values& Fb) const;

    // Contexts let a walk start at the deepest cylinder containing the current cell. narrow()
    // descends them for the cell (a, b]; cdf() then needs a point of that cell and its end values.
    // wmin is the truncation weight per component, so the result is only that accurate.
    Contexts root_contexts() const { return {}; }
    void narrow(Contexts& c, long double a, long double b) const;
    Values cdf(long double y, const Contexts& c, const Values& Fa, const Values& Fb, long double wmin) const;
    // mass of (a, b] with the walks measured from the narrowed contexts, so rounding scales with the
    // context cylinder's weight instead of the distribution-function value
    MassBounds local_mass(long double a, long double b, const Contexts& c) const;

private:
    struct Walk {
        Affine T;
        std::vector<MapLD> maps;                  // IFS
        const HomogeneousCantor* cantor = nullptr;
        std::vector<std::vector<MapLD>> gens;     // Cantor, first generations cached
        bool identity = false;
    };
    struct Direct {
        const MeasureSpec* node;
        Affine T;
    };
    void collect(const MeasureSpec& m, const Affine& T);
    Value eval(const Walk& w, long double y, const WalkContext& c, long double wmin) const;

    QueryOptions opt_;
    bool usable_ = true;
    std::vector<Walk> walks_;
    std::vector<Direct> direct_;
};

}  // namespace kf::detail
