#include "kf/measure.hpp"

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include "detail.hpp"

namespace kf {

using detail::Affine;


MassBounds operator+(const MassBounds& a, const MassBounds& b) {
    return {a.lower + b.lower, a.upper + b.upper, a.budget_exhausted || b.budget_exhausted};
}

// ---------------------------------------------------------------------------
// Homogeneous Cantor environments

CantorSystem HomogeneousCantor::system_at(std::uint64_t gen) const {
    switch (environment.kind) {
        case Environment::Kind::Explicit: {
            const auto& pre = environment.prefix;
            const auto& cyc = environment.cycle;
            if (gen <= pre.size()) return systems[pre[gen - 1]];
            return systems[cyc[(gen - 1 - pre.size()) % cyc.size()]];
        }
        case Environment::Kind::Block: {
            if (gen <= 2) return systems[0];
            // 2^{j-1} < gen <= 2^j with j = bit width of gen-1; odd j is the first block type
            const int j = std::bit_width(gen - 1);
            return systems[(j % 2 == 1) ? 0 : 1];
        }
        case Environment::Kind::Indexed: {
            const double r = std::pow(environment.base, -static_cast<double>(gen));
            return {r, r, 0.0, 1.0 - r, environment.p1, 1.0 - environment.p1};
        }
    }
    return systems.front();
}

bool HomogeneousCantor::equal_ratios() const {
    if (environment.kind == Environment::Kind::Indexed) return true;
    return std::all_of(systems.begin(), systems.end(),
                       [](const CantorSystem& s) { return s.r1 == s.r2; });
}

// ---------------------------------------------------------------------------
// Validation

namespace {

bool finite(double x) { return std::isfinite(x); }

void validate_system(CantorSystem& s, std::size_t idx) {
    const std::string tag = "cantor system " + std::to_string(idx) + ": ";
    require(finite(s.r1) && finite(s.r2) && s.r1 > 0 && s.r1 < 1 && s.r2 > 0 && s.r2 < 1,
            tag + "ratios must lie in (0,1)");
    require(std::abs(s.c1) <= 1e-15, tag + "S1 must fix 0 (c1 = 0)");
    require(std::abs(s.c2 + s.r2 - 1.0) <= 1e-12, tag + "S2 must fix 1 (c2 = 1 - r2)");
    s.c1 = 0.0;
    s.c2 = 1.0 - s.r2;
    require(s.r1 <= s.c2 + 1e-15, tag + "images must not overlap (r1 <= c2)");
    require(finite(s.p1) && finite(s.p2) && s.p1 > 0 && s.p2 > 0 && std::abs(s.p1 + s.p2 - 1.0) <= 1e-12,
            tag + "weights must be positive and sum to 1");
}

}  // namespace

MeasureSpec::MeasureSpec(Node node) : node_(std::move(node)) {
    struct Visitor {
        MeasureSpec& self;

        void operator()(Atomic& a) {
            require(!a.positions.empty(), "atomic measure needs at least one atom");
            require(a.positions.size() == a.masses.size(), "atomic: positions and masses differ in length");
            double total = 0.0;
            for (std::size_t i = 0; i < a.positions.size(); ++i) {
                require(finite(a.positions[i]) && a.positions[i] > 0 && a.positions[i] < 1,
                        "atomic: positions must lie in (0,1)");
                if (i > 0) require(a.positions[i] > a.positions[i - 1], "atomic: positions must strictly increase");
                require(finite(a.masses[i]) && a.masses[i] > 0, "atomic: masses must be positive");
                total += a.masses[i];
            }
            self.total_ = total;
            self.hull_ = {a.positions.front(), a.positions.back()};
            self.has_atoms_ = true;
        }

        void operator()(PiecewiseDensity& d) {
            const auto& b = d.breakpoints;
            require(b.size() >= 2, "density: need at least two breakpoints");
            require(d.densities.size() + 1 == b.size(), "density: need one density per piece");
            double total = 0.0;
            for (std::size_t i = 0; i < b.size(); ++i) {
                require(finite(b[i]) && b[i] >= 0 && b[i] <= 1, "density: breakpoints must lie in [0,1]");
                if (i > 0) require(b[i] > b[i - 1], "density: breakpoints must strictly increase");
            }
            for (std::size_t i = 0; i < d.densities.size(); ++i) {
                require(finite(d.densities[i]) && d.densities[i] >= 0, "density: densities must be nonnegative");
                total += d.densities[i] * (b[i + 1] - b[i]);
            }
            require(total > 0, "density: total mass must be positive");
            self.total_ = total;
            self.hull_ = {b.front(), b.back()};
        }

        void operator()(SelfSimilar& s) {
            const std::size_t m = s.ratios.size();
            require(m >= 2, "self_similar: need at least two maps");
            require(s.offsets.size() == m && s.weights.size() == m, "self_similar: array lengths differ");
            double wsum = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                require(finite(s.ratios[i]) && s.ratios[i] > 0 && s.ratios[i] < 1,
                        "self_similar: ratios must lie in (0,1)");
                require(finite(s.offsets[i]) && s.offsets[i] >= 0 && s.ratios[i] + s.offsets[i] <= 1 + 1e-15,
                        "self_similar: maps must send [0,1] into [0,1]");
                require(finite(s.weights[i]) && s.weights[i] > 0, "self_similar: weights must be positive");
                wsum += s.weights[i];
            }
            require(std::abs(wsum - 1.0) <= 1e-12, "self_similar: weights must sum to 1");
            // sort maps by offset; the CDF walk relies on this order
            std::vector<std::size_t> order(m);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](auto i, auto j) {
                return s.offsets[i] < s.offsets[j] || (s.offsets[i] == s.offsets[j] && s.ratios[i] < s.ratios[j]);
            });
            SelfSimilar sorted{{}, {}, {}, s.overlap_allowed};
            for (auto i : order) {
                sorted.ratios.push_back(s.ratios[i]);
                sorted.offsets.push_back(s.offsets[i]);
                sorted.weights.push_back(s.weights[i]);
            }
            s = std::move(sorted);
            bool osc = true;
            for (std::size_t i = 0; i + 1 < m; ++i)
                if (s.offsets[i] + s.ratios[i] > s.offsets[i + 1] + 1e-15) osc = false;
            if (!s.overlap_allowed)
                require(osc, "self_similar: images overlap; set overlap_allowed to use the word-tree evaluator");
            const double fp0 = s.offsets[0] / (1 - s.ratios[0]);
            bool common = true;
            for (std::size_t i = 1; i < m; ++i)
                if (std::abs(s.offsets[i] / (1 - s.ratios[i]) - fp0) > 1e-15) common = false;
            require(!common, "self_similar: all maps share a fixed point (the measure is a point mass)");
            self.total_ = 1.0;
            double a = 1.0, b = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                a = std::min(a, s.offsets[i]);
                b = std::max(b, s.offsets[i] + s.ratios[i]);
            }
            self.hull_ = {a, std::min(b, 1.0)};
            self.has_overlap_ = s.overlap_allowed && !osc;
        }

        void operator()(HomogeneousCantor& h) {
            auto& env = h.environment;
            switch (env.kind) {
                case Environment::Kind::Explicit:
                    require(!h.systems.empty(), "cantor: need at least one system");
                    require(!env.cycle.empty(), "cantor: explicit environment needs a non-empty cycle");
                    for (auto i : env.prefix) require(i < h.systems.size(), "cantor: environment index out of range");
                    for (auto i : env.cycle) require(i < h.systems.size(), "cantor: environment index out of range");
                    break;
                case Environment::Kind::Block:
                    require(h.systems.size() >= 2, "cantor: block environment needs two systems");
                    break;
                case Environment::Kind::Indexed:
                    require(finite(env.base) && env.base >= 2, "cantor: indexed environment needs base >= 2");
                    require(finite(env.p1) && env.p1 > 0 && env.p1 < 1, "cantor: indexed environment needs p1 in (0,1)");
                    break;
            }
            for (std::size_t i = 0; i < h.systems.size(); ++i) validate_system(h.systems[i], i);
            self.total_ = 1.0;
            self.hull_ = {0.0, 1.0};
        }

        void operator()(Sum& s) {
            require(s.left && s.right, "sum: both parts required");
            self.total_ = s.left->total_mass() + s.right->total_mass();
            self.hull_ = {std::min(s.left->hull().first, s.right->hull().first),
                          std::max(s.left->hull().second, s.right->hull().second)};
            self.has_atoms_ = s.left->has_atoms() || s.right->has_atoms();
            self.has_overlap_ = s.left->has_overlapping_ifs() || s.right->has_overlapping_ifs();
        }

        void operator()(Shifted& s) {
            require(s.inner != nullptr, "shifted: inner measure required");
            require(finite(s.scale) && s.scale > 0 && finite(s.offset), "shifted: need scale > 0 and finite offset");
            const auto [a, b] = s.inner->hull();
            const long double lo = static_cast<long double>(s.scale) * a + s.offset;
            const long double hi = static_cast<long double>(s.scale) * b + s.offset;
            if (s.inner->has_atoms()) {
                auto atoms = detail::atoms_ld(*s.inner);
                const long double first = s.scale * atoms.pos.front() + static_cast<long double>(s.offset);
                const long double last = s.scale * atoms.pos.back() + static_cast<long double>(s.offset);
                require(first > 0 && last < 1, "shifted: atoms escape (0,1)");
            }
            require(lo >= -1e-15L && hi <= 1 + 1e-15L, "shifted: image of the support escapes (0,1)");
            self.total_ = s.inner->total_mass();
            self.hull_ = {static_cast<double>(std::max(lo, 0.0L)), static_cast<double>(std::min(hi, 1.0L))};
            self.has_atoms_ = s.inner->has_atoms();
            self.has_overlap_ = s.inner->has_overlapping_ifs();
        }
    };
    std::visit(Visitor{*this}, node_);
    require(std::isfinite(total_) && total_ > 0, "measure: total mass must be finite and positive");
}

std::string MeasureSpec::kind() const {
    static const char* names[] = {"atomic", "density", "self_similar", "cantor", "sum", "shifted"};
    return names[node_.index()];
}

// ---------------------------------------------------------------------------
// constructors

MeasureSpec make_atomic(std::vector<double> positions, std::vector<double> masses) {
    return MeasureSpec(Atomic{std::move(positions), std::move(masses)});
}
MeasureSpec make_density(std::vector<double> breakpoints, std::vector<double> densities) {
    return MeasureSpec(PiecewiseDensity{std::move(breakpoints), std::move(densities)});
}
MeasureSpec make_lebesgue() { return make_density({0.0, 1.0}, {1.0}); }
MeasureSpec make_self_similar(std::vector<double> ratios, std::vector<double> offsets, std::vector<double> weights,
                              bool overlap_allowed) {
    return MeasureSpec(SelfSimilar{std::move(ratios), std::move(offsets), std::move(weights), overlap_allowed});
}
MeasureSpec make_cantor_measure() { return make_self_similar({1.0 / 3, 1.0 / 3}, {0.0, 2.0 / 3}, {0.5, 0.5}); }
MeasureSpec make_sum(const MeasureSpec& a, const MeasureSpec& b) {
    return MeasureSpec(Sum{std::make_shared<MeasureSpec>(a), std::make_shared<MeasureSpec>(b)});
}
MeasureSpec make_shifted(const MeasureSpec& inner, double offset, double scale) {
    return MeasureSpec(Shifted{std::make_shared<MeasureSpec>(inner), offset, scale});
}

// ---------------------------------------------------------------------------
// atoms

namespace detail {

namespace {
void collect_atoms(const MeasureSpec& m, const Affine& T, std::vector<std::pair<long double, double>>& out) {
    if (const auto* a = m.as<Atomic>()) {
        for (std::size_t i = 0; i < a->positions.size(); ++i)
            out.emplace_back(T.apply(a->positions[i]), a->masses[i]);
    } else if (const auto* s = m.as<Sum>()) {
        collect_atoms(*s->left, T, out);
        collect_atoms(*s->right, T, out);
    } else if (const auto* sh = m.as<Shifted>()) {
        collect_atoms(*sh->inner, T.then(sh->scale, sh->offset), out);
    }
}
}  // namespace

AtomListLD atoms_ld(const MeasureSpec& m) {
    std::vector<std::pair<long double, double>> raw;
    collect_atoms(m, Affine{}, raw);
    std::stable_sort(raw.begin(), raw.end(), [](auto& x, auto& y) { return x.first < y.first; });
    AtomListLD out;
    for (auto& [p, w] : raw) {
        if (!out.pos.empty() && out.pos.back() == p) {
            out.mass.back() += w;
        } else {
            out.pos.push_back(p);
            out.mass.push_back(w);
        }
    }
    return out;
}

bool is_atom_position(const AtomListLD& atoms, long double x) {
    return std::binary_search(atoms.pos.begin(), atoms.pos.end(), x);
}

MassBounds to_bounds(long double lo, long double hi, bool exhausted) {
    if (lo < 0) lo = 0;
    if (hi < lo) hi = lo;
    if (lo == hi) {
        const double v = static_cast<double>(lo);
        return {v, v, exhausted};
    }
    // covers the few long double additions that precede this call
    lo -= 8 * LDBL_EPSILON * lo;
    hi += 8 * LDBL_EPSILON * hi;
    double l = static_cast<double>(lo);
    double h = static_cast<double>(hi);
    if (static_cast<long double>(l) > lo) l = std::nextafter(l, 0.0);
    if (static_cast<long double>(h) < hi) h = std::nextafter(h, HUGE_VAL);
    return {std::max(l, 0.0), h, exhausted};
}

}  // namespace detail

Atomic atoms_of(const MeasureSpec& m) {
    auto ld = detail::atoms_ld(m);
    Atomic out;
    for (std::size_t i = 0; i < ld.pos.size(); ++i) {
        out.positions.push_back(static_cast<double>(ld.pos[i]));
        out.masses.push_back(ld.mass[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// interval mass

namespace {

struct LDBounds {
    long double lo = 0, hi = 0;
    bool exhausted = false;
};

using detail::MapLD;

bool is_pow2(long double s) {
    int e;
    return std::frexp(s, &e) == 0.5L;
}

using detail::down;
using detail::kEps;
using detail::two_sum_err;
using detail::up;

// last map whose offset lies strictly left of y, or -1
int locate(const std::vector<MapLD>& maps, long double y) {
    int r = -1;
    for (std::size_t i = 0; i < maps.size() && maps[i].b < y; ++i) r = static_cast<int>(i);
    return r;
}

// (y - b)/s together with a flag telling whether the result is exact
std::pair<long double, bool> pull_back(long double y, const MapLD& mp) {
    const long double d = y - mp.b;
    return {d * mp.inv, mp.pow2 && two_sum_err(y, -mp.b, d) == 0};
}

// node coordinates of an ambient point
detail::LDRange node_range(const Affine& T, long double y) {
    if (T.scale == 1.0L && T.offset == 0.0L) return {y, y};
    const long double d = y - T.offset;
    const long double e = two_sum_err(y, -T.offset, d);
    const long double u = d / T.scale;
    if (e == 0 && is_pow2(T.scale)) return {u, u};
    const long double du = (std::abs(e) / T.scale + 2 * kEps * std::abs(u)) * (1 + kEps);
    return {down(u, du), up(u, du)};
}

enum class WalkMode { Both, Lower, Upper };

// Bounds on nu([0, y]) for a non-overlapping IFS-type measure whose generation-d maps are maps_at(d),
// sorted by offset with disjoint interiors. The walk point is carried as an enclosure [lo, hi] and
// widened after every inexact pull-back, so the result is rigorous despite rounding. When the
// enclosure straddles a cylinder boundary the two ends are finished separately: F is monotone, so a
// walk at lo bounds F(y) from below and one at hi from above. `snap` is an ambient-coordinate distance.
template <class MapsAt>
detail::LDRange cdf_walk_from(long double lo, long double hi, std::uint64_t depth, WalkMode mode, MapsAt& maps_at,
                              long double wmin, long double snap, long double scale) {
    constexpr long double kGrow = 4 * LDBL_EPSILON;
    detail::WalkAccum a;
    for (;; ++depth) {
        if (snap > 0) {
            for (long double* y : {&lo, &hi}) {
                if (std::abs(*y) * scale <= snap) *y = 0;
                else if (std::abs(1 - *y) * scale <= snap) *y = 1;
            }
        }
        if (hi <= 0) return a.range(0, 0);
        if (lo >= 1) return a.range(1, 1);
        if (a.w <= wmin || depth > 200000) return a.range(0, 1);
        const auto& maps = maps_at(depth);
        const int i = locate(maps, lo);
        if (lo != hi && (lo <= 0 || hi >= 1 || locate(maps, hi) != i)) {
            const long double l =
                mode == WalkMode::Upper ? 0.0L
                                        : cdf_walk_from(lo, lo, depth, WalkMode::Lower, maps_at, wmin / a.w, snap, scale).lo;
            const long double h =
                mode == WalkMode::Lower ? 0.0L
                                        : cdf_walk_from(hi, hi, depth, WalkMode::Upper, maps_at, wmin / a.w, snap, scale).hi;
            return a.range(l, h);
        }
        if (i < 0) return a.range(0, 0);
        const MapLD& mp = maps[static_cast<std::size_t>(i)];
        a.pass(mp);
        scale *= mp.s;
        auto [tl, exact_l] = pull_back(lo, mp);
        auto [th, exact_h] = lo == hi ? std::pair{tl, exact_l} : pull_back(hi, mp);
        if (!exact_l && mode != WalkMode::Upper) tl -= kGrow * (std::abs(tl) + LDBL_MIN);
        if (!exact_h && mode != WalkMode::Lower) th += kGrow * (std::abs(th) + LDBL_MIN);
        if (mode == WalkMode::Lower) th = tl;
        if (mode == WalkMode::Upper) tl = th;
        lo = tl;
        hi = th;
    }
}

template <class MapsAt>
detail::LDRange cdf_walk(const detail::LDRange& y, MapsAt&& maps_at, long double wmin, long double snap,
                         long double ambient_scale) {
    return cdf_walk_from(y.lo, y.hi, 0, WalkMode::Both, maps_at, wmin, snap, ambient_scale);
}

std::vector<MapLD> ifs_maps(const SelfSimilar& s) {
    return detail::make_maps({s.offsets.begin(), s.offsets.end()}, s.ratios, s.weights);
}

std::vector<MapLD> cantor_maps(const CantorSystem& s) {
    return detail::make_maps({0.0L, 1.0L - static_cast<long double>(s.r2)}, {s.r1, s.r2}, {s.p1, s.p2});
}

struct CantorMaps {
    const HomogeneousCantor& h;
    std::vector<MapLD> buf;
    const std::vector<MapLD>& operator()(std::uint64_t depth) {
        buf = cantor_maps(h.system_at(depth + 1));
        return buf;
    }
};

LDBounds mass_from_cdfs(const detail::LDRange& Fhi, const detail::LDRange& Flo) {
    auto diff = [](long double x, long double y, bool upper) {
        const long double d = x - y;
        const long double e = std::abs(two_sum_err(x, -y, d));
        return upper ? up(d, e) : down(d, e);
    };
    LDBounds r;
    r.lo = std::max(0.0L, diff(Fhi.lo, Flo.hi, false));
    r.hi = std::max(r.lo, diff(Fhi.hi, Flo.lo, true));
    return r;
}

// Word-tree enumeration for overlapping IFS on the node-coordinate interval [lo, hi] (atomless, so
// closure is irrelevant). Heaviest straddling words are expanded first.
LDBounds word_tree_mass(const SelfSimilar& s, long double lo, long double hi, long double tol, std::size_t budget) {
    struct Node {
        long double w, a, sc;
        std::uint64_t seq;
        bool operator<(const Node& o) const { return w < o.w || (w == o.w && seq > o.seq); }
    };
    std::priority_queue<Node> pq;
    long double settled = 0, pending = 0, stuck = 0;
    std::uint64_t seq = 0;
    std::size_t created = 0;
    auto classify = [&](long double w, long double a, long double sc) {
        const long double b = a + sc;
        if (b <= lo || a >= hi) return;
        if (a >= lo && b <= hi) {
            settled += w;
            return;
        }
        pending += w;
        pq.push({w, a, sc, seq++});
        ++created;
    };
    classify(1.0L, 0.0L, 1.0L);
    bool exhausted = false;
    while (pending > tol && !pq.empty()) {
        if (created >= budget) {
            exhausted = true;
            break;
        }
        Node nd = pq.top();
        pq.pop();
        pending -= nd.w;
        if (nd.sc < 16 * LDBL_EPSILON) {
            stuck += nd.w;
            continue;
        }
        for (std::size_t i = 0; i < s.ratios.size(); ++i)
            classify(nd.w * s.weights[i], nd.a + nd.sc * s.offsets[i], nd.sc * s.ratios[i]);
    }
    if (pending < 0) pending = 0;
    LDBounds r{settled, settled + pending + stuck, exhausted || (pending + stuck > tol)};
    return r;
}

bool contains(long double x, long double lo, long double hi, Closure c) {
    switch (c) {
        case Closure::LeftOpen: return x > lo && x <= hi;
        case Closure::Closed: return x >= lo && x <= hi;
        case Closure::Open: return x > lo && x < hi;
    }
    return false;
}

LDBounds mass_node(const MeasureSpec& m, long double lo, long double hi, Closure c, const Affine& T,
                   const QueryOptions& opt);

struct MassVisitor {
    long double lo, hi;
    Closure c;
    const Affine& T;
    const QueryOptions& opt;

    long double node_lo() const { return T.invert(lo); }
    long double node_hi() const { return T.invert(hi); }

    LDBounds operator()(const Atomic& a) const {
        // positions are monotone under T, so binary search on transformed values
        auto key = [&](double x) { return T.apply(x); };
        auto first = std::partition_point(a.positions.begin(), a.positions.end(), [&](double x) {
            const long double y = key(x);
            return (c == Closure::Closed) ? y < lo : y <= lo;
        });
        long double sum = 0;
        for (auto it = first; it != a.positions.end(); ++it) {
            const long double y = key(*it);
            if (!contains(y, lo, hi, c)) break;
            sum += a.masses[static_cast<std::size_t>(it - a.positions.begin())];
        }
        return {sum, sum};
    }

    LDBounds operator()(const PiecewiseDensity& d) const {
        const long double a = node_lo(), b = node_hi();
        long double sum = 0;
        for (std::size_t i = 0; i < d.densities.size(); ++i) {
            const long double l = std::max<long double>(a, d.breakpoints[i]);
            const long double r = std::min<long double>(b, d.breakpoints[i + 1]);
            if (r > l) sum += (r - l) * d.densities[i];
        }
        return {sum, sum};
    }

    LDBounds operator()(const SelfSimilar& s) const {
        const long double a = node_lo(), b = node_hi();
        if (s.overlap_allowed) {
            // an IFS flagged as overlapping may still satisfy OSC; the walk is exact there
            bool osc = true;
            for (std::size_t i = 0; i + 1 < s.ratios.size(); ++i)
                if (s.offsets[i] + s.ratios[i] > s.offsets[i + 1] + 1e-15) osc = false;
            if (!osc) return word_tree_mass(s, a, b, opt.tol, opt.node_budget);
        }
        const auto maps = ifs_maps(s);
        auto at = [&](std::uint64_t) -> const std::vector<MapLD>& { return maps; };
        const long double wmin = opt.tol / 2;
        return mass_from_cdfs(cdf_walk(node_range(T, hi), at, wmin, opt.snap, T.scale),
                              cdf_walk(node_range(T, lo), at, wmin, opt.snap, T.scale));
    }

    LDBounds operator()(const HomogeneousCantor& h) const {
        const long double wmin = opt.tol / 2;
        CantorMaps m1{h, {}}, m2{h, {}};
        return mass_from_cdfs(cdf_walk(node_range(T, hi), m1, wmin, opt.snap, T.scale),
                              cdf_walk(node_range(T, lo), m2, wmin, opt.snap, T.scale));
    }

    LDBounds operator()(const Sum& s) const {
        const LDBounds l = mass_node(*s.left, lo, hi, c, T, opt);
        const LDBounds r = mass_node(*s.right, lo, hi, c, T, opt);
        return {l.lo + r.lo, l.hi + r.hi, l.exhausted || r.exhausted};
    }

    LDBounds operator()(const Shifted& s) const {
        return mass_node(*s.inner, lo, hi, c, T.then(s.scale, s.offset), opt);
    }
};

LDBounds mass_node(const MeasureSpec& m, long double lo, long double hi, Closure c, const Affine& T,
                   const QueryOptions& opt) {
    return std::visit(MassVisitor{lo, hi, c, T, opt}, m.node());
}

}  // namespace

namespace detail {

std::vector<MapLD> make_maps(const std::vector<long double>& b, const std::vector<double>& s,
                             const std::vector<double>& p) {
    std::vector<MapLD> maps(b.size());
    long double cum = 0, cum_err = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        MapLD& m = maps[i];
        m.b = b[i];
        m.s = s[i];
        m.p = p[i];
        m.pow2 = is_pow2(m.s);
        m.inv = 1.0L / m.s;
        m.p_pow2 = is_pow2(m.p);
        m.cum = cum;
        m.cum_err = cum_err;
        const long double next = cum + m.p;
        cum_err += std::abs(two_sum_err(cum, m.p, next));
        cum = next;
        const long double end = m.b + m.s;
        const long double e = std::abs(two_sum_err(m.b, m.s, end));
        m.end_lo = down(end, e);
        m.end_hi = up(end, e);
    }
    return maps;
}

namespace {

constexpr std::uint64_t kCachedGenerations = 192;

// local coordinate of node point u in the context's cylinder
LDRange local(const WalkContext& c, const LDRange& u) {
    auto one = [&](long double x, bool upper) {
        const long double d = x - c.off;
        const long double e = two_sum_err(x, -c.off, d);
        const long double z = d * c.inv;
        if (e == 0 && c.off_err == 0 && c.scale_pow2) return z;
        const long double dz =
            ((c.off_err + std::abs(e)) * c.inv + std::abs(z) * (c.scale_rel + 2 * kEps)) * (1 + 4 * kEps);
        return upper ? up(z, dz) : down(z, dz);
    };
    return {one(u.lo, false), one(u.hi, true)};
}

void descend(WalkContext& c, const MapLD& mp) {
    c.acc.pass(mp);
    const long double bs = mp.b * c.scale;
    if (!c.scale_pow2) c.off_err += std::abs(bs) * (c.scale_rel + kEps);
    const long double off = c.off + bs;
    c.off_err = (c.off_err + std::abs(two_sum_err(c.off, bs, off))) * (1 + 2 * kEps);
    c.off = off;
    c.scale *= mp.s;
    c.inv *= mp.inv;
    if (!mp.pow2) {
        c.scale_rel += 4 * kEps;
        c.scale_pow2 = false;
    }
    ++c.depth;
}

}  // namespace

CdfMasses::CdfMasses(const MeasureSpec& m, const QueryOptions& opt) : opt_(opt) {
    collect(m, Affine{});
    if (walks_.size() > kMaxWalks) usable_ = false;
}

void CdfMasses::collect(const MeasureSpec& m, const Affine& T) {
    if (const auto* s = m.as<Sum>()) {
        collect(*s->left, T);
        collect(*s->right, T);
    } else if (const auto* sh = m.as<Shifted>()) {
        collect(*sh->inner, T.then(sh->scale, sh->offset));
    } else if (const auto* ifs = m.as<SelfSimilar>()) {
        if (m.has_overlapping_ifs()) usable_ = false;
        walks_.push_back({T, ifs_maps(*ifs), nullptr, {}, T.scale == 1.0L && T.offset == 0.0L});
    } else if (const auto* h = m.as<HomogeneousCantor>()) {
        Walk w{T, {}, h, {}, T.scale == 1.0L && T.offset == 0.0L};
        for (std::uint64_t d = 0; d < kCachedGenerations; ++d) w.gens.push_back(cantor_maps(h->system_at(d + 1)));
        walks_.push_back(std::move(w));
    } else {
        direct_.push_back({&m, T});
    }
}

namespace {

struct WalkMaps {
    const std::vector<MapLD>* fixed;
    const std::vector<std::vector<MapLD>>* gens;
    const HomogeneousCantor* cantor;
    std::vector<MapLD> buf;
    const std::vector<MapLD>& operator()(std::uint64_t d) {
        if (fixed) return *fixed;
        if (d < gens->size()) return (*gens)[d];
        buf = cantor_maps(cantor->system_at(d + 1));
        return buf;
    }
};

}  // namespace

CdfMasses::Value CdfMasses::eval(const Walk& w, long double y, const WalkContext& c, long double wmin) const {
    WalkMaps at{w.cantor ? nullptr : &w.maps, &w.gens, w.cantor, {}};
    const LDRange z = local(c, node_range(w.T, y));
    const LDRange r = cdf_walk_from(z.lo, z.hi, c.depth, WalkMode::Both, at, wmin / c.acc.w, 0.0L, 0.0L);
    return c.acc.range(r.lo, r.hi);
}

CdfMasses::Values CdfMasses::cdf(long double y) const {
    Values out{};
    const WalkContext root;
    for (std::size_t i = 0; i < walks_.size() && i < kMaxWalks; ++i) out[i] = eval(walks_[i], y, root, opt_.tol / 2);
    return out;
}

void CdfMasses::narrow(Contexts& cs, long double a, long double b) const {
    for (std::size_t i = 0; i < walks_.size() && i < kMaxWalks; ++i) {
        WalkContext& c = cs[i];
        const Walk& w = walks_[i];
        if (c.flat) continue;
        WalkMaps at{w.cantor ? nullptr : &w.maps, &w.gens, w.cantor, {}};
        const long double ua = node_range(w.T, a).lo, ub = node_range(w.T, b).hi;
        for (int guard = 0; guard < 4096; ++guard) {
            const long double za = local(c, {ua, ua}).lo, zb = local(c, {ub, ub}).hi;
            if (zb <= 0 || za >= 1) {
                c.flat = true;
                break;
            }
            if (za < 0 || zb > 1) break;
            const auto& maps = at(c.depth);
            // last map with offset <= za
            int j = -1;
            for (std::size_t k = 0; k < maps.size() && maps[k].b <= za; ++k) j = static_cast<int>(k);
            if (j < 0) {
                if (zb <= maps.front().b) c.flat = true;
                break;
            }
            const MapLD& mp = maps[static_cast<std::size_t>(j)];
            if (zb <= mp.end_lo) {
                descend(c, mp);
                continue;
            }
            const bool next_ok = static_cast<std::size_t>(j) + 1 == maps.size() ||
                                 zb <= maps[static_cast<std::size_t>(j) + 1].b;
            if (za >= mp.end_hi && next_ok) c.flat = true;
            break;
        }
    }
}

CdfMasses::Values CdfMasses::cdf(long double y, const Contexts& cs, const Values& Fa, const Values& Fb,
                                 long double wmin) const {
    Values out{};
    for (std::size_t i = 0; i < walks_.size() && i < kMaxWalks; ++i) {
        if (cs[i].flat) out[i] = {std::max(Fa[i].lo, Fb[i].lo), std::min(Fa[i].hi, Fb[i].hi)};
        else out[i] = eval(walks_[i], y, cs[i], wmin);
    }
    return out;
}

MassBounds CdfMasses::local_mass(long double a, long double b, const Contexts& cs) const {
    long double lo = 0, hi = 0;
    for (std::size_t i = 0; i < walks_.size() && i < kMaxWalks; ++i) {
        if (cs[i].flat) continue;
        WalkContext c = cs[i];
        c.acc.acc = 0;
        c.acc.err = 0;
        const LDBounds r = mass_from_cdfs(eval(walks_[i], b, c, opt_.tol / 2), eval(walks_[i], a, c, opt_.tol / 2));
        lo += r.lo;
        hi += r.hi;
    }
    for (const Direct& d : direct_) {
        const LDBounds r = mass_node(*d.node, a, b, Closure::LeftOpen, d.T, opt_);
        lo += r.lo;
        hi += r.hi;
    }
    return to_bounds(lo, hi);
}

MassBounds CdfMasses::mass(long double a, long double b, const Values& Fa, const Values& Fb) const {
    long double lo = 0, hi = 0;
    for (std::size_t i = 0; i < walks_.size() && i < kMaxWalks; ++i) {
        const LDBounds r = mass_from_cdfs(Fb[i], Fa[i]);
        lo += r.lo;
        hi += r.hi;
    }
    for (const Direct& d : direct_) {
        const LDBounds r = mass_node(*d.node, a, b, Closure::LeftOpen, d.T, opt_);
        lo += r.lo;
        hi += r.hi;
    }
    return to_bounds(lo, hi);
}

}  // namespace detail

MassBounds interval_mass(const MeasureSpec& m, long double lo, long double hi, Closure closure,
                         const QueryOptions& opt) {
    require(!(hi < lo), "interval: lo must not exceed hi");
    require(opt.tol > 0, "interval_mass: tol must be positive");
    const LDBounds r = mass_node(m, lo, hi, closure, Affine{}, opt);
    return detail::to_bounds(r.lo, r.hi, r.exhausted);
}

MassBounds interval_mass(const MeasureSpec& m, const Interval& I, double tol, std::size_t node_budget) {
    require(std::isfinite(I.lo) && std::isfinite(I.hi), "interval: endpoints must be finite");
    require(I.lo >= 0 && I.hi <= 1 && I.lo <= I.hi, "interval: need 0 <= lo <= hi <= 1");
    QueryOptions opt;
    opt.tol = tol;
    opt.node_budget = node_budget;
    opt.snap = 4 * DBL_EPSILON;
    return interval_mass(m, I.lo, I.hi, I.closure, opt);
}

MassBounds cell_mass(const MeasureSpec& m, DyadicCell cell, const QueryOptions& opt) {
    return interval_mass(m, cell.lo(), cell.hi(), Closure::LeftOpen, opt);
}

// ---------------------------------------------------------------------------
// dyadic mass vectors

namespace {

void check_level(int n) {
    require(n >= 0 && n <= kMaxLevel, "dyadic level must lie in [0, " + std::to_string(kMaxLevel) + "]");
}

// Distribute word masses of an overlapping IFS straight into level-n cells.
std::vector<CellMass> overlap_distribution(const SelfSimilar& s, int n, const QueryOptions& opt) {
    struct Acc {
        long double lo = 0, hi = 0;
    };
    std::map<std::uint64_t, Acc> cells;
    const long double h = std::ldexp(1.0L, -n);
    const std::uint64_t ncell = std::uint64_t{1} << n;
    auto first_cell = [&](long double a) {
        auto k = static_cast<std::uint64_t>(std::floor(a / h)) + 1;
        return std::min(std::max<std::uint64_t>(k, 1), ncell);
    };
    auto last_cell = [&](long double b) {
        auto k = static_cast<std::uint64_t>(std::ceil(b / h));
        return std::min(std::max<std::uint64_t>(k, 1), ncell);
    };
    struct W {
        long double w, a, sc;
    };
    std::vector<W> stack{{1.0L, 0.0L, 1.0L}};
    std::size_t created = 1;
    bool exhausted = false;
    while (!stack.empty()) {
        W nd = stack.back();
        stack.pop_back();
        const auto k0 = first_cell(nd.a), k1 = last_cell(nd.a + nd.sc);
        if (k0 >= k1) {
            auto& acc = cells[k0];
            acc.lo += nd.w;
            acc.hi += nd.w;
            continue;
        }
        if (created >= opt.node_budget || nd.w <= opt.tol * 1e-3L || nd.sc < 16 * LDBL_EPSILON) {
            exhausted = exhausted || created >= opt.node_budget;
            for (auto k = k0; k <= k1; ++k) cells[k].hi += nd.w;
            continue;
        }
        for (std::size_t i = 0; i < s.ratios.size(); ++i) {
            stack.push_back({nd.w * s.weights[i], nd.a + nd.sc * s.offsets[i], nd.sc * s.ratios[i]});
            ++created;
        }
    }
    std::vector<CellMass> out;
    for (auto& [k, acc] : cells) out.push_back({{n, k}, detail::to_bounds(acc.lo, acc.hi, exhausted)});
    return out;
}

std::vector<CellMass> merge_vectors(const std::vector<CellMass>& a, const std::vector<CellMass>& b) {
    std::vector<CellMass> out;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].cell.index < b[j].cell.index)) {
            out.push_back(a[i++]);
        } else if (i == a.size() || b[j].cell.index < a[i].cell.index) {
            out.push_back(b[j++]);
        } else {
            out.push_back({a[i].cell, a[i].mass + b[j].mass});
            ++i;
            ++j;
        }
    }
    return out;
}

std::vector<CellMass> tree_vector(const MeasureSpec& m, int n, const QueryOptions& opt, double detect) {
    std::vector<CellMass> out;
    const detail::CdfMasses cm(m, opt);
    struct Item {
        DyadicCell cell;
        MassBounds mass;
        detail::CdfMasses::Values flo, fhi;
        detail::CdfMasses::Contexts ctx;
    };
    std::vector<Item> stack;
    Item root{{0, 1}, {}, {}, {}, {}};
    if (cm.usable()) {
        root.flo = cm.cdf(0.0L);
        root.fhi = cm.cdf(1.0L);
        root.mass = cm.mass(0.0L, 1.0L, root.flo, root.fhi);
        root.ctx = cm.root_contexts();
    } else {
        root.mass = cell_mass(m, root.cell, opt);
    }
    if (root.mass.upper > detect) stack.push_back(root);
    while (!stack.empty()) {
        Item it = std::move(stack.back());
        stack.pop_back();
        if (it.cell.level == n) {
            // a difference of two distribution-function values loses everything below F * eps
            if (cm.usable() && it.mass.width() > 1e-9 * it.mass.upper)
                it.mass = cm.local_mass(it.cell.lo(), it.cell.hi(), it.ctx);
            out.push_back({it.cell, it.mass});
            continue;
        }
        // push right first so cells come out in increasing order
        Item l{it.cell.left_child(), {}, it.flo, {}, it.ctx}, r{it.cell.right_child(), {}, {}, it.fhi, it.ctx};
        if (cm.usable()) {
            const long double mid = l.cell.hi();
            l.fhi = r.flo = cm.cdf(mid);
            l.mass = cm.mass(l.cell.lo(), mid, l.flo, l.fhi);
            r.mass = cm.mass(mid, r.cell.hi(), r.flo, r.fhi);
            cm.narrow(l.ctx, l.cell.lo(), l.cell.hi());
            cm.narrow(r.ctx, r.cell.lo(), r.cell.hi());
        } else {
            l.mass = cell_mass(m, l.cell, opt);
            r.mass = cell_mass(m, r.cell, opt);
        }
        if (r.mass.upper > detect) stack.push_back(std::move(r));
        if (l.mass.upper > detect) stack.push_back(std::move(l));
    }
    return out;
}

}  // namespace

std::vector<CellMass> dyadic_mass_vector(const MeasureSpec& m, int n, const QueryOptions& opt, double detect) {
    check_level(n);
    require(detect >= 0, "dyadic_mass_vector: detection threshold must be nonnegative");
    if (const auto* s = m.as<Sum>()) {
        auto v = merge_vectors(dyadic_mass_vector(*s->left, n, opt, 0.0), dyadic_mass_vector(*s->right, n, opt, 0.0));
        std::erase_if(v, [&](const CellMass& c) { return c.mass.upper <= detect; });
        return v;
    }
    if (const auto* s = m.as<SelfSimilar>(); s && m.has_overlapping_ifs()) {
        auto v = overlap_distribution(*s, n, opt);
        std::erase_if(v, [&](const CellMass& c) { return c.mass.upper <= detect; });
        return v;
    }
    return tree_vector(m, n, opt, detect);
}

// ---------------------------------------------------------------------------
// transforms

namespace {

bool near_dyadic(long double y, int L) {
    const long double u = std::ldexp(y, L);
    const long double frac = u - std::floor(u);
    return frac < 0.25L || frac > 0.75L;
}

}  // namespace

DyadicShift shift_off_dyadics(const MeasureSpec& m, double budget, int max_level) {
    require(m.has_atoms(), "shift_off_dyadics: measure has no atoms");
    require(std::isfinite(budget) && budget >= 0, "shift_off_dyadics: budget must be nonnegative");
    check_level(max_level);
    const auto atoms = detail::atoms_ld(m);
    const auto [a, b] = m.hull();
    const long double room = std::min<long double>(budget, (1.0L - b) * 0.5L);
    constexpr int kCandidates = 1 << 16;
    for (int j = 0; j <= kCandidates; ++j) {
        const double alpha = static_cast<double>(room * j / kCandidates);
        bool ok = true;
        for (long double x : atoms.pos) {
            if (near_dyadic(x + alpha, max_level)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            if (alpha == 0.0) return {m, 0.0};
            return {make_shifted(m, alpha), alpha};
        }
        if (room == 0) break;
    }
    throw NumericFailure("shift_off_dyadics: no admissible offset within the scan budget");
}

MeasureSpec affine_pushforward(const MeasureSpec& m, double c, double d) {
    require(std::isfinite(c) && c > 0 && std::isfinite(d), "affine_pushforward: need c > 0 and finite d");
    if (const auto* s = m.as<Shifted>()) {
        // compose (c,d) after (s.scale, s.offset)
        const long double sc = static_cast<long double>(c) * s->scale;
        const long double off = static_cast<long double>(c) * s->offset + d;
        if (sc == 1.0L && off == 0.0L) return *s->inner;
        return MeasureSpec(Shifted{s->inner, static_cast<double>(off), static_cast<double>(sc)});
    }
    if (c == 1.0 && d == 0.0) return m;
    return make_shifted(m, d, c);
}

MeasureSpec discretize_to_atoms(const MeasureSpec& m, int n, Placement placement, const QueryOptions& opt) {
    check_level(n);
    const auto cells = dyadic_mass_vector(m, n, opt);
    require(!cells.empty(), "discretize_to_atoms: no positive-mass cells");
    Atomic out;
    std::vector<CellMass> finer;
    const detail::AtomListLD atoms = m.has_atoms() ? detail::atoms_ld(m) : detail::AtomListLD{};
    const bool purely_atomic = m.as<Atomic>() != nullptr ||
                               (m.as<Shifted>() && m.as<Shifted>()->inner->as<Atomic>() != nullptr);
    const int fine = std::min(kMaxLevel, n + 8);
    if (placement == Placement::Barycenter && !purely_atomic) finer = dyadic_mass_vector(m, fine, opt);
    std::size_t fi = 0, ai = 0;
    for (const auto& cm : cells) {
        long double pos = 0.5L * (cm.cell.lo() + cm.cell.hi());
        if (placement == Placement::Barycenter) {
            long double num = 0, den = 0;
            if (purely_atomic) {
                // atoms and cells are both sorted
                while (ai < atoms.pos.size() && atoms.pos[ai] <= cm.cell.lo()) ++ai;
                for (; ai < atoms.pos.size() && atoms.pos[ai] <= cm.cell.hi(); ++ai) {
                    num += atoms.pos[ai] * atoms.mass[ai];
                    den += atoms.mass[ai];
                }
            } else {
                const long double hi = cm.cell.hi();
                while (fi < finer.size() && finer[fi].cell.hi() <= hi) {
                    const long double mid = 0.5L * (finer[fi].cell.lo() + finer[fi].cell.hi());
                    num += mid * finer[fi].mass.mid();
                    den += finer[fi].mass.mid();
                    ++fi;
                }
            }
            if (den > 0) pos = num / den;
        }
        const double p = static_cast<double>(pos);
        const double w = cm.mass.mid();
        if (w <= 0) continue;
        if (!out.positions.empty() && p <= out.positions.back()) {
            out.masses.back() += w;
            continue;
        }
        out.positions.push_back(p);
        out.masses.push_back(w);
    }
    return MeasureSpec(std::move(out));
}

}  // namespace kf
