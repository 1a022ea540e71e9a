#include "kf/partition.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <type_traits>

#include "detail.hpp"

namespace kf {

namespace {

double product(double mass, const DyadicCell& c) { return static_cast<double>(mass * c.length()); }

// Depth-first traversal of all positive-mass cells whose parent has nu Lambda >= t_min, where t_min
// is the smallest of the decision thresholds. `visit(cell, v, vparent)` is called for each such cell.
//
// Callers only ever compare v with the thresholds, so masses are first computed coarsely: the
// distribution-function walks stop once their truncation cannot move v by more than a small fraction
// of t_min. A cell is recomputed at full precision only when a threshold falls inside its certified
// range of v; otherwise every value in the range leads to the same decisions.
template <class Visit>
class Traversal {
public:
    Traversal(const MeasureSpec& m, std::vector<double> thresholds, const PartitionOptions& opt, Visit& visit)
        : m_(m), cm_(m, opt.query), crit_(std::move(thresholds)), opt_(opt), visit_(visit) {
        require(!crit_.empty(), "partition: no thresholds");
        std::sort(crit_.begin(), crit_.end());
        t_min_ = crit_.front();
        require(t_min_ > 0 && std::isfinite(crit_.back()), "partition: threshold must be positive");
        require(opt.max_level >= 0 && opt.max_level <= kMaxLevel, "partition: max level out of range");
        nw_ = cm_.usable() ? cm_.walks() : 0;
    }

    std::size_t run() {
        frames_.resize(2 * static_cast<std::size_t>(opt_.max_level) + 4);
        Frame& root = frames_.back();
        root.cell = {0, 1};
        double mass;
        if (cm_.usable()) {
            root.flo = cm_.cdf(0.0L);
            root.fhi = cm_.cdf(1.0L);
            root.own = cm_.root_contexts();
            root.ctx = &root.own;
            mass = cm_.mass(0.0L, 1.0L, root.flo, root.fhi).mid();
        } else {
            mass = cell_mass(m_, root.cell, opt_.query).mid();
        }
        if (mass > 0) explore(root, product(mass, root.cell), std::numeric_limits<double>::infinity());
        return visited_;
    }

private:
    using CM = detail::CdfMasses;
    struct Frame {
        DyadicCell cell;
        CM::Values flo, fhi;
        const CM::Contexts* ctx = nullptr;  // own, or an ancestor's
        CM::Contexts own;
    };
    static constexpr long double kCoarse = 1.0L / 64;
    // contexts are only narrowed for cells this far above the smallest threshold; below that the
    // remaining subtree is too small to repay the descent
    static constexpr double kNarrowFactor = 16;

    const MeasureSpec& m_;
    const CM cm_;
    std::vector<double> crit_;  // ascending
    double t_min_ = 0;
    const PartitionOptions& opt_;
    Visit& visit_;
    std::size_t nw_ = 0;
    std::size_t visited_ = 0;
    std::vector<Frame> frames_;  // two per level, reused along the recursion

    bool ambiguous(long double vlo, long double vhi) const {
        vlo *= 1 - 1e-15L;
        vhi *= 1 + 1e-15L;
        const auto it = std::upper_bound(crit_.begin(), crit_.end(), static_cast<double>(vlo));
        return it != crit_.end() && *it <= vhi;
    }

    // v of a child whose end values are set; refines them when a decision depends on it
    double settle(Frame& c) const {
        const long double a = c.cell.lo(), b = c.cell.hi(), len = c.cell.length();
        MassBounds mb = cm_.mass(a, b, c.flo, c.fhi);
        if (mb.upper <= 0) return 0;
        if (ambiguous(mb.lower * len, mb.upper * len)) {
            const long double wmin = opt_.query.tol / 2;
            const CM::Values fa = cm_.cdf(a, *c.ctx, c.flo, c.fhi, wmin);
            const CM::Values fb = cm_.cdf(b, *c.ctx, c.flo, c.fhi, wmin);
            c.flo = fa;
            c.fhi = fb;
            mb = cm_.mass(a, b, c.flo, c.fhi);
        }
        return product(mb.mid(), c.cell);
    }

    void explore(Frame& nd, double v, double vparent) {
        if (++visited_ > opt_.node_budget)
            throw NumericFailure("partition: node budget of " + std::to_string(opt_.node_budget) + " exhausted");
        visit_(nd.cell, v, vparent);
        if (v < t_min_) return;
        if (nd.cell.level >= opt_.max_level)
            throw NumericFailure("partition: cell at level " + std::to_string(nd.cell.level) +
                                 " still exceeds the threshold (atom or insufficient max level)");
        Frame& l = frames_[2 * static_cast<std::size_t>(nd.cell.level)];
        Frame& r = frames_[2 * static_cast<std::size_t>(nd.cell.level) + 1];
        l.cell = nd.cell.left_child();
        r.cell = nd.cell.right_child();
        double vl, vr;
        if (cm_.usable()) {
            const bool narrow = v >= kNarrowFactor * t_min_;
            for (Frame* c : {&l, &r}) {
                if (narrow) {
                    for (std::size_t i = 0; i < nw_; ++i) c->own[i] = (*nd.ctx)[i];
                    cm_.narrow(c->own, c->cell.lo(), c->cell.hi());
                    c->ctx = &c->own;
                } else {
                    c->ctx = nd.ctx;
                }
            }
            const long double mid = l.cell.hi();
            const long double wmin = std::max<long double>(
                opt_.query.tol / 2, kCoarse * t_min_ / (2 * static_cast<long double>(std::max<std::size_t>(nw_, 1)) *
                                                        l.cell.length()));
            // the left context contains mid; a flat component is constant on the left cell
            const CM::Values fm = cm_.cdf(mid, *l.ctx, nd.flo, nd.flo, wmin);
            for (std::size_t i = 0; i < nw_; ++i) {
                l.flo[i] = nd.flo[i];
                l.fhi[i] = r.flo[i] = fm[i];
                r.fhi[i] = nd.fhi[i];
            }
            vl = settle(l);
            vr = settle(r);
        } else {
            vl = product(cell_mass(m_, l.cell, opt_.query).mid(), l.cell);
            vr = product(cell_mass(m_, r.cell, opt_.query).mid(), r.cell);
        }
        if (vl > 0) explore(l, vl, v);
        if (vr > 0) explore(r, vr, v);
    }
};

template <class Visit>
std::size_t traverse(const MeasureSpec& m, std::vector<double> thresholds, const PartitionOptions& opt, Visit&& visit) {
    Traversal<std::remove_reference_t<Visit>> t(m, std::move(thresholds), opt, visit);
    return t.run();
}

void check_dyadic_atom(const detail::AtomListLD& atoms, const DyadicCell& c, const PartitionOptions& opt) {
    if (opt.allow_atom_cuts || atoms.pos.empty() || c.hi() >= 1.0L) return;
    if (detail::is_atom_position(atoms, c.hi()))
        throw InvalidInput("partition: atom at the dyadic point " + std::to_string(static_cast<double>(c.hi())) +
                           " (level " + std::to_string(c.level) + "); shift the measure off dyadic points first");
}

}  // namespace

StoppingPartition stopping_partition(const MeasureSpec& m, double t, const PartitionOptions& opt) {
    const auto atoms = detail::atoms_ld(m);
    StoppingPartition p;
    p.threshold = t;
    std::size_t refined = 0;
    p.nodes_visited = traverse(m, {t}, opt, [&](const DyadicCell& c, double v, double) {
        if (v >= t) {
            ++refined;
            return;
        }
        check_dyadic_atom(atoms, c, opt);
        p.cells.push_back(c);
    });
    // the traversal visits left children first, so cells arrive sorted
    p.cardinality = p.cells.size();
    // children of refined cells that were never visited carry no mass
    p.zero_mass_leaves = 2 * refined + 1 - p.nodes_visited;
    return p;
}

std::size_t heavy_cell_count(const MeasureSpec& m, double t, const PartitionOptions& opt) {
    std::size_t q = 0;
    traverse(m, {t}, opt, [&](const DyadicCell&, double v, double) { q += v >= t; });
    return q;
}

std::vector<std::size_t> NR_curve(const MeasureSpec& m, const std::vector<double>& x_grid, const PartitionOptions& opt) {
    if (x_grid.empty()) return {};
    for (double x : x_grid) require(x > 0 && std::isfinite(x), "NR: x must be positive");
    // thresholds in decreasing order
    std::vector<std::size_t> order(x_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x_grid[a] < x_grid[b]; });
    std::vector<double> t(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) t[i] = 1.0 / x_grid[order[i]];
    std::vector<long long> diff(t.size() + 1, 0);
    const auto atoms = detail::atoms_ld(m);
    auto first_leq = [&](double v) {
        return static_cast<std::size_t>(std::partition_point(t.begin(), t.end(), [&](double s) { return s > v; }) -
                                        t.begin());
    };
    traverse(m, t, opt, [&](const DyadicCell& c, double v, double vparent) {
        // leaf exactly for thresholds in (v, vparent]
        const std::size_t a = first_leq(vparent), b = first_leq(v);
        if (a >= b) return;
        check_dyadic_atom(atoms, c, opt);
        ++diff[a];
        --diff[b];
    });
    std::vector<std::size_t> out(x_grid.size());
    long long run = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        run += diff[i];
        out[order[i]] = static_cast<std::size_t>(run);
    }
    return out;
}

std::size_t NR_upper(const MeasureSpec& m, double x, const PartitionOptions& opt) { return NR_curve(m, {x}, opt)[0]; }

// ---------------------------------------------------------------------------
// Birman-Solomjak partitions

GammaResult gamma_n(const MeasureSpec& m, std::size_t n, GammaMode mode, const PartitionOptions& opt) {
    require(n >= 1, "gamma_n: n must be at least 1");
    if (mode == GammaMode::Bisection)
        require(!m.has_atoms(), "gamma_n: the bisection construction needs a measure without atoms");
    struct Piece {
        long double lo, hi;
        double mass;  // upper bound
        double prod() const { return static_cast<double>(mass * (hi - lo)); }
        bool operator<(const Piece& o) const { return prod() < o.prod(); }
    };
    auto mass_of = [&](long double lo, long double hi) { return interval_mass(m, lo, hi, Closure::LeftOpen, opt.query); };
    std::priority_queue<Piece> heap;
    heap.push({0.0L, 1.0L, mass_of(0.0L, 1.0L).upper});
    while (heap.size() < n) {
        const Piece p = heap.top();
        heap.pop();
        long double cut = 0.5L * (p.lo + p.hi);
        if (mode == GammaMode::Bisection && p.mass > 0) {
            // t F(t) = 1/4 with F the normalised distribution function of nu restricted to the piece
            const long double len = p.hi - p.lo;
            const double total = mass_of(p.lo, p.hi).mid();
            long double a = 0.25L, b = 1.0L;
            for (int it = 0; it < 200 && b - a > 4 * LDBL_EPSILON; ++it) {
                const long double s = 0.5L * (a + b);
                const double F = mass_of(p.lo, p.lo + s * len).mid() / total;
                if (s * F < 0.25L) a = s;
                else b = s;
            }
            cut = p.lo + 0.5L * (a + b) * len;
        }
        require(cut > p.lo && cut < p.hi, "gamma_n: pieces are too small to split further");
        heap.push({p.lo, cut, mass_of(p.lo, cut).upper});
        heap.push({cut, p.hi, mass_of(cut, p.hi).upper});
    }
    GammaResult r;
    r.cells = heap.size();
    while (!heap.empty()) {
        const Piece p = heap.top();
        heap.pop();
        r.bound = std::max(r.bound, p.prod());
        r.partition.push_back({static_cast<double>(p.lo), static_cast<double>(p.hi)});
    }
    std::sort(r.partition.begin(), r.partition.end());
    return r;
}

// ---------------------------------------------------------------------------
// coarse multifractal counts

std::vector<double> default_alpha_grid() {
    std::vector<double> g(48);
    const double a = std::log(0.05), b = std::log(8.0);
    for (int i = 0; i < 48; ++i) g[i] = std::exp(a + (b - a) * i / 47.0);
    g.front() = 0.05;
    g.back() = 8.0;
    return g;
}

CoarseTable coarse_counts(const MeasureSpec& m, int n, const std::vector<double>& alpha_grid, const QueryOptions& query) {
    require(n >= 0 && n <= kMaxLevel, "coarse counts: level out of range");
    for (double a : alpha_grid) require(a > 0, "coarse counts: alphas must be positive");
    CoarseTable t{n, alpha_grid, std::vector<std::size_t>(alpha_grid.size(), 0)};
    if (alpha_grid.empty()) return t;
    const double amax = *std::max_element(alpha_grid.begin(), alpha_grid.end());
    const double detect = std::exp2(-amax * n) * (1 - 1e-12);
    const auto cells = dyadic_mass_vector(m, n, query, detect);
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        const double thr = std::exp2(-alpha_grid[i] * n);
        for (const auto& c : cells) t.counts[i] += c.mass.mid() >= thr;
    }
    return t;
}

FEstimate F_estimate(const MeasureSpec& m, const std::vector<int>& levels, const std::vector<double>& alpha_grid,
                     double tail_fraction, const QueryOptions& query) {
    require(levels.size() >= 3, "F_estimate: need at least three levels");
    require(!alpha_grid.empty(), "F_estimate: empty alpha grid");
    FEstimate f;
    for (int n : levels) {
        require(n >= 1, "F_estimate: levels must be positive");
        f.tables.push_back(coarse_counts(m, n, alpha_grid, query));
    }
    const std::size_t k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(levels.size()) - 1e-12)), 1,
        levels.size());
    const std::size_t first = levels.size() - k;
    f.lower = f.upper = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t j = first; j < levels.size(); ++j) {
            const double c = static_cast<double>(f.tables[j].counts[a]);
            const double v = (c > 1 ? std::log(c) : 0.0) / (levels[j] * std::numbers::ln2);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double s = 1.0 / (1 + alpha_grid[a]);
        f.lower = std::max(f.lower, lo * s);
        if (hi * s > f.upper) {
            f.upper = hi * s;
            f.argmax_alpha = alpha_grid[a];
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// packings

namespace {

struct Candidate {
    long double lo, hi;
};

std::vector<Interval> to_witness(const std::vector<Candidate>& c) {
    std::vector<Interval> w;
    w.reserve(c.size());
    for (const auto& x : c) w.push_back({static_cast<double>(x.lo), static_cast<double>(x.hi), Closure::LeftOpen});
    return w;
}

// earliest right endpoint first: optimal among the given candidates
std::vector<Candidate> schedule(std::vector<Candidate>& cands) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.hi < b.hi || (a.hi == b.hi && a.lo > b.lo);
    });
    std::vector<Candidate> chosen;
    long double end = -1.0L;
    for (const auto& c : cands)
        if (c.lo >= end) {
            chosen.push_back(c);
            end = c.hi;
        }
    return chosen;
}

}  // namespace

PackingResult NL_m_lower(const MeasureSpec& m, double x, double mm, const PackingOptions& opt) {
    require(x > 0 && std::isfinite(x), "NL: x must be positive");
    require(mm > 1 && mm <= 3, "NL: m must lie in (1,3]");
    PackingResult best{x, mm, 0, {}, "cells"};
    const double tau = 4.0 / (x * (mm - 1));
    const long double pad = 0.5L * (static_cast<long double>(mm) - 1.0L);
    if (!(tau < m.total_mass())) return best;

    // (a) every dyadic cell C with nu(C) Lambda(C) >= tau, padded so that its centred m-part is C
    std::vector<Candidate> cands;
    traverse(m, {tau}, opt.partition, [&](const DyadicCell& c, double v, double) {
        if (v < tau) return;
        const long double len = c.length();
        const long double lo = c.lo() - pad * len, hi = c.hi() + pad * len;
        if (lo >= 0.0L && hi <= 1.0L) cands.push_back({lo, hi});
    });
    {
        auto chosen = schedule(cands);
        best.count = chosen.size();
        if (opt.keep_witness) best.witness = to_witness(chosen);
    }

    // (b) every third heavy cell of the coarse count at level n_x^alpha
    for (double alpha : opt.alpha_grid) {
        const double nx = std::floor(std::log(x / 2) / (std::numbers::ln2 * (alpha + 1)));
        if (nx < 1 || nx > opt.coarse_max_level) continue;
        const int n = static_cast<int>(nx);
        const double thr = std::exp2(-alpha * n);
        const auto cells = dyadic_mass_vector(m, n, opt.partition.query, thr * (1 - 1e-12));
        std::vector<const CellMass*> heavy;
        for (const auto& c : cells)
            if (c.mass.mid() >= thr) heavy.push_back(&c);
        std::vector<Candidate> chosen;
        for (std::size_t i = 1; i < heavy.size(); i += 3) {
            const DyadicCell& c = heavy[i]->cell;
            if (product(heavy[i]->mass.mid(), c) < tau) continue;
            const long double len = c.length();
            const long double lo = c.lo() - pad * len, hi = c.hi() + pad * len;
            if (lo >= 0.0L && hi <= 1.0L) chosen.push_back({lo, hi});
        }
        if (chosen.size() > best.count) {
            best.count = chosen.size();
            best.source = "coarse";
            best.witness = opt.keep_witness ? to_witness(chosen) : std::vector<Interval>{};
        }
    }
    return best;
}

std::vector<std::size_t> NL_curve(const MeasureSpec& m, const std::vector<double>& x_grid, double mm,
                                  const PartitionOptions& opt) {
    require(mm > 1 && mm <= 3, "NL: m must lie in (1,3]");
    std::vector<std::size_t> out(x_grid.size(), 0);
    std::vector<double> taus;
    for (double x : x_grid) {
        require(x > 0 && std::isfinite(x), "NL: x must be positive");
        const double tau = 4.0 / (x * (mm - 1));
        if (tau < m.total_mass()) taus.push_back(tau);
    }
    if (taus.empty()) return out;
    const double tau_min = *std::min_element(taus.begin(), taus.end());
    const long double pad = 0.5L * (static_cast<long double>(mm) - 1.0L);
    struct Weighted {
        Candidate c;
        double v;
    };
    std::vector<Weighted> cands;
    traverse(m, taus, opt, [&](const DyadicCell& c, double v, double) {
        if (v < tau_min) return;
        const long double len = c.length();
        const long double lo = c.lo() - pad * len, hi = c.hi() + pad * len;
        if (lo >= 0.0L && hi <= 1.0L) cands.push_back({{lo, hi}, v});
    });
    std::sort(cands.begin(), cands.end(), [](const Weighted& a, const Weighted& b) {
        return a.c.hi < b.c.hi || (a.c.hi == b.c.hi && a.c.lo > b.c.lo);
    });
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const double tau = 4.0 / (x_grid[i] * (mm - 1));
        if (!(tau < m.total_mass())) continue;
        long double end = -1.0L;
        std::size_t n = 0;
        for (const auto& w : cands)
            if (w.v >= tau && w.c.lo >= end) {
                ++n;
                end = w.c.hi;
            }
        out[i] = n;
    }
    return out;
}

bool verify_packing(const MeasureSpec& m, const PackingResult& p, const QueryOptions& query) {
    if (p.witness.size() != p.count) return false;
    const double tau = 4.0 / (p.x * (p.m - 1));
    long double end = -1.0L;
    for (const auto& I : p.witness) {
        if (I.lo < end || I.hi <= I.lo || I.lo < 0 || I.hi > 1) return false;
        end = I.hi;
        const long double len = static_cast<long double>(I.hi) - I.lo;
        const long double c = 0.5L * (static_cast<long double>(I.lo) + I.hi);
        const long double h = 0.5L * len / p.m;
        const MassBounds mb = interval_mass(m, c - h, c + h, Closure::LeftOpen, query);
        if (mb.mid() * static_cast<double>(2 * h) < tau * (1 - 1e-9)) return false;
    }
    return true;
}

}  // namespace kf
