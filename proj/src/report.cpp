#include "kf/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace kf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LineFit {
    double slope = 0, intercept = 0, r2 = 0;
};

LineFit fit_line(const std::vector<double>& X, const std::vector<double>& Y) {
    const double n = static_cast<double>(X.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        mx += X[i];
        my += Y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        sxx += (X[i] - mx) * (X[i] - mx);
        sxy += (X[i] - mx) * (Y[i] - my);
        syy += (Y[i] - my) * (Y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1;
    return f;
}

// Value of a sequence a_n = a + c/n extrapolated to n = infinity by least squares in 1/n.
double extrapolate_inverse_level(const std::vector<std::pair<int, double>>& seq) {
    if (seq.size() < 3) return kNaN;
    std::vector<double> X, Y;
    for (const auto& [n, v] : seq) {
        X.push_back(1.0 / n);
        Y.push_back(v);
    }
    return fit_line(X, Y).intercept;
}

Estimate liminf_of(const SlopeEstimate& s, std::string src) {
    return Estimate::band(s.lower, s.lower_corrected, std::move(src));
}
Estimate limsup_of(const SlopeEstimate& s, std::string src) {
    return Estimate::band(s.upper, s.upper_corrected, std::move(src));
}

Verdict compare(std::string what, const Estimate& a, const Estimate& b, double slack) {
    Verdict v;
    v.inequality = std::move(what);
    v.slack = slack;
    v.lhs = a.value;
    v.rhs = b.value;
    v.lhs_lo = a.lo;
    v.rhs_hi = b.hi;
    v.evaluated = a.available() && b.available();
    if (v.evaluated) {
        v.holds = a.lo <= b.hi + slack;
        v.holds_central = a.value <= b.value + slack;
    }
    return v;
}

bool purely_atomic(const MeasureSpec& m) {
    if (!m.has_atoms()) return false;
    double total = 0;
    for (double p : atoms_of(m).masses) total += p;
    return std::abs(total - m.total_mass()) <= 1e-12 * m.total_mass();
}

// tasks run on up to `workers` threads; each stores its own result, so the outcome does not depend
// on the schedule
void run_tasks(std::vector<std::function<void()>>& tasks, unsigned workers) {
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i; (i = next++) < tasks.size();) {
            try {
                tasks[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(tasks.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < n; ++i) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string fmt_m(double m) { return fmt::format("{:g}", m); }

}  // namespace

SlopeEstimate slope_estimates(const std::vector<double>& x, const std::vector<double>& counts, double tail_fraction) {
    require(x.size() == counts.size(), "slope: grid and counts differ in length");
    std::vector<double> X, Y;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] > 1 && std::isfinite(x[i]), "slope: grid points must exceed 1");
        require(counts[i] >= 0, "slope: counts must be nonnegative");
        if (counts[i] > 0) {
            X.push_back(std::log(x[i]));
            Y.push_back(std::log(counts[i]));
        }
    }
    require(!X.empty(), "slope: all counts are zero");
    require(X.size() >= 6, "slope: need at least 6 grid points with positive counts");
    SlopeEstimate s;
    s.positive_points = X.size();
    const LineFit f = fit_line(X, Y);
    s.ls_slope = f.slope;
    s.intercept = f.intercept;
    s.r2 = f.r2;
    s.window = tail_range(x.size(), tail_fraction);
    s.lower = s.lower_corrected = std::numeric_limits<double>::infinity();
    s.upper = s.upper_corrected = -std::numeric_limits<double>::infinity();
    for (std::size_t i = s.window.first; i < s.window.second; ++i) {
        const double lx = std::log(x[i]);
        const double ly = counts[i] > 1 ? std::log(counts[i]) : 0.0;
        const double r = ly / lx, c = (ly - f.intercept) / lx;
        s.lower = std::min(s.lower, r);
        s.upper = std::max(s.upper, r);
        s.lower_corrected = std::min(s.lower_corrected, c);
        s.upper_corrected = std::max(s.upper_corrected, c);
    }
    return s;
}

SlopeEstimate slope_estimates(const std::vector<double>& x, const std::vector<std::size_t>& counts,
                              double tail_fraction) {
    return slope_estimates(x, std::vector<double>(counts.begin(), counts.end()), tail_fraction);
}

std::vector<double> geometric_grid(double start, double stop, std::size_t points) {
    require(start > 0 && std::isfinite(stop) && start < stop, "grid: need 0 < start < stop");
    require(points >= 2, "grid: need at least two points");
    std::vector<double> g(points);
    const double a = std::log(start), b = std::log(stop);
    for (std::size_t i = 0; i < points; ++i) {
        g[i] = std::exp(a + (b - a) * static_cast<double>(i) / (points - 1));
        // snap decades so that 1e3:1e12:10 gives exact powers of ten
        const double e = std::round(std::log10(g[i]));
        if (std::abs(e) <= 22 && std::abs(g[i] / std::pow(10.0, e) - 1) < 1e-12) g[i] = std::pow(10.0, e);
    }
    g.front() = start;
    g.back() = stop;
    return g;
}

std::vector<double> pow2_grid(int a, int b, int step) {
    require(step >= 1 && a <= b, "grid: need a <= b and a positive step");
    require(a > -1000 && b < 1000, "grid: exponent out of range");
    std::vector<double> g;
    for (int k = a; k <= b; k += step) g.push_back(std::ldexp(1.0, k));
    return g;
}

Estimate Estimate::point(double v, std::string source) { return {v, v, v, std::move(source)}; }

Estimate Estimate::band(double v, double other, std::string source) {
    if (!(other == other)) return point(v, std::move(source));
    return {v, std::min(v, other), std::max(v, other), std::move(source)};
}

bool DimReport::chain_holds() const {
    return std::all_of(chain.begin(), chain.end(), [](const Verdict& v) { return v.evaluated && v.holds; });
}

bool DimReport::sandwich_holds() const {
    return std::all_of(sandwich.begin(), sandwich.end(), [](const Verdict& v) { return v.evaluated && v.holds; });
}

DimReport full_report(const MeasureSpec& m, const ReportConfig& cfg, std::string measure_id) {
    require(!cfg.levels.empty(), "report: no levels");
    require(cfg.x_grid.size() >= 6, "report: the x-grid needs at least 6 points");
    require(std::is_sorted(cfg.x_grid.begin(), cfg.x_grid.end()), "report: the x-grid must increase");
    require(!cfg.m_list.empty(), "report: empty m list");
    require(cfg.slack >= 0, "report: slack must be nonnegative");

    DimReport r;
    r.measure_id = std::move(measure_id);
    r.slack = cfg.slack;
    r.requested_points = cfg.x_grid.size();
    const bool exact = cfg.counting == Counting::ExactAtomic ||
                       (cfg.counting == Counting::Auto && purely_atomic(m));
    if (cfg.counting == Counting::ExactAtomic)
        require(purely_atomic(m), "report: exact counting needs a purely atomic measure");
    r.counting = exact ? "exact-atomic" : "bracket-only";

    PartitionOptions po = cfg.partition;
    po.node_budget = cfg.node_budget;
    // an atom on a dyadic cut is harmless for the counts, see PartitionOptions
    if (m.has_atoms()) po.allow_atom_cuts = true;

    std::mutex note_mu;
    auto note = [&](std::string what, const std::exception& e) {
        std::lock_guard lk(note_mu);
        r.missing.push_back(what);
        r.warnings.push_back(what + ": " + e.what());
    };

    // ---- level sequences and partition curves
    std::vector<std::pair<int, double>> qn;
    std::vector<std::pair<int, std::unique_ptr<LevelSum>>> sums;
    FEstimate F;
    bool have_F = false;
    std::vector<std::function<void()>> phase1;
    phase1.push_back([&] {
        std::vector<int> levels = cfg.levels;
        std::sort(levels.begin(), levels.end());
        for (int n : levels) {
            try {
                auto s = std::make_unique<LevelSum>(m, n, cfg.lq);
                qn.push_back({n, fixed_point(*s)});
                sums.push_back({n, std::move(s)});
            } catch (const NumericFailure& e) {
                note("q_" + std::to_string(n), e);
            }
        }
    });
    phase1.push_back([&] {
        try {
            std::vector<int> levels = cfg.levels;
            std::sort(levels.begin(), levels.end());
            F = F_estimate(m, levels, cfg.alpha_grid, cfg.tail_fraction, cfg.lq.query);
            have_F = true;
        } catch (const NumericFailure& e) {
            note("F", e);
        }
    });
    phase1.push_back([&] {
        // cut the grid where the traversal would exceed the node budget: node counts follow NR
        // roughly (about 4 NR in practice); a failed run drops the last two points and retries
        const std::size_t probe = std::min<std::size_t>(6, cfg.x_grid.size());
        std::vector<double> xs(cfg.x_grid.begin(), cfg.x_grid.begin() + static_cast<std::ptrdiff_t>(probe));
        try {
            const auto c = NR_curve(m, xs, po);
            std::vector<double> X, Y;
            for (std::size_t i = 0; i < c.size(); ++i)
                if (c[i] > 0) {
                    X.push_back(std::log(xs[i]));
                    Y.push_back(std::log(static_cast<double>(c[i])));
                }
            const double slope = X.size() >= 2 ? std::max(0.0, fit_line(X, Y).slope) : 0.5;
            const double last = std::max<double>(1, static_cast<double>(c.back()));
            std::size_t k = probe;
            while (k < cfg.x_grid.size() &&
                   4 * last * std::pow(cfg.x_grid[k] / xs.back(), slope) <= static_cast<double>(cfg.node_budget))
                ++k;
            for (;;) {
                std::vector<double> prefix(cfg.x_grid.begin(), cfg.x_grid.begin() + static_cast<std::ptrdiff_t>(k));
                try {
                    r.nr_counts = NR_curve(m, prefix, po);
                    r.x_grid = std::move(prefix);
                    break;
                } catch (const NumericFailure&) {
                    if (k <= probe) throw;
                    k = std::max(probe, k - 2);
                }
            }
        } catch (const NumericFailure& e) {
            note("NR", e);
        }
    });
    run_tasks(phase1, cfg.workers);

    if (r.x_grid.size() < r.requested_points && !r.x_grid.empty())
        r.warnings.push_back(fmt::format("x-grid cut to {} of {} points (x <= {:.6g}) by the node budget",
                                         r.x_grid.size(), r.requested_points, r.x_grid.back()));

    std::vector<std::function<void()>> phase2;
    r.nl_counts.resize(cfg.m_list.size());
    if (!r.x_grid.empty()) {
        for (std::size_t i = 0; i < cfg.m_list.size(); ++i) {
            phase2.push_back([&, i] {
                r.nl_counts[i].first = cfg.m_list[i];
                try {
                    r.nl_counts[i].second = NL_curve(m, r.x_grid, cfg.m_list[i], po);
                } catch (const NumericFailure& e) {
                    note("NL_" + fmt_m(cfg.m_list[i]), e);
                }
            });
        }
        if (exact)
            phase2.push_back([&] {
                const Pencil p = assemble(m, Interval{0.0, 1.0, Closure::Closed}, cfg.bc);
                for (double x : r.x_grid) r.exact_counts.push_back(count_leq(p, x));
            });
    }
    run_tasks(phase2, cfg.workers);

    // ---- estimates
    auto slope_or_note = [&](const std::vector<std::size_t>& c, const std::string& what, SlopeEstimate& out) {
        if (c.empty()) return false;
        try {
            out = slope_estimates(r.x_grid, c, cfg.tail_fraction);
            return true;
        } catch (const InvalidInput& e) {
            note(what, e);
            return false;
        }
    };
    if (slope_or_note(r.nr_counts, "NR slope", r.nr_slope)) {
        r.h_lower = liminf_of(r.nr_slope, "NR");
        r.h_upper = limsup_of(r.nr_slope, "NR");
    }
    for (const auto& [mm, c] : r.nl_counts) {
        SlopeEstimate s;
        if (slope_or_note(c, "NL_" + fmt_m(mm) + " slope", s)) {
            r.nl_slopes.push_back({mm, s});
            r.hm_lower.push_back({mm, liminf_of(s, "NL_" + fmt_m(mm))});
        }
    }
    if (exact) {
        if (slope_or_note(r.exact_counts, "exact count slope", r.exact_slope)) {
            r.s_lower = liminf_of(r.exact_slope, "exact");
            r.s_upper = limsup_of(r.exact_slope, "exact");
        }
    } else {
        // N^L_m <= N <= N^R for every m
        for (const auto& [mm, e] : r.hm_lower)
            if (!r.s_lower.available() || e.value > r.s_lower.value) r.s_lower = e;
        r.s_upper = r.h_upper;
    }

    r.q_per_level = qn;
    if (!qn.empty()) {
        const auto [a, b] = tail_range(qn.size(), cfg.tail_fraction);
        double hi = -1, lo = 2;
        for (std::size_t i = a; i < b; ++i) {
            hi = std::max(hi, qn[i].second);
            lo = std::min(lo, qn[i].second);
        }
        const double q_inf = extrapolate_inverse_level(qn);
        r.qbar = Estimate::band(hi, q_inf, "fixed points");
        r.qlow = Estimate::band(lo, q_inf, "fixed points");
        for (const auto& [n, q] : qn)
            if (q > 0.5 + 1e-9) r.warnings.push_back(fmt::format("q_{} = {:.6f} exceeds 1/2", n, q));
    }
    if (have_F) {
        for (const auto& t : F.tables) {
            double best = 0;
            for (std::size_t a = 0; a < t.alpha_grid.size(); ++a) {
                const double c = static_cast<double>(t.counts[a]);
                best = std::max(best, (c > 1 ? std::log(c) : 0.0) / (t.level * std::numbers::ln2) / (1 + t.alpha_grid[a]));
            }
            r.F_per_level.push_back({t.level, best});
        }
        const double f_inf = extrapolate_inverse_level(r.F_per_level);
        r.F_lower = Estimate::band(F.lower, f_inf, "coarse counts");
        r.F_upper = Estimate::band(F.upper, f_inf, "coarse counts");
    }

    // beta_nu is the limsup of beta_n, so delta* and delta_bar take the tail maximum over levels and
    // delta_under (a limit from q > 1, where beta is negative) the tail minimum
    const LevelSum* top = sums.empty() ? nullptr : sums.back().second.get();
    std::size_t tail_first = sums.size();
    if (top) {
        tail_first = tail_range(sums.size(), cfg.tail_fraction).first;
        try {
            r.beta = beta_curve(*top, cfg.q_grid, r.measure_id);
            r.rho = derivatives_at_one({r.beta}).rho;
            std::vector<double> qs{0.0};
            for (double q : cfg.q_grid)
                if (q > 0 && q < 1 - 2e-2 && qs.size() < 3) qs.push_back(q);
            for (double q : {1 - 1e-2, 1 - 1e-3, 1 + 1e-3, 1 + 1e-2}) qs.push_back(q);
            for (std::size_t i = tail_first; i < sums.size(); ++i) {
                const DerivativesAtOne d = derivatives_at_one({beta_curve(*sums[i].second, qs)});
                const double b0 = sums[i].second->beta(0);
                if (i == tail_first) {
                    r.delta_star = b0;
                    r.delta_bar = d.delta_upper;
                    r.delta_under = d.delta_lower;
                }
                r.delta_star = std::max(r.delta_star, b0);
                r.delta_bar = std::max(r.delta_bar, d.delta_upper);
                r.delta_under = std::min(r.delta_under, d.delta_lower);
            }
        } catch (const std::exception& e) {
            note("beta derivatives", e);
        }
    }

    // ---- verdicts
    const double sl = cfg.slack;
    for (const auto& [mm, e] : r.hm_lower)
        r.chain.push_back(compare("F_lower <= h^" + fmt_m(mm) + "_lower", r.F_lower, e, sl));
    for (const auto& [mm, e] : r.hm_lower)
        r.chain.push_back(compare("h^" + fmt_m(mm) + "_lower <= s_lower", e, r.s_lower, sl));
    r.chain.push_back(compare("s_lower <= h_lower", r.s_lower, r.h_lower, sl));
    r.chain.push_back(compare("h_lower <= h_upper", r.h_lower, r.h_upper, sl));
    r.chain.push_back(compare("h_upper <= s_upper", r.h_upper, r.s_upper, sl));
    r.chain.push_back(compare("s_upper <= h_upper", r.s_upper, r.h_upper, sl));
    r.chain.push_back(compare("s_upper <= qbar", r.s_upper, r.qbar, sl));
    r.chain.push_back(compare("qbar <= s_upper", r.qbar, r.s_upper, sl));
    r.chain.push_back(compare("qbar <= F_upper", r.qbar, r.F_upper, sl));
    r.chain.push_back(compare("F_upper <= qbar", r.F_upper, r.qbar, sl));
    if (r.hm_lower.empty()) r.missing.push_back("h^m chain links");

    const bool have_deltas = r.delta_star == r.delta_star && r.delta_bar == r.delta_bar && r.delta_under == r.delta_under;
    Estimate lower_bound, upper_bound;
    if (have_deltas) {
        lower_bound = Estimate::point(r.delta_under / (1 + r.delta_bar), "deltas");
        upper_bound = Estimate::point(r.delta_star / (1 + r.delta_star), "deltas");
    }
    r.sandwich.push_back(compare("delta_under/(1+delta_bar) <= s_lower", lower_bound, r.s_lower, sl));
    r.sandwich.push_back(compare("s_lower <= s_upper", r.s_lower, r.s_upper, sl));
    r.sandwich.push_back(compare("s_upper <= delta_star/(1+delta_star)", r.s_upper, upper_bound, sl));
    r.sandwich.push_back(compare("delta_star/(1+delta_star) <= 1/2", upper_bound, Estimate::point(0.5, "bound"), sl));

    // lower bound (a q + beta(q)) / (1 + b) with -d beta(q) = [a, b] bracketed by one-sided differences.
    // It needs beta_n(q) to converge, which the tail levels must at least not contradict.
    if (top) {
        for (double q0 : {0.0, r.qbar.value}) {
            Verdict v;
            v.inequality = fmt::format("(a q + beta(q))/(1+b) <= s_lower at q = {:.6g}", q0);
            v.slack = sl;
            if (!(q0 == q0)) {
                r.heuristic.push_back(v);
                continue;
            }
            try {
                std::vector<std::pair<int, double>> bounds;
                double bmin = std::numeric_limits<double>::infinity(), bmax = -bmin;
                for (std::size_t i = tail_first; i < sums.size(); ++i) {
                    const LevelSum& ls = *sums[i].second;
                    const double b0 = ls.beta(q0);
                    bmin = std::min(bmin, b0);
                    bmax = std::max(bmax, b0);
                    double a = std::numeric_limits<double>::infinity(), b = -a;
                    for (double h : {1e-2, 1e-3}) {
                        a = std::min(a, -(ls.beta(q0 + h) - b0) / h);
                        if (q0 - h >= 0 || ls.negative_q_allowed()) b = std::max(b, -(b0 - ls.beta(q0 - h)) / h);
                    }
                    if (b == -std::numeric_limits<double>::infinity())
                        throw NumericFailure("left difference needs negative q");
                    bounds.push_back({sums[i].first, (a * q0 + b0) / (1 + b)});
                }
                if (bmax - bmin > sl) {
                    r.warnings.push_back(fmt::format("{}: beta_n(q) spreads by {:.4f} over the tail levels, no limit",
                                                     v.inequality, bmax - bmin));
                } else {
                    double lo = bounds.front().second, hi = lo;
                    for (const auto& [n, x] : bounds) {
                        lo = std::min(lo, x);
                        hi = std::max(hi, x);
                    }
                    Estimate e{bounds.back().second, lo, hi, "Lq"};
                    const double ext = extrapolate_inverse_level(bounds);
                    if (ext == ext) {
                        e.lo = std::min(e.lo, ext);
                        e.hi = std::max(e.hi, ext);
                    }
                    v = compare(v.inequality, e, r.s_lower, sl);
                }
            } catch (const std::exception& e) {
                r.warnings.push_back(v.inequality + ": " + e.what());
            }
            r.heuristic.push_back(v);
        }
    }

    if (r.s_upper.available() && !r.beta.values.empty()) {
        r.rigidity.applies = r.s_upper.value >= 0.48;
        for (std::size_t i = 0; i < r.beta.q_grid.size(); ++i) {
            const double q = r.beta.q_grid[i];
            if (q >= 0 && q <= 1) r.rigidity.max_deviation = std::max(r.rigidity.max_deviation, std::abs(r.beta.values[i] - (1 - q)));
        }
        r.rigidity.holds = !r.rigidity.applies || r.rigidity.max_deviation <= 0.05;
    }
    if (have_deltas && r.s_upper.available()) {
        r.max_dimension.evaluated = true;
        r.max_dimension.s_at_max = std::abs(r.s_upper.value - r.delta_star / (1 + r.delta_star)) <= 0.03;
        r.max_dimension.deltas_agree = std::abs(r.delta_bar - r.delta_star) <= 0.05;
    }
    if (!r.hm_lower.empty() && r.h_upper.available()) {
        r.regularity.evaluated = true;
        r.regularity.sup_hm = -1;
        for (const auto& [mm, e] : r.hm_lower) r.regularity.sup_hm = std::max(r.regularity.sup_hm, e.value);
        r.regularity.consistent = std::abs(r.regularity.sup_hm - r.h_upper.value) <= sl;
    }

    for (const auto* e : {&r.s_lower, &r.s_upper, &r.h_lower, &r.h_upper, &r.F_lower, &r.F_upper, &r.qbar, &r.qlow})
        if (e->available() && (e->value < -sl || e->value > 0.5 + sl))
            r.warnings.push_back(fmt::format("estimate {:.6f} ({}) outside [0, 1/2] + slack", e->value, e->source));
    return r;
}

// ---------------------------------------------------------------------------
// output

namespace {

nlohmann::json to_json(const Estimate& e) {
    if (!e.available()) return nullptr;
    return {{"value", e.value}, {"lo", e.lo}, {"hi", e.hi}, {"source", e.source}};
}

nlohmann::json to_json(const SlopeEstimate& s) {
    return {{"lower", s.lower},
            {"upper", s.upper},
            {"lower_corrected", s.lower_corrected},
            {"upper_corrected", s.upper_corrected},
            {"ls_slope", s.ls_slope},
            {"intercept", s.intercept},
            {"r2", s.r2},
            {"window", {s.window.first, s.window.second}},
            {"positive_points", s.positive_points}};
}

nlohmann::json to_json(const std::vector<Verdict>& vs) {
    auto a = nlohmann::json::array();
    for (const auto& v : vs) {
        nlohmann::json j = {{"inequality", v.inequality}, {"slack", v.slack}, {"evaluated", v.evaluated}};
        if (v.evaluated) {
            j["lhs"] = v.lhs;
            j["rhs"] = v.rhs;
            j["lhs_lo"] = v.lhs_lo;
            j["rhs_hi"] = v.rhs_hi;
            j["holds"] = v.holds;
            j["holds_central"] = v.holds_central;
        }
        a.push_back(j);
    }
    return a;
}

}  // namespace

nlohmann::json report_to_json(const DimReport& r) {
    nlohmann::json j;
    j["schema"] = "kf.dimreport/1";
    j["measure"] = r.measure_id;
    j["counting"] = r.counting;
    j["slack"] = r.slack;
    j["x_grid"] = r.x_grid;
    j["requested_points"] = r.requested_points;
    j["curves"]["NR"] = r.nr_counts;
    for (const auto& [mm, c] : r.nl_counts) j["curves"]["NL"][fmt_m(mm)] = c;
    if (!r.exact_counts.empty()) j["curves"]["N"] = r.exact_counts;
    j["slopes"]["NR"] = to_json(r.nr_slope);
    for (const auto& [mm, s] : r.nl_slopes) j["slopes"]["NL"][fmt_m(mm)] = to_json(s);
    if (!r.exact_counts.empty()) j["slopes"]["N"] = to_json(r.exact_slope);
    auto& e = j["estimates"];
    e["s_lower"] = to_json(r.s_lower);
    e["s_upper"] = to_json(r.s_upper);
    e["h_lower"] = to_json(r.h_lower);
    e["h_upper"] = to_json(r.h_upper);
    for (const auto& [mm, h] : r.hm_lower) e["hm_lower"][fmt_m(mm)] = to_json(h);
    e["F_lower"] = to_json(r.F_lower);
    e["F_upper"] = to_json(r.F_upper);
    e["qbar"] = to_json(r.qbar);
    e["qlow"] = to_json(r.qlow);
    e["delta_star"] = r.delta_star;
    e["delta_bar"] = r.delta_bar;
    e["delta_under"] = r.delta_under;
    e["rho"] = r.rho;
    j["q_per_level"] = nlohmann::json::array();
    for (const auto& [n, q] : r.q_per_level) j["q_per_level"].push_back({n, q});
    j["F_per_level"] = nlohmann::json::array();
    for (const auto& [n, f] : r.F_per_level) j["F_per_level"].push_back({n, f});
    j["chain_verdicts"] = to_json(r.chain);
    j["sandwich"] = to_json(r.sandwich);
    j["heuristic_lower_bounds"] = to_json(r.heuristic);
    j["chain_holds"] = r.chain_holds();
    j["sandwich_holds"] = r.sandwich_holds();
    j["rigidity"] = {{"applies", r.rigidity.applies},
                     {"max_deviation", r.rigidity.max_deviation},
                     {"holds", r.rigidity.holds}};
    j["max_dimension"] = {{"evaluated", r.max_dimension.evaluated},
                          {"s_at_max", r.max_dimension.s_at_max},
                          {"deltas_agree", r.max_dimension.deltas_agree}};
    j["regularity"] = {{"evaluated", r.regularity.evaluated},
                       {"sup_hm_lower", r.regularity.sup_hm},
                       {"consistent", r.regularity.consistent}};
    j["warnings"] = r.warnings;
    j["missing"] = r.missing;
    return j;
}

std::string report_summary(const DimReport& r) {
    std::ostringstream o;
    auto est = [&](const char* name, const Estimate& e) {
        if (!e.available()) o << fmt::format("  {:<10} missing\n", name);
        else o << fmt::format("  {:<10} {:.4f}  [{:.4f}, {:.4f}]  {}\n", name, e.value, e.lo, e.hi, e.source);
    };
    o << "measure " << (r.measure_id.empty() ? "(unnamed)" : r.measure_id) << ", " << r.counting << " counting, "
      << r.x_grid.size() << "/" << r.requested_points << " grid points";
    if (!r.x_grid.empty()) o << fmt::format(" (x <= {:.6g})", r.x_grid.back());
    o << "\n";
    est("s_lower", r.s_lower);
    est("s_upper", r.s_upper);
    est("h_lower", r.h_lower);
    est("h_upper", r.h_upper);
    for (const auto& [mm, e] : r.hm_lower) est(("h^" + fmt_m(mm) + "_lower").c_str(), e);
    est("F_lower", r.F_lower);
    est("F_upper", r.F_upper);
    est("qbar", r.qbar);
    est("qlow", r.qlow);
    o << fmt::format("  delta* {:.4f}  delta_bar {:.4f}  delta_under {:.4f}  rho {:.4f}\n", r.delta_star, r.delta_bar,
                     r.delta_under, r.rho);
    auto verdicts = [&](const char* title, const std::vector<Verdict>& vs) {
        o << title << "\n";
        for (const auto& v : vs) {
            if (!v.evaluated) {
                o << fmt::format("  {:<48} not evaluated\n", v.inequality);
                continue;
            }
            o << fmt::format("  {:<48} {:<16} ({:.4f} vs {:.4f}{})\n", v.inequality,
                             v.holds ? "consistent with" : "violates", v.lhs, v.rhs,
                             v.holds_central ? "" : ", central proxies disagree");
        }
    };
    verdicts("chain:", r.chain);
    verdicts("sandwich:", r.sandwich);
    verdicts("heuristic lower bounds:", r.heuristic);
    if (r.rigidity.applies)
        o << fmt::format("rigidity: max |beta(q) - (1-q)| = {:.4f} on [0,1], {}\n", r.rigidity.max_deviation,
                         r.rigidity.holds ? "consistent" : "violated");
    if (r.regularity.evaluated)
        o << fmt::format("regularity: sup_m h^m_lower = {:.4f} vs h_upper = {:.4f} ({})\n", r.regularity.sup_hm,
                         r.h_upper.value, r.regularity.consistent ? "consistent with regular" : "not resolved");
    for (const auto& w : r.warnings) o << "warning: " << w << "\n";
    return o.str();
}

}  // namespace kf
