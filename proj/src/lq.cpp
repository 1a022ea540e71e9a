#include "kf/lq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace kf {

namespace {

constexpr int kBisectIters = 200;
constexpr double kRootTol = 1e-10;
constexpr double kAmplificationLimit = 1e-6;

// log sum_i exp(a_i), stable
double log_sum_exp(const std::vector<double>& a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : a) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double s = 0;
    for (double v : a) s += std::exp(v - mx);
    return mx + std::log(s);
}

double log_pow_sum(const std::vector<double>& w, double q) {
    std::vector<double> t;
    t.reserve(w.size());
    for (double p : w) t.push_back(q * std::log(p));
    return log_sum_exp(t);
}

}  // namespace

LevelSum::LevelSum(const MeasureSpec& m, int n, const LqOptions& opt) : level_(n) {
    require(n >= 1, "beta_n: level must be at least 1");
    if (opt.scale == Scale::Generation) {
        generation_ = true;
        certified_positive_ = true;
        double log_len = 0;
        if (const auto* h = m.as<HomogeneousCantor>()) {
            require(h->equal_ratios(), "generation scale needs equal ratios in every system");
            for (int i = 1; i <= n; ++i) {
                const CantorSystem s = h->system_at(static_cast<std::uint64_t>(i));
                gen_weights_.push_back({{s.p1, s.p2}, 1});
                log_len += std::log(s.r1);
            }
        } else if (const auto* s = m.as<SelfSimilar>()) {
            require(!s->overlap_allowed || satisfies_osc(*s), "generation scale needs the open set condition");
            for (double r : s->ratios)
                require(r == s->ratios.front(), "generation scale needs equal contraction ratios");
            double z = 0;
            for (double p : s->weights) z += p;
            std::vector<double> w;
            for (double p : s->weights) w.push_back(p / z);
            gen_weights_.push_back({w, n});
            log_len = n * std::log(s->ratios.front());
        } else {
            throw InvalidInput("generation scale is only defined for equal-ratio cantor or self-similar measures");
        }
        log_scale_ = -log_len;
        return;
    }

    require(n <= kMaxLevel, "beta_n: level exceeds the maximum dyadic level");
    log_scale_ = n * std::numbers::ln2;
    auto load = [&](const QueryOptions& q) {
        const auto cells = dyadic_mass_vector(m, n, q);
        double total = 0;
        for (const auto& c : cells) total += c.mass.mid();
        require(total > 0, "beta_n: measure has no mass at this level");
        log_mass_.clear();
        rel_width_.clear();
        certified_positive_ = true;
        for (const auto& c : cells) {
            const double mid = c.mass.mid();
            if (mid <= 0) continue;
            log_mass_.push_back(std::log(mid / total));
            rel_width_.push_back(c.mass.width() / mid);
            if (c.mass.lower <= 0) certified_positive_ = false;
        }
    };
    load(opt.query);
    tight_query_ = opt.query;
    tight_query_.tol *= 1e-6;
    source_ = std::make_shared<MeasureSpec>(m);
}

double LevelSum::amplification(double q) const {
    if (generation_ || q == 0) return 0;
    std::vector<double> t(log_mass_.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = q * log_mass_[i];
    const double l = log_sum_exp(t);
    double a = 0;
    for (std::size_t i = 0; i < t.size(); ++i) a += std::exp(t[i] - l) * rel_width_[i];
    return std::abs(q) * a;
}

double LevelSum::log_sum(double q) const {
    if (q < 0) require(certified_positive_, "beta_n: negative q needs certified-positive cell masses");
    if (generation_) {
        double s = 0;
        for (const auto& [w, mult] : gen_weights_) s += mult * log_pow_sum(w, q);
        return s;
    }
    if (amplification(q) > kAmplificationLimit) {
        // refine once with a much smaller tolerance; the refined sum replaces this one for good
        if (!refined_ && source_) {
            std::call_once(refined_cache_->once, [&] {
                LqOptions o;
                o.query = tight_query_;
                refined_cache_->sum = std::make_unique<LevelSum>(*source_, level_, o);
                refined_cache_->sum->refined_ = true;
            });
            const LevelSum& t = *refined_cache_->sum;
            if (t.amplification(q) <= kAmplificationLimit) return t.log_sum(q);
        }
        throw NumericFailure("beta_n: mass bounds too wide for q = " + std::to_string(q) + " at level " +
                             std::to_string(level_));
    }
    std::vector<double> t(log_mass_.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = q * log_mass_[i];
    return log_sum_exp(t);
}

double BetaCurve::at(double q) const {
    for (std::size_t i = 0; i < q_grid.size(); ++i)
        if (std::abs(q_grid[i] - q) <= 1e-12) return values[i];
    throw InvalidInput("beta curve: q = " + std::to_string(q) + " is not a grid point");
}

std::vector<double> default_q_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 160; ++i) g.push_back(-1.0 + 4.0 * i / 160.0);
    for (double v : {0.0, 1.0, 1 - 1e-3, 1 + 1e-3, 1 - 1e-2, 1 + 1e-2}) g.push_back(v);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }), g.end());
    return g;
}

double beta_n(const MeasureSpec& m, int n, double q, const LqOptions& opt) { return LevelSum(m, n, opt).beta(q); }

BetaCurve beta_curve(const LevelSum& s, const std::vector<double>& q_grid, std::string measure_id) {
    BetaCurve c;
    c.level = s.level();
    c.measure_id = std::move(measure_id);
    for (double q : q_grid) {
        if (q < 0 && !s.negative_q_allowed()) continue;
        c.q_grid.push_back(q);
        c.values.push_back(s.beta(q));
    }
    return c;
}

BetaCurve beta_curve(const MeasureSpec& m, int n, const std::vector<double>& q_grid, const LqOptions& opt,
                     std::string measure_id) {
    return beta_curve(LevelSum(m, n, opt), q_grid, std::move(measure_id));
}

double fixed_point(const LevelSum& s) {
    const double b0 = s.beta(0);
    require(b0 >= 0, "fixed point: beta_n(0) must be nonnegative");
    if (b0 == 0) return 0;
    double lo = 0, hi = std::max(1.0, b0);
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < kBisectIters; ++it) {
        mid = 0.5 * (lo + hi);
        const double g = s.beta(mid) - mid;
        if (std::abs(g) < 0.1 * kRootTol && hi - lo < kRootTol) break;
        if (g > 0) lo = mid;
        else hi = mid;
    }
    return mid;
}

double fixed_point_qn(const MeasureSpec& m, int n, const LqOptions& opt) { return fixed_point(LevelSum(m, n, opt)); }

std::pair<std::size_t, std::size_t> tail_range(std::size_t size, double fraction) {
    require(size > 0, "tail of an empty sequence");
    require(fraction > 0 && fraction <= 1, "tail fraction must lie in (0,1]");
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(size) - 1e-12));
    k = std::clamp<std::size_t>(k, 1, size);
    return {size - k, size};
}

FixedPointEstimate qbar_estimate(const MeasureSpec& m, const std::vector<int>& levels, const LqOptions& opt,
                                 double tail_fraction) {
    require(!levels.empty(), "qbar_estimate: no levels");
    require(std::is_sorted(levels.begin(), levels.end()) &&
                std::adjacent_find(levels.begin(), levels.end()) == levels.end(),
            "qbar_estimate: levels must increase");
    FixedPointEstimate e;
    for (int n : levels) e.per_level.push_back({n, fixed_point_qn(m, n, opt)});
    const auto [a, b] = tail_range(levels.size(), tail_fraction);
    e.qbar_proxy = -std::numeric_limits<double>::infinity();
    e.qlow_proxy = std::numeric_limits<double>::infinity();
    for (std::size_t i = a; i < b; ++i) {
        e.qbar_proxy = std::max(e.qbar_proxy, e.per_level[i].second);
        e.qlow_proxy = std::min(e.qlow_proxy, e.per_level[i].second);
    }
    for (const auto& [n, q] : e.per_level)
        if (q > 0.5 + 1e-9) e.exceeds_half = true;
    return e;
}

double legendre(const BetaCurve& beta, double alpha) {
    require(alpha >= 0, "legendre: alpha must be nonnegative");
    require(!beta.values.empty(), "legendre: empty curve");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < beta.values.size(); ++i) best = std::min(best, beta.values[i] + alpha * beta.q_grid[i]);
    return best;
}

DerivativesAtOne derivatives_at_one(const std::vector<BetaCurve>& curves, double h) {
    require(!curves.empty(), "derivatives_at_one: no curves");
    const auto& c = *std::max_element(curves.begin(), curves.end(),
                                      [](const BetaCurve& a, const BetaCurve& b) { return a.level < b.level; });
    auto value = [&](double q) {
        try {
            return c.at(q);
        } catch (const InvalidInput&) {
            throw InvalidInput("derivatives_at_one: q-grid lacks the point " + std::to_string(q));
        }
    };
    // D(h) = delta + O(h); Richardson with step ratio 10
    auto rich = [](double d1, double d10) { return (10 * d1 - d10) / 9; };
    DerivativesAtOne d;
    d.delta_upper = rich(value(1 - h) / h, value(1 - 10 * h) / (10 * h));
    d.delta_lower = rich(value(1 + h) / -h, value(1 + 10 * h) / (-10 * h));

    // right derivative at 0 from the two smallest positive grid points
    std::vector<double> pos;
    for (double q : c.q_grid)
        if (q > 0 && q < 1 - 20 * h) pos.push_back(q);
    const double b0 = value(0);
    if (pos.size() >= 2) {
        const double q1 = pos[0], q2 = pos[1];
        const double d1 = (value(q1) - b0) / q1, d2 = (value(q2) - b0) / q2;
        d.rho = (q2 * d1 - q1 * d2) / (q2 - q1);
    } else if (pos.size() == 1) {
        d.rho = (value(pos[0]) - b0) / pos[0];
    } else {
        d.rho = std::numeric_limits<double>::quiet_NaN();
    }
    return d;
}

// Images T_i([0,1]) pairwise disjoint apart from endpoints
bool satisfies_osc(const SelfSimilar& ifs) {
    std::vector<std::pair<double, double>> im;
    for (std::size_t i = 0; i < ifs.ratios.size(); ++i) im.push_back({ifs.offsets[i], ifs.offsets[i] + ifs.ratios[i]});
    std::sort(im.begin(), im.end());
    for (std::size_t i = 1; i < im.size(); ++i)
        if (im[i].first < im[i - 1].second) return false;
    return true;
}

namespace {

void require_osc(const SelfSimilar& ifs) {
    require(satisfies_osc(ifs), "closed form needs the open set condition");
}

// root of a strictly decreasing function on (-inf, inf) after bracketing outward from [lo, hi]
template <class F>
double decreasing_root(F f, double lo, double hi) {
    for (int i = 0; i < 200 && f(lo) < 0; ++i) lo -= (hi - lo);
    for (int i = 0; i < 200 && f(hi) > 0; ++i) hi += (hi - lo);
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < kBisectIters * 2 && hi - lo > 1e-15 * std::max(1.0, std::abs(mid)); ++it) {
        mid = 0.5 * (lo + hi);
        if (f(mid) > 0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double self_similar_beta(const SelfSimilar& ifs, double q) {
    require_osc(ifs);
    // log sum p_i^q sigma_i^b, strictly decreasing in b
    auto f = [&](double b) {
        std::vector<double> t;
        for (std::size_t i = 0; i < ifs.ratios.size(); ++i)
            t.push_back(q * std::log(ifs.weights[i]) + b * std::log(ifs.ratios[i]));
        return log_sum_exp(t);
    };
    return decreasing_root(f, -1.0, 2.0);
}

double self_similar_qbar(const SelfSimilar& ifs) {
    require_osc(ifs);
    auto f = [&](double q) {
        std::vector<double> t;
        for (std::size_t i = 0; i < ifs.ratios.size(); ++i) t.push_back(q * std::log(ifs.weights[i] * ifs.ratios[i]));
        return log_sum_exp(t);
    };
    return decreasing_root(f, 0.0, 1.0);
}

}  // namespace kf
