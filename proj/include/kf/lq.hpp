#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "kf/measure.hpp"

namespace kf {

// Dyadic: cells of level n, normaliser n log 2.
// Generation: generation-n cylinders of an equal-ratio IFS or homogeneous Cantor measure, normaliser
// -log(cylinder length). Only available when all cylinders of a generation share their length.
enum class Scale { Dyadic, Generation };

struct LqOptions {
    QueryOptions query{1e-22, 10'000'000, 0.0L};
    Scale scale = Scale::Dyadic;
};

// log sum_C nu(C)^q at one level, for the normalised measure.
class LevelSum {
public:
    LevelSum(const MeasureSpec& m, int n, const LqOptions& opt = {});

    int level() const { return level_; }
    double log_scale() const { return log_scale_; }  // n log 2 for dyadic cells
    bool negative_q_allowed() const { return certified_positive_; }
    std::size_t cells() const { return log_mass_.size(); }

    double log_sum(double q) const;
    double beta(double q) const { return log_sum(q) / log_scale_; }

private:
    int level_ = 0;
    double log_scale_ = 0;
    bool certified_positive_ = false;
    bool generation_ = false;
    bool refined_ = false;
    std::vector<double> log_mass_;   // dyadic: log of normalised cell masses
    std::vector<double> rel_width_;  // dyadic: width / mid per cell
    // generation: per-generation weight vectors with repeat counts
    std::vector<std::pair<std::vector<double>, int>> gen_weights_;
    std::shared_ptr<const MeasureSpec> source_;  // kept for one refinement pass
    QueryOptions tight_query_;
    struct Refined {
        std::once_flag once;
        std::unique_ptr<LevelSum> sum;
    };
    std::shared_ptr<Refined> refined_cache_ = std::make_shared<Refined>();

    // first-order relative error of sum nu(C)^q implied by the mass bounds
    double amplification(double q) const;
};

struct BetaCurve {
    int level = 0;
    std::vector<double> q_grid;
    std::vector<double> values;
    std::string measure_id;

    double at(double q) const;  // value at a grid point (exact match within 1e-12)
};

// 161 points on [-1,3] plus 0, 1, 1 +- 1e-3, 1 +- 1e-2, sorted and deduplicated.
std::vector<double> default_q_grid();

double beta_n(const MeasureSpec& m, int n, double q, const LqOptions& opt = {});

// Negative q values are dropped from the grid unless the level's cell masses are certified positive.
BetaCurve beta_curve(const MeasureSpec& m, int n, const std::vector<double>& q_grid, const LqOptions& opt = {},
                     std::string measure_id = {});
BetaCurve beta_curve(const LevelSum& s, const std::vector<double>& q_grid, std::string measure_id = {});

double fixed_point(const LevelSum& s);
double fixed_point_qn(const MeasureSpec& m, int n, const LqOptions& opt = {});

struct FixedPointEstimate {
    std::vector<std::pair<int, double>> per_level;
    double qbar_proxy = 0;  // max over the tail levels
    double qlow_proxy = 0;  // min over the tail levels
    bool exceeds_half = false;
};

// Tail = the last ceil(fraction * size) levels.
FixedPointEstimate qbar_estimate(const MeasureSpec& m, const std::vector<int>& levels, const LqOptions& opt = {},
                                 double tail_fraction = 0.5);

double legendre(const BetaCurve& beta, double alpha);

struct DerivativesAtOne {
    double delta_upper = 0;  // left derivative side: lim_{t->1-} beta(t)/(1-t)
    double delta_lower = 0;  // lim_{t->1+} beta(t)/(1-t)
    double rho = 0;          // right derivative at 0
};

// Uses the largest-level curve; one-sided quotients at h and 10h combined by Richardson extrapolation.
DerivativesAtOne derivatives_at_one(const std::vector<BetaCurve>& curves, double h = 1e-3);

bool satisfies_osc(const SelfSimilar& ifs);
double self_similar_beta(const SelfSimilar& ifs, double q);
double self_similar_qbar(const SelfSimilar& ifs);

// Index range [first, last) of the tail used for limsup/liminf proxies.
std::pair<std::size_t, std::size_t> tail_range(std::size_t size, double fraction = 0.5);

}  // namespace kf
