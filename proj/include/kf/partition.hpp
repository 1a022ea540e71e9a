#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kf/measure.hpp"

namespace kf {

struct PartitionOptions {
    QueryOptions query{1e-22, 10'000'000, 0.0L};
    int max_level = kMaxLevel;
    std::size_t node_budget = 100'000'000;  // tree nodes visited per traversal
    // Accept an atom on a leaf's right endpoint. The leaf (lo, hi] holds the atom; moving the cut a
    // little to the right changes nu Lambda of both neighbours by an arbitrarily small amount, so the
    // strict leaf condition and the count survive. Off by default: the cut is reported instead.
    bool allow_atom_cuts = false;
};

// Leaves of the adaptive dyadic refinement at threshold t. Zero-mass leaves are gaps and are not stored.
struct StoppingPartition {
    double threshold = 0;
    std::vector<DyadicCell> cells;
    std::size_t cardinality = 0;
    std::size_t zero_mass_leaves = 0;
    std::size_t nodes_visited = 0;
};

StoppingPartition stopping_partition(const MeasureSpec& m, double t, const PartitionOptions& opt = {});

// Number of dyadic cells C with nu(C) Lambda(C) >= t among those visited (the set Q_t).
std::size_t heavy_cell_count(const MeasureSpec& m, double t, const PartitionOptions& opt = {});

// card P_{1/x}: positive-mass leaves of the stopping partition.
std::size_t NR_upper(const MeasureSpec& m, double x, const PartitionOptions& opt = {});

// NR_upper at every grid point from a single traversal; the grid must be positive.
std::vector<std::size_t> NR_curve(const MeasureSpec& m, const std::vector<double>& x_grid,
                                  const PartitionOptions& opt = {});

enum class GammaMode { Dyadic, Bisection };

struct GammaResult {
    std::size_t cells = 0;
    double bound = 0;  // max nu(I) Lambda(I) over the constructed partition
    std::vector<std::pair<double, double>> partition;  // (lo, hi] pieces, sorted
};

// Upper bound for gamma_n from an n-piece partition built by repeatedly splitting the piece with the
// largest nu(I) Lambda(I): at its midpoint (dyadic) or at the point t with t F(t) = 1/4 (bisection).
GammaResult gamma_n(const MeasureSpec& m, std::size_t n, GammaMode mode, const PartitionOptions& opt = {});

struct CoarseTable {
    int level = 0;
    std::vector<double> alpha_grid;
    std::vector<std::size_t> counts;
};

CoarseTable coarse_counts(const MeasureSpec& m, int n, const std::vector<double>& alpha_grid,
                          const QueryOptions& query = {1e-22, 10'000'000, 0.0L});

// 48 log-spaced points in [0.05, 8]
std::vector<double> default_alpha_grid();

struct FEstimate {
    double lower = 0;  // sup over alpha of tail-min / (1 + alpha)
    double upper = 0;  // sup over alpha of tail-max / (1 + alpha)
    double argmax_alpha = 0;
    std::vector<CoarseTable> tables;
};

FEstimate F_estimate(const MeasureSpec& m, const std::vector<int>& levels, const std::vector<double>& alpha_grid,
                     double tail_fraction = 0.5, const QueryOptions& query = {1e-22, 10'000'000, 0.0L});

struct PackingResult {
    double x = 0;
    double m = 0;
    std::size_t count = 0;
    std::vector<Interval> witness;  // (lo,hi] pieces, pairwise disjoint
    std::string source;              // "cells" or "coarse"
};

struct PackingOptions {
    PartitionOptions partition;
    bool keep_witness = true;
    std::vector<double> alpha_grid = default_alpha_grid();
    int coarse_max_level = 24;  // the coarse construction is only run up to this level
};

// Certified lower bound for N^L_m(x).
PackingResult NL_m_lower(const MeasureSpec& m, double x, double mm, const PackingOptions& opt = {});

// The dyadic-cell packing count of NL_m_lower at every grid point, from a single traversal. The
// coarse construction is not run, so a value can fall below NL_m_lower at small levels.
std::vector<std::size_t> NL_curve(const MeasureSpec& m, const std::vector<double>& x_grid, double mm,
                                  const PartitionOptions& opt = {});

// Re-check a packing witness by direct mass queries: disjointness and the mass-length condition.
bool verify_packing(const MeasureSpec& m, const PackingResult& p, const QueryOptions& query = {});

}  // namespace kf
