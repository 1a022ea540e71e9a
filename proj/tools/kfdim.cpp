#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "kf/error.hpp"
#include "kf/grid_spec.hpp"
#include "kf/lq.hpp"
#include "kf/measure.hpp"
#include "kf/measure_io.hpp"
#include "kf/partition.hpp"
#include "kf/report.hpp"
#include "kf/string_spectrum.hpp"
#include "kf/verify.hpp"

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kInvalid = 1, kNumeric = 2, kVerifyFailed = 3 };

std::string num(double v) { return fmt::format("{:.17g}", v); }

// Where results go: stdout, or files in a directory (--out-dir, else $KF_OUTPUT_DIR).
class Sink {
public:
    Sink(std::string dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {
        if (!dir_.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(dir_, ec);
            kf::require(!ec, "cannot create output directory '" + dir_ + "': " + ec.message());
        }
    }

    const std::string& format() const { return format_; }

    // `primary` outputs are also printed when writing to stdout; the rest only go to files.
    void emit(const std::string& file, const std::string& content, bool primary) {
        if (dir_.empty()) {
            if (primary) std::fwrite(content.data(), 1, content.size(), stdout);
            return;
        }
        const auto path = std::filesystem::path(dir_) / file;
        std::ofstream out(path, std::ios::binary);
        out << content;
        kf::require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
        std::fprintf(stderr, "wrote %s\n", path.string().c_str());
    }

    void emit_json(const std::string& file, const json& j) { emit(file, j.dump(2) + "\n", true); }

private:
    std::string dir_, format_;
};

struct Common {
    std::string measure;
    std::string out_dir;
    std::string format = "csv";
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    double tol = 1e-22;
    double query_budget = 1e7;
    bool shift_atoms = false;
    double shift_budget = 1e-2;
    int max_level = kf::kMaxLevel;
};

kf::MeasureSpec load(const Common& c) {
    kf::require(!c.measure.empty(), "--measure is required");
    kf::MeasureSpec m = kf::resolve_measure(c.measure);
    if (c.shift_atoms && m.has_atoms()) {
        auto shifted = kf::shift_off_dyadics(m, c.shift_budget, c.max_level);
        std::fprintf(stderr, "shifted atoms by %s\n", num(shifted.offset).c_str());
        m = shifted.measure;
    }
    return m;
}

// budgets are read as reals so that 2e7 is accepted
std::size_t budget(double v, const char* flag) {
    kf::require(v >= 1 && v <= 1e15 && v == std::floor(v), std::string(flag) + " must be a whole number in [1, 1e15]");
    return static_cast<std::size_t>(v);
}

kf::QueryOptions query_of(const Common& c) { return {c.tol, budget(c.query_budget, "--query-budget"), 0.0L}; }

kf::Boundary parse_bc(const std::string& s) {
    if (s == "dirichlet") return kf::Boundary::Dirichlet;
    if (s == "neumann") return kf::Boundary::Neumann;
    throw kf::InvalidInput("--bc must be dirichlet or neumann");
}

void check_levels(const std::vector<int>& levels) {
    kf::require(!levels.empty(), "--levels: need at least one level");
    for (int n : levels) kf::require(n >= 0 && n <= kf::kMaxLevel, fmt::format("level {} outside [0, {}]", n, kf::kMaxLevel));
}

// lq

struct LqArgs {
    std::string levels = "8,12,16,20";
    std::string q;
    std::string scale = "dyadic";
    double tail = 0.5;
};

int cmd_lq(const Common& c, const LqArgs& a) {
    const kf::MeasureSpec m = load(c);
    const auto levels = kf::parse_int_list(a.levels);
    check_levels(levels);
    const auto q_grid = a.q.empty() ? kf::default_q_grid() : kf::parse_linear_grid(a.q);
    kf::LqOptions opt;
    opt.query = query_of(c);
    kf::require(a.scale == "dyadic" || a.scale == "generation", "--scale must be dyadic or generation");
    opt.scale = a.scale == "dyadic" ? kf::Scale::Dyadic : kf::Scale::Generation;

    std::vector<kf::BetaCurve> curves, near_one;
    std::vector<std::pair<int, double>> fixed;
    for (int n : levels) {
        const kf::LevelSum s(m, n, opt);
        curves.push_back(kf::beta_curve(s, q_grid, c.measure));
        // the derivative quotients need their own q points, whatever the output grid is
        near_one.push_back(kf::beta_curve(s, kf::default_q_grid(), c.measure));
        fixed.emplace_back(n, kf::fixed_point(s));
    }
    double qbar = -1e300, qlow = 1e300;
    const auto [t0, t1] = kf::tail_range(fixed.size(), a.tail);
    for (std::size_t i = t0; i < t1; ++i) {
        qbar = std::max(qbar, fixed[i].second);
        qlow = std::min(qlow, fixed[i].second);
    }
    std::optional<kf::DerivativesAtOne> d;
    try {
        d = kf::derivatives_at_one(near_one);
    } catch (const kf::InvalidInput& e) {
        std::fprintf(stderr, "warning: derivatives at q = 1 not computed: %s\n", e.what());
    }
    std::optional<double> closed;
    if (const auto* ss = m.as<kf::SelfSimilar>(); ss && kf::satisfies_osc(*ss)) closed = kf::self_similar_qbar(*ss);

    Sink out(c.out_dir, c.format);
    if (c.format == "json") {
        json j;
        j["schema"] = "kf.lq/1";
        j["measure"] = c.measure;
        j["curves"] = json::array();
        for (const auto& b : curves) j["curves"].push_back({{"level", b.level}, {"q", b.q_grid}, {"beta", b.values}});
        j["fixed_points"] = json::array();
        for (const auto& [n, q] : fixed) j["fixed_points"].push_back({{"level", n}, {"q", q}});
        j["qbar_proxy"] = qbar;
        j["qlow_proxy"] = qlow;
        if (d) j["derivatives"] = {{"delta_upper", d->delta_upper}, {"delta_lower", d->delta_lower}, {"rho", d->rho}};
        if (closed) j["closed_form_qbar"] = *closed;
        out.emit_json("lq.json", j);
        return kOk;
    }
    std::string beta = "level,q,beta\n";
    for (const auto& b : curves)
        for (std::size_t i = 0; i < b.q_grid.size(); ++i)
            beta += fmt::format("{},{},{}\n", b.level, num(b.q_grid[i]), num(b.values[i]));
    out.emit("lq_beta.csv", beta, true);
    std::string fp = "level,q_n\n";
    for (const auto& [n, q] : fixed) fp += fmt::format("{},{}\n", n, num(q));
    out.emit("lq_fixed_points.csv", fp, false);
    std::string summary = "quantity,value\n";
    summary += "qbar_proxy," + num(qbar) + "\nqlow_proxy," + num(qlow) + "\n";
    if (d) summary += "delta_upper," + num(d->delta_upper) + "\ndelta_lower," + num(d->delta_lower) + "\nrho," + num(d->rho) + "\n";
    if (closed) summary += "closed_form_qbar," + num(*closed) + "\n";
    out.emit("lq_summary.csv", summary, false);
    return kOk;
}

// partition

struct PartitionArgs {
    std::string x = "2^20..2^60:2";
    std::string m_list = "1.5,2,3";
    std::string levels = "8..20:2";
    std::string alpha;
    std::string gamma;
    std::string gamma_mode = "dyadic";
    double node_budget = 1e8;
    bool allow_atom_cuts = false;
    double tail = 0.5;
};

int cmd_partition(const Common& c, const PartitionArgs& a) {
    const kf::MeasureSpec m = load(c);
    const auto xs = kf::parse_geometric_grid(a.x);
    const auto ms = kf::parse_real_list(a.m_list);
    for (double mm : ms) kf::require(mm > 1, "--m-values: every m must exceed 1");
    const auto levels = kf::parse_int_list(a.levels);
    check_levels(levels);
    const auto alphas = a.alpha.empty() ? kf::default_alpha_grid() : kf::parse_geometric_grid(a.alpha);
    kf::require(a.gamma_mode == "dyadic" || a.gamma_mode == "bisection", "--gamma-mode must be dyadic or bisection");

    kf::PartitionOptions opt;
    opt.query = query_of(c);
    opt.max_level = c.max_level;
    opt.node_budget = budget(a.node_budget, "--node-budget");
    opt.allow_atom_cuts = a.allow_atom_cuts;

    const auto nr = kf::NR_curve(m, xs, opt);
    std::vector<std::vector<std::size_t>> nl;
    for (double mm : ms) nl.push_back(kf::NL_curve(m, xs, mm, opt));
    const kf::FEstimate f = kf::F_estimate(m, levels, alphas, a.tail, query_of(c));
    std::vector<std::pair<std::size_t, kf::GammaResult>> gammas;
    if (!a.gamma.empty()) {
        const auto mode = a.gamma_mode == "dyadic" ? kf::GammaMode::Dyadic : kf::GammaMode::Bisection;
        for (int n : kf::parse_int_list(a.gamma)) {
            kf::require(n >= 1, "--gamma: n must be positive");
            gammas.emplace_back(n, kf::gamma_n(m, static_cast<std::size_t>(n), mode, opt));
        }
    }

    Sink out(c.out_dir, c.format);
    if (c.format == "json") {
        json j;
        j["schema"] = "kf.partition/1";
        j["measure"] = c.measure;
        j["x"] = xs;
        j["NR"] = nr;
        for (std::size_t i = 0; i < ms.size(); ++i) j["NL"].push_back({{"m", ms[i]}, {"counts", nl[i]}});
        j["coarse"] = json::array();
        for (const auto& t : f.tables) j["coarse"].push_back({{"level", t.level}, {"alpha", t.alpha_grid}, {"counts", t.counts}});
        j["F"] = {{"lower", f.lower}, {"upper", f.upper}, {"argmax_alpha", f.argmax_alpha}};
        j["gamma"] = json::array();
        for (const auto& [n, g] : gammas) j["gamma"].push_back({{"n", n}, {"cells", g.cells}, {"bound", g.bound}});
        out.emit_json("partition.json", j);
        return kOk;
    }
    std::string ent = "x,NR";
    for (double mm : ms) ent += ",NL_" + fmt::format("{:g}", mm);
    ent += "\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ent += num(xs[i]) + "," + std::to_string(nr[i]);
        for (const auto& curve : nl) ent += "," + std::to_string(curve[i]);
        ent += "\n";
    }
    out.emit("partition_entropy.csv", ent, true);
    std::string coarse = "level,alpha,count\n";
    for (const auto& t : f.tables)
        for (std::size_t i = 0; i < t.alpha_grid.size(); ++i)
            coarse += fmt::format("{},{},{}\n", t.level, num(t.alpha_grid[i]), t.counts[i]);
    out.emit("partition_coarse.csv", coarse, false);
    out.emit("partition_F.csv",
             "F_lower,F_upper,argmax_alpha\n" + num(f.lower) + "," + num(f.upper) + "," + num(f.argmax_alpha) + "\n",
             false);
    if (!gammas.empty()) {
        std::string g = "n,cells,bound\n";
        for (const auto& [n, r] : gammas) g += fmt::format("{},{},{}\n", n, r.cells, num(r.bound));
        out.emit("partition_gamma.csv", g, false);
    }
    return kOk;
}

// count

struct CountArgs {
    std::string x = "10:1e6:26";
    std::string bc = "dirichlet";
    int level = -1;
    std::string cuts;
};

int cmd_count(const Common& c, const CountArgs& a) {
    kf::MeasureSpec m = load(c);
    const auto xs = kf::parse_geometric_grid(a.x);
    const kf::Boundary bc = parse_bc(a.bc);
    const kf::Interval I{0, 1, kf::Closure::Closed};
    const bool atomic = m.as<kf::Atomic>() != nullptr;
    kf::require(atomic || a.level >= 0, "measure is not atomic: pass --level to discretise it");
    const auto curve = kf::counting_curve(m, I, bc, xs, atomic ? std::nullopt : std::optional<int>(a.level));

    std::vector<kf::BracketingReport> brackets;
    if (!a.cuts.empty()) {
        const kf::MeasureSpec atoms = atomic ? m : kf::discretize_to_atoms(m, a.level, kf::Placement::Midpoint, query_of(c));
        const auto cuts = kf::parse_real_list(a.cuts);
        for (double x : xs) brackets.push_back(kf::bracketing_check(atoms, I, cuts, x));
    }

    Sink out(c.out_dir, c.format);
    if (c.format == "json") {
        json j;
        j["schema"] = "kf.count/1";
        j["measure"] = c.measure;
        j["bc"] = kf::to_string(bc);
        j["provenance"] = curve.provenance;
        j["x"] = curve.x;
        j["counts"] = curve.counts;
        j["near_eigenvalue"] = curve.near_eigenvalue;
        if (!brackets.empty()) {
            j["bracketing"] = json::array();
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const auto& b = brackets[i];
                j["bracketing"].push_back({{"x", xs[i]},
                                           {"N", b.n_dirichlet},
                                           {"N_neumann", b.n_neumann},
                                           {"sum_sub", b.sum_sub},
                                           {"cuts", b.cuts},
                                           {"ok", b.ok()}});
            }
        }
        out.emit_json("count.json", j);
    } else {
        std::string t = "x,N,near_eigenvalue\n";
        for (std::size_t i = 0; i < curve.x.size(); ++i)
            t += fmt::format("{},{},{}\n", num(curve.x[i]), curve.counts[i], curve.near_eigenvalue[i] ? 1 : 0);
        out.emit("count_curve.csv", t, true);
        if (!brackets.empty()) {
            std::string b = "x,N,N_neumann,sum_sub,cuts,subadditive_ok,neumann_ok\n";
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const auto& r = brackets[i];
                b += fmt::format("{},{},{},{},{},{},{}\n", num(xs[i]), r.n_dirichlet, r.n_neumann, r.sum_sub, r.cuts,
                                 r.subadditive_ok ? 1 : 0, r.neumann_ok ? 1 : 0);
            }
            out.emit("count_bracketing.csv", b, false);
        }
    }
    for (const auto& b : brackets)
        if (!b.ok()) {
            std::fprintf(stderr, "warning: bracketing identity violated\n");
            return kNumeric;
        }
    return kOk;
}

// report

struct ReportArgs {
    std::string levels;
    std::string x;
    std::string m_list;
    std::string counting = "auto";
    std::string bc = "dirichlet";
    double slack = 0.05;
    double node_budget = 2e7;
};

int cmd_report(const Common& c, const ReportArgs& a) {
    const kf::MeasureSpec m = load(c);
    kf::ReportConfig cfg;
    if (!a.levels.empty()) cfg.levels = kf::parse_int_list(a.levels);
    check_levels(cfg.levels);
    if (!a.x.empty()) cfg.x_grid = kf::parse_geometric_grid(a.x);
    if (!a.m_list.empty()) cfg.m_list = kf::parse_real_list(a.m_list);
    static const std::map<std::string, kf::Counting> counting = {
        {"auto", kf::Counting::Auto}, {"exact", kf::Counting::ExactAtomic}, {"bracket", kf::Counting::BracketOnly}};
    kf::require(counting.count(a.counting) == 1, "--counting must be auto, exact or bracket");
    cfg.counting = counting.at(a.counting);
    cfg.bc = parse_bc(a.bc);
    kf::require(a.slack >= 0, "--slack must be nonnegative");
    cfg.slack = a.slack;
    cfg.node_budget = budget(a.node_budget, "--node-budget");
    cfg.workers = c.workers;
    cfg.lq.query = query_of(c);
    cfg.partition.query = query_of(c);
    cfg.partition.max_level = c.max_level;

    const kf::DimReport r = kf::full_report(m, cfg, c.measure);
    Sink out(c.out_dir, c.format);
    if (c.format == "json") {
        out.emit_json("report.json", kf::report_to_json(r));
    } else if (c.format == "text") {
        out.emit("report.txt", kf::report_summary(r), true);
    } else {
        std::string est = "quantity,value,lo,hi,source\n";
        auto row = [&](const std::string& name, const kf::Estimate& e) {
            est += fmt::format("{},{},{},{},{}\n", name, num(e.value), num(e.lo), num(e.hi), e.source);
        };
        row("s_lower", r.s_lower);
        row("s_upper", r.s_upper);
        row("h_lower", r.h_lower);
        row("h_upper", r.h_upper);
        for (const auto& [mm, e] : r.hm_lower) row(fmt::format("h{:g}_lower", mm), e);
        row("F_lower", r.F_lower);
        row("F_upper", r.F_upper);
        row("qbar", r.qbar);
        row("qlow", r.qlow);
        out.emit("report_estimates.csv", est, true);
        std::string cur = "x,NR";
        for (const auto& [mm, cc] : r.nl_counts) cur += fmt::format(",NL_{:g}", mm);
        if (!r.exact_counts.empty()) cur += ",N";
        cur += "\n";
        for (std::size_t i = 0; i < r.x_grid.size(); ++i) {
            cur += num(r.x_grid[i]) + "," + (i < r.nr_counts.size() ? std::to_string(r.nr_counts[i]) : "");
            for (const auto& [mm, cc] : r.nl_counts) cur += "," + (i < cc.size() ? std::to_string(cc[i]) : "");
            if (!r.exact_counts.empty()) cur += "," + std::to_string(r.exact_counts[i]);
            cur += "\n";
        }
        out.emit("report_curves.csv", cur, false);
        std::string ver = "group,inequality,lhs,rhs,lhs_lo,rhs_hi,holds,holds_central,evaluated\n";
        auto verdicts = [&](const char* group, const std::vector<kf::Verdict>& vs) {
            for (const auto& v : vs)
                ver += fmt::format("{},\"{}\",{},{},{},{},{},{},{}\n", group, v.inequality, num(v.lhs), num(v.rhs),
                                   num(v.lhs_lo), num(v.rhs_hi), v.holds ? 1 : 0, v.holds_central ? 1 : 0,
                                   v.evaluated ? 1 : 0);
        };
        verdicts("chain", r.chain);
        verdicts("sandwich", r.sandwich);
        verdicts("heuristic", r.heuristic);
        out.emit("report_verdicts.csv", ver, false);
    }
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return r.missing.empty() ? kOk : kNumeric;
}

// verify

struct VerifyArgs {
    std::string suite = "quick";
    std::vector<int> criteria;
    std::uint64_t seed = 20240611;
};

int cmd_verify(const Common& c, const VerifyArgs& a) {
    kf::VerifyOptions opt;
    opt.seed = a.seed;
    opt.workers = c.workers;
    opt.on_result = [](const kf::CriterionResult& r) {
        std::printf("%s\n", kf::format_result(r).c_str());
        std::fflush(stdout);
    };
    std::vector<kf::CriterionResult> results;
    if (!a.criteria.empty()) {
        for (int id : a.criteria) results.push_back(kf::run_criterion(id, opt));
    } else {
        kf::require(a.suite == "quick" || a.suite == "full", "--suite must be quick or full");
        results = kf::run_suite(a.suite == "quick" ? kf::Suite::Quick : kf::Suite::Full, opt);
    }
    std::size_t failed = 0;
    for (const auto& r : results) failed += !r.passed;
    std::printf("%zu of %zu checks passed\n", results.size() - failed, results.size());
    return failed == 0 ? kOk : kVerifyFailed;
}

void add_common(CLI::App* sub, Common& c, bool needs_measure = true) {
    if (needs_measure)
        sub->add_option("-m,--measure", c.measure, "built-in name (e.g. cantor, salem(0.05)) or JSON file")->required();
    sub->add_option("-o,--out-dir", c.out_dir, "write files here (default: $KF_OUTPUT_DIR, else stdout)");
    sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--tol", c.tol, "absolute tolerance for mass queries")->check(CLI::PositiveNumber);
    sub->add_option("--query-budget", c.query_budget, "node budget per mass query");
    sub->add_option("--max-level", c.max_level, "deepest dyadic level")->check(CLI::Range(1, kf::kMaxLevel));
    sub->add_flag("--shift-atoms", c.shift_atoms, "push atoms off dyadic points by a small translation");
    sub->add_option("--shift-budget", c.shift_budget, "largest translation tried by --shift-atoms");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral dimension estimates for Krein-Feller operators of measures on (0,1)"};
    app.require_subcommand(1);
    Common common;
    if (const char* env = std::getenv("KF_OUTPUT_DIR")) common.out_dir = env;

    std::string lq_format = "csv", pa_format = "csv", ca_format = "csv", ra_format = "json";
    LqArgs lq;
    auto* s_lq = app.add_subcommand("lq", "finite-level L^q spectra, fixed points, derivatives at q = 1");
    add_common(s_lq, common);
    s_lq->add_option("--levels", lq.levels, "dyadic levels");
    s_lq->add_option("--q", lq.q, "q grid, start:stop:points or a list (default: 161 points on [-1,3] and more)");
    s_lq->add_option("--scale", lq.scale, "dyadic or generation");
    s_lq->add_option("--tail", lq.tail, "tail fraction of the levels for qbar/qlow proxies");
    s_lq->add_option("--format", lq_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    PartitionArgs pa;
    auto* s_pa = app.add_subcommand("partition", "partition entropies NR and NL_m, coarse counts, F proxies, gamma_n");
    add_common(s_pa, common);
    s_pa->add_option("--x", pa.x, "x grid: start:stop:points, 2^a..2^b[:step] or a list");
    s_pa->add_option("--m-values", pa.m_list, "packing parameters m > 1");
    s_pa->add_option("--levels", pa.levels, "levels for the coarse counts");
    s_pa->add_option("--alpha", pa.alpha, "alpha grid (default: 48 log-spaced points in [0.05, 8])");
    s_pa->add_option("--gamma", pa.gamma, "piece counts n for gamma_n upper bounds");
    s_pa->add_option("--gamma-mode", pa.gamma_mode, "dyadic or bisection");
    s_pa->add_option("--node-budget", pa.node_budget, "tree nodes per traversal");
    s_pa->add_flag("--allow-atom-cuts", pa.allow_atom_cuts, "accept atoms on dyadic cut points");
    s_pa->add_option("--format", pa_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    CountArgs ca;
    auto* s_ca = app.add_subcommand("count", "eigenvalue counting curve and bracketing table");
    add_common(s_ca, common);
    s_ca->add_option("--x", ca.x, "x grid");
    s_ca->add_option("--bc", ca.bc, "dirichlet or neumann");
    s_ca->add_option("--level", ca.level, "discretisation level for non-atomic measures");
    s_ca->add_option("--cuts", ca.cuts, "interior cut points for the bracketing table");
    s_ca->add_option("--format", ca_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    ReportArgs ra;
    auto* s_ra = app.add_subcommand("report", "all dimension estimates with inequality verdicts");
    add_common(s_ra, common);
    s_ra->add_option("--levels", ra.levels, "levels for L^q and coarse counts");
    s_ra->add_option("--x", ra.x, "x grid for the partition entropies");
    s_ra->add_option("--m-values", ra.m_list, "packing parameters m > 1");
    s_ra->add_option("--counting", ra.counting, "auto, exact or bracket");
    s_ra->add_option("--bc", ra.bc, "boundary condition for exact counts");
    s_ra->add_option("--slack", ra.slack, "slack for inequality verdicts");
    s_ra->add_option("--node-budget", ra.node_budget, "tree nodes per traversal; the x grid is cut to fit");
    s_ra->add_option("--format", ra_format, "json, csv or text")->check(CLI::IsMember({"json", "csv", "text"}));

    VerifyArgs va;
    auto* s_ve = app.add_subcommand("verify", "run the built-in example checks");
    add_common(s_ve, common, false);
    s_ve->add_option("--suite", va.suite, "quick or full")->check(CLI::IsMember({"quick", "full"}));
    s_ve->add_option("--criterion", va.criteria, "run only these criteria (1-9)")->check(CLI::Range(1, 9));
    s_ve->add_option("--seed", va.seed, "seed for the randomised checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }
    if (s_lq->parsed()) common.format = lq_format;
    if (s_pa->parsed()) common.format = pa_format;
    if (s_ca->parsed()) common.format = ca_format;
    if (s_ra->parsed()) common.format = ra_format;

    try {
        if (s_lq->parsed()) return cmd_lq(common, lq);
        if (s_pa->parsed()) return cmd_partition(common, pa);
        if (s_ca->parsed()) return cmd_count(common, ca);
        if (s_ra->parsed()) return cmd_report(common, ra);
        if (s_ve->parsed()) return cmd_verify(common, va);
    } catch (const kf::InvalidInput& e) {
        std::fprintf(stderr, "kfdim: invalid input: %s\n", e.what());
        return kInvalid;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "kfdim: invalid input: %s\n", e.what());
        return kInvalid;
    } catch (const kf::NumericFailure& e) {
        std::fprintf(stderr, "kfdim: numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "kfdim: error: %s\n", e.what());
        return kNumeric;
    }
    return kInvalid;
}
