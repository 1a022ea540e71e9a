#include "kf/measure_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace kf {

using nlohmann::json;

namespace {

template <class T>
std::vector<T> get_array(const json& j, const char* key) {
    require(j.contains(key) && j.at(key).is_array(), std::string("measure json: missing array '") + key + "'");
    try {
        return j.at(key).get<std::vector<T>>();
    } catch (const json::exception&) {
        throw InvalidInput(std::string("measure json: bad entries in '") + key + "'");
    }
}

double get_number(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    require(j.at(key).is_number(), std::string("measure json: '") + key + "' must be a number");
    return j.at(key).get<double>();
}

MeasurePtr child(const json& j, const char* key) {
    require(j.contains(key) && j.at(key).is_object(), std::string("measure json: missing object '") + key + "'");
    return std::make_shared<MeasureSpec>(measure_from_json(j.at(key)));
}

Environment parse_environment(const json& j) {
    require(j.is_object(), "cantor: environment must be an object");
    const std::string rule = j.value("rule", "explicit");
    Environment env;
    if (rule == "explicit") {
        env.kind = Environment::Kind::Explicit;
        if (j.contains("prefix")) env.prefix = get_array<std::size_t>(j, "prefix");
        env.cycle = get_array<std::size_t>(j, "cycle");
    } else if (rule == "block") {
        env.kind = Environment::Kind::Block;
    } else if (rule == "indexed") {
        env.kind = Environment::Kind::Indexed;
        env.base = get_number(j, "base", 4.0);
        env.p1 = get_number(j, "p1", 0.5);
    } else {
        throw InvalidInput("cantor: unknown environment rule '" + rule + "'");
    }
    return env;
}

json environment_to_json(const Environment& e) {
    switch (e.kind) {
        case Environment::Kind::Explicit: return {{"rule", "explicit"}, {"prefix", e.prefix}, {"cycle", e.cycle}};
        case Environment::Kind::Block: return {{"rule", "block"}};
        case Environment::Kind::Indexed: return {{"rule", "indexed"}, {"base", e.base}, {"p1", e.p1}};
    }
    return {};
}

}  // namespace

MeasureSpec measure_from_json(const json& j) {
    require(j.is_object() && j.contains("type") && j.at("type").is_string(), "measure json: need a string 'type'");
    const std::string type = j.at("type").get<std::string>();
    if (type == "atomic") return make_atomic(get_array<double>(j, "positions"), get_array<double>(j, "masses"));
    if (type == "density") return make_density(get_array<double>(j, "breakpoints"), get_array<double>(j, "densities"));
    if (type == "self_similar")
        return make_self_similar(get_array<double>(j, "ratios"), get_array<double>(j, "offsets"),
                                 get_array<double>(j, "weights"), j.value("overlap_allowed", false));
    if (type == "cantor") {
        HomogeneousCantor h;
        require(j.contains("systems") && j.at("systems").is_array(), "cantor: missing 'systems'");
        for (const auto& s : j.at("systems")) {
            require(s.is_object(), "cantor: each system must be an object");
            CantorSystem cs;
            cs.r1 = get_number(s, "r1", NAN);
            cs.r2 = get_number(s, "r2", NAN);
            cs.c1 = get_number(s, "c1", 0.0);
            cs.c2 = get_number(s, "c2", 1.0 - cs.r2);
            cs.p1 = get_number(s, "p1", 0.5);
            cs.p2 = get_number(s, "p2", 1.0 - cs.p1);
            h.systems.push_back(cs);
        }
        require(j.contains("environment"), "cantor: missing 'environment'");
        h.environment = parse_environment(j.at("environment"));
        return MeasureSpec(std::move(h));
    }
    if (type == "sum") return MeasureSpec(Sum{child(j, "left"), child(j, "right")});
    if (type == "shifted")
        return MeasureSpec(Shifted{child(j, "inner"), get_number(j, "offset", 0.0), get_number(j, "scale", 1.0)});
    if (type == "builtin") {
        require(j.contains("name") && j.at("name").is_string(), "builtin: missing 'name'");
        return builtin_measure(j.at("name").get<std::string>());
    }
    throw InvalidInput("measure json: unknown type '" + type + "'");
}

json measure_to_json(const MeasureSpec& m) {
    struct V {
        json operator()(const Atomic& a) const {
            return {{"type", "atomic"}, {"positions", a.positions}, {"masses", a.masses}};
        }
        json operator()(const PiecewiseDensity& d) const {
            return {{"type", "density"}, {"breakpoints", d.breakpoints}, {"densities", d.densities}};
        }
        json operator()(const SelfSimilar& s) const {
            return {{"type", "self_similar"}, {"ratios", s.ratios}, {"offsets", s.offsets},
                    {"weights", s.weights}, {"overlap_allowed", s.overlap_allowed}};
        }
        json operator()(const HomogeneousCantor& h) const {
            json sys = json::array();
            for (const auto& s : h.systems)
                sys.push_back({{"r1", s.r1}, {"r2", s.r2}, {"c1", s.c1}, {"c2", s.c2}, {"p1", s.p1}, {"p2", s.p2}});
            return {{"type", "cantor"}, {"systems", sys}, {"environment", environment_to_json(h.environment)}};
        }
        json operator()(const Sum& s) const {
            return {{"type", "sum"}, {"left", measure_to_json(*s.left)}, {"right", measure_to_json(*s.right)}};
        }
        json operator()(const Shifted& s) const {
            return {{"type", "shifted"}, {"inner", measure_to_json(*s.inner)}, {"offset", s.offset}, {"scale", s.scale}};
        }
    };
    return std::visit(V{}, m.node());
}

MeasureSpec load_measure_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open measure file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("measure file '" + path + "': " + e.what());
    }
    return measure_from_json(j);
}

// ---------------------------------------------------------------------------
// built-ins

MeasureSpec make_salem(double p) {
    require(p > 0 && p < 1, "salem: p must lie in (0,1)");
    return make_self_similar({0.5, 0.5}, {0.0, 0.5}, {p, 1.0 - p});
}

MeasureSpec make_oscillating_cantor(double p) {
    require(p > 0 && p < 1, "oscillating cantor: p must lie in (0,1)");
    HomogeneousCantor h;
    h.systems.push_back({0.25, 0.25, 0.0, 0.75, p, 1.0 - p});
    h.systems.push_back({1.0 / 16, 1.0 / 16, 0.0, 15.0 / 16, p, 1.0 - p});
    h.environment.kind = Environment::Kind::Block;
    return MeasureSpec(std::move(h));
}

MeasureSpec make_zero_dimension_cantor() {
    HomogeneousCantor h;
    h.environment.kind = Environment::Kind::Indexed;
    h.environment.base = 4.0;
    h.environment.p1 = 0.5;
    return MeasureSpec(std::move(h));
}

MeasureSpec make_exponential_comb(double alpha, double beta, int atoms) {
    require(alpha > 0 && beta > 0, "comb_exponential: alpha and beta must be positive");
    if (atoms <= 0) {
        // keep atoms whose mass-gap product can matter below x ~ 1e30
        atoms = static_cast<int>(std::ceil(80.0 / (alpha + beta))) + 2;
        atoms = std::min(atoms, static_cast<int>(700.0 / beta));
    }
    require(atoms >= 1 && beta * atoms < 740, "comb_exponential: atom count out of range");
    std::vector<double> pos, mass;
    for (int k = atoms; k >= 1; --k) {
        pos.push_back(std::exp(-beta * k));
        mass.push_back(std::exp(-alpha * (k - 1)) * -std::expm1(-alpha));
    }
    return make_atomic(std::move(pos), std::move(mass));
}

MeasureSpec make_powerlaw_comb(double u1, double u2, int atoms) {
    require(u1 > 0 && u2 > 0, "comb_powerlaw: exponents must be positive");
    require(atoms >= 1, "comb_powerlaw: need at least one atom");
    std::vector<double> pos, mass;
    double z = 0;
    for (int n = atoms; n >= 1; --n) z += std::pow(static_cast<double>(n), -u1);
    for (int n = atoms; n >= 1; --n) {
        pos.push_back(std::pow(static_cast<double>(n + 1), -u2));
        mass.push_back(std::pow(static_cast<double>(n), -u1) / z);
    }
    return make_atomic(std::move(pos), std::move(mass));
}

namespace {

struct Call {
    std::string name;
    std::vector<double> args;
};

Call parse_call(const std::string& s) {
    Call c;
    const auto open = s.find('(');
    if (open == std::string::npos) {
        c.name = s;
        return c;
    }
    require(s.back() == ')', "builtin: malformed argument list in '" + s + "'");
    c.name = s.substr(0, open);
    std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            c.args.push_back(std::stod(tok, &used));
            require(tok.find_first_not_of(" \t", used) == std::string::npos, "");
        } catch (const std::exception&) {
            throw InvalidInput("builtin: bad numeric argument '" + tok + "' in '" + s + "'");
        }
    }
    return c;
}

double arg(const Call& c, std::size_t i, double fallback) { return i < c.args.size() ? c.args[i] : fallback; }

}  // namespace

bool is_builtin_name(const std::string& spec) {
    static const char* names[] = {"lebesgue", "cantor", "salem", "example_5_2_oscillating", "example_5_2_zero",
                                  "comb_exponential", "comb_powerlaw"};
    const std::string n = spec.substr(0, spec.find('('));
    for (const char* k : names)
        if (n == k) return true;
    return false;
}

MeasureSpec builtin_measure(const std::string& spec) {
    const Call c = parse_call(spec);
    auto arity = [&](std::size_t lo, std::size_t hi) {
        require(c.args.size() >= lo && c.args.size() <= hi, "builtin '" + c.name + "': wrong number of arguments");
    };
    if (c.name == "lebesgue") return arity(0, 0), make_lebesgue();
    if (c.name == "cantor") return arity(0, 0), make_cantor_measure();
    if (c.name == "salem") return arity(0, 1), make_salem(arg(c, 0, 0.05));
    if (c.name == "example_5_2_oscillating") return arity(0, 1), make_oscillating_cantor(arg(c, 0, 0.5));
    if (c.name == "example_5_2_zero") return arity(0, 0), make_zero_dimension_cantor();
    if (c.name == "comb_exponential") {
        arity(0, 3);
        return make_exponential_comb(arg(c, 0, 1.0), arg(c, 1, 1.0), static_cast<int>(arg(c, 2, 0)));
    }
    if (c.name == "comb_powerlaw") {
        arity(0, 3);
        return make_powerlaw_comb(arg(c, 0, 2.0), arg(c, 1, 1.0), static_cast<int>(arg(c, 2, 1 << 17)));
    }
    throw InvalidInput("unknown built-in measure '" + c.name + "'");
}

MeasureSpec resolve_measure(const std::string& a) {
    if (is_builtin_name(a)) return builtin_measure(a);
    return load_measure_file(a);
}

}  // namespace kf
