#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lattice.hpp"
#include "pattern.hpp"
#include "rates.hpp"
#include "spectral.hpp"
#include "statespace.hpp"

namespace azrp {

using json = nlohmann::json;

/// Schema violation; the message starts with the offending key path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int dim = 1;
    std::map<Site, double> kernel;
    RateFunction rate = RateFunction::linear();
    std::optional<double> rho, gamma;
    PatternSpec pattern;
    int box = 0;
    int halo = 1;
    bool require_irreducible = false;
};

struct HittingConfig {
    std::vector<double> grid;
    double prefactor_T = 20.0;   ///< in units of 1/gap
    double cesaro_T = 400.0;
    double u_T = 30.0;
    int cesaro_panels = 4000;
    int renewal_k = 8;
};

struct VariationalConfig {
    int samples = 100;
    double weight = 0.3;
    std::string measure = "dual_product"; ///< or "dual_eigenfunction"
};

struct RegularityConfig {
    int powers = 3;
    double certify_tol = 1e-6;
    int fkg_pairs = 200;
    int fkg_sites = 3;
    int fkg_cap = 4;
};

struct SimulationConfig {
    std::size_t trajectories = 10000;
    std::vector<double> grid;
    std::optional<double> fit_from;
    std::size_t coupled_trajectories = 1000;
    std::size_t coupled_events = 1000;
    double coupled_horizon = 1e9;
    double kill_t = 100.0;
    int kill_k_max = 16;
    std::size_t kill_trajectories = 10000;
};

struct ApproximationConfig {
    std::vector<int> boxes;
    std::vector<double> grid;
    std::vector<double> mc_grid;
    std::size_t mc_trajectories = 10000;
};

struct RunConfig {
    std::string name;
    std::uint64_t seed = 1;
    std::string output;
    std::vector<std::string> stages;
    ModelConfig model;
    Caps caps;
    std::size_t budget = 5'000'000;
    PowerOptions solver;
    bool matrix_free = false;
    HittingConfig hitting;
    VariationalConfig variational;
    RegularityConfig regularity;
    SimulationConfig simulation;
    ApproximationConfig approximation;
    json raw;
};

inline const std::vector<std::string>& all_stages() {
    static const std::vector<std::string> s{"model",       "statespace", "generator", "spectral",      "hitting",
                                            "variational", "regularity", "simulate",  "approximation"};
    return s;
}

namespace detail {

inline void only_keys(const json& j, const std::string& path, std::set<std::string> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const json& need(const json& j, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(join(path, key) + ": required");
    return j.at(key);
}

inline long long as_int(const json& v, const std::string& where, long long lo, long long hi) {
    if (!v.is_number_integer()) throw ConfigError(where + ": must be an integer");
    const long long x = v.get<long long>();
    if (x < lo) throw ConfigError(where + ": must be at least " + std::to_string(lo));
    if (x > hi) throw ConfigError(where + ": must be at most " + std::to_string(hi));
    return x;
}

inline double as_num(const json& v, const std::string& where, double lo, double hi, bool open_lo = false) {
    if (!v.is_number()) throw ConfigError(where + ": must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where + ": must be finite");
    if (open_lo ? !(x > lo) : !(x >= lo)) throw ConfigError(where + ": out of range");
    if (x > hi) throw ConfigError(where + ": out of range");
    return x;
}

template <class T>
void opt_int(const json& j, const std::string& path, const char* key, T& out, long long lo,
             long long hi = std::numeric_limits<int>::max()) {
    if (j.contains(key)) out = static_cast<T>(as_int(j.at(key), join(path, key), lo, hi));
}

inline void opt_num(const json& j, const std::string& path, const char* key, double& out, double lo, double hi,
                    bool open_lo = false) {
    if (j.contains(key)) out = as_num(j.at(key), join(path, key), lo, hi, open_lo);
}

inline Site as_site(const json& v, const std::string& where, int dim) {
    if (!v.is_array() || static_cast<int>(v.size()) != dim)
        throw ConfigError(where + ": must be an array of " + std::to_string(dim) + " integers");
    Site s;
    for (std::size_t k = 0; k < v.size(); ++k)
        s.push_back(static_cast<int>(as_int(v[k], where + "[" + std::to_string(k) + "]", -1000000, 1000000)));
    return s;
}

/// Either an explicit array or {"start", "stop", "points"} (evenly spaced, inclusive).
inline std::vector<double> as_grid(const json& v, const std::string& where) {
    std::vector<double> g;
    if (v.is_array()) {
        for (std::size_t k = 0; k < v.size(); ++k)
            g.push_back(as_num(v[k], where + "[" + std::to_string(k) + "]", 0.0, 1e12));
    } else {
        only_keys(v, where, {"start", "stop", "points"});
        const double a = as_num(need(v, where, "start"), where + ".start", 0.0, 1e12);
        const double b = as_num(need(v, where, "stop"), where + ".stop", a, 1e12);
        const auto n = as_int(need(v, where, "points"), where + ".points", 2, 1000000);
        for (long long k = 0; k < n; ++k) g.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
    }
    if (g.empty()) throw ConfigError(where + ": empty grid");
    for (std::size_t k = 1; k < g.size(); ++k)
        if (!(g[k] > g[k - 1])) throw ConfigError(where + ": must be strictly increasing");
    return g;
}

inline ModelConfig parse_model(const json& j) {
    const std::string P = "model";
    only_keys(j, P, {"dim", "kernel", "rate", "rho", "gamma", "pattern", "box", "halo", "require_irreducible"});
    ModelConfig m;
    m.dim = static_cast<int>(as_int(need(j, P, "dim"), "model.dim", 1, 8));
    const json& k = need(j, P, "kernel");
    if (!k.is_array() || k.empty()) throw ConfigError("model.kernel: must be a non-empty array");
    for (std::size_t e = 0; e < k.size(); ++e) {
        const std::string w = "model.kernel[" + std::to_string(e) + "]";
        only_keys(k[e], w, {"offset", "p"});
        const Site s = as_site(need(k[e], w, "offset"), w + ".offset", m.dim);
        if (m.kernel.count(s)) throw ConfigError(w + ".offset: duplicate offset");
        m.kernel[s] = as_num(need(k[e], w, "p"), w + ".p", 0.0, 1.0);
    }
    const json& r = need(j, P, "rate");
    try {
        if (r.is_string()) {
            const auto name = r.get<std::string>();
            if (name == "linear") m.rate = RateFunction::linear();
            else if (name == "constant") m.rate = RateFunction::constant();
            else throw ConfigError("model.rate: unknown family '" + name + "'");
        } else if (r.is_array()) {
            std::vector<double> t;
            for (std::size_t q = 0; q < r.size(); ++q)
                t.push_back(as_num(r[q], "model.rate[" + std::to_string(q) + "]", 0.0, 1e12));
            m.rate = RateFunction::from_table(t);
        } else {
            throw ConfigError("model.rate: must be \"linear\", \"constant\" or an array");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model.rate: ") + e.what());
    }
    if (j.contains("rho") == j.contains("gamma")) throw ConfigError("model.rho: give exactly one of rho and gamma");
    if (j.contains("rho")) m.rho = as_num(j.at("rho"), "model.rho", 0.0, 1e12, true);
    if (j.contains("gamma")) m.gamma = as_num(j.at("gamma"), "model.gamma", 0.0, 1e12, true);
    const json& pt = need(j, P, "pattern");
    only_keys(pt, "model.pattern", {"support", "at_least", "complement"});
    const json& sup = need(pt, "model.pattern", "support");
    if (!sup.is_array() || sup.empty()) throw ConfigError("model.pattern.support: must be a non-empty array");
    for (std::size_t q = 0; q < sup.size(); ++q)
        m.pattern.support.push_back(as_site(sup[q], "model.pattern.support[" + std::to_string(q) + "]", m.dim));
    if (pt.contains("at_least") == pt.contains("complement"))
        throw ConfigError("model.pattern.at_least: give exactly one of at_least and complement");
    if (pt.contains("at_least")) {
        const int c = static_cast<int>(as_int(pt.at("at_least"), "model.pattern.at_least", 1, 1000));
        m.pattern = PatternSpec::at_least(m.pattern.support, c);
    } else {
        m.pattern.kind = PatternSpec::Kind::complement;
        const json& c = pt.at("complement");
        if (!c.is_array() || c.empty()) throw ConfigError("model.pattern.complement: must be a non-empty array");
        for (std::size_t q = 0; q < c.size(); ++q) {
            const std::string w = "model.pattern.complement[" + std::to_string(q) + "]";
            if (!c[q].is_array() || c[q].size() != m.pattern.support.size())
                throw ConfigError(w + ": must list one occupation per support site");
            BaseConfig b;
            for (std::size_t z = 0; z < c[q].size(); ++z)
                b.push_back(static_cast<int>(as_int(c[q][z], w + "[" + std::to_string(z) + "]", 0, 1000)));
            m.pattern.complement.push_back(b);
        }
    }
    m.box = static_cast<int>(as_int(need(j, P, "box"), "model.box", 0, 1000));
    opt_int(j, P, "halo", m.halo, 0, 1000);
    if (j.contains("require_irreducible")) {
        if (!j.at("require_irreducible").is_boolean()) throw ConfigError("model.require_irreducible: must be a boolean");
        m.require_irreducible = j.at("require_irreducible").get<bool>();
    }
    return m;
}

} // namespace detail

/// Parses and validates a run configuration. Unknown keys are rejected everywhere.
inline RunConfig parse_config(const json& j) {
    using namespace detail;
    only_keys(j, "", {"name", "seed", "output", "stages", "model", "statespace", "solver", "hitting", "variational",
                      "regularity", "simulation", "approximation"});
    RunConfig c;
    c.raw = j;
    const json& name = need(j, "", "name");
    if (!name.is_string() || name.get<std::string>().empty()) throw ConfigError("name: must be a non-empty string");
    c.name = name.get<std::string>();
    if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(as_int(j.at("seed"), "seed", 0, std::numeric_limits<long long>::max()));
    c.output = "out/" + c.name;
    if (j.contains("output")) {
        if (!j.at("output").is_string()) throw ConfigError("output: must be a string");
        c.output = j.at("output").get<std::string>();
    }
    if (j.contains("stages")) {
        const json& s = j.at("stages");
        if (!s.is_array()) throw ConfigError("stages: must be an array");
        for (std::size_t k = 0; k < s.size(); ++k) {
            const std::string w = "stages[" + std::to_string(k) + "]";
            if (!s[k].is_string()) throw ConfigError(w + ": must be a string");
            const auto v = s[k].get<std::string>();
            if (std::find(all_stages().begin(), all_stages().end(), v) == all_stages().end())
                throw ConfigError(w + ": unknown stage '" + v + "'");
            c.stages.push_back(v);
        }
    }
    c.model = parse_model(need(j, "", "model"));

    const json& ss = need(j, "", "statespace");
    only_keys(ss, "statespace", {"per_site_cap", "total_cap", "budget"});
    c.caps.per_site = static_cast<int>(as_int(need(ss, "statespace", "per_site_cap"), "statespace.per_site_cap", 1, 255));
    if (ss.contains("total_cap"))
        c.caps.total = static_cast<int>(as_int(ss.at("total_cap"), "statespace.total_cap", 0, 1000000));
    opt_int(ss, "statespace", "budget", c.budget, 1, 4'000'000'000LL);

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        only_keys(s, "solver", {"tol", "max_iter", "random_starts", "agree_tol", "seed", "gap_iter", "matrix_free"});
        opt_num(s, "solver", "tol", c.solver.tol, 0.0, 1.0, true);
        opt_int(s, "solver", "max_iter", c.solver.max_iter, 1, 4'000'000'000LL);
        opt_int(s, "solver", "random_starts", c.solver.random_starts, 0, 1000);
        opt_num(s, "solver", "agree_tol", c.solver.agree_tol, 0.0, 1.0, true);
        opt_int(s, "solver", "seed", c.solver.seed, 0, std::numeric_limits<long long>::max());
        opt_int(s, "solver", "gap_iter", c.solver.gap_iter, 2, 100'000'000);
        if (s.contains("matrix_free")) {
            if (!s.at("matrix_free").is_boolean()) throw ConfigError("solver.matrix_free: must be a boolean");
            c.matrix_free = s.at("matrix_free").get<bool>();
        }
    }
    if (j.contains("hitting")) {
        const json& h = j.at("hitting");
        only_keys(h, "hitting", {"grid", "prefactor_T", "cesaro_T", "u_T", "cesaro_panels", "renewal_k"});
        if (h.contains("grid")) c.hitting.grid = as_grid(h.at("grid"), "hitting.grid");
        opt_num(h, "hitting", "prefactor_T", c.hitting.prefactor_T, 0.0, 1e9, true);
        opt_num(h, "hitting", "cesaro_T", c.hitting.cesaro_T, 0.0, 1e9, true);
        opt_num(h, "hitting", "u_T", c.hitting.u_T, 0.0, 1e9, true);
        opt_int(h, "hitting", "cesaro_panels", c.hitting.cesaro_panels, 2, 10'000'000);
        opt_int(h, "hitting", "renewal_k", c.hitting.renewal_k, 0, 1000);
    }
    if (c.hitting.grid.empty()) c.hitting.grid = {0.0, 1.0};
    if (j.contains("variational")) {
        const json& v = j.at("variational");
        only_keys(v, "variational", {"samples", "weight", "measure"});
        opt_int(v, "variational", "samples", c.variational.samples, 1, 1'000'000);
        opt_num(v, "variational", "weight", c.variational.weight, 0.0, 1.0, true);
        if (c.variational.weight >= 1.0) throw ConfigError("variational.weight: must lie in (0,1)");
        if (v.contains("measure")) {
            if (!v.at("measure").is_string()) throw ConfigError("variational.measure: must be a string");
            c.variational.measure = v.at("measure").get<std::string>();
            if (c.variational.measure != "dual_product" && c.variational.measure != "dual_eigenfunction")
                throw ConfigError("variational.measure: must be \"dual_product\" or \"dual_eigenfunction\"");
        }
    }
    if (j.contains("regularity")) {
        const json& r = j.at("regularity");
        only_keys(r, "regularity", {"powers", "certify_tol", "fkg_pairs", "fkg_sites", "fkg_cap"});
        opt_int(r, "regularity", "powers", c.regularity.powers, 1, 10);
        opt_num(r, "regularity", "certify_tol", c.regularity.certify_tol, 0.0, 1.0);
        opt_int(r, "regularity", "fkg_pairs", c.regularity.fkg_pairs, 0, 1'000'000);
        opt_int(r, "regularity", "fkg_sites", c.regularity.fkg_sites, 1, 8);
        opt_int(r, "regularity", "fkg_cap", c.regularity.fkg_cap, 1, 255);
    }
    if (j.contains("simulation")) {
        const json& s = j.at("simulation");
        only_keys(s, "simulation", {"trajectories", "grid", "fit_from", "coupled_trajectories", "coupled_events",
                                    "coupled_horizon", "kill_t", "kill_k_max", "kill_trajectories"});
        opt_int(s, "simulation", "trajectories", c.simulation.trajectories, 1, 1'000'000'000);
        if (s.contains("grid")) c.simulation.grid = as_grid(s.at("grid"), "simulation.grid");
        if (s.contains("fit_from")) c.simulation.fit_from = as_num(s.at("fit_from"), "simulation.fit_from", 0.0, 1e12);
        opt_int(s, "simulation", "coupled_trajectories", c.simulation.coupled_trajectories, 1, 1'000'000'000);
        opt_int(s, "simulation", "coupled_events", c.simulation.coupled_events, 1, 1'000'000'000);
        opt_num(s, "simulation", "coupled_horizon", c.simulation.coupled_horizon, 0.0, 1e300, true);
        opt_num(s, "simulation", "kill_t", c.simulation.kill_t, 0.0, 1e12, true);
        opt_int(s, "simulation", "kill_k_max", c.simulation.kill_k_max, 1, 1 << 20);
        if (c.simulation.kill_k_max & (c.simulation.kill_k_max - 1))
            throw ConfigError("simulation.kill_k_max: must be a power of two");
        opt_int(s, "simulation", "kill_trajectories", c.simulation.kill_trajectories, 1, 1'000'000'000);
    }
    if (c.simulation.grid.empty()) c.simulation.grid = c.hitting.grid;
    if (j.contains("approximation")) {
        const json& a = j.at("approximation");
        only_keys(a, "approximation", {"boxes", "grid", "mc_grid", "mc_trajectories"});
        const json& b = need(a, "approximation", "boxes");
        if (!b.is_array() || b.size() < 2) throw ConfigError("approximation.boxes: need at least two box radii");
        for (std::size_t k = 0; k < b.size(); ++k) {
            c.approximation.boxes.push_back(
                static_cast<int>(as_int(b[k], "approximation.boxes[" + std::to_string(k) + "]", 0, 1000)));
            if (k && c.approximation.boxes[k] <= c.approximation.boxes[k - 1])
                throw ConfigError("approximation.boxes: must be strictly increasing");
        }
        if (a.contains("grid")) c.approximation.grid = as_grid(a.at("grid"), "approximation.grid");
        if (a.contains("mc_grid")) c.approximation.mc_grid = as_grid(a.at("mc_grid"), "approximation.mc_grid");
        opt_int(a, "approximation", "mc_trajectories", c.approximation.mc_trajectories, 2, 1'000'000'000);
    }
    if (c.approximation.grid.empty()) c.approximation.grid = c.hitting.grid;
    if (c.approximation.mc_grid.empty()) c.approximation.mc_grid = c.approximation.grid;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

} // namespace azrp
