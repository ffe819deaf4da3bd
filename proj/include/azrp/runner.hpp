#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "epsilon.hpp"
#include "fkg.hpp"
#include "generator.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "pattern.hpp"
#include "rates.hpp"
#include "simulate.hpp"
#include "spectral.hpp"
#include "statespace.hpp"
#include "variational.hpp"

namespace azrp {

inline constexpr const char* artifact_version = "1.0.0";

/// One pass/fail line. Notes are reported but never fail a run.
struct Check {
    std::string stage;
    std::string name;
    std::string tag;      ///< identifier of the statement being verified
    std::string witness;  ///< state, sample id or grid point attaining `value`
    double value = 0.0;
    double tol = 0.0;
    std::string relation; ///< "<=", ">=" or "note"
    bool pass = true;

    bool note() const { return relation == "note"; }
    std::string line() const {
        std::ostringstream os;
        os << (note() ? "[NOTE]" : pass ? "[PASS]" : "[FAIL]") << " " << tag << "  " << name << ": " << std::setprecision(6)
           << value;
        if (!note()) os << " " << relation << " " << tol;
        if (!witness.empty()) os << " (" << witness << ")";
        return os.str();
    }
};

/// Everything one box needs for the linear-algebra stages.
struct BoxModel {
    Domain domain;
    std::unique_ptr<StateTable> table;
    MeasureVector nu;
    std::vector<char> in_A;
    std::optional<SparseGenerator> L, Ls, Lk, Lks;
    std::vector<double> nu_Ac;
    std::optional<EigenPair> pair;

    explicit BoxModel(Domain d) : domain(std::move(d)) {}
    const std::vector<StateIndex>& ac_states() const { return Lk->states; }
};

/// Stage-by-stage execution of one configuration.
class Runner {
public:
    explicit Runner(RunConfig cfg, std::ostream* log = nullptr) : cfg_(std::move(cfg)), log_(log) {}

    const RunConfig& config() const { return cfg_; }
    const std::vector<Check>& checks() const { return checks_; }
    const json& derived() const { return derived_; }
    const std::map<std::string, double>& seconds() const { return seconds_; }
    std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& c : checks_) n += !c.note() && !c.pass;
        return n;
    }

    /// Runs the requested stages (and their prerequisites) in dependency order.
    /// Exceptions propagate after `failed_stage` is set.
    void run(const std::vector<std::string>& wanted) {
        std::vector<std::string> order;
        for (const auto& s : all_stages())
            if (std::find(wanted.begin(), wanted.end(), s) != wanted.end()) order.push_back(s);
        for (const auto& s : order) run_stage(s);
    }

    void run_stage(const std::string& s) {
        if (done_.count(s)) return;
        for (const auto& d : prerequisites(s)) run_stage(d);
        current_ = s;
        const auto t0 = std::chrono::steady_clock::now();
        if (log_) *log_ << "== stage " << s << std::endl;
        if (s == "model") stage_model();
        else if (s == "statespace") stage_statespace();
        else if (s == "generator") stage_generator();
        else if (s == "spectral") stage_spectral();
        else if (s == "hitting") stage_hitting();
        else if (s == "variational") stage_variational();
        else if (s == "regularity") stage_regularity();
        else if (s == "simulate") stage_simulate();
        else if (s == "approximation") stage_approximation();
        else throw std::invalid_argument("unknown stage " + s);
        seconds_[s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        done_.insert(s);
        current_.clear();
    }

    const std::string& current_stage() const { return current_; }

    static std::vector<std::string> prerequisites(const std::string& s) {
        if (s == "model") return {};
        if (s == "statespace") return {"model"};
        if (s == "generator") return {"statespace"};
        if (s == "spectral") return {"generator"};
        if (s == "hitting" || s == "variational" || s == "regularity" || s == "simulate") return {"spectral"};
        if (s == "approximation") return {"model"};
        return {};
    }

    /// Model, tables and eigenpair of the main box, available after the matching stages.
    const BoxModel& box() const { return *box_; }
    const Kernel& kernel() const { return *kernel_; }
    double gamma() const { return gamma_; }
    const Marginal& marginal() const { return *marginal_; }
    const Pattern& pattern() const { return *pattern_; }

private:
    // ---------------------------------------------------------------- helpers
    void add(std::string name, std::string tag, double value, const std::string& rel, double tol,
             std::string witness = {}) {
        Check c{current_, std::move(name), std::move(tag), std::move(witness), value, tol, rel, true};
        if (rel == "<=") c.pass = value <= tol;
        else if (rel == ">=") c.pass = value >= tol;
        else if (rel != "note") throw std::invalid_argument("bad relation " + rel);
        if (log_) *log_ << c.line() << std::endl;
        checks_.push_back(std::move(c));
    }

    void note(std::string name, std::string tag, double value, std::string witness = {}) {
        add(std::move(name), std::move(tag), value, "note", 0.0, std::move(witness));
    }

    std::string out_path(const std::string& file) const {
        std::filesystem::create_directories(cfg_.output);
        return (std::filesystem::path(cfg_.output) / file).string();
    }

    std::string state_name(const BoxModel& b, StateIndex s) const {
        return "state " + std::to_string(s) + " " + to_string(b.table->config(s), '[', ']');
    }

    std::unique_ptr<BoxModel> build_box(int radius, bool open_generators, bool dual) const {
        auto b = std::make_unique<BoxModel>(LatticeBox(cfg_.model.dim, radius).domain());
        pattern_->locate(b->domain); // throws if S is not inside
        b->table = enumerate(b->domain, cfg_.caps, cfg_.budget);
        b->nu = measure_vector(*b->table, *marginal_);
        b->in_A = pattern_indicator(*b->table, *pattern_);
        if (open_generators) {
            b->L = assemble_open(*b->table, *kernel_, cfg_.model.rate, gamma_);
            b->Lk = kill(*b->L, b->in_A);
            if (dual) {
                b->Ls = assemble_dual(*b->table, *kernel_, cfg_.model.rate, gamma_);
                b->Lks = kill(*b->Ls, b->in_A);
            }
            b->nu_Ac = restrict_to(b->Lk->states, b->nu.w);
        }
        return b;
    }

    // ---------------------------------------------------------------- stages
    void stage_model() {
        const auto& m = cfg_.model;
        auto kr = validate_kernel(m.kernel, m.dim, m.require_irreducible);
        if (!kr.ok()) {
            std::string msg = "model.kernel:";
            for (const auto& v : kr.violations) msg += " " + v + ";";
            throw ConfigError(msg);
        }
        kernel_ = *kr.kernel;
        double sum = 0.0;
        for (const auto& e : kernel_->entries()) sum += e.prob;
        add("kernel mass |sum p - 1|", "def-p", std::abs(sum - 1.0), "<=", 1e-12);
        note("kernel range R", "def-p", kernel_->range());
        note("symmetrized kernel irreducible on Z^d (1 = yes)", "def-p", kr.irreducible ? 1.0 : 0.0,
             kr.notes.empty() ? std::string{} : kr.notes.front());

        FugacityMap fm(m.rate);
        if (m.rho) {
            gamma_ = fm.gamma(*m.rho);
            add("fugacity inversion |rho(gamma) - rho|", "def-m", std::abs(fm.rho(gamma_) - *m.rho), "<=", 1e-12);
        } else {
            gamma_ = *m.gamma;
        }
        marginal_ = build_marginal(m.rate, gamma_, cfg_.caps.per_site);
        double ratio = 0.0;
        const auto& th = marginal_->probs;
        for (std::size_t n = 0; n + 1 < th.size(); ++n)
            ratio = std::max(ratio, std::abs(th[n + 1] * m.rate(static_cast<int>(n + 1)) - gamma_ * th[n]) /
                                        (gamma_ * th[n]));
        add("marginal ratio identity theta(n+1)g(n+1) = gamma theta(n)", "def-m", ratio, "<=", 1e-14);

        auto cf = check_pattern_cf(m.pattern);
        if (!cf.ok()) {
            std::string msg = "model.pattern: (C-F) fails:";
            for (const auto& f : cf.failures) msg += " clause " + std::to_string(f.clause) + " " + f.what + ";";
            throw ConfigError(msg);
        }
        pattern_ = *cf.pattern;
        note("cylinders in N^S minus A", "C-F", static_cast<double>(pattern_->cylinders().size()));

        derived_["gamma"] = gamma_;
        derived_["rho"] = fm.rho(gamma_);
        derived_["site_tail_mass"] = marginal_->tail;
        derived_["kernel_drift"] = kernel_->drift();
    }

    void stage_statespace() {
        box_ = build_box(cfg_.model.box, false, false);
        const StateTable& t = *box_->table;
        const auto expect = StateTable::count_states(
            t.sites(), cfg_.caps.per_site, cfg_.caps.total.value_or(cfg_.caps.per_site * static_cast<int>(t.sites())));
        add("state count minus closed-form count", "def-K",
            std::abs(static_cast<double>(t.size()) - static_cast<double>(expect)), "<=", 0.0);
        std::size_t bad = 0;
        for (std::size_t s = 0; s < t.size(); ++s) bad += t.find(t.state(s)) != s;
        add("index round trip failures", "def-K", static_cast<double>(bad), "<=", 0.0);
        double kept = 0.0;
        for (std::size_t s = 0; s < t.size(); ++s) {
            double w = 1.0;
            for (std::size_t i = 0; i < t.sites(); ++i) w *= marginal_->probs[t.occupancy(s, i)];
            kept += w;
        }
        const double site_tail = tail_mass(t.sites(), cfg_.model.rate, gamma_, cfg_.caps.per_site);
        note("untruncated mass outside the per-site caps", "def-K", site_tail);
        note("product mass removed by the total cap", "def-K", 1.0 - kept);
        derived_["states"] = t.size();
        derived_["sites"] = t.sites();
        derived_["per_site_tail_mass"] = site_tail;
        derived_["total_cap_removed_mass"] = 1.0 - kept;
        std::size_t inA = 0;
        for (char c : box_->in_A) inA += c;
        derived_["states_in_A"] = inA;

        eps_ = epsilon_field(*kernel_, pattern_->support(), box_->domain, std::max(cfg_.model.halo, kernel_->range()));
        add("epsilon harmonicity residual", "sec2.3", eps_->residual, "<=", 1e-12);
        add("epsilon halo sensitivity", "sec2.3", eps_->sensitivity, "<=", 1e-8);
        derived_["epsilon_halo"] = eps_->halo;
        derived_["epsilon_halo_sensitivity"] = eps_->sensitivity;
    }

    void stage_generator() {
        BoxModel& b = *box_;
        const StateTable& t = *b.table;
        if (cfg_.matrix_free) {
            note("generator checks skipped (matrix-free mode)", "def-Llig", 0.0);
            return;
        }
        b.L = assemble_open(t, *kernel_, cfg_.model.rate, gamma_);
        b.Ls = assemble_dual(t, *kernel_, cfg_.model.rate, gamma_);
        add("open generator max |row sum|", "def-Llig", max_abs_row_sum(*b.L), "<=", 1e-12);
        add("dual generator max |row sum|", "def-adjoint", max_abs_row_sum(*b.Ls), "<=", 1e-12);
        add("invariance ||nu L||_1", "sec3.1", invariance_residual(*b.L, b.nu), "<=", 1e-12);
        add("invariance ||nu L*||_1", "sec3.1", invariance_residual(*b.Ls, b.nu), "<=", 1e-12);
        add("adjointness residual", "def-adjoint", adjointness_residual(*b.L, *b.Ls, b.nu), "<=", 1e-13);
        derived_["nonzeros"] = b.L->nonzeros();

        // integration by parts on random pairs; f is zero off the table so every pair is cap-safe
        std::mt19937_64 rng(cfg_.seed ^ 0x1b9ULL);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        std::uniform_int_distribution<int> site(0, static_cast<int>(t.sites()) - 1);
        double worst = 0.0;
        std::string where;
        const int pairs = t.size() > 200000 ? 10 : 100;
        for (int k = 0; k < pairs; ++k) {
            std::vector<double> a(t.sites()), c(t.sites());
            for (auto& x : a) x = U(rng);
            for (auto& x : c) x = 0.5 * U(rng);
            const double q = U(rng);
            ConfigFunction phi = [a, q](const std::vector<int>& eta) {
                double s = 0.0, s2 = 0.0;
                for (std::size_t i = 0; i < eta.size(); ++i) s += a[i] * eta[i], s2 += eta[i] * eta[i];
                return s + q * s2;
            };
            ConfigFunction f = [&t, c](const std::vector<int>& eta) {
                for (int x : eta)
                    if (x > t.caps().per_site) return 0.0;
                if (t.find_config(eta) == no_state) return 0.0;
                double s = 0.0;
                for (std::size_t i = 0; i < eta.size(); ++i) s += c[i] * eta[i];
                return std::exp(s);
            };
            const int i = site(rng), j = site(rng);
            const auto r = ibp_check(t, cfg_.model.rate, gamma_, b.nu, phi, f, i, j);
            const double rel = r.residual() / std::max(1.0, std::abs(r.lhs));
            if (rel > worst) worst = rel, where = "pair " + std::to_string(k);
        }
        add("integration by parts residual (" + std::to_string(pairs) + " pairs)", "eq-byparts", worst, "<=", 1e-13,
            where);
    }

    void stage_spectral() {
        BoxModel& b = *box_;
        if (cfg_.matrix_free) {
            Dynamics dyn(*b.table, TruncatedKernel(*kernel_, b.domain), cfg_.model.rate, gamma_);
            Dynamics dual(*b.table, TruncatedKernel(kernel_->reversed_kernel(), b.domain), cfg_.model.rate, gamma_);
            MatrixFreeKilled q(dyn, b.in_A), qs(dual, b.in_A);
            b.nu_Ac = restrict_to(q.states(), b.nu.w);
            b.pair = principal_pair(q, qs, b.nu_Ac, cfg_.solver);
            mf_states_ = q.states();
        } else {
            b.Lk = kill(*b.L, b.in_A);
            b.Lks = kill(*b.Ls, b.in_A);
            add("killed chain irreducible (1 = yes)", "lem3.4", is_irreducible(*b.Lk) ? 1.0 : 0.0, ">=", 1.0);
            add("killed dual chain irreducible (1 = yes)", "lem3.4", is_irreducible(*b.Lks) ? 1.0 : 0.0, ">=", 1.0);
            b.nu_Ac = restrict_to(b.Lk->states, b.nu.w);
            b.pair = principal_pair(*b.Lk, *b.Lks, b.nu_Ac, cfg_.solver);
        }
        const EigenPair& p = *b.pair;
        add("eigen residual ||L u + lambda u||_inf", "eq3.6", p.residual, "<=", 1e-10);
        add("dual eigen residual ||L* u* + lambda* u*||_inf", "eq3.6", p.residual_star, "<=", 1e-10);
        add("|lambda - lambda*| / lambda", "eq3.12", std::abs(p.lambda - p.lambda_star) / p.lambda, "<=", 1e-9);
        const auto umin = std::min_element(p.u.begin(), p.u.end());
        const auto smin = std::min_element(p.u_star.begin(), p.u_star.end());
        const auto& st = states();
        add("min u on A^c", "lem3.4", *umin, ">=", std::numeric_limits<double>::min(),
            state_name(b, st[static_cast<std::size_t>(umin - p.u.begin())]));
        add("min u* on A^c", "lem3.4", *smin, ">=", std::numeric_limits<double>::min(),
            state_name(b, st[static_cast<std::size_t>(smin - p.u_star.begin())]));
        add("random-start spread (" + std::to_string(cfg_.solver.random_starts) + " starts)", "lem3.3bis",
            p.multistart_spread, "<=", cfg_.solver.agree_tol);
        add("<u,u*>_nu", "lem6", p.overlap, ">=", 1.0 - 1e-10);
        note("spectral gap estimate", "lem3.3bis", p.gap);
        derived_["lambda"] = p.lambda;
        derived_["lambda_star"] = p.lambda_star;
        derived_["overlap"] = p.overlap;
        derived_["gap"] = p.gap;
        derived_["power_iterations"] = p.iterations;

        if (!cfg_.matrix_free) {
            const auto d = doob_transform(p, *b.Lk, b.nu_Ac);
            add("Doob transform max |row sum|", "eq7.3", d.max_row_sum, "<=", 1e-12);
            add("Doob stationary measure ||mu_hat L^u||_1", "eq7.4", d.stationarity, "<=", 1e-10);
            note("Doob diagonal defect", "eq7.3", d.diagonal_defect);
        }
        CsvWriter w(out_path("eigenvector.csv"), {"state", "config", "u", "u_star", "nu"});
        for (std::size_t r = 0; r < st.size(); ++r)
            w.row({std::to_string(st[r]), to_string(b.table->config(st[r]), '[', ']'), csv_number(p.u[r]),
                   csv_number(p.u_star[r]), csv_number(b.nu_Ac[r])});
    }

    const std::vector<StateIndex>& states() const { return cfg_.matrix_free ? mf_states_ : box_->Lk->states; }

    template <class F>
    void with_killed(F&& f) {
        BoxModel& b = *box_;
        if (cfg_.matrix_free) {
            Dynamics dyn(*b.table, TruncatedKernel(*kernel_, b.domain), cfg_.model.rate, gamma_);
            f(MatrixFreeKilled(dyn, b.in_A));
        } else {
            f(*b.Lk);
        }
    }

    void stage_hitting() {
        BoxModel& b = *box_;
        const EigenPair& p = *b.pair;
        const auto& H = cfg_.hitting;
        with_killed([&](const auto& Lk) {
            const auto pr = prefactor_limit(Lk, b.nu_Ac, p, H.grid, H.prefactor_T, H.cesaro_T,
                                            static_cast<std::size_t>(H.cesaro_panels));
            const auto at = std::max_element(pr.c.begin(), pr.c.end());
            add("max_t c_t - 1 on the grid", "eq0.16", pr.max_c - 1.0, "<=", 1e-10,
                "t = " + csv_number(pr.t[static_cast<std::size_t>(at - pr.c.begin())]));
            add("|c_T <u,u*> - 1| at T = " + csv_number(H.prefactor_T) + "/gap", "eq0.17", pr.rel_error_T, "<=", 5e-3);
            add("Cesaro mean of c_t vs 1/<u,u*> (relative)", "eq0.17", pr.cesaro_rel_error, "<=", 1e-2);
            derived_["c_T"] = pr.c_T;
            derived_["cesaro"] = pr.cesaro;
            derived_["c_t"] = {{"t", pr.t}, {"c", pr.c}};
            CsvWriter w(out_path("survival.csv"), {"t", "P(tau>t)", "c_t"});
            for (std::size_t k = 0; k < pr.t.size(); ++k)
                w.row({csv_number(pr.t[k]), csv_number(pr.c[k] * std::exp(-p.lambda * pr.t[k])), csv_number(pr.c[k])});

            const double T = H.u_T / p.gap;
            const auto ut = conditional_density(Lk, b.nu_Ac, T);
            add("||u_T - u||_inf / ||u||_inf at T = " + csv_number(H.u_T) + "/gap", "eq3.8",
                sup_distance(ut, p.u) / sup_norm(p.u), "<=", 1e-4);
        });
        if (!cfg_.matrix_free) {
            const auto seq = renewal_sequence(*b.Lk, b.nu_Ac, H.renewal_k);
            CsvWriter w(out_path("renewal.csv"), {"k", "sup_distance_to_u", "mass", "solve_residual"});
            double prev = std::numeric_limits<double>::infinity(), rise = 0.0, mass = 0.0;
            for (std::size_t k = 0; k < seq.size(); ++k) {
                const double d = sup_distance(seq[k].density, p.u) / sup_norm(p.u);
                w.row({std::to_string(k), csv_number(d), csv_number(seq[k].mass), csv_number(seq[k].solve_residual)});
                // distances stall at solver precision, so only rises above 1e-9 count
                if (d > prev + 1e-9) rise = std::max(rise, d - prev);
                prev = d;
                mass = std::max(mass, std::abs(seq[k].mass - 1.0));
            }
            const double last = sup_distance(seq.back().density, p.u) / sup_norm(p.u);
            add("renewal iterate k = " + std::to_string(H.renewal_k) + " distance to u (relative sup)", "eq3.9", last,
                "<=", 0.02);
            add("renewal iterate mass |int dnu - 1|", "eq3.9", mass, "<=", 1e-8);
            add("renewal distance increase along k", "rem-existence", rise, "<=", 0.0);
        }
    }

    TestMeasure measure_for(const std::vector<double>& phi, const std::vector<double>& dual_factor,
                            const VariationalContext& ctx) const {
        return product_measure(phi, dual_factor, ctx);
    }

    static std::string sample_name(long k) { return k < 0 ? std::string{} : "sample " + std::to_string(k); }

    void stage_variational() {
        if (cfg_.matrix_free) throw std::runtime_error("variational stage needs the assembled generator");
        BoxModel& b = *box_;
        const EigenPair& p = *b.pair;
        const StateTable& t = *b.table;
        VariationalContext ctx(t, b.nu, b.in_A, *pattern_, *eps_);
        Dynamics dyn(t, TruncatedKernel(*kernel_, b.domain), cfg_.model.rate, gamma_);
        const auto u = extend_by_zero(b.Lk->states, p.u, t.size());
        const auto us = extend_by_zero(b.Lk->states, p.u_star, t.size());
        const bool use_ustar = cfg_.variational.measure == "dual_eigenfunction";
        std::mt19937_64 rng(cfg_.seed ^ 0x5a11ULL);
        const int n = cfg_.variational.samples;
        std::vector<std::vector<double>> phis;
        std::vector<TestMeasure> mus;
        std::size_t bad_phi = 0, bad_mu = 0, bad_mix = 0, bad_ustar_mu = 0, bad_E = 0;
        double gf_err = 0.0, n_err = 0.0, conv = std::numeric_limits<double>::infinity();
        std::string gf_w, conv_w;
        CsvWriter w(out_path("variational.csv"),
                    {"sample", "gamma_u_mu_plus_lambda", "duality", "saddle", "convexity_slack", "gradient_form_error",
                     "N"});
        std::vector<double> col_a, col_c;
        for (int k = 0; k < n; ++k) {
            const TestFunction f = realize(sample_recipe(rng, *pattern_, b.domain, false), ctx);
            const TestFunction fs = realize(sample_recipe(rng, *pattern_, b.domain, true), ctx);
            const TestFunction f2 = realize(sample_recipe(rng, *pattern_, b.domain, false), ctx);
            bad_phi += !certify_D(f.phi, t, b.in_A, *eps_, ctx.support_pos, FunctionClass::D, 0.0).ok();
            bad_phi += !certify_D(f2.phi, t, b.in_A, *eps_, ctx.support_pos, FunctionClass::D, 0.0).ok();
            bad_phi += !certify_D(fs.phi, t, b.in_A, *eps_, ctx.support_pos, FunctionClass::D_star, 0.0).ok();
            const TestMeasure mu = use_ustar ? measure_for(f.phi, us, ctx) : measure_for(f.phi, fs.phi, ctx);
            bad_mu += !certify_M(mu, ctx, 1e-12).ok();
            bad_ustar_mu += !certify_M(product_measure(f.phi, us, ctx), ctx, 1e-12).ok();
            if (!mus.empty()) bad_mix += !certify_M(mixture(mu, mus.back(), 0.5), ctx, 1e-12).ok();
            phis.push_back(f.phi);
            mus.push_back(mu);

            const auto h = f.log(), h2 = f2.log();
            const auto gf = gradient_form(h, mu, dyn, b.in_A, b.nu);
            const double direct = evaluate_gamma(*b.L, f.phi, mu.mu);
            const double e = std::abs(gf.total() - direct);
            if (e > gf_err) gf_err = e, gf_w = "sample " + std::to_string(k);
            n_err = std::max(n_err, std::abs(gf.N));
            const auto cv = convexity_check(h, h2, cfg_.variational.weight, mu, *b.L, ctx);
            if (cv.slack < conv) conv = cv.slack, conv_w = "sample " + std::to_string(k);
            bad_E += !cv.combination_in_E;
            col_a.push_back(evaluate_gamma(*b.L, u, mu.mu) + p.lambda);
            const TestMeasure ms = product_measure(f.phi, us, ctx);
            const double dual = evaluate_gamma(*b.L, f.phi, ms.mu) + p.lambda;
            const TestMeasure mh = product_measure(u, us, ctx);
            col_c.push_back(evaluate_gamma(*b.L, f.phi, mh.mu) + p.lambda);
            w.row({std::to_string(k), csv_number(col_a.back()), csv_number(dual), csv_number(col_c.back()),
                   csv_number(cv.slack), csv_number(e), csv_number(gf.N)});
        }
        const auto sr = saddle_check(p, b.Lk->states, *b.L, phis, mus, ctx);
        const std::string ns = std::to_string(n);
        add("sampled test functions failing D_n certification (tolerance 0)", "def-Dn", static_cast<double>(bad_phi),
            "<=", 0.0);
        add("sampled measures failing M_n certification", "def-Mn", static_cast<double>(bad_mu), "<=", 0.0);
        add("mixtures failing M_n certification", "lem3.6", static_cast<double>(bad_mix), "<=", 0.0);
        note("measures phi u* nu failing M_n certification", "eq3.4", static_cast<double>(bad_ustar_mu));
        add("max |Gamma(u, mu) + lambda| over " + ns + " measures", "eq4.19", sr.max_a, "<=", 1e-10,
            sample_name(sr.witness_a));
        add("max |Gamma(phi, mu*_phi) + lambda| over " + ns + " functions", "lem3.8", sr.max_b, "<=", 1e-10,
            sample_name(sr.witness_b));
        add("min Gamma(phi, mu_hat) + lambda", "eq3.19", sr.min_c, ">=", -1e-9, sample_name(sr.witness_c));
        add("min convexity slack over " + ns + " triples", "lem3.7", conv, ">=", -1e-11, conv_w);
        add("convex combinations outside E_n", "lem3.2", static_cast<double>(bad_E), "<=", 0.0);
        add("max |gradient form - direct Gamma|", "eq4.7", gf_err, "<=", 1e-11, gf_w);
        add("max |N(h, mu)|", "eq4.9", n_err, "<=", 1e-12);
        {
            // a test pair defined from site coordinates, so the same pair can be evaluated on every box
            const auto probe = probe_pair(cfg_.seed, *pattern_, b.domain, ctx);
            const double g1 = evaluate_gamma(*b.L, probe.first.phi, probe.second.mu);
            const double single = [&] {
                double x = 0.0;
                for (std::size_t s = 0; s < t.size(); ++s)
                    if (!b.in_A[s]) x = std::max(x, std::abs(probe.first.phi[s]));
                return x;
            }();
            note("Gamma_n on the coordinate-keyed probe pair", "prop4.1", g1);
            derived_["gamma_probe"] = g1;
            derived_["gamma_probe_sup_phi"] = single;
        }
    }

    /// phi from a site-keyed recipe and mu = phi phi* nu, both reproducible on any box containing S.
    static std::pair<TestFunction, TestMeasure> probe_pair(std::uint64_t seed, const Pattern& pat, const Domain& dom,
                                                           const VariationalContext& ctx) {
        auto recipe = [&](bool dual) {
            ProductRecipe r;
            Engine e = stream(seed, 0xC0FFEE, dual ? 2 : 1);
            r.psi = random_decreasing(e, pat);
            r.dual = dual;
            for (const auto& s : dom.sites()) {
                std::uint64_t h = dual ? 7 : 3;
                for (int x : s) h = h * 1000003ULL + static_cast<std::uint64_t>(x + 500000);
                Engine es = stream(seed, h, 3);
                r.s[s] = std::uniform_real_distribution<double>(0.0, 1.0)(es);
            }
            return r;
        };
        TestFunction f = realize(recipe(false), ctx);
        TestFunction fs = realize(recipe(true), ctx);
        TestMeasure mu = product_measure(f.phi, fs.phi, ctx);
        return {std::move(f), std::move(mu)};
    }

    void stage_regularity() {
        if (cfg_.matrix_free) throw std::runtime_error("regularity stage needs the assembled generator");
        BoxModel& b = *box_;
        const EigenPair& p = *b.pair;
        const StateTable& t = *b.table;
        VariationalContext ctx(t, b.nu, b.in_A, *pattern_, *eps_);
        const auto u = extend_by_zero(b.Lk->states, p.u, t.size());
        const auto us = extend_by_zero(b.Lk->states, p.u_star, t.size());
        const double tol = cfg_.regularity.certify_tol;
        const auto cu = certify_D(u, t, b.in_A, *eps_, ctx.support_pos, FunctionClass::D, tol);
        std::string w;
        if (!cu.violations.empty()) {
            const auto& v = cu.violations.front();
            w = v.condition + " at " + state_name(b, v.state) + ", site " + std::to_string(v.site) + "; " +
                std::to_string(cu.count) + " of " + std::to_string(cu.edges) + " edges";
        }
        add("certify_D(u): worst relative excess", "def-Dn", cu.worst, "<=", tol, w);
        const auto cs = certify_D(us, t, b.in_A, *eps_, ctx.support_pos, FunctionClass::D_star, tol);
        note("certify_D*(u*): worst relative excess", "def-Dn", cs.worst, std::to_string(cs.count) + " violations");
        {
            CsvWriter cw(out_path("certify_u.csv"), {"condition", "state", "config", "site", "excess"});
            for (const auto& v : cu.violations)
                cw.row({v.condition, std::to_string(v.state), to_string(t.config(v.state), '[', ']'),
                        std::to_string(v.site), csv_number(v.excess)});
        }

        const TiltedDensity psi = tilted_density(*eps_, ctx.support_pos, cfg_.model.rate, gamma_, cfg_.caps.per_site);
        add("psi_eps single-particle identity, max relative error", "rem-recall", tilt_identity_error(psi, ctx), "<=",
            1e-13);

        const auto rows = regularity_bounds(u, psi, ctx, cfg_.regularity.powers);
        CsvWriter rw(out_path("regularity.csv"), {"inequality", "cylinder", "power", "lhs", "rhs", "relative_slack"});
        std::map<std::pair<std::string, int>, std::pair<double, int>> worst;
        std::set<std::string> reported_only;
        for (const auto& r : rows) {
            rw.row({r.inequality, std::to_string(r.cylinder), std::to_string(r.power), csv_number(r.lhs),
                    csv_number(r.rhs), csv_number(r.relative_slack())});
            if (r.reported_only) reported_only.insert(r.inequality);
            auto key = std::make_pair(r.inequality, r.power);
            auto it = worst.find(key);
            if (it == worst.end() || r.relative_slack() < it->second.first) worst[key] = {r.relative_slack(), r.cylinder};
        }
        for (const auto& [key, v] : worst) {
            const auto& [ineq, n] = key;
            const std::string tag = ineq.substr(0, ineq.find(' '));
            const std::string w2 = v.second >= 0 ? "cylinder " + std::to_string(v.second) : std::string{};
            // Equality is attained in degenerate cases (the first cylinder bound at n = 1 always,
            // every row when the support is the whole box), so a row holds when its slack is
            // nonnegative up to rounding. The last bound as printed drops the 1/nu(theta)^2 factor
            // of its own proof and can fail on small boxes. It is reported, and the proved form is asserted.
            const std::string label = ineq + " n=" + std::to_string(n) + " relative slack";
            if (reported_only.count(ineq))
                note(label + " (as printed)", tag, v.first, w2);
            else
                add(label, tag, v.first, ">=", -1e-12, w2);
        }

        // FKG on a product space: a few sites, per-site cap only
        {
            const int k = cfg_.regularity.fkg_sites;
            std::vector<Site> sites(b.domain.sites().begin(), b.domain.sites().begin() + std::min<std::size_t>(k, b.domain.size()));
            Domain d(cfg_.model.dim, sites);
            auto pt = enumerate(d, Caps{cfg_.regularity.fkg_cap, std::nullopt});
            auto pm = build_marginal(cfg_.model.rate, gamma_, cfg_.regularity.fkg_cap);
            auto pnu = measure_vector(*pt, pm);
            std::mt19937_64 rng(cfg_.seed ^ 0xF4CULL);
            double worst_inc = std::numeric_limits<double>::infinity(), worst_mix = -worst_inc;
            for (int q = 0; q < cfg_.regularity.fkg_pairs; ++q) {
                const auto f = random_upset(rng, *pt, 1 + q % 4);
                const auto g = random_increasing(rng, *pt);
                auto h = random_increasing(rng, *pt);
                for (double& x : h) x = -x;
                worst_inc = std::min(worst_inc, fkg_check(*pt, pnu.w, f, Direction::increasing, g, Direction::increasing).covariance);
                worst_mix = std::max(worst_mix, fkg_check(*pt, pnu.w, f, Direction::increasing, h, Direction::decreasing).covariance);
            }
            add("FKG: min covariance of increasing pairs (" + std::to_string(cfg_.regularity.fkg_pairs) + ", " +
                    std::to_string(pt->size()) + " states)",
                "def-FKG", worst_inc, ">=", -1e-12);
            add("FKG: max covariance of mixed pairs", "def-FKG", worst_mix, "<=", 1e-12);
        }
        if (t.caps().total) {
            // the same statistic on the capped table, where FKG is not expected
            std::mt19937_64 rng(cfg_.seed ^ 0xF4DULL);
            double worst = std::numeric_limits<double>::infinity();
            for (int q = 0; q < 20; ++q) {
                const auto f = random_upset(rng, t, 2), g = random_upset(rng, t, 2);
                double z = 0, ef = 0, eg = 0, efg = 0;
                for (std::size_t s = 0; s < t.size(); ++s)
                    z += b.nu[s], ef += b.nu[s] * f[s], eg += b.nu[s] * g[s], efg += b.nu[s] * f[s] * g[s];
                worst = std::min(worst, efg / z - (ef / z) * (eg / z));
            }
            note("covariance of up-set pairs under the total-capped measure (min of 20)", "def-FKG", worst);
        }
    }

    void stage_simulate() {
        BoxModel& b = *box_;
        const EigenPair& p = *b.pair;
        const auto& S = cfg_.simulation;
        SimModel sm(b.domain, *kernel_, cfg_.model.rate, gamma_, cfg_.caps, *pattern_);
        const auto hs = survival_mc(sm, *marginal_, S.grid, S.trajectories, cfg_.seed, S.fit_from);
        std::vector<double> exact;
        with_killed([&](const auto& Lk) { exact = survival_curve(Lk, b.nu_Ac, S.grid).p; });
        double worst = 0.0;
        std::string at;
        CsvWriter w(out_path("mc_survival.csv"), {"t", "P_hat", "stderr", "exact", "z"});
        const double n = static_cast<double>(S.trajectories);
        for (std::size_t k = 0; k < S.grid.size(); ++k) {
            // standard error under the exact value, so grid points with P_hat in {0,1} are still tested
            const double se = std::sqrt(exact[k] * (1.0 - exact[k]) / n);
            const double diff = std::abs(hs.p[k] - exact[k]);
            const double z = se > 0.0 ? diff / se : (diff > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0);
            if (z > worst) worst = z, at = "t = " + csv_number(S.grid[k]);
            w.row({csv_number(S.grid[k]), csv_number(hs.p[k]), csv_number(hs.se[k]), csv_number(exact[k]),
                   csv_number(z)});
        }
        add("max |P_hat - P| / stderr over the grid (" + std::to_string(S.trajectories) + " trajectories)", "eq3.7",
            worst, "<=", 3.0, at);
        const bool covers = hs.ci_lo <= p.lambda && p.lambda <= hs.ci_hi;
        add("99% interval [" + csv_number(hs.ci_lo) + ", " + csv_number(hs.ci_hi) + "] covers lambda (1 = yes)", "eq0.6",
            covers ? 1.0 : 0.0, ">=", 1.0, hs.warning);
        derived_["lambda_hat"] = hs.lambda_hat;
        derived_["lambda_hat_ci"] = {hs.ci_lo, hs.ci_hi};
        derived_["fit_events"] = hs.fit_events;

        // basic coupling without the total cap
        {
            Caps site_only{cfg_.caps.per_site, std::nullopt};
            SimModel cm(b.domain, *kernel_, cfg_.model.rate, gamma_, site_only, *pattern_);
            Engine e = stream(cfg_.seed, 0, 9);
            std::vector<int> eta0 = InitialSampler(*marginal_, site_only)(e, b.domain.size());
            const int s0 = cm.support_pos.front();
            for (int& x : eta0) x = std::min(x, cfg_.caps.per_site - 1);
            std::vector<int> zeta0 = eta0;
            ++zeta0[static_cast<std::size_t>(s0)];
            const auto cr = coupled_order_run(cm, eta0, zeta0, S.coupled_trajectories, S.coupled_horizon,
                                              S.coupled_events, cfg_.seed + 1);
            add("coupled order violations (" + std::to_string(cr.trajectories) + " trajectories, " +
                    std::to_string(cr.events) + " events)",
                "sec2.2", static_cast<double>(cr.violations), "<=", 0.0,
                cr.violations ? "trajectory " + std::to_string(cr.first_violation_trajectory) + " event " +
                                    std::to_string(cr.first_violation_event)
                              : std::string{});
            const double tend = *std::min_element(cr.end_time.begin(), cr.end_time.end());
            double zmax = -std::numeric_limits<double>::infinity();
            const double m = static_cast<double>(cr.trajectories);
            for (int q = 1; q <= 10; ++q) {
                const double tq = tend * q / 10.0;
                double lo = 0, up = 0;
                for (std::size_t id = 0; id < cr.trajectories; ++id) lo += cr.tau_lower[id] > tq, up += cr.tau_upper[id] > tq;
                lo /= m;
                up /= m;
                const double se = std::sqrt((lo * (1 - lo) + up * (1 - up)) / m);
                zmax = std::max(zmax, se > 0 ? (up - lo) / se : (up > lo ? 1e300 : 0.0));
            }
            add("coupled survival: max (P_upper - P_lower) / stderr", "sec2.2", zmax, "<=", 3.0);
        }

        const auto kr = discretized_kill(sm, *marginal_, S.kill_t, S.kill_k_max, S.kill_trajectories, cfg_.seed + 2);
        add("paths where tau^k is not monotone in k", "eq-kill1", static_cast<double>(kr.pathwise_violations), "<=", 0.0);
        double neg = 0.0, rise = 0.0;
        for (std::size_t l = 0; l < kr.k.size(); ++l) {
            neg = std::min(neg, kr.excess[l]);
            if (l) rise = std::max(rise, kr.p_k[l] - kr.p_k[l - 1]);
        }
        add("min_k P(tau^k > t) - P(tau > t) on shared paths", "eq-kill1", neg, ">=", 0.0);
        add("max increase of P(tau^k > t) under k doubling", "eq-kill1", rise, "<=", 0.0);
        CsvWriter kw(out_path("kill.csv"), {"k", "P_tau_k", "stderr", "excess_over_P_tau"});
        for (std::size_t l = 0; l < kr.k.size(); ++l)
            kw.row({std::to_string(kr.k[l]), csv_number(kr.p_k[l]), csv_number(kr.se_k[l]), csv_number(kr.excess[l])});
    }

    void stage_approximation() {
        const auto& A = cfg_.approximation;
        if (A.boxes.size() < 2) {
            note("approximation stage needs at least two boxes", "lem-approx", 0.0);
            return;
        }
        PowerOptions o = cfg_.solver;
        o.random_starts = 0;
        std::vector<std::unique_ptr<BoxModel>> boxes;
        std::vector<double> lambdas;
        for (int r : A.boxes) {
            auto b = build_box(r, true, true);
            b->pair = principal_pair(*b->Lk, *b->Lks, b->nu_Ac, o);
            lambdas.push_back(b->pair->lambda);
            note("lambda on box radius " + std::to_string(r) + " (" + std::to_string(b->table->size()) + " states)",
                 "lem-approx", b->pair->lambda);
            boxes.push_back(std::move(b));
        }
        derived_["approximation"] = {{"boxes", A.boxes}, {"lambda", lambdas}};
        double rise = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < lambdas.size(); ++k) rise = std::max(rise, (lambdas[k] - lambdas[k - 1]) / lambdas[k - 1]);
        add("max relative increase of lambda_n along n", "lem-approx", rise, "<=", 1e-9);

        // survival ordering on the two smallest boxes, by uniformization
        {
            const auto p0 = survival_curve(*boxes[0]->Lk, boxes[0]->nu_Ac, A.grid).p;
            const auto p1 = survival_curve(*boxes[1]->Lk, boxes[1]->nu_Ac, A.grid).p;
            double worst = std::numeric_limits<double>::infinity();
            std::string at;
            CsvWriter w(out_path("domain_survival.csv"), {"t", "P_small", "P_next"});
            for (std::size_t k = 0; k < A.grid.size(); ++k) {
                if (p1[k] - p0[k] < worst) worst = p1[k] - p0[k], at = "t = " + csv_number(A.grid[k]);
                w.row({csv_number(A.grid[k]), csv_number(p0[k]), csv_number(p1[k])});
            }
            add("min_t P^{n+1}(tau>t) - P^n(tau>t), two smallest boxes", "eq2.7", worst, ">=", -1e-10, at);
        }
        // common-seed Monte Carlo on the two largest boxes
        {
            const std::size_t a = boxes.size() - 2, c = boxes.size() - 1;
            SimModel small(boxes[a]->domain, *kernel_, cfg_.model.rate, gamma_, cfg_.caps, *pattern_);
            SimModel big(boxes[c]->domain, *kernel_, cfg_.model.rate, gamma_, cfg_.caps, *pattern_);
            const auto dc = domain_monotonicity_mc(small, big, *marginal_, A.mc_grid, A.mc_trajectories, cfg_.seed + 3);
            CsvWriter w(out_path("domain_mc.csv"), {"t", "P_small", "P_big", "diff", "stderr"});
            for (std::size_t k = 0; k < dc.t.size(); ++k)
                w.row({csv_number(dc.t[k]), csv_number(dc.small[k]), csv_number(dc.large[k]), csv_number(dc.diff[k]),
                       csv_number(dc.se_diff[k])});
            add("min_t (P^big - P^small) / stderr, common seeds, two largest boxes", "eq2.7", dc.worst_z, ">=", -3.0);
        }
        // u_n on the smallest box, renormalized there
        {
            const BoxModel& b0 = *boxes[0];
            std::vector<std::vector<double>> restricted;
            for (const auto& bp : boxes) {
                const BoxModel& b = *bp;
                const auto full = extend_by_zero(b.Lk->states, b.pair->u, b.table->size());
                std::vector<double> v;
                double z = 0.0;
                for (StateIndex s0 : b0.Lk->states) {
                    std::vector<int> eta(b.domain.size(), 0);
                    const auto c0 = b0.table->config(s0);
                    for (std::size_t i = 0; i < c0.size(); ++i) eta[static_cast<std::size_t>(b.domain.index(b0.domain.site(i)))] = c0[i];
                    const StateIndex s = b.table->find_config(eta);
                    v.push_back(s == no_state ? 0.0 : full[s]);
                    z += v.back() * b0.nu[s0];
                }
                for (double& x : v) x /= z;
                restricted.push_back(std::move(v));
            }
            std::vector<double> dist;
            for (std::size_t k = 1; k < restricted.size(); ++k) {
                dist.push_back(sup_distance(restricted[k], restricted[k - 1]));
                note("sup distance of renormalized u between boxes " + std::to_string(A.boxes[k - 1]) + " and " +
                         std::to_string(A.boxes[k]),
                     "lem-approx", dist.back());
            }
            derived_["approximation"]["u_distance"] = dist;
            if (dist.size() >= 2) {
                double rise2 = -std::numeric_limits<double>::infinity();
                for (std::size_t k = 1; k < dist.size(); ++k) rise2 = std::max(rise2, dist[k] - dist[k - 1]);
                add("max increase of successive u distances", "lem-approx", rise2, "<=", 0.0);
            }
        }
    }

    RunConfig cfg_;
    std::ostream* log_;
    std::vector<Check> checks_;
    json derived_ = json::object();
    std::map<std::string, double> seconds_;
    std::set<std::string> done_;
    std::string current_;

    std::optional<Kernel> kernel_;
    double gamma_ = 0.0;
    std::optional<Marginal> marginal_;
    std::optional<Pattern> pattern_;
    std::unique_ptr<BoxModel> box_;
    std::optional<EpsilonField> eps_;
    std::vector<StateIndex> mf_states_;
};

// -------------------------------------------------------------------- outputs

inline json checks_json(const std::vector<Check>& cs) {
    json a = json::array();
    for (const auto& c : cs)
        a.push_back({{"stage", c.stage}, {"name", c.name}, {"tag", c.tag}, {"witness", c.witness},
                     {"value", std::isfinite(c.value) ? json(c.value) : json(csv_number(c.value))},
                     {"tolerance", c.tol}, {"relation", c.relation}, {"pass", c.pass}});
    return a;
}

/// Writes manifest.json, checks.csv and report.md into the output directory.
inline void write_outputs(const Runner& r, const std::string& status, const std::string& failing_stage,
                          const std::string& error) {
    const auto& cfg = r.config();
    std::filesystem::create_directories(cfg.output);
    const std::filesystem::path dir(cfg.output);
    json m;
    m["artifact_version"] = artifact_version;
    m["config"] = cfg.raw;
    m["seed"] = cfg.seed;
    m["stream_policy"] = "mt19937_64 seeded by seed_seq(seed, trajectory id, lane)";
    m["threads"] = thread_count();
    m["derived"] = r.derived();
    json st = json::object();
    for (const auto& [k, v] : r.seconds()) st[k] = v;
    m["stage_seconds"] = st;
    m["checks"] = checks_json(r.checks());
    std::size_t pass = 0, fail = 0;
    for (const auto& c : r.checks())
        if (!c.note()) (c.pass ? pass : fail)++;
    m["summary"] = {{"status", status}, {"passed", pass}, {"failed", fail}, {"failing_stage", failing_stage},
                    {"error", error}};
    std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";

    CsvWriter w((dir / "checks.csv").string(), {"stage", "check", "tag", "witness", "value", "tolerance", "relation", "result"});
    for (const auto& c : r.checks())
        w.row({c.stage, c.name, c.tag, c.witness, csv_number(c.value), csv_number(c.tol), c.relation,
               c.note() ? "note" : c.pass ? "pass" : "fail"});

    std::ofstream rep(dir / "report.md");
    rep << "# Run report: " << cfg.name << "\n\n";
    rep << "Status: " << status << " (" << pass << " passed, " << fail << " failed)\n\n";
    if (!error.empty()) rep << "Error in stage `" << failing_stage << "`: " << error << "\n\n";
    std::string stage;
    for (const auto& c : r.checks()) {
        if (c.stage != stage) {
            stage = c.stage;
            rep << "\n## " << stage;
            if (r.seconds().count(stage)) rep << " (" << std::setprecision(3) << r.seconds().at(stage) << " s)";
            rep << "\n\n";
        }
        rep << "- " << c.line() << "\n";
    }
}

/// Exit codes: 0 all checks pass, 1 invalid config, 2 computation failure, 3 failed check.
inline int run_main(const std::string& path, const std::vector<std::string>& stage_filter,
                    const std::optional<std::string>& out_dir, bool verbose, std::ostream& err = std::cerr) {
    RunConfig cfg;
    try {
        cfg = load_config(path);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    }
    if (out_dir) cfg.output = *out_dir;
    std::vector<std::string> stages = stage_filter.empty() ? cfg.stages : stage_filter;
    if (stages.empty()) stages = all_stages();
    for (const auto& s : stages)
        if (std::find(all_stages().begin(), all_stages().end(), s) == all_stages().end()) {
            err << "config error: --stages: unknown stage '" << s << "'\n";
            return 1;
        }
    Runner r(cfg, verbose ? &std::cout : nullptr);
    try {
        r.run(stages);
    } catch (const ConfigError& e) {
        write_outputs(r, "config invalid", r.current_stage(), e.what());
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        write_outputs(r, "computation failed", r.current_stage(), e.what());
        err << "computation failed in stage " << r.current_stage() << ": " << e.what() << "\n";
        return 2;
    }
    const std::size_t fails = r.failures();
    std::string first;
    for (const auto& c : r.checks())
        if (!c.note() && !c.pass) {
            first = c.stage;
            break;
        }
    write_outputs(r, fails ? "assertion failed" : "passed", first, "");
    if (fails) {
        for (const auto& c : r.checks())
            if (!c.note() && !c.pass) err << c.line() << "\n";
        return 3;
    }
    return 0;
}

// -------------------------------------------------------------------- report

/// Merges manifests of runs that differ only in the box size.
inline int report_main(const std::vector<std::string>& manifests, const std::string& out_dir, std::ostream& out,
                       std::ostream& err = std::cerr) {
    struct Row {
        int box;
        double lambda;
        std::optional<double> gamma_probe;
        json c_t;
        std::string file;
    };
    std::vector<Row> rows;
    std::optional<json> fingerprint;
    for (const auto& f : manifests) {
        std::ifstream in(f);
        if (!in) {
            err << "cannot open " << f << "\n";
            return 1;
        }
        json m;
        try {
            m = json::parse(in);
        } catch (const std::exception& e) {
            err << f << ": " << e.what() << "\n";
            return 1;
        }
        json model = m.at("config").at("model");
        const int box = model.at("box").get<int>();
        model.erase("box");
        model.erase("halo");
        json fp = {{"model", model}, {"statespace", m.at("config").at("statespace")}};
        if (fingerprint && *fingerprint != fp) {
            err << "refusing to merge: " << f << " has a different model, pattern or caps\n";
            return 1;
        }
        fingerprint = fp;
        const json& d = m.at("derived");
        if (!d.contains("lambda")) {
            err << f << ": no eigenvalue recorded (spectral stage missing)\n";
            return 1;
        }
        Row r{box, d.at("lambda").get<double>(), std::nullopt, d.value("c_t", json()), f};
        if (d.contains("gamma_probe")) r.gamma_probe = d.at("gamma_probe").get<double>();
        rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.box < b.box; });
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    bool monotone = true;
    {
        CsvWriter w((dir / "lambda_vs_n.csv").string(), {"box", "lambda", "manifest"});
        for (std::size_t k = 0; k < rows.size(); ++k) {
            w.row({std::to_string(rows[k].box), csv_number(rows[k].lambda), rows[k].file});
            if (k && rows[k].lambda > rows[k - 1].lambda * (1.0 + 1e-9)) monotone = false;
        }
    }
    {
        CsvWriter w((dir / "gamma_cauchy.csv").string(), {"box_n", "box_m", "abs_gamma_m_minus_gamma_n"});
        for (std::size_t k = 1; k < rows.size(); ++k)
            if (rows[k].gamma_probe && rows[k - 1].gamma_probe)
                w.row({std::to_string(rows[k - 1].box), std::to_string(rows[k].box),
                       csv_number(std::abs(*rows[k].gamma_probe - *rows[k - 1].gamma_probe))});
    }
    {
        CsvWriter w((dir / "c_t.csv").string(), {"box", "t", "c_t"});
        for (const auto& r : rows)
            if (r.c_t.is_object())
                for (std::size_t k = 0; k < r.c_t.at("t").size(); ++k)
                    w.row({std::to_string(r.box), csv_number(r.c_t.at("t")[k].get<double>()),
                           csv_number(r.c_t.at("c")[k].get<double>())});
    }
    out << "box  lambda\n";
    for (const auto& r : rows) out << std::setw(3) << r.box << "  " << std::setprecision(12) << r.lambda << "\n";
    if (rows.size() < 2) {
        out << "single manifest: nothing to compare\n";
        return 0;
    }
    out << (monotone ? "[PASS]" : "[FAIL]") << " lem-approx  lambda_n non-increasing in n\n";
    return monotone ? 0 : 3;
}

} // namespace azrp
