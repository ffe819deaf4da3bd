#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epsilon.hpp"
#include "generator.hpp"
#include "pattern.hpp"
#include "spectral.hpp"
#include "statespace.hpp"

namespace azrp {

/// Product-form recipe phi(eta) = psi(eta|_S) prod_{i not in S} (1 - s_i eps_i)^{eta_i}.
///
/// psi is stored per cylinder and s per site coordinate, so the same recipe
/// can be realized on any domain that contains S.
struct ProductRecipe {
    std::vector<double> psi;     ///< over Pattern::cylinders(), positive and decreasing
    std::map<Site, double> s;    ///< sites not listed use s = 0
    bool dual = false;           ///< use eps* instead of eps
};

struct TestFunction {
    enum class Class { D, D_plus, E };
    std::vector<double> phi;     ///< over the full table, 0 on A
    Class cls = Class::D_plus;
    ProductRecipe recipe;

    /// h = log phi on A^c, -inf on A.
    std::vector<double> log() const {
        std::vector<double> h(phi.size());
        for (std::size_t s = 0; s < phi.size(); ++s)
            h[s] = phi[s] > 0.0 ? std::log(phi[s]) : -std::numeric_limits<double>::infinity();
        return h;
    }
};

/// Everything the variational routines read: table, measure, pattern, eps.
struct VariationalContext {
    const StateTable* table;
    const MeasureVector* nu;
    const std::vector<char>* in_A;
    const Pattern* pattern;
    const EpsilonField* eps;
    std::vector<int> support_pos;

    VariationalContext(const StateTable& t, const MeasureVector& n, const std::vector<char>& a, const Pattern& p,
                       const EpsilonField& e)
        : table(&t), nu(&n), in_A(&a), pattern(&p), eps(&e), support_pos(p.locate(t.domain())) {
        if (e.domain.sites() != t.domain().sites()) throw std::invalid_argument("eps field domain mismatch");
    }
};

/// A random positive strictly decreasing function on the cylinders:
/// psi(theta) = sum of iid positive weights over the cylinders above theta.
inline std::vector<double> random_decreasing(std::mt19937_64& rng, const Pattern& p) {
    const auto& cyl = p.cylinders();
    std::uniform_real_distribution<double> U(0.05, 1.0);
    std::vector<double> w(cyl.size());
    for (double& x : w) x = U(rng);
    std::vector<double> psi(cyl.size(), 0.0);
    for (std::size_t a = 0; a < cyl.size(); ++a)
        for (std::size_t b = 0; b < cyl.size(); ++b) {
            bool above = true;
            for (std::size_t k = 0; k < cyl[a].size(); ++k) above = above && cyl[b][k] >= cyl[a][k];
            if (above) psi[a] += w[b];
        }
    return psi;
}

inline ProductRecipe sample_recipe(std::mt19937_64& rng, const Pattern& p, const Domain& dom, bool dual = false) {
    ProductRecipe r;
    r.psi = random_decreasing(rng, p);
    r.dual = dual;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (const auto& site : dom.sites()) r.s[site] = U(rng);
    return r;
}

/// Evaluates a recipe on the table of ctx. Computed in log form so that
/// adding a particle at i outside S changes log phi by log(1 - s_i eps_i) exactly up to rounding.
inline TestFunction realize(const ProductRecipe& r, const VariationalContext& ctx) {
    const StateTable& t = *ctx.table;
    const auto& eps = r.dual ? ctx.eps->eps_star : ctx.eps->eps;
    std::vector<double> logc(t.sites(), 0.0);
    std::vector<char> in_S(t.sites(), 0);
    for (int k : ctx.support_pos) in_S[k] = 1;
    for (std::size_t i = 0; i < t.sites(); ++i) {
        if (in_S[i]) continue;
        auto it = r.s.find(t.domain().site(i));
        const double s = it == r.s.end() ? 0.0 : it->second;
        logc[i] = std::log1p(-s * eps[i]);
    }
    std::vector<double> logpsi(r.psi.size());
    for (std::size_t a = 0; a < r.psi.size(); ++a) logpsi[a] = std::log(r.psi[a]);
    TestFunction f;
    f.recipe = r;
    f.cls = TestFunction::Class::D_plus;
    f.phi.assign(t.size(), 0.0);
    for (std::size_t s = 0; s < t.size(); ++s) {
        if ((*ctx.in_A)[s]) continue;
        const int c = ctx.pattern->cylinder(restrict_to(t, s, ctx.support_pos));
        double h = logpsi[c];
        for (std::size_t i = 0; i < t.sites(); ++i) h += t.occupancy(s, i) * logc[i];
        f.phi[s] = std::exp(h);
    }
    return f;
}

/// Draws a certified member of D_n^+ (or of D*_n^+ when dual).
inline TestFunction sample_test_function(std::mt19937_64& rng, const VariationalContext& ctx, bool dual = false,
                                         double tol = 0.0) {
    TestFunction f = realize(sample_recipe(rng, *ctx.pattern, ctx.table->domain(), dual), ctx);
    const auto c = certify_D(f.phi, *ctx.table, *ctx.in_A, *ctx.eps, ctx.support_pos,
                             dual ? FunctionClass::D_star : FunctionClass::D, tol);
    if (!c.ok())
        throw std::logic_error("sampled test function failed certification (" + c.violations.front().condition +
                               ")");
    return f;
}

struct TestMeasure {
    std::vector<double> mu;      ///< probability weights over the full table, 0 on A
    std::vector<double> density; ///< mu / nu
};

/// mu proportional to phi1 phi2 nu, restricted to A^c.
inline TestMeasure product_measure(std::span<const double> phi1, std::span<const double> phi2,
                                   const VariationalContext& ctx) {
    const auto& nu = *ctx.nu;
    TestMeasure m;
    m.mu.assign(nu.size(), 0.0);
    m.density.assign(nu.size(), 0.0);
    double z = 0.0;
    for (std::size_t s = 0; s < nu.size(); ++s) {
        if ((*ctx.in_A)[s]) continue;
        m.density[s] = phi1[s] * phi2[s];
        z += m.mu[s] = m.density[s] * nu[s];
    }
    if (!(z > 0.0)) throw std::domain_error("test measure has zero mass");
    for (std::size_t s = 0; s < nu.size(); ++s) {
        m.mu[s] /= z;
        m.density[s] /= z;
    }
    return m;
}

inline TestMeasure mixture(const TestMeasure& a, const TestMeasure& b, double w) {
    TestMeasure m = a;
    for (std::size_t s = 0; s < m.mu.size(); ++s) {
        m.mu[s] = w * a.mu[s] + (1.0 - w) * b.mu[s];
        m.density[s] = w * a.density[s] + (1.0 - w) * b.density[s];
    }
    return m;
}

/// mu proportional to phi phi* nu with phi in D_n^+ and phi* in D*_n^+, both
/// sampled unless supplied. `dual_factor` may be u* instead.
inline TestMeasure sample_test_measure(std::mt19937_64& rng, const VariationalContext& ctx,
                                       const std::vector<double>* phi = nullptr,
                                       const std::vector<double>* dual_factor = nullptr) {
    std::vector<double> a = phi ? *phi : sample_test_function(rng, ctx, false).phi;
    std::vector<double> b = dual_factor ? *dual_factor : sample_test_function(rng, ctx, true).phi;
    return product_measure(a, b, ctx);
}

inline Certification certify_M(const TestMeasure& m, const VariationalContext& ctx, double tol) {
    return certify_D(m.density, *ctx.table, *ctx.in_A, *ctx.eps, ctx.support_pos, FunctionClass::M_density, tol);
}

/// Gamma_n(phi, mu) = sum over A^c of mu (L_n phi) / phi.
inline double evaluate_gamma(const SparseGenerator& L, std::span<const double> phi, std::span<const double> mu) {
    if (L.kind != GeneratorKind::open) throw std::invalid_argument("evaluate_gamma needs the open generator");
    std::vector<double> y(L.size());
    L.apply(phi, y);
    double g = 0.0;
    for (std::size_t s = 0; s < L.size(); ++s) {
        if (mu[s] == 0.0) continue;
        if (!(phi[s] > 0.0)) throw std::domain_error("phi vanishes at a state charged by mu");
        g += mu[s] * y[s] / phi[s];
    }
    return g;
}

/// exp(h) on A^c, 0 where h = -inf.
inline std::vector<double> exp_of(std::span<const double> h) {
    std::vector<double> p(h.size());
    for (std::size_t s = 0; s < h.size(); ++s) p[s] = std::isinf(h[s]) && h[s] < 0 ? 0.0 : std::exp(h[s]);
    return p;
}

/// Gamma written in terms of discrete gradients of h and of the density f = mu/nu.
///
/// With D = A^c inside the table, V_i = {xi in D : A_i^+ xi in D} and
/// W_ij = V_i and V_j, the exchange part over W_ij is `main`, the boundary
/// birth/death part over V_i is `remainder`, the first-order terms are `N`
/// (identically zero), `boundary` collects the first-order exchange terms
/// cut off by the edge of D, and `killing` = -int kappa dmu with kappa the rate into A.
struct GradientForm {
    double main = 0.0;
    double remainder = 0.0;
    double N = 0.0;
    double boundary = 0.0;
    double killing = 0.0;
    double total() const { return main + remainder + N + boundary + killing; }
};

inline GradientForm gradient_form(std::span<const double> h, const TestMeasure& m, const Dynamics& dyn,
                                  const std::vector<char>& in_A, const MeasureVector& nu) {
    const StateTable& t = *dyn.table;
    const auto& tk = dyn.kernel;
    const double gam = dyn.gamma;
    const std::size_t ns = t.sites();
    GradientForm gf;
    std::vector<char> inV(ns);
    std::vector<double> dh(ns), df(ns), a(ns);
    std::vector<StateIndex> up(ns);
    for (std::size_t x = 0; x < t.size(); ++x) {
        if (in_A[x]) continue;
        const double mux = m.mu[x];
        const double fx = m.density[x];
        for (std::size_t i = 0; i < ns; ++i) {
            up[i] = t.plus(x, i);
            inV[i] = up[i] != no_state && !in_A[up[i]];
            if (inV[i]) {
                dh[i] = h[up[i]] - h[x];
                df[i] = m.density[up[i]] - fx;
                a[i] = mux * dh[i];
            } else {
                a[i] = 0.0;
            }
        }
        double kappa = 0.0;
        dyn.transitions(static_cast<StateIndex>(x), [&](StateIndex to, double r) {
            if (in_A[to]) kappa += r;
        });
        gf.killing -= mux * kappa;
        for (std::size_t i = 0; i < ns; ++i) {
            if (inV[i]) {
                const double d = dh[i];
                gf.remainder += gam * tk.out_diag(i) * (nu[x] * std::expm1(-d) * df[i] + mux * (std::expm1(-d) + d));
                gf.remainder += gam * tk.in_diag(i) * mux * (std::expm1(d) - d);
                gf.N += gam * (tk.in_diag(i) - tk.out_diag(i)) * a[i];
            }
            for (const auto& l : tk.links(i)) {
                const std::size_t j = static_cast<std::size_t>(l.to);
                const double w = gam * l.prob;
                gf.N += w * (a[j] - a[i]);
                if (inV[i] && inV[j]) {
                    const double D = h[up[j]] - h[up[i]];
                    gf.main += w * (std::expm1(D) * df[i] * nu[x] + (std::expm1(D) - D) * mux);
                } else {
                    gf.boundary -= w * (a[j] - a[i]);
                }
            }
        }
    }
    return gf;
}

/// Certifies log-form membership in E_n: h(A_i^+ eta) <= h(eta) and, for i not in S,
/// h(A_i^+ eta) >= h(eta) + log(1 - eps_i).
inline Certification certify_E(std::span<const double> h, const VariationalContext& ctx, double tol = 0.0) {
    const StateTable& t = *ctx.table;
    Certification c;
    c.worst = -std::numeric_limits<double>::infinity();
    std::vector<char> in_S(t.sites(), 0);
    for (int k : ctx.support_pos) in_S[k] = 1;
    auto note = [&](const char* what, std::size_t s, std::size_t i, double x) {
        c.worst = std::max(c.worst, x);
        if (x > tol) {
            ++c.count;
            if (c.violations.size() < 50) c.violations.push_back({what, static_cast<StateIndex>(s), static_cast<int>(i), x});
        }
    };
    for (std::size_t s = 0; s < t.size(); ++s) {
        if ((*ctx.in_A)[s]) continue;
        for (std::size_t i = 0; i < t.sites(); ++i) {
            const StateIndex u = t.plus(s, i);
            if (u == no_state || (*ctx.in_A)[u]) continue;
            ++c.edges;
            note("decreasing", s, i, h[u] - h[s]);
            if (!in_S[i]) note("gradient", s, i, h[s] + std::log1p(-ctx.eps->eps[i]) - h[u]);
        }
    }
    return c;
}

struct ConvexityResult {
    double slack = 0.0;
    bool combination_in_E = false;
};

/// c Gamma~(h1) + (1-c) Gamma~(h2) - Gamma~(c h1 + (1-c) h2), with Gamma~(h) = Gamma(e^h).
inline ConvexityResult convexity_check(std::span<const double> h1, std::span<const double> h2, double c,
                                       const TestMeasure& m, const SparseGenerator& L,
                                       const VariationalContext& ctx) {
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("convexity weight must lie in (0,1)");
    std::vector<double> hc(h1.size());
    for (std::size_t s = 0; s < hc.size(); ++s)
        hc[s] = std::isinf(h1[s]) ? h1[s] : c * h1[s] + (1.0 - c) * h2[s];
    ConvexityResult r;
    r.slack = c * evaluate_gamma(L, exp_of(h1), m.mu) + (1.0 - c) * evaluate_gamma(L, exp_of(h2), m.mu) -
              evaluate_gamma(L, exp_of(hc), m.mu);
    r.combination_in_E = certify_E(hc, ctx).ok();
    return r;
}

struct SaddleReport {
    double max_a = 0.0;   ///< max |Gamma(u, mu) + lambda| over the sampled mu
    double max_b = 0.0;   ///< max |Gamma(phi, mu*_phi) + lambda| over the sampled phi
    double min_c = std::numeric_limits<double>::infinity(); ///< min Gamma(phi, mu_hat) + lambda
    int witness_a = -1, witness_b = -1, witness_c = -1;
};

inline SaddleReport saddle_check(const EigenPair& p, const std::vector<StateIndex>& ac_states,
                                 const SparseGenerator& L, const std::vector<std::vector<double>>& phis,
                                 const std::vector<TestMeasure>& mus, const VariationalContext& ctx) {
    SaddleReport r;
    const std::size_t n = L.size();
    const auto u = extend_by_zero(ac_states, p.u, n);
    const auto us = extend_by_zero(ac_states, p.u_star, n);
    for (std::size_t k = 0; k < mus.size(); ++k) {
        const double d = std::abs(evaluate_gamma(L, u, mus[k].mu) + p.lambda);
        if (d > r.max_a) r.max_a = d, r.witness_a = static_cast<int>(k);
    }
    const TestMeasure mu_hat = product_measure(u, us, ctx);
    for (std::size_t k = 0; k < phis.size(); ++k) {
        const TestMeasure ms = product_measure(phis[k], us, ctx);
        const double d = std::abs(evaluate_gamma(L, phis[k], ms.mu) + p.lambda);
        if (d > r.max_b) r.max_b = d, r.witness_b = static_cast<int>(k);
        const double c = evaluate_gamma(L, phis[k], mu_hat.mu) + p.lambda;
        if (c < r.min_c) r.min_c = c, r.witness_c = static_cast<int>(k);
    }
    return r;
}

struct BoundRow {
    std::string inequality;  ///< row label; its first word doubles as the check tag
    int cylinder = -1;       ///< -1 for the global forms
    int power = 1;
    double lhs = 0.0;
    double rhs = 0.0;
    bool reported_only = false; ///< the printed form that the proof does not deliver
    double slack() const { return rhs - lhs; }
    double relative_slack() const { return (rhs - lhs) / std::max(std::abs(rhs), 1e-300); }
    bool holds() const { return lhs <= rhs; }
};

/// The appendix moment bounds for phi against the tilted density psi, for
/// every cylinder and powers 1..max_power. Integrals run over the table
/// against nu, with psi rescaled so that int psi dnu = 1 on the table.
///
/// The row marked "proved" is the bound the cylinder-by-cylinder argument actually
/// yields: sum over theta of c_phi E_theta[psi^n] E_theta[psi^-n].
inline std::vector<BoundRow> regularity_bounds(std::span<const double> phi, const TiltedDensity& psi,
                                               const VariationalContext& ctx, int max_power = 3) {
    const StateTable& t = *ctx.table;
    const auto& nu = *ctx.nu;
    const std::size_t nc = ctx.pattern->cylinders().size();
    const int P = max_power;
    auto idx = [P](int k) { return static_cast<std::size_t>(k + P); };
    std::vector<double> lp(t.size());
    double z = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s) {
        lp[s] = psi.log_value(t.state(s));
        z += nu[s] * std::exp(lp[s]);
    }
    const double logz = std::log(z);
    std::vector<std::vector<double>> mphi(nc, std::vector<double>(2 * P + 1, 0.0));
    std::vector<std::vector<double>> mpsi(nc, std::vector<double>(2 * P + 1, 0.0));
    std::vector<double> mass(nc, 0.0);
    std::vector<double> psi_all(2 * P + 1, 0.0);
    bool positive = true;
    for (std::size_t s = 0; s < t.size(); ++s) {
        const double l = lp[s] - logz;
        for (int k = -P; k <= P; ++k) psi_all[idx(k)] += nu[s] * std::exp(k * l);
        if ((*ctx.in_A)[s]) continue;
        const int c = ctx.pattern->cylinder(restrict_to(t, s, ctx.support_pos));
        mass[c] += nu[s];
        if (!(phi[s] > 0.0)) positive = false;
        for (int k = -P; k <= P; ++k) {
            if (phi[s] > 0.0 || k > 0) mphi[c][idx(k)] += nu[s] * std::pow(phi[s], k);
            mpsi[c][idx(k)] += nu[s] * std::exp(k * l);
        }
    }
    const int zero = ctx.pattern->cylinder(BaseConfig(ctx.support_pos.size(), 0));
    std::vector<BoundRow> rows;
    for (int n = 1; n <= P; ++n) {
        double phi_n = 0.0, phi_1 = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            rows.push_back({"eq5.0", static_cast<int>(c), n, mphi[c][idx(n)],
                            std::pow(mphi[c][idx(1)] / mpsi[c][idx(1)], n) * mpsi[c][idx(n)]});
            phi_n += mphi[c][idx(n)];
            phi_1 += mphi[c][idx(1)];
        }
        const double Cn = psi_all[idx(n)] / std::pow(mpsi[zero][idx(1)], n + 1);
        rows.push_back({"eq5.1", -1, n, phi_n, Cn * std::pow(phi_1, n)});
        if (!positive) continue;
        double cphi = 0.0, inv_phi = 0.0, inv_psi = 0.0, summed = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            rows.push_back({"eq5.7", static_cast<int>(c), n, mphi[c][idx(n)] * mphi[c][idx(-n)],
                            mpsi[c][idx(n)] * mpsi[c][idx(-n)]});
            cphi = std::max(cphi, mass[c] * std::pow(mphi[c][idx(1)] / mass[c], -n));
            inv_phi += mphi[c][idx(-n)];
            inv_psi += mpsi[c][idx(-n)];
        }
        for (std::size_t c = 0; c < nc; ++c)
            summed += mpsi[c][idx(n)] * mpsi[c][idx(-n)] / (mass[c] * mass[c]);
        rows.push_back({"eq5.8", -1, n, inv_phi, cphi * psi_all[idx(n)] * inv_psi, true});
        rows.push_back({"eq5.8 proved", -1, n, inv_phi, cphi * summed});
    }
    return rows;
}

/// Largest relative deviation of psi(A_i^+ eta)/psi(eta) from 1 - eps_i, over
/// every table edge with i outside S.
inline double tilt_identity_error(const TiltedDensity& psi, const VariationalContext& ctx) {
    const StateTable& t = *ctx.table;
    std::vector<char> in_S(t.sites(), 0);
    for (int k : ctx.support_pos) in_S[k] = 1;
    double worst = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s) {
        const double here = psi(t.state(s));
        for (std::size_t i = 0; i < t.sites(); ++i) {
            if (in_S[i]) continue;
            const StateIndex up = t.plus(s, i);
            if (up == no_state) continue;
            const double want = (1.0 - ctx.eps->eps[i]) * here;
            worst = std::max(worst, std::abs(psi(t.state(up)) - want) / want);
        }
    }
    return worst;
}

} // namespace azrp
