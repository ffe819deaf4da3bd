#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/IterativeLinearSolvers>

#include "epsilon.hpp"
#include "generator.hpp"
#include "statespace.hpp"

namespace azrp {

/// A sub-Markov rate operator that can be applied to vectors.
template <class Op>
concept RateOperator = requires(const Op& q, std::span<const double> x, std::span<double> y) {
    { q.size() } -> std::convertible_to<std::size_t>;
    { q.max_exit_rate() } -> std::convertible_to<double>;
    q.apply(x, y);
};

inline double weighted_dot(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * a[k] * b[k];
    return s;
}

inline double weighted_sum(std::span<const double> w, std::span<const double> a) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * a[k];
    return s;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline double sup_norm(std::span<const double> a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

/// Values on the A^c states (killed-local order) spread onto the full table, 0 on A.
inline std::vector<double> extend_by_zero(const std::vector<StateIndex>& states, std::span<const double> v,
                                          std::size_t n) {
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < states.size(); ++r) out[states[r]] = v[r];
    return out;
}

inline std::vector<double> restrict_to(const std::vector<StateIndex>& states, std::span<const double> full) {
    std::vector<double> out(states.size());
    for (std::size_t r = 0; r < states.size(); ++r) out[r] = full[states[r]];
    return out;
}

struct PowerOptions {
    double tol = 1e-13;            ///< stop when ||Qx + lambda x||_inf < tol
    std::size_t max_iter = 2'000'000;
    std::size_t check_every = 10;
    double step_fraction = 0.95;   ///< h = step_fraction / max exit rate
    int random_starts = 8;
    double agree_tol = 1e-8;
    std::uint64_t seed = 12345;
    std::size_t gap_iter = 4000;   ///< deflated iterations for the gap estimate
};

struct PowerResult {
    double lambda = 0.0;
    std::vector<double> v;
    double residual = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
};

/// Power iteration on I + hQ with the normalization sum w x = 1.
template <RateOperator Op>
PowerResult power_iterate(const Op& q, std::span<const double> w, std::vector<double> x, const PowerOptions& o) {
    const std::size_t n = q.size();
    const double h = o.step_fraction / q.max_exit_rate();
    std::vector<double> qx(n);
    PowerResult r;
    auto normalize = [&] {
        const double z = weighted_sum(w, x);
        if (!(z > 0.0) || !std::isfinite(z)) throw std::runtime_error("power iteration lost positivity");
        for (double& v : x) v /= z;
    };
    normalize();
    for (std::size_t it = 1; it <= o.max_iter; ++it) {
        q.apply(x, qx);
        if (it % o.check_every == 0) {
            const double lam = -weighted_dot(w, x, qx) / weighted_dot(w, x, x);
            double res = 0.0;
            for (std::size_t k = 0; k < n; ++k) res = std::max(res, std::abs(qx[k] + lam * x[k]));
            r.lambda = lam;
            r.residual = res;
            r.iterations = it;
            if (res < o.tol) {
                r.converged = true;
                break;
            }
        }
        for (std::size_t k = 0; k < n; ++k) x[k] += h * qx[k];
        normalize();
    }
    r.v = std::move(x);
    return r;
}

struct EigenPair {
    double lambda = 0.0;
    double lambda_star = 0.0;
    std::vector<double> u;      ///< over A^c states, normalized by int u dnu = 1
    std::vector<double> u_star;
    double residual = 0.0;
    double residual_star = 0.0;
    double multistart_spread = 0.0; ///< max sup-distance of random starts to the flat start
    double gap = 0.0;           ///< distance from -lambda to the rest of the spectrum (estimate)
    double overlap = 0.0;       ///< <u, u*>_nu
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

/// Decay rate of the killed semigroup on the complement of u (deflated power iteration).
template <RateOperator Op>
double deflated_gap(const Op& q, std::span<const double> w, const EigenPair& p, const PowerOptions& o) {
    const std::size_t n = q.size();
    if (n < 2) return std::numeric_limits<double>::infinity();
    const double h = o.step_fraction / q.max_exit_rate();
    std::vector<double> left(n);
    for (std::size_t k = 0; k < n; ++k) left[k] = w[k] * p.u_star[k];
    double lu = 0.0;
    for (std::size_t k = 0; k < n; ++k) lu += left[k] * p.u[k];
    std::mt19937_64 rng(o.seed ^ 0xdeadbeefULL);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> x(n), qx(n);
    for (double& v : x) v = U(rng);
    auto project = [&] {
        double c = 0.0;
        for (std::size_t k = 0; k < n; ++k) c += left[k] * x[k];
        c /= lu;
        for (std::size_t k = 0; k < n; ++k) x[k] -= c * p.u[k];
        const double s = sup_norm(x);
        for (double& v : x) v /= s;
        return s;
    };
    project();
    const std::size_t burn = o.gap_iter / 2;
    double log_growth = 0.0;
    for (std::size_t it = 0; it < o.gap_iter; ++it) {
        q.apply(x, qx);
        for (std::size_t k = 0; k < n; ++k) x[k] += h * qx[k];
        const double s = project();
        if (it >= burn) log_growth += std::log(s);
    }
    const double rho2 = std::exp(log_growth / static_cast<double>(o.gap_iter - burn));
    return (std::log1p(-h * p.lambda) - std::log(rho2)) / h;
}

} // namespace detail

/// Principal eigenpair of the killed generator and of its dual.
///
/// Both are computed by power iteration from the flat start and from
/// `random_starts` random positive starts; the spread between the limits is
/// recorded as evidence of uniqueness.
template <RateOperator Op, RateOperator OpS>
EigenPair principal_pair(const Op& L, const OpS& Ls, std::span<const double> nu_Ac, const PowerOptions& o = {}) {
    const std::size_t n = L.size();
    if (Ls.size() != n || nu_Ac.size() != n) throw std::invalid_argument("principal_pair: size mismatch");
    if (n == 0) throw std::invalid_argument("principal_pair: empty A^c");
    EigenPair p;
    auto solve = [&](auto const& op, std::vector<double>& out, double& lam, double& res, std::uint64_t salt) {
        PowerResult flat = power_iterate(op, nu_Ac, std::vector<double>(n, 1.0), o);
        if (!flat.converged)
            throw std::runtime_error("power iteration did not converge (residual " + std::to_string(flat.residual) +
                                     ")");
        std::mt19937_64 rng(o.seed + salt);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (int k = 0; k < o.random_starts; ++k) {
            std::vector<double> x0(n);
            for (double& v : x0) v = 1e-3 + U(rng);
            PowerResult r = power_iterate(op, nu_Ac, std::move(x0), o);
            if (!r.converged) throw std::runtime_error("power iteration from a random start did not converge");
            p.multistart_spread = std::max(p.multistart_spread, sup_distance(r.v, flat.v));
        }
        p.iterations = std::max(p.iterations, flat.iterations);
        out = std::move(flat.v);
        lam = flat.lambda;
        res = flat.residual;
    };
    solve(L, p.u, p.lambda, p.residual, 1);
    solve(Ls, p.u_star, p.lambda_star, p.residual_star, 2);
    p.converged = true; // multistart_spread is left for the caller to judge against agree_tol
    p.overlap = weighted_dot(nu_Ac, p.u, p.u_star);
    p.gap = detail::deflated_gap(L, nu_Ac, p, o);
    return p;
}

/// Poisson-weighted sums for e^{tQ} by uniformization with rate q >= max exit rate.
///
/// Scalars s_k = w^T P^k 1 with P = I + Q/q are cached, so survival
/// probabilities at many times cost one pass over the weights each.
template <RateOperator Op>
class Uniformizer {
public:
    Uniformizer(const Op& q, std::span<const double> w, double tol = 1e-12)
        : q_(&q), w_(w.begin(), w.end()), tol_(tol) {
        rate_ = std::max(q.max_exit_rate(), 1e-300);
        v_.assign(q.size(), 1.0);
        s_.push_back(weighted_sum(w_, v_));
    }

    double rate() const { return rate_; }

    /// P(tau > t) for the initial weights.
    double survival(double t) {
        if (t < 0.0) throw std::invalid_argument("negative time");
        if (t == 0.0) return s_[0];
        const auto [lo, hi] = window(rate_ * t);
        extend(hi);
        return poisson_sum(rate_ * t, lo, hi, [&](std::size_t k) { return s_[k]; });
    }

    /// e^{tQ} f, for a single time.
    std::vector<double> semigroup(double t, std::span<const double> f) const {
        const std::size_t n = q_->size();
        std::vector<double> v(f.begin(), f.end()), qv(n), acc(n, 0.0);
        if (t == 0.0) return v;
        const double m = rate_ * t;
        const auto [lo, hi] = window(m);
        const auto wts = weights(m, lo, hi);
        for (std::size_t k = 0; k <= hi; ++k) {
            if (k >= lo) {
                const double c = wts[k - lo];
                for (std::size_t r = 0; r < n; ++r) acc[r] += c * v[r];
            }
            q_->apply(v, qv);
            for (std::size_t r = 0; r < n; ++r) v[r] += qv[r] / rate_;
        }
        return acc;
    }

    /// Poisson(m) weights on [lo, hi], computed outward from the mode.
    static std::vector<double> weights(double m, std::size_t lo, std::size_t hi) {
        std::vector<double> w(hi - lo + 1);
        const std::size_t mode = std::clamp<std::size_t>(static_cast<std::size_t>(m), lo, hi);
        w[mode - lo] = std::exp(-m + static_cast<double>(mode) * std::log(m) - std::lgamma(mode + 1.0));
        for (std::size_t k = mode + 1; k <= hi; ++k) w[k - lo] = w[k - 1 - lo] * m / static_cast<double>(k);
        for (std::size_t k = mode; k > lo; --k) w[k - 1 - lo] = w[k - lo] * static_cast<double>(k) / m;
        return w;
    }

    /// Index range outside of which Poisson(m) carries less than tol mass.
    std::pair<std::size_t, std::size_t> window(double m) const {
        const double sd = std::sqrt(m);
        const double z = std::sqrt(2.0 * -std::log(tol_ * 1e-3)) + 2.0;
        const double lo = std::max(0.0, std::floor(m - z * sd - 5.0));
        const double hi = std::ceil(m + z * sd + 3.0 * z * z + 10.0);
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

private:
    template <class F>
    static double poisson_sum(double m, std::size_t lo, std::size_t hi, F&& s) {
        const auto w = weights(m, lo, hi);
        double a = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) a += w[k - lo] * s(k);
        return a;
    }

    void extend(std::size_t upto) {
        std::vector<double> qv(v_.size());
        while (s_.size() <= upto) {
            q_->apply(v_, qv);
            for (std::size_t r = 0; r < v_.size(); ++r) v_[r] += qv[r] / rate_;
            s_.push_back(weighted_sum(w_, v_));
        }
    }

    const Op* q_;
    std::vector<double> w_;
    double tol_;
    double rate_;
    std::vector<double> v_;
    std::vector<double> s_;
};

struct SurvivalCurve {
    std::vector<double> t;
    std::vector<double> p;
    std::string method = "uniformization";
};

/// P(tau > t) = <nu restricted to A^c, e^{tL} 1> on a grid.
template <RateOperator Op>
SurvivalCurve survival_curve(const Op& L, std::span<const double> nu_Ac, std::span<const double> grid,
                             double tol = 1e-12) {
    Uniformizer<Op> un(L, nu_Ac, tol);
    SurvivalCurve c;
    for (double t : grid) {
        c.t.push_back(t);
        c.p.push_back(un.survival(t));
    }
    return c;
}

/// u_t(eta) = P_eta(tau > t) / P_nu(tau > t), on A^c.
template <RateOperator Op>
std::vector<double> conditional_density(const Op& L, std::span<const double> nu_Ac, double t, double tol = 1e-12) {
    Uniformizer<Op> un(L, nu_Ac, tol);
    std::vector<double> one(L.size(), 1.0);
    auto v = un.semigroup(t, one);
    const double z = weighted_sum(nu_Ac, v);
    for (double& x : v) x /= z;
    return v;
}

struct PrefactorReport {
    std::vector<double> t;
    std::vector<double> c;      ///< e^{lambda t} P(tau > t)
    double max_c = 0.0;
    double limit = 0.0;         ///< 1 / <u, u*>
    double T = 0.0;
    double c_T = 0.0;
    double rel_error_T = 0.0;   ///< |c_T <u,u*> - 1|
    double cesaro_T = 0.0;
    double cesaro = 0.0;        ///< (1/T) int_0^T c_s ds
    double cesaro_rel_error = 0.0;
    bool gap_ok = true;
};

/// c_t on a grid, its value at T = horizon_factor / gap, and the Cesaro mean.
template <RateOperator Op>
PrefactorReport prefactor_limit(const Op& L, std::span<const double> nu_Ac, const EigenPair& p,
                                std::span<const double> grid, double horizon_factor = 20.0,
                                double cesaro_factor = 400.0, std::size_t cesaro_panels = 4000) {
    Uniformizer<Op> un(L, nu_Ac);
    PrefactorReport r;
    r.limit = 1.0 / p.overlap;
    for (double t : grid) {
        r.t.push_back(t);
        r.c.push_back(std::exp(p.lambda * t) * un.survival(t));
        r.max_c = std::max(r.max_c, r.c.back());
    }
    r.gap_ok = std::isfinite(p.gap) && p.gap > 0.0;
    if (!r.gap_ok) return r;
    r.T = horizon_factor / p.gap;
    r.c_T = std::exp(p.lambda * r.T) * un.survival(r.T);
    r.rel_error_T = std::abs(r.c_T * p.overlap - 1.0);
    // composite Simpson
    r.cesaro_T = cesaro_factor / p.gap;
    const std::size_t m = cesaro_panels + (cesaro_panels % 2);
    const double dt = r.cesaro_T / static_cast<double>(m);
    double acc = 0.0;
    for (std::size_t k = 0; k <= m; ++k) {
        const double s = dt * static_cast<double>(k);
        const double c = std::exp(p.lambda * s) * un.survival(s);
        acc += c * ((k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0));
    }
    r.cesaro = acc * dt / 3.0 / r.cesaro_T;
    r.cesaro_rel_error = std::abs(r.cesaro * p.overlap - 1.0);
    return r;
}

struct DoobTransform {
    SparseGenerator generator;       ///< over A^c, rows summing to zero
    std::vector<double> mu_hat;      ///< proportional to u u* nu
    double max_row_sum = 0.0;
    double diagonal_defect = 0.0;    ///< max |(L u + lambda u)/u|, the eigen residual seen by L^u
    double stationarity = 0.0;       ///< ||mu_hat^T L^u||_1
};

/// L^u phi = (L(u phi) + lambda u phi) / u. The diagonal is set so that rows
/// sum to zero; it equals L(eta,eta) + lambda up to the eigen residual.
inline DoobTransform doob_transform(const EigenPair& p, const SparseGenerator& killed, std::span<const double> nu_Ac) {
    if (killed.kind != GeneratorKind::killed) throw std::invalid_argument("doob_transform needs a killed generator");
    DoobTransform d;
    SparseGenerator& g = d.generator;
    g = killed;
    g.kind = GeneratorKind::killed;
    g.loss.assign(killed.size(), 0.0);
    const auto& u = p.u;
    for (std::size_t r = 0; r < g.size(); ++r) {
        double out = 0.0;
        for (std::size_t e = g.row_ptr[r]; e < g.row_ptr[r + 1]; ++e) {
            g.rate[e] = killed.rate[e] * u[g.col[e]] / u[r];
            out += g.rate[e];
        }
        g.diag[r] = -out;
        d.diagonal_defect = std::max(d.diagonal_defect, std::abs(g.diag[r] - (killed.diag[r] + p.lambda)));
        d.max_row_sum = std::max(d.max_row_sum, std::abs(g.row_sum(r)));
    }
    d.mu_hat.resize(g.size());
    double z = 0.0;
    for (std::size_t r = 0; r < g.size(); ++r) z += d.mu_hat[r] = u[r] * p.u_star[r] * nu_Ac[r];
    for (double& x : d.mu_hat) x /= z;
    std::vector<double> y(g.size());
    g.apply_transpose(d.mu_hat, y);
    for (double v : y) d.stationarity += std::abs(v);
    return d;
}

struct RenewalIterate {
    std::vector<double> density; ///< over A^c, normalized by int density dnu = 1
    double mass = 0.0;           ///< int density dnu after normalization, as a check
    double solve_residual = 0.0; ///< relative residual of the last resolvent solve
};

/// Q as an Eigen matrix (off-diagonal rates plus the diagonal).
inline Eigen::SparseMatrix<double> to_eigen(const SparseGenerator& q) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(q.nonzeros() + q.size());
    for (std::size_t r = 0; r < q.size(); ++r) {
        trip.emplace_back(static_cast<int>(r), static_cast<int>(r), q.diag[r]);
        for (std::size_t e = q.row_ptr[r]; e < q.row_ptr[r + 1]; ++e)
            trip.emplace_back(static_cast<int>(r), static_cast<int>(q.col[e]), q.rate[e]);
    }
    Eigen::SparseMatrix<double> m(static_cast<int>(q.size()), static_cast<int>(q.size()));
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    return m;
}

/// Densities of the renewal iterates of order 0..k, each int u_t dm_j(t) with m_j ~ P(tau>t) t^j dt.
///
/// Since int_0^inf t^j e^{tQ} dt = j! (-Q)^{-(j+1)} for the killed block Q,
/// the j-th density is proportional to (-Q)^{-(j+1)} 1. Each power is one
/// Jacobi-preconditioned BiCGSTAB solve. A direct LU fills in badly in d=3, and
/// incomplete LU setup costs far more than the iterations it saves.
inline std::vector<RenewalIterate> renewal_sequence(const SparseGenerator& killed, std::span<const double> nu_Ac,
                                                    int k, double tol = 1e-13) {
    if (k < 0) throw std::invalid_argument("renewal order must be non-negative");
    if (killed.kind != GeneratorKind::killed) throw std::invalid_argument("renewal_iterate needs a killed generator");
    const Eigen::SparseMatrix<double, Eigen::RowMajor> A = -to_eigen(killed);
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setTolerance(tol);
    solver.setMaxIterations(100000);
    solver.compute(A);
    if (solver.info() != Eigen::Success) throw std::runtime_error("resolvent setup failed");
    const Eigen::Index n = A.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    std::vector<RenewalIterate> out;
    for (int j = 0; j <= k; ++j) {
        Eigen::VectorXd w = solver.solveWithGuess(v, v);
        if (solver.info() != Eigen::Success) throw std::runtime_error("resolvent solve did not converge");
        RenewalIterate r;
        r.solve_residual = (A * w - v).norm() / v.norm();
        v = w / w.lpNorm<Eigen::Infinity>();
        r.density.assign(v.data(), v.data() + n);
        const double z = weighted_sum(nu_Ac, r.density);
        for (double& x : r.density) x /= z;
        r.mass = weighted_sum(nu_Ac, r.density);
        out.push_back(std::move(r));
    }
    return out;
}

inline RenewalIterate renewal_iterate(const SparseGenerator& killed, std::span<const double> nu_Ac, int k,
                                      double tol = 1e-13) {
    return renewal_sequence(killed, nu_Ac, k, tol).back();
}

enum class FunctionClass { D, D_star, M_density };

struct Violation {
    std::string condition; ///< "nonnegative", "zero on A", "decreasing" or "gradient"
    StateIndex state;
    int site;
    double excess;         ///< amount by which the inequality fails, relative to phi(eta)
};

struct Certification {
    std::vector<Violation> violations;
    std::size_t count = 0;   ///< total violations (the list may be truncated)
    std::size_t edges = 0;
    double worst = 0.0;      ///< largest relative excess seen, negative if all hold with slack
    bool ok() const { return count == 0; }
};

/// Checks membership of phi (over the full table) in D_n, D*_n, or the density class of M_n.
inline Certification certify_D(std::span<const double> phi, const StateTable& t, const std::vector<char>& in_A,
                               const EpsilonField& eps, const std::vector<int>& support_pos, FunctionClass which,
                               double rel_tol, std::size_t max_report = 50) {
    Certification c;
    c.worst = -std::numeric_limits<double>::infinity();
    std::vector<char> in_S(t.sites(), 0);
    for (int k : support_pos) in_S[k] = 1;
    auto bound = [&](std::size_t i) {
        switch (which) {
        case FunctionClass::D: return eps.eps[i];
        case FunctionClass::D_star: return eps.eps_star[i];
        case FunctionClass::M_density: return eps.eps[i] + eps.eps_star[i];
        }
        return 0.0;
    };
    auto report = [&](const char* what, std::size_t s, int i, double x) {
        c.worst = std::max(c.worst, x);
        if (x <= rel_tol) return;
        ++c.count;
        if (c.violations.size() < max_report) c.violations.push_back({what, static_cast<StateIndex>(s), i, x});
    };
    for (std::size_t s = 0; s < t.size(); ++s) {
        if (phi[s] < 0.0) report("nonnegative", s, -1, -phi[s]);
        if (in_A[s]) {
            if (phi[s] != 0.0) report("zero on A", s, -1, std::abs(phi[s]));
            continue;
        }
        const double f = phi[s];
        const double scale = f > 0.0 ? f : 1.0;
        for (std::size_t i = 0; i < t.sites(); ++i) {
            const StateIndex up = t.plus(s, i);
            if (up == no_state) continue;
            ++c.edges;
            report("decreasing", s, static_cast<int>(i), (phi[up] - f) / scale);
            if (!in_S[i]) report("gradient", s, static_cast<int>(i), (f - phi[up] - bound(i) * f) / scale);
        }
    }
    return c;
}

} // namespace azrp
