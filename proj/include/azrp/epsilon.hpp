#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "lattice.hpp"
#include "rates.hpp"

namespace azrp {

/// Hitting probabilities eps_i = P_i(H_S < inf) for p, and eps*_i for p*, on the sites of a domain.
struct EpsilonField {
    enum class Method { linear_solve, monte_carlo };

    Domain domain;
    std::vector<double> eps;
    std::vector<double> eps_star;
    Method method = Method::linear_solve;
    int halo = 0;
    double residual = 0.0;    ///< max harmonicity defect over solved sites
    double sensitivity = 0.0; ///< max change on the domain when the halo grows by R

    double operator[](std::size_t i) const { return eps[i]; }
};

namespace detail {

inline std::vector<Site> thicken(const Domain& dom, int halo) {
    std::set<Site> w;
    const auto cube = cube_sites(dom.dim(), halo);
    for (const auto& s : dom.sites())
        for (const auto& c : cube) w.insert(add(s, c));
    return {w.begin(), w.end()};
}

/// Solves eps = 1 on S, eps = P eps off S inside W, eps = 0 outside W.
/// Returns values on the sites of `report` and the harmonicity residual.
inline std::vector<double> solve_hitting(const Kernel& k, const std::vector<Site>& S, const Domain& report,
                                         int halo, double& residual) {
    const Domain W(report.dim(), thicken(report, halo));
    std::set<Site> sset(S.begin(), S.end());
    std::vector<int> unk(W.size(), -1);
    int nu = 0;
    for (std::size_t a = 0; a < W.size(); ++a)
        if (!sset.count(W.site(a))) unk[a] = nu++;

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nu);
    for (std::size_t a = 0; a < W.size(); ++a) {
        if (unk[a] < 0) continue;
        trip.emplace_back(unk[a], unk[a], 1.0);
        for (const auto& e : k.entries()) {
            const Site t = add(W.site(a), e.offset);
            if (sset.count(t)) {
                rhs[unk[a]] += e.prob;
            } else {
                const int b = W.index(t);
                if (b >= 0) trip.emplace_back(unk[a], unk[b], -e.prob);
            }
        }
    }
    Eigen::SparseMatrix<double> A(nu, nu);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("hitting-probability system is singular");
    Eigen::VectorXd x = nu > 0 ? Eigen::VectorXd(lu.solve(rhs)) : Eigen::VectorXd();
    if (nu > 0 && lu.info() != Eigen::Success) throw std::runtime_error("hitting-probability solve failed");

    auto value = [&](const Site& s) -> double {
        if (sset.count(s)) return 1.0;
        const int b = W.index(s);
        return b < 0 ? 0.0 : x[unk[b]];
    };
    residual = 0.0;
    for (std::size_t a = 0; a < W.size(); ++a) {
        if (unk[a] < 0) continue;
        double h = 0.0;
        for (const auto& e : k.entries()) h += e.prob * value(add(W.site(a), e.offset));
        residual = std::max(residual, std::abs(x[unk[a]] - h));
    }
    std::vector<double> out(report.size());
    for (std::size_t i = 0; i < report.size(); ++i) out[i] = value(report.site(i));
    return out;
}

inline std::vector<double> mc_hitting(const Kernel& k, const std::vector<Site>& S, const Domain& report, int halo,
                                      std::size_t walks, std::uint64_t seed) {
    const Domain W(report.dim(), thicken(report, halo));
    std::set<Site> sset(S.begin(), S.end());
    std::vector<double> cum;
    double c = 0.0;
    for (const auto& e : k.entries()) cum.push_back(c += e.prob);
    std::vector<double> out(report.size());
    for (std::size_t i = 0; i < report.size(); ++i) {
        if (sset.count(report.site(i))) {
            out[i] = 1.0;
            continue;
        }
        std::mt19937_64 rng(seed + 7919 * i);
        std::uniform_real_distribution<double> U(0.0, c);
        std::size_t hits = 0;
        for (std::size_t w = 0; w < walks; ++w) {
            Site x = report.site(i);
            for (;;) {
                const double u = U(rng);
                std::size_t m = 0;
                while (m + 1 < cum.size() && u >= cum[m]) ++m;
                x = add(x, k.entries()[m].offset);
                if (sset.count(x)) {
                    ++hits;
                    break;
                }
                if (!W.contains(x)) break;
            }
        }
        out[i] = static_cast<double>(hits) / static_cast<double>(walks);
    }
    return out;
}

} // namespace detail

/// Hitting probabilities of S with the closure eps = 0 outside domain + halo.
///
/// The closure underestimates the Z^d values; `sensitivity` is the change
/// observed when the halo grows by R.
inline EpsilonField epsilon_field(const Kernel& k, const std::vector<Site>& S, const Domain& dom, int halo,
                                  double tol = 1e-12,
                                  EpsilonField::Method method = EpsilonField::Method::linear_solve,
                                  std::size_t walks = 100000, std::uint64_t seed = 1) {
    if (halo < k.range()) throw std::invalid_argument("halo must be at least the kernel range");
    for (const auto& s : S)
        if (!dom.contains(s)) throw std::invalid_argument("support site " + to_string(s) + " outside the domain");
    EpsilonField f;
    f.domain = dom;
    f.halo = halo;
    f.method = method;
    const Kernel ks = k.reversed_kernel();
    double r1 = 0.0, r2 = 0.0;
    if (method == EpsilonField::Method::linear_solve) {
        f.eps = detail::solve_hitting(k, S, dom, halo, r1);
        f.eps_star = detail::solve_hitting(ks, S, dom, halo, r2);
        f.residual = std::max(r1, r2);
        if (f.residual > tol)
            throw std::runtime_error("hitting-probability residual " + std::to_string(f.residual) +
                                     " exceeds tolerance");
        double q1 = 0.0, q2 = 0.0;
        const auto e2 = detail::solve_hitting(k, S, dom, halo + k.range(), q1);
        const auto s2 = detail::solve_hitting(ks, S, dom, halo + k.range(), q2);
        for (std::size_t i = 0; i < dom.size(); ++i)
            f.sensitivity = std::max({f.sensitivity, std::abs(e2[i] - f.eps[i]), std::abs(s2[i] - f.eps_star[i])});
    } else {
        f.eps = detail::mc_hitting(k, S, dom, halo, walks, seed);
        f.eps_star = detail::mc_hitting(ks, S, dom, halo, walks, seed ^ 0x9e3779b97f4a7c15ULL);
        f.residual = std::numeric_limits<double>::quiet_NaN();
        f.sensitivity = std::numeric_limits<double>::quiet_NaN();
    }
    return f;
}

/// Density psi of the product measure with site fugacities (1 - eps_i) gamma
/// against the one with fugacity gamma. Sites of S carry no tilt.
class TiltedDensity {
public:
    TiltedDensity(const std::vector<double>& eps, const std::vector<int>& support_pos, const RateFunction& g,
                  double gamma, int cap)
        : eps_(eps), cap_(cap) {
        std::vector<char> in_s(eps.size(), 0);
        for (int k : support_pos) in_s[k] = 1;
        const double logz = std::log(detail::series(g, gamma, 0, 1000000).z);
        log_factor_.resize(eps.size());
        for (std::size_t i = 0; i < eps.size(); ++i) {
            auto& t = log_factor_[i];
            t.assign(cap + 1, 0.0);
            if (in_s[i] || eps[i] == 0.0) continue;
            if (!(eps[i] < 1.0)) throw std::domain_error("degenerate tilt: eps = 1 at site outside S");
            if (eps[i] < 0.0) throw std::domain_error("negative eps");
            const double gp = (1.0 - eps[i]) * gamma;
            const double shift = logz - std::log(detail::series(g, gp, 0, 1000000).z);
            const double step = std::log1p(-eps[i]);
            for (int n = 0; n <= cap; ++n) t[n] = shift + n * step;
        }
    }

    std::size_t sites() const { return eps_.size(); }
    int cap() const { return cap_; }

    /// Per-site factor theta_{(1-eps_i)gamma}(n) / theta_gamma(n).
    double factor(std::size_t i, int n) const { return std::exp(log_factor_[i][n]); }

    template <class Config>
    double log_value(const Config& eta) const {
        double s = 0.0;
        for (std::size_t i = 0; i < log_factor_.size(); ++i) s += log_factor_[i][eta[i]];
        return s;
    }
    template <class Config>
    double operator()(const Config& eta) const {
        return std::exp(log_value(eta));
    }

private:
    std::vector<double> eps_;
    int cap_;
    std::vector<std::vector<double>> log_factor_;
};

inline TiltedDensity tilted_density(const EpsilonField& f, const std::vector<int>& support_pos,
                                    const RateFunction& g, double gamma, int cap) {
    return TiltedDensity(f.eps, support_pos, g, gamma, cap);
}

} // namespace azrp
