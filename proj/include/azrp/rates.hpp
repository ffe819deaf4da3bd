#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace azrp {

/// Interaction rate g with g(0)=0, g(1)=1, non-decreasing.
///
/// Named families are "linear" (g(k)=k) and "constant" (g(k)=1 for k>=1).
/// An explicit table is extended flat beyond its last entry.
class RateFunction {
public:
    enum class Family { linear, constant, table };

    static RateFunction linear() { return RateFunction(Family::linear, {}); }
    static RateFunction constant() { return RateFunction(Family::constant, {}); }

    static RateFunction from_table(std::vector<double> values) {
        if (values.size() < 2) throw std::invalid_argument("rate table needs g(0) and g(1)");
        if (values[0] != 0.0) throw std::invalid_argument("rate table: g(0) must be 0");
        if (values[1] != 1.0) throw std::invalid_argument("rate table: g(1) must be 1");
        for (std::size_t k = 1; k < values.size(); ++k) {
            if (!std::isfinite(values[k])) throw std::invalid_argument("rate table: non-finite entry");
            if (values[k] < values[k - 1])
                throw std::invalid_argument("rate table: g decreases at k=" + std::to_string(k));
        }
        return RateFunction(Family::table, std::move(values));
    }

    Family family() const { return family_; }

    double operator()(int k) const {
        if (k <= 0) return 0.0;
        switch (family_) {
        case Family::linear: return static_cast<double>(k);
        case Family::constant: return 1.0;
        case Family::table:
            return k < static_cast<int>(values_.size()) ? values_[k] : values_.back();
        }
        return 0.0;
    }

    /// sup_k g(k+1) - g(k), so that g(n) <= Delta n.
    double delta() const {
        if (family_ != Family::table) return 1.0;
        double d = 0.0;
        for (std::size_t k = 1; k < values_.size(); ++k) d = std::max(d, values_[k] - values_[k - 1]);
        return d;
    }

    double sup() const {
        if (family_ == Family::linear) return std::numeric_limits<double>::infinity();
        if (family_ == Family::constant) return 1.0;
        return values_.back();
    }

    std::vector<double> tabulate(int kmax) const {
        std::vector<double> t(kmax + 1);
        for (int k = 0; k <= kmax; ++k) t[k] = (*this)(k);
        return t;
    }

    std::string name() const {
        switch (family_) {
        case Family::linear: return "linear";
        case Family::constant: return "constant";
        case Family::table: return "table";
        }
        return "";
    }

    const std::vector<double>& values() const { return values_; }

private:
    RateFunction(Family f, std::vector<double> v) : family_(f), values_(std::move(v)) {}
    Family family_;
    std::vector<double> values_;
};

/// Site marginal theta_gamma truncated to {0..M} and renormalized.
struct Marginal {
    double gamma = 0.0;
    std::vector<double> probs;
    double Z = 1.0;    ///< sum of the unnormalized weights over {0..M}
    double rho = 0.0;  ///< mean of the truncated law
    double tail = 0.0; ///< untruncated mass of {M+1, ...}, when gamma < sup g

    int cap() const { return static_cast<int>(probs.size()) - 1; }
};

namespace detail {

/// Neumaier compensated sum.
struct CompensatedSum {
    double sum = 0.0, comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

struct SeriesSums {
    double z = 0.0;   // sum_n w(n)
    double m1 = 0.0;  // sum_n n w(n)
    double partial = 0.0;
    double rest = 0.0; // the terms past `upto`, summed on their own so small tails keep their digits
};

/// Untruncated sums of w(n) = gamma^n / (g(1)...g(n)); the first `upto`+1 terms
/// are also accumulated separately.
inline SeriesSums series(const RateFunction& g, double gamma, int upto, int max_terms) {
    SeriesSums s;
    double w = 1.0;
    for (int n = 0;; ++n) {
        if (n > 0) w *= gamma / g(n);
        s.z += w;
        s.m1 += n * w;
        if (n <= upto)
            s.partial += w;
        else
            s.rest += w;
        const bool small = w < 1e-18 * s.z && n > upto && (n == 0 || gamma / g(n + 1) < 1.0);
        if (small) break;
        if (n >= max_terms)
            throw std::domain_error("marginal series did not converge within " +
                                    std::to_string(max_terms) + " terms at gamma=" + std::to_string(gamma));
        if (!std::isfinite(s.z)) throw std::overflow_error("marginal normalization overflowed");
    }
    return s;
}

} // namespace detail

inline Marginal build_marginal(const RateFunction& g, double gamma, int M) {
    if (M < 0) throw std::invalid_argument("marginal cap must be non-negative");
    if (!(gamma >= 0.0) || !(gamma < g.sup()))
        throw std::domain_error("fugacity " + std::to_string(gamma) + " outside [0, sup g)");
    Marginal m;
    m.gamma = gamma;
    std::vector<double> w(M + 1);
    w[0] = 1.0;
    for (int n = 1; n <= M; ++n) {
        w[n] = w[n - 1] * gamma / g(n);
        if (gamma > 0.0 && !(w[n] >= std::numeric_limits<double>::min()))
            throw std::underflow_error("marginal weight underflows at n=" + std::to_string(n) +
                                       " (gamma=" + std::to_string(gamma) + "); lower the cap");
    }
    double z = 0.0;
    for (double x : w) z += x;
    if (!std::isfinite(z)) throw std::overflow_error("marginal normalization overflowed");
    m.Z = z;
    m.probs.resize(M + 1);
    for (int n = 0; n <= M; ++n) {
        m.probs[n] = w[n] / z;
        m.rho += n * m.probs[n];
    }
    if (gamma == 0.0) return m;
    try {
        const auto s = detail::series(g, gamma, M, 1000000);
        m.tail = s.rest / s.z;
    } catch (const std::domain_error&) {
        m.tail = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

/// rho(gamma) of the untruncated marginal and its inverse by bisection.
class FugacityMap {
public:
    explicit FugacityMap(RateFunction g, int max_terms = 100000) : g_(std::move(g)), max_terms_(max_terms) {}

    double rho(double gamma) const {
        if (!(gamma >= 0.0) || !(gamma < g_.sup()))
            throw std::domain_error("fugacity " + std::to_string(gamma) + " outside [0, sup g)");
        if (gamma == 0.0) return 0.0;
        const auto s = detail::series(g_, gamma, 0, max_terms_);
        return s.m1 / s.z;
    }

    double gamma(double rho, double tol = 1e-12) const {
        if (!(rho >= 0.0)) throw std::domain_error("density must be non-negative");
        if (rho == 0.0) return 0.0;
        double lo = 0.0, hi;
        if (std::isinf(g_.sup())) {
            hi = 1.0;
            while (rho_or_inf(hi) < rho) {
                lo = hi;
                hi *= 2.0;
                if (hi > 1e12) throw std::domain_error("density " + std::to_string(rho) + " not achievable");
            }
        } else {
            hi = g_.sup();
            if (rho_or_inf(hi * (1.0 - 1e-9)) < rho)
                throw std::domain_error("density " + std::to_string(rho) + " not achievable for this g");
        }
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            if (rho_or_inf(mid) < rho)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    double rho_or_inf(double gamma) const {
        if (gamma >= g_.sup()) return std::numeric_limits<double>::infinity();
        try {
            return rho(gamma);
        } catch (const std::domain_error&) {
            return std::numeric_limits<double>::infinity();
        }
    }

    RateFunction g_;
    int max_terms_;
};

} // namespace azrp
