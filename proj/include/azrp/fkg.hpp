#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "statespace.hpp"

namespace azrp {

enum class Direction { increasing, decreasing };

struct FkgResult {
    double covariance = 0.0;
    bool expect_nonnegative = true;
    double tol = 1e-12;
    bool ok() const { return expect_nonnegative ? covariance >= -tol : covariance <= tol; }
};

/// Worst violation of the stated direction over all covering pairs (eta, A_i^+ eta) in the table.
inline double monotonicity_defect(const StateTable& t, std::span<const double> f, Direction d) {
    double worst = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s)
        for (std::size_t i = 0; i < t.sites(); ++i) {
            const StateIndex up = t.plus(s, i);
            if (up == no_state) continue;
            const double step = f[up] - f[s];
            worst = std::max(worst, d == Direction::increasing ? -step : step);
        }
    return worst;
}

/// Cov_nu(f, g). Inputs are checked for the claimed monotonicity first.
///
/// The check is meaningful on per-site capped product spaces. A total cap
/// makes the measure a conditioned product and FKG can fail there.
inline FkgResult fkg_check(const StateTable& t, std::span<const double> nu, std::span<const double> f, Direction df,
                           std::span<const double> g, Direction dg, double tol = 1e-12) {
    if (t.caps().total) throw std::invalid_argument("fkg_check needs a product space (no total cap)");
    if (monotonicity_defect(t, f, df) > 0.0) throw std::invalid_argument("first function is not monotone as stated");
    if (monotonicity_defect(t, g, dg) > 0.0) throw std::invalid_argument("second function is not monotone as stated");
    double z = 0.0, ef = 0.0, eg = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s) {
        z += nu[s];
        ef += nu[s] * f[s];
        eg += nu[s] * g[s];
    }
    ef /= z;
    eg /= z;
    double cov = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s) cov += nu[s] * (f[s] - ef) * (g[s] - eg);
    FkgResult r;
    r.covariance = cov / z;
    r.expect_nonnegative = df == dg;
    r.tol = tol;
    return r;
}

/// Indicator of the up-closure of `generators` random states.
inline std::vector<double> random_upset(std::mt19937_64& rng, const StateTable& t, int generators) {
    std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
    std::vector<std::size_t> gen(static_cast<std::size_t>(generators));
    for (auto& x : gen) x = pick(rng);
    std::vector<double> f(t.size(), 0.0);
    for (std::size_t s = 0; s < t.size(); ++s) {
        auto eta = t.state(s);
        for (std::size_t k : gen) {
            auto b = t.state(k);
            bool above = true;
            for (std::size_t i = 0; i < t.sites() && above; ++i) above = eta[i] >= b[i];
            if (above) {
                f[s] = 1.0;
                break;
            }
        }
    }
    return f;
}

/// A random increasing function: a positive combination of up-set indicators.
inline std::vector<double> random_increasing(std::mt19937_64& rng, const StateTable& t, int terms = 3) {
    std::uniform_real_distribution<double> U(0.1, 1.0);
    std::uniform_int_distribution<int> G(1, 4);
    std::vector<double> f(t.size(), 0.0);
    for (int k = 0; k < terms; ++k) {
        const double w = U(rng);
        const auto u = random_upset(rng, t, G(rng));
        for (std::size_t s = 0; s < t.size(); ++s) f[s] += w * u[s];
    }
    return f;
}

} // namespace azrp
