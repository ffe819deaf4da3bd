#pragma once

#include <map>
#include <memory>

#include <Eigen/Dense>

#include "azrp/azrp.hpp"

namespace fixture {

using namespace azrp;

inline Kernel kernel_of(int dim, const std::map<Site, double>& p) {
    auto r = validate_kernel(p, dim, false);
    if (!r.ok()) throw std::logic_error("bad test kernel");
    return *r.kernel;
}

inline Kernel drift_line() { return kernel_of(1, {{{1}, 0.7}, {{-1}, 0.3}}); }
inline Kernel drift_3d() { return kernel_of(3, {{{1, 0, 0}, 0.7}, {{0, -1, 0}, 0.3}}); }

inline Pattern at_least(int dim, int count) {
    return *check_pattern_cf(PatternSpec::at_least({Site(dim, 0)}, count)).pattern;
}

/// A small open system with its killed generators and eigenpair.
struct Instance {
    Kernel kernel;
    RateFunction g = RateFunction::linear();
    double gamma;
    Pattern pattern;
    Domain domain;
    Marginal marg;
    std::unique_ptr<StateTable> table;
    MeasureVector nu;
    std::vector<char> in_A;
    SparseGenerator L, Ls, Lk, Lks;
    std::vector<double> nu_Ac;

    Instance(Kernel k, double fugacity, Pattern p, int radius, Caps caps)
        : kernel(std::move(k)), gamma(fugacity), pattern(std::move(p)),
          domain(LatticeBox(kernel.dim(), radius).domain()), marg(build_marginal(g, gamma, caps.per_site)),
          table(enumerate(domain, caps)), nu(measure_vector(*table, marg)), in_A(pattern_indicator(*table, pattern)),
          L(assemble_open(*table, kernel, g, gamma)), Ls(assemble_dual(*table, kernel, g, gamma)), Lk(kill(L, in_A)),
          Lks(kill(Ls, in_A)), nu_Ac(restrict_to(Lk.states, nu.w)) {}
};

/// Dense copy of a sparse generator.
inline Eigen::MatrixXd dense(const SparseGenerator& q) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<long>(q.size()), static_cast<long>(q.size()));
    for (std::size_t r = 0; r < q.size(); ++r) {
        m(static_cast<long>(r), static_cast<long>(r)) = q.diag[r];
        for (std::size_t k = q.row_ptr[r]; k < q.row_ptr[r + 1]; ++k)
            m(static_cast<long>(r), static_cast<long>(q.col[k])) += q.rate[k];
    }
    return m;
}

} // namespace fixture
