#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "helpers.hpp"

using namespace azrp;
using fixture::dense;

namespace {

fixture::Instance small_line() {
    return fixture::Instance(fixture::drift_line(), 0.5, fixture::at_least(1, 2), 1, Caps{3, 3});
}

// -lambda is the eigenvalue of largest real part of the dense killed matrix
double dense_lambda(const Eigen::MatrixXd& q) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(q);
    double best = -1e300;
    for (long k = 0; k < es.eigenvalues().size(); ++k) best = std::max(best, es.eigenvalues()(k).real());
    return -best;
}

} // namespace

TEST(Principal, SingleSiteRateIsGamma) {
    const auto k = fixture::kernel_of(1, {{{1}, 1.0}});
    fixture::Instance in(k, 0.3, fixture::at_least(1, 1), 0, Caps{4, std::nullopt});
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    EXPECT_NEAR(p.lambda, 0.3, 1e-13);
    EXPECT_NEAR(p.u[0], 1.0 / in.nu_Ac[0], 1e-12);
}

TEST(Principal, MatchesDenseEigensolver) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    const Eigen::MatrixXd Q = dense(in.Lk);
    EXPECT_NEAR(p.lambda, dense_lambda(Q), 1e-11);
    EXPECT_NEAR(p.lambda_star, dense_lambda(dense(in.Lks)), 1e-11);
    EXPECT_LT(p.residual, 1e-10);
    // u spans the kernel of Q + lambda
    Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(p.u.data(), static_cast<long>(p.u.size()));
    EXPECT_LT((Q * u + p.lambda * u).cwiseAbs().maxCoeff(), 1e-10);
    for (double x : p.u) EXPECT_GT(x, 0.0);
    for (double x : p.u_star) EXPECT_GT(x, 0.0);
    EXPECT_GE(p.overlap, 1.0 - 1e-10);
    EXPECT_LT(p.multistart_spread, 1e-8);
    EXPECT_GT(p.gap, 0.0);
}

TEST(Principal, DualEigenfunctionIsLeftEigenvector) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    const Eigen::MatrixXd Q = dense(in.Lk);
    const long n = Q.rows();
    Eigen::VectorXd left(n);
    for (long r = 0; r < n; ++r) left(r) = p.u_star[static_cast<std::size_t>(r)] * in.nu_Ac[static_cast<std::size_t>(r)];
    EXPECT_LT((Q.transpose() * left + p.lambda * left).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Survival, MatchesMatrixExponential) {
    auto in = small_line();
    const Eigen::MatrixXd Q = dense(in.Lk);
    const std::vector<double> grid{0.0, 0.5, 3.0, 20.0, 150.0};
    const auto c = survival_curve(in.Lk, in.nu_Ac, grid);
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(in.nu_Ac.data(), static_cast<long>(in.nu_Ac.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Eigen::MatrixXd E = (Q * grid[k]).exp();
        const double exact = w.dot(E * Eigen::VectorXd::Ones(Q.rows()));
        EXPECT_NEAR(c.p[k], exact, 1e-11) << "t = " << grid[k];
    }
}

TEST(Survival, PrefactorBoundAndLimit) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    std::vector<double> grid;
    for (int k = 0; k <= 40; ++k) grid.push_back(k * 2.0);
    const auto r = prefactor_limit(in.Lk, in.nu_Ac, p, grid);
    EXPECT_LE(r.max_c, 1.0 + 1e-10);
    EXPECT_LT(r.rel_error_T, 5e-3);
    EXPECT_LT(r.cesaro_rel_error, 1e-2);
    EXPECT_NEAR(r.limit, 1.0 / p.overlap, 1e-12);
}

TEST(Survival, ConditionalDensityConverges) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    const auto ut = conditional_density(in.Lk, in.nu_Ac, 30.0 / p.gap);
    EXPECT_LT(sup_distance(ut, p.u) / sup_norm(p.u), 1e-4);
}

TEST(Renewal, MatchesQuadrature) {
    auto in = small_line();
    const Eigen::MatrixXd Q = dense(in.Lk);
    const long n = Q.rows();
    const auto seq = renewal_sequence(in.Lk, in.nu_Ac, 2);
    boost::math::quadrature::exp_sinh<double> integrator;
    for (int k : {0, 2}) {
        // Phi_k = int_0^inf t^k e^{tQ} 1 dt, then normalized against nu
        std::vector<double> phi(static_cast<std::size_t>(n));
        for (long r = 0; r < n; ++r) {
            auto f = [&](double t) {
                const Eigen::MatrixXd E = (Q * t).exp();
                return std::pow(t, k) * E.row(r).sum();
            };
            phi[static_cast<std::size_t>(r)] = integrator.integrate(f, 1e-12);
        }
        const double z = weighted_sum(in.nu_Ac, phi);
        for (auto& x : phi) x /= z;
        EXPECT_LT(sup_distance(seq[static_cast<std::size_t>(k)].density, phi) / sup_norm(phi), 1e-8) << "k = " << k;
        EXPECT_NEAR(seq[static_cast<std::size_t>(k)].mass, 1.0, 1e-12);
    }
}

TEST(Renewal, ApproachesEigenfunction) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    const auto seq = renewal_sequence(in.Lk, in.nu_Ac, 12);
    double prev = 1e300;
    for (const auto& it : seq) {
        const double d = sup_distance(it.density, p.u);
        EXPECT_LE(d, prev + 1e-12);
        prev = d;
    }
    EXPECT_LT(prev / sup_norm(p.u), 1e-6);
}

TEST(Doob, ConservativeAndStationary) {
    auto in = small_line();
    const auto p = principal_pair(in.Lk, in.Lks, in.nu_Ac);
    const auto d = doob_transform(p, in.Lk, in.nu_Ac);
    EXPECT_LT(d.max_row_sum, 1e-12);
    EXPECT_LT(d.stationarity, 1e-10);
    double s = 0.0;
    for (double x : d.mu_hat) s += x;
    EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(Certify, IndicatorOfComplementIsInD) {
    auto in = small_line();
    const auto eps = epsilon_field(in.kernel, in.pattern.support(), in.domain, 30);
    const auto pos = in.pattern.locate(in.domain);
    std::vector<double> one(in.table->size());
    for (std::size_t s = 0; s < one.size(); ++s) one[s] = in.in_A[s] ? 0.0 : 1.0;
    EXPECT_TRUE(certify_D(one, *in.table, in.in_A, eps, pos, FunctionClass::D, 0.0).ok());
    // an increasing function is not decreasing
    std::vector<double> inc(in.table->size());
    for (std::size_t s = 0; s < inc.size(); ++s) inc[s] = in.in_A[s] ? 0.0 : 1.0 + in.table->total(s);
    const auto c = certify_D(inc, *in.table, in.in_A, eps, pos, FunctionClass::D, 0.0);
    ASSERT_FALSE(c.ok());
    EXPECT_EQ(c.violations.front().condition, "decreasing");
}
