#include <gtest/gtest.h>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/factorials.hpp>

#include "helpers.hpp"

using namespace azrp;

TEST(Kernel, AcceptsDriftedKernel) {
    auto r = validate_kernel({{{1, 0, 0}, 0.7}, {{0, -1, 0}, 0.3}}, 3);
    ASSERT_TRUE(r.ok());
    EXPECT_NEAR(r.kernel->drift()[0], 0.7, 1e-15);
    EXPECT_NEAR(r.kernel->drift()[1], -0.3, 1e-15);
    EXPECT_EQ(r.kernel->range(), 1);
    // two offsets cannot generate Z^3
    EXPECT_FALSE(r.irreducible);
    EXPECT_FALSE(validate_kernel({{{1, 0, 0}, 0.7}, {{0, -1, 0}, 0.3}}, 3, true).ok());
}

TEST(Kernel, RejectsBadMass) {
    EXPECT_FALSE(validate_kernel({{{1}, 0.7}, {{-1}, 0.2}}, 1).ok());
    EXPECT_FALSE(validate_kernel({{{1}, 1.3}, {{-1}, -0.3}}, 1).ok());
    EXPECT_FALSE(validate_kernel({{{0}, 0.5}, {{1}, 0.5}}, 1).ok());
    EXPECT_FALSE(validate_kernel({{{1, 0}, 1.0}}, 1).ok());
}

TEST(Kernel, TruncationKeepsMass) {
    const auto k = fixture::drift_3d();
    const auto dom = LatticeBox(3, 1).domain();
    TruncatedKernel tk(k, dom);
    for (std::size_t i = 0; i < dom.size(); ++i) {
        double out = tk.out_diag(i), in = tk.in_diag(i);
        for (const auto& l : tk.links(i)) out += l.prob;
        // p(i,i) reports the folded diagonal, so only off-diagonal entries count here
        for (std::size_t j = 0; j < dom.size(); ++j) in += j == i ? 0.0 : tk.p(j, i);
        EXPECT_NEAR(out, 1.0, 1e-15);
        EXPECT_NEAR(in, 1.0, 1e-15);
    }
}

TEST(Marginal, PoissonWeights) {
    const double gamma = 0.3;
    const auto m = build_marginal(RateFunction::linear(), gamma, 12);
    double z = 0.0;
    for (int n = 0; n <= 12; ++n) z += std::pow(gamma, n) / boost::math::factorial<double>(n);
    for (int n = 0; n <= 12; ++n)
        EXPECT_NEAR(m.probs[n], std::pow(gamma, n) / boost::math::factorial<double>(n) / z, 1e-15);
    boost::math::poisson_distribution<> X(gamma);
    EXPECT_NEAR(m.tail, boost::math::cdf(boost::math::complement(X, 12)), 1e-20);
}

TEST(Marginal, GeometricForConstantRate) {
    // g = 1: theta is geometric with ratio gamma, so rho = gamma / (1 - gamma)
    FugacityMap f(RateFunction::constant());
    EXPECT_NEAR(f.rho(0.5), 1.0, 1e-12);
    EXPECT_NEAR(f.gamma(1.0), 0.5, 1e-11);
    EXPECT_THROW(f.rho(1.0), std::domain_error);
}

TEST(Marginal, LinearRateInvertsToDensity) {
    FugacityMap f(RateFunction::linear());
    for (double rho : {0.05, 0.3, 2.0, 7.5}) EXPECT_NEAR(f.gamma(rho), rho, 1e-11);
}

TEST(Marginal, RatioIdentity) {
    const auto g = RateFunction::from_table({0.0, 1.0, 1.5, 1.75, 2.0});
    const double gamma = 1.2;
    const auto m = build_marginal(g, gamma, 10);
    for (int n = 0; n < 10; ++n) EXPECT_NEAR(m.probs[n + 1] * g(n + 1), gamma * m.probs[n], 1e-15);
}

TEST(Pattern, ThresholdSatisfiesCF) {
    auto r = check_pattern_cf(PatternSpec::at_least({{0, 0, 0}}, 3));
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.pattern->cylinders().size(), 3u);
    EXPECT_TRUE(r.pattern->in_A({3}));
    EXPECT_FALSE(r.pattern->in_A({2}));
    // two support sites, at least two particles: complement {00, 10, 01}
    auto two = check_pattern_cf(PatternSpec::at_least({{0}, {1}}, 2));
    ASSERT_TRUE(two.ok());
    EXPECT_EQ(two.pattern->cylinders().size(), 3u);
}

TEST(Pattern, RejectsBrokenComplements) {
    PatternSpec s;
    s.support = {{0}, {1}};
    s.kind = PatternSpec::Kind::complement;
    s.complement = {{0, 0}, {1, 1}}; // 10 is in A while 11 is not: A is not increasing
    EXPECT_FALSE(check_pattern_cf(s).ok());
    s.complement = {{1, 0}};         // the empty configuration would be in A
    auto r = check_pattern_cf(s);
    ASSERT_FALSE(r.ok());
    bool clause2 = false;
    for (const auto& f : r.failures) clause2 |= f.clause == 2;
    EXPECT_TRUE(clause2);
    PatternSpec p;
    p.support = {{0}};
    p.kind = PatternSpec::Kind::predicate;
    p.in_A = [](const BaseConfig&) { return false; }; // A empty, complement infinite
    EXPECT_FALSE(check_pattern_cf(p).ok());
}

TEST(Epsilon, OneOnSupportAndMatchesWalkers) {
    const auto k = fixture::drift_3d();
    const std::vector<Site> S{{0, 0, 0}};
    const auto dom = LatticeBox(3, 1).domain();
    const auto f = epsilon_field(k, S, dom, 3);
    EXPECT_DOUBLE_EQ(f.eps[static_cast<std::size_t>(dom.index({0, 0, 0}))], 1.0);
    EXPECT_LT(f.residual, 1e-12);
    // an independent Monte Carlo oracle on the same thickened region
    const std::size_t walks = 40000;
    const auto mc = detail::mc_hitting(k, S, dom, 3, walks, 99);
    for (std::size_t i = 0; i < dom.size(); ++i) {
        const double se = std::sqrt(std::max(f.eps[i] * (1 - f.eps[i]), 1e-4) / walks);
        EXPECT_NEAR(mc[i], f.eps[i], 4.5 * se) << "site " << to_string(dom.site(i));
    }
}

TEST(Epsilon, HaloSensitivityShrinks) {
    const auto k = fixture::drift_3d();
    const auto dom = LatticeBox(3, 1).domain();
    const auto a = epsilon_field(k, {{0, 0, 0}}, dom, 1);
    const auto b = epsilon_field(k, {{0, 0, 0}}, dom, 3);
    EXPECT_LE(b.sensitivity, a.sensitivity + 1e-15);
}
