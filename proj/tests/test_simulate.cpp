#include <gtest/gtest.h>

#include <cstdlib>

#include <boost/math/distributions/chi_squared.hpp>

#include "helpers.hpp"

using namespace azrp;

namespace {

struct Line {
    fixture::Instance in{fixture::drift_line(), 0.5, fixture::at_least(1, 2), 1, Caps{3, 3}};
    SimModel sim{in.domain, in.kernel, in.g, in.gamma, Caps{3, 3}, in.pattern};
};

} // namespace

TEST(Simulator, FirstMoveFollowsGeneratorRow) {
    Line l;
    const std::vector<int> eta{1, 0, 1};
    const StateIndex s = l.in.table->find_config(eta);
    const auto& L = l.in.L;
    std::map<StateIndex, double> expect;
    for (std::size_t e = L.row_ptr[s]; e < L.row_ptr[s + 1]; ++e) expect[L.col[e]] += L.rate[e];
    const double R = -L.diag[s];

    Simulator sim(l.sim, eta);
    EXPECT_NEAR(sim.rate(), R, 1e-14);
    Engine rng = stream(1, 0);
    const int draws = 40000;
    std::map<StateIndex, double> seen;
    double dt = 0.0;
    for (int k = 0; k < draws; ++k) {
        const auto ev = sim.propose(rng);
        dt += ev.dt;
        Simulator copy = sim;
        copy.apply(ev.move);
        seen[l.in.table->find_config(copy.state())] += 1.0;
    }
    double chi2 = 0.0;
    for (const auto& [to, r] : expect) {
        const double e = draws * r / R;
        chi2 += (seen[to] - e) * (seen[to] - e) / e;
    }
    EXPECT_EQ(seen.size(), expect.size());
    const double crit = boost::math::quantile(boost::math::chi_squared(static_cast<double>(expect.size() - 1)), 0.999);
    EXPECT_LT(chi2, crit);
    // holding time mean 1/R, standard error 1/(R sqrt(n))
    EXPECT_NEAR(dt / draws, 1.0 / R, 4.0 / (R * std::sqrt(double(draws))));
}

TEST(Simulator, SingleSiteHittingIsExponential) {
    const auto k = fixture::kernel_of(1, {{{1}, 1.0}});
    SimModel m(Domain(1, {{0}}), k, RateFunction::linear(), 0.3, Caps{4, std::nullopt}, fixture::at_least(1, 1));
    const int n = 20000;
    double sum = 0.0;
    for (int id = 0; id < n; ++id) {
        Engine rng = stream(2, static_cast<std::uint64_t>(id));
        sum += hitting_time(m, {0}, 1e9, rng);
    }
    EXPECT_NEAR(sum / n, 1.0 / 0.3, 4.0 / 0.3 / std::sqrt(double(n)));
}

TEST(Simulator, SurvivalAgreesWithUniformization) {
    Line l;
    std::vector<double> grid;
    for (int k = 0; k <= 8; ++k) grid.push_back(5.0 * k);
    const std::size_t n = 20000;
    const auto h = survival_mc(l.sim, l.in.marg, grid, n, 77);
    const auto exact = survival_curve(l.in.Lk, l.in.nu_Ac, grid).p;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double se = std::sqrt(exact[k] * (1 - exact[k]) / double(n));
        EXPECT_LE(std::abs(h.p[k] - exact[k]), 3.5 * se + 1e-12) << "t = " << grid[k];
    }
}

TEST(Simulator, SameSeedSameStreamsAnyThreadCount) {
    Line l;
    const std::vector<double> grid{0.0, 10.0, 20.0};
    setenv("AZRP_THREADS", "1", 1);
    const auto a = survival_mc(l.sim, l.in.marg, grid, 500, 5);
    setenv("AZRP_THREADS", "3", 1);
    const auto b = survival_mc(l.sim, l.in.marg, grid, 500, 5);
    unsetenv("AZRP_THREADS");
    EXPECT_EQ(a.tau, b.tau);
    const auto c = survival_mc(l.sim, l.in.marg, grid, 500, 6);
    EXPECT_NE(a.tau, c.tau);

    Engine r1 = stream(9, 4), r2 = stream(9, 4);
    const auto t1 = run_ctmc(l.sim, {1, 1, 0}, 50.0, r1);
    const auto t2 = run_ctmc(l.sim, {1, 1, 0}, 50.0, r2);
    EXPECT_EQ(t1.times, t2.times);
}

TEST(TailFit, IntervalCoversTrueRate) {
    // exponential data censored at T: the 99% interval should cover in about 99% of repetitions
    int covered = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        Engine rng = stream(31, static_cast<std::uint64_t>(r));
        std::exponential_distribution<double> E(0.2);
        HitStats h;
        h.horizon = 8.0;
        for (int k = 0; k < 2000; ++k) {
            const double x = E(rng);
            h.tau.push_back(x <= h.horizon ? x : std::numeric_limits<double>::infinity());
        }
        fit_tail(h, 2.0);
        covered += h.ci_lo <= 0.2 && 0.2 <= h.ci_hi;
    }
    EXPECT_GE(covered, 190);
}

TEST(Coupling, OrderIsPreserved) {
    const auto k = fixture::drift_3d();
    const auto dom = LatticeBox(3, 1).domain();
    SimModel m(dom, k, RateFunction::linear(), 0.3, Caps{4, std::nullopt}, fixture::at_least(3, 3));
    std::vector<int> eta(dom.size(), 0), zeta(dom.size(), 0);
    eta[5] = 1;
    zeta[5] = 2;
    zeta[static_cast<std::size_t>(m.support_pos[0])] = 1;
    const auto r = coupled_order_run(m, eta, zeta, 200, 1e9, 2000, 3);
    EXPECT_EQ(r.violations, 0u);
    for (std::size_t id = 0; id < r.trajectories; ++id) EXPECT_LE(r.tau_upper[id], r.tau_lower[id]);
    EXPECT_THROW(coupled_order_run(m, zeta, eta, 1, 1.0, 1, 0), std::invalid_argument);
    SimModel capped(dom, k, RateFunction::linear(), 0.3, Caps{4, 4}, fixture::at_least(3, 3));
    EXPECT_THROW(coupled_order_run(capped, eta, zeta, 1, 1.0, 1, 0), std::invalid_argument);
}

TEST(Killing, DiscretizedSurvivalIsMonotone) {
    Line l;
    const auto r = discretized_kill(l.sim, l.in.marg, 8.0, 16, 4000, 12);
    EXPECT_EQ(r.pathwise_violations, 0u);
    for (std::size_t k = 0; k < r.k.size(); ++k) {
        EXPECT_GE(r.excess[k], 0.0);
        if (k) { EXPECT_LE(r.p_k[k], r.p_k[k - 1]); }
    }
    EXPECT_THROW(discretized_kill(l.sim, l.in.marg, 8.0, 6, 10, 1), std::invalid_argument);
}

TEST(Domains, LargerBoxSurvivesLonger) {
    const auto k = fixture::drift_line();
    const auto p = fixture::at_least(1, 2);
    const Caps caps{3, 4};
    SimModel small(LatticeBox(1, 0).domain(), k, RateFunction::linear(), 0.5, caps, p);
    SimModel big(LatticeBox(1, 2).domain(), k, RateFunction::linear(), 0.5, caps, p);
    const auto marg = build_marginal(RateFunction::linear(), 0.5, 3);
    const std::vector<double> grid{1.0, 3.0, 6.0, 10.0};
    const auto d = domain_monotonicity_mc(small, big, marg, grid, 4000, 21);
    EXPECT_GE(d.worst_z, -3.0);
    EXPECT_GT(d.large.back(), d.small.back());
}
