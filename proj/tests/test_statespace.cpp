#include <gtest/gtest.h>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/binomial.hpp>

#include "helpers.hpp"

using namespace azrp;

namespace {
double stars_and_bars(int sites, int max_total) {
    double c = 0.0;
    for (int k = 0; k <= max_total; ++k)
        c += boost::math::binomial_coefficient<double>(static_cast<unsigned>(k + sites - 1), static_cast<unsigned>(sites - 1));
    return c;
}
} // namespace

TEST(Enumerate, Counts) {
    EXPECT_EQ(enumerate(Domain(1, {{0}, {1}}), Caps{1, std::nullopt})->size(), 4u);
    // the total cap N = M = 3 makes the per-site cap slack, so this is pure stars and bars
    auto t = enumerate(LatticeBox(3, 1).domain(), Caps{3, 3});
    EXPECT_EQ(t->size(), 4060u);
    EXPECT_EQ(static_cast<double>(t->size()), stars_and_bars(27, 3));
    EXPECT_EQ(enumerate(Domain(1, {}), Caps{3, std::nullopt})->size(), 1u);
    EXPECT_EQ(enumerate(LatticeBox(1, 1).domain(), Caps{2, std::nullopt})->size(), 27u);
}

TEST(Enumerate, ClosedFormCountMatches) {
    for (int M : {1, 2, 5})
        for (int N : {0, 3, 7}) {
            auto t = enumerate(LatticeBox(1, 2).domain(), Caps{M, N});
            EXPECT_EQ(static_cast<double>(t->size()), StateTable::count_states(5, M, N)) << M << " " << N;
        }
}

TEST(Enumerate, BudgetError) {
    try {
        enumerate(LatticeBox(3, 1).domain(), Caps{6, 6}, 1000);
        FAIL() << "expected a budget error";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("state count"), std::string::npos);
    }
}

TEST(Enumerate, GradedOrderAndRoundTrip) {
    auto t = enumerate(LatticeBox(1, 1).domain(), Caps{2, 4});
    EXPECT_EQ(t->total(0), 0);
    for (std::size_t s = 0; s < t->size(); ++s) {
        EXPECT_EQ(t->find_config(t->config(s)), s);
        if (s) { EXPECT_LE(t->total(s - 1), t->total(s)); }
    }
    auto again = enumerate(LatticeBox(1, 1).domain(), Caps{2, 4});
    for (std::size_t s = 0; s < t->size(); ++s) EXPECT_EQ(t->config(s), again->config(s));
    EXPECT_EQ(t->find_config(std::vector<int>{3, 0, 0}), no_state);
    EXPECT_EQ(t->find_config(std::vector<int>{2, 2, 1}), no_state);
}

TEST(Moves, AdmissibilityRules) {
    auto t = enumerate(Domain(1, {{0}, {1}}), Caps{2, 3});
    const StateIndex s = t->find_config(std::vector<int>{1, 2});
    EXPECT_EQ(apply_move(*t, s, Move::create(1)).reason, Inadmissible::site_cap);
    EXPECT_EQ(apply_move(*t, s, Move::create(0)).reason, Inadmissible::total_cap);
    EXPECT_EQ(apply_move(*t, s, Move::exchange(0, 1)).reason, Inadmissible::site_cap);
    EXPECT_EQ(apply_move(*t, t->find_config(std::vector<int>{0, 1}), Move::annihilate(0)).reason, Inadmissible::empty_site);
    // exchange is an involution whenever both directions are admissible
    for (std::size_t a = 0; a < t->size(); ++a) {
        const auto r = apply_move(*t, static_cast<StateIndex>(a), Move::exchange(0, 1));
        if (!r.ok()) continue;
        const auto back = apply_move(*t, r.target, Move::exchange(1, 0));
        ASSERT_TRUE(back.ok());
        EXPECT_EQ(back.target, a);
    }
}

TEST(Measure, PoissonProductAndTail) {
    const double gamma = 0.3;
    const auto m = build_marginal(RateFunction::linear(), gamma, 12);
    auto single = enumerate(Domain(1, {{0}}), Caps{12, std::nullopt});
    const auto nu1 = measure_vector(*single, m);
    boost::math::poisson_distribution<> X(gamma);
    const double kept = boost::math::cdf(X, 12);
    for (std::size_t s = 0; s < single->size(); ++s)
        EXPECT_NEAR(nu1[s], boost::math::pdf(X, single->occupancy(s, 0)) / kept, 1e-12);
    EXPECT_NEAR(nu1.sum(), 1.0, 1e-15);

    auto t = enumerate(LatticeBox(3, 1).domain(), Caps{4, 4});
    const auto nu = measure_vector(*t, build_marginal(RateFunction::linear(), gamma, 4));
    EXPECT_NEAR(nu.sum(), 1.0, 1e-14);
    for (double w : nu.w) EXPECT_GE(w, 0.0);
    EXPECT_NEAR(tail_mass(27, RateFunction::linear(), gamma, 6), 1.0 - std::pow(boost::math::cdf(X, 6), 27), 1e-15);
}

TEST(Indicator, IsAnUpSet) {
    const auto p = fixture::at_least(1, 2);
    auto t = enumerate(LatticeBox(1, 1).domain(), Caps{3, 5});
    const auto in = pattern_indicator(*t, p);
    EXPECT_FALSE(in[0]);
    EXPECT_TRUE(in[t->find_config(std::vector<int>{0, 2, 0})]);
    for (std::size_t s = 0; s < t->size(); ++s)
        for (std::size_t i = 0; i < t->sites(); ++i) {
            const StateIndex up = t->plus(s, i);
            if (up != no_state && in[s]) { EXPECT_TRUE(in[up]); }
        }
}
