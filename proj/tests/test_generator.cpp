#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace azrp;
using fixture::dense;

namespace {

// a + sign * b
inline Site add_site(const Site& a, const Site& b, int sign) {
    Site r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] + sign * b[k];
    return r;
}

// Rate matrix written straight from the jump rules, without the truncated kernel.
Eigen::MatrixXd rule_matrix(const StateTable& t, const Kernel& k, const RateFunction& g, double gamma, bool dual) {
    const Domain& dom = t.domain();
    const long n = static_cast<long>(t.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    auto p = [&](const Site& a, const Site& b) { return dual ? k(b, a) : k(a, b); };
    const int M = t.caps().per_site;
    for (long s = 0; s < n; ++s) {
        const auto eta = t.config(static_cast<std::size_t>(s));
        auto add = [&](std::vector<int> to, double r) {
            const StateIndex c = t.find_config(to);
            if (c == no_state || r == 0.0) return;
            q(s, static_cast<long>(c)) += r;
            q(s, s) -= r;
        };
        for (std::size_t i = 0; i < dom.size(); ++i) {
            // every site the kernel can reach from i, inside or outside the box
            double out = 0.0, in = 0.0;
            for (const auto& e : k.entries()) {
                const Site fwd = add_site(dom.site(i), e.offset, dual ? -1 : 1);
                const Site back = add_site(dom.site(i), e.offset, dual ? 1 : -1);
                if (!dom.contains(fwd)) out += e.prob;
                if (!dom.contains(back)) in += e.prob;
            }
            if (eta[i] > 0) {
                for (std::size_t j = 0; j < dom.size(); ++j) {
                    if (j == i || eta[j] >= M) continue;
                    auto to = eta;
                    --to[i];
                    ++to[j];
                    add(to, g(eta[i]) * p(dom.site(i), dom.site(j)));
                }
                auto to = eta;
                --to[i];
                add(to, g(eta[i]) * out);
            }
            auto more = eta;
            ++more[i];
            if (more[i] <= M) add(more, gamma * in);
        }
    }
    return q;
}

} // namespace

TEST(Generator, SingleSiteMatrix) {
    // one site, every jump leaves: births at gamma, deaths at g(k) = k, cap 2
    const auto k = fixture::kernel_of(1, {{{1}, 1.0}});
    auto t = enumerate(Domain(1, {{0}}), Caps{2, std::nullopt});
    const double gamma = 0.3;
    const auto L = dense(assemble_open(*t, k, RateFunction::linear(), gamma));
    Eigen::Matrix3d expect;
    expect << -gamma, gamma, 0, 1, -1 - gamma, gamma, 0, 2, -2;
    EXPECT_LT((L - expect).cwiseAbs().maxCoeff(), 1e-15);
}

class RuleOracle : public ::testing::TestWithParam<int> {};

TEST_P(RuleOracle, AssemblyMatchesRules) {
    const int dim = GetParam();
    const auto k = dim == 1 ? fixture::drift_line()
                            : fixture::kernel_of(2, {{{1, 0}, 0.5}, {{0, 1}, 0.2}, {{-1, -1}, 0.3}});
    // N <= M: a binding per-site cap would break invariance
    auto t = enumerate(LatticeBox(dim, 1).domain(), Caps{2, 2});
    const auto g = RateFunction::from_table({0.0, 1.0, 1.7});
    const double gamma = 0.6;
    const auto L = dense(assemble_open(*t, k, g, gamma));
    const auto Ls = dense(assemble_dual(*t, k, g, gamma));
    EXPECT_LT((L - rule_matrix(*t, k, g, gamma, false)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((Ls - rule_matrix(*t, k, g, gamma, true)).cwiseAbs().maxCoeff(), 1e-15);

    // dense versions of invariance and adjointness
    const auto nu = measure_vector(*t, build_marginal(g, gamma, 2));
    Eigen::VectorXd w(static_cast<long>(t->size()));
    for (std::size_t s = 0; s < t->size(); ++s) w(static_cast<long>(s)) = nu[s];
    EXPECT_LT((w.transpose() * L).cwiseAbs().sum(), 1e-14);
    const Eigen::MatrixXd D = w.asDiagonal();
    EXPECT_LT((D * Ls - L.transpose() * D).cwiseAbs().maxCoeff(), 1e-15);
}

INSTANTIATE_TEST_SUITE_P(Dims, RuleOracle, ::testing::Values(1, 2));

TEST(Generator, ExactIdentitiesOnDesk) {
    fixture::Instance in(fixture::drift_3d(), 0.3, fixture::at_least(3, 3), 1, Caps{6, 3});
    EXPECT_LT(max_abs_row_sum(in.L), 1e-12);
    EXPECT_LT(invariance_residual(in.L, in.nu), 1e-12);
    EXPECT_LT(invariance_residual(in.Ls, in.nu), 1e-12);
    EXPECT_LT(adjointness_residual(in.L, in.Ls, in.nu), 1e-13);
    EXPECT_TRUE(is_irreducible(in.Lk));
}

TEST(Generator, ConservativeKeepsParticleNumber) {
    const auto k = fixture::drift_line();
    auto t = enumerate(LatticeBox(1, 2).domain(), Caps{3, 4});
    const auto L = assemble_conservative(*t, k, RateFunction::linear());
    for (std::size_t s = 0; s < L.size(); ++s)
        for (std::size_t e = L.row_ptr[s]; e < L.row_ptr[s + 1]; ++e) EXPECT_EQ(t->total(L.col[e]), t->total(s));
}

TEST(Generator, IntegrationByParts) {
    auto t = enumerate(LatticeBox(1, 1).domain(), Caps{3, 4});
    const double gamma = 0.4;
    const auto g = RateFunction::linear();
    const auto nu = measure_vector(*t, build_marginal(g, gamma, 3));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int rep = 0; rep < 20; ++rep) {
        const double a = U(rng), b = U(rng), c = U(rng);
        ConfigFunction phi = [=](const std::vector<int>& e) { return a * e[0] + b * e[1] * e[1] + c * e[2]; };
        ConfigFunction f = [&](const std::vector<int>& e) {
            if (t->find_config(e) == no_state) return 0.0;
            return std::exp(0.3 * e[0] - 0.2 * e[2]);
        };
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_LT(ibp_check(*t, g, gamma, nu, phi, f, i, j).residual(), 1e-14);
    }
    ConfigFunction bad = [](const std::vector<int>&) { return 1.0; };
    ConfigFunction phi = [](const std::vector<int>& e) { return double(e[0]); };
    EXPECT_THROW(ibp_check(*t, g, gamma, nu, phi, bad, 0, 1), std::invalid_argument);
}

TEST(Generator, KillingRemovesA) {
    fixture::Instance in(fixture::drift_line(), 0.3, fixture::at_least(1, 2), 1, Caps{3, 3});
    for (StateIndex s : in.Lk.states) EXPECT_FALSE(in.in_A[s]);
    // the killed rows lose exactly the rate into A
    for (std::size_t r = 0; r < in.Lk.size(); ++r) EXPECT_NEAR(-in.Lk.row_sum(r), in.Lk.loss[r], 1e-14);
}
