#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "kernel.hpp"
#include "parallel.hpp"
#include "pattern.hpp"
#include "rates.hpp"
#include "rng.hpp"
#include "statespace.hpp"

namespace azrp {

/// Static description of the open process on a domain, shared read-only by all trajectories.
struct SimModel {
    TruncatedKernel kernel;
    std::vector<double> g;          ///< g(0..M)
    double gamma;
    Caps caps;
    Pattern pattern;
    std::vector<int> support_pos;
    std::vector<std::vector<int>> feeds; ///< feeds[j]: sites i with a link i -> j
    std::vector<char> in_S;

    SimModel(const Domain& dom, const Kernel& k, const RateFunction& rates, double fugacity, Caps c, Pattern p)
        : kernel(k, dom), g(rates.tabulate(c.per_site)), gamma(fugacity), caps(c), pattern(std::move(p)),
          support_pos(pattern.locate(dom)), feeds(dom.size()), in_S(dom.size(), 0) {
        if (caps.per_site < 1) throw std::invalid_argument("per-site cap must be positive");
        for (std::size_t i = 0; i < dom.size(); ++i)
            for (const auto& l : kernel.links(i)) feeds[static_cast<std::size_t>(l.to)].push_back(static_cast<int>(i));
        for (int k2 : support_pos) in_S[static_cast<std::size_t>(k2)] = 1;
    }

    std::size_t sites() const { return kernel.size(); }

    bool in_A(std::span<const int> eta) const {
        BaseConfig b(support_pos.size());
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = eta[static_cast<std::size_t>(support_pos[k])];
        return pattern.in_A(b);
    }
};

/// Event-driven simulation of one trajectory. Censored moves carry no rate.
class Simulator {
public:
    Simulator(const SimModel& m, std::vector<int> eta) : m_(&m), eta_(std::move(eta)) {
        if (eta_.size() != m.sites()) throw std::invalid_argument("initial state has the wrong number of sites");
        total_ = 0;
        for (int x : eta_) {
            if (x < 0 || x > m.caps.per_site) throw std::invalid_argument("initial state violates the per-site cap");
            total_ += x;
        }
        if (m.caps.total && total_ > *m.caps.total) throw std::invalid_argument("initial state violates the total cap");
        out_.assign(m.sites(), 0.0);
        birth_.assign(m.sites(), 0.0);
        for (std::size_t i = 0; i < m.sites(); ++i) refresh(i);
    }

    const std::vector<int>& state() const { return eta_; }
    int total() const { return total_; }
    double time() const { return t_; }
    bool in_A() const { return m_->in_A(eta_); }

    double rate() const {
        double r = 0.0;
        for (double x : out_) r += x;
        if (births_open())
            for (double x : birth_) r += x;
        return r;
    }

    struct Event {
        double dt = std::numeric_limits<double>::infinity();
        Move move = Move::create(-1);
        bool none() const { return std::isinf(dt); }
    };

    /// Draws the holding time and next move without applying it.
    Event propose(Engine& rng) const {
        const double R = rate();
        Event e;
        if (!(R > 0.0)) return e;
        if (!std::isfinite(R)) throw std::overflow_error("total rate overflow");
        e.dt = std::exponential_distribution<double>(R)(rng);
        double x = std::uniform_real_distribution<double>(0.0, R)(rng);
        const std::size_t n = m_->sites();
        for (std::size_t i = 0; i < n; ++i) {
            if (x < out_[i]) {
                e.move = pick_out(i, x);
                return e;
            }
            x -= out_[i];
        }
        if (births_open())
            for (std::size_t i = 0; i < n; ++i) {
                if (x < birth_[i] || (birth_[i] > 0.0 && last_birth(i))) {
                    e.move = Move::create(static_cast<int>(i));
                    return e;
                }
                x -= birth_[i];
            }
        // rounding left x just past the end: take the last move with positive rate
        for (std::size_t i = n; i-- > 0;)
            if (out_[i] > 0.0) {
                e.move = pick_out(i, out_[i]);
                return e;
            }
        throw std::logic_error("event selection fell through");
    }

    void apply(const Move& mv, double dt = 0.0) {
        t_ += dt;
        const auto i = static_cast<std::size_t>(mv.i);
        switch (mv.kind) {
        case Move::Kind::exchange: {
            const auto j = static_cast<std::size_t>(mv.j);
            --eta_[i];
            ++eta_[j];
            refresh_around(i);
            refresh_around(j);
            break;
        }
        case Move::Kind::create:
            ++eta_[i];
            ++total_;
            refresh_around(i);
            break;
        case Move::Kind::annihilate:
            --eta_[i];
            --total_;
            refresh_around(i);
            break;
        }
    }

    /// One step; returns false if the state is absorbing for the dynamics.
    bool step(Engine& rng, Move* out = nullptr) {
        const Event e = propose(rng);
        if (e.none()) return false;
        apply(e.move, e.dt);
        if (out) *out = e.move;
        return true;
    }

    bool touches_support(const Move& mv) const {
        return m_->in_S[static_cast<std::size_t>(mv.i)] ||
               (mv.kind == Move::Kind::exchange && m_->in_S[static_cast<std::size_t>(mv.j)]);
    }

private:
    bool births_open() const { return !m_->caps.total || total_ < *m_->caps.total; }

    bool last_birth(std::size_t i) const {
        for (std::size_t k = i + 1; k < birth_.size(); ++k)
            if (birth_[k] > 0.0) return false;
        return true;
    }

    Move pick_out(std::size_t i, double x) const {
        const double gi = m_->g[static_cast<std::size_t>(eta_[i])];
        const int M = m_->caps.per_site;
        for (const auto& l : m_->kernel.links(i)) {
            if (eta_[static_cast<std::size_t>(l.to)] >= M) continue;
            const double r = gi * l.prob;
            if (x < r) return Move::exchange(static_cast<int>(i), l.to);
            x -= r;
        }
        if (m_->kernel.out_diag(i) > 0.0) return Move::annihilate(static_cast<int>(i));
        for (auto it = m_->kernel.links(i).rbegin(); it != m_->kernel.links(i).rend(); ++it)
            if (eta_[static_cast<std::size_t>(it->to)] < M) return Move::exchange(static_cast<int>(i), it->to);
        throw std::logic_error("no admissible move out of a site with positive rate");
    }

    void refresh(std::size_t i) {
        const int M = m_->caps.per_site;
        const int k = eta_[i];
        double r = 0.0;
        if (k > 0) {
            double p = m_->kernel.out_diag(i);
            for (const auto& l : m_->kernel.links(i))
                if (eta_[static_cast<std::size_t>(l.to)] < M) p += l.prob;
            r = m_->g[static_cast<std::size_t>(k)] * p;
        }
        out_[i] = r;
        birth_[i] = k < M ? m_->gamma * m_->kernel.in_diag(i) : 0.0;
    }

    /// A change at j alters the rate out of j and the censoring seen by every site feeding j.
    void refresh_around(std::size_t j) {
        refresh(j);
        for (int i : m_->feeds[j]) refresh(static_cast<std::size_t>(i));
    }

    const SimModel* m_;
    std::vector<int> eta_;
    int total_ = 0;
    double t_ = 0.0;
    std::vector<double> out_, birth_;
};

struct Trajectory {
    std::vector<int> start;
    std::vector<double> times;
    std::vector<Move> moves;
};

/// Records every event up to time T (or until the first entrance to A when stop_at_A).
inline Trajectory run_ctmc(const SimModel& m, std::vector<int> eta0, double T, Engine& rng, bool stop_at_A = false) {
    Trajectory tr;
    tr.start = eta0;
    Simulator sim(m, std::move(eta0));
    if (stop_at_A && sim.in_A()) return tr;
    for (;;) {
        const auto e = sim.propose(rng);
        if (e.none() || sim.time() + e.dt > T) break;
        sim.apply(e.move, e.dt);
        tr.times.push_back(sim.time());
        tr.moves.push_back(e.move);
        if (stop_at_A && sim.touches_support(e.move) && sim.in_A()) break;
    }
    return tr;
}

/// Product-then-reject draw from the truncated product measure.
class InitialSampler {
public:
    InitialSampler(const Marginal& marg, Caps caps) : dist_(marg.probs.begin(), marg.probs.end()), caps_(caps) {
        if (marg.cap() != caps.per_site) throw std::invalid_argument("marginal cap differs from the per-site cap");
    }

    std::vector<int> operator()(Engine& rng, std::size_t sites) const {
        std::vector<int> eta(sites);
        for (;;) {
            int tot = 0;
            for (auto& x : eta) tot += x = dist_(rng);
            if (!caps_.total || tot <= *caps_.total) return eta;
        }
    }

    /// Draws the sites listed in `extra`, keeping `eta` elsewhere, and accepts if the
    /// total cap holds. Combined with a fresh full draw on rejection this is exact.
    bool extend(Engine& rng, std::vector<int>& eta, const std::vector<std::size_t>& extra) const {
        int tot = 0;
        for (auto k : extra) eta[k] = dist_(rng);
        for (int x : eta) tot += x;
        return !caps_.total || tot <= *caps_.total;
    }

private:
    mutable std::discrete_distribution<int> dist_;
    Caps caps_;
};

/// Hitting time of A from eta0, censored at T (returns +inf if not hit by T).
inline double hitting_time(const SimModel& m, std::vector<int> eta0, double T, Engine& rng) {
    Simulator sim(m, std::move(eta0));
    if (sim.in_A()) return 0.0;
    for (;;) {
        const auto e = sim.propose(rng);
        if (e.none() || sim.time() + e.dt > T) return std::numeric_limits<double>::infinity();
        sim.apply(e.move, e.dt);
        if (sim.touches_support(e.move) && sim.in_A()) return sim.time();
    }
}

struct HitStats {
    std::vector<double> tau;   ///< +inf when censored at the horizon
    std::vector<double> t, p, se;
    double horizon = 0.0;
    // exponential tail fit on [fit_from, horizon]
    double fit_from = 0.0;
    double lambda_hat = 0.0, ci_lo = 0.0, ci_hi = 0.0;
    std::size_t fit_events = 0, at_risk = 0;
    double exposure = 0.0;
    std::string warning;
};

/// Maximum likelihood rate of an exponential tail for the excess over t0,
/// right-censored at T, with an exact chi-square interval at level `conf`.
inline void fit_tail(HitStats& h, double t0, double conf = 0.99) {
    h.fit_from = t0;
    h.fit_events = 0;
    h.at_risk = 0;
    h.exposure = 0.0;
    for (double x : h.tau) {
        if (!(x > t0)) continue;
        ++h.at_risk;
        if (x <= h.horizon) ++h.fit_events;
        h.exposure += std::min(x, h.horizon) - t0;
    }
    const double d = static_cast<double>(h.fit_events);
    if (h.fit_events == 0 || !(h.exposure > 0.0)) {
        h.lambda_hat = 0.0;
        h.ci_lo = 0.0;
        h.ci_hi = std::numeric_limits<double>::infinity();
        h.warning = "no events in the fit window";
        return;
    }
    h.lambda_hat = d / h.exposure;
    const double a = (1.0 - conf) / 2.0;
    h.ci_lo = boost::math::quantile(boost::math::chi_squared(2.0 * d), a) / (2.0 * h.exposure);
    h.ci_hi = boost::math::quantile(boost::math::chi_squared(2.0 * d + 2.0), 1.0 - a) / (2.0 * h.exposure);
    if (h.at_risk < 100) {
        // too few trajectories left for the quasi-stationary approximation: widen
        const double w = std::sqrt(100.0 / static_cast<double>(std::max<std::size_t>(h.at_risk, 1)));
        h.ci_lo = std::max(0.0, h.lambda_hat - w * (h.lambda_hat - h.ci_lo));
        h.ci_hi = h.lambda_hat + w * (h.ci_hi - h.lambda_hat);
        h.warning = "fewer than 100 trajectories at risk in the fit window; interval widened";
    }
}

inline void tabulate_survival(HitStats& h, std::span<const double> grid) {
    const double n = static_cast<double>(h.tau.size());
    h.t.assign(grid.begin(), grid.end());
    h.p.clear();
    h.se.clear();
    for (double t : grid) {
        double k = 0.0;
        for (double x : h.tau) k += x > t;
        const double p = k / n;
        h.p.push_back(p);
        h.se.push_back(std::sqrt(p * (1.0 - p) / n));
    }
}

/// P(tau > t) under the initial law nu~ on a grid, from `trajectories` independent runs.
/// Trajectories that start in A count as tau = 0.
inline HitStats survival_mc(const SimModel& m, const Marginal& marg, std::span<const double> grid,
                            std::size_t trajectories, std::uint64_t seed, std::optional<double> fit_from = {}) {
    if (grid.empty()) throw std::invalid_argument("empty time grid");
    const InitialSampler init(marg, m.caps);
    HitStats h;
    h.horizon = *std::max_element(grid.begin(), grid.end());
    h.tau.resize(trajectories);
    parallel_for(trajectories, [&](std::size_t id) {
        Engine rng = stream(seed, id);
        h.tau[id] = hitting_time(m, init(rng, m.sites()), h.horizon, rng);
    });
    tabulate_survival(h, grid);
    fit_tail(h, fit_from.value_or(h.horizon / 4.0));
    return h;
}

struct CoupledReport {
    std::size_t trajectories = 0;
    std::size_t events = 0;
    std::size_t violations = 0;
    long first_violation_trajectory = -1;
    long first_violation_event = -1;
    bool identical = true;       ///< copies agreed at every event
    std::vector<double> tau_lower, tau_upper; ///< hitting times of the lower and upper copies, +inf if not hit
    std::vector<double> end_time;            ///< time of the last event of each trajectory
    double horizon = 0.0;
};

/// Basic coupling of two copies started from eta0 <= zeta0.
///
/// Each site carries one clock of rate max(g(eta_i), g(zeta_i)) for departures and one of
/// rate gamma p*_n(i,i) for births. A departure ring picks its destination from the kernel and
/// a shared uniform; each copy moves if the uniform falls under its own g and the move is
/// admissible. Requires no total cap, since a total cap is not order preserving.
inline CoupledReport coupled_order_run(const SimModel& m, const std::vector<int>& eta0, const std::vector<int>& zeta0,
                                       std::size_t trajectories, double horizon, std::size_t max_events,
                                       std::uint64_t seed) {
    if (m.caps.total) throw std::invalid_argument("the basic coupling needs a per-site cap only");
    const std::size_t n = m.sites();
    for (std::size_t i = 0; i < n; ++i)
        if (eta0[i] > zeta0[i]) throw std::invalid_argument("initial pair is not ordered");
    const int M = m.caps.per_site;
    CoupledReport rep;
    rep.trajectories = trajectories;
    rep.horizon = horizon;
    rep.tau_lower.assign(trajectories, std::numeric_limits<double>::infinity());
    rep.tau_upper.assign(trajectories, std::numeric_limits<double>::infinity());
    rep.end_time.assign(trajectories, 0.0);
    std::vector<std::size_t> ev(trajectories, 0), bad(trajectories, 0);
    std::vector<long> first_bad(trajectories, -1);
    std::vector<char> same(trajectories, 1);
    parallel_for(trajectories, [&](std::size_t id) {
        Engine rng = stream(seed, id);
        std::vector<int> a = eta0, b = zeta0;
        std::vector<double> dep(n), bir(n);
        for (std::size_t i = 0; i < n; ++i) bir[i] = m.gamma * m.kernel.in_diag(i);
        double t = 0.0;
        if (m.in_A(a)) rep.tau_lower[id] = 0.0;
        if (m.in_A(b)) rep.tau_upper[id] = 0.0;
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (std::size_t e = 0; e < max_events; ++e) {
            double R = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dep[i] = std::max(m.g[static_cast<std::size_t>(a[i])], m.g[static_cast<std::size_t>(b[i])]);
                R += dep[i] + bir[i];
            }
            if (!(R > 0.0)) break;
            t += std::exponential_distribution<double>(R)(rng);
            if (t > horizon) break;
            double x = U(rng) * R;
            std::size_t i = 0;
            bool birth = false;
            for (; i < n; ++i) {
                if (x < dep[i]) break;
                x -= dep[i];
                if (x < bir[i]) {
                    birth = true;
                    break;
                }
                x -= bir[i];
            }
            if (i == n) i = n - 1, birth = bir[i] > 0.0;
            if (birth) {
                if (a[i] < M) ++a[i];
                if (b[i] < M) ++b[i];
            } else {
                // destination: a link, or out of the box with probability p_n(i,i)
                double y = U(rng);
                int dest = -1;
                for (const auto& l : m.kernel.links(i)) {
                    if (y < l.prob) {
                        dest = l.to;
                        break;
                    }
                    y -= l.prob;
                }
                if (dest < 0 && m.kernel.out_diag(i) == 0.0) dest = m.kernel.links(i).back().to;
                const double v = U(rng) * dep[i];
                auto move = [&](std::vector<int>& c) {
                    if (!(v < m.g[static_cast<std::size_t>(c[i])])) return;
                    if (dest < 0) {
                        --c[i];
                    } else if (c[static_cast<std::size_t>(dest)] < M) {
                        --c[i];
                        ++c[static_cast<std::size_t>(dest)];
                    }
                };
                move(a);
                move(b);
            }
            ++ev[id];
            bool ordered = true;
            for (std::size_t k = 0; k < n; ++k) ordered = ordered && a[k] <= b[k];
            if (!ordered) {
                ++bad[id];
                if (first_bad[id] < 0) first_bad[id] = static_cast<long>(e);
            }
            if (a != b) same[id] = 0;
            if (std::isinf(rep.tau_lower[id]) && m.in_A(a)) rep.tau_lower[id] = t;
            if (std::isinf(rep.tau_upper[id]) && m.in_A(b)) rep.tau_upper[id] = t;
            rep.end_time[id] = t;
        }
    });
    for (std::size_t id = 0; id < trajectories; ++id) {
        rep.events += ev[id];
        rep.violations += bad[id];
        if (!same[id]) rep.identical = false;
        if (bad[id] && rep.first_violation_trajectory < 0) {
            rep.first_violation_trajectory = static_cast<long>(id);
            rep.first_violation_event = first_bad[id];
        }
    }
    return rep;
}

struct KillReport {
    double t = 0.0;
    std::vector<int> k;            ///< 1, 2, 4, ..., k_max
    std::vector<double> p_k, se_k; ///< P(tau^k > t)
    double p_tau = 0.0, se_tau = 0.0;
    std::vector<double> excess;    ///< P(tau^k > t) - P(tau > t)
    std::size_t pathwise_violations = 0; ///< paths where the indicator chain is not monotone
};

/// Survival checked only at t i / k, i = 1..k, evaluated for k = 1, 2, ..., k_max on shared paths.
inline KillReport discretized_kill(const SimModel& m, const Marginal& marg, double t, int k_max,
                                   std::size_t trajectories, std::uint64_t seed) {
    if (k_max < 1 || (k_max & (k_max - 1))) throw std::invalid_argument("k_max must be a power of two");
    const InitialSampler init(marg, m.caps);
    std::vector<int> levels;
    for (int k = 1; k <= k_max; k *= 2) levels.push_back(k);
    const std::size_t L = levels.size();
    // alive[id][l] for level l, and the continuous-time indicator in slot L
    std::vector<std::vector<char>> alive(trajectories, std::vector<char>(L + 1, 1));
    parallel_for(trajectories, [&](std::size_t id) {
        Engine rng = stream(seed, id);
        Simulator sim(m, init(rng, m.sites()));
        std::vector<char> hit_at(static_cast<std::size_t>(k_max) + 1, 0); // checkpoint index -> in A
        bool touched = sim.in_A();
        int next = 1;
        for (;;) {
            const auto e = sim.propose(rng);
            const double tn = e.none() ? std::numeric_limits<double>::infinity() : sim.time() + e.dt;
            while (next <= k_max && t * next / k_max < tn) {
                hit_at[static_cast<std::size_t>(next)] = sim.in_A();
                ++next;
            }
            if (next > k_max) break;
            sim.apply(e.move, e.dt);
            if (sim.in_A()) touched = true;
        }
        for (std::size_t l = 0; l < L; ++l) {
            const int stride = k_max / levels[l];
            for (int c = stride; c <= k_max; c += stride)
                if (hit_at[static_cast<std::size_t>(c)]) alive[id][l] = 0;
        }
        alive[id][L] = !touched;
    });
    KillReport r;
    r.t = t;
    r.k = levels;
    const double n = static_cast<double>(trajectories);
    auto est = [&](std::size_t slot, double& p, double& se) {
        double c = 0.0;
        for (const auto& a : alive) c += a[slot];
        p = c / n;
        se = std::sqrt(p * (1.0 - p) / n);
    };
    est(L, r.p_tau, r.se_tau);
    r.p_k.resize(L);
    r.se_k.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        est(l, r.p_k[l], r.se_k[l]);
        r.excess.push_back(r.p_k[l] - r.p_tau);
    }
    for (const auto& a : alive) {
        bool ok = true;
        for (std::size_t l = 0; l + 1 <= L; ++l) ok = ok && a[l] >= a[l + 1];
        if (!ok) ++r.pathwise_violations;
    }
    return r;
}

struct DomainComparison {
    std::vector<double> t;
    std::vector<double> small, large;  ///< survival estimates
    std::vector<double> diff, se_diff; ///< large - small with paired standard errors
    double worst_z = 0.0;              ///< min over t of diff / se (or diff when se = 0)
};

/// P^{big}(tau > t) - P^{small}(tau > t) with common random numbers.
///
/// Both runs of trajectory id share the event stream. The initial state on the big domain
/// extends the small one with fresh draws on the extra sites, and falls back to an
/// independent full draw when the total cap rejects the extension, so each marginal law is exact.
inline DomainComparison domain_monotonicity_mc(const SimModel& small, const SimModel& big, const Marginal& marg,
                                               std::span<const double> grid, std::size_t trajectories,
                                               std::uint64_t seed) {
    const Domain& ds = small.kernel.domain();
    const Domain& db = big.kernel.domain();
    std::vector<int> where(ds.size());
    std::vector<char> covered(db.size(), 0);
    for (std::size_t k = 0; k < ds.size(); ++k) {
        where[k] = db.index(ds.site(k));
        if (where[k] < 0) throw std::invalid_argument("small domain is not contained in the big one");
        covered[static_cast<std::size_t>(where[k])] = 1;
    }
    std::vector<std::size_t> extra;
    for (std::size_t k = 0; k < db.size(); ++k)
        if (!covered[k]) extra.push_back(k);
    const InitialSampler init_s(marg, small.caps), init_b(marg, big.caps);
    const double T = *std::max_element(grid.begin(), grid.end());
    std::vector<double> ts(trajectories), tb(trajectories);
    parallel_for(trajectories, [&](std::size_t id) {
        Engine pick = stream(seed, id, 1);
        const auto es = init_s(pick, ds.size());
        std::vector<int> eb(db.size(), 0);
        for (std::size_t k = 0; k < ds.size(); ++k) eb[static_cast<std::size_t>(where[k])] = es[k];
        Engine fresh = stream(seed, id, 2);
        if (!init_b.extend(fresh, eb, extra)) eb = init_b(fresh, db.size());
        Engine r1 = stream(seed, id), r2 = stream(seed, id);
        ts[id] = hitting_time(small, es, T, r1);
        tb[id] = hitting_time(big, eb, T, r2);
    });
    DomainComparison c;
    const double n = static_cast<double>(trajectories);
    c.worst_z = std::numeric_limits<double>::infinity();
    for (double t : grid) {
        double a = 0.0, b = 0.0, d = 0.0, d2 = 0.0;
        for (std::size_t id = 0; id < trajectories; ++id) {
            const double xs = ts[id] > t, xb = tb[id] > t;
            a += xs;
            b += xb;
            d += xb - xs;
            d2 += (xb - xs) * (xb - xs);
        }
        const double mean = d / n;
        const double var = std::max(0.0, d2 / n - mean * mean);
        const double se = std::sqrt(var / (n - 1.0));
        c.t.push_back(t);
        c.small.push_back(a / n);
        c.large.push_back(b / n);
        c.diff.push_back(mean);
        c.se_diff.push_back(se);
        c.worst_z = std::min(c.worst_z, se > 0.0 ? mean / se : (mean < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0));
    }
    return c;
}

} // namespace azrp
