#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lattice.hpp"
#include "pattern.hpp"
#include "rates.hpp"

namespace azrp {

using StateIndex = std::uint32_t;
inline constexpr StateIndex no_state = std::numeric_limits<StateIndex>::max();

struct Caps {
    int per_site = 0;
    std::optional<int> total;
};

/// Truncated configuration space {eta : eta_i <= M, sum eta <= N} on a domain.
///
/// States are ordered by total particle number, then with particles on
/// earlier sites first. The empty configuration has index 0.
class StateTable {
public:
    StateTable(Domain dom, Caps caps, std::size_t budget = 5'000'000) : domain_(std::move(dom)), caps_(caps) {
        if (caps.per_site < 0) throw std::invalid_argument("per-site cap must be non-negative");
        if (caps.per_site > 255) throw std::invalid_argument("per-site cap above 255 is not supported");
        if (caps.total && *caps.total < 0) throw std::invalid_argument("total cap must be non-negative");
        sites_ = domain_.size();
        const int nmax = max_total();
        const double count = count_states(sites_, caps.per_site, nmax);
        if (count > static_cast<double>(budget))
            throw std::length_error("state count " + std::to_string(static_cast<long double>(count)) +
                                    " exceeds budget " + std::to_string(budget));
        states_ = static_cast<std::size_t>(count);
        occ_.reserve(states_ * sites_);
        grade_start_.push_back(0);
        std::vector<std::uint8_t> buf(sites_);
        for (int k = 0; k <= nmax; ++k) {
            fill(buf, 0, k);
            grade_start_.push_back(static_cast<StateIndex>(occ_.size() / std::max<std::size_t>(sites_, 1)));
        }
        if (sites_ == 0) {
            states_ = 1;
            grade_start_.assign({0, 1});
        }
        index_.reserve(states_ * 2);
        for (std::size_t s = 0; s < states_; ++s) index_.emplace(key(s), static_cast<StateIndex>(s));
    }

    StateTable(const StateTable&) = delete;
    StateTable& operator=(const StateTable&) = delete;
    StateTable(StateTable&&) = delete;

    const Domain& domain() const { return domain_; }
    const Caps& caps() const { return caps_; }
    std::size_t size() const { return states_; }
    std::size_t sites() const { return sites_; }
    int max_total() const {
        const long full = static_cast<long>(caps_.per_site) * static_cast<long>(domain_.size());
        return static_cast<int>(caps_.total ? std::min<long>(*caps_.total, full) : full);
    }

    std::span<const std::uint8_t> state(std::size_t s) const { return {occ_.data() + s * sites_, sites_}; }
    int occupancy(std::size_t s, std::size_t i) const { return occ_[s * sites_ + i]; }
    int total(std::size_t s) const {
        int t = 0;
        for (auto v : state(s)) t += v;
        return t;
    }

    /// Range [begin, end) of states with exactly k particles.
    std::pair<StateIndex, StateIndex> grade(int k) const { return {grade_start_[k], grade_start_[k + 1]}; }

    StateIndex find(std::span<const std::uint8_t> eta) const {
        auto it = index_.find(std::string_view(reinterpret_cast<const char*>(eta.data()), eta.size()));
        return it == index_.end() ? no_state : it->second;
    }

    /// Index of eta given as ints; no_state when eta violates a cap.
    template <class Config>
    StateIndex find_config(const Config& eta) const {
        std::vector<std::uint8_t> b(sites_);
        int t = 0;
        for (std::size_t i = 0; i < sites_; ++i) {
            if (eta[i] < 0 || eta[i] > caps_.per_site) return no_state;
            b[i] = static_cast<std::uint8_t>(eta[i]);
            t += eta[i];
        }
        if (caps_.total && t > *caps_.total) return no_state;
        return find(b);
    }

    std::vector<int> config(std::size_t s) const {
        auto v = state(s);
        return {v.begin(), v.end()};
    }

    /// Index of A_i^+ eta and A_i^- eta, or no_state. Built on first use.
    StateIndex plus(std::size_t s, std::size_t i) const {
        ensure_neighbours();
        return plus_[s * sites_ + i];
    }
    StateIndex minus(std::size_t s, std::size_t i) const {
        ensure_neighbours();
        return minus_[s * sites_ + i];
    }

    /// Number of configurations with per-site cap M and total at most N on `sites` sites.
    static double count_states(std::size_t sites, int M, int N) {
        std::vector<double> c(N + 1, 0.0);
        c[0] = 1.0;
        for (std::size_t s = 0; s < sites; ++s) {
            std::vector<double> nc(N + 1, 0.0);
            for (int t = 0; t <= N; ++t)
                for (int v = 0; v <= M && v <= t; ++v) nc[t] += c[t - v];
            c.swap(nc);
        }
        double total = 0.0;
        for (double x : c) total += x;
        return total;
    }

private:
    std::string_view key(std::size_t s) const {
        return {reinterpret_cast<const char*>(occ_.data() + s * sites_), sites_};
    }

    void fill(std::vector<std::uint8_t>& buf, std::size_t pos, int left) {
        if (pos + 1 >= sites_) {
            if (sites_ == 0) return;
            if (left > caps_.per_site) return;
            buf[pos] = static_cast<std::uint8_t>(left);
            occ_.insert(occ_.end(), buf.begin(), buf.end());
            return;
        }
        const long room = static_cast<long>(caps_.per_site) * static_cast<long>(sites_ - pos - 1);
        for (int v = std::min(left, caps_.per_site); v >= 0 && left - v <= room; --v) {
            buf[pos] = static_cast<std::uint8_t>(v);
            fill(buf, pos + 1, left - v);
        }
    }

    void ensure_neighbours() const {
        if (!plus_.empty() || states_ * sites_ == 0) return;
        plus_.assign(states_ * sites_, no_state);
        minus_.assign(states_ * sites_, no_state);
        std::vector<std::uint8_t> b(sites_);
        for (std::size_t s = 0; s < states_; ++s) {
            auto v = state(s);
            std::copy(v.begin(), v.end(), b.begin());
            for (std::size_t i = 0; i < sites_; ++i) {
                ++b[i];
                plus_[s * sites_ + i] = find(b);
                --b[i];
                if (b[i] > 0) {
                    --b[i];
                    minus_[s * sites_ + i] = find(b);
                    ++b[i];
                }
            }
        }
    }

    Domain domain_;
    Caps caps_;
    std::size_t sites_ = 0;
    std::size_t states_ = 0;
    std::vector<std::uint8_t> occ_;
    std::vector<StateIndex> grade_start_;
    std::unordered_map<std::string_view, StateIndex> index_;
    mutable std::vector<StateIndex> plus_;
    mutable std::vector<StateIndex> minus_;
};

inline std::unique_ptr<StateTable> enumerate(const Domain& dom, Caps caps, std::size_t budget = 5'000'000) {
    return std::make_unique<StateTable>(dom, caps, budget);
}

struct Move {
    enum class Kind { exchange, create, annihilate };
    Kind kind;
    int i;
    int j = -1; ///< destination for exchanges

    static Move exchange(int from, int to) { return {Kind::exchange, from, to}; }
    static Move create(int at) { return {Kind::create, at}; }
    static Move annihilate(int at) { return {Kind::annihilate, at}; }
};

enum class Inadmissible { none, empty_site, site_cap, total_cap, bad_site };

inline const char* describe(Inadmissible r) {
    switch (r) {
    case Inadmissible::none: return "admissible";
    case Inadmissible::empty_site: return "no particle at the source site";
    case Inadmissible::site_cap: return "per-site cap reached";
    case Inadmissible::total_cap: return "total cap reached";
    case Inadmissible::bad_site: return "site outside the domain";
    }
    return "";
}

struct MoveResult {
    StateIndex target = no_state;
    Inadmissible reason = Inadmissible::none;
    bool ok() const { return reason == Inadmissible::none; }
};

/// Applies T^i_j, A_i^+ or A_i^- to state s.
inline MoveResult apply_move(const StateTable& t, StateIndex s, Move m) {
    const int n = static_cast<int>(t.sites());
    auto bad = [n](int k) { return k < 0 || k >= n; };
    if (bad(m.i) || (m.kind == Move::Kind::exchange && bad(m.j))) return {no_state, Inadmissible::bad_site};
    std::vector<std::uint8_t> b(t.state(s).begin(), t.state(s).end());
    const int M = t.caps().per_site;
    switch (m.kind) {
    case Move::Kind::exchange:
        if (b[m.i] == 0) return {no_state, Inadmissible::empty_site};
        if (m.i == m.j) return {s, Inadmissible::none};
        if (b[m.j] >= M) return {no_state, Inadmissible::site_cap};
        --b[m.i];
        ++b[m.j];
        break;
    case Move::Kind::create:
        if (b[m.i] >= M) return {no_state, Inadmissible::site_cap};
        if (t.caps().total && t.total(s) >= *t.caps().total) return {no_state, Inadmissible::total_cap};
        ++b[m.i];
        break;
    case Move::Kind::annihilate:
        if (b[m.i] == 0) return {no_state, Inadmissible::empty_site};
        --b[m.i];
        break;
    }
    return {t.find(b), Inadmissible::none};
}

/// Weights of a measure (or a density against one) over the states of a table.
struct MeasureVector {
    std::vector<double> w;

    std::size_t size() const { return w.size(); }
    double operator[](std::size_t s) const { return w[s]; }
    double sum() const {
        detail::CompensatedSum a;
        for (double x : w) a.add(x);
        return a.value();
    }
    template <class F>
    double integrate(const F& f) const {
        double a = 0.0;
        for (std::size_t s = 0; s < w.size(); ++s) a += w[s] * f[s];
        return a;
    }
};

/// The product of the site marginals, renormalized over the table.
inline MeasureVector measure_vector(const StateTable& t, const Marginal& m) {
    if (m.cap() < t.caps().per_site) throw std::invalid_argument("marginal cap below the table cap");
    MeasureVector nu;
    nu.w.resize(t.size());
    detail::CompensatedSum z;
    for (std::size_t s = 0; s < t.size(); ++s) {
        double p = 1.0;
        for (auto v : t.state(s)) p *= m.probs[v];
        nu.w[s] = p;
        z.add(p);
    }
    for (double& x : nu.w) x /= z.value();
    return nu;
}

/// nu(K_M'^c) for the untruncated product over `sites` sites: the chance that
/// some site holds more than M' particles.
inline double tail_mass(std::size_t sites, const RateFunction& g, double gamma, int mprime) {
    if (gamma == 0.0) return 0.0;
    const auto s = detail::series(g, gamma, mprime, 1000000);
    const double site_tail = s.rest / s.z;
    return -std::expm1(static_cast<double>(sites) * std::log1p(-site_tail));
}

inline double tail_mass(const StateTable& t, const RateFunction& g, double gamma, int mprime) {
    return tail_mass(t.sites(), g, gamma, mprime);
}

/// Restriction of a table state to the pattern support.
inline BaseConfig restrict_to(const StateTable& t, std::size_t s, const std::vector<int>& pos) {
    BaseConfig b(pos.size());
    for (std::size_t k = 0; k < pos.size(); ++k) b[k] = t.occupancy(s, pos[k]);
    return b;
}

/// 1 on states in A.
inline std::vector<char> pattern_indicator(const StateTable& t, const Pattern& p) {
    const auto pos = p.locate(t.domain());
    std::vector<char> in(t.size());
    for (std::size_t s = 0; s < t.size(); ++s) in[s] = p.in_A(restrict_to(t, s, pos)) ? 1 : 0;
    return in;
}

} // namespace azrp
