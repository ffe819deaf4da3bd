#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace azrp {

/// Occupancies on the support S, in the order of PatternSpec::support.
using BaseConfig = std::vector<int>;

inline std::string to_string(const BaseConfig& b, char open, char close) {
    std::ostringstream os;
    os << open;
    for (std::size_t k = 0; k < b.size(); ++k) os << (k ? "," : "") << b[k];
    os << close;
    return os.str();
}

/// User description of an increasing event A with support S.
struct PatternSpec {
    enum class Kind { threshold, complement, predicate };

    std::vector<Site> support;
    Kind kind = Kind::threshold;
    int threshold = 0;                       ///< A = {sum over S of eta > threshold}
    std::vector<BaseConfig> complement;      ///< explicit N^S \ A
    std::function<bool(const BaseConfig&)> in_A; ///< arbitrary rule, certified by probing
    int probe = 16;                          ///< probing radius for the predicate form

    static PatternSpec at_least(std::vector<Site> support, int count) {
        PatternSpec s;
        s.support = std::move(support);
        s.kind = Kind::threshold;
        s.threshold = count - 1;
        return s;
    }
};

/// A certified pattern: support S and the cylinder list Theta = N^S \ A.
class Pattern {
public:
    Pattern(std::vector<Site> support, std::vector<BaseConfig> cylinders)
        : support_(std::move(support)), cylinders_(std::move(cylinders)) {
        std::sort(cylinders_.begin(), cylinders_.end(), graded_less);
        for (std::size_t k = 0; k < cylinders_.size(); ++k) lookup_.emplace(cylinders_[k], static_cast<int>(k));
    }

    const std::vector<Site>& support() const { return support_; }
    const std::vector<BaseConfig>& cylinders() const { return cylinders_; }

    bool in_A(const BaseConfig& b) const { return lookup_.find(b) == lookup_.end(); }

    /// Position of b in the cylinder list, or -1 if b is in A.
    int cylinder(const BaseConfig& b) const {
        auto it = lookup_.find(b);
        return it == lookup_.end() ? -1 : it->second;
    }

    /// Positions of the support sites inside dom.
    std::vector<int> locate(const Domain& dom) const {
        std::vector<int> pos;
        for (const auto& s : support_) {
            const int k = dom.index(s);
            if (k < 0) throw std::invalid_argument("pattern support site " + to_string(s) + " outside the domain");
            pos.push_back(k);
        }
        return pos;
    }

    static bool graded_less(const BaseConfig& a, const BaseConfig& b) {
        const int sa = std::accumulate(a.begin(), a.end(), 0);
        const int sb = std::accumulate(b.begin(), b.end(), 0);
        if (sa != sb) return sa < sb;
        return a > b;
    }

private:
    std::vector<Site> support_;
    std::vector<BaseConfig> cylinders_;
    std::map<BaseConfig, int> lookup_;
};

struct CFReport {
    struct Failure {
        int clause; ///< 1, 2 or 3
        std::string what;
        BaseConfig witness;
    };
    std::vector<Failure> failures;
    std::optional<Pattern> pattern;
    bool ok() const { return pattern.has_value(); }
};

namespace detail {

inline void for_each_in_cube(std::size_t dim, int bound, const std::function<void(const BaseConfig&)>& f) {
    BaseConfig b(dim, 0);
    for (;;) {
        f(b);
        std::size_t k = 0;
        while (k < dim && b[k] == bound) b[k++] = 0;
        if (k == dim) return;
        ++b[k];
    }
}

/// Configurations with total at most L, in graded order.
inline std::vector<BaseConfig> simplex(std::size_t dim, int L) {
    std::vector<BaseConfig> out;
    if (L < 0) return out;
    for_each_in_cube(dim, L, [&](const BaseConfig& b) {
        if (std::accumulate(b.begin(), b.end(), 0) <= L) out.push_back(b);
    });
    return out;
}

} // namespace detail

/// Certifies the connectedness/finiteness conditions and emits the cylinders.
inline CFReport check_pattern_cf(const PatternSpec& spec) {
    CFReport rep;
    const std::size_t s = spec.support.size();
    if (s == 0) {
        rep.failures.push_back({1, "empty support", {}});
        return rep;
    }
    {
        std::set<Site> uniq(spec.support.begin(), spec.support.end());
        if (uniq.size() != s) rep.failures.push_back({1, "repeated support site", {}});
    }
    const BaseConfig zero(s, 0);

    std::vector<BaseConfig> comp;
    switch (spec.kind) {
    case PatternSpec::Kind::threshold:
        if (spec.threshold < 0) {
            rep.failures.push_back({2, "A contains the empty configuration", zero});
            return rep;
        }
        comp = detail::simplex(s, spec.threshold);
        break;
    case PatternSpec::Kind::complement: {
        std::set<BaseConfig> seen;
        for (const auto& b : spec.complement) {
            if (b.size() != s) {
                rep.failures.push_back({1, "base configuration of wrong size", b});
                return rep;
            }
            if (std::any_of(b.begin(), b.end(), [](int v) { return v < 0; })) {
                rep.failures.push_back({1, "negative occupancy in base configuration", b});
                return rep;
            }
            if (seen.insert(b).second) comp.push_back(b);
        }
        break;
    }
    case PatternSpec::Kind::predicate: {
        if (!spec.in_A) throw std::invalid_argument("predicate pattern without a rule");
        const int B = spec.probe;
        bool any_A = false;
        std::optional<BaseConfig> escape, not_up;
        detail::for_each_in_cube(s, B, [&](const BaseConfig& b) {
            const bool a = spec.in_A(b);
            any_A = any_A || a;
            if (!a) {
                if (!escape && std::any_of(b.begin(), b.end(), [&](int v) { return v == B; })) escape = b;
                comp.push_back(b);
            } else if (!not_up) {
                for (std::size_t k = 0; k < s; ++k) {
                    if (b[k] == B) continue;
                    BaseConfig c = b;
                    ++c[k];
                    if (!spec.in_A(c)) {
                        not_up = b;
                        break;
                    }
                }
            }
        });
        if (!any_A) rep.failures.push_back({1, "A is empty within the probe range", {}});
        if (spec.in_A(zero)) rep.failures.push_back({2, "A contains the empty configuration", zero});
        if (not_up) rep.failures.push_back({2, "A is not increasing", *not_up});
        if (escape)
            rep.failures.push_back({3, "complement of A reaches the probe boundary (not finite)", *escape});
        if (!rep.failures.empty()) return rep;
        break;
    }
    }

    std::set<BaseConfig> cset(comp.begin(), comp.end());
    if (!cset.count(zero)) {
        rep.failures.push_back({2, "A contains the empty configuration", zero});
        return rep;
    }
    for (const auto& b : comp) {
        for (std::size_t k = 0; k < s; ++k) {
            if (b[k] == 0) continue;
            BaseConfig c = b;
            --c[k];
            if (!cset.count(c)) {
                rep.failures.push_back({2, "A is not increasing (removing a particle enters A)", c});
                return rep;
            }
        }
    }
    // Connectivity from 0_S by single additions inside the complement.
    std::set<BaseConfig> reached{zero};
    std::queue<BaseConfig> q;
    q.push(zero);
    while (!q.empty()) {
        BaseConfig b = q.front();
        q.pop();
        for (std::size_t k = 0; k < s; ++k) {
            ++b[k];
            if (cset.count(b) && reached.insert(b).second) q.push(b);
            --b[k];
        }
    }
    for (const auto& b : comp) {
        if (!reached.count(b)) {
            rep.failures.push_back({3, "complement not connected from the empty configuration", b});
            return rep;
        }
    }
    rep.pattern.emplace(spec.support, comp);
    return rep;
}

} // namespace azrp
