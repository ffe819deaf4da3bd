#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace azrp {

struct KernelEntry {
    Site offset;
    double prob;
};

/// Translation-invariant jump law p(i,j) = p(0, j-i).
class Kernel {
public:
    Kernel() = default;
    Kernel(int dim, std::vector<KernelEntry> entries, bool reversed = false)
        : dim_(dim), entries_(std::move(entries)), reversed_(reversed) {
        drift_.assign(dim_, 0.0);
        for (const auto& e : entries_) {
            range_ = std::max(range_, max_norm(e.offset));
            for (int k = 0; k < dim_; ++k) drift_[k] += e.offset[k] * e.prob;
        }
    }

    int dim() const { return dim_; }
    int range() const { return range_; }
    bool reversed() const { return reversed_; }
    const std::vector<KernelEntry>& entries() const { return entries_; }
    const std::vector<double>& drift() const { return drift_; }

    double operator()(const Site& from, const Site& to) const {
        const Site off = sub(to, from);
        for (const auto& e : entries_)
            if (e.offset == off) return e.prob;
        return 0.0;
    }

    /// p*(i,j) = p(j,i).
    Kernel reversed_kernel() const {
        std::vector<KernelEntry> r;
        for (const auto& e : entries_) {
            Site o(e.offset.size());
            for (std::size_t k = 0; k < o.size(); ++k) o[k] = -e.offset[k];
            r.push_back({o, e.prob});
        }
        return Kernel(dim_, std::move(r), !reversed_);
    }

private:
    int dim_ = 0;
    int range_ = 0;
    std::vector<KernelEntry> entries_;
    std::vector<double> drift_;
    bool reversed_ = false;
};

struct KernelReport {
    std::optional<Kernel> kernel;
    std::vector<std::string> violations;
    /// Whether the symmetrized walk reaches every site of Z^d.
    bool irreducible = false;
    std::vector<std::string> notes;
    bool ok() const { return kernel.has_value(); }
};

namespace detail {

inline std::int64_t det_int(std::vector<std::vector<std::int64_t>> m) {
    // Bareiss fraction-free elimination.
    const std::size_t n = m.size();
    std::int64_t sign = 1, prev = 1;
    for (std::size_t k = 0; k < n; ++k) {
        if (m[k][k] == 0) {
            std::size_t r = k + 1;
            while (r < n && m[r][k] == 0) ++r;
            if (r == n) return 0;
            std::swap(m[k], m[r]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i)
            for (std::size_t j = k + 1; j < n; ++j)
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
        prev = m[k][k];
    }
    return sign * m[n - 1][n - 1];
}

/// The offsets generate Z^d as a group iff the gcd of all d x d minors is 1.
inline bool generates_lattice(const std::vector<Site>& offsets, int dim) {
    const std::size_t m = offsets.size();
    if (m < static_cast<std::size_t>(dim)) return false;
    std::int64_t g = 0;
    std::vector<std::size_t> pick(dim);
    std::iota(pick.begin(), pick.end(), 0);
    for (;;) {
        std::vector<std::vector<std::int64_t>> mat(dim, std::vector<std::int64_t>(dim));
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) mat[r][c] = offsets[pick[r]][c];
        g = std::gcd(g, std::llabs(det_int(mat)));
        if (g == 1) return true;
        int k = dim - 1;
        while (k >= 0 && pick[k] == m - dim + k) --k;
        if (k < 0) break;
        ++pick[k];
        for (int j = k + 1; j < dim; ++j) pick[j] = pick[j - 1] + 1;
    }
    return g == 1;
}

} // namespace detail

/// Checks the standing hypotheses on p and derives R and the drift.
///
/// Reducibility of the symmetrized walk on Z^d is a violation only when
/// require_irreducible is set; otherwise it is recorded as a note. A finite
/// box only needs the killed chain to be irreducible, which the generator
/// module checks directly.
inline KernelReport validate_kernel(const std::map<Site, double>& spec, int dim,
                                    bool require_irreducible = false) {
    KernelReport rep;
    if (dim <= 0) {
        rep.violations.push_back("dimension must be positive");
        return rep;
    }
    std::vector<KernelEntry> entries;
    // Neumaier summation so that e.g. 0.7 + 0.3 is judged without drift.
    double sum = 0.0, comp = 0.0;
    for (const auto& [off, p] : spec) {
        if (static_cast<int>(off.size()) != dim) {
            rep.violations.push_back("offset " + to_string(off) + " has wrong dimension");
            continue;
        }
        if (!(p >= 0.0) || !std::isfinite(p)) {
            rep.violations.push_back("negative probability at offset " + to_string(off));
            continue;
        }
        if (max_norm(off) == 0 && p > 0.0) {
            rep.violations.push_back("self-jump p(i,i) > 0");
            continue;
        }
        const double t = sum + p;
        comp += std::abs(sum) >= std::abs(p) ? (sum - t) + p : (p - t) + sum;
        sum = t;
        if (p > 0.0) entries.push_back({off, p});
    }
    if (std::abs(sum + comp - 1.0) > 1e-12)
        rep.violations.push_back("probabilities sum to " + std::to_string(sum + comp) + ", not 1");
    if (!rep.violations.empty()) return rep;

    std::vector<Site> support;
    for (const auto& e : entries) support.push_back(e.offset);
    rep.irreducible = detail::generates_lattice(support, dim);
    if (!rep.irreducible) {
        const std::string msg = "symmetrized kernel is reducible (offsets do not generate Z^d)";
        (require_irreducible ? rep.violations : rep.notes).push_back(msg);
    }

    Kernel k(dim, entries);
    bool zero = true;
    for (double v : k.drift())
        if (std::abs(v) > 1e-14) zero = false;
    if (zero) rep.violations.push_back("zero drift");

    if (rep.violations.empty()) rep.kernel = std::move(k);
    return rep;
}

/// p restricted to a finite domain U, escaping mass folded onto the diagonal.
///
/// out_diag[i] = sum over k outside U of p(i,k), in_diag[i] = sum over k outside U of p(k,i).
class TruncatedKernel {
public:
    struct Link {
        int to;
        double prob;
    };

    TruncatedKernel(const Kernel& base, const Domain& dom) : base_(base), domain_(dom) {
        const std::size_t n = dom.size();
        links_.resize(n);
        out_diag_.assign(n, 0.0);
        in_diag_.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& e : base.entries()) {
                const int j = dom.index(add(dom.site(i), e.offset));
                if (j >= 0)
                    links_[i].push_back({j, e.prob});
                else
                    out_diag_[i] += e.prob;
                if (dom.index(sub(dom.site(i), e.offset)) < 0) in_diag_[i] += e.prob;
            }
        }
    }

    const Kernel& base() const { return base_; }
    const Domain& domain() const { return domain_; }
    std::size_t size() const { return domain_.size(); }

    /// In-domain jumps out of site i.
    const std::vector<Link>& links(std::size_t i) const { return links_[i]; }
    double out_diag(std::size_t i) const { return out_diag_[i]; }
    double in_diag(std::size_t i) const { return in_diag_[i]; }

    double p(std::size_t i, std::size_t j) const {
        if (i == j) return out_diag_[i];
        for (const auto& l : links_[i])
            if (static_cast<std::size_t>(l.to) == j) return l.prob;
        return 0.0;
    }

    /// The same construction for p*; its diagonals are the swapped ones.
    TruncatedKernel reversed() const { return TruncatedKernel(base_.reversed_kernel(), domain_); }

private:
    Kernel base_;
    Domain domain_;
    std::vector<std::vector<Link>> links_;
    std::vector<double> out_diag_;
    std::vector<double> in_diag_;
};

} // namespace azrp
