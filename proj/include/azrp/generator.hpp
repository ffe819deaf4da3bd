#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "rates.hpp"
#include "statespace.hpp"

namespace azrp {

enum class GeneratorKind { conservative, open, dual_open, killed };

inline const char* to_string(GeneratorKind k) {
    switch (k) {
    case GeneratorKind::conservative: return "conservative";
    case GeneratorKind::open: return "open";
    case GeneratorKind::dual_open: return "dual-open";
    case GeneratorKind::killed: return "killed";
    }
    return "";
}

/// Rate matrix in CSR form with the diagonal stored apart.
///
/// For the killed kind the rows are the A^c states (`states` maps them back to
/// table indices) and `loss` holds the rate of jumping into A.
struct SparseGenerator {
    GeneratorKind kind = GeneratorKind::open;
    std::vector<std::size_t> row_ptr{0};
    std::vector<StateIndex> col;
    std::vector<double> rate;
    std::vector<double> diag;
    std::vector<double> loss;
    std::vector<StateIndex> states;

    std::size_t size() const { return diag.size(); }
    std::size_t nonzeros() const { return col.size(); }

    /// y = Q x
    void apply(std::span<const double> x, std::span<double> y) const {
        const std::size_t n = size();
        for (std::size_t r = 0; r < n; ++r) {
            double a = diag[r] * x[r];
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) a += rate[k] * x[col[k]];
            y[r] = a;
        }
    }

    /// y = Q^T x, i.e. the row vector x^T Q.
    void apply_transpose(std::span<const double> x, std::span<double> y) const {
        const std::size_t n = size();
        for (std::size_t r = 0; r < n; ++r) y[r] = diag[r] * x[r];
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) y[col[k]] += rate[k] * x[r];
    }

    double max_exit_rate() const {
        double m = 0.0;
        for (double d : diag) m = std::max(m, -d);
        return m;
    }

    /// Off-diagonal entry (r, c), 0 if absent. Columns are sorted within rows.
    double at(std::size_t r, std::size_t c) const {
        if (r == c) return diag[r];
        auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
        auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
        auto it = std::lower_bound(b, e, static_cast<StateIndex>(c));
        return (it != e && *it == c) ? rate[static_cast<std::size_t>(it - col.begin())] : 0.0;
    }

    double row_sum(std::size_t r) const {
        double a = diag[r];
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) a += rate[k];
        return a;
    }
};

/// Everything needed to enumerate the transitions out of a table state.
struct Dynamics {
    const StateTable* table;
    TruncatedKernel kernel;
    std::vector<double> g; ///< g(0..M+1), tabulated once
    double gamma;
    bool boundary = true;  ///< false for the conservative generator

    Dynamics(const StateTable& t, TruncatedKernel k, const RateFunction& rates, double fugacity, bool open = true)
        : table(&t), kernel(std::move(k)), g(rates.tabulate(t.caps().per_site + 1)), gamma(fugacity),
          boundary(open) {
        if (kernel.domain().sites() != t.domain().sites())
            throw std::invalid_argument("kernel domain does not match the state table");
    }

    /// Calls emit(target, rate) for every admissible transition out of s.
    /// Births use gamma p*_n(i,i), deaths g(eta_i) p_n(i,i).
    template <class Emit>
    void transitions(StateIndex s, Emit&& emit) const {
        const StateTable& t = *table;
        const std::size_t n = t.sites();
        for (std::size_t i = 0; i < n; ++i) {
            const int k = t.occupancy(s, i);
            if (k > 0) {
                const double gi = g[k];
                const StateIndex less = t.minus(s, i);
                for (const auto& l : kernel.links(i)) {
                    const StateIndex to = t.plus(less, static_cast<std::size_t>(l.to));
                    if (to != no_state) emit(to, gi * l.prob);
                }
                if (boundary && kernel.out_diag(i) > 0.0) emit(less, gi * kernel.out_diag(i));
            }
            if (boundary && kernel.in_diag(i) > 0.0) {
                const StateIndex more = t.plus(s, i);
                if (more != no_state) emit(more, gamma * kernel.in_diag(i));
            }
        }
    }
};

namespace detail {

inline SparseGenerator assemble(const Dynamics& dyn, GeneratorKind kind) {
    SparseGenerator q;
    q.kind = kind;
    const std::size_t n = dyn.table->size();
    q.diag.assign(n, 0.0);
    std::vector<std::pair<StateIndex, double>> row;
    for (std::size_t s = 0; s < n; ++s) {
        row.clear();
        dyn.transitions(static_cast<StateIndex>(s), [&](StateIndex to, double r) { row.emplace_back(to, r); });
        std::sort(row.begin(), row.end());
        double out = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k > 0 && row[k].first == row[k - 1].first) {
                q.rate.back() += row[k].second;
            } else {
                q.col.push_back(row[k].first);
                q.rate.push_back(row[k].second);
            }
        }
        for (std::size_t k = q.row_ptr.back(); k < q.col.size(); ++k) out += q.rate[k];
        q.diag[s] = -out;
        q.row_ptr.push_back(q.col.size());
    }
    return q;
}

} // namespace detail

/// Open-boundary generator on the table: exchanges g(eta_i) p(i,j), births
/// gamma p*_n(i,i), deaths g(eta_i) p_n(i,i); moves leaving the table are censored.
inline SparseGenerator assemble_open(const StateTable& t, const Kernel& k, const RateFunction& g, double gamma) {
    return detail::assemble(Dynamics(t, TruncatedKernel(k, t.domain()), g, gamma), GeneratorKind::open);
}

/// The same construction for p*.
inline SparseGenerator assemble_dual(const StateTable& t, const Kernel& k, const RateFunction& g, double gamma) {
    return detail::assemble(Dynamics(t, TruncatedKernel(k.reversed_kernel(), t.domain()), g, gamma),
                            GeneratorKind::dual_open);
}

/// Closed-box exchange dynamics; block diagonal over the particle number.
inline SparseGenerator assemble_conservative(const StateTable& t, const Kernel& k, const RateFunction& g) {
    return detail::assemble(Dynamics(t, TruncatedKernel(k, t.domain()), g, 0.0, false),
                            GeneratorKind::conservative);
}

/// Restriction to A^c, with jumps into A kept as loss.
inline SparseGenerator kill(const SparseGenerator& q, const std::vector<char>& in_A) {
    if (q.kind == GeneratorKind::killed) throw std::invalid_argument("generator is already killed");
    if (in_A.size() != q.size()) throw std::invalid_argument("pattern indicator does not match the generator");
    SparseGenerator k;
    k.kind = GeneratorKind::killed;
    std::vector<StateIndex> local(q.size(), no_state);
    for (std::size_t s = 0; s < q.size(); ++s)
        if (!in_A[s]) {
            local[s] = static_cast<StateIndex>(k.states.size());
            k.states.push_back(static_cast<StateIndex>(s));
        }
    for (StateIndex s : k.states) {
        double lost = 0.0;
        for (std::size_t e = q.row_ptr[s]; e < q.row_ptr[s + 1]; ++e) {
            if (in_A[q.col[e]]) {
                lost += q.rate[e];
            } else {
                k.col.push_back(local[q.col[e]]);
                k.rate.push_back(q.rate[e]);
            }
        }
        k.diag.push_back(q.diag[s]);
        k.loss.push_back(lost);
        k.row_ptr.push_back(k.col.size());
    }
    return k;
}

/// Strong connectivity of the off-diagonal graph (forward and backward search from state 0).
inline bool is_irreducible(const SparseGenerator& q) {
    const std::size_t n = q.size();
    if (n == 0) return false;
    std::vector<std::vector<StateIndex>> back(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t e = q.row_ptr[r]; e < q.row_ptr[r + 1]; ++e)
            if (q.rate[e] > 0.0) back[q.col[e]].push_back(static_cast<StateIndex>(r));
    auto reach = [&](auto&& next) {
        std::vector<char> seen(n, 0);
        std::queue<std::size_t> qu;
        seen[0] = 1;
        qu.push(0);
        std::size_t cnt = 1;
        while (!qu.empty()) {
            const std::size_t r = qu.front();
            qu.pop();
            next(r, [&](std::size_t c) {
                if (!seen[c]) {
                    seen[c] = 1;
                    ++cnt;
                    qu.push(c);
                }
            });
        }
        return cnt == n;
    };
    const bool fwd = reach([&](std::size_t r, auto&& visit) {
        for (std::size_t e = q.row_ptr[r]; e < q.row_ptr[r + 1]; ++e)
            if (q.rate[e] > 0.0) visit(q.col[e]);
    });
    const bool bwd = reach([&](std::size_t r, auto&& visit) {
        for (auto c : back[r]) visit(c);
    });
    return fwd && bwd;
}

inline double max_abs_row_sum(const SparseGenerator& q) {
    double m = 0.0;
    for (std::size_t r = 0; r < q.size(); ++r) {
        const double s = q.row_sum(r) + (q.kind == GeneratorKind::killed ? q.loss[r] : 0.0);
        m = std::max(m, std::abs(s));
    }
    return m;
}

/// ||nu^T L||_1 for an open (or dual-open) generator.
inline double invariance_residual(const SparseGenerator& q, const MeasureVector& nu) {
    if (q.kind != GeneratorKind::open && q.kind != GeneratorKind::dual_open)
        throw std::invalid_argument("invariance residual is defined for open generators only");
    std::vector<double> y(q.size());
    q.apply_transpose(nu.w, y);
    double s = 0.0;
    for (double v : y) s += std::abs(v);
    return s;
}

/// max over basis pairs (a,b) of |nu(a) L(a,b) - nu(b) L*(b,a)|.
inline double adjointness_residual(const SparseGenerator& L, const SparseGenerator& Ls, const MeasureVector& nu) {
    if (L.size() != Ls.size() || L.size() != nu.size()) throw std::invalid_argument("size mismatch");
    double m = 0.0;
    for (std::size_t a = 0; a < L.size(); ++a) {
        m = std::max(m, std::abs(nu[a] * (L.diag[a] - Ls.diag[a])));
        for (std::size_t e = L.row_ptr[a]; e < L.row_ptr[a + 1]; ++e) {
            const std::size_t b = L.col[e];
            m = std::max(m, std::abs(nu[a] * L.rate[e] - nu[b] * Ls.at(b, a)));
        }
        for (std::size_t e = Ls.row_ptr[a]; e < Ls.row_ptr[a + 1]; ++e) {
            const std::size_t b = Ls.col[e];
            m = std::max(m, std::abs(nu[a] * Ls.rate[e] - nu[b] * L.at(b, a)));
        }
    }
    return m;
}

using ConfigFunction = std::function<double(const std::vector<int>&)>;

struct IbpResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double residual() const { return std::abs(lhs - rhs); }
};

/// Both sides of the integration by parts formula
///   int g(eta_i) (phi(T^i_j eta) - phi(eta)) f(eta) dnu = gamma int (phi(A_j^+ xi) - phi(A_i^+ xi)) f(A_i^+ xi) dnu(xi).
///
/// f must vanish at every A_i^+ xi that leaves the table; phi is unrestricted.
inline IbpResult ibp_check(const StateTable& t, const RateFunction& g, double gamma, const MeasureVector& nu,
                           const ConfigFunction& phi, const ConfigFunction& f, int i, int j) {
    const int n = static_cast<int>(t.sites());
    if (i < 0 || j < 0 || i >= n || j >= n) throw std::invalid_argument("ibp: site outside the domain");
    IbpResult r;
    for (std::size_t s = 0; s < t.size(); ++s) {
        std::vector<int> eta = t.config(s);
        // left side
        if (eta[i] > 0) {
            const double f0 = f(eta);
            if (f0 != 0.0) {
                const double gi = g(eta[i]);
                const double p0 = phi(eta);
                --eta[i];
                ++eta[j];
                r.lhs += nu[s] * gi * (phi(eta) - p0) * f0;
                ++eta[i];
                --eta[j];
            }
        }
        // right side, xi = eta
        ++eta[i];
        const double fa = f(eta);
        const bool inside = t.find_config(eta) != no_state;
        if (!inside && fa != 0.0)
            throw std::invalid_argument("ibp: test function f is not cap-safe (nonzero off the table)");
        if (fa != 0.0) {
            const double pi = phi(eta);
            --eta[i];
            ++eta[j];
            r.rhs += gamma * nu[s] * (phi(eta) - pi) * fa;
        }
    }
    return r;
}

/// Coordinate export, readable as a Matrix Market file. Indices are 1-based.
inline void export_coordinate(const SparseGenerator& q, std::ostream& os) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << "% kind: " << to_string(q.kind) << "\n";
    os << q.size() << ' ' << q.size() << ' ' << (q.nonzeros() + q.size()) << "\n";
    os.precision(17);
    for (std::size_t r = 0; r < q.size(); ++r) {
        os << r + 1 << ' ' << r + 1 << ' ' << q.diag[r] << "\n";
        for (std::size_t e = q.row_ptr[r]; e < q.row_ptr[r + 1]; ++e)
            os << r + 1 << ' ' << q.col[e] + 1 << ' ' << q.rate[e] << "\n";
    }
}

/// Killed generator applied without storing it; rows are rebuilt from the dynamics.
class MatrixFreeKilled {
public:
    MatrixFreeKilled(const Dynamics& dyn, const std::vector<char>& in_A) : dyn_(dyn), in_A_(in_A) {
        local_.assign(in_A.size(), no_state);
        for (std::size_t s = 0; s < in_A.size(); ++s)
            if (!in_A[s]) {
                local_[s] = static_cast<StateIndex>(states_.size());
                states_.push_back(static_cast<StateIndex>(s));
            }
        exit_.resize(states_.size());
        for (std::size_t r = 0; r < states_.size(); ++r) {
            double out = 0.0;
            dyn_.transitions(states_[r], [&](StateIndex, double x) { out += x; });
            exit_[r] = out;
        }
    }

    std::size_t size() const { return states_.size(); }
    const std::vector<StateIndex>& states() const { return states_; }
    double max_exit_rate() const { return exit_.empty() ? 0.0 : *std::max_element(exit_.begin(), exit_.end()); }

    void apply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t r = 0; r < states_.size(); ++r) {
            double a = -exit_[r] * x[r];
            dyn_.transitions(states_[r], [&](StateIndex to, double rt) {
                if (!in_A_[to]) a += rt * x[local_[to]];
            });
            y[r] = a;
        }
    }

private:
    Dynamics dyn_;
    std::vector<char> in_A_;
    std::vector<StateIndex> local_;
    std::vector<StateIndex> states_;
    std::vector<double> exit_;
};

} // namespace azrp
