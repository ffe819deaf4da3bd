#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace azrp {

/// A point of Z^d. Also used for offsets.
using Site = std::vector<int>;

inline int max_norm(const Site& s) {
    int m = 0;
    for (int c : s) m = std::max(m, std::abs(c));
    return m;
}

inline Site add(const Site& a, const Site& b) {
    Site r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] + b[k];
    return r;
}

inline Site sub(const Site& a, const Site& b) {
    Site r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] - b[k];
    return r;
}

inline std::string to_string(const Site& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k];
    os << ')';
    return os.str();
}

/// Finite set of lattice sites with a fixed (lexicographic) order.
class Domain {
public:
    Domain() = default;
    Domain(int dim, std::vector<Site> sites) : dim_(dim), sites_(std::move(sites)) {
        std::sort(sites_.begin(), sites_.end());
        sites_.erase(std::unique(sites_.begin(), sites_.end()), sites_.end());
        for (std::size_t k = 0; k < sites_.size(); ++k) {
            if (static_cast<int>(sites_[k].size()) != dim_)
                throw std::invalid_argument("site " + to_string(sites_[k]) + " has wrong dimension");
            index_.emplace(sites_[k], static_cast<int>(k));
        }
    }

    int dim() const { return dim_; }
    std::size_t size() const { return sites_.size(); }
    const std::vector<Site>& sites() const { return sites_; }
    const Site& site(std::size_t k) const { return sites_[k]; }

    /// Position of s in the site order, or -1.
    int index(const Site& s) const {
        auto it = index_.find(s);
        return it == index_.end() ? -1 : it->second;
    }
    bool contains(const Site& s) const { return index_.count(s) != 0; }

    Domain with(const Site& extra) const {
        auto s = sites_;
        s.push_back(extra);
        return Domain(dim_, std::move(s));
    }

private:
    int dim_ = 0;
    std::vector<Site> sites_;
    std::map<Site, int> index_;
};

/// All sites with max-norm at most radius.
inline std::vector<Site> cube_sites(int dim, int radius) {
    std::vector<Site> out;
    if (radius < 0) return out;
    Site s(dim, -radius);
    for (;;) {
        out.push_back(s);
        int k = dim - 1;
        while (k >= 0 && s[k] == radius) s[k--] = -radius;
        if (k < 0) break;
        ++s[k];
    }
    return out;
}

/// The box [-n,n]^d.
class LatticeBox {
public:
    LatticeBox(int dim, int n) : dim_(dim), n_(n), domain_(dim, cube_sites(dim, n)) {
        if (dim <= 0) throw std::invalid_argument("box dimension must be positive");
        if (n < 0) throw std::invalid_argument("box radius must be non-negative");
    }

    int dim() const { return dim_; }
    int radius() const { return n_; }
    const Domain& domain() const { return domain_; }
    std::size_t size() const { return domain_.size(); }

    /// Sites within distance R of the outside, i.e. outside [-(n-R), n-R]^d.
    std::vector<Site> boundary(int range) const {
        std::vector<Site> out;
        for (const auto& s : domain_.sites())
            if (max_norm(s) > n_ - range) out.push_back(s);
        return out;
    }

private:
    int dim_;
    int n_;
    Domain domain_;
};

} // namespace azrp
