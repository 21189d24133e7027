#include "pricer/sampling.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "pricer/errors.hpp"

namespace pricer {

std::uint64_t Rng::index(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::index: empty range");
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void ParamSpace::validate() const {
    if (dims.empty()) throw DomainError("param space: no dimensions");
    std::set<std::string> seen;
    for (const auto& d : dims) {
        if (!(d.low < d.high)) {
            throw DomainError("param space: dimension '" + d.name + "' needs low < high");
        }
        if (!seen.insert(d.name).second) {
            throw DomainError("param space: duplicate dimension '" + d.name + "'");
        }
    }
}

const Dimension& ParamSpace::at(const std::string& name) const {
    for (const auto& d : dims) {
        if (d.name == name) return d;
    }
    throw DomainError("param space: no dimension named '" + name + "'");
}

ParamSpace ParamSpace::with_range(const std::string& name, double low, double high) const {
    ParamSpace out = *this;
    for (auto& d : out.dims) {
        if (d.name == name) {
            d.low = low;
            d.high = high;
            return out;
        }
    }
    throw DomainError("param space: no dimension named '" + name + "'");
}

RowMatrix lhs_sample(std::size_t n, const ParamSpace& space, std::uint64_t seed) {
    if (n < 1) throw DomainError("lhs_sample: n must be >= 1");
    space.validate();
    const std::size_t d = space.size();
    RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Rng rng(seed);
    std::vector<std::size_t> strata(n);
    for (std::size_t j = 0; j < d; ++j) {
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        rng.shuffle(strata);
        const double lo = space.dims[j].low;
        const double span = space.dims[j].high - lo;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(strata[i]) + rng.uniform01()) / static_cast<double>(n);
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = lo + span * u;
        }
    }
    return out;
}

}  // namespace pricer
