#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pricer {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Seeded generator with platform-independent derived quantities (the
// standard distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on the open interval (0, 1).
    double uniform01() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);
    double normal();  // Box-Muller, standard normal

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

// splitmix64 of (seed, stream): independent seeds for sub-streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Dimension {
    std::string name;
    double low = 0.0;
    double high = 1.0;
    std::string unit;
};

struct ParamSpace {
    std::vector<Dimension> dims;

    // Throws DomainError on an empty space, low >= high or duplicate names.
    void validate() const;
    std::size_t size() const { return dims.size(); }
    const Dimension& at(const std::string& name) const;
    ParamSpace with_range(const std::string& name, double low, double high) const;
};

// Latin hypercube: per dimension, exactly one point in each of the n
// equal-width strata, position uniform within its stratum, strata permuted
// independently per dimension. Rows are samples.
RowMatrix lhs_sample(std::size_t n, const ParamSpace& space, std::uint64_t seed);

}  // namespace pricer
