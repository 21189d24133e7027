#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "pricer/errors.hpp"
#include "pricer/generators.hpp"
#include "pricer/parallel.hpp"
#include "pricer/sampling.hpp"

using namespace pricer;

namespace {
ParamSpace unit_space(int dims) {
    ParamSpace s;
    for (int d = 0; d < dims; ++d) s.dims.push_back({"x" + std::to_string(d), 0.0, 1.0, ""});
    return s;
}
}  // namespace

TEST_CASE("one point per stratum") {
    const RowMatrix x = lhs_sample(4, unit_space(1), 1);
    std::vector<int> seen(4, 0);
    for (Eigen::Index i = 0; i < 4; ++i) ++seen[static_cast<std::size_t>(x(i, 0) * 4.0)];
    CHECK(seen == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("single point lies inside the range") {
    ParamSpace s;
    s.dims.push_back({"a", 2.0, 3.0, ""});
    const RowMatrix x = lhs_sample(1, s, 9);
    CHECK(x(0, 0) >= 2.0);
    CHECK(x(0, 0) < 3.0);
}

TEST_CASE("stratum counts over the Heston ranges") {
    const ParamSpace s = heston_space();
    const std::size_t n = 10000;
    const RowMatrix x = lhs_sample(n, s, 5);
    for (std::size_t d = 0; d < s.size(); ++d) {
        std::vector<int> counts(100, 0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double u = (x(i, d) - s.dims[d].low) / (s.dims[d].high - s.dims[d].low);
            ++counts[std::min<std::size_t>(99, static_cast<std::size_t>(u * 100.0))];
        }
        CHECK(std::all_of(counts.begin(), counts.end(), [](int c) { return c == 100; }));
    }
}

TEST_CASE("sampling is seeded") {
    const ParamSpace s = unit_space(3);
    CHECK(lhs_sample(50, s, 7) == lhs_sample(50, s, 7));
    CHECK(lhs_sample(50, s, 7) != lhs_sample(50, s, 8));
}

TEST_CASE("derived seeds differ per stream") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t k = 0; k < 1000; ++k) seeds.insert(derive_seed(42, k));
    CHECK(seeds.size() == 1000);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("random number helpers") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform01();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        CHECK(rng.index(7) < 7);
    }
    std::vector<int> v{1, 2, 3, 4, 5, 6};
    rng.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
    double mean = 0.0;
    for (int i = 0; i < 20000; ++i) mean += rng.normal();
    CHECK(std::abs(mean / 20000.0) < 0.03);
}

TEST_CASE("parameter space validation") {
    ParamSpace s;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s.dims.push_back({"a", 1.0, 1.0, ""});
    CHECK_THROWS_AS(s.validate(), DomainError);
    s.dims[0].high = 2.0;
    s.dims.push_back({"a", 0.0, 1.0, ""});
    CHECK_THROWS_AS(s.validate(), DomainError);
    const ParamSpace h = heston_space().with_range("tau", 0.3, 1.1);
    CHECK(h.at("tau").low == 0.3);
    CHECK_THROWS_AS(h.at("missing"), DomainError);
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 7) throw DomainError("boom");
                    }),
                    DomainError);
}
