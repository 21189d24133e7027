#include "pricer/generators.hpp"

#include <cmath>
#include <string>

#include "pricer/black_scholes.hpp"
#include "pricer/errors.hpp"
#include "pricer/parallel.hpp"

namespace pricer {

std::string_view to_string(BsVariant v) { return v == BsVariant::Wide ? "wide" : "narrow"; }

BsVariant parse_bs_variant(std::string_view name) {
    if (name == "wide") return BsVariant::Wide;
    if (name == "narrow") return BsVariant::Narrow;
    throw DomainError("unknown range variant '" + std::string(name) + "' (expected wide or narrow)");
}

ParamSpace bs_space(BsVariant variant) {
    if (variant == BsVariant::Wide) {
        return {{{col::kMoneyness, 0.4, 1.6, ""},
                 {col::kTau, 0.2, 1.1, "year"},
                 {col::kRate, 0.02, 0.1, "1/year"},
                 {col::kSigma, 0.01, 1.0, "1/sqrt(year)"}}};
    }
    return {{{col::kMoneyness, 0.5, 1.5, ""},
             {col::kTau, 0.3, 0.95, "year"},
             {col::kRate, 0.03, 0.08, "1/year"},
             {col::kSigma, 0.02, 0.9, "1/sqrt(year)"}}};
}

ParamSpace iv_space() {
    return {{{col::kMoneyness, 0.5, 1.4, ""},
             {col::kTau, 0.05, 1.0, "year"},
             {col::kRate, 0.0, 0.1, "1/year"},
             {col::kSigma, 0.05, 1.0, "1/sqrt(year)"}}};
}

ParamSpace heston_space() {
    return {{{col::kMoneyness, 0.6, 1.4, ""},
             {col::kTau, 0.1, 1.4, "year"},
             {col::kRate, 0.0, 0.1, "1/year"},
             {col::kRho, -0.95, 0.0, ""},
             {col::kKappa, 0.0, 2.0, "1/year"},
             {col::kNuBar, 0.0, 0.5, ""},
             {col::kGamma, 0.0, 0.5, ""},
             {col::kNu0, 0.05, 0.5, ""}}};
}

namespace {

nlohmann::json ranges_json(const ParamSpace& space) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& d : space.dims) r[d.name] = {d.low, d.high};
    return r;
}

std::vector<Column> input_columns(const ParamSpace& space) {
    std::vector<Column> cols;
    for (const auto& d : space.dims) cols.push_back({d.name, ColumnRole::Input, d.low, d.high});
    return cols;
}

EuropeanOption call_from(double m, double tau, double r) {
    EuropeanOption o;
    o.moneyness = m;
    o.tau = tau;
    o.rate = r;
    return o;
}

Eigen::Index dim_index(const ParamSpace& space, const char* name) {
    for (std::size_t i = 0; i < space.dims.size(); ++i) {
        if (space.dims[i].name == name) return static_cast<Eigen::Index>(i);
    }
    throw DomainError(std::string("param space lacks dimension '") + name + "'");
}

// Index of each contract dimension inside the sampled matrix.
struct Layout {
    Eigen::Index m, tau, r;
    explicit Layout(const ParamSpace& space)
        : m(dim_index(space, col::kMoneyness)), tau(dim_index(space, col::kTau)), r(dim_index(space, col::kRate)) {}
};

}  // namespace

Dataset generate_bs_dataset(std::size_t n, const ParamSpace& space, std::uint64_t seed, int threads) {
    space.validate();
    const Layout lay(space);
    const Eigen::Index s = dim_index(space, col::kSigma);
    RowMatrix x = lhs_sample(n, space, seed);
    RowMatrix data(x.rows(), x.cols() + 1);
    data.leftCols(x.cols()) = x;
    parallel_for(n, threads, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const BsInputs in{call_from(x(r, lay.m), x(r, lay.tau), x(r, lay.r)), x(r, s)};
        data(r, x.cols()) = bs_price(in).price;
    });

    auto cols = input_columns(space);
    cols.push_back({col::kPrice, ColumnRole::Output, 0.0, space.at(col::kMoneyness).high});
    Dataset ds(std::move(cols), std::move(data));
    ds.provenance = {{"generator", "black-scholes"}, {"seed", seed}, {"ranges", ranges_json(space)}};
    return ds;
}

Dataset generate_bs_dataset(std::size_t n, BsVariant variant, std::uint64_t seed, int threads) {
    Dataset ds = generate_bs_dataset(n, bs_space(variant), seed, threads);
    ds.provenance["variant"] = std::string(to_string(variant));
    return ds;
}

double log_time_value(const EuropeanOption& option, double price) {
    const double tv = time_value(option, price);
    if (!(tv > 0.0)) throw BoundsViolation("time value is not positive; log transform undefined");
    return std::log(tv / option.strike);
}

Dataset generate_iv_dataset(std::size_t n, std::uint64_t seed, const IvGenOptions& options,
                            const ParamSpace& space, int threads) {
    if (n < 1) throw DomainError("generate_iv_dataset: n must be >= 1");
    space.validate();
    const Layout lay(space);
    const Eigen::Index s = dim_index(space, col::kSigma);

    RowMatrix data(static_cast<Eigen::Index>(n), 5);
    std::size_t filled = 0;
    std::size_t dropped = 0;
    std::size_t drawn = 0;
    for (std::uint64_t round = 0; filled < n; ++round) {
        const std::size_t want = n - filled;
        const std::size_t draw = want + (want + 9) / 10;
        const std::uint64_t round_seed = round == 0 ? seed : derive_seed(seed, round);
        RowMatrix x = lhs_sample(draw, space, round_seed);
        std::vector<double> price(draw), tv(draw);
        parallel_for(draw, threads, [&](std::size_t i) {
            const auto r = static_cast<Eigen::Index>(i);
            const EuropeanOption o = call_from(x(r, lay.m), x(r, lay.tau), x(r, lay.r));
            price[i] = bs_price({o, x(r, s)}).price;
            tv[i] = time_value(o, price[i]);
        });
        drawn += draw;
        const std::size_t before = filled;
        for (std::size_t i = 0; i < draw && filled < n; ++i) {
            if (tv[i] < options.min_time_value) {
                ++dropped;
                continue;
            }
            const auto r = static_cast<Eigen::Index>(i);
            const auto out = static_cast<Eigen::Index>(filled++);
            data(out, 0) = x(r, lay.m);
            data(out, 1) = x(r, lay.tau);
            data(out, 2) = x(r, lay.r);
            data(out, 3) = options.unscaled ? price[i] : std::log(tv[i]);
            data(out, 4) = x(r, s);
        }
        if (filled == before) {
            throw DomainError("generate_iv_dataset: every draw of round " + std::to_string(round) +
                              " fell below the minimum time value");
        }
    }

    const double m_hi = space.at(col::kMoneyness).high;
    std::vector<Column> cols = {
        {col::kMoneyness, ColumnRole::Input, space.at(col::kMoneyness).low, m_hi},
        {col::kTau, ColumnRole::Input, space.at(col::kTau).low, space.at(col::kTau).high},
        {col::kRate, ColumnRole::Input, space.at(col::kRate).low, space.at(col::kRate).high},
        options.unscaled ? Column{col::kPrice, ColumnRole::Input, 0.0, m_hi}
                         : Column{col::kLogTimeValue, ColumnRole::Input, std::log(options.min_time_value),
                                  std::log(m_hi)},
        {col::kSigma, ColumnRole::Output, space.at(col::kSigma).low, space.at(col::kSigma).high}};
    Dataset ds(std::move(cols), std::move(data));
    if (!options.unscaled) ds.transforms.push_back(kLogTimeValueTransform);
    ds.provenance = {{"generator", "implied-volatility"},
                     {"seed", seed},
                     {"ranges", ranges_json(space)},
                     {"min_time_value", options.min_time_value},
                     {"drawn_rows", drawn},
                     {"dropped_rows", dropped}};
    return ds;
}

Dataset generate_heston_dataset(std::size_t n, std::uint64_t seed, const CosConfig& cos, int threads,
                                const ParamSpace& space) {
    if (n < 1) throw DomainError("generate_heston_dataset: n must be >= 1");
    space.validate();
    cos.validate();
    const Layout lay(space);
    const Eigen::Index i_rho = dim_index(space, col::kRho);
    const Eigen::Index i_kappa = dim_index(space, col::kKappa);
    const Eigen::Index i_nubar = dim_index(space, col::kNuBar);
    const Eigen::Index i_gamma = dim_index(space, col::kGamma);
    const Eigen::Index i_nu0 = dim_index(space, col::kNu0);
    // A clamp larger than this means the expansion itself is off, not rounding.
    constexpr double kMaxClamp = 1e-9;

    const auto d = static_cast<Eigen::Index>(space.size());
    RowMatrix data(static_cast<Eigen::Index>(n), d + 1);
    std::size_t filled = 0;
    std::size_t rejected = 0;
    for (std::uint64_t round = 0; filled < n; ++round) {
        const std::size_t want = n - filled;
        const std::size_t draw = want + (want + 9) / 10;
        const std::uint64_t round_seed = round == 0 ? seed : derive_seed(seed, round);
        RowMatrix x = lhs_sample(draw, space, round_seed);
        std::vector<double> price(draw);
        std::vector<char> ok(draw, 1);
        parallel_for(draw, threads, [&](std::size_t i) {
            const auto r = static_cast<Eigen::Index>(i);
            const EuropeanOption o = call_from(x(r, lay.m), x(r, lay.tau), x(r, lay.r));
            const HestonParams p{x(r, i_kappa), x(r, i_nubar), x(r, i_gamma), x(r, i_rho), x(r, i_nu0)};
            try {
                const PricePoint pp = cos_call_price(o, p, cos);
                price[i] = pp.price;
                ok[i] = pp.clamp <= kMaxClamp;
            } catch (const BoundsViolation&) {
                ok[i] = 0;
            } catch (const NumericalOverflow& e) {
                throw NumericalOverflow("heston row " + std::to_string(i) + " of round " +
                                        std::to_string(round) + ": " + e.what());
            }
        });
        const std::size_t before = filled;
        for (std::size_t i = 0; i < draw && filled < n; ++i) {
            if (!ok[i]) {
                ++rejected;
                continue;
            }
            const auto out = static_cast<Eigen::Index>(filled++);
            data.row(out).head(d) = x.row(static_cast<Eigen::Index>(i));
            data(out, d) = price[i];
        }
        if (filled == before) {
            throw DomainError("generate_heston_dataset: every row of round " + std::to_string(round) +
                              " was rejected");
        }
    }

    auto cols = input_columns(space);
    cols.push_back({col::kPrice, ColumnRole::Output, 0.0, space.at(col::kMoneyness).high});
    Dataset ds(std::move(cols), std::move(data));
    ds.provenance = {{"generator", "heston-cos"},
                     {"seed", seed},
                     {"ranges", ranges_json(space)},
                     {"cos_terms", cos.n_terms},
                     {"cos_width", cos.trunc_width},
                     {"rejected_rows", rejected}};
    return ds;
}

EuropeanOption option_from_row(const Dataset& ds, Eigen::Index row) {
    return call_from(ds.data()(row, ds.column_index(col::kMoneyness)), ds.data()(row, ds.column_index(col::kTau)),
                     ds.data()(row, ds.column_index(col::kRate)));
}

HestonParams heston_from_row(const Dataset& ds, Eigen::Index row) {
    const auto& x = ds.data();
    return {x(row, ds.column_index(col::kKappa)), x(row, ds.column_index(col::kNuBar)),
            x(row, ds.column_index(col::kGamma)), x(row, ds.column_index(col::kRho)),
            x(row, ds.column_index(col::kNu0))};
}

}  // namespace pricer
