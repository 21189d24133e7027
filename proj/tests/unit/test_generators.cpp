#include <doctest.h>

#include <cmath>

#include "pricer/black_scholes.hpp"
#include "pricer/cos_heston.hpp"
#include "pricer/errors.hpp"
#include "pricer/generators.hpp"

using namespace pricer;

TEST_CASE("Black-Scholes dataset") {
    const Dataset ds = generate_bs_dataset(500, BsVariant::Narrow, 2);
    CHECK(ds.rows() == 500);
    CHECK(ds.input_names() == std::vector<std::string>{"moneyness", "tau", "rate", "sigma"});
    CHECK(ds.output_names() == std::vector<std::string>{"price"});
    CHECK_NOTHROW(ds.validate());
    for (Eigen::Index i = 0; i < ds.rows(); i += 37) {
        BsInputs in{option_from_row(ds, i), ds.data()(i, 3)};
        CHECK(ds.data()(i, 4) == bs_price(in).price);
        CHECK(in.option.moneyness >= 0.5);
        CHECK(in.option.moneyness <= 1.5);
    }
    CHECK(generate_bs_dataset(64, BsVariant::Wide, 2, 3).data() == generate_bs_dataset(64, BsVariant::Wide, 2).data());
    CHECK_THROWS_AS(parse_bs_variant("medium"), DomainError);
}

TEST_CASE("implied-volatility dataset") {
    const Dataset ds = generate_iv_dataset(400, 3);
    CHECK(ds.rows() == 400);
    CHECK(ds.output_names() == std::vector<std::string>{"sigma"});
    CHECK(ds.has_column(col::kLogTimeValue));
    CHECK(ds.transforms == std::vector<std::string>{kLogTimeValueTransform});
    const Eigen::Index ltv = ds.column_index(col::kLogTimeValue);
    for (Eigen::Index i = 0; i < ds.rows(); i += 29) {
        const EuropeanOption o = option_from_row(ds, i);
        const double price = bs_price(BsInputs{o, ds.data()(i, ds.column_index(col::kSigma))}).price;
        CHECK(ds.data()(i, ltv) == doctest::Approx(log_time_value(o, price)).epsilon(1e-12));
        CHECK(std::exp(ds.data()(i, ltv)) >= 1e-7);
    }
    IvGenOptions raw;
    raw.unscaled = true;
    const Dataset u = generate_iv_dataset(100, 3, raw);
    CHECK(u.has_column(col::kPrice));
    CHECK_FALSE(u.has_column(col::kLogTimeValue));
}

TEST_CASE("deep in-the-money rows with tiny time value are dropped") {
    EuropeanOption o;
    o.moneyness = 1.4;
    o.tau = 0.05;
    const double price = bs_price(BsInputs{o, 0.05}).price;
    CHECK(time_value(o, price) < 1e-7);
    ParamSpace only_deep;
    only_deep.dims = {{"moneyness", 1.39, 1.4, ""}, {"tau", 0.05, 0.06, ""}, {"rate", 0.0, 0.01, ""}, {"sigma", 0.05, 0.06, ""}};
    CHECK_THROWS_AS(generate_iv_dataset(10, 1, {}, only_deep), DomainError);
}

TEST_CASE("Heston dataset") {
    const Dataset ds = generate_heston_dataset(40, 7);
    CHECK(ds.rows() == 40);
    CHECK(ds.input_names().size() == 8);
    CHECK(ds.provenance.contains("rejected_rows"));
    for (Eigen::Index i = 0; i < ds.rows(); i += 9) {
        const auto pp = cos_call_price(option_from_row(ds, i), heston_from_row(ds, i));
        CHECK(ds.data()(i, 8) == pp.price);
        CHECK(pp.price < 0.67);
    }
}
