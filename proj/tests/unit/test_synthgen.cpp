#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "geocbr/errors.hpp"
#include "geocbr/geo_index.hpp"
#include "geocbr/synthgen.hpp"

using namespace geocbr;

TEST_CASE("config validation") {
    SynthConfig c;
    c.n = 0;
    CHECK_THROWS_AS(generate(c), InvalidConfig);
    c = {};
    c.noise_sigma = -1;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = {};
    c.outlier_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    CHECK_THROWS_AS(SynthConfig::from_kv(KeyValueConfig::parse("n = 0")), InvalidConfig);
    CHECK_THROWS_AS(SynthConfig::from_kv(KeyValueConfig::parse("colour = red")), InvalidConfig);
    auto parsed = SynthConfig::from_kv(KeyValueConfig::parse("n = 50\nseed = 9\ndate_end = 2019-01-01\n"));
    CHECK(parsed.n == 50);
    CHECK(parsed.seed == 9);
    CHECK(SynthConfig::from_kv(parsed.to_kv()).to_kv().to_string() == parsed.to_kv().to_string());
}

TEST_CASE("shape of a generated dataset") {
    SynthConfig c;
    c.n = 2000;
    auto d = generate(c);
    REQUIRE(d.properties.size() == 2000);
    CHECK(d.schema.size() == 7);
    CHECK(d.schema[0].name == "rel_0");
    CHECK(d.schema[6].name == "noise_4");
    std::set<std::string> regions;
    for (const auto& p : d.properties) {
        CHECK(p.value.has_value());
        CHECK(*p.value > 0);
        CHECK(p.location.lat_deg >= c.lat_min);
        CHECK(p.location.lat_deg <= c.lat_max);
        CHECK(p.offer_date >= c.date_start);
        CHECK(p.offer_date < c.date_end);
        regions.insert(p.region.value());
    }
    CHECK(regions.size() == c.region_grid * c.region_grid);
}

TEST_CASE("same seed, same dataset") {
    SynthConfig c;
    c.n = 500;
    c.outlier_rate = 0.01;
    auto a = generate(c), b = generate(c);
    CHECK(to_csv_text(a.schema, a.properties) == to_csv_text(b.schema, b.properties));
    CHECK(a.truth.to_json() == b.truth.to_json());
    c.seed = 2;
    auto other = generate(c);
    CHECK(to_csv_text(a.schema, a.properties) != to_csv_text(other.schema, other.properties));
}

TEST_CASE("without noise, price is a function of location only") {
    SynthConfig c;
    c.n = 300;
    c.noise_sigma = 0;
    c.n_bumps = 1;
    c.n_relevant_attrs = 0;
    c.n_noise_attrs = 3;
    auto d = generate(c);
    for (const auto& p : d.properties) {
        CHECK(*p.value == doctest::Approx(c.base_price * d.truth.location_field(p.location)).epsilon(1e-12));
    }
    auto twin = d.properties[0];
    twin.attributes = {1.0, 2.0, 3.0};
    CHECK(d.truth.noiseless_price(twin) == d.truth.noiseless_price(d.properties[0]));
}

TEST_CASE("outlier count is binomial") {
    SynthConfig c;
    c.n = 100'000;
    c.outlier_rate = 0.001;
    auto d = generate(c);
    const double mean = 100.0, sd = std::sqrt(100'000 * 0.001 * 0.999);
    const auto k = static_cast<double>(d.truth.outlier_ids().size());
    CHECK(k >= mean - 4 * sd);
    CHECK(k <= mean + 4 * sd);

    // outliers are the clean values times the multiplier, everything else untouched
    c.outlier_rate = 0.0;
    auto clean = generate(c);
    std::set<std::int64_t> ids(d.truth.outlier_ids().begin(), d.truth.outlier_ids().end());
    for (std::size_t i = 0; i < d.properties.size(); ++i) {
        const double ratio = *d.properties[i].value / *clean.properties[i].value;
        if (ids.count(d.properties[i].id)) {
            CHECK(ratio == doctest::Approx(100.0));
        } else {
            CHECK(ratio == 1.0);
        }
    }
}

TEST_CASE("noise attributes do not move the noiseless price") {
    SynthConfig c;
    c.n = 1000;
    auto d = generate(c);
    std::vector<double> before;
    for (const auto& p : d.properties) before.push_back(d.truth.noiseless_price(p));
    std::mt19937_64 rng(3);
    for (std::size_t col = c.n_relevant_attrs; col < d.schema.size(); ++col) {
        std::vector<double> column;
        for (const auto& p : d.properties) column.push_back(p.attributes[col]);
        std::shuffle(column.begin(), column.end(), rng);
        for (std::size_t i = 0; i < column.size(); ++i) d.properties[i].attributes[col] = column[i];
    }
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(d.truth.noiseless_price(d.properties[i]) == before[i]);

    // whereas the relevant ones do
    d.properties[0].attributes[0] = c.attribute_max;
    d.properties[0].attributes[1] = c.attribute_max;
    CHECK(d.truth.noiseless_price(d.properties[0]) > before[0]);
}

TEST_CASE("nearby properties have nearby prices") {
    SynthConfig c;
    c.n = 10;
    auto d = generate(c);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lat(c.lat_min, c.lat_max), lon(c.lon_min, c.lon_max);
    std::uniform_real_distribution<double> step(-0.02, 0.02);
    std::vector<double> attrs(d.schema.size(), 50.0);
    double worst_slack = INFINITY;
    for (int t = 0; t < 20'000; ++t) {
        GeoPoint a{lat(rng), lon(rng)};
        GeoPoint b{a.lat_deg + step(rng), a.lon_deg + step(rng)};
        const double eps = haversine_m(a, b);
        const double pa = d.truth.noiseless_price(a, attrs), pb = d.truth.noiseless_price(b, attrs);
        const double ratio = std::max(pa, pb) / std::min(pa, pb);
        CHECK(ratio <= d.truth.ratio_bound(eps));
        worst_slack = std::min(worst_slack, d.truth.ratio_bound(eps) - ratio);
    }
    CHECK(worst_slack >= 0.0);
    CHECK(d.truth.lipschitz_constant() > 0.0);
}

TEST_CASE("location dominates the attribute effects") {
    SynthConfig c;
    c.n = 20'000;
    auto d = generate(c);
    auto [lo, hi] = std::minmax_element(d.properties.begin(), d.properties.end(), [&](auto& a, auto& b) {
        return d.truth.location_field(a.location) < d.truth.location_field(b.location);
    });
    const double field_spread = d.truth.location_field(hi->location) / d.truth.location_field(lo->location);
    const double attribute_spread = std::exp(c.attribute_effect * static_cast<double>(c.n_relevant_attrs));
    CHECK(field_spread >= attribute_spread);
}

TEST_CASE("ground truth JSON round trip") {
    SynthConfig c;
    c.n = 2000;
    c.outlier_rate = 0.01;
    auto d = generate(c);
    auto back = GroundTruthModel::from_json(d.truth.to_json());
    CHECK(back.to_json() == d.truth.to_json());
    for (std::size_t i = 0; i < 50; ++i) CHECK(back.noiseless_price(d.properties[i]) == d.truth.noiseless_price(d.properties[i]));
    CHECK_THROWS_AS(GroundTruthModel::from_json(nlohmann::json::object()), InvalidConfig);
}

TEST_CASE("generated data survives the CSV format") {
    SynthConfig c;
    c.n = 3000;
    auto d = generate(c);
    auto text = to_csv_text(d.schema, d.properties);
    auto parsed = parse_csv_text(text, d.schema);
    CHECK(parsed.rejected.empty());
    CHECK(parsed.properties.size() == 3000);
    CHECK(clean(parsed.properties, d.schema).kept.size() == 3000);
}
