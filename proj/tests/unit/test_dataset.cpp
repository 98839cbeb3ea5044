#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "geocbr/dataset.hpp"
#include "geocbr/errors.hpp"
#include "support.hpp"

using namespace geocbr;
using testsupport::make_property;
using testsupport::schema_of;
using testsupport::ymd;

namespace {

const char* kHeader = "id,lat,lon,offer_date,value,region,living_area,object_type\n";

AttributeSchema house_schema() { return schema_of({"living_area", "object_type"}); }

}  // namespace

TEST_CASE("dates parse strictly") {
    CHECK(parse_date("2017-03-01") == ymd(2017, 3, 1));
    CHECK_FALSE(parse_date("2017-02-30"));
    CHECK_FALSE(parse_date("2017-3-1"));
    CHECK_FALSE(parse_date("20170301"));
    CHECK(format_date(ymd(2009, 12, 5)) == "2009-12-05");
}

TEST_CASE("schema rejects duplicate and reserved names") {
    CHECK_THROWS_AS(schema_of({"a", "a"}), InvalidConfig);
    CHECK_THROWS_AS(schema_of({"lat"}), InvalidConfig);
    auto s = house_schema();
    CHECK(s.index_of("object_type") == 1u);
    CHECK_FALSE(s.index_of("nope"));
    CHECK(AttributeSchema::from_json(s.to_json()).attributes().size() == 2);
}

TEST_CASE("well-formed file parses every row") {
    std::string text = std::string(kHeader) +
                       "1,35.1,139.2,2016-01-01,1000000,Tokyo,55.5,1\n"
                       "2,35.2,139.3,2016-02-01,2000000,Tokyo,60,2\n"
                       "3,35.3,139.4,2017-06-01,3000000,,70,1\n";
    auto r = parse_csv_text(text, house_schema());
    REQUIRE(r.properties.size() == 3);
    CHECK(r.rejected.empty());
    CHECK(r.properties[0].attributes == std::vector<double>{55.5, 1.0});
    CHECK(r.properties[1].region == "Tokyo");
    CHECK_FALSE(r.properties[2].region);
    CHECK(r.properties[2].offer_date == ymd(2017, 6, 1));
}

TEST_CASE("empty value cell means unvalued") {
    auto r = parse_csv_text(std::string(kHeader) + "7,35,139,2016-01-01,,X,50,1\n", house_schema());
    REQUIRE(r.properties.size() == 1);
    CHECK_FALSE(r.properties[0].value);
}

TEST_CASE("bad rows are rejected with a reason, not dropped silently") {
    std::string text = std::string(kHeader) +
                       "1,91.0,139,2016-01-01,100,X,50,1\n"   // latitude out of range
                       "2,35,139,2016-13-01,100,X,50,1\n"     // bad date
                       "3,35,139,2016-01-01,-5,X,50,1\n"      // non-positive value
                       "4,35,139,2016-01-01,100,X,,1\n"       // missing attribute
                       "5,35,139,2016-01-01,100,X,50\n"       // short row
                       "6,35,139,2016-01-01,100,X,50,1\n"
                       "6,35,139,2016-01-01,100,X,50,1\n";    // duplicate id
    auto r = parse_csv_text(text, house_schema());
    CHECK(r.properties.size() == 1);
    REQUIRE(r.rejected.size() == 6);
    CHECK(r.rejected[0].reason == "out-of-range");
    CHECK(r.rejected[0].line == 2);
    CHECK(r.rejected[1].reason == "bad-date");
    CHECK(r.rejected[2].reason == "non-positive-value");
    CHECK(r.rejected[3].reason == "missing-attribute:living_area");
    CHECK(r.rejected[4].reason == "column-count");
    CHECK(r.rejected[5].reason == "duplicate-id");
    auto report = r.report_json();
    CHECK(report["rejected"] == 6);
    CHECK(report["by_reason"]["bad-date"] == 1);
}

TEST_CASE("header must match the schema") {
    CHECK_THROWS_AS(parse_csv_text("id,lat,lon,offer_date,value,region,object_type,living_area\n", house_schema()),
                    HeaderMismatch);
    CHECK_THROWS_AS(parse_csv_text("", house_schema()), HeaderMismatch);
    CHECK_THROWS_AS(parse_csv("/nonexistent/data.csv", house_schema()), FileMissing);
}

TEST_CASE("quoted fields and a byte order mark are accepted") {
    std::string text = "\xEF\xBB\xBF" + std::string(kHeader) + "1,35,139,2016-01-01,100,\"Chiba, East\",50,1\n";
    auto r = parse_csv_text(text, house_schema());
    REQUIRE(r.properties.size() == 1);
    CHECK(r.properties[0].region == "Chiba, East");
}

TEST_CASE("write then parse is a fixed point") {
    auto props = testsupport::random_properties(200, 2, 3);
    props[5].value.reset();
    props[6].region = "with,comma";
    const auto schema = house_schema();
    const auto text = to_csv_text(schema, props);
    auto back = parse_csv_text(text, schema);
    REQUIRE(back.rejected.empty());
    REQUIRE(back.properties.size() == props.size());
    for (std::size_t i = 0; i < props.size(); ++i) {
        CHECK(back.properties[i].location == props[i].location);
        CHECK(back.properties[i].attributes == props[i].attributes);
        CHECK(back.properties[i].value == props[i].value);
        CHECK(back.properties[i].region == props[i].region);
    }
    CHECK(to_csv_text(schema, back.properties) == text);

    auto dir = testsupport::temp_dir("dataset_io");
    write_csv(dir / "d.csv", schema, props);
    CHECK(parse_csv(dir / "d.csv", schema).properties.size() == props.size());
}

TEST_CASE("clean keeps the latest duplicate") {
    const auto schema = house_schema();
    std::vector<Property> in{
        make_property(1, 35.0, 139.0, {50, 1}, 1e7, {}, ymd(2016, 1, 1)),
        make_property(2, 35.0, 139.0, {50, 1}, 2e7, {}, ymd(2017, 1, 1)),
        make_property(3, 35.0, 139.0, {51, 1}, 3e7, {}, ymd(2015, 1, 1)),  // different area: not a duplicate
    };
    auto r = clean(in, schema);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept[0].id == 2);
    CHECK(r.kept[1].id == 3);
    CHECK(r.report.duplicates == 1);
}

TEST_CASE("clean removes price outliers and points outside the box") {
    const auto schema = house_schema();
    std::vector<Property> in{
        make_property(1, 35.0, 139.0, {50, 1}, 3.5e8),
        make_property(2, 10.0, 10.0, {50, 1}, 1e7),
        make_property(3, 35.0, 139.0, {60, 1}, 3e8),  // at the cap: kept
        make_property(4, 36.0, 140.0, {60, 1}, std::nullopt),
    };
    auto r = clean(in, schema);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept[0].id == 3);
    CHECK(r.kept[1].id == 4);
    CHECK(r.report.price_outliers == 1);
    CHECK(r.report.outside_box == 1);
    CHECK(r.report.input == 4);
    CHECK(r.report.kept == 2);
    auto j = r.report.to_json();
    CHECK(j["price_outlier"] == 1);
    CHECK(j["outside_bounding_box"] == 1);
}

TEST_CASE("clean is idempotent") {
    auto props = testsupport::random_properties(500, 2, 11);
    // plant duplicates and outliers
    for (int i = 0; i < 50; ++i) {
        auto dup = props[static_cast<std::size_t>(i)];
        dup.id = 10'000 + i;
        dup.offer_date = ymd(2015, 1, 1);
        props.push_back(dup);
    }
    props[100].value = 9e8;
    props[101].location = {0.0, 0.0};
    const auto schema = house_schema();
    auto once = clean(props, schema);
    auto twice = clean(once.kept, schema);
    CHECK(once.report.duplicates == 50);
    CHECK(twice.kept.size() == once.kept.size());
    CHECK(twice.report.duplicates == 0);
    CHECK(to_csv_text(schema, twice.kept) == to_csv_text(schema, once.kept));
}

TEST_CASE("cleaning config is validated") {
    CleaningConfig c;
    c.max_price = 0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = {};
    c.bounding_box.lat_min = 50;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("temporal split") {
    const auto cutoff = ymd(2017, 3, 1);
    std::vector<Property> in{
        make_property(1, 35, 139, {1, 1}, 1.0, {}, ymd(2016, 1, 15)),
        make_property(2, 35, 139, {1, 1}, 1.0, {}, ymd(2017, 6, 15)),
    };
    auto s = temporal_split(in, cutoff);
    REQUIRE(s.train.size() == 1);
    REQUIRE(s.test.size() == 1);
    CHECK(s.train[0].id == 1);
    CHECK(s.test[0].id == 2);

    SUBCASE("cutoff date goes to test") {
        in[1].offer_date = cutoff;
        CHECK(temporal_split(in, cutoff).test.at(0).id == 2);
    }
    SUBCASE("all before cutoff") {
        in[1].offer_date = ymd(2016, 5, 5);
        CHECK_THROWS_AS(temporal_split(in, cutoff), EmptySplit);
    }
    SUBCASE("unvalued test rows are dropped, unvalued train rows kept") {
        in.push_back(make_property(3, 35, 139, {1, 1}, std::nullopt, {}, ymd(2018, 1, 1)));
        in.push_back(make_property(4, 35, 139, {1, 1}, std::nullopt, {}, ymd(2015, 1, 1)));
        auto t = temporal_split(in, cutoff);
        CHECK(t.test.size() == 1);
        CHECK(t.train.size() == 2);
    }
}

TEST_CASE("temporal split partitions the dated valued input") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> day(0, 2000);
    std::vector<Property> in;
    for (int i = 0; i < 1000; ++i) {
        auto d = std::chrono::sys_days(ymd(2013, 1, 1)) + std::chrono::days(day(rng));
        in.push_back(make_property(i + 1, 35, 139, {1, 1}, 1.0, {}, Date(d)));
    }
    auto s = temporal_split(in, ymd(2017, 3, 1));
    CHECK(s.train.size() + s.test.size() == in.size());
    std::set<std::int64_t> ids;
    for (auto& p : s.train) ids.insert(p.id);
    for (auto& p : s.test) ids.insert(p.id);
    CHECK(ids.size() == in.size());
}

TEST_CASE("scaler maps the training range onto [0, 1]") {
    const auto schema = schema_of({"a", "c"});
    std::vector<Property> train{make_property(1, 35, 139, {10, 7}, 1.0), make_property(2, 35, 139, {20, 7}, 1.0)};
    auto sc = fit_scaler(train, schema);
    CHECK(sc.scale(0, 15) == doctest::Approx(0.5));
    CHECK(sc.scale(0, 25) == 1.0);
    CHECK(sc.scale(0, 5) == 0.0);
    CHECK(sc.scale(1, 7) == 0.0);
    CHECK(sc.scale(1, 100) == 0.0);
    auto scaled = apply_scaler(sc, make_property(3, 35, 139, {12.5, 3}, 1.0));
    CHECK(scaled.attributes[0] == doctest::Approx(0.25));
    CHECK(scaled.attributes[1] == 0.0);
    CHECK_THROWS_AS(fit_scaler({}, schema), EmptyTrainingSet);
}

TEST_CASE("scaled training attributes stay in [0, 1]") {
    auto props = testsupport::random_properties(300, 4, 21);
    const auto schema = schema_of({"a", "b", "c", "d"});
    auto sc = fit_scaler(props, schema);
    for (const auto& p : props) {
        for (double v : apply_scaler(sc, p).attributes) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}
