#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "geocbr/cli.hpp"
#include "geocbr/dataset.hpp"
#include "geocbr/predictor.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "geocbr");
    std::ostringstream out, err;
    const int code = geocbr::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// synth + ingest once for the tests that only need a split dataset
struct Pipeline {
    fs::path root;
    Pipeline() : root(testsupport::temp_dir("cli_pipeline")) {
        std::ofstream(root / "synth.cfg") << "n = 3000\nseed = 4\nlat_min = 35.0\nlat_max = 35.5\n"
                                             "lon_min = 139.0\nlon_max = 139.6\nregion_grid = 2\n";
        std::ofstream(root / "ea.cfg") << "generations = 3\nsample_size = 100\nrng_seed = 5\n";
        REQUIRE(run({"synth", "--config", (root / "synth.cfg").string(), "--out", (root / "synth").string()}).code == 0);
        REQUIRE(run({"ingest", "--csv", (root / "synth/dataset.csv").string(), "--schema",
                     (root / "synth/schema.json").string(), "--out", (root / "ingest").string()})
                    .code == 0);
    }
    std::string path(const std::string& rel) const { return (root / rel).string(); }
};

const Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

std::vector<geocbr::PredictionWitness> witnesses(const fs::path& dir) {
    return geocbr::read_witnesses(dir / "witnesses.jsonl");
}

}  // namespace

TEST_CASE("usage errors") {
    CHECK(run({}).code != 0);
    CHECK(run({"frobnicate"}).code != 0);
    CHECK(run({"predict", "--train", "a", "--test", "b", "--schema", "c", "--baseline", "median", "--out", "d"}).code != 0);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("synth") {
    auto dir = testsupport::temp_dir("cli_synth");
    REQUIRE(run({"synth", "--n", "400", "--seed", "3", "--out", (dir / "a").string()}).code == 0);
    REQUIRE(run({"synth", "--n", "400", "--seed", "3", "--out", (dir / "b").string()}).code == 0);
    CHECK(slurp(dir / "a/dataset.csv") == slurp(dir / "b/dataset.csv"));
    CHECK(slurp(dir / "a/ground_truth.json") == slurp(dir / "b/ground_truth.json"));
    CHECK(fs::exists(dir / "a/schema.json"));

    auto zero = run({"synth", "--n", "0", "--out", (dir / "zero").string()});
    CHECK(zero.code != 0);
    CHECK(zero.err.find("n must be positive") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "zero/manifest.json"));
    CHECK_FALSE(fs::exists(dir / "zero/dataset.csv"));
}

TEST_CASE("manifest") {
    const auto& p = pipeline();
    auto m = load_json(p.root / "ingest/manifest.json");
    CHECK(m["command"] == "ingest");
    CHECK(m["inputs"].size() == 2);
    CHECK(m["inputs"][0]["sha256"].get<std::string>().size() == 64);
    CHECK(m["inputs"][0]["sha256"] == geocbr::cli::sha256_file(p.root / "synth/dataset.csv"));
    std::set<std::string> outputs;
    for (const auto& o : m["outputs"]) outputs.insert(o["path"].get<std::string>());
    CHECK(outputs == std::set<std::string>{"dataset.csv", "train.csv", "test.csv", "schema.json", "ingest_report.json"});
    CHECK(m["timings_ms"]["total_ms"].get<double>() >= 0.0);
    CHECK(m["config"]["cutoff"] == "2017-03-01");
    // known digest of the empty string
    std::ofstream(p.root / "empty");
    CHECK(geocbr::cli::sha256_file(p.root / "empty") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("ingest") {
    const auto& p = pipeline();
    auto report = load_json(p.root / "ingest/ingest_report.json");
    CHECK(report["parse"]["rejected"] == 0);  // generated data round-trips with no rejects
    CHECK(report["cleaning"]["kept"] == 3000);
    CHECK(report["split"]["train"].get<int>() + report["split"]["test"].get<int>() == 3000);

    SUBCASE("idempotent") {
        REQUIRE(run({"ingest", "--csv", p.path("ingest/dataset.csv"), "--schema", p.path("ingest/schema.json"),
                     "--out", p.path("ingest_again")})
                    .code == 0);
        CHECK(slurp(p.root / "ingest_again/dataset.csv") == slurp(p.root / "ingest/dataset.csv"));
        CHECK(slurp(p.root / "ingest_again/train.csv") == slurp(p.root / "ingest/train.csv"));
    }
    SUBCASE("--no-clean keeps a price outlier") {
        auto dir = testsupport::temp_dir("cli_noclean");
        const auto schema = testsupport::schema_of({"living_area"});
        schema.save(dir / "schema.json");
        std::vector<geocbr::Property> props{
            testsupport::make_property(1, 35, 139, {50}, 1e7, "A", testsupport::ymd(2016, 1, 1)),
            testsupport::make_property(2, 35.1, 139, {60}, 5e8, "A", testsupport::ymd(2016, 2, 1)),
            testsupport::make_property(3, 35.2, 139, {70}, 2e7, "A", testsupport::ymd(2017, 5, 1))};
        geocbr::write_csv(dir / "d.csv", schema, props);
        REQUIRE(run({"ingest", "--csv", (dir / "d.csv").string(), "--schema", (dir / "schema.json").string(),
                     "--out", (dir / "clean").string()})
                    .code == 0);
        REQUIRE(run({"ingest", "--csv", (dir / "d.csv").string(), "--schema", (dir / "schema.json").string(),
                     "--no-clean", "--out", (dir / "raw").string()})
                    .code == 0);
        CHECK(geocbr::parse_csv(dir / "clean/dataset.csv", schema).properties.size() == 2);
        CHECK(geocbr::parse_csv(dir / "raw/dataset.csv", schema).properties.size() == 3);
        CHECK(load_json(dir / "raw/ingest_report.json")["cleaning"].is_null());
    }
    SUBCASE("malformed CSV fails") {
        auto dir = testsupport::temp_dir("cli_malformed");
        std::ofstream(dir / "bad.csv") << "id;lat;lon\n1;2;3\n";
        auto r = run({"ingest", "--csv", (dir / "bad.csv").string(), "--schema", p.path("synth/schema.json"), "--out",
                      (dir / "out").string()});
        CHECK(r.code != 0);
        CHECK(r.err.find("header") != std::string::npos);
        CHECK_FALSE(fs::exists(dir / "out/dataset.csv"));
        CHECK(run({"ingest", "--csv", (dir / "missing.csv").string(), "--schema", p.path("synth/schema.json"),
                   "--out", (dir / "out").string()})
                  .code != 0);
    }
    SUBCASE("custom cleaning config") {
        auto dir = testsupport::temp_dir("cli_cleaning");
        std::ofstream(dir / "clean.cfg") << "max_price = 4e7\n";
        REQUIRE(run({"ingest", "--csv", p.path("synth/dataset.csv"), "--schema", p.path("synth/schema.json"),
                     "--cleaning", (dir / "clean.cfg").string(), "--out", (dir / "out").string()})
                    .code == 0);
        CHECK(load_json(dir / "out/ingest_report.json")["cleaning"]["price_outlier"].get<int>() > 0);
        std::ofstream(dir / "typo.cfg") << "max_prize = 2e7\n";
        CHECK(run({"ingest", "--csv", p.path("synth/dataset.csv"), "--schema", p.path("synth/schema.json"),
                   "--cleaning", (dir / "typo.cfg").string(), "--out", (dir / "out2").string()})
                  .code != 0);
    }
}

TEST_CASE("train") {
    const auto& p = pipeline();
    auto train = [&](const std::string& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> args{"train", "--train", p.path("ingest/train.csv"), "--schema",
                                      p.path("ingest/schema.json"), "--config", p.path("ea.cfg"), "--out", p.path(out)};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    };
    REQUIRE(train("train_a").code == 0);
    REQUIRE(train("train_b").code == 0);
    CHECK(slurp(p.root / "train_a/genome.json") == slurp(p.root / "train_b/genome.json"));
    CHECK(slurp(p.root / "train_a/trace.csv") == slurp(p.root / "train_b/trace.csv"));
    auto trace = slurp(p.root / "train_a/trace.csv");
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 3);

    REQUIRE(train("train_cap", {"--m-cap", "10"}).code == 0);
    auto g = load_json(p.root / "train_cap/genome.json");
    CHECK(g["m"].get<int>() <= 10);
    CHECK(load_json(p.root / "train_cap/manifest.json")["config"]["m_cap"] == "10");
    CHECK(train("train_inf", {"--m-cap", "inf"}).code == 0);
    CHECK(train("train_bad", {"--m-cap", "ten"}).code != 0);

    // a training file with no valued rows
    auto dir = testsupport::temp_dir("cli_unvalued");
    const auto schema = testsupport::schema_of({"a"});
    schema.save(dir / "schema.json");
    std::vector<geocbr::Property> unvalued{testsupport::make_property(1, 35, 139, {1}, std::nullopt)};
    geocbr::write_csv(dir / "t.csv", schema, unvalued);
    auto r = run({"train", "--train", (dir / "t.csv").string(), "--schema", (dir / "schema.json").string(), "--out",
                  (dir / "out").string()});
    CHECK(r.code != 0);
}

TEST_CASE("predict and evaluate") {
    const auto& p = pipeline();
    auto predict = [&](const std::string& out, std::vector<std::string> method) {
        std::vector<std::string> args{"predict", "--train", p.path("ingest/train.csv"), "--test",
                                      p.path("ingest/test.csv"), "--schema", p.path("ingest/schema.json"),
                                      "--out", p.path(out)};
        args.insert(args.end(), method.begin(), method.end());
        return run(args);
    };
    const auto test = geocbr::parse_csv(p.root / "ingest/test.csv",
                                        geocbr::AttributeSchema::load(p.root / "ingest/schema.json"))
                          .properties;

    REQUIRE(predict("pred_unweighted", {"--baseline", "unweighted"}).code == 0);
    auto un = witnesses(p.root / "pred_unweighted");
    REQUIRE(un.size() == test.size());
    for (std::size_t i = 0; i < un.size(); ++i) {
        CHECK(un[i].target_id == test[i].id);
        CHECK(un[i].comparables.size() <= 50);
    }
    REQUIRE(predict("pred_lbs", {"--baseline", "lbs"}).code == 0);
    CHECK(witnesses(p.root / "pred_lbs").size() == test.size());

    // a genome capped at 10
    std::ofstream(p.root / "g10.json") << R"({"q": 1.5, "weights": {"rel_0": 1, "rel_1": 0.5}, "filters": {},
        "m": 10, "preselect": {"mode": "k_nearest", "k": 200}})";
    REQUIRE(predict("pred_g10", {"--genome", p.path("g10.json")}).code == 0);
    for (const auto& w : witnesses(p.root / "pred_g10")) CHECK(w.comparables.size() <= 10);

    CHECK(predict("pred_none", {}).code != 0);
    CHECK(predict("pred_both", {"--genome", p.path("g10.json"), "--baseline", "lbs"}).code != 0);

    auto evaluate = [&](const std::string& w, const std::string& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> args{"evaluate", "--witnesses", w, "--test", p.path("ingest/test.csv"), "--schema",
                                      p.path("ingest/schema.json"), "--out", p.path(out)};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    };
    REQUIRE(evaluate(p.path("pred_unweighted/witnesses.jsonl"), "eval_un").code == 0);
    auto report = load_json(p.root / "eval_un/report.json");
    CHECK(report["n"] == test.size());
    CHECK(report["mape"].get<double>() > 0.0);
    CHECK(slurp(p.root / "eval_un/histogram.csv").rfind("bucket_low,bucket_high,count\n", 0) == 0);

    SUBCASE("perfect predictions, as a bare JSON-lines file from another tool") {
        std::ofstream out(p.root / "perfect.jsonl");
        for (const auto& t : test) out << json{{"target_id", t.id}, {"predicted_value", *t.value}}.dump() << '\n';
        out.close();
        REQUIRE(evaluate(p.path("perfect.jsonl"), "eval_perfect").code == 0);
        CHECK(load_json(p.root / "eval_perfect/report.json")["mape"] == 0.0);
    }
    SUBCASE("unknown target id fails") {
        std::ofstream(p.root / "stray.jsonl") << R"({"target_id": 987654321, "predicted_value": 1})" << '\n';
        auto r = evaluate(p.path("stray.jsonl"), "eval_stray");
        CHECK(r.code != 0);
        CHECK_FALSE(fs::exists(p.root / "eval_stray/report.json"));
    }
    SUBCASE("region threshold") {
        // 99 properties in region "tiny"
        auto dir = testsupport::temp_dir("cli_regions");
        const auto schema = testsupport::schema_of({"a"});
        schema.save(dir / "schema.json");
        std::vector<geocbr::Property> props;
        std::ofstream w(dir / "w.jsonl");
        for (int i = 0; i < 250; ++i) {
            props.push_back(testsupport::make_property(i + 1, 35, 139, {1}, 100.0, i < 99 ? "tiny" : "big"));
            w << json{{"target_id", i + 1}, {"predicted_value", 90.0}}.dump() << '\n';
        }
        w.close();
        geocbr::write_csv(dir / "test.csv", schema, props);
        REQUIRE(run({"evaluate", "--witnesses", (dir / "w.jsonl").string(), "--test", (dir / "test.csv").string(),
                     "--schema", (dir / "schema.json").string(), "--min-region-n", "100", "--out",
                     (dir / "out").string()})
                    .code == 0);
        auto regions = load_json(dir / "out/report.json")["per_region"];
        CHECK(regions.contains("big"));
        CHECK_FALSE(regions.contains("tiny"));
    }
}
