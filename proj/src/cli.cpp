#include "geocbr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "geocbr/dataset.hpp"
#include "geocbr/errors.hpp"
#include "geocbr/evolution.hpp"
#include "geocbr/geo_index.hpp"
#include "geocbr/kv_config.hpp"
#include "geocbr/metrics.hpp"
#include "geocbr/predictor.hpp"
#include "geocbr/similarity.hpp"
#include "geocbr/synthgen.hpp"

namespace geocbr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileMissing(path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json kv_json(const KeyValueConfig& kv) {
    json j = json::object();
    for (const auto& [k, v] : kv.entries()) j[k] = v;
    return j;
}

// Collects what a run read and wrote; written last so a manifest only exists
// for runs that finished.
class Manifest {
public:
    Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), dir_(std::move(out_dir)) {}

    void input(const std::string& role, const fs::path& path) {
        inputs_.push_back({{"role", role}, {"path", path.string()}, {"sha256", sha256_file(path)}});
    }
    void config(json snapshot) { config_ = std::move(snapshot); }
    void seed(std::uint64_t s) { seed_ = s; }
    void timing(const std::string& stage, double ms) { timings_[stage] = ms; }
    void result(const std::string& key, json value) { result_[key] = std::move(value); }

    void write_text(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write " + p.string());
        out << text;
        out.close();
        outputs_.push_back({{"path", name}, {"sha256", sha256_file(p)}});
    }
    void record_output(const std::string& name) {
        outputs_.push_back({{"path", name}, {"sha256", sha256_file(dir_ / name)}});
    }

    void finish(Clock::time_point t0) {
        timings_["total_ms"] = ms_since(t0);
        json m = {{"command", command_},
                  {"config", config_},
                  {"inputs", inputs_},
                  {"outputs", outputs_},
                  {"timings_ms", timings_}};
        if (seed_) m["seed"] = *seed_;
        if (!result_.empty()) m["result"] = result_;
        std::ofstream out(dir_ / "manifest.json", std::ios::binary);
        out << m.dump(2) << '\n';
    }

    const fs::path& dir() const { return dir_; }

private:
    std::string command_;
    fs::path dir_;
    json config_ = json::object();
    json inputs_ = json::array();
    json outputs_ = json::array();
    json timings_ = json::object();
    json result_ = json::object();
    std::optional<std::uint64_t> seed_;
};

void prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<Property> load_dataset(const fs::path& path, const AttributeSchema& schema, std::ostream& err) {
    auto parsed = parse_csv(path, schema);
    if (!parsed.rejected.empty()) {
        err << "warning: " << parsed.rejected.size() << " rows rejected in " << path.string() << '\n';
    }
    return std::move(parsed.properties);
}

CleaningConfig cleaning_from_kv(const KeyValueConfig& kv) {
    kv.reject_unknown({"max_price", "lat_min", "lat_max", "lon_min", "lon_max", "dedupe", "dedupe_attributes"});
    CleaningConfig c;
    c.max_price = kv.get_double("max_price", c.max_price);
    c.bounding_box.lat_min = kv.get_double("lat_min", c.bounding_box.lat_min);
    c.bounding_box.lat_max = kv.get_double("lat_max", c.bounding_box.lat_max);
    c.bounding_box.lon_min = kv.get_double("lon_min", c.bounding_box.lon_min);
    c.bounding_box.lon_max = kv.get_double("lon_max", c.bounding_box.lon_max);
    c.dedupe = kv.get_bool("dedupe", c.dedupe);
    if (auto names = kv.get("dedupe_attributes")) {
        c.dedupe_attributes.clear();
        std::stringstream ss(*names);
        for (std::string item; std::getline(ss, item, ',');) {
            while (!item.empty() && item.front() == ' ') item.erase(item.begin());
            while (!item.empty() && item.back() == ' ') item.pop_back();
            if (!item.empty()) c.dedupe_attributes.push_back(item);
        }
    }
    c.validate();
    return c;
}

KeyValueConfig cleaning_to_kv(const CleaningConfig& c) {
    KeyValueConfig kv;
    auto num = [](double v) {
        std::ostringstream s;
        s << std::setprecision(17) << v;
        return s.str();
    };
    kv.set("max_price", num(c.max_price));
    kv.set("lat_min", num(c.bounding_box.lat_min));
    kv.set("lat_max", num(c.bounding_box.lat_max));
    kv.set("lon_min", num(c.bounding_box.lon_min));
    kv.set("lon_max", num(c.bounding_box.lon_max));
    kv.set("dedupe", c.dedupe ? "true" : "false");
    std::string names;
    for (const auto& n : c.dedupe_attributes) names += (names.empty() ? "" : ",") + n;
    kv.set("dedupe_attributes", names);
    return kv;
}

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n;
    std::optional<double> outlier_rate;
    std::string out;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto t0 = Clock::now();
    Manifest m("synth", a.out);
    KeyValueConfig kv;
    if (!a.config.empty()) {
        kv = KeyValueConfig::load(a.config);
        m.input("config", a.config);
    }
    SynthConfig cfg = SynthConfig::from_kv(kv);
    if (a.seed) cfg.seed = *a.seed;
    if (a.n) cfg.n = *a.n;
    if (a.outlier_rate) cfg.outlier_rate = *a.outlier_rate;
    cfg.validate();

    const auto data = generate(cfg);
    m.timing("generate_ms", ms_since(t0));

    prepare_out_dir(a.out);
    m.write_text("dataset.csv", to_csv_text(data.schema, data.properties));
    m.write_text("schema.json", data.schema.to_json().dump(2) + "\n");
    m.write_text("ground_truth.json", data.truth.to_json().dump(2) + "\n");
    m.write_text("synth.cfg", cfg.to_kv().to_string());
    m.config(kv_json(cfg.to_kv()));
    m.seed(cfg.seed);
    m.result("properties", data.properties.size());
    m.result("outliers", data.truth.outlier_ids().size());
    m.finish(t0);
    out << "synth: wrote " << data.properties.size() << " properties to " << a.out << '\n';
}

struct IngestArgs {
    std::string csv;
    std::string schema;
    std::string cleaning;
    bool no_clean = false;
    std::string cutoff = "2017-03-01";
    std::string out;
};

void cmd_ingest(const IngestArgs& a, std::ostream& out) {
    const auto t0 = Clock::now();
    Manifest m("ingest", a.out);
    const auto cutoff = parse_date(a.cutoff);
    if (!cutoff) throw InvalidConfig("bad --cutoff date: " + a.cutoff);
    m.input("csv", a.csv);
    m.input("schema", a.schema);
    const auto schema = AttributeSchema::load(a.schema);

    CleaningConfig cleaning;
    if (!a.cleaning.empty()) {
        m.input("cleaning", a.cleaning);
        cleaning = cleaning_from_kv(KeyValueConfig::load(a.cleaning));
    }

    auto parsed = parse_csv(a.csv, schema);
    m.timing("parse_ms", ms_since(t0));

    json report = {{"parse", parsed.report_json()}};
    std::vector<Property> kept;
    if (a.no_clean) {
        kept = std::move(parsed.properties);
        report["cleaning"] = nullptr;
    } else {
        auto cleaned = clean(parsed.properties, schema, cleaning);
        report["cleaning"] = cleaned.report.to_json();
        kept = std::move(cleaned.kept);
    }
    const auto split = temporal_split(kept, *cutoff);
    report["split"] = {{"cutoff", a.cutoff}, {"train", split.train.size()}, {"test", split.test.size()}};

    prepare_out_dir(a.out);
    m.write_text("dataset.csv", to_csv_text(schema, kept));
    m.write_text("train.csv", to_csv_text(schema, split.train));
    m.write_text("test.csv", to_csv_text(schema, split.test));
    m.write_text("schema.json", schema.to_json().dump(2) + "\n");
    m.write_text("ingest_report.json", report.dump(2) + "\n");
    json cfg = {{"no_clean", a.no_clean}, {"cutoff", a.cutoff}};
    if (!a.no_clean) cfg["cleaning"] = kv_json(cleaning_to_kv(cleaning));
    m.config(cfg);
    m.finish(t0);
    out << "ingest: kept " << kept.size() << " of " << parsed.properties.size() + parsed.rejected.size()
        << " rows (train " << split.train.size() << ", test " << split.test.size() << ")\n";
}

std::size_t parse_m_cap(const std::string& text) {
    if (text == "inf") return kMaxPreselectK;
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || v == 0) {
        throw InvalidConfig("--m-cap expects 'inf' or a positive integer, got '" + text + "'");
    }
    return v;
}

struct TrainArgs {
    std::string train;
    std::string schema;
    std::string config;
    std::string m_cap;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const auto t0 = Clock::now();
    Manifest m("train", a.out);
    m.input("train", a.train);
    m.input("schema", a.schema);
    const auto schema = AttributeSchema::load(a.schema);
    KeyValueConfig kv;
    if (!a.config.empty()) {
        m.input("config", a.config);
        kv = KeyValueConfig::load(a.config);
    }
    EAConfig cfg = EAConfig::from_kv(kv);
    if (!a.m_cap.empty()) cfg.m_cap = parse_m_cap(a.m_cap);
    if (a.seed) cfg.rng_seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    cfg.validate();

    const auto train = load_dataset(a.train, schema, err);
    const auto store = ValuedStore::from_training(train, schema);
    if (store.size() == 0) throw EmptyTrainingSet();
    const auto index = GeoIndex::build(store.properties());
    m.timing("load_ms", ms_since(t0));
    const auto t1 = Clock::now();
    const auto result = evolve(cfg, store, index);
    m.timing("evolve_ms", ms_since(t1));

    prepare_out_dir(a.out);
    m.write_text("genome.json", genome_to_json(result.best, schema).dump(2) + "\n");
    m.write_text("trace.csv", result.trace.to_csv());
    // threads never changes results, so it stays out of the reproducible snapshot
    auto snapshot = cfg.to_kv();
    m.config(kv_json(snapshot));
    m.seed(cfg.rng_seed);
    m.result("best_fitness", result.best_fitness);
    m.result("evaluations", result.trace.evaluations);
    m.result("restarts", result.trace.restart_generations.size());
    m.finish(t0);
    out << "train: best fitness " << result.best_fitness << " after " << cfg.generations << " generations\n";
}

struct PredictArgs {
    std::string train;
    std::string test;
    std::string schema;
    std::string genome;
    std::string baseline;
    unsigned threads = 1;
    std::string out;
};

void cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
    const auto t0 = Clock::now();
    Manifest m("predict", a.out);
    if (a.genome.empty() == a.baseline.empty()) throw InvalidConfig("give exactly one of --genome and --baseline");
    m.input("train", a.train);
    m.input("test", a.test);
    m.input("schema", a.schema);
    const auto schema = AttributeSchema::load(a.schema);

    SimilarityGenome genome;
    SimilarityFamily family = SimilarityFamily::weighted_quasi_norm;
    if (!a.genome.empty()) {
        m.input("genome", a.genome);
        std::ifstream in(a.genome);
        if (!in) throw FileMissing(a.genome);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw InvalidConfig("genome file: " + std::string(e.what()));
        }
        genome = genome_from_json(j, schema);
    } else if (a.baseline == "lbs") {
        genome = presets::lbs(schema.size());
        family = SimilarityFamily::location;
    } else if (a.baseline == "unweighted") {
        genome = presets::unweighted(schema.size());
    } else {
        throw InvalidConfig("unknown baseline '" + a.baseline + "' (expected lbs or unweighted)");
    }
    validate_genome(genome, schema.size());

    const auto train = load_dataset(a.train, schema, err);
    const auto test = load_dataset(a.test, schema, err);
    const auto store = ValuedStore::from_training(train, schema);
    if (store.size() == 0) throw EmptyTrainingSet();
    const auto index = GeoIndex::build(store.properties());
    const FallbackModel fallback(store);
    m.timing("load_ms", ms_since(t0));
    const auto t1 = Clock::now();
    const auto witnesses = predict_batch_or_fallback(test, genome, index, store, fallback, family, a.threads);
    m.timing("predict_ms", ms_since(t1));

    std::string lines;
    std::size_t fallbacks = 0;
    for (const auto& w : witnesses) {
        lines += witness_to_json(w).dump();
        lines.push_back('\n');
        fallbacks += w.fallback_used ? 1 : 0;
    }
    prepare_out_dir(a.out);
    m.write_text("witnesses.jsonl", lines);
    json cfg = {{"method", a.baseline.empty() ? "genome" : a.baseline},
                {"genome", genome_to_json(genome, schema)},
                {"family", family == SimilarityFamily::location ? "location" : "weighted_quasi_norm"}};
    m.config(cfg);
    m.result("predictions", witnesses.size());
    m.result("fallback_count", fallbacks);
    m.finish(t0);
    out << "predict: " << witnesses.size() << " witnesses (" << fallbacks << " fallback)\n";
}

struct EvaluateArgs {
    std::string witnesses;
    std::string test;
    std::string schema;
    std::size_t min_region_n = 100;
    std::string out;
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    const auto t0 = Clock::now();
    Manifest m("evaluate", a.out);
    m.input("witnesses", a.witnesses);
    m.input("test", a.test);
    m.input("schema", a.schema);
    const auto schema = AttributeSchema::load(a.schema);
    const auto witnesses = read_witnesses(a.witnesses);
    const auto test = load_dataset(a.test, schema, err);
    const auto report = evaluate(witnesses, ground_truth_of(test), a.min_region_n);

    prepare_out_dir(a.out);
    m.write_text("report.json", report.to_json().dump(2) + "\n");
    m.write_text("histogram.csv", report.histogram.to_csv());
    m.config({{"min_region_n", a.min_region_n}});
    m.result("mape", report.mape);
    m.result("mpe", report.mpe);
    m.finish(t0);
    out << "evaluate: n " << report.n << ", MAPE " << report.mape << ", MPE " << report.mpe << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Case-based property valuation with evolved similarity functions", "geocbr"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
    s->add_option("--config", synth.config, "Synthesis config (key = value)")->check(CLI::ExistingFile);
    s->add_option("--seed", synth.seed, "Override the config seed");
    s->add_option("--n", synth.n, "Override the number of properties");
    s->add_option("--outlier-rate", synth.outlier_rate, "Override the outlier rate");
    s->add_option("--out", synth.out, "Run directory")->required();

    IngestArgs ingest;
    auto* i = app.add_subcommand("ingest", "Validate, clean and split a dataset CSV");
    i->add_option("--csv", ingest.csv, "Dataset CSV")->required();
    i->add_option("--schema", ingest.schema, "Attribute schema JSON")->required();
    i->add_option("--cleaning", ingest.cleaning, "Cleaning config (key = value)");
    i->add_flag("--no-clean", ingest.no_clean, "Skip cleaning; parsing validation still applies");
    i->add_option("--cutoff", ingest.cutoff, "Temporal split date (YYYY-MM-DD)")->capture_default_str();
    i->add_option("--out", ingest.out, "Run directory")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Evolve a similarity genome");
    t->add_option("--train", train.train, "Training CSV")->required();
    t->add_option("--schema", train.schema, "Attribute schema JSON")->required();
    t->add_option("--config", train.config, "EA config (key = value)");
    t->add_option("--m-cap", train.m_cap, "Post-selection cap: inf or an integer such as 10");
    t->add_option("--seed", train.seed, "Override rng_seed");
    t->add_option("--threads", train.threads, "Override the worker thread count");
    t->add_option("--out", train.out, "Run directory")->required();

    PredictArgs predict;
    auto* p = app.add_subcommand("predict", "Predict test values and write witnesses");
    p->add_option("--train", predict.train, "Training CSV")->required();
    p->add_option("--test", predict.test, "Test CSV")->required();
    p->add_option("--schema", predict.schema, "Attribute schema JSON")->required();
    auto* g = p->add_option("--genome", predict.genome, "Evolved genome JSON");
    auto* b = p->add_option("--baseline", predict.baseline, "Built-in baseline")
                  ->check(CLI::IsMember({"lbs", "unweighted"}));
    g->excludes(b);
    p->add_option("--threads", predict.threads, "Worker threads")->capture_default_str();
    p->add_option("--out", predict.out, "Run directory")->required();

    EvaluateArgs evaluate_args;
    auto* e = app.add_subcommand("evaluate", "Score witnesses against the test set");
    e->add_option("--witnesses", evaluate_args.witnesses, "Witnesses or predictions JSON-lines")->required();
    e->add_option("--test", evaluate_args.test, "Test CSV")->required();
    e->add_option("--schema", evaluate_args.schema, "Attribute schema JSON")->required();
    e->add_option("--min-region-n", evaluate_args.min_region_n, "Smallest region reported separately")
        ->capture_default_str();
    e->add_option("--out", evaluate_args.out, "Run directory")->required();

    // CLI11 consumes arguments from the back and without the program name.
    std::vector<std::string> rev(args.empty() ? args.end() : args.begin() + 1, args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(std::move(rev));
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex, out, err);
    }

    try {
        if (s->parsed()) cmd_synth(synth, out);
        if (i->parsed()) cmd_ingest(ingest, out);
        if (t->parsed()) cmd_train(train, out, err);
        if (p->parsed()) cmd_predict(predict, out, err);
        if (e->parsed()) cmd_evaluate(evaluate_args, out, err);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace geocbr::cli
