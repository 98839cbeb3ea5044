#include "geocbr/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "geocbr/errors.hpp"
#include "geocbr/geo_index.hpp"
#include "geocbr/rng.hpp"

namespace geocbr {

namespace {

// Independent streams so that, for example, changing the outlier rate leaves
// every other draw untouched.
constexpr std::uint64_t kFieldStream = 1;
constexpr std::uint64_t kPropertyStream = 2;
constexpr std::uint64_t kOutlierStream = 3;

std::string num(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, ptr};
}

Date kv_date(const KeyValueConfig& kv, const std::string& key, Date fallback) {
    auto text = kv.get(key);
    if (!text) return fallback;
    auto d = parse_date(*text);
    if (!d) throw InvalidConfig("config key '" + key + "': bad date '" + *text + "'");
    return *d;
}

}  // namespace

void SynthConfig::validate() const {
    if (n == 0) throw InvalidConfig("synth: n must be positive");
    if (n_relevant_attrs + n_noise_attrs == 0) throw InvalidConfig("synth: at least one attribute is required");
    if (!(lat_min < lat_max) || !(lon_min < lon_max)) throw InvalidConfig("synth: empty bounding box");
    if (lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0) {
        throw InvalidConfig("synth: bounding box outside the globe");
    }
    if (!(amplitude_min >= 0.0 && amplitude_min <= amplitude_max)) throw InvalidConfig("synth: bad amplitude range");
    if (!(width_min_m > 0.0 && width_min_m <= width_max_m)) throw InvalidConfig("synth: bad bump width range");
    if (!(base_price > 0.0) || !std::isfinite(base_price)) throw InvalidConfig("synth: base_price must be positive");
    if (!std::isfinite(attribute_effect)) throw InvalidConfig("synth: attribute_effect must be finite");
    if (!(attribute_min < attribute_max)) throw InvalidConfig("synth: empty attribute range");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidConfig("synth: noise_sigma must be >= 0");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw InvalidConfig("synth: outlier_rate must be in [0, 1]");
    if (!(outlier_multiplier > 0.0) || !std::isfinite(outlier_multiplier)) {
        throw InvalidConfig("synth: outlier_multiplier must be positive");
    }
    if (region_grid == 0) throw InvalidConfig("synth: region_grid must be positive");
    if (!date_start.ok() || !date_end.ok() || !(date_start < date_end)) throw InvalidConfig("synth: empty date range");
}

SynthConfig SynthConfig::from_kv(const KeyValueConfig& kv) {
    kv.reject_unknown({"n", "seed", "n_relevant_attrs", "n_noise_attrs", "lat_min", "lat_max", "lon_min", "lon_max",
                       "n_bumps", "amplitude_min", "amplitude_max", "width_min_m", "width_max_m", "base_price",
                       "attribute_effect", "attribute_min", "attribute_max", "noise_sigma", "outlier_rate",
                       "outlier_multiplier", "region_grid", "date_start", "date_end"});
    SynthConfig c;
    c.n = kv.get_uint("n", c.n);
    c.seed = kv.get_uint("seed", c.seed);
    c.n_relevant_attrs = kv.get_uint("n_relevant_attrs", c.n_relevant_attrs);
    c.n_noise_attrs = kv.get_uint("n_noise_attrs", c.n_noise_attrs);
    c.lat_min = kv.get_double("lat_min", c.lat_min);
    c.lat_max = kv.get_double("lat_max", c.lat_max);
    c.lon_min = kv.get_double("lon_min", c.lon_min);
    c.lon_max = kv.get_double("lon_max", c.lon_max);
    c.n_bumps = kv.get_uint("n_bumps", c.n_bumps);
    c.amplitude_min = kv.get_double("amplitude_min", c.amplitude_min);
    c.amplitude_max = kv.get_double("amplitude_max", c.amplitude_max);
    c.width_min_m = kv.get_double("width_min_m", c.width_min_m);
    c.width_max_m = kv.get_double("width_max_m", c.width_max_m);
    c.base_price = kv.get_double("base_price", c.base_price);
    c.attribute_effect = kv.get_double("attribute_effect", c.attribute_effect);
    c.attribute_min = kv.get_double("attribute_min", c.attribute_min);
    c.attribute_max = kv.get_double("attribute_max", c.attribute_max);
    c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
    c.outlier_rate = kv.get_double("outlier_rate", c.outlier_rate);
    c.outlier_multiplier = kv.get_double("outlier_multiplier", c.outlier_multiplier);
    c.region_grid = kv.get_uint("region_grid", c.region_grid);
    c.date_start = kv_date(kv, "date_start", c.date_start);
    c.date_end = kv_date(kv, "date_end", c.date_end);
    c.validate();
    return c;
}

KeyValueConfig SynthConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("n", std::to_string(n));
    kv.set("seed", std::to_string(seed));
    kv.set("n_relevant_attrs", std::to_string(n_relevant_attrs));
    kv.set("n_noise_attrs", std::to_string(n_noise_attrs));
    kv.set("lat_min", num(lat_min));
    kv.set("lat_max", num(lat_max));
    kv.set("lon_min", num(lon_min));
    kv.set("lon_max", num(lon_max));
    kv.set("n_bumps", std::to_string(n_bumps));
    kv.set("amplitude_min", num(amplitude_min));
    kv.set("amplitude_max", num(amplitude_max));
    kv.set("width_min_m", num(width_min_m));
    kv.set("width_max_m", num(width_max_m));
    kv.set("base_price", num(base_price));
    kv.set("attribute_effect", num(attribute_effect));
    kv.set("attribute_min", num(attribute_min));
    kv.set("attribute_max", num(attribute_max));
    kv.set("noise_sigma", num(noise_sigma));
    kv.set("outlier_rate", num(outlier_rate));
    kv.set("outlier_multiplier", num(outlier_multiplier));
    kv.set("region_grid", std::to_string(region_grid));
    kv.set("date_start", format_date(date_start));
    kv.set("date_end", format_date(date_end));
    return kv;
}

// ---------------------------------------------------------------------------

GroundTruthModel::GroundTruthModel(std::vector<Bump> bumps, std::vector<std::size_t> relevant, double base_price,
                                   double attribute_effect, double attribute_min, double attribute_max)
    : bumps_(std::move(bumps)),
      relevant_(std::move(relevant)),
      base_price_(base_price),
      effect_(attribute_effect),
      attr_min_(attribute_min),
      attr_max_(attribute_max) {}

double GroundTruthModel::location_field(const GeoPoint& p) const {
    double f = 1.0;
    for (const auto& b : bumps_) {
        const double d = haversine_m(p, b.center);
        f += b.amplitude * std::exp(-d * d / (2.0 * b.width_m * b.width_m));
    }
    return f;
}

double GroundTruthModel::attribute_factor(std::span<const double> attributes) const {
    double f = 1.0;
    for (auto i : relevant_) {
        const double u = std::clamp((attributes[i] - attr_min_) / (attr_max_ - attr_min_), 0.0, 1.0);
        f *= std::exp(effect_ * (u - 0.5));
    }
    return f;
}

double GroundTruthModel::noiseless_price(const GeoPoint& location, std::span<const double> attributes) const {
    return base_price_ * location_field(location) * attribute_factor(attributes);
}

// A bump A exp(-d^2 / 2 s^2) changes at most A / (s sqrt(e)) per meter of d,
// and d moves by at most the distance between the two points.
double GroundTruthModel::lipschitz_constant() const {
    double L = 0.0;
    for (const auto& b : bumps_) L += b.amplitude / (b.width_m * std::sqrt(std::exp(1.0)));
    return L;
}

double GroundTruthModel::ratio_bound(double epsilon_m) const {
    return 1.0 + lipschitz_constant() * epsilon_m;  // the field never drops below 1
}

nlohmann::json GroundTruthModel::to_json() const {
    nlohmann::json bumps = nlohmann::json::array();
    for (const auto& b : bumps_) {
        bumps.push_back({{"lat", b.center.lat_deg},
                         {"lon", b.center.lon_deg},
                         {"amplitude", b.amplitude},
                         {"width_m", b.width_m}});
    }
    return {{"base_price", base_price_},
            {"bumps", bumps},
            {"relevant_attributes", relevant_},
            {"attribute_effect", effect_},
            {"attribute_min", attr_min_},
            {"attribute_max", attr_max_},
            {"lipschitz_per_m", lipschitz_constant()},
            {"outlier_ids", outliers_}};
}

GroundTruthModel GroundTruthModel::from_json(const nlohmann::json& j) {
    try {
        std::vector<Bump> bumps;
        for (const auto& b : j.at("bumps")) {
            bumps.push_back({{b.at("lat").get<double>(), b.at("lon").get<double>()},
                             b.at("amplitude").get<double>(),
                             b.at("width_m").get<double>()});
        }
        GroundTruthModel m(std::move(bumps), j.at("relevant_attributes").get<std::vector<std::size_t>>(),
                           j.at("base_price").get<double>(), j.at("attribute_effect").get<double>(),
                           j.at("attribute_min").get<double>(), j.at("attribute_max").get<double>());
        m.outliers_ = j.value("outlier_ids", std::vector<std::int64_t>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("ground truth JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

SynthDataset generate(const SynthConfig& config) {
    config.validate();
    const auto& c = config;

    Rng field_rng(derive_seed(c.seed, kFieldStream));
    std::uniform_real_distribution<double> lat_dist(c.lat_min, c.lat_max);
    std::uniform_real_distribution<double> lon_dist(c.lon_min, c.lon_max);
    std::vector<Bump> bumps(c.n_bumps);
    for (auto& b : bumps) {
        b.center = {lat_dist(field_rng), lon_dist(field_rng)};
        b.amplitude = std::uniform_real_distribution<double>(c.amplitude_min, c.amplitude_max)(field_rng);
        b.width_m = std::uniform_real_distribution<double>(c.width_min_m, c.width_max_m)(field_rng);
    }

    std::vector<AttributeSpec> specs;
    std::vector<std::size_t> relevant;
    for (std::size_t i = 0; i < c.n_relevant_attrs; ++i) {
        relevant.push_back(specs.size());
        specs.push_back({"rel_" + std::to_string(i), AttributeKind::continuous, ""});
    }
    for (std::size_t i = 0; i < c.n_noise_attrs; ++i) {
        specs.push_back({"noise_" + std::to_string(i), AttributeKind::continuous, ""});
    }

    SynthDataset out{AttributeSchema(std::move(specs)), {},
                     GroundTruthModel(std::move(bumps), std::move(relevant), c.base_price, c.attribute_effect,
                                      c.attribute_min, c.attribute_max)};

    Rng rng(derive_seed(c.seed, kPropertyStream));
    Rng outlier_rng(derive_seed(c.seed, kOutlierStream));
    const auto first_day = std::chrono::sys_days(c.date_start).time_since_epoch().count();
    const auto last_day = std::chrono::sys_days(c.date_end).time_since_epoch().count() - 1;
    std::uniform_int_distribution<long long> day_dist(first_day, last_day);
    std::uniform_real_distribution<double> attr_dist(c.attribute_min, c.attribute_max);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::bernoulli_distribution is_outlier(c.outlier_rate);
    const std::size_t n_attr = out.schema.size();
    std::vector<std::int64_t> outliers;

    out.properties.reserve(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        Property p;
        p.id = static_cast<std::int64_t>(i + 1);
        p.location = {lat_dist(rng), lon_dist(rng)};
        p.offer_date = std::chrono::sys_days(std::chrono::days(day_dist(rng)));
        p.attributes.resize(n_attr);
        for (auto& a : p.attributes) a = attr_dist(rng);
        double value = out.truth.noiseless_price(p) * std::exp(c.noise_sigma * noise(rng));
        if (is_outlier(outlier_rng)) {
            value *= c.outlier_multiplier;
            outliers.push_back(p.id);
        }
        p.value = value;
        const auto gi = std::min(c.region_grid - 1, static_cast<std::size_t>((p.location.lat_deg - c.lat_min) /
                                                                            (c.lat_max - c.lat_min) * c.region_grid));
        const auto gj = std::min(c.region_grid - 1, static_cast<std::size_t>((p.location.lon_deg - c.lon_min) /
                                                                            (c.lon_max - c.lon_min) * c.region_grid));
        p.region = "R" + std::to_string(gi) + "_" + std::to_string(gj);
        out.properties.push_back(std::move(p));
    }
    out.truth.set_outlier_ids(std::move(outliers));
    return out;
}

}  // namespace geocbr
