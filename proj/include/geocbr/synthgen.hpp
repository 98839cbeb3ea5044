#ifndef GEOCBR_SYNTHGEN_HPP
#define GEOCBR_SYNTHGEN_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocbr/dataset.hpp"
#include "geocbr/kv_config.hpp"

namespace geocbr {

/**
 * Synthetic benchmark: a price surface made of Gaussian bumps over a box,
 * a few attributes that move the price, a few that do not, multiplicative
 * noise and optional gross outliers.
 */
struct SynthConfig {
    std::size_t n = 20'000;
    std::uint64_t seed = 1;
    std::size_t n_relevant_attrs = 2;
    std::size_t n_noise_attrs = 5;

    // Area the properties are spread over.
    double lat_min = 34.15;
    double lat_max = 36.85;
    double lon_min = 137.85;
    double lon_max = 141.15;

    std::size_t n_bumps = 6;
    double amplitude_min = 1.0;
    double amplitude_max = 5.0;
    double width_min_m = 15'000.0;
    double width_max_m = 40'000.0;

    double base_price = 1e7;
    /// Each relevant attribute multiplies the price by exp(beta (a' - 0.5))
    /// where a' is the attribute mapped onto [0, 1].
    double attribute_effect = 0.8;
    double attribute_min = 0.0;
    double attribute_max = 100.0;

    double noise_sigma = 0.05;
    double outlier_rate = 0.0;
    double outlier_multiplier = 100.0;

    std::size_t region_grid = 4;
    Date date_start{std::chrono::year{2013}, std::chrono::month{3}, std::chrono::day{1}};
    Date date_end{std::chrono::year{2018}, std::chrono::month{3}, std::chrono::day{1}};

    void validate() const;
    static SynthConfig from_kv(const KeyValueConfig& kv);
    KeyValueConfig to_kv() const;
};

struct Bump {
    GeoPoint center;
    double amplitude = 0.0;
    double width_m = 0.0;
};

/// The noiseless price function behind a generated dataset.
class GroundTruthModel {
public:
    GroundTruthModel() = default;
    GroundTruthModel(std::vector<Bump> bumps, std::vector<std::size_t> relevant, double base_price,
                     double attribute_effect, double attribute_min, double attribute_max);

    /// 1 + sum of bumps; always >= 1.
    double location_field(const GeoPoint& p) const;
    double attribute_factor(std::span<const double> attributes) const;
    double noiseless_price(const GeoPoint& location, std::span<const double> attributes) const;
    double noiseless_price(const Property& p) const { return noiseless_price(p.location, p.attributes); }

    /// Bound on |field(p) - field(q)| per meter of great-circle distance.
    double lipschitz_constant() const;
    /// Upper bound on the noiseless price ratio of two properties with equal
    /// attributes that lie at most `epsilon_m` apart.
    double ratio_bound(double epsilon_m) const;

    const std::vector<Bump>& bumps() const noexcept { return bumps_; }
    const std::vector<std::size_t>& relevant_attributes() const noexcept { return relevant_; }
    const std::vector<std::int64_t>& outlier_ids() const noexcept { return outliers_; }
    void set_outlier_ids(std::vector<std::int64_t> ids) { outliers_ = std::move(ids); }

    nlohmann::json to_json() const;
    static GroundTruthModel from_json(const nlohmann::json& j);

private:
    std::vector<Bump> bumps_;
    std::vector<std::size_t> relevant_;
    double base_price_ = 1.0;
    double effect_ = 0.0;
    double attr_min_ = 0.0;
    double attr_max_ = 1.0;
    std::vector<std::int64_t> outliers_;
};

struct SynthDataset {
    AttributeSchema schema;
    std::vector<Property> properties;
    GroundTruthModel truth;
};

/// Attributes are named rel_0.. then noise_0..; ids run from 1.
SynthDataset generate(const SynthConfig& config);

}  // namespace geocbr

#endif  // GEOCBR_SYNTHGEN_HPP
