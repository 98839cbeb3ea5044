#ifndef GEOCBR_DATASET_HPP
#define GEOCBR_DATASET_HPP

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace geocbr {

using Date = std::chrono::year_month_day;

/// Parses `YYYY-MM-DD`. Returns nullopt on anything else, including invalid
/// calendar dates such as 2017-02-30.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date date);

struct GeoPoint {
    double lat_deg = 0.0;
    double lon_deg = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

enum class AttributeKind { continuous, categorical };

struct AttributeSpec {
    std::string name;
    AttributeKind kind = AttributeKind::continuous;
    std::string unit;
};

/**
 * Ordered attribute list. The position of an attribute here is its index in
 * every attribute vector, weight vector and filter vector downstream.
 */
class AttributeSchema {
public:
    AttributeSchema() = default;
    explicit AttributeSchema(std::vector<AttributeSpec> attributes);

    std::size_t size() const noexcept { return attributes_.size(); }
    const AttributeSpec& operator[](std::size_t i) const { return attributes_[i]; }
    const std::vector<AttributeSpec>& attributes() const noexcept { return attributes_; }
    std::optional<std::size_t> index_of(std::string_view name) const;

    nlohmann::json to_json() const;
    static AttributeSchema from_json(const nlohmann::json& j);
    static AttributeSchema load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<AttributeSpec> attributes_;
};

struct Property {
    std::int64_t id = 0;
    GeoPoint location;
    Date offer_date{};
    std::vector<double> attributes;
    std::optional<double> value;
    std::optional<std::string> region;
};

// ---------------------------------------------------------------------------
// CSV

struct RowRejection {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string reason;
};

struct ParseResult {
    std::vector<Property> properties;
    std::vector<RowRejection> rejected;

    nlohmann::json report_json() const;
};

/// Fixed leading columns of every dataset file.
inline constexpr std::string_view kFixedColumns[] = {"id", "lat", "lon", "offer_date", "value", "region"};

/**
 * Reads a dataset CSV. Throws FileMissing or HeaderMismatch; bad rows are
 * collected in ParseResult::rejected and never silently dropped.
 */
ParseResult parse_csv(const std::filesystem::path& path, const AttributeSchema& schema);
ParseResult parse_csv_text(std::string_view text, const AttributeSchema& schema);

/// Canonical writer. Doubles are written in shortest round-trip form so that
/// parse -> write is a fixed point.
void write_csv(const std::filesystem::path& path, const AttributeSchema& schema,
               std::span<const Property> properties);
std::string to_csv_text(const AttributeSchema& schema, std::span<const Property> properties);

// ---------------------------------------------------------------------------
// Cleaning

struct BoundingBox {
    double lat_min = 24.0;
    double lat_max = 46.0;
    double lon_min = 122.0;
    double lon_max = 146.0;

    bool contains(GeoPoint p) const noexcept {
        return p.lat_deg >= lat_min && p.lat_deg <= lat_max && p.lon_deg >= lon_min && p.lon_deg <= lon_max;
    }
};

struct CleaningConfig {
    double max_price = 3e8;
    BoundingBox bounding_box;
    bool dedupe = true;
    // Attributes that join the rounded location in the duplicate key. Names
    // missing from the schema are ignored.
    std::vector<std::string> dedupe_attributes{"living_area", "object_type"};

    void validate() const;
};

struct CleaningReport {
    std::size_t input = 0;
    std::size_t duplicates = 0;
    std::size_t price_outliers = 0;
    std::size_t outside_box = 0;
    std::size_t kept = 0;

    nlohmann::json to_json() const;
};

struct CleaningResult {
    std::vector<Property> kept;
    CleaningReport report;
};

CleaningResult clean(std::span<const Property> properties, const AttributeSchema& schema,
                     const CleaningConfig& config = {});

// ---------------------------------------------------------------------------
// Split and scaling

struct TemporalSplit {
    std::vector<Property> train;
    std::vector<Property> test;
};

/// train: offer_date < cutoff. test: offer_date >= cutoff and valued.
TemporalSplit temporal_split(std::span<const Property> properties, Date cutoff);

class Scaler {
public:
    struct Range {
        double min = 0.0;
        double max = 0.0;
    };

    Scaler() = default;
    explicit Scaler(std::vector<Range> ranges);

    std::size_t size() const noexcept { return ranges_.size(); }
    const Range& range(std::size_t i) const { return ranges_[i]; }

    /// Linear map of [min, max] onto [0, 1]; out-of-range inputs clamp and
    /// constant attributes map to 0.
    double scale(std::size_t i, double raw) const;
    void scale_into(std::span<const double> raw, std::span<double> out) const;
    std::vector<double> scale(std::span<const double> raw) const;

private:
    std::vector<Range> ranges_;
};

Scaler fit_scaler(std::span<const Property> train, const AttributeSchema& schema);
Property apply_scaler(const Scaler& scaler, const Property& property);

}  // namespace geocbr

#endif  // GEOCBR_DATASET_HPP
