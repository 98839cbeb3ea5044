// Helpers shared by the unit tests.
#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "geocbr/dataset.hpp"

namespace testsupport {

inline geocbr::AttributeSchema schema_of(std::initializer_list<const char*> names) {
    std::vector<geocbr::AttributeSpec> specs;
    for (auto n : names) specs.push_back({n, geocbr::AttributeKind::continuous, ""});
    return geocbr::AttributeSchema(std::move(specs));
}

inline geocbr::Date ymd(int y, unsigned m, unsigned d) {
    return geocbr::Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

inline geocbr::Property make_property(std::int64_t id, double lat, double lon, std::vector<double> attrs,
                                      std::optional<double> value, std::optional<std::string> region = {},
                                      geocbr::Date date = ymd(2016, 1, 1)) {
    geocbr::Property p;
    p.id = id;
    p.location = {lat, lon};
    p.offer_date = date;
    p.attributes = std::move(attrs);
    p.value = value;
    p.region = std::move(region);
    return p;
}

// Random valued properties around Tokyo with attributes in [0, 100).
inline std::vector<geocbr::Property> random_properties(std::size_t n, std::size_t n_attr, std::uint64_t seed,
                                                       double spread_deg = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> off(-spread_deg, spread_deg);
    std::uniform_real_distribution<double> attr(0.0, 100.0);
    std::uniform_real_distribution<double> price(1e6, 1e8);
    std::vector<geocbr::Property> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> a(n_attr);
        for (auto& x : a) x = attr(rng);
        out.push_back(make_property(static_cast<std::int64_t>(i + 1), 35.68 + off(rng), 139.69 + off(rng),
                                    std::move(a), price(rng), "R" + std::to_string(i % 3)));
    }
    return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("geocbr_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace testsupport
