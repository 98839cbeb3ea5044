#ifndef GEOCBR_GEO_INDEX_HPP
#define GEOCBR_GEO_INDEX_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "geocbr/dataset.hpp"

namespace geocbr {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine_m(GeoPoint a, GeoPoint b) noexcept;

/**
 * Geographic pre-selection rule. KNearest keeps the k closest points,
 * Radius keeps every point strictly closer than radius_m, Both keeps the k
 * closest among those strictly closer than radius_m.
 */
struct PreselectMode {
    enum class Kind { k_nearest, radius, both };

    Kind kind = Kind::k_nearest;
    std::size_t k = 1;
    double radius_m = std::numeric_limits<double>::infinity();

    static PreselectMode nearest(std::size_t k) { return {Kind::k_nearest, k, std::numeric_limits<double>::infinity()}; }
    static PreselectMode within(double r) { return {Kind::radius, 0, r}; }
    static PreselectMode both(std::size_t k, double r) { return {Kind::both, k, r}; }

    friend bool operator==(const PreselectMode&, const PreselectMode&) = default;
};

struct Neighbor {
    std::int64_t id = 0;
    std::uint32_t row = 0;  // position in the sequence the index was built from
    double distance_m = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Result order used by every query: ascending distance, then ascending id.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) noexcept {
    return a.distance_m < b.distance_m || (a.distance_m == b.distance_m && a.id < b.id);
}

/**
 * Immutable bulk-loaded R-tree over points on the sphere.
 *
 * Points are embedded as unit vectors; the tree is packed with
 * sort-tile-recursive in 3-D so that the Euclidean distance to a node box
 * bounds the chord, and therefore the great-circle distance, from below.
 * Reported distances are always computed with haversine_m(query, point), so
 * results agree exactly with a brute-force scan.
 */
class GeoIndex {
public:
    struct Entry {
        GeoPoint location;
        std::int64_t id = 0;
    };

    /// Builds over valued properties; rows refer to positions in `valued`.
    static GeoIndex build(std::span<const Property> valued);
    static GeoIndex build(std::span<const Entry> entries);

    std::size_t size() const noexcept { return points_.size(); }

    std::vector<Neighbor> knn(GeoPoint query, std::size_t k, std::optional<std::int64_t> exclude_id = {}) const;
    std::vector<Neighbor> within_radius(GeoPoint query, double radius_m,
                                        std::optional<std::int64_t> exclude_id = {}) const;
    std::vector<Neighbor> preselect(GeoPoint query, const PreselectMode& mode,
                                    std::optional<std::int64_t> exclude_id = {}) const;

private:
    struct Point {
        std::array<double, 3> xyz;
        GeoPoint location;
        std::int64_t id;
        std::uint32_t row;
    };
    struct Node {
        std::array<double, 3> lo;
        std::array<double, 3> hi;
        std::uint32_t begin;  // child nodes or points
        std::uint32_t end;
        bool leaf;
    };

    GeoIndex() = default;
    // k nearest with distance strictly below max_distance_m.
    std::vector<Neighbor> nearest(GeoPoint query, std::size_t k, double max_distance_m,
                                  std::optional<std::int64_t> exclude_id) const;
    double lower_bound_m(const Node& node, const std::array<double, 3>& q) const noexcept;

    std::vector<Point> points_;
    std::vector<Node> nodes_;
    std::uint32_t root_ = 0;
};

}  // namespace geocbr

#endif  // GEOCBR_GEO_INDEX_HPP
