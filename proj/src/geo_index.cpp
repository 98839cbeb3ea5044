#include "geocbr/geo_index.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <utility>

#include "geocbr/errors.hpp"

namespace geocbr {

namespace {

constexpr std::uint32_t kNodeCapacity = 16;

// Absolute slack subtracted from node bounds. Rounding in the unit-vector
// embedding and in haversine itself stays far below a millimetre, even near
// antipodes, so a metre keeps pruning conservative.
constexpr double kBoundSlackM = 1.0;

constexpr double deg2rad(double deg) noexcept { return deg * (std::numbers::pi / 180.0); }

std::array<double, 3> unit_vector(GeoPoint p) noexcept {
    const double lat = deg2rad(p.lat_deg);
    const double lon = deg2rad(p.lon_deg);
    const double c = std::cos(lat);
    return {c * std::cos(lon), c * std::sin(lon), std::sin(lat)};
}

// Sort-tile-recursive grouping of `items` (reordered in place) into runs of
// at most `capacity`. Returns [begin, end) of each run.
template <class Center>
std::vector<std::pair<std::uint32_t, std::uint32_t>> str_groups(std::vector<std::uint32_t>& items, Center center,
                                                                 std::uint32_t capacity) {
    const std::size_t n = items.size();
    const std::size_t pages = (n + capacity - 1) / capacity;
    const auto slices = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(pages))));
    const std::size_t strip = slices * capacity;
    const std::size_t slab = slices * strip;

    auto by_axis = [&](int axis) {
        return [&center, axis](std::uint32_t a, std::uint32_t b) { return center(a)[axis] < center(b)[axis]; };
    };

    std::vector<std::pair<std::uint32_t, std::uint32_t>> groups;
    std::stable_sort(items.begin(), items.end(), by_axis(0));
    for (std::size_t s0 = 0; s0 < n; s0 += slab) {
        const std::size_t s1 = std::min(n, s0 + slab);
        std::stable_sort(items.begin() + s0, items.begin() + s1, by_axis(1));
        for (std::size_t t0 = s0; t0 < s1; t0 += strip) {
            const std::size_t t1 = std::min(s1, t0 + strip);
            std::stable_sort(items.begin() + t0, items.begin() + t1, by_axis(2));
            for (std::size_t g = t0; g < t1; g += capacity) {
                groups.emplace_back(static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(std::min(t1, g + capacity)));
            }
        }
    }
    return groups;
}

}  // namespace

double haversine_m(GeoPoint a, GeoPoint b) noexcept {
    const double lat1 = deg2rad(a.lat_deg);
    const double lat2 = deg2rad(b.lat_deg);
    const double s_lat = std::sin((lat2 - lat1) * 0.5);
    const double s_lon = std::sin(deg2rad(b.lon_deg - a.lon_deg) * 0.5);
    const double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

GeoIndex GeoIndex::build(std::span<const Property> valued) {
    std::vector<Entry> entries;
    entries.reserve(valued.size());
    for (const auto& p : valued) {
        if (!p.value) throw std::invalid_argument("GeoIndex: property " + std::to_string(p.id) + " has no value");
        entries.push_back({p.location, p.id});
    }
    return build(entries);
}

GeoIndex GeoIndex::build(std::span<const Entry> entries) {
    if (entries.empty()) throw EmptyInput();
    if (entries.size() > std::numeric_limits<std::uint32_t>::max() / 2) throw std::length_error("GeoIndex too large");

    std::vector<Point> source;
    source.reserve(entries.size());
    for (std::uint32_t row = 0; row < entries.size(); ++row) {
        const auto& e = entries[row];
        source.push_back({unit_vector(e.location), e.location, e.id, row});
    }

    GeoIndex index;
    std::vector<std::uint32_t> order(source.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    auto groups = str_groups(order, [&](std::uint32_t i) -> const std::array<double, 3>& { return source[i].xyz; },
                             kNodeCapacity);
    index.points_.reserve(source.size());
    for (auto i : order) index.points_.push_back(source[i]);

    auto make_box = [](Node& node, auto&& first, auto&& rest) {
        node.lo = first;
        node.hi = first;
        rest([&](const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
            for (int a = 0; a < 3; ++a) {
                node.lo[a] = std::min(node.lo[a], lo[a]);
                node.hi[a] = std::max(node.hi[a], hi[a]);
            }
        });
    };

    std::vector<Node> level;
    level.reserve(groups.size());
    for (auto [b, e] : groups) {
        Node node{};
        node.begin = b;
        node.end = e;
        node.leaf = true;
        make_box(node, index.points_[b].xyz, [&](auto&& grow) {
            for (auto i = b; i < e; ++i) grow(index.points_[i].xyz, index.points_[i].xyz);
        });
        level.push_back(node);
    }

    while (level.size() > 1) {
        std::vector<std::array<double, 3>> centers(level.size());
        for (std::size_t i = 0; i < level.size(); ++i) {
            for (int a = 0; a < 3; ++a) centers[i][a] = 0.5 * (level[i].lo[a] + level[i].hi[a]);
        }
        std::vector<std::uint32_t> ord(level.size());
        for (std::uint32_t i = 0; i < ord.size(); ++i) ord[i] = i;
        auto parent_groups = str_groups(ord, [&](std::uint32_t i) -> const std::array<double, 3>& { return centers[i]; },
                                        kNodeCapacity);
        const auto base = static_cast<std::uint32_t>(index.nodes_.size());
        for (auto i : ord) index.nodes_.push_back(level[i]);

        std::vector<Node> parents;
        parents.reserve(parent_groups.size());
        for (auto [b, e] : parent_groups) {
            Node node{};
            node.begin = base + b;
            node.end = base + e;
            node.leaf = false;
            make_box(node, index.nodes_[base + b].lo, [&](auto&& grow) {
                for (auto i = base + b; i < base + e; ++i) grow(index.nodes_[i].lo, index.nodes_[i].hi);
            });
            parents.push_back(node);
        }
        level = std::move(parents);
    }
    index.root_ = static_cast<std::uint32_t>(index.nodes_.size());
    index.nodes_.push_back(level.front());
    return index;
}

double GeoIndex::lower_bound_m(const Node& node, const std::array<double, 3>& q) const noexcept {
    double e2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = q[a] - std::clamp(q[a], node.lo[a], node.hi[a]);
        e2 += d * d;
    }
    const double chord = std::sqrt(e2);
    const double arc = 2.0 * kEarthRadiusM * std::asin(std::min(1.0, 0.5 * chord));
    return std::max(0.0, arc - kBoundSlackM);
}

std::vector<Neighbor> GeoIndex::nearest(GeoPoint query, std::size_t k, double max_distance_m,
                                        std::optional<std::int64_t> exclude_id) const {
    std::vector<Neighbor> best;  // max-heap under neighbor_less
    if (k == 0 || !(max_distance_m > 0.0)) return best;
    const auto q = unit_vector(query);

    using Item = std::pair<double, std::uint32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
    frontier.emplace(lower_bound_m(nodes_[root_], q), root_);

    auto worst = [&]() { return best.front().distance_m; };
    while (!frontier.empty()) {
        const auto [bound, ni] = frontier.top();
        frontier.pop();
        if (bound >= max_distance_m) break;
        if (best.size() == k && bound > worst()) break;
        const Node& node = nodes_[ni];
        if (node.leaf) {
            for (auto i = node.begin; i < node.end; ++i) {
                const Point& p = points_[i];
                if (exclude_id && p.id == *exclude_id) continue;
                const double d = haversine_m(query, p.location);
                if (!(d < max_distance_m)) continue;
                const Neighbor cand{p.id, p.row, d};
                if (best.size() < k) {
                    best.push_back(cand);
                    std::push_heap(best.begin(), best.end(), neighbor_less);
                } else if (neighbor_less(cand, best.front())) {
                    std::pop_heap(best.begin(), best.end(), neighbor_less);
                    best.back() = cand;
                    std::push_heap(best.begin(), best.end(), neighbor_less);
                }
            }
        } else {
            for (auto c = node.begin; c < node.end; ++c) {
                const double cb = lower_bound_m(nodes_[c], q);
                if (cb >= max_distance_m) continue;
                if (best.size() == k && cb > worst()) continue;
                frontier.emplace(cb, c);
            }
        }
    }
    std::sort_heap(best.begin(), best.end(), neighbor_less);
    return best;
}

std::vector<Neighbor> GeoIndex::knn(GeoPoint query, std::size_t k, std::optional<std::int64_t> exclude_id) const {
    return nearest(query, k, std::numeric_limits<double>::infinity(), exclude_id);
}

std::vector<Neighbor> GeoIndex::within_radius(GeoPoint query, double radius_m,
                                              std::optional<std::int64_t> exclude_id) const {
    std::vector<Neighbor> out;
    if (!(radius_m > 0.0)) return out;
    const auto q = unit_vector(query);
    std::vector<std::uint32_t> stack{root_};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (lower_bound_m(node, q) >= radius_m) continue;
        if (node.leaf) {
            for (auto i = node.begin; i < node.end; ++i) {
                const Point& p = points_[i];
                if (exclude_id && p.id == *exclude_id) continue;
                const double d = haversine_m(query, p.location);
                if (d < radius_m) out.push_back({p.id, p.row, d});
            }
        } else {
            for (auto c = node.begin; c < node.end; ++c) stack.push_back(c);
        }
    }
    std::sort(out.begin(), out.end(), neighbor_less);
    return out;
}

std::vector<Neighbor> GeoIndex::preselect(GeoPoint query, const PreselectMode& mode,
                                          std::optional<std::int64_t> exclude_id) const {
    switch (mode.kind) {
        case PreselectMode::Kind::k_nearest:
            return knn(query, mode.k, exclude_id);
        case PreselectMode::Kind::radius:
            return within_radius(query, mode.radius_m, exclude_id);
        case PreselectMode::Kind::both:
            return nearest(query, mode.k, mode.radius_m, exclude_id);
    }
    return {};
}

}  // namespace geocbr
