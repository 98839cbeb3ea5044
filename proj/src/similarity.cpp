#include "geocbr/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geocbr/errors.hpp"

namespace geocbr {

namespace {

constexpr double kLargestFinite = std::numeric_limits<double>::max();

// |d|^q evaluated as exp(q log|d|) so that a cached log|d| reproduces it bit
// for bit. log(0) = -inf gives exp(-inf) = 0.
inline double power_term(double q, double log_abs_diff) noexcept { return std::exp(q * log_abs_diff); }

inline double similarity_from_sum(double weighted_sum, double neg_inv_q) noexcept {
    if (!(weighted_sum > 0.0)) return kInfinity;
    // Overflow is not an exact match; keep it finite.
    return std::min(std::pow(weighted_sum, neg_inv_q), kLargestFinite);
}

const char* mode_name(PreselectMode::Kind kind) {
    switch (kind) {
        case PreselectMode::Kind::k_nearest:
            return "k_nearest";
        case PreselectMode::Kind::radius:
            return "radius";
        case PreselectMode::Kind::both:
            return "both";
    }
    return "";
}

nlohmann::json number_or_inf(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

double read_number_or_inf(const nlohmann::json& j, const char* what) {
    if (j.is_string() && j.get<std::string>() == "inf") return kInfinity;
    if (!j.is_number()) throw InvalidConfig(std::string("genome field ") + what + " must be a number or \"inf\"");
    return j.get<double>();
}

}  // namespace

std::string genome_violation(const SimilarityGenome& g, std::size_t n_attributes) {
    if (!(g.q >= kMinExponent && g.q <= kMaxExponent)) return "exponent q outside [0.01, 10]";
    if (g.weights.size() != n_attributes) return "weight vector length differs from schema";
    if (g.filters.size() != n_attributes) return "filter vector length differs from schema";
    bool any_positive = false;
    for (double w : g.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) return "weights must be finite and nonnegative";
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) return "at least one weight must be positive";
    for (double f : g.filters) {
        if (!(f >= 0.0)) return "filters must be nonnegative or inf";
    }
    if (g.m == 0) return "post-selection cap m must be positive";
    const bool uses_k = g.preselect.kind != PreselectMode::Kind::radius;
    const bool uses_r = g.preselect.kind != PreselectMode::Kind::k_nearest;
    if (uses_k && g.preselect.k == 0) return "pre-selection k must be positive";
    if (uses_r && !(g.preselect.radius_m >= 0.0)) return "pre-selection radius must be nonnegative";
    return {};
}

void validate_genome(const SimilarityGenome& genome, std::size_t n_attributes) {
    if (auto why = genome_violation(genome, n_attributes); !why.empty()) throw InvalidConfig("invalid genome: " + why);
}

nlohmann::json genome_to_json(const SimilarityGenome& g, const AttributeSchema& schema) {
    nlohmann::json weights = nlohmann::json::object();
    nlohmann::json filters = nlohmann::json::object();
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (g.weights.at(i) != 0.0) weights[schema[i].name] = g.weights[i];
        if (!std::isinf(g.filters.at(i))) filters[schema[i].name] = g.filters[i];
    }
    nlohmann::json pre = {{"mode", mode_name(g.preselect.kind)}};
    if (g.preselect.kind != PreselectMode::Kind::radius) pre["k"] = g.preselect.k;
    if (g.preselect.kind != PreselectMode::Kind::k_nearest) pre["r_m"] = number_or_inf(g.preselect.radius_m);
    nlohmann::json m = g.m == kUnboundedM ? nlohmann::json("inf") : nlohmann::json(g.m);
    return {{"q", g.q}, {"weights", weights}, {"filters", filters}, {"m", m}, {"preselect", pre}};
}

SimilarityGenome genome_from_json(const nlohmann::json& j, const AttributeSchema& schema) {
    SimilarityGenome g;
    try {
        g.q = j.at("q").get<double>();
        g.weights.assign(schema.size(), 0.0);
        g.filters.assign(schema.size(), kInfinity);
        // held in locals: items() only refers to its json
        const auto weights = j.value("weights", nlohmann::json::object());
        const auto filters = j.value("filters", nlohmann::json::object());
        for (const auto& [name, value] : weights.items()) {
            const auto i = schema.index_of(name);
            if (!i) throw InvalidConfig("genome weight for unknown attribute: " + name);
            g.weights[*i] = value.get<double>();
        }
        for (const auto& [name, value] : filters.items()) {
            const auto i = schema.index_of(name);
            if (!i) throw InvalidConfig("genome filter for unknown attribute: " + name);
            g.filters[*i] = read_number_or_inf(value, "filter");
        }
        const auto& m = j.at("m");
        if (m.is_string() && m.get<std::string>() == "inf") {
            g.m = kUnboundedM;
        } else {
            const auto v = m.get<long long>();
            if (v <= 0) throw InvalidConfig("genome m must be positive");
            g.m = static_cast<std::size_t>(v);
        }
        const auto& pre = j.at("preselect");
        const auto mode = pre.at("mode").get<std::string>();
        if (mode == "k_nearest") {
            g.preselect = PreselectMode::nearest(pre.at("k").get<std::size_t>());
        } else if (mode == "radius") {
            g.preselect = PreselectMode::within(read_number_or_inf(pre.at("r_m"), "r_m"));
        } else if (mode == "both") {
            g.preselect = PreselectMode::both(pre.at("k").get<std::size_t>(), read_number_or_inf(pre.at("r_m"), "r_m"));
        } else {
            throw InvalidConfig("unknown pre-selection mode: " + mode);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("malformed genome: ") + e.what());
    }
    validate_genome(g, schema.size());
    return g;
}

namespace presets {

SimilarityGenome lbs(std::size_t n_attributes) {
    SimilarityGenome g;
    g.q = 2.0;
    g.weights.assign(n_attributes, 1.0);
    g.filters.assign(n_attributes, kInfinity);
    g.m = kUnboundedM;
    g.preselect = PreselectMode::within(10'000.0);
    return g;
}

SimilarityGenome unweighted(std::size_t n_attributes) {
    SimilarityGenome g = lbs(n_attributes);
    g.m = 50;
    return g;
}

}  // namespace presets

// ---------------------------------------------------------------------------

double quasi_norm_similarity(const SimilarityGenome& g, std::span<const double> a1, std::span<const double> a2) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
        if (g.weights[i] == 0.0) continue;
        sum += g.weights[i] * power_term(g.q, std::log(std::abs(a1[i] - a2[i])));
    }
    return similarity_from_sum(sum, -1.0 / g.q);
}

double filtered_similarity(const SimilarityGenome& g, const AttributeView& p1, const AttributeView& p2) {
    for (std::size_t i = 0; i < g.filters.size(); ++i) {
        if (std::abs(p1.raw[i] - p2.raw[i]) >= g.filters[i]) return 0.0;
    }
    return quasi_norm_similarity(g, p1.scaled, p2.scaled);
}

double lbs_similarity_from_distance(double distance_m) noexcept {
    if (!(distance_m > 0.0)) return kInfinity;
    return 1.0 / (distance_m * distance_m);
}

double lbs_similarity(GeoPoint p1, GeoPoint p2) noexcept { return lbs_similarity_from_distance(haversine_m(p1, p2)); }

double unweighted_similarity(std::span<const double> a1, std::span<const double> a2) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a1.size(); ++i) {
        const double d = a1[i] - a2[i];
        sum += d * d;
    }
    return similarity_from_sum(sum, -0.5);
}

// ---------------------------------------------------------------------------

void fill_candidate_block(std::span<const double> target_raw, std::span<const double> target_scaled,
                          std::span<const double> raw_matrix, std::span<const double> scaled_matrix,
                          std::size_t n_attributes, std::span<const std::uint32_t> candidate_rows,
                          std::vector<double>& log_scaled_diff, std::vector<double>& raw_diff) {
    const std::size_t count = candidate_rows.size();
    log_scaled_diff.resize(n_attributes * count);
    raw_diff.resize(n_attributes * count);
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t base = static_cast<std::size_t>(candidate_rows[j]) * n_attributes;
        for (std::size_t i = 0; i < n_attributes; ++i) {
            log_scaled_diff[i * count + j] = std::log(std::abs(target_scaled[i] - scaled_matrix[base + i]));
            raw_diff[i * count + j] = std::abs(target_raw[i] - raw_matrix[base + i]);
        }
    }
}

void score_block(const SimilarityGenome& g, const CandidateBlock& block, std::span<double> out) {
    struct Term {
        std::size_t offset;
        double value;
    };
    // Small fixed schemas: stack storage would do, but attribute counts are
    // not bounded by the type.
    thread_local std::vector<Term> filters;
    thread_local std::vector<Term> weights;
    filters.clear();
    weights.clear();
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
        if (!std::isinf(g.filters[i])) filters.push_back({i * block.stride, g.filters[i]});
        if (g.weights[i] != 0.0) weights.push_back({i * block.stride, g.weights[i]});
    }
    const double q = g.q;
    const double neg_inv_q = -1.0 / g.q;
    const double* raw = block.raw_diff.data();
    const double* logs = block.log_scaled_diff.data();

    for (std::size_t j = 0; j < block.count; ++j) {
        bool rejected = false;
        for (const auto& f : filters) {
            if (raw[f.offset + j] >= f.value) {
                rejected = true;
                break;
            }
        }
        if (rejected) {
            out[j] = 0.0;
            continue;
        }
        double sum = 0.0;
        for (const auto& w : weights) sum += w.value * power_term(q, logs[w.offset + j]);
        out[j] = similarity_from_sum(sum, neg_inv_q);
    }
}

}  // namespace geocbr
