#ifndef GEOCBR_SIMILARITY_HPP
#define GEOCBR_SIMILARITY_HPP

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocbr/dataset.hpp"
#include "geocbr/geo_index.hpp"

namespace geocbr {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kUnboundedM = std::numeric_limits<std::size_t>::max();

inline constexpr double kMinExponent = 0.01;
inline constexpr double kMaxExponent = 10.0;
inline constexpr std::size_t kMaxPreselectK = 2000;
inline constexpr double kMaxPreselectRadiusM = 50'000.0;

/**
 * Parameters of a filtered weighted quasi-norm similarity together with its
 * pre- and post-selection. Doubles as the evolutionary individual.
 *
 * Weights act on attributes scaled to [0, 1]; filters are thresholds in raw
 * attribute units (+inf disables a filter).
 */
struct SimilarityGenome {
    double q = 2.0;
    std::vector<double> weights;
    std::vector<double> filters;
    std::size_t m = kUnboundedM;
    PreselectMode preselect = PreselectMode::nearest(kMaxPreselectK);

    friend bool operator==(const SimilarityGenome&, const SimilarityGenome&) = default;
};

/// Empty string when the genome is valid for `n_attributes`, otherwise the
/// first violated invariant.
std::string genome_violation(const SimilarityGenome& genome, std::size_t n_attributes);
void validate_genome(const SimilarityGenome& genome, std::size_t n_attributes);

nlohmann::json genome_to_json(const SimilarityGenome& genome, const AttributeSchema& schema);
SimilarityGenome genome_from_json(const nlohmann::json& j, const AttributeSchema& schema);

/// Which similarity family a predictor evaluates.
enum class SimilarityFamily { weighted_quasi_norm, location };

namespace presets {
/// Squared inverse geographic distance within 10 km, no post-selection cap.
SimilarityGenome lbs(std::size_t n_attributes);
/// Plain Euclidean attribute distance within 10 km, 50 most similar.
SimilarityGenome unweighted(std::size_t n_attributes);
}  // namespace presets

// ---------------------------------------------------------------------------
// Pairwise similarities

/// (sum_i w_i |a1_i - a2_i|^q)^(-1/q); +inf when the weighted sum is zero.
double quasi_norm_similarity(const SimilarityGenome& genome, std::span<const double> a1, std::span<const double> a2);

/// Raw and scaled attribute vectors of one property.
struct AttributeView {
    std::span<const double> raw;
    std::span<const double> scaled;
};

/// 0 when some |raw diff| >= filter, otherwise the quasi-norm similarity on
/// scaled attributes.
double filtered_similarity(const SimilarityGenome& genome, const AttributeView& p1, const AttributeView& p2);

double lbs_similarity_from_distance(double distance_m) noexcept;
double lbs_similarity(GeoPoint p1, GeoPoint p2) noexcept;

/// Euclidean with unit weights: quasi_norm_similarity with q = 2, w = 1.
double unweighted_similarity(std::span<const double> a1, std::span<const double> a2);

// ---------------------------------------------------------------------------
// Batch scoring

/**
 * Precomputed pair features for a run of candidates against one target,
 * stored attribute-major: element (i, j) lives at i * stride + j.
 * log_scaled_diff holds log|scaled diff| (-inf on equality) and raw_diff
 * holds |raw diff|.
 */
struct CandidateBlock {
    std::size_t count = 0;
    std::size_t stride = 0;
    std::span<const double> log_scaled_diff;
    std::span<const double> raw_diff;
};

/// Fills a block buffer for `target` against `candidates` (rows of the raw and
/// scaled matrices, row-major with n_attributes columns).
void fill_candidate_block(std::span<const double> target_raw, std::span<const double> target_scaled,
                          std::span<const double> raw_matrix, std::span<const double> scaled_matrix,
                          std::size_t n_attributes, std::span<const std::uint32_t> candidate_rows,
                          std::vector<double>& log_scaled_diff, std::vector<double>& raw_diff);

/// Filtered quasi-norm similarity of every candidate in the block. Agrees
/// with filtered_similarity to rounding.
void score_block(const SimilarityGenome& genome, const CandidateBlock& block, std::span<double> out);

}  // namespace geocbr

#endif  // GEOCBR_SIMILARITY_HPP
