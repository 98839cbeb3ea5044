#ifndef GEOCBR_PREDICTOR_HPP
#define GEOCBR_PREDICTOR_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "geocbr/dataset.hpp"
#include "geocbr/geo_index.hpp"
#include "geocbr/similarity.hpp"

namespace geocbr {

/**
 * The valued properties a prediction may draw on, with their raw and scaled
 * attribute matrices (row-major). Row r matches row r of a GeoIndex built
 * from properties().
 */
class ValuedStore {
public:
    /// All properties must carry a value. The scaler is used for targets too.
    ValuedStore(std::vector<Property> valued, AttributeSchema schema, Scaler scaler);

    /// Keeps the valued subset of `train`; the scaler is fitted on all of it.
    static ValuedStore from_training(std::span<const Property> train, const AttributeSchema& schema);

    std::size_t size() const noexcept { return properties_.size(); }
    std::size_t n_attributes() const noexcept { return schema_.size(); }
    const AttributeSchema& schema() const noexcept { return schema_; }
    const Scaler& scaler() const noexcept { return scaler_; }
    std::span<const Property> properties() const noexcept { return properties_; }
    const Property& property(std::size_t row) const { return properties_[row]; }
    double value(std::size_t row) const { return values_[row]; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const double> raw(std::size_t row) const;
    std::span<const double> scaled(std::size_t row) const;
    std::span<const double> raw_matrix() const noexcept { return raw_; }
    std::span<const double> scaled_matrix() const noexcept { return scaled_; }
    std::optional<std::size_t> row_of(std::int64_t id) const;

private:
    std::vector<Property> properties_;
    AttributeSchema schema_;
    Scaler scaler_;
    std::vector<double> values_;
    std::vector<double> raw_;
    std::vector<double> scaled_;
    std::unordered_map<std::int64_t, std::size_t> rows_;
};

/// Mean training value of the target's region, else the global mean. A
/// target that is itself in the store is left out of both means.
class FallbackModel {
public:
    explicit FallbackModel(const ValuedStore& store);

    double predict(const std::optional<std::string>& region, std::optional<double> own_value = {}) const;
    double predict(const Property& target, const ValuedStore& store) const;

private:
    struct Sum {
        double total = 0.0;
        std::size_t count = 0;
    };
    std::map<std::string, Sum> regions_;
    Sum global_;
};

struct Comparable {
    std::int64_t id = 0;
    double similarity = 0.0;
    double value = 0.0;
    double weight = 0.0;

    friend bool operator==(const Comparable&, const Comparable&) = default;
};

/// A prediction together with the comparables behind it, ranked by
/// descending similarity (ties by ascending id).
struct PredictionWitness {
    std::int64_t target_id = 0;
    double predicted_value = 0.0;
    std::vector<Comparable> comparables;
    std::size_t preselect_candidates = 0;
    bool exact_match = false;
    bool fallback_used = false;

    friend bool operator==(const PredictionWitness&, const PredictionWitness&) = default;
};

nlohmann::json witness_to_json(const PredictionWitness& w);
/// Accepts full witnesses as well as bare {target_id, predicted_value} lines.
PredictionWitness witness_from_json(const nlohmann::json& j);
void write_witnesses(const std::filesystem::path& path, std::span<const PredictionWitness> witnesses);
std::vector<PredictionWitness> read_witnesses(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Weighted average over post-selected candidates, shared by prediction and
/// fitness evaluation so both produce identical numbers.
struct AverageResult {
    bool has_comparables = false;
    bool exact_match = false;
    double prediction = 0.0;
};

struct SelectionScratch {
    std::vector<std::uint32_t> chosen;
    std::vector<std::uint32_t> order;
};

/**
 * Keeps candidates with positive similarity, the m best of them by
 * (similarity desc, id asc). If any kept similarity is +inf only those
 * exact matches are averaged (arithmetically). Sums run in candidate order.
 * On return scratch.chosen holds the averaged candidate positions in
 * ascending order.
 */
AverageResult select_and_average(std::span<const double> similarities, std::span<const double> values,
                                 std::span<const std::int64_t> ids, std::size_t m, SelectionScratch& scratch);

/// Throws NoComparables when no pre-selected candidate has positive similarity.
PredictionWitness predict(const Property& target, const SimilarityGenome& genome, const GeoIndex& index,
                          const ValuedStore& store, SimilarityFamily family = SimilarityFamily::weighted_quasi_norm);

std::optional<PredictionWitness> try_predict(const Property& target, const SimilarityGenome& genome,
                                             const GeoIndex& index, const ValuedStore& store,
                                             SimilarityFamily family = SimilarityFamily::weighted_quasi_norm);

/// Never fails: a target without comparables gets the fallback value and an
/// empty comparable list with fallback_used set.
PredictionWitness predict_or_fallback(const Property& target, const SimilarityGenome& genome, const GeoIndex& index,
                                      const ValuedStore& store, const FallbackModel& fallback,
                                      SimilarityFamily family = SimilarityFamily::weighted_quasi_norm);

/// Element-wise try_predict; a missing element means NoComparables. Output
/// order follows input order whatever the thread count.
std::vector<std::optional<PredictionWitness>> predict_batch(std::span<const Property> targets,
                                                            const SimilarityGenome& genome, const GeoIndex& index,
                                                            const ValuedStore& store,
                                                            SimilarityFamily family = SimilarityFamily::weighted_quasi_norm,
                                                            unsigned threads = 1);

std::vector<PredictionWitness> predict_batch_or_fallback(std::span<const Property> targets,
                                                         const SimilarityGenome& genome, const GeoIndex& index,
                                                         const ValuedStore& store, const FallbackModel& fallback,
                                                         SimilarityFamily family = SimilarityFamily::weighted_quasi_norm,
                                                         unsigned threads = 1);

}  // namespace geocbr

#endif  // GEOCBR_PREDICTOR_HPP
