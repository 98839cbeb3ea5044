#ifndef GEOCBR_METRICS_HPP
#define GEOCBR_METRICS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "geocbr/dataset.hpp"
#include "geocbr/predictor.hpp"

namespace geocbr {

/// (y - y_hat) / y. Overprediction is negative.
double percentage_error(double y, double y_hat) noexcept;

/// Mean of percentage_error. Overprediction is negative.
double mpe(std::span<const double> y, std::span<const double> y_hat);
/// Mean of |percentage_error|.
double mape(std::span<const double> y, std::span<const double> y_hat);

/// Percentage-error histogram: 1-point buckets over [-100, 100) plus an
/// underflow and an overflow bucket.
class ErrorHistogram {
public:
    static constexpr int kLow = -100;
    static constexpr int kHigh = 100;
    static constexpr std::size_t kBuckets = kHigh - kLow + 2;

    /// percent_error = 100 * percentage_error(y, y_hat)
    void add(double percent_error);
    void merge(const ErrorHistogram& other);

    std::size_t total() const;
    std::size_t underflow() const { return counts_.front(); }
    std::size_t overflow() const { return counts_.back(); }
    /// Count of the bucket [low, low + 1).
    std::size_t count_at(int low) const;
    const std::array<std::size_t, kBuckets>& counts() const { return counts_; }

    std::string to_csv() const;

private:
    std::array<std::size_t, kBuckets> counts_{};
};

struct RegionStats {
    std::size_t n = 0;
    double mape = 0.0;
    double mpe = 0.0;
};

struct EvalReport {
    std::size_t n = 0;
    double mape = 0.0;
    double mpe = 0.0;
    std::size_t fallback_count = 0;
    std::size_t min_region_n = 100;
    std::map<std::string, RegionStats> per_region;
    ErrorHistogram histogram;

    nlohmann::json to_json() const;
};

/// Running sums that can be sharded and merged before deriving the report.
class EvalAccumulator {
public:
    void add(double y, double y_hat, const std::optional<std::string>& region, bool fallback_used);
    void merge(const EvalAccumulator& other);
    EvalReport finish(std::size_t min_region_n) const;

private:
    struct Sums {
        std::size_t n = 0;
        double abs_sum = 0.0;
        double signed_sum = 0.0;
    };
    Sums overall_;
    std::map<std::string, Sums> regions_;
    std::size_t fallback_ = 0;
    ErrorHistogram histogram_;
};

struct GroundTruth {
    double value = 0.0;
    std::optional<std::string> region;
};

std::unordered_map<std::int64_t, GroundTruth> ground_truth_of(std::span<const Property> properties);

/// Throws MissingGroundTruth for a witness without a matching record.
EvalReport evaluate(std::span<const PredictionWitness> witnesses,
                    const std::unordered_map<std::int64_t, GroundTruth>& truth, std::size_t min_region_n = 100);

}  // namespace geocbr

#endif  // GEOCBR_METRICS_HPP
