#include "geocbr/metrics.hpp"

#include <cmath>
#include <sstream>

#include "geocbr/errors.hpp"

namespace geocbr {

namespace {

void check_inputs(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw LengthMismatch();
    for (double v : y) {
        if (v == 0.0) throw ZeroGroundTruth();
    }
}

}  // namespace

// (y - y_hat) / y rather than 1 - y_hat / y: same value, one rounding fewer,
// so that for example y = 100, y_hat = 110 gives exactly -0.1.
double percentage_error(double y, double y_hat) noexcept { return (y - y_hat) / y; }

double mpe(std::span<const double> y, std::span<const double> y_hat) {
    check_inputs(y, y_hat);
    if (y.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += percentage_error(y[i], y_hat[i]);
    return sum / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> y_hat) {
    check_inputs(y, y_hat);
    if (y.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(percentage_error(y[i], y_hat[i]));
    return sum / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------

void ErrorHistogram::add(double percent_error) {
    if (percent_error < kLow) {
        ++counts_.front();
    } else if (!(percent_error < kHigh)) {
        ++counts_.back();  // also catches NaN
    } else {
        const auto bucket = static_cast<std::size_t>(std::floor(percent_error) - kLow) + 1;
        ++counts_[bucket];
    }
}

void ErrorHistogram::merge(const ErrorHistogram& other) {
    for (std::size_t i = 0; i < kBuckets; ++i) counts_[i] += other.counts_[i];
}

std::size_t ErrorHistogram::total() const {
    std::size_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

std::size_t ErrorHistogram::count_at(int low) const {
    if (low < kLow || low >= kHigh) return 0;
    return counts_[static_cast<std::size_t>(low - kLow) + 1];
}

std::string ErrorHistogram::to_csv() const {
    std::ostringstream out;
    out << "bucket_low,bucket_high,count\n";
    out << "-inf," << kLow << ',' << counts_.front() << '\n';
    for (int low = kLow; low < kHigh; ++low) out << low << ',' << low + 1 << ',' << count_at(low) << '\n';
    out << kHigh << ",inf," << counts_.back() << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
    nlohmann::json regions = nlohmann::json::object();
    for (const auto& [name, s] : per_region) regions[name] = {{"n", s.n}, {"mape", s.mape}, {"mpe", s.mpe}};
    nlohmann::json hist = nlohmann::json::array();
    hist.push_back({{"low", "-inf"}, {"high", ErrorHistogram::kLow}, {"count", histogram.underflow()}});
    for (int low = ErrorHistogram::kLow; low < ErrorHistogram::kHigh; ++low) {
        if (auto c = histogram.count_at(low)) hist.push_back({{"low", low}, {"high", low + 1}, {"count", c}});
    }
    hist.push_back({{"low", ErrorHistogram::kHigh}, {"high", "inf"}, {"count", histogram.overflow()}});
    return {{"n", n},
            {"mape", mape},
            {"mpe", mpe},
            {"fallback_count", fallback_count},
            {"min_region_n", min_region_n},
            {"per_region", regions},
            {"histogram", hist}};
}

void EvalAccumulator::add(double y, double y_hat, const std::optional<std::string>& region, bool fallback_used) {
    if (y == 0.0) throw ZeroGroundTruth();
    const double err = percentage_error(y, y_hat);
    auto bump = [&](Sums& s) {
        ++s.n;
        s.abs_sum += std::abs(err);
        s.signed_sum += err;
    };
    bump(overall_);
    if (region) bump(regions_[*region]);
    if (fallback_used) ++fallback_;
    histogram_.add(100.0 * err);
}

void EvalAccumulator::merge(const EvalAccumulator& other) {
    auto add = [](Sums& a, const Sums& b) {
        a.n += b.n;
        a.abs_sum += b.abs_sum;
        a.signed_sum += b.signed_sum;
    };
    add(overall_, other.overall_);
    for (const auto& [name, s] : other.regions_) add(regions_[name], s);
    fallback_ += other.fallback_;
    histogram_.merge(other.histogram_);
}

EvalReport EvalAccumulator::finish(std::size_t min_region_n) const {
    EvalReport r;
    r.n = overall_.n;
    if (r.n > 0) {
        r.mape = overall_.abs_sum / static_cast<double>(r.n);
        r.mpe = overall_.signed_sum / static_cast<double>(r.n);
    }
    r.fallback_count = fallback_;
    r.min_region_n = min_region_n;
    for (const auto& [name, s] : regions_) {
        if (s.n < min_region_n || s.n == 0) continue;
        r.per_region[name] = {s.n, s.abs_sum / static_cast<double>(s.n), s.signed_sum / static_cast<double>(s.n)};
    }
    r.histogram = histogram_;
    return r;
}

std::unordered_map<std::int64_t, GroundTruth> ground_truth_of(std::span<const Property> properties) {
    std::unordered_map<std::int64_t, GroundTruth> truth;
    for (const auto& p : properties) {
        if (p.value) truth[p.id] = {*p.value, p.region};
    }
    return truth;
}

EvalReport evaluate(std::span<const PredictionWitness> witnesses,
                    const std::unordered_map<std::int64_t, GroundTruth>& truth, std::size_t min_region_n) {
    EvalAccumulator acc;
    for (const auto& w : witnesses) {
        auto it = truth.find(w.target_id);
        if (it == truth.end()) throw MissingGroundTruth(w.target_id);
        acc.add(it->second.value, w.predicted_value, it->second.region, w.fallback_used);
    }
    return acc.finish(min_region_n);
}

}  // namespace geocbr
