#ifndef GEOCBR_EVOLUTION_HPP
#define GEOCBR_EVOLUTION_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geocbr/geo_index.hpp"
#include "geocbr/kv_config.hpp"
#include "geocbr/predictor.hpp"
#include "geocbr/rng.hpp"
#include "geocbr/similarity.hpp"

namespace geocbr {

struct EAConfig {
    std::size_t generations = 200;
    std::size_t restart_threshold = 10;
    std::size_t population_size = 20;
    std::size_t sample_size = 10'000;
    double mutation_rate = 0.2;
    double type_switch_prob = 0.05;
    std::size_t offspring_per_parent = 5;
    std::uint64_t rng_seed = 1;
    /// Mutation standard deviation as a fraction of the parameter's range.
    double sigma_fraction = 0.1;
    /// Upper bound for the post-selection size m.
    std::size_t m_cap = kMaxPreselectK;
    /// Worker threads for fitness evaluation; results do not depend on it.
    unsigned threads = 1;

    void validate() const;
    static EAConfig from_kv(const KeyValueConfig& kv);
    KeyValueConfig to_kv() const;
};

/// Data-dependent parameter ranges used by initialization and mutation.
struct GenomeBounds {
    std::size_t n_attributes = 0;
    /// Raw training range (max - min) per attribute; filters live in [0, range].
    std::vector<double> filter_range;
    std::size_t m_max = kMaxPreselectK;
    std::size_t init_m_max = 200;
};

GenomeBounds genome_bounds(const ValuedStore& store, const EAConfig& config);

/// Empty when `genome` respects the evolutionary bounds (q, k, r, m, filter
/// ranges) on top of the structural genome invariants.
std::string evolution_bounds_violation(const SimilarityGenome& genome, const GenomeBounds& bounds);

SimilarityGenome random_genome(const GenomeBounds& bounds, Rng& rng);
std::vector<SimilarityGenome> init_population(const EAConfig& config, const GenomeBounds& bounds, Rng& rng);
SimilarityGenome mutate(const SimilarityGenome& genome, const EAConfig& config, const GenomeBounds& bounds, Rng& rng);
SimilarityGenome crossover(const SimilarityGenome& a, const SimilarityGenome& b, Rng& rng);

// ---------------------------------------------------------------------------
// Fitness

/// Store rows used as leave-one-out targets for every evaluation in a run.
struct FitnessSample {
    std::vector<std::uint32_t> rows;
};

FitnessSample draw_fitness_sample(const ValuedStore& store, std::size_t sample_size, std::uint64_t seed);

/// MAPE of leave-one-out predictions over the sample; targets without
/// comparables are scored with the fallback model. Reference path through
/// predict().
double fitness(const SimilarityGenome& genome, const FitnessSample& sample, const GeoIndex& index,
               const ValuedStore& store);

/**
 * Same numbers as fitness(), computed from per-target neighbourhoods and
 * pair features cached once per run. Genomes outside the evolutionary
 * pre-selection bounds fall back to the reference path.
 */
class FitnessEvaluator {
public:
    FitnessEvaluator(const ValuedStore& store, const GeoIndex& index, FitnessSample sample);

    double operator()(const SimilarityGenome& genome) const;

    /// nullopt once the running error proves the final fitness exceeds
    /// `abort_above`; otherwise the exact fitness.
    std::optional<double> bounded(const SimilarityGenome& genome, double abort_above) const;

    const FitnessSample& sample() const noexcept { return sample_; }
    std::size_t cached_pairs() const noexcept { return neighbor_rows_.size(); }

private:
    bool cacheable(const SimilarityGenome& genome) const noexcept;
    std::size_t preselect_count(std::size_t t, const PreselectMode& mode) const;

    const ValuedStore& store_;
    const GeoIndex& index_;
    FallbackModel fallback_;
    FitnessSample sample_;
    std::size_t n_attributes_;

    std::vector<std::size_t> offsets_;  // per target, into the pair arrays
    std::vector<std::size_t> lengths_;
    std::vector<double> fallback_values_;
    std::vector<std::uint32_t> neighbor_rows_;
    std::vector<std::int64_t> neighbor_ids_;
    std::vector<double> neighbor_values_;
    std::vector<double> neighbor_distances_;
    std::vector<double> log_scaled_diff_;  // n_attributes per pair, attribute-major per target
    std::vector<double> raw_diff_;
};

// ---------------------------------------------------------------------------
// Evolution

struct GenerationRecord {
    std::size_t generation = 0;
    double best_fitness = 0.0;  // archive best so far
    double mean_fitness = 0.0;  // surviving population
    std::size_t restarts = 0;

    friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

struct EvolutionTrace {
    std::vector<GenerationRecord> generations;
    std::vector<std::size_t> restart_generations;
    std::size_t evaluations = 0;
    double initial_best_fitness = 0.0;

    std::string to_csv() const;
};

struct EvolutionResult {
    SimilarityGenome best;
    double best_fitness = 0.0;
    EvolutionTrace trace;
};

/// (mu + lambda) elitist evolution with restarts; returns the archive best.
EvolutionResult evolve(const EAConfig& config, const ValuedStore& training_store, const GeoIndex& index);
EvolutionResult evolve(const EAConfig& config, const AttributeSchema& schema, std::span<const Property> train);

}  // namespace geocbr

#endif  // GEOCBR_EVOLUTION_HPP
