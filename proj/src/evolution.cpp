#include "geocbr/evolution.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "geocbr/errors.hpp"
#include "geocbr/metrics.hpp"
#include "parallel.hpp"

namespace geocbr {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kSampleStream = 0x53414d50;   // "SAMP"
constexpr std::uint64_t kInitStream = 0x494e4954;     // "INIT"
constexpr std::uint64_t kBreedStream = 0x42524544;    // "BRED"

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double gaussian_step(Rng& rng, double current, double lo, double hi, double sigma_fraction) {
    const double sigma = sigma_fraction * (hi - lo);
    if (!(sigma > 0.0)) return std::clamp(current, lo, hi);
    return std::clamp(std::normal_distribution<double>(current, sigma)(rng), lo, hi);
}

std::size_t gaussian_step_int(Rng& rng, std::size_t current, std::size_t lo, std::size_t hi, double sigma_fraction) {
    const double v = gaussian_step(rng, static_cast<double>(current), static_cast<double>(lo), static_cast<double>(hi),
                                   sigma_fraction);
    return std::clamp(static_cast<std::size_t>(std::llround(v)), lo, hi);
}

bool any_positive(const std::vector<double>& w) {
    return std::any_of(w.begin(), w.end(), [](double x) { return x > 0.0; });
}

void draw_preselect(SimilarityGenome& g, PreselectMode::Kind kind, Rng& rng) {
    if (kind == PreselectMode::Kind::k_nearest) {
        g.preselect = PreselectMode::nearest(uniform_int(rng, 1, kMaxPreselectK));
    } else {
        g.preselect = PreselectMode::within(uniform(rng, 0.0, kMaxPreselectRadiusM));
    }
}

void append_double(std::string& out, double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// EAConfig

void EAConfig::validate() const {
    if (generations == 0 || restart_threshold == 0 || population_size == 0 || sample_size == 0 ||
        offspring_per_parent == 0) {
        throw InvalidConfig("EA counts must be positive");
    }
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw InvalidConfig("mutation_rate must be in [0, 1]");
    if (!(type_switch_prob >= 0.0 && type_switch_prob <= 1.0)) throw InvalidConfig("type_switch_prob must be in [0, 1]");
    if (!(sigma_fraction >= 0.0) || !std::isfinite(sigma_fraction)) throw InvalidConfig("sigma_fraction must be >= 0");
    if (m_cap == 0) throw InvalidConfig("m_cap must be positive");
}

EAConfig EAConfig::from_kv(const KeyValueConfig& kv) {
    kv.reject_unknown({"generations", "restart_threshold", "population_size", "sample_size", "mutation_rate",
                       "type_switch_prob", "offspring_per_parent", "rng_seed", "sigma_fraction", "m_cap", "threads"});
    EAConfig c;
    c.generations = kv.get_uint("generations", c.generations);
    c.restart_threshold = kv.get_uint("restart_threshold", c.restart_threshold);
    c.population_size = kv.get_uint("population_size", c.population_size);
    c.sample_size = kv.get_uint("sample_size", c.sample_size);
    c.mutation_rate = kv.get_double("mutation_rate", c.mutation_rate);
    c.type_switch_prob = kv.get_double("type_switch_prob", c.type_switch_prob);
    c.offspring_per_parent = kv.get_uint("offspring_per_parent", c.offspring_per_parent);
    c.rng_seed = kv.get_uint("rng_seed", c.rng_seed);
    c.sigma_fraction = kv.get_double("sigma_fraction", c.sigma_fraction);
    if (auto cap = kv.get("m_cap")) {
        c.m_cap = *cap == "inf" ? kMaxPreselectK : kv.get_uint("m_cap", c.m_cap);
    }
    c.threads = static_cast<unsigned>(kv.get_uint("threads", c.threads));
    c.validate();
    return c;
}

KeyValueConfig EAConfig::to_kv() const {
    KeyValueConfig kv;
    auto num = [](double v) {
        std::string s;
        append_double(s, v);
        return s;
    };
    kv.set("generations", std::to_string(generations));
    kv.set("restart_threshold", std::to_string(restart_threshold));
    kv.set("population_size", std::to_string(population_size));
    kv.set("sample_size", std::to_string(sample_size));
    kv.set("mutation_rate", num(mutation_rate));
    kv.set("type_switch_prob", num(type_switch_prob));
    kv.set("offspring_per_parent", std::to_string(offspring_per_parent));
    kv.set("rng_seed", std::to_string(rng_seed));
    kv.set("sigma_fraction", num(sigma_fraction));
    kv.set("m_cap", std::to_string(m_cap));
    kv.set("threads", std::to_string(threads));
    return kv;
}

// ---------------------------------------------------------------------------
// Operators

GenomeBounds genome_bounds(const ValuedStore& store, const EAConfig& config) {
    GenomeBounds b;
    b.n_attributes = store.n_attributes();
    b.filter_range.assign(b.n_attributes, 0.0);
    for (std::size_t i = 0; i < b.n_attributes; ++i) {
        const auto& r = store.scaler().range(i);
        b.filter_range[i] = r.max - r.min;
    }
    b.m_max = std::min(config.m_cap, kMaxPreselectK);
    b.init_m_max = std::min<std::size_t>(200, b.m_max);
    return b;
}

std::string evolution_bounds_violation(const SimilarityGenome& g, const GenomeBounds& b) {
    if (auto why = genome_violation(g, b.n_attributes); !why.empty()) return why;
    for (double w : g.weights) {
        if (w > 1.0) return "weight above 1";
    }
    for (std::size_t i = 0; i < b.n_attributes; ++i) {
        if (!std::isinf(g.filters[i]) && g.filters[i] > b.filter_range[i]) return "filter above attribute range";
    }
    if (g.m > b.m_max) return "m above its cap";
    switch (g.preselect.kind) {
        case PreselectMode::Kind::k_nearest:
            if (g.preselect.k > kMaxPreselectK) return "k above 2000";
            break;
        case PreselectMode::Kind::radius:
            if (g.preselect.radius_m > kMaxPreselectRadiusM) return "r above 50 km";
            break;
        case PreselectMode::Kind::both:
            return "evolved genomes use either k or r";
    }
    return {};
}

SimilarityGenome random_genome(const GenomeBounds& b, Rng& rng) {
    SimilarityGenome g;
    g.q = uniform(rng, 0.1, 3.0);
    g.weights.resize(b.n_attributes);
    do {
        for (auto& w : g.weights) w = uniform(rng, 0.0, 1.0);
    } while (!any_positive(g.weights));
    g.filters.resize(b.n_attributes);
    for (std::size_t i = 0; i < b.n_attributes; ++i) {
        const bool disabled = coin(rng, 0.5);
        const double value = uniform(rng, 0.0, std::max(b.filter_range[i], 0.0));
        g.filters[i] = (disabled || !(b.filter_range[i] > 0.0)) ? kInfinity : value;
    }
    g.m = uniform_int(rng, 1, b.init_m_max);
    draw_preselect(g, coin(rng, 0.5) ? PreselectMode::Kind::k_nearest : PreselectMode::Kind::radius, rng);
    return g;
}

std::vector<SimilarityGenome> init_population(const EAConfig& config, const GenomeBounds& bounds, Rng& rng) {
    std::vector<SimilarityGenome> pop;
    pop.reserve(config.population_size);
    for (std::size_t i = 0; i < config.population_size; ++i) pop.push_back(random_genome(bounds, rng));
    return pop;
}

SimilarityGenome mutate(const SimilarityGenome& parent, const EAConfig& config, const GenomeBounds& b, Rng& rng) {
    SimilarityGenome g = parent;
    const double rate = config.mutation_rate;
    const double sf = config.sigma_fraction;

    if (coin(rng, rate)) g.q = gaussian_step(rng, g.q, kMinExponent, kMaxExponent, sf);
    for (auto& w : g.weights) {
        if (coin(rng, rate)) w = gaussian_step(rng, w, 0.0, 1.0, sf);
    }
    if (!any_positive(g.weights)) g.weights = parent.weights;
    for (std::size_t i = 0; i < g.filters.size(); ++i) {
        if (!coin(rng, rate)) continue;
        const double range = b.filter_range[i];
        if (!(range > 0.0)) continue;  // a zero threshold on a constant attribute rejects every pair
        if (std::isinf(g.filters[i])) {
            g.filters[i] = uniform(rng, 0.0, range);
        } else {
            const double sigma = sf * range;
            const double v = sigma > 0.0 ? std::normal_distribution<double>(g.filters[i], sigma)(rng) : g.filters[i];
            g.filters[i] = v > range ? kInfinity : std::max(0.0, v);
        }
    }
    if (coin(rng, rate)) g.m = gaussian_step_int(rng, std::min(g.m, b.m_max), 1, b.m_max, sf);
    if (coin(rng, rate)) {
        if (g.preselect.kind == PreselectMode::Kind::k_nearest) {
            g.preselect.k = gaussian_step_int(rng, g.preselect.k, 1, kMaxPreselectK, sf);
        } else {
            g.preselect.radius_m = gaussian_step(rng, g.preselect.radius_m, 0.0, kMaxPreselectRadiusM, sf);
        }
    }
    if (coin(rng, config.type_switch_prob)) {
        draw_preselect(g,
                       g.preselect.kind == PreselectMode::Kind::k_nearest ? PreselectMode::Kind::radius
                                                                          : PreselectMode::Kind::k_nearest,
                       rng);
    }
    return g;
}

SimilarityGenome crossover(const SimilarityGenome& a, const SimilarityGenome& b, Rng& rng) {
    SimilarityGenome child;
    child.q = coin(rng, 0.5) ? a.q : b.q;
    child.weights.resize(a.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) child.weights[i] = coin(rng, 0.5) ? a.weights[i] : b.weights[i];
    child.filters.resize(a.filters.size());
    for (std::size_t i = 0; i < a.filters.size(); ++i) child.filters[i] = coin(rng, 0.5) ? a.filters[i] : b.filters[i];
    child.m = coin(rng, 0.5) ? a.m : b.m;
    child.preselect = coin(rng, 0.5) ? a.preselect : b.preselect;
    if (!any_positive(child.weights)) child.weights = a.weights;
    return child;
}

// ---------------------------------------------------------------------------
// Fitness

FitnessSample draw_fitness_sample(const ValuedStore& store, std::size_t sample_size, std::uint64_t seed) {
    if (store.size() == 0) throw EmptyTrainingSet();
    std::vector<std::uint32_t> rows(store.size());
    std::iota(rows.begin(), rows.end(), 0u);
    Rng rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(std::min(sample_size, rows.size()));
    return {std::move(rows)};
}

double fitness(const SimilarityGenome& genome, const FitnessSample& sample, const GeoIndex& index,
               const ValuedStore& store) {
    const FallbackModel fallback(store);
    double total = 0.0;
    for (auto row : sample.rows) {
        const auto& target = store.property(row);
        const double truth = store.value(row);
        double predicted = 0.0;
        if (auto w = try_predict(target, genome, index, store)) {
            predicted = w->predicted_value;
        } else {
            predicted = fallback.predict(target, store);
        }
        total += std::abs(percentage_error(truth, predicted));
    }
    return sample.rows.empty() ? 0.0 : total / static_cast<double>(sample.rows.size());
}

FitnessEvaluator::FitnessEvaluator(const ValuedStore& store, const GeoIndex& index, FitnessSample sample)
    : store_(store), index_(index), fallback_(store), sample_(std::move(sample)), n_attributes_(store.n_attributes()) {
    if (index.size() != store.size()) throw std::invalid_argument("FitnessEvaluator: index was not built over the store");
    const std::size_t d = n_attributes_;
    std::vector<double> log_block;
    std::vector<double> raw_block;
    std::vector<std::uint32_t> rows;
    for (auto row : sample_.rows) {
        const auto& target = store.property(row);
        // Both queries return prefixes of the same (distance, id) order, so
        // the longer one covers every pre-selection inside the bounds.
        auto by_count = index.knn(target.location, kMaxPreselectK, target.id);
        auto by_radius = index.within_radius(target.location, kMaxPreselectRadiusM, target.id);
        const auto& hood = by_count.size() >= by_radius.size() ? by_count : by_radius;

        offsets_.push_back(neighbor_rows_.size());
        lengths_.push_back(hood.size());
        fallback_values_.push_back(fallback_.predict(target, store));
        rows.clear();
        for (const auto& n : hood) {
            rows.push_back(n.row);
            neighbor_rows_.push_back(n.row);
            neighbor_ids_.push_back(n.id);
            neighbor_values_.push_back(store.value(n.row));
            neighbor_distances_.push_back(n.distance_m);
        }
        fill_candidate_block(store.raw(row), store.scaled(row), store.raw_matrix(), store.scaled_matrix(), d, rows,
                             log_block, raw_block);
        log_scaled_diff_.insert(log_scaled_diff_.end(), log_block.begin(), log_block.end());
        raw_diff_.insert(raw_diff_.end(), raw_block.begin(), raw_block.end());
    }
}

bool FitnessEvaluator::cacheable(const SimilarityGenome& g) const noexcept {
    const auto& p = g.preselect;
    const bool k_ok = p.kind == PreselectMode::Kind::radius || p.k <= kMaxPreselectK;
    const bool r_ok = p.kind == PreselectMode::Kind::k_nearest || p.radius_m <= kMaxPreselectRadiusM;
    return k_ok && r_ok;
}

std::size_t FitnessEvaluator::preselect_count(std::size_t t, const PreselectMode& mode) const {
    const std::size_t len = lengths_[t];
    auto within = [&](double r) {
        const auto* first = neighbor_distances_.data() + offsets_[t];
        return static_cast<std::size_t>(std::lower_bound(first, first + len, r) - first);
    };
    switch (mode.kind) {
        case PreselectMode::Kind::k_nearest:
            return std::min(mode.k, len);
        case PreselectMode::Kind::radius:
            return within(mode.radius_m);
        case PreselectMode::Kind::both:
            return std::min(mode.k, within(mode.radius_m));
    }
    return 0;
}

double FitnessEvaluator::operator()(const SimilarityGenome& genome) const {
    return *bounded(genome, kInfinity);
}

std::optional<double> FitnessEvaluator::bounded(const SimilarityGenome& genome, double abort_above) const {
    validate_genome(genome, n_attributes_);
    const std::size_t n = sample_.rows.size();
    if (n == 0) return 0.0;
    if (!cacheable(genome)) {
        const double f = fitness(genome, sample_, index_, store_);
        if (f > abort_above) return std::nullopt;
        return f;
    }
    thread_local std::vector<double> sims;
    thread_local SelectionScratch scratch;
    // Partial sums of nonnegative terms only grow and rounded division is
    // monotone, so a partial mean above the limit means the full one is too.
    const double n_targets = static_cast<double>(n);
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t count = preselect_count(t, genome.preselect);
        const std::size_t off = offsets_[t];
        const std::size_t stride = lengths_[t];
        sims.resize(count);
        const CandidateBlock block{count, stride,
                                   std::span(log_scaled_diff_).subspan(off * n_attributes_, stride * n_attributes_),
                                   std::span(raw_diff_).subspan(off * n_attributes_, stride * n_attributes_)};
        score_block(genome, block, sims);
        const auto avg = select_and_average(sims, std::span(neighbor_values_).subspan(off, count),
                                            std::span(neighbor_ids_).subspan(off, count), genome.m, scratch);
        const double predicted = avg.has_comparables ? avg.prediction : fallback_values_[t];
        total += std::abs(percentage_error(store_.value(sample_.rows[t]), predicted));
        if (total / n_targets > abort_above) return std::nullopt;
    }
    return total / n_targets;
}

// ---------------------------------------------------------------------------
// Evolution

std::string EvolutionTrace::to_csv() const {
    std::string out = "generation,best_fitness,mean_fitness,restarts_so_far\n";
    for (const auto& g : generations) {
        out += std::to_string(g.generation);
        out.push_back(',');
        append_double(out, g.best_fitness);
        out.push_back(',');
        append_double(out, g.mean_fitness);
        out.push_back(',');
        out += std::to_string(g.restarts);
        out.push_back('\n');
    }
    return out;
}

namespace {

struct Individual {
    SimilarityGenome genome;
    double fitness = kInfinity;
};

// Lower fitness first; ties prefer smaller m, then the cheaper pre-selection.
bool fitter(const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    if (a.genome.m != b.genome.m) return a.genome.m < b.genome.m;
    const auto& pa = a.genome.preselect;
    const auto& pb = b.genome.preselect;
    if (pa.kind != pb.kind) return pa.kind < pb.kind;
    if (pa.k != pb.k) return pa.k < pb.k;
    return pa.radius_m < pb.radius_m;
}

}  // namespace

EvolutionResult evolve(const EAConfig& config, const ValuedStore& store, const GeoIndex& index) {
    config.validate();
    if (store.size() == 0) throw EmptyTrainingSet();
    const GenomeBounds bounds = genome_bounds(store, config);
    const FitnessEvaluator evaluate(store, index,
                                    draw_fitness_sample(store, config.sample_size, derive_seed(config.rng_seed, kSampleStream)));

    EvolutionResult result;
    auto& trace = result.trace;

    auto fresh_population = [&](std::size_t restart) {
        Rng rng(derive_seed(config.rng_seed, kInitStream, restart));
        auto genomes = init_population(config, bounds, rng);
        std::vector<Individual> pop(genomes.size());
        detail::parallel_for(genomes.size(), config.threads,
                             [&](std::size_t i) { pop[i] = {genomes[i], evaluate(genomes[i])}; });
        trace.evaluations += pop.size();
        std::stable_sort(pop.begin(), pop.end(), fitter);
        return pop;
    };

    std::vector<Individual> pop = fresh_population(0);
    Individual archive = pop.front();
    trace.initial_best_fitness = archive.fitness;
    std::size_t stagnant = 0;
    std::size_t restarts = 0;

    const std::size_t P = config.population_size;
    const std::size_t O = config.offspring_per_parent;
    std::vector<SimilarityGenome> children(P * O);
    std::vector<std::optional<double>> child_fitness(P * O);

    for (std::size_t gen = 0; gen < config.generations; ++gen) {
        for (std::size_t j = 0; j < P; ++j) {
            Rng rng(derive_seed(config.rng_seed, kBreedStream ^ (gen << 20), j));
            for (std::size_t o = 0; o < O; ++o) {
                std::size_t partner = j;
                if (P > 1) {
                    partner = uniform_int(rng, 0, P - 2);
                    if (partner >= j) ++partner;
                }
                children[j * O + o] = mutate(crossover(pop[j].genome, pop[partner].genome, rng), config, bounds, rng);
            }
        }
        // An offspring strictly worse than every parent cannot survive
        // truncation, so its evaluation may stop early.
        const double worst_parent = pop.back().fitness;
        detail::parallel_for(children.size(), config.threads,
                             [&](std::size_t i) { child_fitness[i] = evaluate.bounded(children[i], worst_parent); });
        trace.evaluations += children.size();

        std::vector<Individual> merged = std::move(pop);
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (child_fitness[i]) merged.push_back({children[i], *child_fitness[i]});
        }
        std::stable_sort(merged.begin(), merged.end(), fitter);
        merged.resize(P);
        pop = std::move(merged);

        if (pop.front().fitness < archive.fitness) {
            archive = pop.front();
            stagnant = 0;
        } else {
            if (fitter(pop.front(), archive)) archive = pop.front();
            ++stagnant;
        }
        double mean = 0.0;
        for (const auto& ind : pop) mean += ind.fitness;
        mean /= static_cast<double>(pop.size());
        trace.generations.push_back({gen, archive.fitness, mean, restarts});

        if (stagnant >= config.restart_threshold && gen + 1 < config.generations) {
            ++restarts;
            stagnant = 0;
            trace.restart_generations.push_back(gen);
            pop = fresh_population(restarts);
            if (fitter(pop.front(), archive)) {
                if (pop.front().fitness < archive.fitness) stagnant = 0;
                archive = pop.front();
            }
        }
    }
    result.best = archive.genome;
    result.best_fitness = archive.fitness;
    return result;
}

EvolutionResult evolve(const EAConfig& config, const AttributeSchema& schema, std::span<const Property> train) {
    if (train.empty()) throw EmptyTrainingSet();
    const ValuedStore store = ValuedStore::from_training(train, schema);
    const GeoIndex index = GeoIndex::build(store.properties());
    return evolve(config, store, index);
}

}  // namespace geocbr
