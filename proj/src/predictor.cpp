#include "geocbr/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "geocbr/errors.hpp"
#include "parallel.hpp"

namespace geocbr {

// ---------------------------------------------------------------------------
// ValuedStore

ValuedStore::ValuedStore(std::vector<Property> valued, AttributeSchema schema, Scaler scaler)
    : properties_(std::move(valued)), schema_(std::move(schema)), scaler_(std::move(scaler)) {
    const std::size_t n = schema_.size();
    if (scaler_.size() != n) throw std::invalid_argument("ValuedStore: scaler does not match schema");
    values_.reserve(properties_.size());
    raw_.reserve(properties_.size() * n);
    scaled_.resize(properties_.size() * n);
    for (std::size_t row = 0; row < properties_.size(); ++row) {
        const auto& p = properties_[row];
        if (!p.value) throw std::invalid_argument("ValuedStore: property " + std::to_string(p.id) + " has no value");
        if (p.attributes.size() != n) {
            throw std::invalid_argument("ValuedStore: property " + std::to_string(p.id) + " has wrong attribute count");
        }
        if (!rows_.emplace(p.id, row).second) throw std::invalid_argument("ValuedStore: duplicate id " + std::to_string(p.id));
        values_.push_back(*p.value);
        raw_.insert(raw_.end(), p.attributes.begin(), p.attributes.end());
        scaler_.scale_into(p.attributes, std::span(scaled_).subspan(row * n, n));
    }
}

ValuedStore ValuedStore::from_training(std::span<const Property> train, const AttributeSchema& schema) {
    Scaler scaler = fit_scaler(train, schema);
    std::vector<Property> valued;
    for (const auto& p : train) {
        if (p.value) valued.push_back(p);
    }
    if (valued.empty()) throw EmptyTrainingSet("training set has no valued property");
    return ValuedStore(std::move(valued), schema, std::move(scaler));
}

std::span<const double> ValuedStore::raw(std::size_t row) const {
    return std::span(raw_).subspan(row * schema_.size(), schema_.size());
}

std::span<const double> ValuedStore::scaled(std::size_t row) const {
    return std::span(scaled_).subspan(row * schema_.size(), schema_.size());
}

std::optional<std::size_t> ValuedStore::row_of(std::int64_t id) const {
    if (auto it = rows_.find(id); it != rows_.end()) return it->second;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// FallbackModel

FallbackModel::FallbackModel(const ValuedStore& store) {
    for (const auto& p : store.properties()) {
        global_.total += *p.value;
        ++global_.count;
        if (p.region) {
            auto& r = regions_[*p.region];
            r.total += *p.value;
            ++r.count;
        }
    }
}

double FallbackModel::predict(const std::optional<std::string>& region, std::optional<double> own_value) const {
    const double own = own_value.value_or(0.0);
    const std::size_t own_count = own_value ? 1 : 0;
    if (region) {
        if (auto it = regions_.find(*region); it != regions_.end() && it->second.count > own_count) {
            return (it->second.total - own) / static_cast<double>(it->second.count - own_count);
        }
    }
    if (global_.count <= own_count) throw EmptyTrainingSet("no training value left for the fallback prediction");
    return (global_.total - own) / static_cast<double>(global_.count - own_count);
}

double FallbackModel::predict(const Property& target, const ValuedStore& store) const {
    std::optional<double> own;
    if (auto row = store.row_of(target.id)) own = store.value(*row);
    return predict(target.region, own);
}

// ---------------------------------------------------------------------------
// Witness IO

nlohmann::json witness_to_json(const PredictionWitness& w) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : w.comparables) {
        nlohmann::json sim = std::isinf(c.similarity) ? nlohmann::json("inf") : nlohmann::json(c.similarity);
        comps.push_back({{"id", c.id}, {"similarity", sim}, {"value", c.value}, {"weight", c.weight}});
    }
    return {{"target_id", w.target_id},
            {"predicted_value", w.predicted_value},
            {"comparables", comps},
            {"preselect_candidates_count", w.preselect_candidates},
            {"flags", {{"exact_match", w.exact_match}, {"fallback_used", w.fallback_used}}}};
}

PredictionWitness witness_from_json(const nlohmann::json& j) {
    PredictionWitness w;
    try {
        w.target_id = j.at("target_id").get<std::int64_t>();
        w.predicted_value = j.at("predicted_value").get<double>();
        for (const auto& c : j.value("comparables", nlohmann::json::array())) {
            Comparable comp;
            comp.id = c.at("id").get<std::int64_t>();
            const auto& s = c.at("similarity");
            comp.similarity = s.is_string() ? kInfinity : s.get<double>();
            comp.value = c.at("value").get<double>();
            comp.weight = c.at("weight").get<double>();
            w.comparables.push_back(comp);
        }
        w.preselect_candidates = j.value("preselect_candidates_count", std::size_t{0});
        if (auto it = j.find("flags"); it != j.end()) {
            w.exact_match = it->value("exact_match", false);
            w.fallback_used = it->value("fallback_used", false);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed witness: ") + e.what());
    }
    return w;
}

void write_witnesses(const std::filesystem::path& path, std::span<const PredictionWitness> witnesses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& w : witnesses) out << witness_to_json(w).dump() << '\n';
}

std::vector<PredictionWitness> read_witnesses(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileMissing(path.string());
    std::vector<PredictionWitness> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(witness_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted average

AverageResult select_and_average(std::span<const double> sims, std::span<const double> values,
                                 std::span<const std::int64_t> ids, std::size_t m, SelectionScratch& scratch) {
    auto& chosen = scratch.chosen;
    chosen.clear();
    std::size_t n_inf = 0;
    for (std::size_t j = 0; j < sims.size(); ++j) {
        if (sims[j] > 0.0) {
            chosen.push_back(static_cast<std::uint32_t>(j));
            n_inf += std::isinf(sims[j]) ? 1 : 0;
        }
    }
    AverageResult result;
    if (chosen.empty()) return result;
    result.has_comparables = true;
    result.exact_match = n_inf > 0;
    if (result.exact_match) {
        std::erase_if(chosen, [&](std::uint32_t j) { return !std::isinf(sims[j]); });
    }
    if (chosen.size() > m) {
        auto better = [&](std::uint32_t a, std::uint32_t b) {
            return sims[a] > sims[b] || (sims[a] == sims[b] && ids[a] < ids[b]);
        };
        std::nth_element(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(m), chosen.end(), better);
        chosen.resize(m);
        std::sort(chosen.begin(), chosen.end());
    }

    if (result.exact_match) {
        double total = 0.0;
        for (auto j : chosen) total += values[j];
        result.prediction = total / static_cast<double>(chosen.size());
        return result;
    }
    double top = 0.0;
    for (auto j : chosen) top = std::max(top, sims[j]);
    double num = 0.0;
    double den = 0.0;
    for (auto j : chosen) {
        const double w = sims[j] / top;
        num += w * values[j];
        den += w;
    }
    result.prediction = num / den;
    return result;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

struct PredictScratch {
    std::vector<std::uint32_t> rows;
    std::vector<double> log_diff;
    std::vector<double> raw_diff;
    std::vector<double> sims;
    std::vector<double> values;
    std::vector<std::int64_t> ids;
    std::vector<double> target_scaled;
    SelectionScratch selection;
};

std::optional<PredictionWitness> predict_impl(const Property& target, const SimilarityGenome& genome,
                                              const GeoIndex& index, const ValuedStore& store,
                                              SimilarityFamily family) {
    if (index.size() != store.size()) throw std::invalid_argument("predict: index was not built over the store");
    if (target.attributes.size() != store.n_attributes()) {
        throw std::invalid_argument("predict: target attribute count differs from schema");
    }
    validate_genome(genome, store.n_attributes());

    thread_local PredictScratch s;
    const auto candidates = index.preselect(target.location, genome.preselect, target.id);
    const std::size_t n = candidates.size();
    s.sims.resize(n);
    s.values.resize(n);
    s.ids.resize(n);
    s.rows.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        s.rows[j] = candidates[j].row;
        s.values[j] = store.value(candidates[j].row);
        s.ids[j] = candidates[j].id;
    }
    if (family == SimilarityFamily::location) {
        for (std::size_t j = 0; j < n; ++j) s.sims[j] = lbs_similarity_from_distance(candidates[j].distance_m);
    } else {
        const std::size_t d = store.n_attributes();
        s.target_scaled.resize(d);
        store.scaler().scale_into(target.attributes, s.target_scaled);
        fill_candidate_block(target.attributes, s.target_scaled, store.raw_matrix(), store.scaled_matrix(), d, s.rows,
                             s.log_diff, s.raw_diff);
        score_block(genome, {n, n, s.log_diff, s.raw_diff}, s.sims);
    }

    const auto avg = select_and_average(s.sims, s.values, s.ids, genome.m, s.selection);
    if (!avg.has_comparables) return std::nullopt;

    PredictionWitness w;
    w.target_id = target.id;
    w.predicted_value = avg.prediction;
    w.preselect_candidates = n;
    w.exact_match = avg.exact_match;
    const auto& chosen = s.selection.chosen;
    double top = 0.0;
    double den = 0.0;
    if (!avg.exact_match) {
        for (auto j : chosen) top = std::max(top, s.sims[j]);
        for (auto j : chosen) den += s.sims[j] / top;
    }
    w.comparables.reserve(chosen.size());
    for (auto j : chosen) {
        const double weight = avg.exact_match ? 1.0 / static_cast<double>(chosen.size()) : (s.sims[j] / top) / den;
        w.comparables.push_back({s.ids[j], s.sims[j], s.values[j], weight});
    }
    std::sort(w.comparables.begin(), w.comparables.end(), [](const Comparable& a, const Comparable& b) {
        return a.similarity > b.similarity || (a.similarity == b.similarity && a.id < b.id);
    });
    return w;
}

}  // namespace

std::optional<PredictionWitness> try_predict(const Property& target, const SimilarityGenome& genome,
                                             const GeoIndex& index, const ValuedStore& store, SimilarityFamily family) {
    return predict_impl(target, genome, index, store, family);
}

PredictionWitness predict(const Property& target, const SimilarityGenome& genome, const GeoIndex& index,
                          const ValuedStore& store, SimilarityFamily family) {
    auto w = predict_impl(target, genome, index, store, family);
    if (!w) throw NoComparables(target.id);
    return std::move(*w);
}

PredictionWitness predict_or_fallback(const Property& target, const SimilarityGenome& genome, const GeoIndex& index,
                                      const ValuedStore& store, const FallbackModel& fallback,
                                      SimilarityFamily family) {
    if (auto w = predict_impl(target, genome, index, store, family)) return std::move(*w);
    PredictionWitness w;
    w.target_id = target.id;
    w.predicted_value = fallback.predict(target, store);
    w.preselect_candidates = index.preselect(target.location, genome.preselect, target.id).size();
    w.fallback_used = true;
    return w;
}

std::vector<std::optional<PredictionWitness>> predict_batch(std::span<const Property> targets,
                                                            const SimilarityGenome& genome, const GeoIndex& index,
                                                            const ValuedStore& store, SimilarityFamily family,
                                                            unsigned threads) {
    std::vector<std::optional<PredictionWitness>> out(targets.size());
    detail::parallel_for(targets.size(), threads,
                         [&](std::size_t i) { out[i] = predict_impl(targets[i], genome, index, store, family); });
    return out;
}

std::vector<PredictionWitness> predict_batch_or_fallback(std::span<const Property> targets,
                                                         const SimilarityGenome& genome, const GeoIndex& index,
                                                         const ValuedStore& store, const FallbackModel& fallback,
                                                         SimilarityFamily family, unsigned threads) {
    std::vector<PredictionWitness> out(targets.size());
    detail::parallel_for(targets.size(), threads, [&](std::size_t i) {
        out[i] = predict_or_fallback(targets[i], genome, index, store, fallback, family);
    });
    return out;
}

}  // namespace geocbr
