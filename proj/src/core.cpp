#include "proxroute/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace proxroute {

ModelPool::ModelPool(std::vector<ModelInfo> models) : models_(std::move(models)) {
    std::set<std::string> seen;
    for (const auto& m : models_) {
        if (m.id.empty())
            throw ValidationError(ValidationError::Kind::MalformedRecord, "empty model id");
        if (!seen.insert(m.id).second)
            throw ValidationError(ValidationError::Kind::CorpusInconsistent,
                                  "duplicate model id: " + m.id);
        if (!(m.price_in >= 0.0) || !(m.price_out >= 0.0) || !std::isfinite(m.price_in) ||
            !std::isfinite(m.price_out))
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "negative or non-finite price for model " + m.id);
    }
    std::stable_sort(models_.begin(), models_.end(), [](const ModelInfo& a, const ModelInfo& b) {
        return a.price_in + a.price_out < b.price_in + b.price_out;
    });
}

std::optional<int> ModelPool::index_of(const std::string& id) const {
    for (int i = 0; i < size(); ++i)
        if (models_[static_cast<std::size_t>(i)].id == id) return i;
    return std::nullopt;
}

int ModelPool::most_expensive() const {
    if (models_.empty()) throw ConfigError("empty model pool");
    int best = 0;
    double best_total = models_[0].price_in + models_[0].price_out;
    for (int i = 1; i < size(); ++i) {
        const double total = models_[static_cast<std::size_t>(i)].price_in +
                             models_[static_cast<std::size_t>(i)].price_out;
        if (total > best_total) {
            best = i;
            best_total = total;
        }
    }
    return best;
}

void Corpus::validate() const {
    if (records.empty())
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "corpus has no records");
    if (pool.size() == 0)
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "corpus has no models");
    if (d_enc < 1)
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "d_enc must be >= 1, got " + std::to_string(d_enc));
    std::set<std::string> ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const std::string where = "record " + std::to_string(i) + " (" + rec.query_id + "): ";
        if (rec.query_id.empty() || rec.task.empty())
            throw ValidationError(ValidationError::Kind::MalformedRecord,
                                  where + "empty query_id or task");
        if (!ids.insert(rec.query_id).second)
            throw ValidationError(ValidationError::Kind::CorpusInconsistent,
                                  where + "duplicate query_id");
        if (rec.encoding.size() != d_enc)
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  where + "encoding width " + std::to_string(rec.encoding.size()) +
                                      " != d_enc " + std::to_string(d_enc));
        if (!rec.encoding.allFinite())
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  where + "non-finite encoding entry");
        if (rec.acc.size() != pool.size() || rec.cost.size() != pool.size())
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  where + "observation width does not match the model pool");
        for (int m = 0; m < pool.size(); ++m) {
            const double a = rec.acc(m), c = rec.cost(m);
            if (!std::isfinite(a) || a < 0.0 || a > 1.0)
                throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                      where + "accuracy outside [0,1] for model " + pool[m].id);
            if (!std::isfinite(c) || c < 0.0)
                throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                      where + "negative or non-finite cost for model " +
                                          pool[m].id);
        }
    }
}

double objective_value(double acc, double cost, const ObjectiveParams& params) {
    if (!std::isfinite(acc) || !std::isfinite(cost) || !std::isfinite(params.lambda))
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "non-finite input to objective");
    if (acc < 0.0 || acc > 1.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "accuracy outside [0,1]: " + std::to_string(acc));
    if (cost < 0.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "negative cost: " + std::to_string(cost));
    if (params.lambda < 0.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "negative lambda: " + std::to_string(params.lambda));
    return acc - params.lambda * cost;
}

namespace {

std::vector<WeightVector::Entry> finish_weights(std::vector<WeightVector::Entry> entries,
                                                bool renormalize) {
    std::sort(entries.begin(), entries.end());
    double sum = 0.0;
    int prev = -1;
    for (const auto& [idx, w] : entries) {
        if (idx < 0)
            throw ValidationError(ValidationError::Kind::Internal, "negative weight index");
        if (idx == prev)
            throw ValidationError(ValidationError::Kind::Internal,
                                  "duplicate weight index " + std::to_string(idx));
        prev = idx;
        if (!std::isfinite(w) || w < 0.0)
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "weight must be finite and nonnegative");
        sum += w;
    }
    if (renormalize) {
        if (sum <= 0.0)
            throw ValidationError(ValidationError::Kind::DegenerateInput,
                                  "cannot normalize all-zero weights");
        for (auto& [idx, w] : entries) w /= sum;
    } else if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "weights sum to " + std::to_string(sum) + ", expected 1");
    }
    std::erase_if(entries, [](const WeightVector::Entry& e) { return e.second == 0.0; });
    return entries;
}

}  // namespace

WeightVector::WeightVector(std::vector<Entry> entries) : entries_(std::move(entries)) {}

WeightVector WeightVector::from_entries(std::vector<Entry> entries) {
    return WeightVector(finish_weights(std::move(entries), /*renormalize=*/false));
}

WeightVector WeightVector::normalized(std::vector<Entry> entries) {
    return WeightVector(finish_weights(std::move(entries), /*renormalize=*/true));
}

double effective_sample_size(const WeightVector& weights) {
    double sq = 0.0;
    for (const auto& [idx, w] : weights.entries()) sq += w * w;
    if (sq <= 0.0) return 0.0;
    return 1.0 / sq;
}

void RouterConfig::validate() const {
    if (clusters < 1) throw ConfigError("clusters must be >= 1");
    if (neighbors < 1) throw ConfigError("neighbors must be >= 1");
    if (!std::isfinite(inv_tau) || inv_tau < 0.0)
        throw ConfigError("inv_tau must be finite and >= 0");
    if (!(epsilon_spread > 0.0) || !std::isfinite(epsilon_spread))
        throw ConfigError("epsilon_spread must be > 0");
}

std::string to_string(RouterMode m) { return m == RouterMode::Base ? "base" : "prox"; }
std::string to_string(ReferenceKind k) {
    return k == ReferenceKind::Clusters ? "clusters" : "points";
}

}  // namespace proxroute
