#include "proxroute/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace proxroute {

WeightVector min_variance_prior(const std::vector<double>& variances) {
    if (variances.empty())
        throw ValidationError(ValidationError::Kind::DegenerateInput,
                              "min-variance prior needs at least one variance");
    std::vector<WeightVector::Entry> entries;
    entries.reserve(variances.size());
    for (std::size_t i = 0; i < variances.size(); ++i) {
        const double v = variances[i];
        if (!std::isfinite(v) || v <= 0.0)
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "variance must be finite and > 0");
        entries.emplace_back(static_cast<int>(i), 1.0 / v);
    }
    return WeightVector::normalized(std::move(entries));
}

WeightVector cluster_prior(const ReferenceSet& ref, double epsilon_spread) {
    if (!(epsilon_spread > 0.0) || !std::isfinite(epsilon_spread))
        throw ConfigError("epsilon_spread must be finite and > 0");
    std::vector<WeightVector::Entry> entries;
    entries.reserve(static_cast<std::size_t>(ref.size()));
    for (int i = 0; i < ref.size(); ++i)
        entries.emplace_back(i, static_cast<double>(ref.counts(i)) /
                                    std::max(ref.spreads(i), epsilon_spread));
    return WeightVector::normalized(std::move(entries));
}

WeightVector knn_prior(const std::vector<std::pair<int, double>>& neighbors) {
    if (neighbors.empty())
        throw ValidationError(ValidationError::Kind::DegenerateInput,
                              "knn prior needs at least one neighbor");
    const double w = 1.0 / static_cast<double>(neighbors.size());
    std::vector<WeightVector::Entry> entries;
    entries.reserve(neighbors.size());
    for (const auto& [idx, dist] : neighbors) entries.emplace_back(idx, w);
    return WeightVector::from_entries(std::move(entries));
}

WeightVector tilt_weights(const WeightVector& prior, const std::vector<double>& penalties,
                          const TiltingConfig& config) {
    if (!std::isfinite(config.inv_tau) || config.inv_tau < 0.0)
        throw ConfigError("inv_tau must be finite and >= 0");
    const auto& entries = prior.entries();
    if (penalties.size() != entries.size())
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "one penalty per prior entry required");
    for (const double p : penalties)
        if (!std::isfinite(p))
            throw ValidationError(ValidationError::Kind::ValueOutOfRange, "non-finite penalty");
    if (prior.empty())
        throw ValidationError(ValidationError::Kind::DegenerateInput, "empty prior");
    if (config.inv_tau == 0.0) return prior;

    // Log-domain: g_j = ln p_j − inv_tau·φ_j, shifted by max g so the
    // largest term exponentiates to exactly 1.
    std::vector<double> g(entries.size());
    double gmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < entries.size(); ++j) {
        const double phi = config.penalty == PenaltyKind::SquaredDistance
                               ? penalties[j] * penalties[j]
                               : penalties[j];
        g[j] = std::log(entries[j].second) - config.inv_tau * phi;
        gmax = std::max(gmax, g[j]);
    }
    std::vector<WeightVector::Entry> tilted;
    tilted.reserve(entries.size());
    for (std::size_t j = 0; j < entries.size(); ++j)
        tilted.emplace_back(entries[j].first, std::exp(g[j] - gmax));
    return WeightVector::normalized(std::move(tilted));
}

Eigen::VectorXd estimate_objectives(const WeightVector& weights, const ReferenceSet& ref,
                                    const ObjectiveParams& params) {
    if (weights.empty())
        throw ValidationError(ValidationError::Kind::DegenerateInput, "empty weight vector");
    if (!std::isfinite(params.lambda) || params.lambda < 0.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "lambda must be finite and >= 0");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(ref.num_models());
    for (const auto& [idx, w] : weights.entries()) {
        if (idx >= ref.size())
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "weight index outside the reference set");
        out += w * (ref.mean_acc.row(idx) - params.lambda * ref.mean_cost.row(idx)).transpose();
    }
    return out;
}

int argmax_lowest(const Eigen::VectorXd& values) {
    if (values.size() == 0)
        throw ValidationError(ValidationError::Kind::DegenerateInput, "argmax of empty vector");
    int best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values(i) > values(best)) best = static_cast<int>(i);
    return best;
}

const std::string& EstimateReport::chosen() const {
    if (chosen_index < 0 || chosen_index >= static_cast<int>(model_ids.size()))
        throw ValidationError(ValidationError::Kind::Internal, "report has no decision");
    return model_ids[static_cast<std::size_t>(chosen_index)];
}

Router::Router(std::shared_ptr<const ReferenceSet> ref, RouterConfig config)
    : ref_(std::move(ref)), cfg_(config), index_(ref_) {
    cfg_.validate();
    if (cfg_.kind != ref_->kind)
        throw ConfigError("router kind (" + to_string(cfg_.kind) +
                          ") disagrees with the reference artifact (" + to_string(ref_->kind) +
                          ")");
    if (cfg_.metric != ref_->metric)
        throw ConfigError("router metric disagrees with the reference artifact");
    if (cfg_.kind == ReferenceKind::TrainingPoints && cfg_.neighbors > ref_->size())
        throw ConfigError("neighbors = " + std::to_string(cfg_.neighbors) +
                          " exceeds reference size " + std::to_string(ref_->size()));
    if (cfg_.kind == ReferenceKind::Clusters)
        cluster_prior_ = cluster_prior(*ref_, cfg_.epsilon_spread);
}

WeightVector Router::weights_for(const Encoding& x) const {
    if (cfg_.kind == ReferenceKind::Clusters) {
        const Eigen::VectorXd dist = index_.all_distances(x);
        if (cfg_.mode == RouterMode::Base) {
            // Nearest centroid, all mass on it.
            return WeightVector::from_entries({{argmax_lowest(-dist), 1.0}});
        }
        std::vector<double> penalties(dist.data(), dist.data() + dist.size());
        return tilt_weights(cluster_prior_, penalties,
                            TiltingConfig{cfg_.inv_tau, cfg_.penalty});
    }
    auto neighbors = index_.query(x, cfg_.neighbors);
    std::sort(neighbors.begin(), neighbors.end());  // index order, like WeightVector
    const WeightVector prior = knn_prior(neighbors);
    if (cfg_.mode == RouterMode::Base) return prior;
    std::vector<double> penalties;
    penalties.reserve(neighbors.size());
    for (const auto& [idx, dist] : neighbors) penalties.push_back(dist);
    return tilt_weights(prior, penalties, TiltingConfig{cfg_.inv_tau, cfg_.penalty});
}

Router::Blend Router::blend(const Encoding& x) const {
    Blend b;
    b.weights = weights_for(x);
    b.acc = Eigen::VectorXd::Zero(ref_->num_models());
    b.cost = Eigen::VectorXd::Zero(ref_->num_models());
    for (const auto& [idx, w] : b.weights.entries()) {
        b.acc += w * ref_->mean_acc.row(idx).transpose();
        b.cost += w * ref_->mean_cost.row(idx).transpose();
    }
    b.ess = effective_sample_size(b.weights);
    return b;
}

int Router::decide(const Blend& blend, const ObjectiveParams& params) {
    if (!std::isfinite(params.lambda) || params.lambda < 0.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "lambda must be finite and >= 0");
    return argmax_lowest(blend.acc - params.lambda * blend.cost);
}

EstimateReport Router::route(const Encoding& x, const ObjectiveParams& params) const {
    EstimateReport report;
    report.model_ids = ref_->model_ids;
    report.weights = weights_for(x);
    report.ess = effective_sample_size(report.weights);
    report.per_model = estimate_objectives(report.weights, *ref_, params);
    report.chosen_index = argmax_lowest(report.per_model);
    return report;
}

EstimateReport route(const Encoding& x, const ReferenceSet& ref, const RouterConfig& config,
                     const ObjectiveParams& params) {
    return Router(borrow(ref), config).route(x, params);
}

}  // namespace proxroute
