#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "proxroute/core.hpp"
#include "proxroute/reference.hpp"

namespace proxroute {

/// Controls the exponential reweighting of a prior toward nearby reference
/// elements: w_i ∝ p_i · exp(−inv_tau · φ_i), the closed-form minimizer of
/// Σ w φ + τ·KL(w ‖ p) over the simplex. inv_tau = 0 keeps the prior as-is;
/// large values concentrate on the closest element.
struct TiltingConfig {
    double inv_tau = 20.0;
    PenaltyKind penalty = PenaltyKind::Distance;
};

/// Inverse-variance weights w_i ∝ 1/σ²_i — the minimum-variance convex
/// combination of independent unbiased estimators. Variances must be
/// strictly positive.
WeightVector min_variance_prior(const std::vector<double>& variances);

/// Reference-element prior p_i ∝ n_i / max(s_i, epsilon_spread): favor
/// well-populated, tight elements. The floor keeps near-zero-spread
/// (e.g. singleton) elements from swallowing the prior.
WeightVector cluster_prior(const ReferenceSet& ref, double epsilon_spread);

/// Uniform prior 1/k over the given neighbor elements.
WeightVector knn_prior(const std::vector<std::pair<int, double>>& neighbors);

/// Exponentially tilt `prior` by per-element penalties (distances; squared
/// first when the config says so). `penalties[j]` belongs to
/// `prior.entries()[j]`. Computed in the log domain with max subtraction, so
/// only penalty differences matter. Support never grows; weights that
/// underflow to exact zero drop out.
WeightVector tilt_weights(const WeightVector& prior, const std::vector<double>& penalties,
                          const TiltingConfig& config);

/// Per-model estimated objectives Û^(m) = Σ_i w_i (mean_acc_i,m − λ·mean_cost_i,m),
/// in the reference set's model order.
Eigen::VectorXd estimate_objectives(const WeightVector& weights, const ReferenceSet& ref,
                                    const ObjectiveParams& params);

/// Index of the largest value; exact ties resolve to the lowest index (the
/// cheapest model, given cheapest-first pool order).
int argmax_lowest(const Eigen::VectorXd& values);

/// Everything a routing decision exposes: the estimates, the weights behind
/// them, their effective sample size, and the chosen model.
struct EstimateReport {
    std::vector<std::string> model_ids;
    Eigen::VectorXd per_model;
    WeightVector weights;
    double ess = 0.0;
    int chosen_index = -1;

    const std::string& chosen() const;
};

/// Query-routing engine over a prepared reference set.
///
/// The weight computation is λ-independent, so a Blend (weighted mean
/// accuracy and cost per model) can be formed once per query and re-scored
/// across a whole λ grid — the sweep harness leans on this.
class Router {
public:
    Router(std::shared_ptr<const ReferenceSet> ref, RouterConfig config);

    const RouterConfig& config() const { return cfg_; }
    const ReferenceSet& reference() const { return *ref_; }

    struct Blend {
        Eigen::VectorXd acc;   // Σ w·mean_acc, per model
        Eigen::VectorXd cost;  // Σ w·mean_cost, per model
        WeightVector weights;
        double ess = 0.0;
    };

    Blend blend(const Encoding& x) const;

    /// argmax_m (acc_m − λ·cost_m) over a prepared blend; ties → lowest index.
    static int decide(const Blend& blend, const ObjectiveParams& params);

    EstimateReport route(const Encoding& x, const ObjectiveParams& params) const;

private:
    WeightVector weights_for(const Encoding& x) const;

    std::shared_ptr<const ReferenceSet> ref_;
    RouterConfig cfg_;
    NeighborIndex index_;
    WeightVector cluster_prior_;  // precomputed when kind == Clusters
};

/// One-shot form: build a transient engine and route a single query.
EstimateReport route(const Encoding& x, const ReferenceSet& ref, const RouterConfig& config,
                     const ObjectiveParams& params);

}  // namespace proxroute
