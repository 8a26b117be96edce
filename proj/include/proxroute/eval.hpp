#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "proxroute/data.hpp"
#include "proxroute/estimator.hpp"

namespace proxroute {

/// Mean observed accuracy and dollar cost of the chosen models at one λ.
struct CurvePoint {
    double lambda = 0.0;
    double mean_accuracy = 0.0;
    double mean_cost = 0.0;
};

struct SweepResult {
    std::string label;
    std::vector<CurvePoint> points;  // grid order
    double auc = 0.0;                // normalized accuracy-cost AUC
};

/// Any decision rule under evaluation: record in, pool index out. λ arrives
/// via the params so λ-insensitive baselines can ignore it.
using RouterFn = std::function<int(const QueryRecord&, const ObjectiveParams&)>;

/// {0} followed by `count` log-spaced values over [lo, hi].
std::vector<double> default_lambda_grid(int count = 50, double lo = 1e-2, double hi = 1e4);

/// Decisions for every record at one λ.
std::vector<int> route_all(const RouterFn& fn, const std::vector<QueryRecord>& records,
                           const ObjectiveParams& params);
std::vector<int> route_all(const Router& router, const std::vector<QueryRecord>& records,
                           const ObjectiveParams& params);

/// With threads > 1 the records are processed in fixed-size chunks whose
/// partial sums are combined in chunk order, so results are bit-identical
/// for any thread count.
CurvePoint evaluate_at_lambda(const RouterFn& fn, const std::vector<QueryRecord>& records,
                              const ObjectiveParams& params, int threads = 1);

SweepResult sweep(const std::string& label, const RouterFn& fn,
                  const std::vector<QueryRecord>& records, const std::vector<double>& grid,
                  int threads = 1);

/// Router fast path: the proximity weights are λ-independent, so each record
/// is blended once and re-scored across the whole grid.
SweepResult sweep(const std::string& label, const Router& router,
                  const std::vector<QueryRecord>& records, const std::vector<double>& grid,
                  int threads = 1);

/// Area under the accuracy-vs-cost curve, normalized by the cost range so
/// the ideal router scores toward 1. Points sharing a cost collapse to the
/// best accuracy; a zero-width curve scores its single accuracy.
double normalized_auc(const std::vector<CurvePoint>& points);

/// Fraction of decisions that land in the top z models by observed objective
/// (ties broken toward the lower pool index). Nondecreasing in z.
double match_accuracy(const std::vector<int>& decisions,
                      const std::vector<QueryRecord>& records, const ObjectiveParams& params,
                      int z);

/// Per-task mean observed objective per model.
std::map<std::string, Eigen::VectorXd> task_mean_objectives(
    const std::vector<QueryRecord>& records, const ObjectiveParams& params);

struct JaccardPair {
    std::string outlier_task;
    std::string inlier_task;
    double jaccard = 0.0;
};

/// Top-z model-set overlap between each outlier task and each inlier task
/// (every non-outlier key of `per_task_objectives` is an inlier).
struct JaccardReport {
    int z = 0;
    double average = 0.0;
    std::vector<JaccardPair> pairs;
};

JaccardReport jaccard_overlap(const std::map<std::string, Eigen::VectorXd>& per_task_objectives,
                              const std::set<std::string>& outlier_tasks, int z);

/// Retrain when the outlier/inlier preference overlap falls strictly below
/// the threshold.
bool retrain_trigger(const JaccardReport& report, double threshold);

/// Routes every query to one fixed model.
RouterFn make_fixed_baseline(int model_index);

/// Seed-deterministic uniform choice, keyed by query id: independent of
/// record order, λ, and call count.
RouterFn make_random_baseline(int pool_size, std::uint64_t seed);

struct BiasVarianceRow {
    double inv_tau = 0.0;
    double mean_auc = 0.0;
    double mean_sq_err = 0.0;  // accuracy estimates vs per-task truth, λ = 0
};

/// Regenerate → split → fit → score, once per seed, for each inv_tau on the
/// grid; rows are means across seeds. Shows estimation error trading bias
/// (small inv_tau: over-smoothed) against variance (large: too few effective
/// samples).
std::vector<BiasVarianceRow> bias_variance_probe(const SyntheticConfig& config,
                                                 const RouterConfig& proto,
                                                 const SplitSpec& split,
                                                 const std::vector<double>& inv_tau_grid,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const std::vector<double>& lambda_grid);

/// "label,lambda,mean_accuracy,mean_cost" rows, %.17g doubles (lossless).
std::string curves_csv(const std::vector<SweepResult>& results);

}  // namespace proxroute
