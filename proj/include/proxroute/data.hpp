#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxroute/core.hpp"

namespace proxroute {

/// Train/test regimes for task-structured corpora:
///  - LeaveTaskOut: outlier tasks go entirely to test; inlier tasks split
///    per-task by inlier_train_fraction.
///  - FewShotOutlier: LeaveTaskOut, then few_shot_count records sampled from
///    the pooled outlier records move into train.
///  - AllSee: every task splits like an inlier (the outlier list is ignored).
/// Inlier-task membership is decided per task with a task-labeled RNG stream,
/// so a task's train set is identical across scenarios for a given seed.
enum class Scenario { LeaveTaskOut, FewShotOutlier, AllSee };

std::string to_string(Scenario s);
std::optional<Scenario> scenario_from_string(const std::string& name);

struct SplitSpec {
    Scenario scenario = Scenario::LeaveTaskOut;
    std::vector<std::string> outlier_tasks;
    double inlier_train_fraction = 0.6;  // train share, floor applied to train
    int few_shot_count = 25;
    std::uint64_t seed = 42;

    void validate() const;
};

struct SplitResult {
    Corpus train;
    Corpus test;
};

/// Partition a corpus according to `spec`. Records keep corpus order within each
/// side; together the sides hold every record exactly once.
SplitResult make_split(const Corpus& corpus, const SplitSpec& spec);

/// Dollar cost of a call priced per token.
double compute_cost(std::int64_t tokens_in, std::int64_t tokens_out, const ModelInfo& model);

enum class CorpusFormat { Jsonl, Binary };

/// Load a corpus, sniffing the format from the file's leading bytes. JSONL
/// diagnostics cite 1-based line numbers. Per-record observations may give
/// either a dollar cost or token counts (priced via the pool's rates).
Corpus load_corpus(const std::string& path);

void save_corpus(const std::string& path, const Corpus& corpus, CorpusFormat format);

enum class NoiseKind { Gaussian, Bernoulli };

/// Task-blob generator: each task is an isotropic Gaussian cloud around a
/// random direction scaled to cluster_separation, and every record's
/// observations are its task's true per-model (accuracy, cost) plus noise.
/// Models must be listed cheapest-first so table columns line up with pool
/// order.
struct SyntheticConfig {
    int num_tasks = 8;
    int queries_per_task = 250;
    int d_enc = 32;
    double cluster_separation = 6.0;
    double blob_std = 1.0;
    double noise_std = 0.12;
    NoiseKind noise = NoiseKind::Gaussian;
    std::vector<ModelInfo> models;
    Eigen::MatrixXd true_acc;   // num_tasks × |models|, entries in [0,1]
    Eigen::MatrixXd true_cost;  // num_tasks × |models|, dollars ≥ 0
    std::uint64_t seed = 42;

    /// The frozen benchmark instance: 8 tasks × 6 models with a shared
    /// ascending cost ladder; each of the first six tasks boosts one model's
    /// accuracy and dents another's, and the last two tasks sit at the
    /// column-mean accuracy of the first six (typical work, atypical only in
    /// which model is worth paying for).
    static SyntheticConfig benchmark_default();

    void validate() const;
};

/// Ground truth the generator sampled from, for oracle evaluation.
struct SyntheticTruth {
    std::vector<std::string> tasks;      // row order of acc/cost
    std::vector<std::string> model_ids;  // column order (pool order)
    Eigen::MatrixXd acc;
    Eigen::MatrixXd cost;

    std::optional<int> task_index(const std::string& task) const;

    /// acc(t,m) − λ·cost(t,m): the mean objective a router scoring task t
    /// with model m actually realizes.
    double true_mean_objective(int task, int model, double lambda) const;
};

std::pair<Corpus, SyntheticTruth> synth_generate(const SyntheticConfig& config);

}  // namespace proxroute
