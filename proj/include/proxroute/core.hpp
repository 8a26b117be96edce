#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxroute/errors.hpp"
#include "proxroute/geometry.hpp"

namespace proxroute {

/// Query encodings are stored as float32 (they arrive from sentence encoders
/// at that precision and the memory budget assumes 4-byte entries); all
/// derived statistics are double.
using Encoding = Eigen::VectorXf;

struct ModelInfo {
    std::string id;
    double price_in = 0.0;   // dollars per input token
    double price_out = 0.0;  // dollars per output token
};

/// Ordered list of candidate models. Construction normalizes the order to
/// cheapest-first by (price_in + price_out), stable on ties; argmax ties
/// everywhere in the engine resolve to the lowest pool index, so routing
/// favors the cheaper model when estimates tie exactly.
class ModelPool {
public:
    ModelPool() = default;
    explicit ModelPool(std::vector<ModelInfo> models);

    int size() const { return static_cast<int>(models_.size()); }
    const ModelInfo& operator[](int i) const { return models_[static_cast<std::size_t>(i)]; }
    const std::vector<ModelInfo>& models() const { return models_; }
    std::optional<int> index_of(const std::string& id) const;

    /// Index of the highest total-price model (first such index on ties).
    int most_expensive() const;

private:
    std::vector<ModelInfo> models_;
};

/// One observed query: encoding plus per-model (accuracy, cost) aligned to
/// pool order (column m belongs to pool model m).
struct QueryRecord {
    std::string query_id;
    std::string task;
    Encoding encoding;
    Eigen::VectorXd acc;   // each in [0, 1]
    Eigen::VectorXd cost;  // dollars, each >= 0
};

/// A model pool plus the records observed against it. Every record's acc and
/// cost vectors follow the pool's model order, and every encoding has the
/// same width d_enc.
struct Corpus {
    ModelPool pool;
    std::vector<QueryRecord> records;
    int d_enc = 0;

    int size() const { return static_cast<int>(records.size()); }

    /// Structural checks: at least one record, per-record vector widths
    /// matching the pool and d_enc, finite encodings, acc in [0, 1],
    /// cost >= 0, unique query ids.
    void validate() const;
};

struct ObjectiveParams {
    double lambda = 0.0;  // accuracy-vs-cost tradeoff, >= 0
};

/// acc − λ·cost. Rejects non-finite inputs and out-of-domain values.
double objective_value(double acc, double cost, const ObjectiveParams& params);

/// Simplex-constrained sparse weights over reference-element indices.
/// Entries are sorted by index, strictly positive, and sum to 1 within 1e-9.
class WeightVector {
public:
    using Entry = std::pair<int, double>;

    WeightVector() = default;

    /// Validates: indices unique, weights finite and >= 0, sum within 1e-9
    /// of 1. Exact zeros are dropped; entries are sorted by index.
    static WeightVector from_entries(std::vector<Entry> entries);

    /// Same, but rescale to sum exactly to 1 first (for weights assembled
    /// from unnormalized masses).
    static WeightVector normalized(std::vector<Entry> entries);

    const std::vector<Entry>& entries() const { return entries_; }
    int support_size() const { return static_cast<int>(entries_.size()); }
    bool empty() const { return entries_.empty(); }

private:
    explicit WeightVector(std::vector<Entry> entries);

    std::vector<Entry> entries_;
};

/// 1 / Σ w² for normalized weights: the number of equally-weighted samples
/// with the same variance. Uniform over k gives k; a point mass gives 1.
double effective_sample_size(const WeightVector& weights);

enum class RouterMode { Base, Prox };
enum class ReferenceKind { Clusters, TrainingPoints };

/// Proximity penalty applied to distances before tilting. Identity is the
/// default; the squared option is available because theory bounds involve
/// squared distances.
enum class PenaltyKind { Distance, SquaredDistance };

struct RouterConfig {
    RouterMode mode = RouterMode::Prox;
    ReferenceKind kind = ReferenceKind::Clusters;
    int clusters = 32;       // K, used when kind == Clusters
    int neighbors = 100;     // k, used when kind == TrainingPoints
    double inv_tau = 20.0;   // 1/τ; 0 disables tilting
    DistanceMetric metric = DistanceMetric::Cosine;
    double epsilon_spread = 1e-2;  // floor for cluster spread in the prior
    PenaltyKind penalty = PenaltyKind::Distance;

    void validate() const;
};

std::string to_string(RouterMode m);
std::string to_string(ReferenceKind k);

}  // namespace proxroute
