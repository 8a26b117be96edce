#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "proxroute/core.hpp"
#include "proxroute/geometry.hpp"

namespace proxroute {

using RowMajorMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Result of Lloyd's iterations. Centroids live in the raw encoding space
/// (geometric means), stored as float32 like all encodings; the math runs
/// in double internally.
struct ClusteringResult {
    RowMajorMatrixXf centroids;       // K × d_enc
    std::vector<int> assignments;     // record index → cluster index
    int iterations = 0;
    bool converged = false;
    std::vector<double> sse_history;  // within-cluster SSE after each iteration
};

/// Seeded k-means++ initialization followed by Lloyd's iterations.
/// Terminates when the largest centroid movement drops below
/// rel_tol × data scale, or after max_iters. Clusters that come up empty are
/// re-seeded from the point farthest from its current centroid. Fully
/// deterministic for a given seed.
ClusteringResult kmeans_fit(const std::vector<QueryRecord>& records, int K, std::uint64_t seed,
                            int max_iters = 100, double rel_tol = 1e-4);

/// The estimator's backing store, laid out struct-of-arrays: one anchor row,
/// one row of per-model mean accuracy/cost, a member count and a spread per
/// element. Value V_i^(m)(λ) = mean_acc(i,m) − λ·mean_cost(i,m) is formable
/// for any λ without revisiting raw records.
struct ReferenceSet {
    ReferenceKind kind = ReferenceKind::Clusters;
    DistanceMetric metric = DistanceMetric::Cosine;
    std::vector<std::string> model_ids;  // pool order at build time
    RowMajorMatrixXf anchors;            // |I| × d_enc, float32
    Eigen::MatrixXd mean_acc;            // |I| × M
    Eigen::MatrixXd mean_cost;           // |I| × M
    Eigen::VectorX<std::int64_t> counts; // n_i ≥ 1
    Eigen::VectorXd spreads;             // s_i ≥ 0 (configured metric)

    int size() const { return static_cast<int>(anchors.rows()); }
    int d_enc() const { return static_cast<int>(anchors.cols()); }
    int num_models() const { return static_cast<int>(model_ids.size()); }

    /// Read-only view of one element.
    struct ElementView {
        int index;
        Eigen::Block<const RowMajorMatrixXf, 1, Eigen::Dynamic, true> r;
        Eigen::MatrixXd::ConstRowXpr mean_acc;
        Eigen::MatrixXd::ConstRowXpr mean_cost;
        std::int64_t n;
        double s;
    };
    ElementView element(int i) const {
        return ElementView{i, anchors.row(i), mean_acc.row(i), mean_cost.row(i), counts(i),
                           spreads(i)};
    }

    void validate() const;
};

/// One element per cluster: r_i = centroid, per-model means over members,
/// n_i = member count, s_i = mean member distance from the centroid under
/// `metric`.
ReferenceSet build_cluster_reference(const Corpus& corpus, const ClusteringResult& clustering,
                                     DistanceMetric metric);

/// One element per training record: r_i = encoding, means are the record's
/// own observations, n_i = 1, s_i = 0.
ReferenceSet build_point_reference(const Corpus& corpus, DistanceMetric metric);

/// Exact nearest-neighbor search over a reference set's anchors, by linear
/// scan. Non-owning view; cosine row norms are precomputed so a query costs
/// one dot product per row, and the resulting distances agree bitwise with
/// the geometry free functions on the same float32 rows.
class NeighborIndex {
public:
    explicit NeighborIndex(std::shared_ptr<const ReferenceSet> ref);

    int size() const { return ref_->size(); }
    const ReferenceSet& reference() const { return *ref_; }

    /// Distance from x to every anchor, in element order.
    Eigen::VectorXd all_distances(const Encoding& x) const;

    /// The k smallest-distance elements, ascending by distance; exact ties
    /// resolve to the lower element index.
    std::vector<std::pair<int, double>> query(const Encoding& x, int k) const;

private:
    std::shared_ptr<const ReferenceSet> ref_;
    Eigen::VectorXd norms_;  // per-row euclidean norms (cosine metric only)
};

/// Free-function form of NeighborIndex::query.
std::vector<std::pair<int, double>> query_neighbors(const NeighborIndex& index, const Encoding& x,
                                                    int k);

/// Versioned binary artifact; round-trips bit-exactly.
void save_reference(const std::string& path, const ReferenceSet& ref);
ReferenceSet load_reference(const std::string& path);

/// Aliasing helper: wrap a stack/borrowed ReferenceSet in a non-owning
/// shared_ptr (caller guarantees the referand outlives users).
inline std::shared_ptr<const ReferenceSet> borrow(const ReferenceSet& ref) {
    return std::shared_ptr<const ReferenceSet>(std::shared_ptr<void>(), &ref);
}

}  // namespace proxroute
