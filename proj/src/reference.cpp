#include "proxroute/reference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "binio.hpp"
#include "proxroute/rng.hpp"

namespace proxroute {

namespace {

using RowMajorMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Records stacked as double rows for the clustering math.
RowMajorMatrixXd stack_rows(const std::vector<QueryRecord>& records) {
    const Eigen::Index n = static_cast<Eigen::Index>(records.size());
    const Eigen::Index d = records.front().encoding.size();
    RowMajorMatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (records[static_cast<std::size_t>(i)].encoding.size() != d)
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  "records disagree on encoding width");
        x.row(i) = records[static_cast<std::size_t>(i)].encoding.cast<double>();
    }
    return x;
}

/// Argmin over centroid rows by squared euclidean distance; exact ties take
/// the lower cluster index.
int nearest_centroid(const RowMajorMatrixXd& centroids, const Eigen::VectorXd& point) {
    int best = 0;
    double best_d2 = (centroids.row(0).transpose() - point).squaredNorm();
    for (Eigen::Index k = 1; k < centroids.rows(); ++k) {
        const double d2 = (centroids.row(k).transpose() - point).squaredNorm();
        if (d2 < best_d2) {
            best = static_cast<int>(k);
            best_d2 = d2;
        }
    }
    return best;
}

}  // namespace

ClusteringResult kmeans_fit(const std::vector<QueryRecord>& records, int K, std::uint64_t seed,
                            int max_iters, double rel_tol) {
    if (records.empty())
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "kmeans needs records");
    if (K < 1) throw ConfigError("kmeans needs K >= 1");
    if (static_cast<std::size_t>(K) > records.size())
        throw ConfigError("kmeans K = " + std::to_string(K) + " exceeds record count " +
                          std::to_string(records.size()));
    if (max_iters < 1) throw ConfigError("kmeans needs max_iters >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("kmeans needs rel_tol > 0");

    const RowMajorMatrixXd x = stack_rows(records);
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Rng rng(seed);

    // k-means++ seeding: first centroid uniform, the rest sampled with
    // probability proportional to squared distance from the chosen set.
    RowMajorMatrixXd centroids(K, d);
    centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = d2.sum();
        Eigen::Index pick;
        if (total > 0.0) {
            const double r = rng.uniform01() * total;
            double cum = 0.0;
            pick = n - 1;  // fp-safe fallback: the last row
            for (Eigen::Index i = 0; i < n; ++i) {
                cum += d2(i);
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All remaining mass is zero (duplicate-heavy data): fall back
            // to a uniform draw so seeding still completes.
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(k) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centroids.row(k)).rowwise().squaredNorm());
    }

    // Movement tolerance is relative to the data's RMS norm so the stopping
    // rule is insensitive to the encoding scale.
    const double scale = std::max(1.0, std::sqrt(x.rowwise().squaredNorm().mean()));
    const double move_tol = rel_tol * scale;

    ClusteringResult result;
    result.assignments.assign(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);

    for (int iter = 0; iter < max_iters; ++iter) {
        // Assign step.
        std::fill(counts.begin(), counts.end(), 0);
        Eigen::VectorXd own_d2(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int k = nearest_centroid(centroids, x.row(i).transpose());
            result.assignments[static_cast<std::size_t>(i)] = k;
            counts[static_cast<std::size_t>(k)] += 1;
            own_d2(i) = (centroids.row(k).transpose() - x.row(i).transpose()).squaredNorm();
        }

        // Re-seed any empty cluster from the point farthest from its own
        // centroid, taking donors only from clusters that keep a member.
        for (int e = 0; e < K; ++e) {
            if (counts[static_cast<std::size_t>(e)] > 0) continue;
            Eigen::Index donor = -1;
            double worst = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int owner = result.assignments[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(owner)] < 2) continue;
                if (own_d2(i) > worst) {
                    worst = own_d2(i);
                    donor = i;
                }
            }
            if (donor < 0)
                throw ValidationError(ValidationError::Kind::DegenerateInput,
                                      "cannot repair empty cluster: no donor available");
            counts[static_cast<std::size_t>(
                result.assignments[static_cast<std::size_t>(donor)])] -= 1;
            result.assignments[static_cast<std::size_t>(donor)] = e;
            counts[static_cast<std::size_t>(e)] = 1;
            own_d2(donor) = 0.0;  // now its own seed; ineligible as a donor
        }

        // Update step.
        RowMajorMatrixXd next = RowMajorMatrixXd::Zero(K, d);
        for (Eigen::Index i = 0; i < n; ++i)
            next.row(result.assignments[static_cast<std::size_t>(i)]) += x.row(i);
        for (int k = 0; k < K; ++k)
            next.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);

        double movement = 0.0;
        for (int k = 0; k < K; ++k)
            movement = std::max(movement, (next.row(k) - centroids.row(k)).norm());
        centroids = next;
        result.iterations = iter + 1;

        double sse = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            sse += (centroids.row(result.assignments[static_cast<std::size_t>(i)]).transpose() -
                    x.row(i).transpose())
                       .squaredNorm();
        result.sse_history.push_back(sse);

        if (movement <= move_tol) {
            result.converged = true;
            break;
        }
    }

    result.centroids = centroids.cast<float>();
    return result;
}

void ReferenceSet::validate() const {
    if (size() < 1)
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "reference set is empty");
    if (model_ids.empty())
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "reference set has no models");
    std::set<std::string> seen;
    for (const auto& id : model_ids) {
        if (id.empty() || !seen.insert(id).second)
            throw ValidationError(ValidationError::Kind::CorpusInconsistent,
                                  "empty or duplicate model id in reference set");
    }
    const int m = num_models();
    if (mean_acc.rows() != size() || mean_acc.cols() != m || mean_cost.rows() != size() ||
        mean_cost.cols() != m || counts.size() != size() || spreads.size() != size())
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "reference set arrays disagree on shape");
    if (!anchors.allFinite() || !mean_acc.allFinite() || !mean_cost.allFinite() ||
        !spreads.allFinite())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "non-finite value in reference set");
    if ((mean_acc.array() < 0.0).any() || (mean_acc.array() > 1.0).any())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "reference mean accuracy outside [0,1]");
    if ((mean_cost.array() < 0.0).any())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "negative reference mean cost");
    if ((spreads.array() < 0.0).any())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange, "negative spread");
    for (Eigen::Index i = 0; i < counts.size(); ++i)
        if (counts(i) < 1)
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "reference element with count < 1");
}

ReferenceSet build_cluster_reference(const Corpus& corpus, const ClusteringResult& clustering,
                                     DistanceMetric metric) {
    corpus.validate();
    const int K = static_cast<int>(clustering.centroids.rows());
    if (clustering.assignments.size() != corpus.records.size())
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "clustering assignments do not match the corpus");
    if (K < 1 || clustering.centroids.cols() != corpus.d_enc)
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "centroid shape does not match the corpus");

    const int m = corpus.pool.size();
    ReferenceSet ref;
    ref.kind = ReferenceKind::Clusters;
    ref.metric = metric;
    for (const auto& info : corpus.pool.models()) ref.model_ids.push_back(info.id);
    ref.anchors = clustering.centroids;
    ref.mean_acc = Eigen::MatrixXd::Zero(K, m);
    ref.mean_cost = Eigen::MatrixXd::Zero(K, m);
    ref.counts = Eigen::VectorX<std::int64_t>::Zero(K);
    ref.spreads = Eigen::VectorXd::Zero(K);

    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        const int k = clustering.assignments[i];
        if (k < 0 || k >= K)
            throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                  "assignment index outside the cluster range");
        const auto& rec = corpus.records[i];
        ref.mean_acc.row(k) += rec.acc.transpose();
        ref.mean_cost.row(k) += rec.cost.transpose();
        ref.counts(k) += 1;
        ref.spreads(k) +=
            metric == DistanceMetric::Cosine
                ? cosine_distance(rec.encoding, ref.anchors.row(k))
                : euclidean_distance(rec.encoding, ref.anchors.row(k).transpose());
    }
    for (int k = 0; k < K; ++k) {
        if (ref.counts(k) < 1)
            throw ValidationError(ValidationError::Kind::DegenerateInput,
                                  "cluster " + std::to_string(k) + " has no members");
        ref.mean_acc.row(k) /= static_cast<double>(ref.counts(k));
        ref.mean_cost.row(k) /= static_cast<double>(ref.counts(k));
        // cosine distance of a member sitting on its centroid can round to
        // -2^-52, so the mean needs a floor at zero
        ref.spreads(k) = std::max(0.0, ref.spreads(k) / static_cast<double>(ref.counts(k)));
    }
    ref.validate();
    return ref;
}

ReferenceSet build_point_reference(const Corpus& corpus, DistanceMetric metric) {
    corpus.validate();
    const int n = corpus.size();
    const int m = corpus.pool.size();
    ReferenceSet ref;
    ref.kind = ReferenceKind::TrainingPoints;
    ref.metric = metric;
    for (const auto& info : corpus.pool.models()) ref.model_ids.push_back(info.id);
    ref.anchors.resize(n, corpus.d_enc);
    ref.mean_acc.resize(n, m);
    ref.mean_cost.resize(n, m);
    ref.counts = Eigen::VectorX<std::int64_t>::Ones(n);
    ref.spreads = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const auto& rec = corpus.records[static_cast<std::size_t>(i)];
        ref.anchors.row(i) = rec.encoding.transpose();
        ref.mean_acc.row(i) = rec.acc.transpose();
        ref.mean_cost.row(i) = rec.cost.transpose();
    }
    ref.validate();
    return ref;
}

NeighborIndex::NeighborIndex(std::shared_ptr<const ReferenceSet> ref) : ref_(std::move(ref)) {
    if (!ref_) throw ConfigError("neighbor index needs a reference set");
    ref_->validate();
    if (ref_->metric == DistanceMetric::Cosine) {
        // Squared row norms, stored exactly as the geometry function computes
        // them so scan results agree bitwise with per-row calls.
        norms_.resize(ref_->size());
        for (int i = 0; i < ref_->size(); ++i)
            norms_(i) = static_cast<double>(ref_->anchors.row(i).squaredNorm());
    }
}

Eigen::VectorXd NeighborIndex::all_distances(const Encoding& x) const {
    detail::require_same_length(x.size(), ref_->anchors.cols());
    const int n = ref_->size();
    Eigen::VectorXd out(n);
    if (ref_->metric == DistanceMetric::Cosine) {
        const double na2 = static_cast<double>(x.squaredNorm());
        if (na2 <= 1e-24)
            throw ValidationError(ValidationError::Kind::DegenerateInput,
                                  "cosine distance undefined for (near-)zero-norm encoding");
        const double sqrt_na = std::sqrt(na2);
        for (int i = 0; i < n; ++i) {
            const double nb2 = norms_(i);
            if (nb2 <= 1e-24)
                throw ValidationError(ValidationError::Kind::DegenerateInput,
                                      "cosine distance undefined for (near-)zero-norm encoding");
            const double dot = static_cast<double>(x.dot(ref_->anchors.row(i)));
            out(i) = 1.0 - dot / (sqrt_na * std::sqrt(nb2));
        }
    } else {
        for (int i = 0; i < n; ++i)
            out(i) = std::sqrt(
                static_cast<double>((x - ref_->anchors.row(i).transpose()).squaredNorm()));
    }
    return out;
}

std::vector<std::pair<int, double>> NeighborIndex::query(const Encoding& x, int k) const {
    if (k < 1) throw ConfigError("neighbor query needs k >= 1");
    if (k > size())
        throw ConfigError("neighbor query k = " + std::to_string(k) +
                          " exceeds reference size " + std::to_string(size()));
    const Eigen::VectorXd dist = all_distances(x);
    std::vector<int> order(static_cast<std::size_t>(size()));
    std::iota(order.begin(), order.end(), 0);
    const auto closer = [&dist](int a, int b) {
        return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
    };
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), closer);
    std::sort(order.begin(), order.begin() + k, closer);
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) out.emplace_back(order[static_cast<std::size_t>(j)],
                                                 dist(order[static_cast<std::size_t>(j)]));
    return out;
}

std::vector<std::pair<int, double>> query_neighbors(const NeighborIndex& index, const Encoding& x,
                                                    int k) {
    return index.query(x, k);
}

namespace {

using detail::get_bytes;
using detail::get_pod;
using detail::get_str;
using detail::put_bytes;
using detail::put_pod;
using detail::put_str;

constexpr char kRefMagic[4] = {'P', 'R', 'X', 'R'};
constexpr std::uint32_t kRefVersion = 1;

}  // namespace

void save_reference(const std::string& path, const ReferenceSet& ref) {
    ref.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    put_bytes(os, kRefMagic, 4);
    put_pod(os, kRefVersion);
    put_pod(os, static_cast<std::uint8_t>(ref.kind));
    put_pod(os, static_cast<std::uint8_t>(ref.metric));
    put_pod(os, static_cast<std::uint32_t>(ref.d_enc()));
    put_pod(os, static_cast<std::uint32_t>(ref.num_models()));
    put_pod(os, static_cast<std::uint64_t>(ref.size()));
    for (const auto& id : ref.model_ids) put_str(os, id);
    put_bytes(os, ref.anchors.data(),
              sizeof(float) * static_cast<std::size_t>(ref.anchors.size()));
    for (int i = 0; i < ref.size(); ++i)
        for (int m = 0; m < ref.num_models(); ++m) put_pod(os, ref.mean_acc(i, m));
    for (int i = 0; i < ref.size(); ++i)
        for (int m = 0; m < ref.num_models(); ++m) put_pod(os, ref.mean_cost(i, m));
    for (int i = 0; i < ref.size(); ++i) put_pod(os, ref.counts(i));
    for (int i = 0; i < ref.size(); ++i) put_pod(os, ref.spreads(i));
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

ReferenceSet load_reference(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    get_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kRefMagic))
        throw IoError("not a reference artifact: " + path);
    if (get_pod<std::uint32_t>(is) != kRefVersion)
        throw IoError("unsupported reference artifact version: " + path);
    ReferenceSet ref;
    const auto kind = get_pod<std::uint8_t>(is);
    const auto metric = get_pod<std::uint8_t>(is);
    if (kind > 1 || metric > 1) throw IoError("corrupt artifact header: " + path);
    ref.kind = static_cast<ReferenceKind>(kind);
    ref.metric = static_cast<DistanceMetric>(metric);
    const auto d = get_pod<std::uint32_t>(is);
    const auto m = get_pod<std::uint32_t>(is);
    const auto n = get_pod<std::uint64_t>(is);
    if (d == 0 || m == 0 || n == 0 || d > (1u << 24) || m > (1u << 16) || n > (1ull << 32))
        throw IoError("corrupt artifact header: " + path);
    for (std::uint32_t j = 0; j < m; ++j) ref.model_ids.push_back(get_str(is));
    ref.anchors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    get_bytes(is, ref.anchors.data(), sizeof(float) * static_cast<std::size_t>(n) * d);
    ref.mean_acc.resize(static_cast<Eigen::Index>(n), m);
    ref.mean_cost.resize(static_cast<Eigen::Index>(n), m);
    for (Eigen::Index i = 0; i < ref.mean_acc.rows(); ++i)
        for (Eigen::Index c = 0; c < ref.mean_acc.cols(); ++c)
            ref.mean_acc(i, c) = get_pod<double>(is);
    for (Eigen::Index i = 0; i < ref.mean_cost.rows(); ++i)
        for (Eigen::Index c = 0; c < ref.mean_cost.cols(); ++c)
            ref.mean_cost(i, c) = get_pod<double>(is);
    ref.counts.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < ref.counts.size(); ++i)
        ref.counts(i) = get_pod<std::int64_t>(is);
    ref.spreads.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < ref.spreads.size(); ++i)
        ref.spreads(i) = get_pod<double>(is);
    ref.validate();
    return ref;
}

}  // namespace proxroute
