#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "proxroute/reference.hpp"

using namespace proxroute;
using testutil::make_record;
using testutil::random_corpus;

namespace {

std::vector<QueryRecord> point_records(const std::vector<std::pair<float, float>>& pts) {
    std::vector<QueryRecord> records;
    int i = 0;
    for (const auto& [x, y] : pts)
        records.push_back(
            make_record("q" + std::to_string(i++), "t", {x, y}, {0.5}, {1e-5}));
    return records;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("kmeans separates two obvious groups") {
    const auto records = point_records({{0, 0}, {0, 1}, {10, 10}, {10, 11}});
    const ClusteringResult result = kmeans_fit(records, 2, 42);
    REQUIRE(result.centroids.rows() == 2);
    CHECK(result.converged);
    // order-independent check: one centroid at (0, 0.5), the other (10, 10.5)
    std::vector<std::pair<float, float>> got;
    for (int i = 0; i < 2; ++i) got.push_back({result.centroids(i, 0), result.centroids(i, 1)});
    std::sort(got.begin(), got.end());
    CHECK(got[0].first == doctest::Approx(0.0));
    CHECK(got[0].second == doctest::Approx(0.5));
    CHECK(got[1].first == doctest::Approx(10.0));
    CHECK(got[1].second == doctest::Approx(10.5));
    // both members of each pair share an assignment
    CHECK(result.assignments[0] == result.assignments[1]);
    CHECK(result.assignments[2] == result.assignments[3]);
    CHECK(result.assignments[0] != result.assignments[2]);
}

TEST_CASE("kmeans K=1 returns the global mean") {
    const auto corpus = random_corpus(40, 5, 2, 7);
    const ClusteringResult result = kmeans_fit(corpus.records, 1, 42);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(5);
    for (const auto& rec : corpus.records) mean += rec.encoding.cast<double>();
    mean /= corpus.size();
    for (int k = 0; k < 5; ++k)
        CHECK(result.centroids(0, k) ==
              doctest::Approx(static_cast<float>(mean(k))).epsilon(1e-6));
}

TEST_CASE("kmeans K=n gives every point its own centroid") {
    const auto corpus = random_corpus(12, 4, 2, 8);
    const ClusteringResult result = kmeans_fit(corpus.records, 12, 42);
    std::vector<int> seen = result.assignments;
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 12; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
    const ReferenceSet ref =
        build_cluster_reference(corpus, result, DistanceMetric::Euclidean);
    for (int i = 0; i < ref.size(); ++i) {
        CHECK(ref.counts(i) == 1);
        CHECK(ref.spreads(i) == doctest::Approx(0.0).epsilon(1e-6));
    }
}

TEST_CASE("kmeans SSE never increases across iterations") {
    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto corpus = random_corpus(300, 8, 2, seed);
        const ClusteringResult result = kmeans_fit(corpus.records, 10, seed);
        REQUIRE(!result.sse_history.empty());
        for (std::size_t i = 1; i < result.sse_history.size(); ++i)
            CHECK(result.sse_history[i] <=
                  result.sse_history[i - 1] * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("kmeans is deterministic and validates inputs") {
    const auto corpus = random_corpus(50, 6, 2, 3);
    const ClusteringResult a = kmeans_fit(corpus.records, 5, 99);
    const ClusteringResult b = kmeans_fit(corpus.records, 5, 99);
    CHECK(a.assignments == b.assignments);
    CHECK((a.centroids.array() == b.centroids.array()).all());

    CHECK_THROWS_AS(kmeans_fit(corpus.records, 51, 1), ConfigError);
    CHECK_THROWS_AS(kmeans_fit(corpus.records, 0, 1), ConfigError);
    CHECK_THROWS_AS(kmeans_fit({}, 1, 1), ValidationError);  // empty corpus is a data defect
}

TEST_CASE("weighted centroid identity recovers the global mean") {
    const auto corpus = random_corpus(200, 6, 2, 17);
    const ClusteringResult clustering = kmeans_fit(corpus.records, 8, 42);
    const ReferenceSet ref =
        build_cluster_reference(corpus, clustering, DistanceMetric::Euclidean);
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(6);
    double total = 0.0;
    for (int i = 0; i < ref.size(); ++i) {
        weighted += ref.counts(i) * ref.anchors.row(i).cast<double>().transpose();
        total += static_cast<double>(ref.counts(i));
    }
    weighted /= total;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
    for (const auto& rec : corpus.records) mean += rec.encoding.cast<double>();
    mean /= corpus.size();
    CHECK((weighted - mean).norm() < 1e-6);
}

TEST_CASE("cluster reference summarizes members") {
    Corpus corpus;
    corpus.pool = ModelPool({ModelInfo{"m", 1e-8, 1e-8}});
    corpus.d_enc = 1;
    corpus.records.push_back(make_record("a", "t", {0.0f}, {0.4}, {1e-5}));
    corpus.records.push_back(make_record("b", "t", {1.0f}, {0.8}, {3e-5}));
    ClusteringResult clustering;
    clustering.centroids.resize(1, 1);
    clustering.centroids(0, 0) = 0.5f;
    clustering.assignments = {0, 0};
    const ReferenceSet ref =
        build_cluster_reference(corpus, clustering, DistanceMetric::Euclidean);
    CHECK(ref.size() == 1);
    CHECK(ref.counts(0) == 2);
    CHECK(ref.mean_acc(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(ref.mean_cost(0, 0) == doctest::Approx(2e-5).epsilon(1e-12));
    // members sit at euclidean distance 0.5 on each side of the centroid
    CHECK(ref.spreads(0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("cluster spread is the mean member distance") {
    // centroid at the origin is invalid under cosine, so use distances 0.1
    // and 0.3 along one axis with a euclidean metric: spread = 0.2
    Corpus corpus;
    corpus.pool = ModelPool({ModelInfo{"m", 1e-8, 1e-8}});
    corpus.d_enc = 2;
    corpus.records.push_back(make_record("a", "t", {1.1f, 1.0f}, {0.5}, {1e-5}));
    corpus.records.push_back(make_record("b", "t", {0.7f, 1.0f}, {0.5}, {1e-5}));
    ClusteringResult clustering;
    clustering.centroids.resize(1, 2);
    clustering.centroids(0, 0) = 1.0f;
    clustering.centroids(0, 1) = 1.0f;
    clustering.assignments = {0, 0};
    const ReferenceSet ref =
        build_cluster_reference(corpus, clustering, DistanceMetric::Euclidean);
    CHECK(ref.spreads(0) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("singleton cluster copies its record and has zero spread") {
    Corpus corpus;
    corpus.pool = testutil::two_model_pool();
    corpus.d_enc = 2;
    corpus.records.push_back(make_record("a", "t", {1.0f, 2.0f}, {0.3, 0.9}, {1e-5, 2e-5}));
    ClusteringResult clustering;
    clustering.centroids.resize(1, 2);
    clustering.centroids(0, 0) = 1.0f;
    clustering.centroids(0, 1) = 2.0f;
    clustering.assignments = {0};
    const ReferenceSet ref = build_cluster_reference(corpus, clustering, DistanceMetric::Cosine);
    CHECK(ref.counts(0) == 1);
    CHECK(ref.mean_acc(0, 0) == 0.3);
    CHECK(ref.mean_acc(0, 1) == 0.9);
    CHECK(ref.spreads(0) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("point reference mirrors the records") {
    const auto corpus = random_corpus(3, 4, 2, 5);
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Cosine);
    CHECK(ref.size() == 3);
    CHECK(ref.kind == ReferenceKind::TrainingPoints);
    for (int i = 0; i < 3; ++i) {
        CHECK(ref.counts(i) == 1);
        CHECK(ref.spreads(i) == 0.0);
        const auto& rec = corpus.records[static_cast<std::size_t>(i)];
        for (int m = 0; m < 2; ++m) {
            CHECK(ref.mean_acc(i, m) == rec.acc(m));
            CHECK(ref.mean_cost(i, m) == rec.cost(m));
        }
        // element value at lambda is the record's own objective
        const double lambda = 3.0;
        CHECK(ref.mean_acc(i, 0) - lambda * ref.mean_cost(i, 0) ==
              doctest::Approx(rec.acc(0) - lambda * rec.cost(0)).epsilon(1e-15));
    }
    // determinism: rebuilding gives an identical set
    const ReferenceSet again = build_point_reference(corpus, DistanceMetric::Cosine);
    CHECK((ref.anchors.array() == again.anchors.array()).all());
    CHECK((ref.mean_acc.array() == again.mean_acc.array()).all());
}

TEST_CASE("element value equals the mean member objective (affinity)") {
    const auto corpus = random_corpus(60, 4, 3, 29);
    const ClusteringResult clustering = kmeans_fit(corpus.records, 4, 42);
    const ReferenceSet ref =
        build_cluster_reference(corpus, clustering, DistanceMetric::Cosine);
    const ObjectiveParams params{7.5};
    for (int i = 0; i < ref.size(); ++i) {
        Eigen::VectorXd mean_obj = Eigen::VectorXd::Zero(3);
        int n = 0;
        for (int r = 0; r < corpus.size(); ++r) {
            if (clustering.assignments[static_cast<std::size_t>(r)] != i) continue;
            const auto& rec = corpus.records[static_cast<std::size_t>(r)];
            for (int m = 0; m < 3; ++m)
                mean_obj(m) += objective_value(rec.acc(m), rec.cost(m), params);
            ++n;
        }
        mean_obj /= n;
        for (int m = 0; m < 3; ++m)
            CHECK(ref.mean_acc(i, m) - params.lambda * ref.mean_cost(i, m) ==
                  doctest::Approx(mean_obj(m)).epsilon(1e-9));
    }
}

TEST_CASE("neighbor query finds a stored encoding at distance zero") {
    const auto corpus = random_corpus(30, 6, 2, 31);
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Cosine);
    const NeighborIndex index(borrow(ref));
    const auto hits = index.query(corpus.records[17].encoding, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].first == 17);
    CHECK(hits[0].second == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("neighbor query matches a brute-force full sort") {
    Rng rng(53);
    for (const DistanceMetric metric : {DistanceMetric::Cosine, DistanceMetric::Euclidean}) {
        const auto corpus = random_corpus(200, 8, 2, 37);
        const ReferenceSet ref = build_point_reference(corpus, metric);
        const NeighborIndex index(borrow(ref));
        for (int trial = 0; trial < 25; ++trial) {
            const Encoding x = testutil::random_encoding(8, rng);
            // oracle: full sort of (distance, index) via the free functions
            std::vector<std::pair<double, int>> all;
            for (int i = 0; i < ref.size(); ++i) {
                const double d =
                    metric == DistanceMetric::Cosine
                        ? cosine_distance(x, ref.anchors.row(i))
                        : euclidean_distance(x, ref.anchors.row(i).transpose());
                all.push_back({d, i});
            }
            std::sort(all.begin(), all.end());
            const int k = 1 + static_cast<int>(rng.below(10));
            const auto hits = index.query(x, k);
            REQUIRE(static_cast<int>(hits.size()) == k);
            for (int j = 0; j < k; ++j) {
                CHECK(hits[static_cast<std::size_t>(j)].first ==
                      all[static_cast<std::size_t>(j)].second);
                CHECK(hits[static_cast<std::size_t>(j)].second ==
                      all[static_cast<std::size_t>(j)].first);  // bitwise
            }
        }
    }
}

TEST_CASE("neighbor query with k = size returns everything sorted") {
    const auto corpus = random_corpus(25, 5, 2, 41);
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Euclidean);
    const NeighborIndex index(borrow(ref));
    Rng rng(2);
    const auto hits = query_neighbors(index, testutil::random_encoding(5, rng), 25);
    REQUIRE(hits.size() == 25);
    for (std::size_t j = 1; j < hits.size(); ++j) CHECK(hits[j].second >= hits[j - 1].second);
    CHECK_THROWS_AS(index.query(testutil::random_encoding(5, rng), 26), ConfigError);
    CHECK_THROWS_AS(index.query(testutil::random_encoding(5, rng), 0), ConfigError);
}

TEST_CASE("neighbor ties break toward the lower element index") {
    Corpus corpus;
    corpus.pool = ModelPool({ModelInfo{"m", 1e-8, 1e-8}});
    corpus.d_enc = 2;
    // two identical anchors: any query is equidistant from both
    corpus.records.push_back(make_record("a", "t", {1.0f, 1.0f}, {0.5}, {1e-5}));
    corpus.records.push_back(make_record("b", "t", {1.0f, 1.0f}, {0.5}, {1e-5}));
    corpus.records.push_back(make_record("c", "t", {5.0f, 1.0f}, {0.5}, {1e-5}));
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Euclidean);
    const NeighborIndex index(borrow(ref));
    Encoding x(2);
    x << 1.0f, 2.0f;
    const auto hits = index.query(x, 2);
    CHECK(hits[0].first == 0);
    CHECK(hits[1].first == 1);
}

TEST_CASE("reference artifact round-trips bit-exactly") {
    const auto corpus = random_corpus(50, 6, 3, 61);
    const ClusteringResult clustering = kmeans_fit(corpus.records, 7, 42);
    const ReferenceSet ref = build_cluster_reference(corpus, clustering, DistanceMetric::Cosine);
    const std::string path = temp_path("proxroute_ref_roundtrip.bin");
    save_reference(path, ref);
    const ReferenceSet loaded = load_reference(path);
    CHECK(loaded.kind == ref.kind);
    CHECK(loaded.metric == ref.metric);
    CHECK(loaded.model_ids == ref.model_ids);
    CHECK((loaded.anchors.array() == ref.anchors.array()).all());
    CHECK((loaded.mean_acc.array() == ref.mean_acc.array()).all());
    CHECK((loaded.mean_cost.array() == ref.mean_cost.array()).all());
    CHECK((loaded.counts.array() == ref.counts.array()).all());
    CHECK((loaded.spreads.array() == ref.spreads.array()).all());
    std::remove(path.c_str());
}

TEST_CASE("reference loader rejects garbage") {
    const std::string path = temp_path("proxroute_ref_garbage.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "not a reference artifact";
    }
    CHECK_THROWS_AS(load_reference(path), IoError);
    CHECK_THROWS_AS(load_reference(temp_path("proxroute_no_such_file.bin")), IoError);
    std::remove(path.c_str());
}

TEST_CASE("empty-cluster repair keeps K clusters alive") {
    // 10 coincident points plus two outliers, K=4: naive Lloyd's would
    // starve clusters; repair must keep all four populated.
    std::vector<std::pair<float, float>> pts(10, {1.0f, 1.0f});
    pts.push_back({9.0f, 9.0f});
    pts.push_back({-7.0f, 3.0f});
    const auto records = point_records(pts);
    const ClusteringResult result = kmeans_fit(records, 4, 42);
    std::vector<int> counts(4, 0);
    for (const int a : result.assignments) {
        REQUIRE(a >= 0);
        REQUIRE(a < 4);
        ++counts[static_cast<std::size_t>(a)];
    }
    for (const int c : counts) CHECK(c > 0);
}
