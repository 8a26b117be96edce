#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "helpers.hpp"
#include "proxroute/data.hpp"
#include "proxroute/estimator.hpp"
#include "proxroute/eval.hpp"

using namespace proxroute;
using testutil::make_record;
using testutil::random_corpus;
using testutil::random_encoding;

namespace {

std::map<int, double> as_map(const WeightVector& w) {
    std::map<int, double> out;
    for (const auto& [i, v] : w.entries()) out[i] = v;
    return out;
}

/// Valid simplex weights drawn uniformly (exponential spacings).
std::vector<double> random_simplex(int n, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (double& v : w) {
        v = -std::log(rng.uniform01_open_low());
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

}  // namespace

TEST_CASE("min variance prior closed forms") {
    const auto eq = min_variance_prior({1.0, 1.0, 1.0});
    for (const auto& [i, v] : eq.entries()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    const auto two = min_variance_prior({1.0, 2.0});
    CHECK(as_map(two)[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(as_map(two)[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    CHECK_THROWS_AS(min_variance_prior({1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(min_variance_prior({-1.0}), ValidationError);
    CHECK_THROWS_AS(min_variance_prior({}), ValidationError);
}

TEST_CASE("min variance prior beats a large random simplex search") {
    Rng rng(71);
    std::vector<double> variances(6);
    for (double& v : variances) v = 0.1 + rng.uniform01() * 5.0;
    const auto w = min_variance_prior(variances);
    double closed = 0.0;
    for (const auto& [i, v] : w.entries())
        closed += v * v * variances[static_cast<std::size_t>(i)];
    for (int trial = 0; trial < 1000000; ++trial) {
        const auto cand = random_simplex(6, rng);
        double obj = 0.0;
        for (int i = 0; i < 6; ++i)
            obj += cand[static_cast<std::size_t>(i)] * cand[static_cast<std::size_t>(i)] *
                   variances[static_cast<std::size_t>(i)];
        CHECK(closed <= obj + 1e-12);
    }
}

TEST_CASE("cluster prior favors populous tight clusters") {
    ReferenceSet ref;
    ref.kind = ReferenceKind::Clusters;
    ref.model_ids = {"m"};
    ref.anchors.resize(2, 1);
    ref.anchors << 1.0f, 2.0f;
    ref.mean_acc.resize(2, 1);
    ref.mean_acc << 0.5, 0.5;
    ref.mean_cost.resize(2, 1);
    ref.mean_cost << 1e-5, 1e-5;
    ref.counts.resize(2);
    ref.counts << 10, 5;
    ref.spreads.resize(2);
    ref.spreads << 0.1, 0.1;
    const auto prior = cluster_prior(ref, 1e-6);
    CHECK(as_map(prior)[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(as_map(prior)[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    SUBCASE("identical stats give a uniform prior") {
        ref.counts << 7, 7;
        const auto uniform = cluster_prior(ref, 1e-6);
        CHECK(as_map(uniform)[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(as_map(uniform)[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("zero spread hits the floor and stays finite") {
        ref.spreads << 0.0, 0.1;
        const auto floored = cluster_prior(ref, 1e-6);
        double sum = 0.0;
        for (const auto& [i, v] : floored.entries()) {
            CHECK(std::isfinite(v));
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("knn prior is exactly uniform") {
    const auto p4 = knn_prior({{3, 0.1}, {9, 0.2}, {1, 0.3}, {7, 0.4}});
    CHECK(p4.support_size() == 4);
    for (const auto& [i, v] : p4.entries()) CHECK(v == 0.25);
    CHECK(effective_sample_size(p4) == doctest::Approx(4.0).epsilon(1e-12));

    const auto p1 = knn_prior({{5, 0.0}});
    CHECK(p1.entries()[0].second == 1.0);
    CHECK(effective_sample_size(p1) == 1.0);

    CHECK_THROWS_AS(knn_prior({{2, 0.1}, {2, 0.2}}), ValidationError);
    CHECK_THROWS_AS(knn_prior({}), ValidationError);
}

TEST_CASE("tilting closed form on a two-point prior") {
    const auto prior = WeightVector::from_entries({{0, 0.5}, {1, 0.5}});
    const auto tilted = tilt_weights(prior, {0.0, std::log(2.0)}, TiltingConfig{1.0});
    CHECK(as_map(tilted)[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(as_map(tilted)[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("inv_tau = 0 returns the prior unchanged") {
    Rng rng(81);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(12));
        std::vector<WeightVector::Entry> entries;
        std::vector<double> penalties;
        for (int i = 0; i < n; ++i) {
            entries.push_back({i, rng.uniform01_open_low()});
            penalties.push_back(rng.uniform01() * 2.0);
        }
        const auto prior = WeightVector::normalized(entries);
        const auto out = tilt_weights(prior, penalties, TiltingConfig{0.0});
        REQUIRE(out.support_size() == prior.support_size());
        for (std::size_t j = 0; j < out.entries().size(); ++j) {
            CHECK(out.entries()[j].first == prior.entries()[j].first);
            CHECK(out.entries()[j].second == prior.entries()[j].second);  // bitwise
        }
    }
}

TEST_CASE("huge inv_tau concentrates on the nearest element") {
    const auto prior =
        WeightVector::from_entries({{0, 0.2}, {1, 0.3}, {2, 0.5}});
    const auto out = tilt_weights(prior, {0.9, 0.2, 1.7}, TiltingConfig{1e6});
    CHECK(as_map(out)[1] > 1.0 - 1e-9);
}

TEST_CASE("tilting stays on the simplex and never grows support") {
    Rng rng(82);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(30));
        std::vector<WeightVector::Entry> entries;
        std::vector<double> penalties;
        for (int i = 0; i < n; ++i) {
            entries.push_back({i * 2, rng.uniform01_open_low()});
            penalties.push_back(rng.uniform01() * 2.0);
        }
        const auto prior = WeightVector::normalized(entries);
        const double inv_tau = rng.uniform01() * 100.0;
        const auto out = tilt_weights(prior, penalties, TiltingConfig{inv_tau});
        double sum = 0.0;
        for (const auto& [i, v] : out.entries()) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(out.support_size() <= prior.support_size());
    }
}

TEST_CASE("tilting is monotone in proximity under a uniform prior") {
    Rng rng(83);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(20));
        std::vector<std::pair<int, double>> neighbors;
        std::vector<double> penalties;
        for (int i = 0; i < n; ++i) {
            neighbors.push_back({i, 0.0});
            penalties.push_back(rng.uniform01() * 2.0);
        }
        const auto prior = knn_prior(neighbors);
        const auto out = tilt_weights(prior, penalties, TiltingConfig{5.0});
        const auto w = as_map(out);
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                const double pa = penalties[static_cast<std::size_t>(a)];
                const double pb = penalties[static_cast<std::size_t>(b)];
                if (pa < pb && w.count(a) && w.count(b)) CHECK(w.at(a) > w.at(b));
            }
    }
}

TEST_CASE("tilting solves its KL-regularized objective") {
    // closed form vs 10^4 random simplex candidates on one instance; the
    // acceptance gate repeats this at scale with refinement
    Rng rng(84);
    const int n = 8;
    std::vector<WeightVector::Entry> entries;
    std::vector<double> penalties;
    for (int i = 0; i < n; ++i) {
        entries.push_back({i, rng.uniform01_open_low()});
        penalties.push_back(rng.uniform01() * 2.0);
    }
    const auto prior = WeightVector::normalized(entries);
    const double inv_tau = 4.0;
    const double tau = 1.0 / inv_tau;
    const auto p = as_map(prior);
    const auto solution = as_map(tilt_weights(prior, penalties, TiltingConfig{inv_tau}));

    const auto objective = [&](const std::map<int, double>& w) {
        double val = 0.0;
        for (const auto& [i, wi] : w) {
            if (wi <= 0.0) continue;
            val += wi * penalties[static_cast<std::size_t>(i)] +
                   tau * wi * std::log(wi / p.at(i));
        }
        return val;
    };
    const double closed = objective(solution);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto cand = random_simplex(n, rng);
        std::map<int, double> w;
        for (int i = 0; i < n; ++i) w[i] = cand[static_cast<std::size_t>(i)];
        CHECK(closed <= objective(w) + 1e-8);
    }
}

TEST_CASE("penalty config squares distances before tilting") {
    const auto prior = WeightVector::from_entries({{0, 0.5}, {1, 0.5}});
    const std::vector<double> penalties = {0.5, 1.5};
    const auto linear =
        tilt_weights(prior, penalties, TiltingConfig{2.0, PenaltyKind::Distance});
    const auto squared =
        tilt_weights(prior, penalties, TiltingConfig{2.0, PenaltyKind::SquaredDistance});
    // squared penalties widen the gap 1.0 -> 2.0, so contrast sharpens
    CHECK(as_map(squared)[0] > as_map(linear)[0]);
    const auto direct = tilt_weights(prior, {0.25, 2.25}, TiltingConfig{2.0});
    CHECK(as_map(squared)[0] == doctest::Approx(as_map(direct)[0]).epsilon(1e-12));
}

TEST_CASE("tilting validates its inputs") {
    const auto prior = WeightVector::from_entries({{0, 0.5}, {1, 0.5}});
    CHECK_THROWS_AS(tilt_weights(prior, {0.1}, TiltingConfig{1.0}), ValidationError);
    CHECK_THROWS_AS(
        tilt_weights(prior, {0.1, std::numeric_limits<double>::infinity()}, TiltingConfig{1.0}),
        ValidationError);
    CHECK_THROWS_AS(tilt_weights(prior, {0.1, 0.2}, TiltingConfig{-1.0}), ConfigError);
}

TEST_CASE("estimated objectives blend element values") {
    const auto corpus = random_corpus(20, 4, 3, 91);
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Cosine);

    SUBCASE("point mass returns the element value exactly") {
        const auto w = WeightVector::from_entries({{6, 1.0}});
        const ObjectiveParams params{2.0};
        const Eigen::VectorXd u = estimate_objectives(w, ref, params);
        for (int m = 0; m < 3; ++m)
            CHECK(u(m) == ref.mean_acc(6, m) - params.lambda * ref.mean_cost(6, m));
    }
    SUBCASE("equal weights average two elements") {
        ReferenceSet tiny;
        tiny.kind = ReferenceKind::Clusters;
        tiny.model_ids = {"m"};
        tiny.anchors.resize(2, 1);
        tiny.anchors << 1.0f, 2.0f;
        tiny.mean_acc.resize(2, 1);
        tiny.mean_acc << 0.2, 0.6;
        tiny.mean_cost.resize(2, 1);
        tiny.mean_cost << 0.0, 0.0;
        tiny.counts.resize(2);
        tiny.counts << 1, 1;
        tiny.spreads.resize(2);
        tiny.spreads << 0.0, 0.0;
        const auto w = WeightVector::from_entries({{0, 0.5}, {1, 0.5}});
        CHECK(estimate_objectives(w, tiny, ObjectiveParams{0.0})(0) ==
              doctest::Approx(0.4).epsilon(1e-15));
    }
    SUBCASE("matches a scalar loop to 1e-12 and stays in the hull") {
        Rng rng(92);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<WeightVector::Entry> entries;
            const int support = 1 + static_cast<int>(rng.below(20));
            for (int i = 0; i < support; ++i)
                entries.push_back({i, rng.uniform01_open_low()});
            const auto w = WeightVector::normalized(entries);
            const ObjectiveParams params{rng.uniform01() * 10.0};
            const Eigen::VectorXd u = estimate_objectives(w, ref, params);
            for (int m = 0; m < 3; ++m) {
                double scalar = 0.0, lo = 1e300, hi = -1e300;
                for (const auto& [i, wi] : w.entries()) {
                    const double v = ref.mean_acc(i, m) - params.lambda * ref.mean_cost(i, m);
                    scalar += wi * v;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                CHECK(u(m) == doctest::Approx(scalar).epsilon(1e-12));
                CHECK(u(m) >= lo - 1e-12);
                CHECK(u(m) <= hi + 1e-12);
            }
        }
    }
    SUBCASE("out-of-range support is rejected") {
        const auto w = WeightVector::from_entries({{19, 0.5}, {20, 0.5}});
        CHECK_THROWS_AS(estimate_objectives(w, ref, ObjectiveParams{0.0}), ValidationError);
    }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    Eigen::VectorXd v(4);
    v << 0.3, 0.9, 0.9, 0.1;
    CHECK(argmax_lowest(v) == 1);
    v << 0.5, 0.5, 0.5, 0.5;
    CHECK(argmax_lowest(v) == 0);
}

TEST_CASE("router picks the better model on a one-element reference") {
    Corpus corpus;
    corpus.pool = ModelPool({ModelInfo{"B", 1e-8, 1e-8}, ModelInfo{"A", 2e-8, 2e-8}});
    corpus.d_enc = 2;
    // pool order: B (cheaper) first; A has the higher accuracy
    corpus.records.push_back(make_record("q0", "t", {1.0f, 1.0f}, {0.5, 0.9}, {0.0, 0.0}));
    const ReferenceSet ref = build_point_reference(corpus, DistanceMetric::Cosine);
    RouterConfig cfg;
    cfg.kind = ReferenceKind::TrainingPoints;
    cfg.neighbors = 1;
    Encoding x(2);
    x << 1.0f, 1.0f;
    const EstimateReport report = route(x, ref, cfg, ObjectiveParams{0.0});
    CHECK(report.chosen() == "A");
    CHECK(report.chosen_index == 1);
    CHECK(report.per_model(1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(report.ess == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("prox with inv_tau 0 equals base knn on every query") {
    const auto corpus = random_corpus(80, 6, 3, 93);
    const auto ref =
        std::make_shared<const ReferenceSet>(build_point_reference(corpus, DistanceMetric::Cosine));
    RouterConfig prox_cfg;
    prox_cfg.mode = RouterMode::Prox;
    prox_cfg.kind = ReferenceKind::TrainingPoints;
    prox_cfg.neighbors = 10;
    prox_cfg.inv_tau = 0.0;
    RouterConfig base_cfg = prox_cfg;
    base_cfg.mode = RouterMode::Base;
    const Router prox(ref, prox_cfg);
    const Router base(ref, base_cfg);
    Rng rng(94);
    for (int trial = 0; trial < 60; ++trial) {
        const Encoding x = random_encoding(6, rng);
        const ObjectiveParams params{rng.uniform01() * 5.0};
        const EstimateReport a = prox.route(x, params);
        const EstimateReport b = base.route(x, params);
        CHECK(a.chosen_index == b.chosen_index);
        CHECK((a.per_model.array() == b.per_model.array()).all());
        CHECK(a.ess == b.ess);
        REQUIRE(a.weights.support_size() == b.weights.support_size());
        for (std::size_t j = 0; j < a.weights.entries().size(); ++j) {
            CHECK(a.weights.entries()[j].first == b.weights.entries()[j].first);
            CHECK(a.weights.entries()[j].second == b.weights.entries()[j].second);
        }
    }
}

TEST_CASE("prox clusters with huge inv_tau equals base nearest-centroid") {
    const auto corpus = random_corpus(120, 5, 3, 95);
    const ClusteringResult clustering = kmeans_fit(corpus.records, 6, 42);
    const auto ref = std::make_shared<const ReferenceSet>(
        build_cluster_reference(corpus, clustering, DistanceMetric::Cosine));
    RouterConfig prox_cfg;
    prox_cfg.mode = RouterMode::Prox;
    prox_cfg.kind = ReferenceKind::Clusters;
    prox_cfg.clusters = 6;
    prox_cfg.inv_tau = 1e9;
    RouterConfig base_cfg = prox_cfg;
    base_cfg.mode = RouterMode::Base;
    const Router prox(ref, prox_cfg);
    const Router base(ref, base_cfg);
    Rng rng(96);
    for (int trial = 0; trial < 60; ++trial) {
        const Encoding x = random_encoding(5, rng);
        const ObjectiveParams params{rng.uniform01()};
        CHECK(prox.route(x, params).chosen_index == base.route(x, params).chosen_index);
    }
}

TEST_CASE("argmax decision is stable under positive scaling of estimates") {
    Rng rng(97);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd v(5);
        for (int m = 0; m < 5; ++m) v(m) = rng.uniform01();
        const double alpha = rng.uniform01_open_low() * 10.0;
        CHECK(argmax_lowest(v) == argmax_lowest((alpha * v).eval()));
    }
}

TEST_CASE("router rejects mismatched configuration") {
    const auto corpus = random_corpus(20, 4, 2, 98);
    const auto points = std::make_shared<const ReferenceSet>(
        build_point_reference(corpus, DistanceMetric::Cosine));
    RouterConfig cfg;
    cfg.kind = ReferenceKind::Clusters;  // artifact is TrainingPoints
    CHECK_THROWS_AS(Router(points, cfg), ConfigError);

    RouterConfig metric_cfg;
    metric_cfg.kind = ReferenceKind::TrainingPoints;
    metric_cfg.metric = DistanceMetric::Euclidean;  // artifact says cosine
    CHECK_THROWS_AS(Router(points, metric_cfg), ConfigError);

    RouterConfig too_many;
    too_many.kind = ReferenceKind::TrainingPoints;
    too_many.neighbors = 21;  // only 20 points
    CHECK_THROWS_AS(Router(points, too_many), ConfigError);
}

TEST_CASE("router matches the generator oracle on inlier test queries") {
    SyntheticConfig gen = SyntheticConfig::benchmark_default();
    gen.seed = 42;
    auto [corpus, truth] = synth_generate(gen);
    SplitSpec spec;
    spec.scenario = Scenario::LeaveTaskOut;
    spec.outlier_tasks = {"task-6", "task-7"};
    spec.seed = 42;
    const SplitResult split = make_split(corpus, spec);
    const ClusteringResult clustering = kmeans_fit(split.train.records, 32, 42);
    const auto ref = std::make_shared<const ReferenceSet>(
        build_cluster_reference(split.train, clustering, DistanceMetric::Cosine));
    RouterConfig cfg;  // defaults: Prox, Clusters, inv_tau 20
    const Router router(ref, cfg);
    const ObjectiveParams params{0.0};

    int hits = 0, total = 0;
    for (const auto& rec : split.test.records) {
        if (rec.task == "task-6" || rec.task == "task-7") continue;
        const int t = *truth.task_index(rec.task);
        Eigen::VectorXd oracle(static_cast<Eigen::Index>(truth.model_ids.size()));
        for (int m = 0; m < oracle.size(); ++m)
            oracle(m) = truth.true_mean_objective(t, m, params.lambda);
        const int best = argmax_lowest(oracle);
        hits += router.route(rec.encoding, params).chosen_index == best;
        ++total;
    }
    CHECK(total > 0);
    CHECK(static_cast<double>(hits) / total >= 0.95);
}
