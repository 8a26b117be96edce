#include "proxroute/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <thread>

#include "proxroute/rng.hpp"

namespace proxroute {

namespace {

constexpr std::size_t kChunk = 256;

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    for (const double l : grid)
        if (!std::isfinite(l) || l < 0.0)
            throw ConfigError("lambda grid entries must be finite and >= 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw ConfigError("lambda grid must be strictly ascending");
}

void check_records(const std::vector<QueryRecord>& records) {
    if (records.empty())
        throw ValidationError(ValidationError::Kind::EmptyCorpus, "no records to evaluate");
}

/// Run `body(chunk_index, begin, end)` over fixed-size record chunks. The
/// caller combines per-chunk results in chunk order, which keeps every
/// reduction bit-identical for any thread count.
void for_chunks(std::size_t n, int threads,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    if (threads <= 1 || chunks <= 1) {
        for (std::size_t c = 0; c < chunks; ++c)
            body(c, c * kChunk, std::min(n, (c + 1) * kChunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                body(c, c * kChunk, std::min(n, (c + 1) * kChunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), chunks);
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct PartialSums {
    double acc = 0.0;
    double cost = 0.0;
};

SweepResult finish_sweep(const std::string& label, const std::vector<double>& grid,
                         const std::vector<std::vector<PartialSums>>& partials, std::size_t n) {
    SweepResult result;
    result.label = label;
    result.points.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        double acc = 0.0, cost = 0.0;
        for (const auto& chunk : partials) {
            acc += chunk[j].acc;
            cost += chunk[j].cost;
        }
        result.points[j] = CurvePoint{grid[j], acc / static_cast<double>(n),
                                      cost / static_cast<double>(n)};
    }
    result.auc = normalized_auc(result.points);
    return result;
}

int checked_decision(int m, const QueryRecord& rec) {
    if (m < 0 || m >= rec.acc.size())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "router chose model index " + std::to_string(m) +
                                  " outside the pool");
    return m;
}

}  // namespace

std::vector<double> default_lambda_grid(int count, double lo, double hi) {
    if (count < 2) throw ConfigError("lambda grid needs at least 2 log-spaced values");
    if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("lambda grid needs 0 < lo < hi");
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(count) + 1);
    grid.push_back(0.0);
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int j = 0; j < count; ++j)
        grid.push_back(std::pow(10.0, llo + (lhi - llo) * static_cast<double>(j) /
                                               static_cast<double>(count - 1)));
    return grid;
}

std::vector<int> route_all(const RouterFn& fn, const std::vector<QueryRecord>& records,
                           const ObjectiveParams& params) {
    check_records(records);
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(checked_decision(fn(rec, params), rec));
    return out;
}

std::vector<int> route_all(const Router& router, const std::vector<QueryRecord>& records,
                           const ObjectiveParams& params) {
    check_records(records);
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& rec : records)
        out.push_back(Router::decide(router.blend(rec.encoding), params));
    return out;
}

CurvePoint evaluate_at_lambda(const RouterFn& fn, const std::vector<QueryRecord>& records,
                              const ObjectiveParams& params, int threads) {
    return sweep("", fn, records, {params.lambda}, threads).points.front();
}

SweepResult sweep(const std::string& label, const RouterFn& fn,
                  const std::vector<QueryRecord>& records, const std::vector<double>& grid,
                  int threads) {
    check_records(records);
    check_grid(grid);
    const std::size_t n = records.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<std::vector<PartialSums>> partials(chunks,
                                                   std::vector<PartialSums>(grid.size()));
    for_chunks(n, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const QueryRecord& rec = records[i];
            for (std::size_t j = 0; j < grid.size(); ++j) {
                const int m = checked_decision(fn(rec, ObjectiveParams{grid[j]}), rec);
                partials[c][j].acc += rec.acc(m);
                partials[c][j].cost += rec.cost(m);
            }
        }
    });
    return finish_sweep(label, grid, partials, n);
}

SweepResult sweep(const std::string& label, const Router& router,
                  const std::vector<QueryRecord>& records, const std::vector<double>& grid,
                  int threads) {
    check_records(records);
    check_grid(grid);
    const std::size_t n = records.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<std::vector<PartialSums>> partials(chunks,
                                                   std::vector<PartialSums>(grid.size()));
    for_chunks(n, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const QueryRecord& rec = records[i];
            const Router::Blend blend = router.blend(rec.encoding);
            for (std::size_t j = 0; j < grid.size(); ++j) {
                const int m = checked_decision(
                    Router::decide(blend, ObjectiveParams{grid[j]}), rec);
                partials[c][j].acc += rec.acc(m);
                partials[c][j].cost += rec.cost(m);
            }
        }
    });
    return finish_sweep(label, grid, partials, n);
}

double normalized_auc(const std::vector<CurvePoint>& points) {
    if (points.empty()) throw ConfigError("normalized_auc needs at least one point");
    std::vector<CurvePoint> sorted = points;
    std::sort(sorted.begin(), sorted.end(), [](const CurvePoint& a, const CurvePoint& b) {
        return a.mean_cost < b.mean_cost ||
               (a.mean_cost == b.mean_cost && a.mean_accuracy < b.mean_accuracy);
    });
    // Collapse points sharing a cost to the best accuracy at that cost.
    std::vector<CurvePoint> distinct;
    for (const auto& p : sorted) {
        if (!distinct.empty() && distinct.back().mean_cost == p.mean_cost)
            distinct.back().mean_accuracy =
                std::max(distinct.back().mean_accuracy, p.mean_accuracy);
        else
            distinct.push_back(p);
    }
    if (distinct.size() == 1) return distinct.front().mean_accuracy;
    const double range = distinct.back().mean_cost - distinct.front().mean_cost;
    double area = 0.0;
    for (std::size_t i = 1; i < distinct.size(); ++i)
        area += 0.5 * (distinct[i].mean_accuracy + distinct[i - 1].mean_accuracy) *
                (distinct[i].mean_cost - distinct[i - 1].mean_cost);
    return area / range;
}

namespace {

/// Model indices ordered by observed objective, best first; ties favor the
/// lower pool index.
std::vector<int> observed_ranking(const QueryRecord& rec, const ObjectiveParams& params) {
    std::vector<double> obj(static_cast<std::size_t>(rec.acc.size()));
    for (Eigen::Index m = 0; m < rec.acc.size(); ++m)
        obj[static_cast<std::size_t>(m)] = objective_value(rec.acc(m), rec.cost(m), params);
    std::vector<int> order(obj.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&obj](int a, int b) {
        return obj[static_cast<std::size_t>(a)] > obj[static_cast<std::size_t>(b)] ||
               (obj[static_cast<std::size_t>(a)] == obj[static_cast<std::size_t>(b)] && a < b);
    });
    return order;
}

std::set<int> top_z_set(const Eigen::VectorXd& values, int z) {
    std::vector<int> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&values](int a, int b) {
        return values(a) > values(b) || (values(a) == values(b) && a < b);
    });
    return std::set<int>(order.begin(), order.begin() + z);
}

}  // namespace

double match_accuracy(const std::vector<int>& decisions,
                      const std::vector<QueryRecord>& records, const ObjectiveParams& params,
                      int z) {
    check_records(records);
    if (decisions.size() != records.size())
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "one decision per record required");
    if (z < 1 || z > records.front().acc.size())
        throw ConfigError("z must lie in [1, pool size]");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto order = observed_ranking(records[i], params);
        const auto top_end = order.begin() + z;
        if (std::find(order.begin(), top_end, decisions[i]) != top_end) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::map<std::string, Eigen::VectorXd> task_mean_objectives(
    const std::vector<QueryRecord>& records, const ObjectiveParams& params) {
    check_records(records);
    if (!std::isfinite(params.lambda) || params.lambda < 0.0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "lambda must be finite and >= 0");
    std::map<std::string, Eigen::VectorXd> sums;
    std::map<std::string, int> counts;
    for (const auto& rec : records) {
        auto [it, fresh] = sums.try_emplace(rec.task, Eigen::VectorXd::Zero(rec.acc.size()));
        if (!fresh && it->second.size() != rec.acc.size())
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  "records disagree on pool size");
        it->second += rec.acc - params.lambda * rec.cost;
        counts[rec.task] += 1;
    }
    for (auto& [task, v] : sums) v /= static_cast<double>(counts[task]);
    return sums;
}

JaccardReport jaccard_overlap(const std::map<std::string, Eigen::VectorXd>& per_task_objectives,
                              const std::set<std::string>& outlier_tasks, int z) {
    if (per_task_objectives.empty()) throw ConfigError("no task objective tables");
    const Eigen::Index m = per_task_objectives.begin()->second.size();
    if (z < 1 || z > m) throw ConfigError("z must lie in [1, pool size]");
    for (const auto& task : outlier_tasks)
        if (!per_task_objectives.count(task))
            throw ConfigError("outlier task has no objective table: " + task);

    std::map<std::string, std::set<int>> tops;
    for (const auto& [task, values] : per_task_objectives) {
        if (values.size() != m)
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  "objective tables disagree on pool size");
        tops[task] = top_z_set(values, z);
    }

    JaccardReport report;
    report.z = z;
    double total = 0.0;
    for (const auto& outlier : outlier_tasks) {
        for (const auto& [task, top] : tops) {
            if (outlier_tasks.count(task)) continue;
            const auto& otop = tops[outlier];
            std::vector<int> both;
            std::set_intersection(otop.begin(), otop.end(), top.begin(), top.end(),
                                  std::back_inserter(both));
            const double unions = static_cast<double>(otop.size() + top.size() - both.size());
            const double j = static_cast<double>(both.size()) / unions;
            report.pairs.push_back(JaccardPair{outlier, task, j});
            total += j;
        }
    }
    if (report.pairs.empty())
        throw ConfigError("jaccard overlap needs at least one outlier and one inlier task");
    report.average = total / static_cast<double>(report.pairs.size());
    return report;
}

bool retrain_trigger(const JaccardReport& report, double threshold) {
    if (!std::isfinite(threshold)) throw ConfigError("retrain threshold must be finite");
    return report.average < threshold;
}

RouterFn make_fixed_baseline(int model_index) {
    if (model_index < 0) throw ConfigError("fixed baseline needs a valid model index");
    return [model_index](const QueryRecord&, const ObjectiveParams&) { return model_index; };
}

RouterFn make_random_baseline(int pool_size, std::uint64_t seed) {
    if (pool_size < 1) throw ConfigError("random baseline needs a non-empty pool");
    return [pool_size, seed](const QueryRecord& rec, const ObjectiveParams&) {
        Rng rng(seed ^ fnv1a64(rec.query_id));
        return static_cast<int>(rng.below(static_cast<std::uint64_t>(pool_size)));
    };
}

std::vector<BiasVarianceRow> bias_variance_probe(const SyntheticConfig& config,
                                                 const RouterConfig& proto,
                                                 const SplitSpec& split,
                                                 const std::vector<double>& inv_tau_grid,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const std::vector<double>& lambda_grid) {
    if (inv_tau_grid.empty()) throw ConfigError("inv_tau grid is empty");
    if (seeds.empty()) throw ConfigError("probe needs at least one seed");
    check_grid(lambda_grid);

    std::vector<BiasVarianceRow> rows;
    for (const double inv_tau : inv_tau_grid)
        rows.push_back(BiasVarianceRow{inv_tau, 0.0, 0.0});

    for (const std::uint64_t seed : seeds) {
        SyntheticConfig gen = config;
        gen.seed = seed;
        auto [corpus, truth] = synth_generate(gen);
        SplitSpec split_spec = split;
        split_spec.seed = seed;
        const SplitResult sides = make_split(corpus, split_spec);
        sides.train.validate();
        sides.test.validate();

        ReferenceSet ref =
            proto.kind == ReferenceKind::Clusters
                ? build_cluster_reference(
                      sides.train,
                      kmeans_fit(sides.train.records, proto.clusters, seed), proto.metric)
                : build_point_reference(sides.train, proto.metric);
        const auto shared = std::make_shared<const ReferenceSet>(std::move(ref));

        for (std::size_t r = 0; r < inv_tau_grid.size(); ++r) {
            RouterConfig cfg = proto;
            cfg.inv_tau = inv_tau_grid[r];
            const Router router(shared, cfg);
            rows[r].mean_auc +=
                sweep("probe", router, sides.test.records, lambda_grid).auc;

            // Squared error of the λ=0 estimates (accuracies) against the
            // generating per-task truth.
            double sq = 0.0;
            std::int64_t terms = 0;
            for (const auto& rec : sides.test.records) {
                const auto t = truth.task_index(rec.task);
                if (!t)
                    throw ValidationError(ValidationError::Kind::CorpusInconsistent,
                                          "record task missing from truth: " + rec.task);
                const Router::Blend blend = router.blend(rec.encoding);
                for (Eigen::Index m = 0; m < blend.acc.size(); ++m) {
                    const double err = blend.acc(m) - truth.acc(*t, m);
                    sq += err * err;
                    ++terms;
                }
            }
            rows[r].mean_sq_err += sq / static_cast<double>(terms);
        }
    }
    for (auto& row : rows) {
        row.mean_auc /= static_cast<double>(seeds.size());
        row.mean_sq_err /= static_cast<double>(seeds.size());
    }
    return rows;
}

std::string curves_csv(const std::vector<SweepResult>& results) {
    std::string out = "label,lambda,mean_accuracy,mean_cost\n";
    char buf[128];
    for (const auto& r : results) {
        for (const auto& p : r.points) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g\n", p.lambda, p.mean_accuracy,
                          p.mean_cost);
            out += r.label;
            out += buf;
        }
    }
    return out;
}

}  // namespace proxroute
