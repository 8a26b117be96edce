// proxroute — command-line surface for the routing engine.
//
// Subcommands: synth, fit, route, evaluate, sweep, jaccard, bench.
// Exit codes: 0 success, 2 configuration error, 3 data validation error,
// 4 I/O error. Every file-producing command writes a manifest next to its
// outputs; --threads 1 is the deterministic golden path.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "proxroute/data.hpp"
#include "proxroute/estimator.hpp"
#include "proxroute/eval.hpp"
#include "proxroute/manifest.hpp"
#include "proxroute/reference.hpp"
#include "proxroute/rng.hpp"

namespace {

using namespace proxroute;
using nlohmann::json;

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("cannot parse " + what + ": '" + s + "'");
    return v;
}

/// Seed resolution: explicit flag > PROXROUTE_SEED env var > 42.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("PROXROUTE_SEED"))
        return parse_u64(env, "PROXROUTE_SEED");
    return 42;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& tok : split_csv(s)) out.push_back(parse_u64(tok, "seed"));
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

RouterMode mode_from(const std::string& s) {
    if (s == "base") return RouterMode::Base;
    if (s == "prox") return RouterMode::Prox;
    throw ConfigError("unknown mode: " + s);
}

PenaltyKind penalty_from(const std::string& s) {
    if (s == "distance") return PenaltyKind::Distance;
    if (s == "squared") return PenaltyKind::SquaredDistance;
    throw ConfigError("unknown penalty: " + s);
}

DistanceMetric metric_from(const std::string& s) {
    if (s == "cosine") return DistanceMetric::Cosine;
    if (s == "euclidean") return DistanceMetric::Euclidean;
    throw ConfigError("unknown metric: " + s);
}

/// Query-time router flags shared by route/evaluate/sweep; reference kind
/// and metric come from the loaded artifact.
struct RouterFlags {
    std::string mode = "prox";
    double inv_tau = 20.0;
    int neighbors = 100;
    double epsilon_spread = 1e-2;
    std::string penalty = "distance";
};

void add_router_flags(CLI::App* sub, RouterFlags& f) {
    sub->add_option("--mode", f.mode, "base or prox")
        ->check(CLI::IsMember({"base", "prox"}));
    sub->add_option("--inv-tau", f.inv_tau, "tilting sharpness 1/tau; 0 disables tilting");
    sub->add_option("--neighbors", f.neighbors, "k for training-point references");
    sub->add_option("--epsilon-spread", f.epsilon_spread, "spread floor in the cluster prior");
    sub->add_option("--penalty", f.penalty, "distance or squared")
        ->check(CLI::IsMember({"distance", "squared"}));
}

RouterConfig to_config(const RouterFlags& f, const ReferenceSet& ref) {
    RouterConfig cfg;
    cfg.mode = mode_from(f.mode);
    cfg.kind = ref.kind;
    cfg.metric = ref.metric;
    cfg.clusters = ref.kind == ReferenceKind::Clusters ? ref.size() : cfg.clusters;
    cfg.neighbors = f.neighbors;
    cfg.inv_tau = f.inv_tau;
    cfg.epsilon_spread = f.epsilon_spread;
    cfg.penalty = penalty_from(f.penalty);
    return cfg;
}

json router_config_json(const RouterConfig& cfg) {
    return json{{"mode", to_string(cfg.mode)},
                {"kind", to_string(cfg.kind)},
                {"metric", to_string(cfg.metric)},
                {"clusters", cfg.clusters},
                {"neighbors", cfg.neighbors},
                {"inv_tau", cfg.inv_tau},
                {"epsilon_spread", cfg.epsilon_spread},
                {"penalty", cfg.penalty == PenaltyKind::Distance ? "distance" : "squared"}};
}

std::string default_manifest_path(const std::string& out) { return out + ".manifest.json"; }

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
    std::string out;
    std::string format = "jsonl";
    std::string truth_out;
    std::optional<std::uint64_t> seed;
    int queries_per_task = 250;
    int d_enc = 32;
    double separation = 6.0;
    double blob_std = 1.0;
    double noise_std = 0.12;
    std::string noise = "gaussian";
    std::string manifest;
    std::vector<std::string> argv;
};

void run_synth(const SynthArgs& a) {
    Stopwatch total;
    SyntheticConfig cfg = SyntheticConfig::benchmark_default();
    cfg.seed = resolve_seed(a.seed);
    cfg.queries_per_task = a.queries_per_task;
    cfg.d_enc = a.d_enc;
    cfg.cluster_separation = a.separation;
    cfg.blob_std = a.blob_std;
    cfg.noise_std = a.noise_std;
    cfg.noise = a.noise == "bernoulli" ? NoiseKind::Bernoulli : NoiseKind::Gaussian;

    auto [corpus, truth] = synth_generate(cfg);
    save_corpus(a.out, corpus, a.format == "binary" ? CorpusFormat::Binary
                                                    : CorpusFormat::Jsonl);

    RunManifest manifest;
    manifest.command = "synth";
    manifest.argv = a.argv;
    manifest.seed = cfg.seed;
    manifest.config = json{{"num_tasks", cfg.num_tasks},
                           {"queries_per_task", cfg.queries_per_task},
                           {"d_enc", cfg.d_enc},
                           {"cluster_separation", cfg.cluster_separation},
                           {"blob_std", cfg.blob_std},
                           {"noise_std", cfg.noise_std},
                           {"noise", a.noise},
                           {"models", static_cast<int>(cfg.models.size())},
                           {"format", a.format}};
    manifest.add_output(a.out);

    if (!a.truth_out.empty()) {
        json t;
        t["tasks"] = truth.tasks;
        t["model_ids"] = truth.model_ids;
        t["acc"] = json::array();
        t["cost"] = json::array();
        for (Eigen::Index i = 0; i < truth.acc.rows(); ++i) {
            json ra = json::array(), rc = json::array();
            for (Eigen::Index j = 0; j < truth.acc.cols(); ++j) {
                ra.push_back(truth.acc(i, j));
                rc.push_back(truth.cost(i, j));
            }
            t["acc"].push_back(std::move(ra));
            t["cost"].push_back(std::move(rc));
        }
        write_text(a.truth_out, t.dump(2) + "\n");
        manifest.add_output(a.truth_out);
    }
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
    std::cout << "wrote " << corpus.size() << " records to " << a.out << "\n";
}

// ------------------------------------------------------------------ fit ---

struct FitArgs {
    std::string corpus;
    std::string out;
    std::string kind = "clusters";
    int clusters = 32;
    std::string metric = "cosine";
    std::optional<std::uint64_t> seed;
    int max_iters = 100;
    double rel_tol = 1e-4;
    std::string scenario = "none";
    std::string outliers;
    double train_fraction = 0.6;
    int few_shot = 25;
    std::string emit_train;
    std::string emit_test;
    std::string format = "jsonl";
    std::string manifest;
    std::vector<std::string> argv;
};

void run_fit(const FitArgs& a) {
    Stopwatch total;
    const std::uint64_t seed = resolve_seed(a.seed);
    const Corpus corpus = load_corpus(a.corpus);
    const DistanceMetric metric = metric_from(a.metric);

    // Optional pre-fit split; "none" fits on the whole corpus.
    Corpus train = corpus;
    json split_json = json{{"scenario", "none"}};
    if (a.scenario != "none") {
        SplitSpec spec;
        const auto scenario = scenario_from_string(a.scenario);
        if (!scenario) throw ConfigError("unknown scenario: " + a.scenario);
        spec.scenario = *scenario;
        spec.outlier_tasks = split_csv(a.outliers);
        spec.inlier_train_fraction = a.train_fraction;
        spec.few_shot_count = a.few_shot;
        spec.seed = seed;
        SplitResult sides = make_split(corpus, spec);
        train = std::move(sides.train);
        split_json = json{{"scenario", a.scenario},
                          {"outlier_tasks", spec.outlier_tasks},
                          {"inlier_train_fraction", spec.inlier_train_fraction},
                          {"few_shot_count", spec.few_shot_count},
                          {"seed", spec.seed}};
        const CorpusFormat fmt =
            a.format == "binary" ? CorpusFormat::Binary : CorpusFormat::Jsonl;
        if (!a.emit_train.empty()) save_corpus(a.emit_train, train, fmt);
        if (!a.emit_test.empty()) save_corpus(a.emit_test, sides.test, fmt);
    } else if (!a.emit_train.empty() || !a.emit_test.empty()) {
        throw ConfigError("--emit-train/--emit-test need a --scenario");
    }

    RunManifest manifest;
    manifest.command = "fit";
    manifest.argv = a.argv;
    manifest.seed = seed;
    manifest.add_input(a.corpus);

    Stopwatch fit_watch;
    ReferenceSet ref;
    json fit_json;
    if (a.kind == "clusters") {
        const ClusteringResult clustering =
            kmeans_fit(train.records, a.clusters, seed, a.max_iters, a.rel_tol);
        ref = build_cluster_reference(train, clustering, metric);
        fit_json = json{{"kind", "clusters"},
                        {"clusters", a.clusters},
                        {"metric", a.metric},
                        {"max_iters", a.max_iters},
                        {"rel_tol", a.rel_tol},
                        {"iterations", clustering.iterations},
                        {"converged", clustering.converged},
                        {"final_sse", clustering.sse_history.back()}};
    } else if (a.kind == "points") {
        ref = build_point_reference(train, metric);
        fit_json = json{{"kind", "points"}, {"metric", a.metric}};
    } else {
        throw ConfigError("unknown kind: " + a.kind);
    }
    const double fit_ms = fit_watch.ms();

    save_reference(a.out, ref);
    manifest.config = json{{"fit", fit_json},
                           {"split", split_json},
                           {"train_records", train.size()},
                           {"reference_size", ref.size()}};
    manifest.add_output(a.out);
    if (!a.emit_train.empty()) manifest.add_output(a.emit_train);
    if (!a.emit_test.empty()) manifest.add_output(a.emit_test);
    manifest.timings["fit_ms"] = fit_ms;
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
    std::cout << "fit " << to_string(ref.kind) << " reference with " << ref.size()
              << " elements from " << train.size() << " records\n";
}

// ---------------------------------------------------------------- route ---

struct RouteArgs {
    std::string ref;
    double lambda = 0.0;
    RouterFlags flags;
    std::string input;
    std::string out;
    int top_weights = 16;
    std::string manifest;
    std::vector<std::string> argv;
};

json report_to_json(const EstimateReport& report, int top_weights) {
    json j;
    j["chosen"] = report.chosen();
    j["chosen_index"] = report.chosen_index;
    json per_model = json::object();
    for (std::size_t m = 0; m < report.model_ids.size(); ++m)
        per_model[report.model_ids[m]] = report.per_model(static_cast<Eigen::Index>(m));
    j["per_model"] = std::move(per_model);
    j["ess"] = report.ess;
    auto entries = report.weights.entries();
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.second > b.second || (a.second == b.second && a.first < b.first);
    });
    if (static_cast<int>(entries.size()) > top_weights)
        entries.resize(static_cast<std::size_t>(top_weights));
    json w = json::array();
    for (const auto& [idx, weight] : entries) w.push_back({idx, weight});
    j["weights"] = std::move(w);
    return j;
}

void run_route(const RouteArgs& a) {
    const auto ref = std::make_shared<const ReferenceSet>(load_reference(a.ref));
    const RouterConfig cfg = to_config(a.flags, *ref);
    const Router router(ref, cfg);
    const ObjectiveParams params{a.lambda};

    std::istream* in = &std::cin;
    std::ifstream file_in;
    if (!a.input.empty()) {
        file_in.open(a.input);
        if (!file_in) throw IoError("cannot open: " + a.input);
        in = &file_in;
    }
    std::ostream* out = &std::cout;
    std::ofstream file_out;
    if (!a.out.empty()) {
        file_out.open(a.out, std::ios::trunc);
        if (!file_out) throw IoError("cannot open for writing: " + a.out);
        out = &file_out;
    }

    Stopwatch total;
    std::string line;
    int line_no = 0;
    std::int64_t routed = 0;
    double route_ms = 0.0;
    while (std::getline(*in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json q;
        try {
            q = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(ValidationError::Kind::MalformedRecord,
                                  "query line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!q.contains("encoding") || !q["encoding"].is_array() || q["encoding"].empty())
            throw ValidationError(ValidationError::Kind::MalformedRecord,
                                  "query line " + std::to_string(line_no) +
                                      ": 'encoding' must be a non-empty array");
        Encoding x(static_cast<Eigen::Index>(q["encoding"].size()));
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const auto& v = q["encoding"][static_cast<std::size_t>(k)];
            if (!v.is_number())
                throw ValidationError(ValidationError::Kind::MalformedRecord,
                                      "query line " + std::to_string(line_no) +
                                          ": encoding entries must be numbers");
            x(k) = static_cast<float>(v.get<double>());
        }
        Stopwatch one;
        const EstimateReport report = router.route(x, params);
        route_ms += one.ms();
        ++routed;
        json j = report_to_json(report, a.top_weights);
        if (q.contains("query_id")) j["query_id"] = q["query_id"];
        *out << j.dump() << "\n";
    }
    out->flush();
    if (!*out) throw IoError("write failed");

    if (!a.out.empty()) {
        RunManifest manifest;
        manifest.command = "route";
        manifest.argv = a.argv;
        manifest.config = router_config_json(cfg);
        manifest.config["lambda"] = a.lambda;
        manifest.add_input(a.ref);
        if (!a.input.empty()) manifest.add_input(a.input);
        manifest.add_output(a.out);
        manifest.timings["queries"] = routed;
        manifest.timings["route_ms"] = route_ms;
        manifest.timings["mean_ms_per_query"] =
            routed > 0 ? route_ms / static_cast<double>(routed) : 0.0;
        manifest.timings["total_ms"] = total.ms();
        manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
    }
}

// ------------------------------------------------------------- evaluate ---

struct EvaluateArgs {
    std::string corpus;
    std::string ref;
    double lambda = 0.0;
    RouterFlags flags;
    int threads = 1;
    std::string out;
    std::string manifest;
    std::vector<std::string> argv;
};

void run_evaluate(const EvaluateArgs& a) {
    Stopwatch total;
    if (a.threads < 1) throw ConfigError("--threads must be >= 1");
    const Corpus corpus = load_corpus(a.corpus);
    const auto ref = std::make_shared<const ReferenceSet>(load_reference(a.ref));
    const RouterConfig cfg = to_config(a.flags, *ref);
    const Router router(ref, cfg);
    const std::string label = to_string(cfg.mode) + "-" + to_string(cfg.kind);

    const SweepResult result =
        sweep(label, router, corpus.records, {a.lambda}, a.threads);
    json j;
    j["label"] = label;
    j["lambda"] = a.lambda;
    j["mean_accuracy"] = result.points.front().mean_accuracy;
    j["mean_cost"] = result.points.front().mean_cost;
    j["records"] = corpus.size();

    if (a.out.empty()) {
        std::cout << j.dump() << "\n";
        return;
    }
    write_text(a.out, j.dump(2) + "\n");
    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.argv = a.argv;
    manifest.threads = a.threads;
    manifest.config = router_config_json(cfg);
    manifest.config["lambda"] = a.lambda;
    manifest.add_input(a.corpus);
    manifest.add_input(a.ref);
    manifest.add_output(a.out);
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
}

// ---------------------------------------------------------------- sweep ---

struct SweepArgs {
    std::string corpus;
    std::vector<std::string> routers;  // label=mode:refpath
    RouterFlags flags;
    int grid_size = 50;
    double grid_lo = 1e-2;
    double grid_hi = 1e4;
    int threads = 1;
    bool baselines = false;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string summary;
    std::string manifest;
    std::vector<std::string> argv;
};

struct RouterSpecArg {
    std::string label;
    std::string mode;
    std::string path;
};

RouterSpecArg parse_router_spec(const std::string& s) {
    const auto eq = s.find('=');
    const auto colon = s.find(':', eq == std::string::npos ? 0 : eq + 1);
    if (eq == std::string::npos || colon == std::string::npos || eq == 0 ||
        colon == eq + 1 || colon + 1 >= s.size())
        throw ConfigError("--router expects LABEL=MODE:REF_PATH, got '" + s + "'");
    RouterSpecArg spec;
    spec.label = s.substr(0, eq);
    spec.mode = s.substr(eq + 1, colon - eq - 1);
    spec.path = s.substr(colon + 1);
    if (spec.mode != "base" && spec.mode != "prox")
        throw ConfigError("--router mode must be base or prox, got '" + spec.mode + "'");
    return spec;
}

void run_sweep(const SweepArgs& a) {
    Stopwatch total;
    if (a.threads < 1) throw ConfigError("--threads must be >= 1");
    if (a.routers.empty()) throw ConfigError("sweep needs at least one --router");
    const Corpus corpus = load_corpus(a.corpus);
    const std::vector<double> grid = default_lambda_grid(a.grid_size, a.grid_lo, a.grid_hi);

    RunManifest manifest;
    manifest.command = "sweep";
    manifest.argv = a.argv;
    manifest.threads = a.threads;
    manifest.add_input(a.corpus);

    std::vector<SweepResult> results;
    json router_json = json::array();
    for (const auto& spec_str : a.routers) {
        const RouterSpecArg spec = parse_router_spec(spec_str);
        const auto ref = std::make_shared<const ReferenceSet>(load_reference(spec.path));
        RouterFlags flags = a.flags;
        flags.mode = spec.mode;
        const RouterConfig cfg = to_config(flags, *ref);
        const Router router(ref, cfg);
        results.push_back(sweep(spec.label, router, corpus.records, grid, a.threads));
        manifest.add_input(spec.path);
        json rj = router_config_json(cfg);
        rj["label"] = spec.label;
        rj["ref"] = spec.path;
        router_json.push_back(std::move(rj));
    }
    if (a.baselines) {
        const std::uint64_t seed = resolve_seed(a.seed);
        results.push_back(sweep("random",
                                make_random_baseline(corpus.pool.size(), seed),
                                corpus.records, grid, a.threads));
        results.push_back(sweep("expensive",
                                make_fixed_baseline(corpus.pool.most_expensive()),
                                corpus.records, grid, a.threads));
        manifest.seed = seed;
    }

    write_text(a.out, curves_csv(results));
    json summary;
    summary["grid"] = grid;
    summary["results"] = json::array();
    for (const auto& r : results)
        summary["results"].push_back({{"label", r.label}, {"auc", r.auc}});
    const std::string summary_path = a.summary.empty() ? a.out + ".summary.json" : a.summary;
    write_text(summary_path, summary.dump(2) + "\n");

    manifest.config = json{{"routers", router_json},
                           {"grid_size", a.grid_size},
                           {"grid_lo", a.grid_lo},
                           {"grid_hi", a.grid_hi},
                           {"baselines", a.baselines}};
    manifest.add_output(a.out);
    manifest.add_output(summary_path);
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
    for (const auto& r : results)
        std::cout << r.label << ": auc " << r.auc << "\n";
}

// -------------------------------------------------------------- jaccard ---

struct JaccardArgs {
    std::string corpus;
    double lambda = 0.0;
    std::vector<int> z = {1};
    std::string outliers;
    double threshold = 0.3;
    std::string out;
    std::string manifest;
    std::vector<std::string> argv;
};

void run_jaccard(const JaccardArgs& a) {
    Stopwatch total;
    const Corpus corpus = load_corpus(a.corpus);
    const auto outlier_list = split_csv(a.outliers);
    if (outlier_list.empty()) throw ConfigError("--outliers needs at least one task");
    const std::set<std::string> outliers(outlier_list.begin(), outlier_list.end());
    const auto tables = task_mean_objectives(corpus.records, ObjectiveParams{a.lambda});

    json out;
    out["lambda"] = a.lambda;
    out["threshold"] = a.threshold;
    out["reports"] = json::array();
    for (const int z : a.z) {
        const JaccardReport report = jaccard_overlap(tables, outliers, z);
        json r;
        r["z"] = report.z;
        r["average"] = report.average;
        r["retrain"] = retrain_trigger(report, a.threshold);
        r["pairs"] = json::array();
        for (const auto& p : report.pairs)
            r["pairs"].push_back({{"outlier_task", p.outlier_task},
                                  {"inlier_task", p.inlier_task},
                                  {"jaccard", p.jaccard}});
        out["reports"].push_back(std::move(r));
    }

    if (a.out.empty()) {
        std::cout << out.dump(2) << "\n";
        return;
    }
    write_text(a.out, out.dump(2) + "\n");
    RunManifest manifest;
    manifest.command = "jaccard";
    manifest.argv = a.argv;
    manifest.config = json{{"lambda", a.lambda},
                           {"z", a.z},
                           {"outliers", outlier_list},
                           {"threshold", a.threshold}};
    manifest.add_input(a.corpus);
    manifest.add_output(a.out);
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? default_manifest_path(a.out) : a.manifest);
}

// ---------------------------------------------------------------- bench ---

struct BenchArgs {
    std::string out_dir = "bench-out";
    std::string seeds = "7,42,99,1234,2024";
    std::string kind = "clusters";
    int clusters = 32;
    int neighbors = 100;
    double inv_tau = 20.0;
    double epsilon_spread = 1e-2;
    std::string metric = "cosine";
    int threads = 1;
    bool latency = false;
    int ref_size = 10000;
    int d_enc = 768;
    int queries = 200;
    std::string manifest;
    std::vector<std::string> argv;
};

std::vector<QueryRecord> task_subset(const std::vector<QueryRecord>& records,
                                     const std::set<std::string>& tasks, bool keep) {
    std::vector<QueryRecord> out;
    for (const auto& rec : records)
        if (tasks.count(rec.task) == static_cast<std::size_t>(keep)) out.push_back(rec);
    return out;
}

/// Memory the reference store actually holds: float32 anchors plus the
/// per-element summaries (means, count, spread), in decimal megabytes.
double reference_memory_mb(const ReferenceSet& ref) {
    const double anchors = 4.0 * static_cast<double>(ref.anchors.size());
    const double means = 8.0 * 2.0 * static_cast<double>(ref.mean_acc.size());
    const double scalars = (8.0 + 8.0) * static_cast<double>(ref.size());
    return (anchors + means + scalars) / 1e6;
}

void run_bench_latency(const BenchArgs& a, RunManifest& manifest, const std::string& report_path) {
    const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);

    // Timing-only corpus: random directions, two nominal models.
    Rng rng(seeds.front());
    Corpus corpus;
    corpus.pool = ModelPool({ModelInfo{"model-a", 5e-8, 1e-7}, ModelInfo{"model-b", 5e-7, 1e-6}});
    corpus.d_enc = a.d_enc;
    corpus.records.reserve(static_cast<std::size_t>(a.ref_size));
    for (int i = 0; i < a.ref_size; ++i) {
        QueryRecord rec;
        rec.query_id = "q" + std::to_string(i);
        rec.task = "timing";
        rec.encoding.resize(a.d_enc);
        for (int k = 0; k < a.d_enc; ++k) rec.encoding(k) = static_cast<float>(rng.normal());
        rec.acc.resize(2);
        rec.cost.resize(2);
        for (int m = 0; m < 2; ++m) {
            rec.acc(m) = rng.uniform01();
            rec.cost(m) = rng.uniform01() * 1e-4;
        }
        corpus.records.push_back(std::move(rec));
    }

    Stopwatch fit_watch;
    const auto ref = std::make_shared<const ReferenceSet>(
        build_point_reference(corpus, metric_from(a.metric)));
    const double fit_ms = fit_watch.ms();

    RouterConfig cfg;
    cfg.mode = RouterMode::Prox;
    cfg.kind = ReferenceKind::TrainingPoints;
    cfg.metric = ref->metric;
    cfg.neighbors = a.neighbors;
    cfg.inv_tau = a.inv_tau;
    cfg.epsilon_spread = a.epsilon_spread;
    const Router router(ref, cfg);
    const ObjectiveParams params{0.0};

    // Fresh queries, routed one at a time; per-decision wall clock.
    std::vector<double> times_ms;
    times_ms.reserve(static_cast<std::size_t>(a.queries));
    Encoding x(a.d_enc);
    for (int q = 0; q < a.queries; ++q) {
        for (int k = 0; k < a.d_enc; ++k) x(k) = static_cast<float>(rng.normal());
        Stopwatch one;
        const EstimateReport report = router.route(x, params);
        times_ms.push_back(one.ms());
        if (report.chosen_index < 0)
            throw ValidationError(ValidationError::Kind::Internal, "no decision");
    }
    std::vector<double> sorted = times_ms;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    double mean = 0.0;
    for (const double t : times_ms) mean += t;
    mean /= static_cast<double>(times_ms.size());

    json report;
    report["mode"] = "latency";
    report["ref_size"] = a.ref_size;
    report["d_enc"] = a.d_enc;
    report["neighbors"] = a.neighbors;
    report["queries"] = a.queries;
    report["threads"] = a.threads;
    report["median_ms_per_query"] = median;
    report["mean_ms_per_query"] = mean;
    report["memory_mb"] = reference_memory_mb(*ref);
    write_text(report_path, report.dump(2) + "\n");

    manifest.config = json{{"mode", "latency"},  {"ref_size", a.ref_size},
                           {"d_enc", a.d_enc},   {"neighbors", a.neighbors},
                           {"queries", a.queries}, {"metric", a.metric}};
    manifest.timings["fit_ms"] = fit_ms;
    manifest.timings["median_ms_per_query"] = median;
    manifest.timings["mean_ms_per_query"] = mean;
    std::cout << "latency: median " << median << " ms/query over " << a.queries
              << " queries against " << a.ref_size << " points (memory "
              << reference_memory_mb(*ref) << " MB)\n";
}

void run_bench_quality(const BenchArgs& a, RunManifest& manifest,
                       const std::string& report_path, const std::string& curves_path) {
    const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
    const DistanceMetric metric = metric_from(a.metric);
    const SyntheticConfig base_cfg = SyntheticConfig::benchmark_default();
    // The two tasks without a boosted specialist act as the held-out outliers.
    const std::set<std::string> outliers = {"task-6", "task-7"};
    const std::vector<double> grid = default_lambda_grid();

    auto fit_reference = [&](const Corpus& train, std::uint64_t seed) {
        if (a.kind == "clusters")
            return std::make_shared<const ReferenceSet>(build_cluster_reference(
                train, kmeans_fit(train.records, a.clusters, seed), metric));
        if (a.kind != "points") throw ConfigError("unknown kind: " + a.kind);
        return std::make_shared<const ReferenceSet>(build_point_reference(train, metric));
    };
    auto make_cfg = [&](const ReferenceSet& ref, RouterMode mode) {
        RouterConfig cfg;
        cfg.mode = mode;
        cfg.kind = ref.kind;
        cfg.metric = ref.metric;
        cfg.clusters = a.clusters;
        cfg.neighbors = a.neighbors;
        cfg.inv_tau = a.inv_tau;
        cfg.epsilon_spread = a.epsilon_spread;
        return cfg;
    };

    json per_seed = json::array();
    std::vector<SweepResult> all_curves;
    double mean_fit_ms = 0.0, mean_route_ms = 0.0;
    struct Accum {
        double prox_out = 0, base_out = 0, allsee_out = 0, prox_in = 0, base_in = 0;
    } sums;

    for (const std::uint64_t seed : seeds) {
        SyntheticConfig gen = base_cfg;
        gen.seed = seed;
        auto [corpus, truth] = synth_generate(gen);

        SplitSpec lto_spec;
        lto_spec.scenario = Scenario::LeaveTaskOut;
        lto_spec.outlier_tasks = {outliers.begin(), outliers.end()};
        lto_spec.seed = seed;
        const SplitResult lto = make_split(corpus, lto_spec);
        SplitSpec allsee_spec;
        allsee_spec.scenario = Scenario::AllSee;
        allsee_spec.seed = seed;
        const SplitResult allsee = make_split(corpus, allsee_spec);

        Stopwatch fit_watch;
        const auto ref_lto = fit_reference(lto.train, seed);
        const auto ref_all = fit_reference(allsee.train, seed);
        mean_fit_ms += fit_watch.ms();

        const Router prox(ref_lto, make_cfg(*ref_lto, RouterMode::Prox));
        const Router base(ref_lto, make_cfg(*ref_lto, RouterMode::Base));
        const Router prox_all(ref_all, make_cfg(*ref_all, RouterMode::Prox));

        const auto out_test = task_subset(lto.test.records, outliers, true);
        const auto in_test = task_subset(lto.test.records, outliers, false);
        const auto out_test_allsee = task_subset(allsee.test.records, outliers, true);
        const std::string tag = "s" + std::to_string(seed) + "/";

        Stopwatch route_watch;
        const SweepResult prox_out = sweep(tag + "prox-out", prox, out_test, grid, a.threads);
        const SweepResult base_out = sweep(tag + "base-out", base, out_test, grid, a.threads);
        const SweepResult allsee_out =
            sweep(tag + "allsee-out", prox_all, out_test_allsee, grid, a.threads);
        const SweepResult prox_in = sweep(tag + "prox-in", prox, in_test, grid, a.threads);
        const SweepResult base_in = sweep(tag + "base-in", base, in_test, grid, a.threads);
        mean_route_ms += route_watch.ms();

        for (const auto& r : {prox_out, base_out, allsee_out, prox_in, base_in})
            all_curves.push_back(r);
        sums.prox_out += prox_out.auc;
        sums.base_out += base_out.auc;
        sums.allsee_out += allsee_out.auc;
        sums.prox_in += prox_in.auc;
        sums.base_in += base_in.auc;
        per_seed.push_back(json{{"seed", seed},
                                {"prox_outlier_auc", prox_out.auc},
                                {"base_outlier_auc", base_out.auc},
                                {"allsee_outlier_auc", allsee_out.auc},
                                {"prox_inlier_auc", prox_in.auc},
                                {"base_inlier_auc", base_in.auc}});
    }

    const double n = static_cast<double>(seeds.size());
    json report;
    report["mode"] = "quality";
    report["seeds"] = seeds;
    report["config"] = json{{"kind", a.kind},         {"clusters", a.clusters},
                            {"neighbors", a.neighbors}, {"inv_tau", a.inv_tau},
                            {"metric", a.metric},     {"threads", a.threads}};
    report["per_seed"] = per_seed;
    report["means"] = json{{"prox_outlier_auc", sums.prox_out / n},
                           {"base_outlier_auc", sums.base_out / n},
                           {"allsee_outlier_auc", sums.allsee_out / n},
                           {"prox_inlier_auc", sums.prox_in / n},
                           {"base_inlier_auc", sums.base_in / n},
                           {"outlier_gap", (sums.prox_out - sums.base_out) / n},
                           {"inlier_gap", (sums.prox_in - sums.base_in) / n}};
    report["timings_ms"] = json{{"mean_fit_ms", mean_fit_ms / n},
                                {"mean_sweep_ms", mean_route_ms / n}};
    write_text(report_path, report.dump(2) + "\n");
    write_text(curves_path, curves_csv(all_curves));

    manifest.config = report["config"];
    manifest.config["mode"] = "quality";
    manifest.config["seeds"] = seeds;
    manifest.timings["mean_fit_ms"] = mean_fit_ms / n;
    manifest.timings["mean_sweep_ms"] = mean_route_ms / n;
    std::cout << "outlier auc: prox " << sums.prox_out / n << ", base " << sums.base_out / n
              << ", all-see " << sums.allsee_out / n << "\n"
              << "inlier auc: prox " << sums.prox_in / n << ", base " << sums.base_in / n
              << "\n";
}

void run_bench(const BenchArgs& a) {
    Stopwatch total;
    if (a.threads < 1) throw ConfigError("--threads must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create directory: " + a.out_dir);

    RunManifest manifest;
    manifest.command = "bench";
    manifest.argv = a.argv;
    manifest.threads = a.threads;
    manifest.seed = parse_seed_list(a.seeds).front();

    const std::string report_path = a.out_dir + "/report.json";
    const std::string curves_path = a.out_dir + "/curves.csv";
    if (a.latency) {
        run_bench_latency(a, manifest, report_path);
        manifest.add_output(report_path);
    } else {
        run_bench_quality(a, manifest, report_path, curves_path);
        manifest.add_output(report_path);
        manifest.add_output(curves_path);
    }
    manifest.timings["total_ms"] = total.ms();
    manifest.write(a.manifest.empty() ? a.out_dir + "/manifest.json" : a.manifest);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proxroute: proximity-weighted LLM query routing"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    std::vector<std::string> full_argv(argv, argv + argc);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic task-blob benchmark");
    synth_cmd->add_option("--out", synth_args.out, "corpus output path")->required();
    synth_cmd->add_option("--format", synth_args.format, "jsonl or binary")
        ->check(CLI::IsMember({"jsonl", "binary"}));
    synth_cmd->add_option("--truth-out", synth_args.truth_out, "write generating truth tables");
    synth_cmd->add_option("--seed", synth_args.seed, "generator seed");
    synth_cmd->add_option("--queries-per-task", synth_args.queries_per_task, "records per task");
    synth_cmd->add_option("--d-enc", synth_args.d_enc, "encoding width");
    synth_cmd->add_option("--separation", synth_args.separation, "task center norm");
    synth_cmd->add_option("--blob-std", synth_args.blob_std, "within-task std");
    synth_cmd->add_option("--noise-std", synth_args.noise_std, "observation noise std");
    synth_cmd->add_option("--noise", synth_args.noise, "gaussian or bernoulli")
        ->check(CLI::IsMember({"gaussian", "bernoulli"}));
    synth_cmd->add_option("--manifest", synth_args.manifest, "manifest path");
    synth_cmd->callback([&] {
        synth_args.argv = full_argv;
        run_synth(synth_args);
    });

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "build a reference set from a corpus");
    fit_cmd->add_option("--corpus", fit_args.corpus, "corpus path")->required();
    fit_cmd->add_option("--out", fit_args.out, "reference artifact path")->required();
    fit_cmd->add_option("--kind", fit_args.kind, "clusters or points")
        ->check(CLI::IsMember({"clusters", "points"}));
    fit_cmd->add_option("--clusters", fit_args.clusters, "K for kind=clusters");
    fit_cmd->add_option("--metric", fit_args.metric, "cosine or euclidean")
        ->check(CLI::IsMember({"cosine", "euclidean"}));
    fit_cmd->add_option("--seed", fit_args.seed, "seeding/splitting seed");
    fit_cmd->add_option("--max-iters", fit_args.max_iters, "Lloyd iteration cap");
    fit_cmd->add_option("--rel-tol", fit_args.rel_tol, "relative movement tolerance");
    fit_cmd->add_option("--scenario", fit_args.scenario,
                        "none, leave-task-out, few-shot-outlier or all-see")
        ->check(CLI::IsMember({"none", "leave-task-out", "few-shot-outlier", "all-see"}));
    fit_cmd->add_option("--outliers", fit_args.outliers, "comma-separated outlier tasks");
    fit_cmd->add_option("--train-fraction", fit_args.train_fraction,
                        "inlier train share (floor applies to train)");
    fit_cmd->add_option("--few-shot", fit_args.few_shot, "outlier records moved to train");
    fit_cmd->add_option("--emit-train", fit_args.emit_train, "also write the train corpus");
    fit_cmd->add_option("--emit-test", fit_args.emit_test, "also write the test corpus");
    fit_cmd->add_option("--format", fit_args.format, "emitted corpus format")
        ->check(CLI::IsMember({"jsonl", "binary"}));
    fit_cmd->add_option("--manifest", fit_args.manifest, "manifest path");
    fit_cmd->callback([&] {
        fit_args.argv = full_argv;
        run_fit(fit_args);
    });

    RouteArgs route_args;
    auto* route_cmd = app.add_subcommand("route", "route encodings from JSON lines");
    route_cmd->add_option("--ref", route_args.ref, "reference artifact path")->required();
    route_cmd->add_option("--lambda", route_args.lambda, "cost tradeoff");
    add_router_flags(route_cmd, route_args.flags);
    route_cmd->add_option("--input", route_args.input, "query file (default: stdin)");
    route_cmd->add_option("--out", route_args.out, "output file (default: stdout)");
    route_cmd->add_option("--top-weights", route_args.top_weights,
                          "weights reported per decision");
    route_cmd->add_option("--manifest", route_args.manifest, "manifest path (with --out)");
    route_cmd->callback([&] {
        route_args.argv = full_argv;
        run_route(route_args);
    });

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "mean accuracy/cost at one lambda");
    eval_cmd->add_option("--corpus", eval_args.corpus, "test corpus path")->required();
    eval_cmd->add_option("--ref", eval_args.ref, "reference artifact path")->required();
    eval_cmd->add_option("--lambda", eval_args.lambda, "cost tradeoff");
    add_router_flags(eval_cmd, eval_args.flags);
    eval_cmd->add_option("--threads", eval_args.threads, "worker threads (1 = sequential)");
    eval_cmd->add_option("--out", eval_args.out, "summary path (default: stdout)");
    eval_cmd->add_option("--manifest", eval_args.manifest, "manifest path (with --out)");
    eval_cmd->callback([&] {
        eval_args.argv = full_argv;
        run_evaluate(eval_args);
    });

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "accuracy-cost curves over a lambda grid");
    sweep_cmd->add_option("--corpus", sweep_args.corpus, "test corpus path")->required();
    sweep_cmd
        ->add_option("--router", sweep_args.routers,
                     "LABEL=MODE:REF_PATH (repeatable; mode base or prox)")
        ->required();
    add_router_flags(sweep_cmd, sweep_args.flags);
    sweep_cmd->add_option("--grid-size", sweep_args.grid_size, "log-spaced grid points");
    sweep_cmd->add_option("--grid-lo", sweep_args.grid_lo, "grid lower bound");
    sweep_cmd->add_option("--grid-hi", sweep_args.grid_hi, "grid upper bound");
    sweep_cmd->add_option("--threads", sweep_args.threads, "worker threads (1 = sequential)");
    sweep_cmd->add_flag("--baselines", sweep_args.baselines,
                        "also sweep random and most-expensive baselines");
    sweep_cmd->add_option("--seed", sweep_args.seed, "random-baseline seed");
    sweep_cmd->add_option("--out", sweep_args.out, "curves CSV path")->required();
    sweep_cmd->add_option("--summary", sweep_args.summary, "AUC summary JSON path");
    sweep_cmd->add_option("--manifest", sweep_args.manifest, "manifest path");
    sweep_cmd->callback([&] {
        sweep_args.argv = full_argv;
        run_sweep(sweep_args);
    });

    JaccardArgs jac_args;
    auto* jac_cmd =
        app.add_subcommand("jaccard", "top-z preference overlap between task groups");
    jac_cmd->add_option("--corpus", jac_args.corpus, "corpus path")->required();
    jac_cmd->add_option("--lambda", jac_args.lambda, "cost tradeoff");
    jac_cmd->add_option("--z", jac_args.z, "top-z sizes (repeatable)");
    jac_cmd->add_option("--outliers", jac_args.outliers, "comma-separated outlier tasks")
        ->required();
    jac_cmd->add_option("--threshold", jac_args.threshold, "retrain threshold");
    jac_cmd->add_option("--out", jac_args.out, "report path (default: stdout)");
    jac_cmd->add_option("--manifest", jac_args.manifest, "manifest path (with --out)");
    jac_cmd->callback([&] {
        jac_args.argv = full_argv;
        run_jaccard(jac_args);
    });

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "multi-seed benchmark or latency table");
    bench_cmd->add_option("--out-dir", bench_args.out_dir, "output directory");
    bench_cmd->add_option("--seeds", bench_args.seeds, "comma-separated seeds");
    bench_cmd->add_option("--kind", bench_args.kind, "clusters or points")
        ->check(CLI::IsMember({"clusters", "points"}));
    bench_cmd->add_option("--clusters", bench_args.clusters, "K for kind=clusters");
    bench_cmd->add_option("--neighbors", bench_args.neighbors, "k for kind=points");
    bench_cmd->add_option("--inv-tau", bench_args.inv_tau, "tilting sharpness");
    bench_cmd->add_option("--epsilon-spread", bench_args.epsilon_spread, "prior spread floor");
    bench_cmd->add_option("--metric", bench_args.metric, "cosine or euclidean")
        ->check(CLI::IsMember({"cosine", "euclidean"}));
    bench_cmd->add_option("--threads", bench_args.threads, "worker threads (1 = sequential)");
    bench_cmd->add_flag("--latency", bench_args.latency, "timing table instead of quality");
    bench_cmd->add_option("--ref-size", bench_args.ref_size, "latency: reference points");
    bench_cmd->add_option("--d-enc", bench_args.d_enc, "latency: encoding width");
    bench_cmd->add_option("--queries", bench_args.queries, "latency: timed queries");
    bench_cmd->add_option("--manifest", bench_args.manifest, "manifest path");
    bench_cmd->callback([&] {
        bench_args.argv = full_argv;
        run_bench(bench_args);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorClass::Config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
