#include "proxroute/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "proxroute/rng.hpp"

namespace proxroute {

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::LeaveTaskOut: return "leave-task-out";
        case Scenario::FewShotOutlier: return "few-shot-outlier";
        case Scenario::AllSee: return "all-see";
    }
    return "unknown";
}

std::optional<Scenario> scenario_from_string(const std::string& name) {
    if (name == "leave-task-out") return Scenario::LeaveTaskOut;
    if (name == "few-shot-outlier") return Scenario::FewShotOutlier;
    if (name == "all-see") return Scenario::AllSee;
    return std::nullopt;
}

void SplitSpec::validate() const {
    if (!std::isfinite(inlier_train_fraction) || inlier_train_fraction <= 0.0 ||
        inlier_train_fraction >= 1.0)
        throw ConfigError("inlier_train_fraction must lie strictly between 0 and 1");
    if (few_shot_count < 0) throw ConfigError("few_shot_count must be >= 0");
    if (scenario != Scenario::AllSee && outlier_tasks.empty())
        throw ConfigError(to_string(scenario) + " needs at least one outlier task");
}

SplitResult make_split(const Corpus& corpus, const SplitSpec& spec) {
    corpus.validate();
    spec.validate();
    const std::set<std::string> outliers(spec.outlier_tasks.begin(), spec.outlier_tasks.end());

    std::map<std::string, std::vector<int>> by_task;
    for (int i = 0; i < corpus.size(); ++i)
        by_task[corpus.records[static_cast<std::size_t>(i)].task].push_back(i);
    if (spec.scenario != Scenario::AllSee)
        for (const auto& task : outliers)
            if (!by_task.count(task)) throw ConfigError("outlier task not in corpus: " + task);

    // Per-task membership. Inlier tasks (every task, under AllSee) shuffle
    // with a task-labeled stream, so the same records land in train for a
    // given (seed, task) no matter the scenario.
    std::vector<char> in_train(static_cast<std::size_t>(corpus.size()), 0);
    for (const auto& [task, idx] : by_task) {
        if (spec.scenario != Scenario::AllSee && outliers.count(task)) continue;
        std::vector<int> shuffled = idx;
        Rng rng = Rng::labeled(spec.seed, task);
        rng.shuffle(shuffled);
        const int n_train = static_cast<int>(
            std::floor(spec.inlier_train_fraction * static_cast<double>(idx.size())));
        for (int j = 0; j < n_train; ++j) in_train[static_cast<std::size_t>(shuffled[j])] = 1;
    }

    if (spec.scenario == Scenario::FewShotOutlier) {
        std::vector<int> pooled;
        for (const auto& [task, idx] : by_task)
            if (outliers.count(task)) pooled.insert(pooled.end(), idx.begin(), idx.end());
        if (static_cast<int>(pooled.size()) < spec.few_shot_count)
            throw ConfigError("few_shot_count = " + std::to_string(spec.few_shot_count) +
                              " exceeds the " + std::to_string(pooled.size()) +
                              " pooled outlier records");
        Rng rng = Rng::labeled(spec.seed, "few-shot");
        rng.shuffle(pooled);
        for (int j = 0; j < spec.few_shot_count; ++j)
            in_train[static_cast<std::size_t>(pooled[j])] = 1;
    }

    SplitResult out;
    out.train.pool = corpus.pool;
    out.train.d_enc = corpus.d_enc;
    out.test.pool = corpus.pool;
    out.test.d_enc = corpus.d_enc;
    for (int i = 0; i < corpus.size(); ++i) {
        auto& side = in_train[static_cast<std::size_t>(i)] ? out.train : out.test;
        side.records.push_back(corpus.records[static_cast<std::size_t>(i)]);
    }
    return out;
}

double compute_cost(std::int64_t tokens_in, std::int64_t tokens_out, const ModelInfo& model) {
    if (tokens_in < 0 || tokens_out < 0)
        throw ValidationError(ValidationError::Kind::ValueOutOfRange, "negative token count");
    return static_cast<double>(tokens_in) * model.price_in +
           static_cast<double>(tokens_out) * model.price_out;
}

namespace {

using detail::get_bytes;
using detail::get_pod;
using detail::get_str;
using detail::put_bytes;
using detail::put_pod;
using detail::put_str;
using nlohmann::json;

constexpr char kCorpusMagic[4] = {'P', 'R', 'X', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;

[[noreturn]] void malformed(int line, const std::string& what) {
    throw ValidationError(ValidationError::Kind::MalformedRecord,
                          "line " + std::to_string(line) + ": " + what);
}

const json& field(const json& j, const char* key, int line) {
    const auto it = j.find(key);
    if (it == j.end()) malformed(line, std::string("missing field '") + key + "'");
    return *it;
}

double num_field(const json& j, const char* key, int line) {
    const json& v = field(j, key, line);
    if (!v.is_number()) malformed(line, std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::string str_field(const json& j, const char* key, int line) {
    const json& v = field(j, key, line);
    if (!v.is_string()) malformed(line, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

Corpus load_corpus_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);

    Corpus corpus;
    std::string line;
    int line_no = 0;
    int d_enc = 0;  // 0 = not yet known (header may omit it)

    // Header line: model pool and optional encoding width.
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json header;
        try {
            header = json::parse(line);
        } catch (const json::exception& e) {
            malformed(line_no, e.what());
        }
        if (header.contains("format_version") &&
            (!header["format_version"].is_number_integer() ||
             header["format_version"].get<int>() != 1))
            malformed(line_no, "unsupported format_version");
        const json& models = field(header, "models", line_no);
        if (!models.is_array() || models.empty())
            malformed(line_no, "'models' must be a non-empty array");
        std::vector<ModelInfo> infos;
        for (const json& m : models)
            infos.push_back(ModelInfo{str_field(m, "id", line_no),
                                      num_field(m, "price_in", line_no),
                                      num_field(m, "price_out", line_no)});
        corpus.pool = ModelPool(std::move(infos));
        if (header.contains("d_enc")) {
            if (!header["d_enc"].is_number_integer() || header["d_enc"].get<int>() < 1)
                malformed(line_no, "'d_enc' must be a positive integer");
            d_enc = header["d_enc"].get<int>();
        }
        break;
    }
    if (corpus.pool.size() == 0)
        throw ValidationError(ValidationError::Kind::EmptyCorpus,
                              "corpus file has no header line: " + path);

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            malformed(line_no, e.what());
        }
        QueryRecord rec;
        rec.query_id = str_field(j, "query_id", line_no);
        rec.task = str_field(j, "task", line_no);

        const json& enc = field(j, "encoding", line_no);
        if (!enc.is_array() || enc.empty())
            malformed(line_no, "'encoding' must be a non-empty array");
        if (d_enc == 0) d_enc = static_cast<int>(enc.size());  // inferred from first record
        if (static_cast<int>(enc.size()) != d_enc)
            throw ValidationError(ValidationError::Kind::DimensionMismatch,
                                  "line " + std::to_string(line_no) + ": encoding width " +
                                      std::to_string(enc.size()) + " != expected " +
                                      std::to_string(d_enc));
        rec.encoding.resize(d_enc);
        for (int k = 0; k < d_enc; ++k) {
            if (!enc[static_cast<std::size_t>(k)].is_number())
                malformed(line_no, "encoding entries must be numbers");
            rec.encoding(k) =
                static_cast<float>(enc[static_cast<std::size_t>(k)].get<double>());
        }

        const json& obs = field(j, "obs", line_no);
        if (!obs.is_object()) malformed(line_no, "'obs' must be an object");
        for (const auto& [id, v] : obs.items()) {
            (void)v;
            if (!corpus.pool.index_of(id))
                throw ValidationError(ValidationError::Kind::UnknownModel,
                                      "line " + std::to_string(line_no) +
                                          ": unknown model in obs: " + id);
        }
        rec.acc.resize(corpus.pool.size());
        rec.cost.resize(corpus.pool.size());
        for (int m = 0; m < corpus.pool.size(); ++m) {
            const ModelInfo& info = corpus.pool[m];
            const auto it = obs.find(info.id);
            if (it == obs.end())
                throw ValidationError(ValidationError::Kind::CorpusInconsistent,
                                      "line " + std::to_string(line_no) +
                                          ": record missing model " + info.id);
            const json& o = *it;
            if (!o.is_object()) malformed(line_no, "observation must be an object");
            rec.acc(m) = num_field(o, "acc", line_no);
            const bool has_cost = o.contains("cost");
            const bool has_tokens = o.contains("tokens_in") || o.contains("tokens_out");
            if (has_cost && has_tokens)
                malformed(line_no, "give 'cost' or token counts, not both");
            if (has_cost) {
                rec.cost(m) = num_field(o, "cost", line_no);
            } else if (has_tokens) {
                const double ti = num_field(o, "tokens_in", line_no);
                const double to = num_field(o, "tokens_out", line_no);
                if (ti < 0 || to < 0 || ti != std::floor(ti) || to != std::floor(to))
                    malformed(line_no, "token counts must be nonnegative integers");
                rec.cost(m) = compute_cost(static_cast<std::int64_t>(ti),
                                           static_cast<std::int64_t>(to), info);
            } else {
                malformed(line_no, "observation needs 'cost' or token counts");
            }
            if (!(rec.acc(m) >= 0.0 && rec.acc(m) <= 1.0))
                throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                      "line " + std::to_string(line_no) + ": acc for model " +
                                          info.id + " outside [0, 1]");
            if (!(rec.cost(m) >= 0.0) || !std::isfinite(rec.cost(m)))
                throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                                      "line " + std::to_string(line_no) + ": cost for model " +
                                          info.id + " must be finite and nonnegative");
        }
        corpus.records.push_back(std::move(rec));
    }

    corpus.d_enc = d_enc;
    corpus.validate();
    return corpus;
}

Corpus load_corpus_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    get_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kCorpusMagic))
        throw IoError("not a corpus artifact: " + path);
    if (get_pod<std::uint32_t>(is) != kCorpusVersion)
        throw IoError("unsupported corpus artifact version: " + path);
    const auto d = get_pod<std::uint32_t>(is);
    const auto m = get_pod<std::uint32_t>(is);
    if (d == 0 || m == 0 || d > (1u << 24) || m > (1u << 16))
        throw IoError("corrupt artifact header: " + path);
    std::vector<ModelInfo> infos;
    for (std::uint32_t j = 0; j < m; ++j) {
        ModelInfo info;
        info.id = get_str(is);
        info.price_in = get_pod<double>(is);
        info.price_out = get_pod<double>(is);
        infos.push_back(std::move(info));
    }
    Corpus corpus;
    corpus.pool = ModelPool(std::move(infos));
    corpus.d_enc = static_cast<int>(d);
    const auto count = get_pod<std::uint64_t>(is);
    if (count > (1ull << 32)) throw IoError("corrupt artifact header: " + path);
    for (std::uint64_t i = 0; i < count; ++i) {
        QueryRecord rec;
        rec.query_id = get_str(is);
        rec.task = get_str(is);
        rec.encoding.resize(static_cast<Eigen::Index>(d));
        get_bytes(is, rec.encoding.data(), sizeof(float) * d);
        rec.acc.resize(static_cast<Eigen::Index>(m));
        rec.cost.resize(static_cast<Eigen::Index>(m));
        for (std::uint32_t k = 0; k < m; ++k) rec.acc(static_cast<Eigen::Index>(k)) =
            get_pod<double>(is);
        for (std::uint32_t k = 0; k < m; ++k) rec.cost(static_cast<Eigen::Index>(k)) =
            get_pod<double>(is);
        corpus.records.push_back(std::move(rec));
    }
    corpus.validate();
    return corpus;
}

}  // namespace

Corpus load_corpus(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open: " + path);
    char head[4] = {0, 0, 0, 0};
    probe.read(head, 4);
    probe.close();
    if (std::equal(head, head + 4, kCorpusMagic)) return load_corpus_binary(path);
    return load_corpus_jsonl(path);
}

void save_corpus(const std::string& path, const Corpus& corpus, CorpusFormat format) {
    corpus.validate();
    if (format == CorpusFormat::Binary) {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + path);
        put_bytes(os, kCorpusMagic, 4);
        put_pod(os, kCorpusVersion);
        put_pod(os, static_cast<std::uint32_t>(corpus.d_enc));
        put_pod(os, static_cast<std::uint32_t>(corpus.pool.size()));
        for (const auto& info : corpus.pool.models()) {
            put_str(os, info.id);
            put_pod(os, info.price_in);
            put_pod(os, info.price_out);
        }
        put_pod(os, static_cast<std::uint64_t>(corpus.records.size()));
        for (const auto& rec : corpus.records) {
            put_str(os, rec.query_id);
            put_str(os, rec.task);
            put_bytes(os, rec.encoding.data(),
                      sizeof(float) * static_cast<std::size_t>(rec.encoding.size()));
            for (Eigen::Index k = 0; k < rec.acc.size(); ++k) put_pod(os, rec.acc(k));
            for (Eigen::Index k = 0; k < rec.cost.size(); ++k) put_pod(os, rec.cost(k));
        }
        os.flush();
        if (!os) throw IoError("write failed: " + path);
        return;
    }

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    json header;
    header["format_version"] = 1;
    header["d_enc"] = corpus.d_enc;
    header["models"] = json::array();
    for (const auto& info : corpus.pool.models())
        header["models"].push_back(
            {{"id", info.id}, {"price_in", info.price_in}, {"price_out", info.price_out}});
    os << header.dump() << "\n";
    for (const auto& rec : corpus.records) {
        json j;
        j["query_id"] = rec.query_id;
        j["task"] = rec.task;
        j["encoding"] = json::array();
        for (Eigen::Index k = 0; k < rec.encoding.size(); ++k)
            j["encoding"].push_back(static_cast<double>(rec.encoding(k)));
        json obs = json::object();
        for (int m = 0; m < corpus.pool.size(); ++m)
            obs[corpus.pool[m].id] = {{"acc", rec.acc(m)}, {"cost", rec.cost(m)}};
        j["obs"] = std::move(obs);
        os << j.dump() << "\n";
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

void SyntheticConfig::validate() const {
    if (num_tasks < 1 || queries_per_task < 1 || d_enc < 1)
        throw ConfigError("num_tasks, queries_per_task and d_enc must be >= 1");
    if (!(cluster_separation >= 0.0) || !std::isfinite(cluster_separation))
        throw ConfigError("cluster_separation must be finite and >= 0");
    if (!(blob_std > 0.0) || !std::isfinite(blob_std))
        throw ConfigError("blob_std must be finite and > 0");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw ConfigError("noise_std must be finite and >= 0");
    if (models.empty()) throw ConfigError("synthetic config needs at least one model");
    for (std::size_t j = 1; j < models.size(); ++j)
        if (models[j].price_in + models[j].price_out <
            models[j - 1].price_in + models[j - 1].price_out)
            throw ConfigError("models must be listed cheapest-first");
    const auto m = static_cast<Eigen::Index>(models.size());
    if (true_acc.rows() != num_tasks || true_acc.cols() != m || true_cost.rows() != num_tasks ||
        true_cost.cols() != m)
        throw ConfigError("truth tables must be num_tasks x num_models");
    if (!true_acc.allFinite() || (true_acc.array() < 0.0).any() ||
        (true_acc.array() > 1.0).any())
        throw ConfigError("true_acc entries must lie in [0,1]");
    if (!true_cost.allFinite() || (true_cost.array() < 0.0).any())
        throw ConfigError("true_cost entries must be >= 0");
}

SyntheticConfig SyntheticConfig::benchmark_default() {
    SyntheticConfig c;
    c.num_tasks = 8;
    c.queries_per_task = 250;
    c.d_enc = 32;
    c.cluster_separation = 6.0;
    c.blob_std = 1.0;
    c.noise_std = 0.12;
    c.noise = NoiseKind::Gaussian;
    c.seed = 42;

    // Six models on an ascending per-query cost ladder; prices are per-token
    // at a nominal 200-in/200-out call so the pool order matches the ladder.
    const std::vector<double> ladder = {1e-5, 2e-5, 6e-5, 2e-4, 6e-4, 1.5e-3};
    const std::vector<double> quality = {0.38, 0.45, 0.55, 0.66, 0.75, 0.86};
    const int m = static_cast<int>(ladder.size());
    for (int j = 0; j < m; ++j)
        c.models.push_back(
            ModelInfo{"model-" + std::to_string(j), ladder[static_cast<std::size_t>(j)] / 400.0,
                      ladder[static_cast<std::size_t>(j)] / 400.0});

    c.true_cost.resize(c.num_tasks, m);
    for (int t = 0; t < c.num_tasks; ++t)
        for (int j = 0; j < m; ++j) c.true_cost(t, j) = ladder[static_cast<std::size_t>(j)];

    // Tasks 0–5: baseline quality plus one boosted specialist and one dented
    // model each, so which model is worth its price flips from task to task.
    // Tasks 6–7 sit at the column mean of the first six: unremarkable in
    // accuracy, atypical only in lacking a specialist of their own.
    const std::vector<int> boosted = {0, 1, 2, 3, 0, 1};
    const std::vector<int> dented = {3, 0, 1, 0, 1, 2};
    c.true_acc.resize(c.num_tasks, m);
    for (int t = 0; t < 6; ++t) {
        for (int j = 0; j < m; ++j) c.true_acc(t, j) = quality[static_cast<std::size_t>(j)];
        c.true_acc(t, boosted[static_cast<std::size_t>(t)]) += 0.36;
        c.true_acc(t, dented[static_cast<std::size_t>(t)]) -= 0.30;
        for (int j = 0; j < m; ++j)
            c.true_acc(t, j) = std::clamp(c.true_acc(t, j), 0.02, 0.97);
    }
    for (int t = 6; t < 8; ++t)
        c.true_acc.row(t) = c.true_acc.topRows(6).colwise().mean();
    return c;
}

std::optional<int> SyntheticTruth::task_index(const std::string& task) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i] == task) return static_cast<int>(i);
    return std::nullopt;
}

double SyntheticTruth::true_mean_objective(int task, int model, double lambda) const {
    if (task < 0 || task >= acc.rows() || model < 0 || model >= acc.cols())
        throw ValidationError(ValidationError::Kind::ValueOutOfRange,
                              "task or model index outside the truth tables");
    return acc(task, model) - lambda * cost(task, model);
}

std::pair<Corpus, SyntheticTruth> synth_generate(const SyntheticConfig& config) {
    config.validate();
    const int m = static_cast<int>(config.models.size());
    Rng rng(config.seed);

    Corpus corpus;
    corpus.pool = ModelPool(config.models);  // cheapest-first order is preserved
    corpus.d_enc = config.d_enc;

    SyntheticTruth truth;
    truth.acc = config.true_acc;
    truth.cost = config.true_cost;
    for (const auto& info : corpus.pool.models()) truth.model_ids.push_back(info.id);

    for (int t = 0; t < config.num_tasks; ++t) {
        const std::string task = "task-" + std::to_string(t);
        truth.tasks.push_back(task);

        // Task center: a random direction scaled to the configured
        // separation. Every task gets the same treatment.
        Eigen::VectorXd dir(config.d_enc);
        for (int k = 0; k < config.d_enc; ++k) dir(k) = rng.normal();
        double nrm = dir.norm();
        if (nrm < 1e-12) {
            dir.setZero();
            dir(0) = 1.0;
            nrm = 1.0;
        }
        const Eigen::VectorXd center = dir / nrm * config.cluster_separation;

        for (int q = 0; q < config.queries_per_task; ++q) {
            QueryRecord rec;
            rec.query_id = task + "-q" + std::to_string(q);
            rec.task = task;
            rec.encoding.resize(config.d_enc);
            for (int k = 0; k < config.d_enc; ++k)
                rec.encoding(k) =
                    static_cast<float>(center(k) + config.blob_std * rng.normal());
            rec.acc.resize(m);
            rec.cost.resize(m);
            for (int j = 0; j < m; ++j) {
                const double ta = config.true_acc(t, j);
                rec.acc(j) = config.noise == NoiseKind::Bernoulli
                                 ? (rng.uniform01() < ta ? 1.0 : 0.0)
                                 : std::clamp(ta + config.noise_std * rng.normal(), 0.0, 1.0);
                rec.cost(j) = std::max(
                    0.0, config.true_cost(t, j) * (1.0 + config.noise_std * rng.normal()));
            }
            corpus.records.push_back(std::move(rec));
        }
    }
    corpus.validate();
    return {std::move(corpus), std::move(truth)};
}

}  // namespace proxroute
