#pragma once

// Shared builders for the test suite: small pools, random corpora, and a
// few canned reference sets.

#include <string>
#include <utility>
#include <vector>

#include "proxroute/core.hpp"
#include "proxroute/data.hpp"
#include "proxroute/reference.hpp"
#include "proxroute/rng.hpp"

namespace testutil {

using namespace proxroute;

inline ModelPool two_model_pool() {
    return ModelPool({ModelInfo{"cheap", 1e-8, 2e-8}, ModelInfo{"pricey", 1e-6, 2e-6}});
}

inline QueryRecord make_record(std::string id, std::string task, std::vector<float> enc,
                               std::vector<double> acc, std::vector<double> cost) {
    QueryRecord rec;
    rec.query_id = std::move(id);
    rec.task = std::move(task);
    rec.encoding = Eigen::Map<const Encoding>(enc.data(), static_cast<Eigen::Index>(enc.size()));
    rec.acc = Eigen::Map<const Eigen::VectorXd>(acc.data(), static_cast<Eigen::Index>(acc.size()));
    rec.cost =
        Eigen::Map<const Eigen::VectorXd>(cost.data(), static_cast<Eigen::Index>(cost.size()));
    return rec;
}

/// n records over `models` models with random positive-ish encodings and
/// uniform observations; encodings keep entries in [0.1, 1.1) so cosine
/// distance is always defined.
inline Corpus random_corpus(int n, int d_enc, int models, std::uint64_t seed) {
    Rng rng(seed);
    Corpus corpus;
    std::vector<ModelInfo> infos;
    for (int m = 0; m < models; ++m)
        infos.push_back(ModelInfo{"m" + std::to_string(m), 1e-8 * (m + 1), 2e-8 * (m + 1)});
    corpus.pool = ModelPool(std::move(infos));
    corpus.d_enc = d_enc;
    for (int i = 0; i < n; ++i) {
        QueryRecord rec;
        rec.query_id = "q" + std::to_string(i);
        rec.task = "task-" + std::to_string(i % 3);
        rec.encoding.resize(d_enc);
        for (int k = 0; k < d_enc; ++k)
            rec.encoding(k) = static_cast<float>(0.1 + rng.uniform01());
        rec.acc.resize(models);
        rec.cost.resize(models);
        for (int m = 0; m < models; ++m) {
            rec.acc(m) = rng.uniform01();
            rec.cost(m) = rng.uniform01() * 1e-4;
        }
        corpus.records.push_back(std::move(rec));
    }
    corpus.validate();
    return corpus;
}

inline Encoding random_encoding(int d_enc, Rng& rng) {
    Encoding x(d_enc);
    for (int k = 0; k < d_enc; ++k) x(k) = static_cast<float>(0.1 + rng.uniform01());
    return x;
}

}  // namespace testutil
