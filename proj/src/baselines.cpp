// Copyright 2026-present the noisestab project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nstab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nstab/selection.hpp"

namespace nstab {

std::string to_string(StrategyId id) {
    switch (id) {
        case StrategyId::Random: return "random";
        case StrategyId::Entropy: return "entropy";
        case StrategyId::Coreset: return "coreset";
        case StrategyId::Badge: return "badge";
        case StrategyId::BaldMcDropout: return "bald_mcdropout";
        case StrategyId::NoiseStability: return "noise_stability";
        case StrategyId::NoiseStabilityM: return "noise_stability_m";
        case StrategyId::NoiseStabilityD: return "noise_stability_d";
    }
    return "?";
}

std::string strategy_names() {
    std::string out;
    for (auto id : kAllStrategies) {
        if (!out.empty()) out += ", ";
        out += to_string(id);
    }
    return out;
}

StrategyId parse_strategy(std::string_view name) {
    for (auto id : kAllStrategies) {
        if (to_string(id) == name) return id;
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "'; valid: " + strategy_names());
}

IndexList select_random(std::size_t pool_size, std::size_t budget, std::uint64_t seed) {
    if (budget > pool_size) {
        throw InvalidArgument("select_random: budget " + std::to_string(budget) +
                              " exceeds pool size " + std::to_string(pool_size));
    }
    IndexList idx(pool_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first `budget` slots are a uniform sample.
    for (std::size_t i = 0; i < budget; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(budget);
    return idx;
}

double entropy(const Eigen::Ref<const RowVector>& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return h;
}

IndexList top_scores(const Eigen::Ref<const Vector>& scores, std::size_t budget) {
    IndexList order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
    });
    order.resize(std::min(budget, order.size()));
    return order;
}

IndexList select_entropy(const Eigen::Ref<const Matrix>& probs, std::size_t budget) {
    Vector h(probs.rows());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const auto row = probs.row(r);
        if ((row.array() < 0.0).any() || !row.allFinite() || std::abs(row.sum() - 1.0) > 1e-9) {
            throw DataError("select_entropy: row " + std::to_string(r) + " is not a distribution");
        }
        h[r] = entropy(row);
    }
    return top_scores(h, budget);
}

IndexList select_coreset(const Eigen::Ref<const Matrix>& features,
                         const Eigen::Ref<const Matrix>& labeled_features, std::size_t budget,
                         std::uint64_t seed) {
    SelectionRequest req(features);
    req.budget = budget;
    req.seed = seed;
    req.method = SelectMethod::KCenter;
    if (labeled_features.rows() > 0) req.seeds_from_labeled.emplace(labeled_features);
    return greedy_k_center(req);
}

Vector badge_embedding(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& p) {
    const Eigen::Index yhat = argmax_first(p);
    const Eigen::Index d = z.size();
    Vector out(p.size() * d);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        out.segment(i * d, d) = (p[i] - (i == yhat ? 1.0 : 0.0)) * z;
    }
    return out;
}

Matrix badge_embeddings(const Eigen::Ref<const Matrix>& features,
                        const Eigen::Ref<const Matrix>& probs) {
    if (features.rows() != probs.rows()) {
        throw DimensionError("badge_embeddings: features and probabilities differ in rows");
    }
    Matrix out(features.rows(), features.cols() * probs.cols());
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        out.row(r) = badge_embedding(features.row(r).transpose(), probs.row(r).transpose()).transpose();
    }
    return out;
}

Vector bald_scores(const Mlp& model, const Eigen::Ref<const Matrix>& pool, int mc_samples,
                   std::uint64_t seed) {
    if (!model.has_dropout()) throw InvalidArgument("bald: model has no dropout layer");
    if (mc_samples < 2) throw InvalidArgument("bald: need at least 2 MC samples");
    if (!model.ends_with_softmax()) throw InvalidArgument("bald: model must output probabilities");
    Rng rng(seed);
    Matrix mean_p = Matrix::Zero(pool.rows(), model.output_dim());
    Vector mean_h = Vector::Zero(pool.rows());
    for (int t = 0; t < mc_samples; ++t) {
        const Matrix p = forward(model, pool, Mode::Train, &rng).output;
        mean_p += p;
        for (Eigen::Index r = 0; r < p.rows(); ++r) mean_h[r] += entropy(p.row(r));
    }
    mean_p /= static_cast<double>(mc_samples);
    mean_h /= static_cast<double>(mc_samples);
    Vector scores(pool.rows());
    for (Eigen::Index r = 0; r < pool.rows(); ++r) scores[r] = entropy(mean_p.row(r)) - mean_h[r];
    return scores;
}

IndexList select_bald_mcdropout(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                                int mc_samples, std::size_t budget, std::uint64_t seed) {
    return top_scores(bald_scores(model, pool, mc_samples, seed), budget);
}

}  // namespace nstab
