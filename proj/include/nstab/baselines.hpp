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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "nstab/core.hpp"
#include "nstab/tensor_nn.hpp"

namespace nstab {

enum class StrategyId {
    Random,
    Entropy,
    Coreset,
    Badge,
    BaldMcDropout,
    NoiseStability,
    NoiseStabilityM,
    NoiseStabilityD,
};

inline constexpr std::array kAllStrategies = {
    StrategyId::Random,        StrategyId::Entropy,        StrategyId::Coreset,
    StrategyId::Badge,         StrategyId::BaldMcDropout,  StrategyId::NoiseStability,
    StrategyId::NoiseStabilityM, StrategyId::NoiseStabilityD,
};

std::string to_string(StrategyId id);
/// Throws ConfigError listing the valid names.
StrategyId parse_strategy(std::string_view name);
std::string strategy_names();

IndexList select_random(std::size_t pool_size, std::size_t budget, std::uint64_t seed);

/// Natural-log entropy; 0 log 0 = 0.
double entropy(const Eigen::Ref<const RowVector>& p);

/// Top-`budget` rows by entropy. Rows must be distributions (sum 1 +- 1e-9).
IndexList select_entropy(const Eigen::Ref<const Matrix>& probs, std::size_t budget);

/// Greedy k-center on raw features, started from the labeled features.
IndexList select_coreset(const Eigen::Ref<const Matrix>& features,
                         const Eigen::Ref<const Matrix>& labeled_features, std::size_t budget,
                         std::uint64_t seed);

/// Last-layer cross-entropy gradient under the pseudo-label argmax(p):
/// block i is (p_i - [i == argmax p]) * z.
Vector badge_embedding(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& p);

/// One BADGE row per example (features z and probabilities p row-aligned).
Matrix badge_embeddings(const Eigen::Ref<const Matrix>& features,
                        const Eigen::Ref<const Matrix>& probs);

/// H(mean_t p_t) - mean_t H(p_t) per pool row, from `mc_samples` dropout
/// forward passes.
Vector bald_scores(const Mlp& model, const Eigen::Ref<const Matrix>& pool, int mc_samples,
                   std::uint64_t seed);

IndexList select_bald_mcdropout(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                                int mc_samples, std::size_t budget, std::uint64_t seed);

/// Indices of the `budget` largest scores, descending, ties to the lowest index.
IndexList top_scores(const Eigen::Ref<const Vector>& scores, std::size_t budget);

}  // namespace nstab
