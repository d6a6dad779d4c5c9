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

#include <cstdint>
#include <ostream>
#include <vector>

#include "nstab/core.hpp"
#include "nstab/tensor_nn.hpp"

namespace nstab {

/// Noise-stability settings for one query round.
///
/// `tap` picks where deviations are read. The perturbed parameters are
/// exactly the ones feeding that tap: Feature perturbs theta only, the
/// predictive taps perturb theta and phi.
struct NoiseConfig {
    double zeta = 1e-3;
    int samplings = 30;
    std::uint64_t seed = 0;
    Tap tap = Tap::Predictive;

    ParamScope scope() const {
        return tap == Tap::Feature ? ParamScope::FeatureOnly : ParamScope::All;
    }
    void validate() const;
};

/// One draw of the cycle's noise: K unit directions (rows) and the shared
/// step length zeta * ||theta||_2.
struct PerturbationSet {
    Matrix directions;  // K x n
    double magnitude = 0.0;
    ParamScope scope = ParamScope::All;

    Eigen::Index samplings() const { return directions.rows(); }
    Eigen::Index dimension() const { return directions.cols(); }
};

/// K unit vectors in R^n, each a normalized standard Gaussian draw.
Matrix sample_directions(Eigen::Index n, Eigen::Index samplings, std::uint64_t seed);

/// Samples directions for `cfg` and scales them by the current norm of the
/// scoped parameters.
PerturbationSet make_perturbation_set(const Mlp& model, const NoiseConfig& cfg);

struct DeviationEmbedding {
    Matrix blocks;  // K x d, row k is the k-th deviation block
    Vector vector;  // sqrt(n / K) * concatenated blocks, length K * d
};

/// (f(x; theta + m u_k) - f(x; theta)) / m where m = set.magnitude.
/// The shift is propagated through the layers (see tap_output_shift), so
/// small zeta does not lose precision to cancellation.
Vector deviation_block(const Mlp& model, const Eigen::Ref<const Vector>& x,
                       const PerturbationSet& set, Eigen::Index k, Tap tap);

DeviationEmbedding embedding(const Mlp& model, const Eigen::Ref<const Vector>& x,
                             const PerturbationSet& set, Tap tap);

double uncertainty_score(const DeviationEmbedding& e);

/// Embeddings for a whole pool, one per row (N x K*d).
///
/// Directions are sampled once and shared by every example. Each example's
/// row depends only on (parameters, x, seed): it is unaffected by pool
/// composition, order, or `workers`.
struct PoolEmbeddings {
    Matrix vectors;
    Eigen::Index samplings = 0;
    Eigen::Index block_dim = 0;
    std::size_t n_params = 0;
    double magnitude = 0.0;

    DeviationEmbedding at(Eigen::Index i) const;
    Vector scores() const { return vectors.rowwise().norm(); }
};

PoolEmbeddings pool_embeddings(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                               const NoiseConfig& cfg, unsigned workers = 1);

/// Same as above with an explicit perturbation set, so labeled and unlabeled
/// examples can share one draw.
PoolEmbeddings pool_embeddings(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                               const PerturbationSet& set, Tap tap, unsigned workers = 1);

/// CSV dump: a `#` header line with n, K, d, zeta, seed and tap, then one
/// row per pool example.
void write_embedding_csv(std::ostream& out, const PoolEmbeddings& e, const NoiseConfig& cfg);

}  // namespace nstab
