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

#include "nstab/noise_stability.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <thread>

namespace nstab {

namespace {

const char* tap_name(Tap tap) {
    switch (tap) {
        case Tap::Feature: return "feature";
        case Tap::Predictive: return "predictive";
        case Tap::Logits: return "logits";
    }
    return "?";
}

}  // namespace

void NoiseConfig::validate() const {
    if (!(zeta > 0.0)) throw InvalidArgument("NoiseConfig: zeta must be > 0");
    if (samplings < 1) throw InvalidArgument("NoiseConfig: samplings must be >= 1");
}

Matrix sample_directions(Eigen::Index n, Eigen::Index samplings, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("sample_directions: dimension must be >= 1");
    if (samplings < 1) throw InvalidArgument("sample_directions: samplings must be >= 1");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix u(samplings, n);
    for (Eigen::Index k = 0; k < samplings; ++k) {
        double norm2 = 0.0;
        do {
            for (Eigen::Index j = 0; j < n; ++j) u(k, j) = normal(rng);
            norm2 = u.row(k).squaredNorm();
        } while (norm2 == 0.0);
        u.row(k) /= std::sqrt(norm2);
    }
    return u;
}

PerturbationSet make_perturbation_set(const Mlp& model, const NoiseConfig& cfg) {
    cfg.validate();
    const ParamScope scope = cfg.scope();
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    PerturbationSet set;
    set.scope = scope;
    set.directions = sample_directions(n, cfg.samplings, cfg.seed);
    set.magnitude = cfg.zeta * flatten_params(model, scope).norm();
    if (!(set.magnitude > 0.0)) {
        throw InvalidState("make_perturbation_set: scoped parameters have zero norm");
    }
    return set;
}

Vector deviation_block(const Mlp& model, const Eigen::Ref<const Vector>& x,
                       const PerturbationSet& set, Eigen::Index k, Tap tap) {
    const Vector delta = set.magnitude * set.directions.row(k).transpose();
    return tap_output_shift(model, x, delta, set.scope, tap) / set.magnitude;
}

DeviationEmbedding embedding(const Mlp& model, const Eigen::Ref<const Vector>& x,
                             const PerturbationSet& set, Tap tap) {
    const Eigen::Index k_count = set.samplings();
    DeviationEmbedding e;
    for (Eigen::Index k = 0; k < k_count; ++k) {
        Vector block = deviation_block(model, x, set, k, tap);
        if (k == 0) e.blocks.resize(k_count, block.size());
        e.blocks.row(k) = block.transpose();
    }
    const double scale =
        std::sqrt(static_cast<double>(set.dimension()) / static_cast<double>(k_count));
    e.vector = scale * Eigen::Map<const Vector>(e.blocks.data(), e.blocks.size());
    return e;
}

double uncertainty_score(const DeviationEmbedding& e) { return e.vector.norm(); }

DeviationEmbedding PoolEmbeddings::at(Eigen::Index i) const {
    DeviationEmbedding e;
    e.vector = vectors.row(i).transpose();
    const double scale = std::sqrt(static_cast<double>(n_params) / static_cast<double>(samplings));
    e.blocks = Eigen::Map<const Matrix>(e.vector.data(), samplings, block_dim) / scale;
    return e;
}

PoolEmbeddings pool_embeddings(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                               const NoiseConfig& cfg, unsigned workers) {
    return pool_embeddings(model, pool, make_perturbation_set(model, cfg), cfg.tap, workers);
}

PoolEmbeddings pool_embeddings(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                               const PerturbationSet& set, Tap tap, unsigned workers) {
    const Eigen::Index rows = pool.rows();
    const Eigen::Index k_count = set.samplings();
    const Eigen::Index d = model.width_at(model.tap_boundary(tap));
    if (static_cast<std::size_t>(set.dimension()) != model.n_params(set.scope)) {
        throw DimensionError("pool_embeddings: perturbation dimension does not match the model");
    }
    if (pool.rows() > 0 && pool.cols() != model.input_dim()) {
        throw DimensionError("pool_embeddings: pool has " + std::to_string(pool.cols()) +
                             " columns, model expects " + std::to_string(model.input_dim()));
    }

    PoolEmbeddings out;
    out.samplings = k_count;
    out.block_dim = d;
    out.n_params = model.n_params(set.scope);
    out.magnitude = set.magnitude;
    out.vectors.resize(rows, k_count * d);
    if (rows == 0) return out;

    const double scale = std::sqrt(static_cast<double>(out.n_params) / static_cast<double>(k_count));
    // Worker w owns directions k = w, w + W, ...; columns never overlap.
    auto work = [&](unsigned w, unsigned stride) {
        for (Eigen::Index k = w; k < k_count; k += stride) {
            const Vector delta = set.magnitude * set.directions.row(k).transpose();
            for (Eigen::Index i = 0; i < rows; ++i) {
                const Vector shift =
                    tap_output_shift(model, Vector(pool.row(i).transpose()), delta, set.scope, tap);
                out.vectors.block(i, k * d, 1, d) = scale * (shift / set.magnitude).transpose();
            }
        }
    };

    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(k_count)));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
        for (auto& t : threads) t.join();
    }
    return out;
}

void write_embedding_csv(std::ostream& out, const PoolEmbeddings& e, const NoiseConfig& cfg) {
    out << "# n=" << e.n_params << ",K=" << e.samplings << ",d=" << e.block_dim
        << ",zeta=" << std::setprecision(17) << cfg.zeta << ",seed=" << cfg.seed
        << ",tap=" << tap_name(cfg.tap) << '\n';
    for (Eigen::Index i = 0; i < e.vectors.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.vectors.cols(); ++j) {
            if (j) out << ',';
            out << e.vectors(i, j);
        }
        out << '\n';
    }
}

}  // namespace nstab
