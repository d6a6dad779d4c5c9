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

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "nstab/noise_stability.hpp"
#include "support.hpp"

using namespace nstab;
using nstab::test::bit_equal;
using nstab::test::gaussian_matrix;
using nstab::test::gaussian_vector;

namespace {

Mlp linear_scalar(Eigen::Index dim, std::uint64_t seed) {
    Mlp m = Mlp::builder(dim).linear(1, false).build();
    m.params() = gaussian_vector(dim, seed);
    return m;
}

Mlp small_classifier(std::uint64_t seed) {
    Mlp m = Mlp::builder(2).linear(8).relu().tap().linear(3).softmax().build();
    init_params(m, seed);
    return m;
}

std::vector<double> ranks(const Vector& v) {
    std::vector<std::size_t> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return v[static_cast<Eigen::Index>(a)] < v[static_cast<Eigen::Index>(b)];
    });
    std::vector<double> r(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
    return r;
}

double spearman(const Vector& a, const Vector& b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(ra.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST_CASE("directions are unit vectors and seeded") {
    const Matrix u = sample_directions(37, 200, 5);
    for (Eigen::Index k = 0; k < u.rows(); ++k) CHECK(std::abs(u.row(k).norm() - 1.0) < 1e-12);
    CHECK((sample_directions(37, 200, 5) == u));
    CHECK_FALSE((sample_directions(37, 200, 6) == u));
    CHECK_THROWS_AS(sample_directions(0, 3, 1), InvalidArgument);
    CHECK_THROWS_AS(sample_directions(3, 0, 1), InvalidArgument);
}

TEST_CASE("empirical second moment approaches I/n") {
    const Eigen::Index n = 10;
    const Matrix u = sample_directions(n, 100000, 17);
    const Matrix second = u.transpose() * u / static_cast<double>(u.rows());
    const Matrix target = Matrix::Identity(n, n) / static_cast<double>(n);
    CHECK((second - target).norm() / target.norm() < 0.1);
    CHECK(std::abs(second.trace() - 1.0) < 1e-12);
}

TEST_CASE("noise config invariants") {
    NoiseConfig cfg;
    CHECK(cfg.zeta == 1e-3);
    CHECK(cfg.samplings == 30);
    CHECK(cfg.scope() == ParamScope::All);
    cfg.tap = Tap::Feature;
    CHECK(cfg.scope() == ParamScope::FeatureOnly);
    cfg.zeta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.zeta = 1e-3;
    cfg.samplings = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("perturbation magnitude is zeta times the scoped parameter norm") {
    const Mlp m = small_classifier(3);
    NoiseConfig cfg;
    cfg.seed = 4;
    const PerturbationSet all = make_perturbation_set(m, cfg);
    CHECK(all.dimension() == static_cast<Eigen::Index>(m.n_total_params()));
    CHECK(all.magnitude == doctest::Approx(1e-3 * m.params().norm()).epsilon(1e-14));
    cfg.tap = Tap::Feature;
    const PerturbationSet feat = make_perturbation_set(m, cfg);
    CHECK(feat.dimension() == static_cast<Eigen::Index>(m.n_feature_params()));
    CHECK(feat.magnitude ==
          doctest::Approx(1e-3 * m.params().head(static_cast<Eigen::Index>(m.n_feature_params())).norm()).epsilon(1e-14));

    Mlp zero = Mlp::builder(2).linear(1).build();
    CHECK_THROWS_AS(make_perturbation_set(zero, cfg), InvalidState);
}

TEST_CASE("linear model deviation block is u.x for every zeta") {
    Mlp m = linear_scalar(6, 1);
    const Vector x = gaussian_vector(6, 2);
    for (double zeta : {1e-6, 1e-3, 1.0}) {
        NoiseConfig cfg;
        cfg.zeta = zeta;
        cfg.samplings = 20;
        cfg.seed = 3;
        const PerturbationSet set = make_perturbation_set(m, cfg);
        for (Eigen::Index k = 0; k < set.samplings(); ++k) {
            const Vector b = deviation_block(m, x, set, k, Tap::Predictive);
            REQUIRE(b.size() == 1);
            CHECK(std::abs(b[0] - set.directions.row(k).dot(x.transpose())) < 1e-10);
        }
    }
}

TEST_CASE("deviation block is deterministic and leaves parameters untouched") {
    Mlp m = small_classifier(5);
    const Vector before = m.params();
    NoiseConfig cfg;
    cfg.seed = 9;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const Vector x = gaussian_vector(2, 6);
    const Vector a = deviation_block(m, x, set, 3, Tap::Predictive);
    const Vector b = deviation_block(m, x, set, 3, Tap::Predictive);
    CHECK(bit_equal(a, b));
    CHECK(bit_equal(m.params(), before));
    CHECK_FALSE(m.perturbed());
}

TEST_CASE("single-block embedding is sqrt(n) times the block") {
    Mlp m = Mlp::builder(3).linear(2).build();
    init_params(m, 1);
    NoiseConfig cfg;
    cfg.samplings = 1;
    cfg.tap = Tap::Feature;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const Vector x = gaussian_vector(3, 2);
    const DeviationEmbedding e = embedding(m, x, set, Tap::Feature);
    const double n = static_cast<double>(m.n_feature_params());
    CHECK(e.vector.size() == 2);
    CHECK((e.vector - std::sqrt(n) * e.blocks.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("embedding length is K times d") {
    Mlp m = Mlp::builder(4).linear(10).build();
    init_params(m, 2);
    NoiseConfig cfg;
    cfg.tap = Tap::Feature;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const DeviationEmbedding e = embedding(m, gaussian_vector(4, 3), set, Tap::Feature);
    CHECK(e.vector.size() == 300);
    CHECK(e.blocks.rows() == 30);
    CHECK(e.blocks.cols() == 10);
}

TEST_CASE("linear-model embedding entries are sqrt(n/K) u.x") {
    Mlp m = linear_scalar(8, 4);
    NoiseConfig cfg;
    cfg.samplings = 25;
    cfg.seed = 1;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const Vector x = gaussian_vector(8, 5);
    const DeviationEmbedding e = embedding(m, x, set, Tap::Predictive);
    const double scale = std::sqrt(8.0 / 25.0);
    for (Eigen::Index k = 0; k < 25; ++k) {
        CHECK(std::abs(e.vector[k] - scale * set.directions.row(k).dot(x.transpose())) < 1e-10);
    }
}

TEST_CASE("uncertainty score is the embedding norm") {
    DeviationEmbedding zero;
    zero.vector = Vector::Zero(12);
    CHECK(uncertainty_score(zero) == 0.0);

    DeviationEmbedding e;
    e.vector = gaussian_vector(12, 1);
    DeviationEmbedding scaled = e;
    scaled.vector *= -3.0;
    CHECK(uncertainty_score(scaled) == doctest::Approx(3.0 * uncertainty_score(e)).epsilon(1e-14));

    Mlp m = linear_scalar(5, 7);
    NoiseConfig cfg;
    cfg.seed = 8;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const Vector x = gaussian_vector(5, 9);
    const double s1 = uncertainty_score(embedding(m, x, set, Tap::Predictive));
    const double s2 = uncertainty_score(embedding(m, 2.0 * x, set, Tap::Predictive));
    CHECK(std::abs(s2 - 2.0 * s1) < 1e-10);
}

TEST_CASE("mean squared embedding norm matches the Jacobian Frobenius norm") {
    Mlp m = small_classifier(12);
    const Vector x = (Vector(2) << 0.5, -1.0).finished();
    NoiseConfig cfg;
    cfg.zeta = 1e-4;
    cfg.samplings = 5000;
    cfg.seed = 13;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const double projected = embedding(m, x, set, Tap::Predictive).vector.squaredNorm();
    const double exact = jacobian(m, x, Tap::Predictive, ParamScope::All).squaredNorm();
    CHECK(std::abs(projected - exact) / exact < 0.05);
}

TEST_CASE("pool embeddings share noise across examples") {
    const Mlp m = small_classifier(1);
    Matrix pool = gaussian_matrix(6, 2, 2);
    pool.row(4) = pool.row(1);
    NoiseConfig cfg;
    cfg.seed = 3;
    const PoolEmbeddings e = pool_embeddings(m, pool, cfg);
    CHECK(e.vectors.rows() == 6);
    CHECK(e.vectors.cols() == 30 * 3);
    CHECK((e.vectors.row(4) == e.vectors.row(1)));

    // one row alone yields the same embedding as inside the pool
    const PoolEmbeddings single = pool_embeddings(m, pool.row(2), cfg);
    CHECK((single.vectors.row(0) == e.vectors.row(2)));

    // matches the per-example embedding built from the same set
    Mlp copy = m;
    const PerturbationSet set = make_perturbation_set(m, cfg);
    const DeviationEmbedding direct = embedding(copy, pool.row(3).transpose(), set, Tap::Predictive);
    CHECK((direct.vector.transpose() - e.vectors.row(3)).cwiseAbs().maxCoeff() < 1e-15);
    const DeviationEmbedding back = e.at(3);
    CHECK(back.blocks.rows() == 30);
    CHECK((back.vector.transpose() == e.vectors.row(3)));
}

TEST_CASE("pool embeddings are order-equivariant and worker-independent") {
    const Mlp m = small_classifier(2);
    const Matrix pool = gaussian_matrix(17, 2, 4);
    NoiseConfig cfg;
    cfg.seed = 5;
    const Vector before = m.params();
    const PoolEmbeddings seq = pool_embeddings(m, pool, cfg, 1);
    CHECK(bit_equal(m.params(), before));
    for (unsigned w : {2u, 3u, 8u}) {
        const PoolEmbeddings par = pool_embeddings(m, pool, cfg, w);
        CHECK((par.vectors == seq.vectors));
    }
    std::vector<Eigen::Index> perm(17);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 5, perm.end());
    Matrix shuffled(17, 2);
    for (Eigen::Index i = 0; i < 17; ++i) shuffled.row(i) = pool.row(perm[static_cast<std::size_t>(i)]);
    const PoolEmbeddings sh = pool_embeddings(m, shuffled, cfg);
    for (Eigen::Index i = 0; i < 17; ++i) CHECK((sh.vectors.row(i) == seq.vectors.row(perm[static_cast<std::size_t>(i)])));
}

TEST_CASE("empty pool yields no embeddings") {
    const Mlp m = small_classifier(3);
    const PoolEmbeddings e = pool_embeddings(m, Matrix(0, 2), NoiseConfig{});
    CHECK(e.vectors.rows() == 0);
    CHECK(e.scores().size() == 0);
    CHECK_THROWS_AS(pool_embeddings(m, Matrix::Zero(2, 5), NoiseConfig{}), DimensionError);
}

TEST_CASE("scores are rank-stable between zeta 1e-4 and 1e-2 on a trained model") {
    Mlp m = small_classifier(21);
    Matrix x = gaussian_matrix(120, 2, 22, 0.8);
    Matrix y = Matrix::Zero(120, 3);
    const double cx[3] = {-2.0, 2.0, 0.0};
    const double cy[3] = {0.0, 0.0, 2.5};
    for (int i = 0; i < 120; ++i) {
        x(i, 0) += cx[i % 3];
        x(i, 1) += cy[i % 3];
        y(i, i % 3) = 1.0;
    }
    TrainConfig tc;
    tc.optimizer = AdamConfig{0.02};
    tc.epochs = 60;
    train(m, x, y, tc);

    const Matrix pool = gaussian_matrix(200, 2, 23, 2.0);
    NoiseConfig lo;
    lo.zeta = 1e-4;
    lo.seed = 24;
    NoiseConfig hi = lo;
    hi.zeta = 1e-2;
    const Vector s_lo = pool_embeddings(m, pool, lo).scores();
    const Vector s_hi = pool_embeddings(m, pool, hi).scores();
    CHECK(spearman(s_lo, s_hi) > 0.9);
}

TEST_CASE("embedding csv carries the header and one row per example") {
    const Mlp m = small_classifier(4);
    NoiseConfig cfg;
    cfg.samplings = 2;
    cfg.seed = 77;
    const PoolEmbeddings e = pool_embeddings(m, gaussian_matrix(3, 2, 5), cfg);
    std::ostringstream out;
    write_embedding_csv(out, e, cfg);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# ", 0) == 0);
    for (const char* key : {"n=51", "K=2", "d=3", "zeta=", "seed=77", "tap=predictive"}) {
        CHECK(line.find(key) != std::string::npos);
    }
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(rows == 3);
}
