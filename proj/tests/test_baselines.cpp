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
#include <cmath>
#include <set>

#include "nstab/baselines.hpp"
#include "nstab/selection.hpp"
#include "support.hpp"

using namespace nstab;
using nstab::test::gaussian_matrix;
using nstab::test::gaussian_vector;

namespace {

Matrix random_distributions(Eigen::Index n, Eigen::Index c, std::uint64_t seed) {
    Matrix p = gaussian_matrix(n, c, seed).array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
    return p;
}

Mlp dropout_classifier(double rate, std::uint64_t seed) {
    Mlp m = Mlp::builder(3).linear(16).relu().dropout(rate).tap().linear(4).softmax().build();
    init_params(m, seed);
    return m;
}

}  // namespace

TEST_CASE("random selection") {
    const IndexList all = select_random(7, 7, 1);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 7);
    CHECK(select_random(100, 10, 5) == select_random(100, 10, 5));
    CHECK(select_random(10, 0, 5).empty());
    CHECK_THROWS_AS(select_random(3, 4, 1), InvalidArgument);

    const int draws = 10000;
    std::vector<int> counts(10, 0);
    for (int s = 0; s < draws; ++s) ++counts[select_random(10, 1, derive_seed(42, s)).at(0)];
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int c : counts) CHECK(std::abs(c - draws * 0.1) < 3.0 * sigma);
}

TEST_CASE("entropy scores") {
    CHECK(entropy((RowVector(2) << 0.5, 0.5).finished()) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(entropy((RowVector(3) << 0.0, 1.0, 0.0).finished()) == 0.0);
    CHECK(entropy(RowVector::Constant(5, 0.2)) == doctest::Approx(std::log(5.0)).epsilon(1e-14));

    Matrix p(3, 3);
    p << 0, 1, 0,
         1.0 / 3, 1.0 / 3, 1.0 / 3,
         0.7, 0.2, 0.1;
    CHECK(select_entropy(p, 3) == IndexList{1, 2, 0});

    Matrix bad = p;
    bad(2, 0) = 0.8;
    CHECK_THROWS_AS(select_entropy(bad, 1), DataError);
    Matrix neg(1, 2);
    neg << 1.5, -0.5;
    CHECK_THROWS_AS(select_entropy(neg, 1), DataError);
}

TEST_CASE("entropy selection ignores per-row label permutation") {
    Matrix p = random_distributions(40, 5, 3);
    const IndexList base = select_entropy(p, 10);
    Rng rng(9);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        RowVector row = p.row(i);
        std::shuffle(row.data(), row.data() + row.size(), rng);
        p.row(i) = row;
    }
    CHECK(select_entropy(p, 10) == base);
}

TEST_CASE("coreset on features") {
    Matrix f(4, 2);
    f << 1, 0,
         0, 3,
         -2, 0,
         0.5, 0.5;
    CHECK(select_coreset(f, Matrix(0, 2), 1, 0) == IndexList{1});

    Matrix labeled(1, 2);
    labeled << 0.5, 0.5;
    const IndexList order = select_coreset(f, labeled, 4, 0);
    CHECK(order.back() == 3);

    const Matrix pool = gaussian_matrix(60, 5, 4);
    const Matrix lab = gaussian_matrix(6, 5, 5);
    SelectionRequest req(pool);
    req.budget = 12;
    req.seeds_from_labeled.emplace(lab);
    CHECK(select_coreset(pool, lab, 12, 0) == greedy_k_center(req));
}

TEST_CASE("badge embedding") {
    const Vector z = (Vector(3) << 1.0, -2.0, 0.5).finished();
    SUBCASE("confident prediction gives a zero embedding") {
        const Vector e = badge_embedding(z, (Vector(3) << 0.0, 1.0, 0.0).finished());
        CHECK(e.size() == 9);
        CHECK(e.isZero(0.0));
    }
    SUBCASE("uniform probabilities") {
        const Vector e = badge_embedding(z, Vector::Constant(4, 0.25));
        // argmax ties to class 0
        CHECK(e.segment(0, 3).norm() == doctest::Approx(0.75 * z.norm()).epsilon(1e-14));
        for (int i = 1; i < 4; ++i) {
            CHECK(e.segment(3 * i, 3).norm() == doctest::Approx(0.25 * z.norm()).epsilon(1e-14));
        }
    }
    SUBCASE("norm identity") {
        const Matrix p = random_distributions(30, 4, 6);
        const Matrix feats = gaussian_matrix(30, 3, 7);
        const Matrix e = badge_embeddings(feats, p);
        for (Eigen::Index r = 0; r < 30; ++r) {
            RowVector g = p.row(r);
            g[argmax_first(g)] -= 1.0;
            CHECK(e.row(r).norm() == doctest::Approx(feats.row(r).norm() * g.norm()).epsilon(1e-12));
        }
    }
    SUBCASE("matches the last-layer cross-entropy gradient") {
        Mlp m = Mlp::builder(3).linear(5).relu().tap().linear(4).softmax().build();
        init_params(m, 11);
        const Matrix x = gaussian_matrix(20, 3, 12);
        const ForwardResult fr = forward(m, x, Mode::Eval);
        const std::size_t head = m.param_offset(2);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            Matrix y = Matrix::Zero(1, 4);
            y(0, argmax_first(fr.output.row(r))) = 1.0;
            const LossGradient lg = loss_and_gradient(m, x.row(r), y, Loss::CrossEntropy, Mode::Eval);
            const Vector grad_w = lg.grad.segment(static_cast<Eigen::Index>(head), 4 * 5);
            const Vector e = badge_embedding(fr.feature.row(r).transpose(), fr.output.row(r).transpose());
            CHECK((e - grad_w).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    CHECK_THROWS_AS(badge_embeddings(Matrix::Zero(2, 3), Matrix::Constant(3, 2, 0.5)), DimensionError);
}

TEST_CASE("bald with MC dropout") {
    const Matrix pool = gaussian_matrix(25, 3, 1);
    SUBCASE("zero dropout rate gives zero scores") {
        const Vector s = bald_scores(dropout_classifier(0.0, 2), pool, 10, 3);
        CHECK(s.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("two opposite one-hot samples score ln 2") {
        const RowVector p1 = (RowVector(2) << 1.0, 0.0).finished();
        const RowVector p2 = (RowVector(2) << 0.0, 1.0).finished();
        const double score = entropy(0.5 * (p1 + p2)) - 0.5 * (entropy(p1) + entropy(p2));
        CHECK(score == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    SUBCASE("scores are nonnegative and seeded") {
        const Mlp m = dropout_classifier(0.5, 4);
        const Vector s = bald_scores(m, pool, 50, 5);
        CHECK(s.minCoeff() >= -1e-12);
        CHECK(s.maxCoeff() > 0.0);
        CHECK(s.maxCoeff() <= std::log(4.0) + 1e-12);
        CHECK(nstab::test::bit_equal(s, bald_scores(m, pool, 50, 5)));
        const IndexList pick = select_bald_mcdropout(m, pool, 50, 5, 5);
        CHECK(pick == top_scores(s, 5));
    }
    SUBCASE("invalid models") {
        Mlp plain = Mlp::builder(3).linear(4).softmax().build();
        init_params(plain, 1);
        CHECK_THROWS_AS(bald_scores(plain, pool, 10, 1), InvalidArgument);
        CHECK_THROWS_AS(bald_scores(dropout_classifier(0.5, 1), pool, 1, 1), InvalidArgument);
    }
}

TEST_CASE("top scores order and ties") {
    const Vector s = (Vector(5) << 0.1, 0.9, 0.5, 0.9, -1.0).finished();
    CHECK(top_scores(s, 3) == IndexList{1, 3, 2});
    CHECK(top_scores(s, 0).empty());
}

TEST_CASE("strategy names") {
    for (StrategyId id : kAllStrategies) CHECK(parse_strategy(to_string(id)) == id);
    CHECK(to_string(StrategyId::BaldMcDropout) == "bald_mcdropout");
    CHECK(to_string(StrategyId::NoiseStabilityD) == "noise_stability_d");
    try {
        parse_strategy("vaal");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("noise_stability_m") != std::string::npos);
    }
}
