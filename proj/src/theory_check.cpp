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

#include "nstab/theory_check.hpp"

#include <algorithm>
#include <cmath>

#include "nstab/noise_stability.hpp"

namespace nstab {

namespace {

Vector gaussian_vector(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

// Q = sqrt(n/K) U, rows are scaled unit directions.
Matrix projection(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
    return std::sqrt(static_cast<double>(n) / static_cast<double>(k)) * sample_directions(n, k, seed);
}

bool magnitude_violated(double projected, double original, double eps) {
    return std::abs(projected - original) > eps * original;
}

struct NetworkPair {
    DeviationEmbedding ei, ej;
    Matrix ji, jj;
};

NetworkPair embed_pair(const Mlp& model, const Eigen::Ref<const Vector>& xi,
                       const Eigen::Ref<const Vector>& xj, Eigen::Index samplings,
                       std::uint64_t seed, const NetworkCheckOptions& opt) {
    NoiseConfig cfg;
    cfg.zeta = opt.zeta;
    cfg.samplings = static_cast<int>(samplings);
    cfg.seed = seed;
    cfg.tap = opt.tap;
    const PerturbationSet set = make_perturbation_set(model, cfg);
    NetworkPair p;
    p.ei = embedding(model, xi, set, opt.tap);
    p.ej = embedding(model, xj, set, opt.tap);
    p.ji = jacobian(model, xi, opt.tap, cfg.scope());
    p.jj = jacobian(model, xj, opt.tap, cfg.scope());
    return p;
}

CheckReport base_report(std::string name, long trials, std::uint64_t seed, double threshold) {
    CheckReport r;
    r.name = std::move(name);
    r.trials = trials;
    r.seed = seed;
    r.threshold = threshold;
    return r;
}

const char* tap_label(Tap tap) {
    switch (tap) {
        case Tap::Feature: return "feature";
        case Tap::Predictive: return "predictive";
        case Tap::Logits: return "logits";
    }
    return "?";
}

}  // namespace

nlohmann::json CheckReport::to_json() const {
    return {{"name", name},           {"trials", trials},   {"statistic", statistic},
            {"threshold", threshold}, {"passed", passed},   {"seed", seed},
            {"degenerate", degenerate}, {"details", details}};
}

std::string to_string(ConcentrationKind k) {
    switch (k) {
        case ConcentrationKind::Magnitude: return "magnitude";
        case ConcentrationKind::Distance: return "distance";
        case ConcentrationKind::InnerProduct: return "inner_product";
    }
    return "?";
}

CheckReport check_second_moment(Eigen::Index n, Eigen::Index samplings, std::uint64_t seed,
                                double threshold) {
    if (n < 2) throw InvalidArgument("check_second_moment: n must be >= 2");
    const Matrix u = sample_directions(n, samplings, seed);
    const Matrix second = (u.transpose() * u) / static_cast<double>(samplings);
    const Matrix target = Matrix::Identity(n, n) / static_cast<double>(n);
    CheckReport r = base_report("second_moment", static_cast<long>(samplings), seed, threshold);
    r.statistic = (second - target).norm() / target.norm();
    r.passed = r.statistic < threshold;
    r.details = {{"n", n}, {"K", samplings}, {"trace", second.trace()}};
    return r;
}

CheckReport check_jacobian_norm(const Mlp& model, const Eigen::Ref<const Vector>& x,
                                Eigen::Index samplings, std::uint64_t seed,
                                const NetworkCheckOptions& opt) {
    NoiseConfig cfg;
    cfg.zeta = opt.zeta;
    cfg.samplings = static_cast<int>(samplings);
    cfg.seed = seed;
    cfg.tap = opt.tap;
    const PerturbationSet set = make_perturbation_set(model, cfg);
    const DeviationEmbedding e = embedding(model, x, set, opt.tap);
    const Matrix jac = jacobian(model, x, opt.tap, cfg.scope());

    const double projected = e.vector.squaredNorm();
    const double exact = jac.squaredNorm();
    CheckReport r = base_report("jacobian_norm", static_cast<long>(samplings), seed, opt.threshold);
    if (exact == 0.0) {
        r.degenerate = true;
        r.statistic = 0.0;
    } else {
        r.statistic = std::abs(projected - exact) / exact;
    }
    r.passed = r.statistic < opt.threshold;

    // Output coordinate i contributes (n/K) sum_k (block_k)_i^2 and ||J_i||^2.
    const double scale = static_cast<double>(set.dimension()) / static_cast<double>(samplings);
    nlohmann::json coords = nlohmann::json::array();
    for (Eigen::Index i = 0; i < jac.rows(); ++i) {
        coords.push_back({{"projected", scale * e.blocks.col(i).squaredNorm()},
                          {"exact", jac.row(i).squaredNorm()}});
    }
    r.details = {{"projected", projected}, {"exact", exact},      {"n", set.dimension()},
                 {"zeta", opt.zeta},       {"tap", tap_label(opt.tap)},
                 {"per_coordinate", coords}};
    return r;
}

CheckReport check_distance_equivalence(const Mlp& model, const Eigen::Ref<const Vector>& xi,
                                       const Eigen::Ref<const Vector>& xj,
                                       Eigen::Index samplings, std::uint64_t seed,
                                       const NetworkCheckOptions& opt) {
    const NetworkPair p = embed_pair(model, xi, xj, samplings, seed, opt);
    const double projected = (p.ei.vector - p.ej.vector).squaredNorm();
    const double exact = (p.ji - p.jj).squaredNorm();
    CheckReport r = base_report("distance_equivalence", static_cast<long>(samplings), seed,
                                opt.threshold);
    r.statistic = std::abs(projected - exact) / std::max(exact, kRelativeFloor);
    r.degenerate = exact < kRelativeFloor;
    r.passed = r.statistic < opt.threshold;
    r.details = {{"projected", projected}, {"exact", exact}, {"zeta", opt.zeta},
                 {"tap", tap_label(opt.tap)}};
    return r;
}

CheckReport check_inner_product_equivalence(const Mlp& model, const Eigen::Ref<const Vector>& xi,
                                            const Eigen::Ref<const Vector>& xj,
                                            Eigen::Index samplings, std::uint64_t seed,
                                            const NetworkCheckOptions& opt) {
    const NetworkPair p = embed_pair(model, xi, xj, samplings, seed, opt);
    const double projected = p.ei.vector.dot(p.ej.vector);
    const double exact = (p.ji.array() * p.jj.array()).sum();
    const double denom = p.ji.norm() * p.jj.norm();
    CheckReport r = base_report("inner_product_equivalence", static_cast<long>(samplings), seed,
                                opt.threshold);
    r.statistic = std::abs(projected - exact) / std::max(denom, kRelativeFloor);
    r.degenerate = denom < kRelativeFloor;
    r.passed = r.statistic < opt.threshold;
    r.details = {{"projected", projected}, {"exact", exact}, {"norm_product", denom},
                 {"zeta", opt.zeta},       {"tap", tap_label(opt.tap)}};
    return r;
}

CheckReport concentration_trial(ConcentrationKind kind, Eigen::Index n, Eigen::Index samplings,
                                double epsilon, long trials, std::uint64_t seed,
                                double threshold) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw InvalidArgument("concentration_trial: epsilon must be in (0, 1)");
    }
    if (trials < 1) throw InvalidArgument("concentration_trial: trials must be >= 1");
    long failures = 0;
    long literal_failures = 0;
    for (long t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
        Rng rng(trial_seed);
        const Matrix q = projection(n, samplings, derive_seed(trial_seed, stream_id("Q")));
        bool violated = false;
        switch (kind) {
            case ConcentrationKind::Magnitude: {
                const Vector g = gaussian_vector(n, rng);
                violated = magnitude_violated((q * g).norm(), g.norm(), epsilon);
                break;
            }
            case ConcentrationKind::Distance: {
                const Vector gi = gaussian_vector(n, rng);
                const Vector gj = gaussian_vector(n, rng);
                violated = magnitude_violated((q * gi - q * gj).norm(), (gi - gj).norm(), epsilon);
                break;
            }
            case ConcentrationKind::InnerProduct: {
                // Correlated pair so the cosine covers (-1, 1).
                std::uniform_real_distribution<double> mix(-1.0, 1.0);
                const Vector gi = gaussian_vector(n, rng);
                const double a = mix(rng);
                const Vector gj = a * gi + std::sqrt(1.0 - a * a) * gaussian_vector(n, rng);
                const double cos_true = gi.normalized().dot(gj.normalized());
                const Vector pi = q * gi;
                const Vector pj = q * gj;
                const double cos_proj = pi.normalized().dot(pj.normalized());
                const double lo2 = (1.0 - epsilon) * (1.0 - epsilon);
                const double hi2 = (1.0 + epsilon) * (1.0 + epsilon);
                // The literal form divides by (1 + eps)^2 below and (1 - eps)^2 above,
                // which only bounds a non-negative numerator.
                const double lit_lower = (cos_true - epsilon) / hi2;
                const double lit_upper = (cos_true + epsilon) / lo2;
                const double lower = (cos_true - epsilon) / (cos_true - epsilon >= 0.0 ? hi2 : lo2);
                const double upper = (cos_true + epsilon) / (cos_true + epsilon >= 0.0 ? lo2 : hi2);
                violated = cos_proj < lower || cos_proj > upper;
                literal_failures += (cos_proj < lit_lower || cos_proj > lit_upper) ? 1 : 0;
                break;
            }
        }
        failures += violated ? 1 : 0;
    }
    CheckReport r = base_report("concentration_" + to_string(kind), trials, seed, threshold);
    r.statistic = static_cast<double>(failures) / static_cast<double>(trials);
    r.passed = r.statistic < threshold;
    r.details = {{"kind", to_string(kind)},
                 {"n", n},
                 {"K", samplings},
                 {"epsilon", epsilon},
                 {"failures", failures},
                 {"bound_form", "1 - 2 exp(-c * epsilon^2 * K), c unknown"}};
    if (kind == ConcentrationKind::InnerProduct) r.details["literal_form_failures"] = literal_failures;
    return r;
}

CheckReport concentration_monotonicity(ConcentrationKind kind, Eigen::Index n,
                                       Eigen::Index samplings, double epsilon, long trials,
                                       const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InvalidArgument("concentration_monotonicity: no seeds");
    double at_k = 0.0;
    double at_2k = 0.0;
    for (std::uint64_t s : seeds) {
        at_k += concentration_trial(kind, n, samplings, epsilon, trials, s).statistic;
        at_2k += concentration_trial(kind, n, 2 * samplings, epsilon, trials, s).statistic;
    }
    at_k /= static_cast<double>(seeds.size());
    at_2k /= static_cast<double>(seeds.size());
    CheckReport r = base_report("concentration_monotonicity_" + to_string(kind),
                                trials * static_cast<long>(seeds.size()), seeds.front(), at_k);
    r.statistic = at_2k;
    r.passed = at_2k < at_k;
    r.details = {{"kind", to_string(kind)}, {"n", n},           {"K", samplings},
                 {"epsilon", epsilon},      {"failure_at_K", at_k}, {"failure_at_2K", at_2k},
                 {"seeds", seeds.size()}};
    return r;
}

CheckReport concentration_network(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                                  Eigen::Index samplings, double epsilon, long trials,
                                  std::uint64_t seed, const NetworkCheckOptions& opt) {
    NoiseConfig cfg;
    cfg.zeta = opt.zeta;
    cfg.samplings = static_cast<int>(samplings);
    cfg.tap = opt.tap;
    Vector exact(pool.rows());
    for (Eigen::Index i = 0; i < pool.rows(); ++i) {
        exact[i] = jacobian(model, pool.row(i).transpose(), opt.tap, cfg.scope()).norm();
    }
    long failures = 0;
    for (long t = 0; t < trials; ++t) {
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(t));
        const Vector projected = pool_embeddings(model, pool, cfg).scores();
        bool violated = false;
        for (Eigen::Index i = 0; i < pool.rows(); ++i) {
            violated = violated || magnitude_violated(projected[i], exact[i], epsilon);
        }
        failures += violated ? 1 : 0;
    }
    CheckReport r = base_report("concentration_network", trials, seed, opt.threshold);
    r.statistic = static_cast<double>(failures) / static_cast<double>(trials);
    r.passed = r.statistic < opt.threshold;
    r.details = {{"pool", pool.rows()}, {"K", samplings},   {"epsilon", epsilon},
                 {"zeta", opt.zeta},    {"tap", tap_label(opt.tap)}};
    return r;
}

std::vector<EfficiencyRow> sampling_efficiency_sweep(Eigen::Index n,
                                                     const std::vector<long>& pool_sizes,
                                                     double epsilon, std::uint64_t seed,
                                                     const EfficiencyOptions& opt) {
    if (pool_sizes.empty()) return {};
    const long n_max = *std::max_element(pool_sizes.begin(), pool_sizes.end());
    if (n_max < 1) throw InvalidArgument("sampling_efficiency_sweep: pool sizes must be >= 1");
    const long k_max = opt.k_max;

    // first_fail[t][K-1]: lowest vector index violating the bound at K
    // (n_max when none does). Failure for pool N means first_fail < N.
    std::vector<std::vector<long>> first_fail(static_cast<std::size_t>(opt.trials),
                                              std::vector<long>(static_cast<std::size_t>(k_max)));
    for (long t = 0; t < opt.trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
        const Matrix u = sample_directions(n, k_max, derive_seed(trial_seed, stream_id("U")));
        Rng rng(derive_seed(trial_seed, stream_id("G")));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd g(n, n_max);
        for (Eigen::Index j = 0; j < n_max; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
        }
        const Eigen::MatrixXd proj = (u * g).array().square().matrix();
        const Eigen::VectorXd g_norm = g.colwise().norm().transpose();
        Eigen::VectorXd cum = Eigen::VectorXd::Zero(n_max);
        auto& row = first_fail[static_cast<std::size_t>(t)];
        for (long k = 1; k <= k_max; ++k) {
            cum += proj.row(k - 1).transpose();
            const double scale = static_cast<double>(n) / static_cast<double>(k);
            long first = n_max;
            for (long j = 0; j < n_max; ++j) {
                if (magnitude_violated(std::sqrt(scale * cum[j]), g_norm[j], epsilon)) {
                    first = j;
                    break;
                }
            }
            row[static_cast<std::size_t>(k - 1)] = first;
        }
    }

    auto failure_rate = [&](long pool, long k) {
        long fails = 0;
        for (const auto& row : first_fail) fails += row[static_cast<std::size_t>(k - 1)] < pool ? 1 : 0;
        return static_cast<double>(fails) / static_cast<double>(opt.trials);
    };

    std::vector<EfficiencyRow> table;
    for (long pool : pool_sizes) {
        long lo = 1;
        long hi = k_max;
        while (lo < hi) {
            const long mid = lo + (hi - lo) / 2;
            if (failure_rate(pool, mid) < opt.target) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        table.push_back({pool, lo, failure_rate(pool, lo)});
    }
    return table;
}

CheckReport efficiency_report(const std::vector<EfficiencyRow>& table, double epsilon,
                              std::uint64_t seed) {
    if (table.empty()) throw InvalidArgument("efficiency_report: empty table");
    auto [lo, hi] = std::minmax_element(
        table.begin(), table.end(),
        [](const EfficiencyRow& a, const EfficiencyRow& b) { return a.pool_size < b.pool_size; });
    CheckReport r = base_report("sampling_efficiency", static_cast<long>(table.size()), seed,
                                static_cast<double>(hi->pool_size) / static_cast<double>(lo->pool_size));
    r.statistic = static_cast<double>(hi->required_k) / static_cast<double>(lo->required_k);
    r.passed = r.statistic < r.threshold;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table) {
        rows.push_back({{"N", row.pool_size}, {"K", row.required_k}, {"failure", row.failure}});
    }
    r.details = {{"epsilon", epsilon}, {"table", rows}};
    return r;
}

}  // namespace nstab
