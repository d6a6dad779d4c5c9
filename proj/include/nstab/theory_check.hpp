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
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/core.hpp"
#include "nstab/tensor_nn.hpp"

// Monte Carlo checks of the projected-gradient identities behind noise
// stability. Every check is deterministic per seed and returns a CheckReport.
//
// Network-backed checks compute the embedding from real perturbed forward
// passes and compare against analytic Jacobians. Concentration checks
// project Gaussian gradient vectors directly with Q = sqrt(n/K) U, so a
// failure there cannot come from Taylor error.

namespace nstab {

struct CheckReport {
    std::string name;
    long trials = 0;
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed = false;
    std::uint64_t seed = 0;
    bool degenerate = false;
    nlohmann::json details = nlohmann::json::object();

    nlohmann::json to_json() const;
};

/// Relative-error denominators never go below this.
inline constexpr double kRelativeFloor = 1e-12;

struct NetworkCheckOptions {
    double zeta = 1e-4;
    Tap tap = Tap::Predictive;
    double threshold = 0.05;
};

/// ||(1/K) sum u u^T - I/n||_F / ||I/n||_F; details carry the trace.
CheckReport check_second_moment(Eigen::Index n, Eigen::Index samplings, std::uint64_t seed,
                                double threshold = 0.1);

/// |‖ẑ(x)‖² - ‖J‖_F²| / ‖J‖_F² with ẑ from perturbed forward passes.
/// details.per_coordinate holds each output coordinate's two sides.
CheckReport check_jacobian_norm(const Mlp& model, const Eigen::Ref<const Vector>& x,
                                Eigen::Index samplings, std::uint64_t seed,
                                const NetworkCheckOptions& opt = {});

/// |‖ẑ_i - ẑ_j‖² - ‖J_i - J_j‖_F²| / max(‖J_i - J_j‖_F², floor). Vector taps
/// are summed over coordinates.
CheckReport check_distance_equivalence(const Mlp& model, const Eigen::Ref<const Vector>& xi,
                                       const Eigen::Ref<const Vector>& xj,
                                       Eigen::Index samplings, std::uint64_t seed,
                                       const NetworkCheckOptions& opt = {});

/// |<ẑ_i, ẑ_j> - <J_i, J_j>_F| / max(‖J_i‖_F ‖J_j‖_F, floor).
CheckReport check_inner_product_equivalence(const Mlp& model, const Eigen::Ref<const Vector>& xi,
                                            const Eigen::Ref<const Vector>& xj,
                                            Eigen::Index samplings, std::uint64_t seed,
                                            const NetworkCheckOptions& opt = {});

enum class ConcentrationKind { Magnitude, Distance, InnerProduct };

std::string to_string(ConcentrationKind k);

/// Fraction of trials that violate the concentration inequality of `kind`
/// at relative tolerance `epsilon`. Each trial draws fresh gradients and a
/// fresh projection from a per-trial sub-seed.
CheckReport concentration_trial(ConcentrationKind kind, Eigen::Index n, Eigen::Index samplings,
                                double epsilon, long trials, std::uint64_t seed,
                                double threshold = 0.05);

/// Mean failure fraction over `seeds` at K and at 2K; passes iff the 2K
/// value is strictly smaller.
CheckReport concentration_monotonicity(ConcentrationKind kind, Eigen::Index n,
                                       Eigen::Index samplings, double epsilon, long trials,
                                       const std::vector<std::uint64_t>& seeds);

/// Network-backed magnitude check: simultaneous violation rate of
/// |‖ẑ(x)‖ - ‖J(x)‖_F| <= epsilon ‖J(x)‖_F over every row of `pool`.
CheckReport concentration_network(const Mlp& model, const Eigen::Ref<const Matrix>& pool,
                                  Eigen::Index samplings, double epsilon, long trials,
                                  std::uint64_t seed, const NetworkCheckOptions& opt = {});

struct EfficiencyRow {
    long pool_size = 0;
    long required_k = 0;
    double failure = 0.0;  // simultaneous failure rate at required_k
};

struct EfficiencyOptions {
    long trials = 200;
    long k_max = 256;
    double target = 0.05;
};

/// For each pool size N, the smallest K (bisection on [1, k_max]) at which
/// the magnitude bound fails for some of N projected vectors in fewer than
/// `target` of the trials. Trials share random numbers across N and K: the
/// vectors for N are a prefix of those for a larger N, and the directions
/// for K are a prefix of those for a larger K.
std::vector<EfficiencyRow> sampling_efficiency_sweep(Eigen::Index n,
                                                     const std::vector<long>& pool_sizes,
                                                     double epsilon, std::uint64_t seed,
                                                     const EfficiencyOptions& opt = {});

/// statistic = K(N_max) / K(N_min), threshold = N_max / N_min.
CheckReport efficiency_report(const std::vector<EfficiencyRow>& table, double epsilon,
                              std::uint64_t seed);

}  // namespace nstab
