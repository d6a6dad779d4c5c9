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

#include "nstab/selection.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <limits>
#include <numeric>

namespace nstab {

namespace {

void check_budget(const SelectionRequest& req, const char* who) {
    if (req.budget > static_cast<std::size_t>(req.embeddings.rows())) {
        throw InvalidArgument(std::string(who) + ": budget " + std::to_string(req.budget) +
                              " exceeds pool size " + std::to_string(req.embeddings.rows()));
    }
    if (req.seeds_from_labeled && req.seeds_from_labeled->rows() > 0 &&
        req.seeds_from_labeled->cols() != req.embeddings.cols()) {
        throw DimensionError(std::string(who) + ": labeled embeddings have a different width");
    }
}

// Squared distance from every row to its nearest center; updated in place.
void relax(const Eigen::Ref<const Matrix>& pts, const Eigen::Ref<const RowVector>& center,
           Vector& dist) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double d = (pts.row(i) - center).squaredNorm();
        if (d < dist[i]) dist[i] = d;
    }
}

// Lowest index among the unpicked rows with the largest value.
std::optional<Eigen::Index> argmax_unpicked(const Vector& v, const std::vector<char>& picked) {
    std::optional<Eigen::Index> best;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (picked[static_cast<std::size_t>(i)]) continue;
        if (!best || v[i] > v[*best]) best = i;
    }
    return best;
}

IndexList k_center_on(const Eigen::Ref<const Matrix>& pts, std::size_t budget,
                      const std::optional<Eigen::Ref<const Matrix>>& labeled) {
    const Eigen::Index n = pts.rows();
    IndexList picks;
    if (budget == 0) return picks;
    picks.reserve(budget);
    std::vector<char> picked(static_cast<std::size_t>(n), 0);
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());

    auto take = [&](Eigen::Index i) {
        picks.push_back(static_cast<std::size_t>(i));
        picked[static_cast<std::size_t>(i)] = 1;
        relax(pts, pts.row(i), dist);
    };

    if (labeled && labeled->rows() > 0) {
        for (Eigen::Index j = 0; j < labeled->rows(); ++j) relax(pts, labeled->row(j), dist);
    } else {
        const Vector norms = pts.rowwise().squaredNorm();
        take(*argmax_unpicked(norms, picked));
    }
    while (picks.size() < budget) take(*argmax_unpicked(dist, picked));
    return picks;
}

}  // namespace

std::string to_string(SelectMethod m) {
    switch (m) {
        case SelectMethod::KCenter: return "k_center";
        case SelectMethod::KMeansPP: return "kmeans_pp";
        case SelectMethod::TopMagnitude: return "top_magnitude";
        case SelectMethod::KCenterNormalized: return "k_center_normalized";
        case SelectMethod::KDpp: return "k_dpp";
    }
    return "?";
}

SelectMethod parse_select_method(std::string_view name) {
    for (auto m : {SelectMethod::KCenter, SelectMethod::KMeansPP, SelectMethod::TopMagnitude,
                   SelectMethod::KCenterNormalized, SelectMethod::KDpp}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown selector '" + std::string(name) +
                      "'; valid: k_center, kmeans_pp, top_magnitude, k_center_normalized");
}

IndexList greedy_k_center(const SelectionRequest& req) {
    check_budget(req, "greedy_k_center");
    return k_center_on(req.embeddings, req.budget, req.seeds_from_labeled);
}

IndexList kmeans_pp(const SelectionRequest& req) {
    check_budget(req, "kmeans_pp");
    const Eigen::Index n = req.embeddings.rows();
    IndexList picks;
    if (req.budget == 0) return picks;
    Rng rng(req.seed);
    std::vector<char> picked(static_cast<std::size_t>(n), 0);
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());

    auto take = [&](Eigen::Index i) {
        picks.push_back(static_cast<std::size_t>(i));
        picked[static_cast<std::size_t>(i)] = 1;
        dist[i] = 0.0;
        relax(req.embeddings, req.embeddings.row(i), dist);
    };
    auto uniform_unpicked = [&]() {
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!picked[static_cast<std::size_t>(i)]) free.push_back(i);
        }
        std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
        return free[pick(rng)];
    };

    take(uniform_unpicked());
    while (picks.size() < req.budget) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!picked[static_cast<std::size_t>(i)]) total += dist[i];
        }
        if (!(total > 0.0)) {
            take(uniform_unpicked());
            continue;
        }
        std::uniform_real_distribution<double> u01(0.0, total);
        const double target = u01(rng);
        double acc = 0.0;
        Eigen::Index chosen = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (picked[static_cast<std::size_t>(i)] || dist[i] <= 0.0) continue;
            acc += dist[i];
            chosen = i;
            if (acc > target) break;
        }
        take(chosen);
    }
    return picks;
}

IndexList top_magnitude(const SelectionRequest& req) {
    const auto n = static_cast<std::size_t>(req.embeddings.rows());
    const std::size_t budget = std::min(req.budget, n);
    const Vector norms = req.embeddings.rowwise().norm();
    IndexList order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return norms[static_cast<Eigen::Index>(a)] > norms[static_cast<Eigen::Index>(b)];
    });
    order.resize(budget);
    return order;
}

IndexList k_center_normalized(const SelectionRequest& req) {
    check_budget(req, "k_center_normalized");
    const Eigen::Index n = req.embeddings.rows();
    std::vector<Eigen::Index> nonzero;
    IndexList zeros;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (req.embeddings.row(i).squaredNorm() > 0.0) {
            nonzero.push_back(i);
        } else {
            zeros.push_back(static_cast<std::size_t>(i));
        }
    }
    Matrix unit(static_cast<Eigen::Index>(nonzero.size()), req.embeddings.cols());
    for (std::size_t r = 0; r < nonzero.size(); ++r) {
        const auto row = req.embeddings.row(nonzero[r]);
        unit.row(static_cast<Eigen::Index>(r)) = row / row.norm();
    }
    std::optional<Matrix> labeled_unit;
    if (req.seeds_from_labeled && req.seeds_from_labeled->rows() > 0) {
        labeled_unit = Matrix(0, req.embeddings.cols());
        for (Eigen::Index j = 0; j < req.seeds_from_labeled->rows(); ++j) {
            const auto row = req.seeds_from_labeled->row(j);
            const double norm = row.norm();
            if (norm > 0.0) {
                labeled_unit->conservativeResize(labeled_unit->rows() + 1, Eigen::NoChange);
                labeled_unit->row(labeled_unit->rows() - 1) = row / norm;
            }
        }
    }
    std::optional<Eigen::Ref<const Matrix>> seeds;
    if (labeled_unit) seeds.emplace(*labeled_unit);

    const std::size_t from_nonzero = std::min(req.budget, nonzero.size());
    IndexList picks;
    for (std::size_t local : k_center_on(unit, from_nonzero, seeds)) {
        picks.push_back(static_cast<std::size_t>(nonzero[local]));
    }
    for (std::size_t z : zeros) {
        if (picks.size() == req.budget) break;
        picks.push_back(z);
    }
    return picks;
}

IndexList select(const SelectionRequest& req) {
    switch (req.method) {
        case SelectMethod::KCenter: return greedy_k_center(req);
        case SelectMethod::KMeansPP: return kmeans_pp(req);
        case SelectMethod::TopMagnitude: return top_magnitude(req);
        case SelectMethod::KCenterNormalized: return k_center_normalized(req);
        case SelectMethod::KDpp:
            throw UnsupportedError("k-DPP selection is not implemented");
    }
    throw InvalidArgument("unknown selection method");
}

double covering_radius(const Eigen::Ref<const Matrix>& points, const IndexList& centers) {
    if (centers.empty()) return std::numeric_limits<double>::infinity();
    double radius = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c : centers) {
            best = std::min(best, (points.row(i) - points.row(static_cast<Eigen::Index>(c))).squaredNorm());
        }
        radius = std::max(radius, best);
    }
    return std::sqrt(radius);
}

}  // namespace nstab
