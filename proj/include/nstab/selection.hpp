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
#include <optional>
#include <string>
#include <string_view>

#include "nstab/core.hpp"

namespace nstab {

enum class SelectMethod { KCenter, KMeansPP, TopMagnitude, KCenterNormalized, KDpp };

std::string to_string(SelectMethod m);
SelectMethod parse_select_method(std::string_view name);

struct SelectionRequest {
    Eigen::Ref<const Matrix> embeddings;  // N x m
    std::size_t budget = 0;
    /// Labeled embeddings; when non-empty, k-center starts from them.
    std::optional<Eigen::Ref<const Matrix>> seeds_from_labeled;
    std::uint64_t seed = 0;
    SelectMethod method = SelectMethod::KCenter;

    explicit SelectionRequest(const Eigen::Ref<const Matrix>& e) : embeddings(e) {}
};

/// Gonzalez farthest-point traversal, indices in pick order. Without labeled
/// seeds the first pick is the largest-norm row. Ties go to the lowest index.
IndexList greedy_k_center(const SelectionRequest& req);

/// D^2 seeding. Falls back to a uniform pick among the unpicked rows when
/// every remaining row coincides with a center.
IndexList kmeans_pp(const SelectionRequest& req);

/// Rows with the largest norms, descending.
IndexList top_magnitude(const SelectionRequest& req);

/// k-center on row-normalized embeddings. Zero rows are only picked after
/// every nonzero row, in index order.
IndexList k_center_normalized(const SelectionRequest& req);

/// Dispatches on req.method. KDpp throws UnsupportedError.
IndexList select(const SelectionRequest& req);

/// max over points of the distance to the nearest chosen center.
double covering_radius(const Eigen::Ref<const Matrix>& points, const IndexList& centers);

}  // namespace nstab
