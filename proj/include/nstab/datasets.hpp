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
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nstab/core.hpp"

namespace nstab {

enum class TaskKind { Classification, Regression };

struct Dataset {
    Matrix inputs;                // N x D
    std::vector<int> labels;      // classification
    Matrix targets;               // regression, N x 1
    TaskKind task = TaskKind::Classification;
    int num_classes = 0;
    std::string provenance;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
    Eigen::Index dim() const { return inputs.cols(); }
    int output_dim() const { return task == TaskKind::Classification ? num_classes : 1; }

    Dataset subset(const IndexList& idx) const;
    /// One-hot rows for classification, the target column for regression.
    Matrix target_matrix() const;
    void validate() const;
};

Dataset gen_blobs(int n_per_class, int classes, int dim, std::uint64_t centers_seed,
                  double noise_std, std::uint64_t seed, double center_spread = 5.0);

Matrix blob_centers(int classes, int dim, std::uint64_t centers_seed, double center_spread = 5.0);

/// Interleaved half circles: class 0 on the unit circle around (0, 0),
/// class 1 on the unit circle around (1, 0.5).
Dataset gen_two_moons(int n, double noise_std, std::uint64_t seed);

Vector linear_regression_weights(int dim, std::uint64_t weight_seed);

/// y = w*^T x + noise with x ~ N(0, I) and w* from linear_regression_weights.
Dataset gen_linear_regression(int n, int dim, std::uint64_t weight_seed, double noise_std,
                              std::uint64_t seed);

/// MNIST-style IDX pair: unsigned-byte images (magic 0x00000803) and labels
/// (magic 0x00000801), big-endian. Pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Comma-delimited with a header row; double-quoted fields may contain commas.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

enum class ColumnKind { Numeric, Categorical, Target };

using CsvSchema = std::vector<std::pair<std::string, ColumnKind>>;

/// One-hot for categorical columns (first-appearance order), z-score for
/// numeric columns. Statistics come from the table passed to fit().
class TabularEncoder {
  public:
    TabularEncoder(CsvSchema schema, TaskKind task) : schema_(std::move(schema)), task_(task) {}

    void fit(const CsvTable& table);
    Dataset transform(const CsvTable& table) const;
    Eigen::Index feature_dim() const;

  private:
    struct Column {
        std::string name;
        ColumnKind kind;
        std::size_t source = 0;
        std::vector<std::string> categories;
        double mean = 0.0;
        double scale = 1.0;
    };
    std::vector<std::size_t> locate(const CsvTable& table) const;

    CsvSchema schema_;
    TaskKind task_;
    std::vector<Column> columns_;
    std::vector<std::string> target_classes_;
    bool fitted_ = false;
};

Dataset load_csv_tabular(const std::filesystem::path& path, const CsvSchema& schema,
                         TaskKind task);

struct SplitResult {
    Dataset train;
    Dataset test;
    IndexList train_idx;
    IndexList test_idx;
};

/// Seeded shuffle then cut; classification splits are stratified per class.
SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Per-column z-score fitted on one matrix and applied to others.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const Eigen::Ref<const Matrix>& x);
    Matrix apply(const Eigen::Ref<const Matrix>& x) const;
};

}  // namespace nstab
