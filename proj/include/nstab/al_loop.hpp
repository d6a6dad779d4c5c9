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
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/baselines.hpp"
#include "nstab/datasets.hpp"
#include "nstab/noise_stability.hpp"
#include "nstab/selection.hpp"
#include "nstab/tensor_nn.hpp"

namespace nstab {

enum class RetrainMode { FromScratch, WarmStart };

struct DatasetSpec {
    std::string kind = "blobs";  // blobs | two_moons | linear_regression | idx | csv
    // synthetic generators
    int n_per_class = 500;
    int classes = 4;
    int dim = 2;
    int n = 1000;
    double noise_std = 1.0;
    double center_spread = 5.0;
    std::uint64_t centers_seed = 0;
    std::uint64_t seed = 0;
    // file-backed
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;
    std::string path;
    CsvSchema schema;
    TaskKind task = TaskKind::Classification;

    double test_fraction = 0.2;
    bool standardize = true;
};

struct ModelSpec {
    std::vector<int> hidden{32};
    double dropout = 0.0;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    ModelSpec model;
    StrategyId strategy = StrategyId::NoiseStability;
    int cycles = 8;
    std::size_t budget = 20;
    std::size_t initial_labeled = 20;
    NoiseConfig noise;        // seed is derived per cycle
    bool noise_tap_auto = true;  // predictive for classification, feature otherwise
    TrainConfig train;        // seed is derived per cycle
    /// Unset means the strategy default: kmeans++ for badge, k-center otherwise.
    std::optional<SelectMethod> selector;
    bool seed_from_labeled = false;
    int mc_samples = 50;
    std::vector<std::uint64_t> seeds{0};
    RetrainMode retrain_mode = RetrainMode::FromScratch;
    unsigned workers = 1;

    void validate() const;
    SelectMethod resolved_selector() const;
};

/// Parses the JSON experiment document; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct ExperimentData {
    Dataset pool;  // train split; pool indices refer to its rows
    Dataset test;
};

/// Builds the train pool and held-out split. The split and its
/// standardization depend only on `split_seed`.
ExperimentData load_experiment_data(const DatasetSpec& spec, std::uint64_t split_seed);

/// Hidden blocks Linear -> ReLU (-> Dropout), feature tap after the last
/// block, then a linear head (with Softmax for classification).
Mlp build_model(const ModelSpec& spec, Eigen::Index input_dim, int output_dim, TaskKind task);

/// Labeled / unlabeled bookkeeping over pool indices.
class PoolState {
  public:
    PoolState(std::size_t pool_size, const IndexList& initial_labeled);

    const IndexList& labeled() const { return labeled_; }
    const IndexList& unlabeled() const { return unlabeled_; }
    const std::vector<IndexList>& history() const { return history_; }

    /// Moves `selected` (pool indices, all currently unlabeled) to labeled.
    void annotate(const IndexList& selected);
    /// Throws InvalidState when disjointness, coverage or no-reselection fails.
    void check_invariants() const;

  private:
    std::size_t pool_size_;
    IndexList labeled_;
    IndexList unlabeled_;  // ascending
    std::vector<IndexList> history_;
};

struct CycleReport {
    int cycle = 0;
    std::size_t labeled_size = 0;
    IndexList selected;
    double metric = 0.0;
    std::string metric_name;
    std::vector<double> train_loss;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::string strategy;
    std::optional<std::string> warning;

    /// Deterministic record; wall time is deliberately omitted.
    nlohmann::json to_json() const;
};

struct RunResult {
    std::uint64_t seed = 0;
    std::string strategy;
    std::vector<CycleReport> cycles;
    IndexList initial_labeled;
};

/// Seed streams derived from one run seed. The split, the initial labeled
/// set and the model init do not depend on the strategy.
struct RunSeeds {
    std::uint64_t split, initial, init, train, strategy;
    static RunSeeds from(std::uint64_t run_seed);
    std::uint64_t per_cycle(std::uint64_t stream, int cycle) const;
};

RunResult run_single(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed);

/// One RunResult per configured seed.
std::vector<RunResult> run_active_learning(const ExperimentConfig& cfg);

/// Accuracy (argmax, ties to the lowest class) or mean absolute error.
double evaluate(const Mlp& model, const Dataset& test);

/// Indices (into `pool`) chosen by cfg.strategy for the current cycle.
IndexList query(const ExperimentConfig& cfg, const Mlp& model, const Dataset& pool,
                const PoolState& state, std::size_t budget, std::uint64_t seed);

struct CurvePoint {
    int cycle = 0;
    std::size_t labeled_size = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single run
    std::size_t n_seeds = 0;
};

/// Per-cycle mean and standard deviation across runs.
std::vector<CurvePoint> aggregate_runs(const std::vector<RunResult>& runs);

void write_reports_jsonl(std::ostream& out, const std::vector<RunResult>& runs);
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve,
                     const std::string& strategy);

}  // namespace nstab
