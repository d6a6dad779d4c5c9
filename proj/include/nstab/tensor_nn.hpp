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
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nstab/core.hpp"

namespace nstab {

enum class Mode { Train, Eval };

/// Which parameters a flatten / perturb / Jacobian call addresses.
/// FeatureOnly is the prefix feeding the feature tap; All is every parameter.
enum class ParamScope { FeatureOnly, All };

/// Layer boundary an output is read at. Logits is the predictive output
/// before a trailing Softmax (identical to Predictive when there is none).
enum class Tap { Feature, Predictive, Logits };

enum class LayerKind { Linear, ReLU, Dropout, Softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::Linear;
    Eigen::Index in = 0;
    Eigen::Index out = 0;
    bool bias = true;
    double rate = 0.0;  // dropout only

    static LayerSpec linear(Eigen::Index in, Eigen::Index out, bool bias = true) {
        return {LayerKind::Linear, in, out, bias, 0.0};
    }
    static LayerSpec relu() { return {LayerKind::ReLU}; }
    static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, true, rate}; }
    static LayerSpec softmax() { return {LayerKind::Softmax}; }
};

/// Feed-forward network T = g o f with a designated feature tap.
///
/// All parameters live in one flat vector, layer-major and row-major within
/// each weight matrix (W first, then b). Layers before the tap form f(.;theta)
/// and own the prefix [0, n_feature_params()); the rest form g(.;phi).
///
/// Copies are deep and cheap; give each worker its own copy.
class Mlp {
  public:
    class Builder;

    Mlp() = default;
    Mlp(Eigen::Index input_dim, std::vector<LayerSpec> layers, std::size_t feature_tap);

    static Builder builder(Eigen::Index input_dim);

    Eigen::Index input_dim() const { return input_dim_; }
    Eigen::Index output_dim() const { return widths_.back(); }
    Eigen::Index feature_dim() const { return widths_[feature_tap_]; }
    /// Width of the activation after layer boundary `boundary` (0 = input).
    Eigen::Index width_at(std::size_t boundary) const { return widths_.at(boundary); }

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::size_t feature_tap() const { return feature_tap_; }
    std::size_t tap_boundary(Tap tap) const;

    std::size_t n_feature_params() const { return param_offsets_[feature_tap_]; }
    std::size_t n_total_params() const { return static_cast<std::size_t>(params_.size()); }
    std::size_t n_params(ParamScope scope) const {
        return scope == ParamScope::All ? n_total_params() : n_feature_params();
    }
    /// Offset of layer `l`'s first parameter in the flat vector.
    std::size_t param_offset(std::size_t l) const { return param_offsets_[l]; }

    bool has_dropout() const;
    bool ends_with_softmax() const;

    const Vector& params() const { return params_; }
    Vector& params() { return params_; }

    Eigen::Map<const Matrix> weight(std::size_t l) const;
    Eigen::Map<Matrix> weight(std::size_t l);
    Eigen::Map<const Vector> bias(std::size_t l) const;
    Eigen::Map<Vector> bias(std::size_t l);

    bool perturbed() const { return pristine_.has_value(); }

  private:
    friend void apply_perturbation(Mlp&, const Eigen::Ref<const Vector>&, ParamScope);
    friend void remove_perturbation(Mlp&);

    Eigen::Index input_dim_ = 0;
    std::vector<LayerSpec> layers_;
    std::vector<Eigen::Index> widths_;        // size layers+1
    std::vector<std::size_t> param_offsets_;  // size layers+1
    std::size_t feature_tap_ = 0;
    Vector params_;
    std::optional<Vector> pristine_;
};

class Mlp::Builder {
  public:
    explicit Builder(Eigen::Index input_dim) : input_dim_(input_dim), width_(input_dim) {}

    Builder& linear(Eigen::Index out, bool bias = true);
    Builder& relu();
    Builder& dropout(double rate);
    Builder& softmax();
    /// Marks the current boundary as the feature tap. Defaults to the output.
    Builder& tap();
    Mlp build() const;

  private:
    Eigen::Index input_dim_;
    Eigen::Index width_;
    std::vector<LayerSpec> layers_;
    std::optional<std::size_t> tap_;
};

struct ForwardResult {
    Matrix feature;
    Matrix output;
};

/// Runs a batch (one example per row). Train mode draws dropout masks from
/// `rng`, which is then required.
ForwardResult forward(const Mlp& model, const Eigen::Ref<const Matrix>& x, Mode mode,
                      Rng* rng = nullptr);

/// Eval-mode output read at `tap`.
Matrix tap_output(const Mlp& model, const Eigen::Ref<const Matrix>& x, Tap tap);

/// Eval-mode output for a single example.
Vector tap_output_row(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap);

/// Change of the eval-mode tap output when the scoped parameters move
/// by `delta`, propagated layer by layer instead of as a difference of two
/// forward passes.
Vector tap_output_shift(const Mlp& model, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& delta, ParamScope scope, Tap tap);

Vector flatten_params(const Mlp& model, ParamScope scope);
void write_params(Mlp& model, const Eigen::Ref<const Vector>& values, ParamScope scope);

/// Adds `delta` to the scoped parameters, keeping a pristine copy.
void apply_perturbation(Mlp& model, const Eigen::Ref<const Vector>& delta, ParamScope scope);
/// Restores the parameters saved by the matching apply_perturbation.
void remove_perturbation(Mlp& model);

/// d x n matrix; row i is d(out_i)/d(theta) over the scoped parameters.
Matrix jacobian(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap,
                ParamScope scope);

/// Central-difference Jacobian; test oracle for `jacobian`.
Matrix finite_diff_jacobian(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap,
                            ParamScope scope, double h);

/// He-uniform weights, zero biases.
void init_params(Mlp& model, std::uint64_t seed);

enum class Loss { CrossEntropy, SquaredError };

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    std::variant<SgdConfig, AdamConfig> optimizer = AdamConfig{};
    int epochs = 10;
    int batch_size = 32;
    Loss loss = Loss::CrossEntropy;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossGradient {
    double loss = 0.0;  // mean over the batch
    Vector grad;        // all parameters, same layout as params()
};

/// Mean loss and its gradient over a batch. Cross entropy expects one-hot (or
/// soft) target rows and a trailing Softmax; squared error is
/// (1 / 2B) * sum ||out - y||^2.
LossGradient loss_and_gradient(const Mlp& model, const Eigen::Ref<const Matrix>& x,
                               const Eigen::Ref<const Matrix>& y, Loss loss, Mode mode,
                               Rng* rng = nullptr);

/// Mini-batch training in place. Returns the mean loss of each epoch.
std::vector<double> train(Mlp& model, const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Matrix>& y, const TrainConfig& cfg);

std::string checkpoint_to_json(const Mlp& model);
Mlp checkpoint_from_json(const std::string& text);
void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace nstab
