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

#include "nstab/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace nstab {

namespace {

using json = nlohmann::json;

std::string kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Linear: return "linear";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& s) {
    if (s == "linear") return LayerKind::Linear;
    if (s == "relu") return LayerKind::ReLU;
    if (s == "dropout") return LayerKind::Dropout;
    if (s == "softmax") return LayerKind::Softmax;
    throw FormatError("checkpoint: unknown layer type '" + s + "'");
}

std::size_t linear_param_count(const LayerSpec& s) {
    return static_cast<std::size_t>(s.in * s.out + (s.bias ? s.out : 0));
}

// Floored at the smallest normal double so probabilities stay strictly positive.
constexpr double kProbFloor = std::numeric_limits<double>::min();

template <typename Row>
void softmax_inplace(Row&& row) {
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
    row = row.cwiseMax(kProbFloor);
}

void softmax_rows(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) softmax_inplace(m.row(r));
}

// Activations entering each layer; inputs[end] is the output at `end`.
struct Trace {
    std::vector<Matrix> inputs;
    std::vector<Matrix> masks;
};

Trace run_forward(const Mlp& model, const Eigen::Ref<const Matrix>& x, Mode mode, Rng* rng,
                  std::size_t end) {
    if (x.cols() != model.input_dim()) {
        throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                             " columns, model expects " + std::to_string(model.input_dim()));
    }
    const auto& layers = model.layers();
    Trace t;
    t.inputs.reserve(end + 1);
    t.masks.resize(end);
    t.inputs.emplace_back(x);
    for (std::size_t l = 0; l < end; ++l) {
        const Matrix& a = t.inputs.back();
        Matrix next;
        switch (layers[l].kind) {
            case LayerKind::Linear:
                next = a * model.weight(l).transpose();
                if (layers[l].bias) next.rowwise() += model.bias(l).transpose();
                break;
            case LayerKind::ReLU:
                next = a.cwiseMax(0.0);
                break;
            case LayerKind::Dropout:
                if (mode == Mode::Train && layers[l].rate > 0.0) {
                    if (rng == nullptr) throw InvalidArgument("forward: train-mode dropout needs an rng");
                    const double keep = 1.0 - layers[l].rate;
                    std::bernoulli_distribution coin(keep);
                    Matrix mask(a.rows(), a.cols());
                    for (Eigen::Index i = 0; i < mask.size(); ++i) {
                        mask.data()[i] = coin(*rng) ? 1.0 / keep : 0.0;
                    }
                    next = a.cwiseProduct(mask);
                    t.masks[l] = std::move(mask);
                } else {
                    next = a;
                }
                break;
            case LayerKind::Softmax:
                next = a;
                softmax_rows(next);
                break;
        }
        t.inputs.push_back(std::move(next));
    }
    return t;
}

// Accumulates dL/dparams into `grad` (full layout) given dL/d(output at end).
void run_backward(const Mlp& model, const Trace& t, Matrix g, std::size_t end, Vector& grad) {
    const auto& layers = model.layers();
    for (std::size_t l = end; l-- > 0;) {
        const Matrix& a = t.inputs[l];
        switch (layers[l].kind) {
            case LayerKind::Linear: {
                const auto& s = layers[l];
                const auto off = static_cast<Eigen::Index>(model.param_offset(l));
                Eigen::Map<Matrix> gw(grad.data() + off, s.out, s.in);
                gw.noalias() += g.transpose() * a;
                if (s.bias) {
                    Eigen::Map<Vector> gb(grad.data() + off + s.out * s.in, s.out);
                    gb += g.colwise().sum().transpose();
                }
                if (l > 0) g = g * model.weight(l);
                break;
            }
            case LayerKind::ReLU:
                g = g.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
                break;
            case LayerKind::Dropout:
                if (t.masks[l].size() != 0) g = g.cwiseProduct(t.masks[l]);
                break;
            case LayerKind::Softmax: {
                const Matrix& p = t.inputs[l + 1];
                const Vector dots = g.cwiseProduct(p).rowwise().sum();
                g = p.cwiseProduct(g - dots.replicate(1, g.cols()));
                break;
            }
        }
    }
}

}  // namespace

Mlp::Mlp(Eigen::Index input_dim, std::vector<LayerSpec> layers, std::size_t feature_tap)
    : input_dim_(input_dim), layers_(std::move(layers)), feature_tap_(feature_tap) {
    if (input_dim_ < 1) throw InvalidArgument("Mlp: input_dim must be >= 1");
    if (layers_.empty()) throw InvalidArgument("Mlp: at least one layer required");
    if (feature_tap_ > layers_.size()) throw InvalidArgument("Mlp: feature tap beyond network");
    widths_.push_back(input_dim_);
    param_offsets_.push_back(0);
    for (auto& s : layers_) {
        Eigen::Index w = widths_.back();
        std::size_t count = 0;
        switch (s.kind) {
            case LayerKind::Linear:
                if (s.in != w) {
                    throw DimensionError("Mlp: linear layer expects " + std::to_string(s.in) +
                                         " inputs, previous width is " + std::to_string(w));
                }
                if (s.out < 1) throw InvalidArgument("Mlp: linear layer needs out >= 1");
                w = s.out;
                count = linear_param_count(s);
                break;
            case LayerKind::Dropout:
                if (!(s.rate >= 0.0 && s.rate < 1.0)) {
                    throw InvalidArgument("Mlp: dropout rate must be in [0, 1)");
                }
                break;
            default:
                break;
        }
        widths_.push_back(w);
        param_offsets_.push_back(param_offsets_.back() + count);
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(param_offsets_.back()));
}

Mlp::Builder Mlp::builder(Eigen::Index input_dim) { return Builder(input_dim); }

std::size_t Mlp::tap_boundary(Tap tap) const {
    switch (tap) {
        case Tap::Feature: return feature_tap_;
        case Tap::Predictive: return layers_.size();
        case Tap::Logits: return ends_with_softmax() ? layers_.size() - 1 : layers_.size();
    }
    throw InvalidArgument("unknown tap");
}

bool Mlp::has_dropout() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const LayerSpec& s) { return s.kind == LayerKind::Dropout; });
}

bool Mlp::ends_with_softmax() const {
    return !layers_.empty() && layers_.back().kind == LayerKind::Softmax;
}

Eigen::Map<const Matrix> Mlp::weight(std::size_t l) const {
    const auto& s = layers_.at(l);
    return {params_.data() + param_offsets_[l], s.out, s.in};
}

Eigen::Map<Matrix> Mlp::weight(std::size_t l) {
    const auto& s = layers_.at(l);
    return {params_.data() + param_offsets_[l], s.out, s.in};
}

Eigen::Map<const Vector> Mlp::bias(std::size_t l) const {
    const auto& s = layers_.at(l);
    return {params_.data() + param_offsets_[l] + s.out * s.in, s.bias ? s.out : 0};
}

Eigen::Map<Vector> Mlp::bias(std::size_t l) {
    const auto& s = layers_.at(l);
    return {params_.data() + param_offsets_[l] + s.out * s.in, s.bias ? s.out : 0};
}

Mlp::Builder& Mlp::Builder::linear(Eigen::Index out, bool bias) {
    layers_.push_back(LayerSpec::linear(width_, out, bias));
    width_ = out;
    return *this;
}

Mlp::Builder& Mlp::Builder::relu() {
    layers_.push_back(LayerSpec::relu());
    return *this;
}

Mlp::Builder& Mlp::Builder::dropout(double rate) {
    layers_.push_back(LayerSpec::dropout(rate));
    return *this;
}

Mlp::Builder& Mlp::Builder::softmax() {
    layers_.push_back(LayerSpec::softmax());
    return *this;
}

Mlp::Builder& Mlp::Builder::tap() {
    tap_ = layers_.size();
    return *this;
}

Mlp Mlp::Builder::build() const { return Mlp(input_dim_, layers_, tap_.value_or(layers_.size())); }

ForwardResult forward(const Mlp& model, const Eigen::Ref<const Matrix>& x, Mode mode, Rng* rng) {
    const std::size_t end = model.layers().size();
    Trace t = run_forward(model, x, mode, rng, end);
    ForwardResult r;
    r.feature = t.inputs[model.feature_tap()];
    r.output = std::move(t.inputs[end]);
    return r;
}

Matrix tap_output(const Mlp& model, const Eigen::Ref<const Matrix>& x, Tap tap) {
    const std::size_t end = model.tap_boundary(tap);
    Trace t = run_forward(model, x, Mode::Eval, nullptr, end);
    return std::move(t.inputs[end]);
}

Vector tap_output_row(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap) {
    if (x.size() != model.input_dim()) {
        throw DimensionError("forward: input has " + std::to_string(x.size()) +
                             " entries, model expects " + std::to_string(model.input_dim()));
    }
    const std::size_t end = model.tap_boundary(tap);
    Vector a = x;
    for (std::size_t l = 0; l < end; ++l) {
        const auto& s = model.layers()[l];
        switch (s.kind) {
            case LayerKind::Linear: {
                Vector next = model.weight(l) * a;
                if (s.bias) next += model.bias(l);
                a = std::move(next);
                break;
            }
            case LayerKind::ReLU:
                a = a.cwiseMax(0.0);
                break;
            case LayerKind::Dropout:
                break;
            case LayerKind::Softmax:
                softmax_inplace(a);
                break;
        }
    }
    return a;
}

Vector tap_output_shift(const Mlp& model, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& delta, ParamScope scope, Tap tap) {
    if (x.size() != model.input_dim()) {
        throw DimensionError("forward: input has " + std::to_string(x.size()) +
                             " entries, model expects " + std::to_string(model.input_dim()));
    }
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    if (delta.size() != n) {
        throw DimensionError("tap_output_shift: delta has " + std::to_string(delta.size()) +
                             " entries, scope has " + std::to_string(n));
    }
    const std::size_t end = model.tap_boundary(tap);
    // a is the clean activation, da the exact change caused by delta.
    Vector a = x;
    Vector da = Vector::Zero(x.size());
    for (std::size_t l = 0; l < end; ++l) {
        const auto& s = model.layers()[l];
        switch (s.kind) {
            case LayerKind::Linear: {
                const auto off = static_cast<Eigen::Index>(model.param_offset(l));
                Vector next = model.weight(l) * a;
                Vector dnext = model.weight(l) * da;
                if (off < n) {
                    const Eigen::Map<const Matrix> dw(delta.data() + off, s.out, s.in);
                    dnext.noalias() += dw * (a + da);
                    if (s.bias) dnext += delta.segment(off + s.out * s.in, s.out);
                }
                if (s.bias) next += model.bias(l);
                a = std::move(next);
                da = std::move(dnext);
                break;
            }
            case LayerKind::ReLU:
                for (Eigen::Index i = 0; i < a.size(); ++i) {
                    const double shifted = a[i] + da[i];
                    if (a[i] > 0.0 && shifted > 0.0) continue;
                    da[i] = std::max(shifted, 0.0) - std::max(a[i], 0.0);
                }
                a = a.cwiseMax(0.0);
                break;
            case LayerKind::Dropout:
                break;
            case LayerKind::Softmax: {
                Vector shifted = a + da;
                softmax_inplace(a);
                if (da.cwiseAbs().maxCoeff() > 1.0) {
                    softmax_inplace(shifted);
                    da = shifted - a;
                    break;
                }
                // p'_i - p_i = p_i (expm1(dl_i) - s) / (1 + s), s = sum_j p_j expm1(dl_j)
                const Vector e = da.unaryExpr([](double v) { return std::expm1(v); });
                const double mix = a.dot(e);
                da = a.cwiseProduct((e.array() - mix).matrix()) / (1.0 + mix);
                break;
            }
        }
    }
    return da;
}

Vector flatten_params(const Mlp& model, ParamScope scope) {
    return model.params().head(static_cast<Eigen::Index>(model.n_params(scope)));
}

void write_params(Mlp& model, const Eigen::Ref<const Vector>& values, ParamScope scope) {
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    if (values.size() != n) {
        throw DimensionError("write_params: expected " + std::to_string(n) + " values, got " +
                             std::to_string(values.size()));
    }
    model.params().head(n) = values;
}

void apply_perturbation(Mlp& model, const Eigen::Ref<const Vector>& delta, ParamScope scope) {
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    if (delta.size() != n) {
        throw DimensionError("apply_perturbation: delta has " + std::to_string(delta.size()) +
                             " entries, scope has " + std::to_string(n));
    }
    if (model.pristine_) throw InvalidState("apply_perturbation: model is already perturbed");
    model.pristine_ = model.params_;
    model.params_.head(n) += delta;
}

void remove_perturbation(Mlp& model) {
    if (!model.pristine_) throw InvalidState("remove_perturbation: no perturbation applied");
    model.params_ = std::move(*model.pristine_);
    model.pristine_.reset();
}

Matrix jacobian(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap, ParamScope scope) {
    const std::size_t end = model.tap_boundary(tap);
    const Matrix row = x.transpose();
    const Trace t = run_forward(model, row, Mode::Eval, nullptr, end);
    const Eigen::Index d = model.width_at(end);
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    Matrix jac(d, n);
    Vector grad(model.params().size());
    for (Eigen::Index i = 0; i < d; ++i) {
        grad.setZero();
        Matrix seed = Matrix::Zero(1, d);
        seed(0, i) = 1.0;
        run_backward(model, t, std::move(seed), end, grad);
        jac.row(i) = grad.head(n).transpose();
    }
    return jac;
}

Matrix finite_diff_jacobian(const Mlp& model, const Eigen::Ref<const Vector>& x, Tap tap,
                            ParamScope scope, double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite_diff_jacobian: h must be > 0");
    const auto n = static_cast<Eigen::Index>(model.n_params(scope));
    const Eigen::Index d = model.width_at(model.tap_boundary(tap));
    Mlp probe = model;
    Matrix jac(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double orig = probe.params()[j];
        probe.params()[j] = orig + h;
        const Vector plus = tap_output_row(probe, x, tap);
        probe.params()[j] = orig - h;
        const Vector minus = tap_output_row(probe, x, tap);
        probe.params()[j] = orig;
        jac.col(j) = (plus - minus) / (2.0 * h);
    }
    return jac;
}

void init_params(Mlp& model, std::uint64_t seed) {
    Rng rng(seed);
    model.params().setZero();
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& s = model.layers()[l];
        if (s.kind != LayerKind::Linear) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = model.weight(l);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
}

void TrainConfig::validate() const {
    const double lr = std::visit([](const auto& o) { return o.lr; }, optimizer);
    if (!(lr >= 0.0)) throw InvalidArgument("TrainConfig: lr must be >= 0");
    if (epochs < 0) throw InvalidArgument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
}

LossGradient loss_and_gradient(const Mlp& model, const Eigen::Ref<const Matrix>& x,
                               const Eigen::Ref<const Matrix>& y, Loss loss, Mode mode,
                               Rng* rng) {
    const std::size_t n_layers = model.layers().size();
    if (y.rows() != x.rows() || y.cols() != model.output_dim()) {
        throw DimensionError("loss_and_gradient: target shape mismatch");
    }
    const auto batch = static_cast<double>(x.rows());
    LossGradient out;
    out.grad = Vector::Zero(model.params().size());
    if (loss == Loss::CrossEntropy) {
        if (!model.ends_with_softmax()) {
            throw InvalidArgument("cross entropy requires a trailing softmax layer");
        }
        // Start from the logits: dL/dlogits = p - y keeps the gradient finite.
        const std::size_t end = n_layers - 1;
        Trace t = run_forward(model, x, mode, rng, end);
        const Matrix& logits = t.inputs[end];
        Matrix p = logits;
        softmax_rows(p);
        double total = 0.0;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const double mx = logits.row(r).maxCoeff();
            const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
            total -= (y.row(r).array() * (logits.row(r).array() - lse)).sum();
        }
        out.loss = total / batch;
        run_backward(model, t, (p - y) / batch, end, out.grad);
    } else {
        Trace t = run_forward(model, x, mode, rng, n_layers);
        const Matrix diff = t.inputs[n_layers] - y;
        out.loss = 0.5 * diff.squaredNorm() / batch;
        run_backward(model, t, diff / batch, n_layers, out.grad);
    }
    return out;
}

std::vector<double> train(Mlp& model, const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Matrix>& y, const TrainConfig& cfg) {
    cfg.validate();
    if (model.perturbed()) throw InvalidState("train: model is perturbed");
    std::vector<double> curve;
    if (cfg.epochs == 0) return curve;
    if (x.rows() == 0) throw InvalidState("train: labeled set is empty");
    if (y.rows() != x.rows()) throw DimensionError("train: inputs and targets differ in rows");

    Rng rng(cfg.seed);
    const Eigen::Index n = x.rows();
    const Eigen::Index p = model.params().size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    Vector m1 = Vector::Zero(p);
    Vector m2 = Vector::Zero(p);
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Matrix xb(b, x.cols());
            Matrix yb(b, y.cols());
            for (Eigen::Index i = 0; i < b; ++i) {
                xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
                yb.row(i) = y.row(order[static_cast<std::size_t>(start + i)]);
            }
            LossGradient lg = loss_and_gradient(model, xb, yb, cfg.loss, Mode::Train, &rng);
            epoch_loss += lg.loss * static_cast<double>(b);
            ++step;
            std::visit(
                [&](const auto& opt) {
                    using T = std::decay_t<decltype(opt)>;
                    Vector& theta = model.params();
                    if constexpr (std::is_same_v<T, SgdConfig>) {
                        if (opt.weight_decay != 0.0) lg.grad += opt.weight_decay * theta;
                        if (opt.momentum != 0.0) {
                            m1 = opt.momentum * m1 + lg.grad;
                            theta -= opt.lr * m1;
                        } else {
                            theta -= opt.lr * lg.grad;
                        }
                    } else {
                        m1 = opt.beta1 * m1 + (1.0 - opt.beta1) * lg.grad;
                        m2 = opt.beta2 * m2 + (1.0 - opt.beta2) * lg.grad.cwiseAbs2();
                        const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
                        const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
                        theta.array() -= opt.lr * (m1.array() / c1) /
                                         ((m2.array() / c2).sqrt() + opt.eps);
                    }
                },
                cfg.optimizer);
        }
        curve.push_back(epoch_loss / static_cast<double>(n));
    }
    return curve;
}

std::string checkpoint_to_json(const Mlp& model) {
    json doc;
    doc["format"] = "nstab-mlp";
    doc["version"] = 1;
    doc["input_dim"] = model.input_dim();
    doc["feature_tap"] = model.feature_tap();
    json layers = json::array();
    for (const auto& s : model.layers()) {
        json l{{"type", kind_name(s.kind)}};
        if (s.kind == LayerKind::Linear) {
            l["in"] = s.in;
            l["out"] = s.out;
            l["bias"] = s.bias;
        } else if (s.kind == LayerKind::Dropout) {
            l["rate"] = s.rate;
        }
        layers.push_back(std::move(l));
    }
    doc["layers"] = std::move(layers);
    // nlohmann writes the shortest decimal that parses back to the same
    // double (at most 17 significant digits).
    doc["params"] = std::vector<double>(model.params().data(),
                                        model.params().data() + model.params().size());
    return doc.dump();
}

Mlp checkpoint_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    try {
        if (doc.at("format") != "nstab-mlp") throw FormatError("checkpoint: wrong format tag");
        if (doc.at("version") != 1) throw FormatError("checkpoint: unsupported version");
        std::vector<LayerSpec> layers;
        for (const auto& l : doc.at("layers")) {
            LayerSpec s;
            s.kind = kind_from_name(l.at("type").get<std::string>());
            if (s.kind == LayerKind::Linear) {
                s.in = l.at("in").get<Eigen::Index>();
                s.out = l.at("out").get<Eigen::Index>();
                s.bias = l.at("bias").get<bool>();
            } else if (s.kind == LayerKind::Dropout) {
                s.rate = l.at("rate").get<double>();
            }
            layers.push_back(s);
        }
        Mlp model(doc.at("input_dim").get<Eigen::Index>(), std::move(layers),
                  doc.at("feature_tap").get<std::size_t>());
        const auto values = doc.at("params").get<std::vector<double>>();
        write_params(model, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())),
                     ParamScope::All);
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << checkpoint_to_json(model) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace nstab
