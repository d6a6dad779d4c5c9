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

#include "nstab/al_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>

namespace nstab {

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

const char* tap_name(Tap t) {
    switch (t) {
        case Tap::Feature: return "feature";
        case Tap::Predictive: return "predictive";
        case Tap::Logits: return "logits";
    }
    return "?";
}

Tap parse_tap(const std::string& s) {
    if (s == "feature") return Tap::Feature;
    if (s == "predictive") return Tap::Predictive;
    if (s == "logits") return Tap::Logits;
    throw ConfigError("noise.tap: expected auto, feature, predictive or logits");
}

TaskKind parse_task(const std::string& s) {
    if (s == "classification") return TaskKind::Classification;
    if (s == "regression") return TaskKind::Regression;
    throw ConfigError("dataset.task: expected classification or regression");
}

const char* task_name(TaskKind t) {
    return t == TaskKind::Classification ? "classification" : "regression";
}

ColumnKind parse_column_kind(const std::string& s) {
    if (s == "numeric") return ColumnKind::Numeric;
    if (s == "categorical") return ColumnKind::Categorical;
    if (s == "target") return ColumnKind::Target;
    throw ConfigError("dataset.schema: column kind must be numeric, categorical or target");
}

const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Numeric: return "numeric";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Target: return "target";
    }
    return "?";
}

std::uint64_t cycle_stream(int cycle) { return static_cast<std::uint64_t>(cycle); }

void standardize(ExperimentData& data) {
    const Standardizer s = Standardizer::fit(data.pool.inputs);
    data.pool.inputs = s.apply(data.pool.inputs);
    data.test.inputs = s.apply(data.test.inputs);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (cycles < 1) throw ConfigError("cycles must be >= 1");
    if (initial_labeled < 1 && train.epochs > 0) {
        throw ConfigError("initial_labeled must be >= 1 when training occurs");
    }
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
    try {
        noise.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (selector == SelectMethod::KDpp) throw ConfigError("selector k_dpp is not supported");
    if (model.dropout < 0.0 || model.dropout >= 1.0) throw ConfigError("model.dropout must be in [0, 1)");
}

SelectMethod ExperimentConfig::resolved_selector() const {
    if (selector) return *selector;
    return strategy == StrategyId::Badge ? SelectMethod::KMeansPP : SelectMethod::KCenter;
}

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig cfg;
    check_keys(doc,
               {"dataset", "model", "strategy", "cycles", "budget", "initial_labeled", "noise",
                "train", "selector", "seed_from_labeled", "mc_samples", "seeds", "retrain_mode",
                "workers"},
               "config");

    bool loss_given = false;
    if (doc.contains("dataset")) {
        const json& d = doc["dataset"];
        check_keys(d,
                   {"kind", "n_per_class", "classes", "dim", "n", "noise_std", "center_spread",
                    "centers_seed", "seed", "images", "labels", "test_images", "test_labels",
                    "path", "schema", "task", "test_fraction", "standardize"},
                   "dataset");
        auto& s = cfg.dataset;
        read(d, "kind", s.kind, "dataset");
        read(d, "n_per_class", s.n_per_class, "dataset");
        read(d, "classes", s.classes, "dataset");
        read(d, "dim", s.dim, "dataset");
        read(d, "n", s.n, "dataset");
        read(d, "noise_std", s.noise_std, "dataset");
        read(d, "center_spread", s.center_spread, "dataset");
        read(d, "centers_seed", s.centers_seed, "dataset");
        read(d, "seed", s.seed, "dataset");
        read(d, "images", s.images, "dataset");
        read(d, "labels", s.labels, "dataset");
        read(d, "test_images", s.test_images, "dataset");
        read(d, "test_labels", s.test_labels, "dataset");
        read(d, "path", s.path, "dataset");
        read(d, "test_fraction", s.test_fraction, "dataset");
        read(d, "standardize", s.standardize, "dataset");
        if (s.kind == "linear_regression") s.task = TaskKind::Regression;
        if (d.contains("task")) s.task = parse_task(d["task"].get<std::string>());
        if (d.contains("schema")) {
            for (const auto& col : d["schema"]) {
                check_keys(col, {"name", "kind"}, "dataset.schema");
                s.schema.emplace_back(col.at("name").get<std::string>(),
                                      parse_column_kind(col.at("kind").get<std::string>()));
            }
        }
        static const std::set<std::string> kinds{"blobs", "two_moons", "linear_regression", "idx", "csv"};
        if (!kinds.count(s.kind)) {
            throw ConfigError("dataset.kind: expected blobs, two_moons, linear_regression, idx or csv");
        }
    }
    if (doc.contains("model")) {
        const json& m = doc["model"];
        check_keys(m, {"hidden", "dropout"}, "model");
        read(m, "hidden", cfg.model.hidden, "model");
        read(m, "dropout", cfg.model.dropout, "model");
    }
    if (doc.contains("strategy")) cfg.strategy = parse_strategy(doc["strategy"].get<std::string>());
    read(doc, "cycles", cfg.cycles, "config");
    read(doc, "budget", cfg.budget, "config");
    read(doc, "initial_labeled", cfg.initial_labeled, "config");
    if (doc.contains("noise")) {
        const json& n = doc["noise"];
        check_keys(n, {"zeta", "samplings", "tap"}, "noise");
        read(n, "zeta", cfg.noise.zeta, "noise");
        read(n, "samplings", cfg.noise.samplings, "noise");
        if (n.contains("tap") && n["tap"] != "auto") {
            cfg.noise.tap = parse_tap(n["tap"].get<std::string>());
            cfg.noise_tap_auto = false;
        }
    }
    if (doc.contains("train")) {
        const json& t = doc["train"];
        check_keys(t,
                   {"optimizer", "lr", "momentum", "weight_decay", "beta1", "beta2", "eps",
                    "epochs", "batch_size", "loss"},
                   "train");
        std::string opt = "adam";
        read(t, "optimizer", opt, "train");
        if (opt == "adam") {
            AdamConfig a;
            read(t, "lr", a.lr, "train");
            read(t, "beta1", a.beta1, "train");
            read(t, "beta2", a.beta2, "train");
            read(t, "eps", a.eps, "train");
            cfg.train.optimizer = a;
        } else if (opt == "sgd") {
            SgdConfig s;
            read(t, "lr", s.lr, "train");
            read(t, "momentum", s.momentum, "train");
            read(t, "weight_decay", s.weight_decay, "train");
            cfg.train.optimizer = s;
        } else {
            throw ConfigError("train.optimizer: expected adam or sgd");
        }
        read(t, "epochs", cfg.train.epochs, "train");
        read(t, "batch_size", cfg.train.batch_size, "train");
        if (t.contains("loss") && t["loss"] != "auto") {
            const auto l = t["loss"].get<std::string>();
            if (l == "cross_entropy") {
                cfg.train.loss = Loss::CrossEntropy;
            } else if (l == "squared_error") {
                cfg.train.loss = Loss::SquaredError;
            } else {
                throw ConfigError("train.loss: expected auto, cross_entropy or squared_error");
            }
            loss_given = true;
        }
    }
    if (!loss_given) {
        cfg.train.loss = cfg.dataset.task == TaskKind::Classification ? Loss::CrossEntropy
                                                                      : Loss::SquaredError;
    }
    if (cfg.noise_tap_auto) {
        cfg.noise.tap = cfg.dataset.task == TaskKind::Classification ? Tap::Predictive : Tap::Feature;
    }
    if (doc.contains("selector") && doc["selector"] != "auto") {
        cfg.selector = parse_select_method(doc["selector"].get<std::string>());
    }
    read(doc, "seed_from_labeled", cfg.seed_from_labeled, "config");
    read(doc, "mc_samples", cfg.mc_samples, "config");
    read(doc, "seeds", cfg.seeds, "config");
    read(doc, "workers", cfg.workers, "config");
    if (doc.contains("retrain_mode")) {
        const auto m = doc["retrain_mode"].get<std::string>();
        if (m == "from_scratch") {
            cfg.retrain_mode = RetrainMode::FromScratch;
        } else if (m == "warm_start") {
            cfg.retrain_mode = RetrainMode::WarmStart;
        } else {
            throw ConfigError("retrain_mode: expected from_scratch or warm_start");
        }
    }
    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    const auto& s = cfg.dataset;
    json schema = json::array();
    for (const auto& [name, kind] : s.schema) schema.push_back({{"name", name}, {"kind", column_kind_name(kind)}});
    json train = std::visit(
        [](const auto& o) -> json {
            using T = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<T, SgdConfig>) {
                return {{"optimizer", "sgd"}, {"lr", o.lr}, {"momentum", o.momentum},
                        {"weight_decay", o.weight_decay}};
            } else {
                return {{"optimizer", "adam"}, {"lr", o.lr}, {"beta1", o.beta1},
                        {"beta2", o.beta2},    {"eps", o.eps}};
            }
        },
        cfg.train.optimizer);
    train["epochs"] = cfg.train.epochs;
    train["batch_size"] = cfg.train.batch_size;
    train["loss"] = cfg.train.loss == Loss::CrossEntropy ? "cross_entropy" : "squared_error";
    return {
        {"dataset",
         {{"kind", s.kind},
          {"n_per_class", s.n_per_class},
          {"classes", s.classes},
          {"dim", s.dim},
          {"n", s.n},
          {"noise_std", s.noise_std},
          {"center_spread", s.center_spread},
          {"centers_seed", s.centers_seed},
          {"seed", s.seed},
          {"images", s.images},
          {"labels", s.labels},
          {"test_images", s.test_images},
          {"test_labels", s.test_labels},
          {"path", s.path},
          {"schema", schema},
          {"task", task_name(s.task)},
          {"test_fraction", s.test_fraction},
          {"standardize", s.standardize}}},
        {"model", {{"hidden", cfg.model.hidden}, {"dropout", cfg.model.dropout}}},
        {"strategy", to_string(cfg.strategy)},
        {"cycles", cfg.cycles},
        {"budget", cfg.budget},
        {"initial_labeled", cfg.initial_labeled},
        {"noise",
         {{"zeta", cfg.noise.zeta},
          {"samplings", cfg.noise.samplings},
          {"tap", cfg.noise_tap_auto ? "auto" : tap_name(cfg.noise.tap)}}},
        {"train", train},
        {"selector", cfg.selector ? to_string(*cfg.selector) : "auto"},
        {"seed_from_labeled", cfg.seed_from_labeled},
        {"mc_samples", cfg.mc_samples},
        {"seeds", cfg.seeds},
        {"retrain_mode", cfg.retrain_mode == RetrainMode::FromScratch ? "from_scratch" : "warm_start"},
        {"workers", cfg.workers},
    };
}

ExperimentData load_experiment_data(const DatasetSpec& spec, std::uint64_t split_seed) {
    ExperimentData data;
    auto split_into = [&](const Dataset& full) {
        SplitResult parts = split(full, spec.test_fraction, split_seed);
        data.pool = std::move(parts.train);
        data.test = std::move(parts.test);
    };
    if (spec.kind == "blobs") {
        split_into(gen_blobs(spec.n_per_class, spec.classes, spec.dim, spec.centers_seed,
                             spec.noise_std, spec.seed, spec.center_spread));
    } else if (spec.kind == "two_moons") {
        split_into(gen_two_moons(spec.n, spec.noise_std, spec.seed));
    } else if (spec.kind == "linear_regression") {
        split_into(gen_linear_regression(spec.n, spec.dim, spec.centers_seed, spec.noise_std, spec.seed));
    } else if (spec.kind == "idx") {
        Dataset full = load_idx(spec.images, spec.labels);
        if (!spec.test_images.empty()) {
            data.pool = std::move(full);
            data.test = load_idx(spec.test_images, spec.test_labels);
            data.test.num_classes = data.pool.num_classes = std::max(data.pool.num_classes, data.test.num_classes);
        } else {
            split_into(full);
        }
    } else if (spec.kind == "csv") {
        // Split raw rows first so that encoder statistics never see the test rows.
        const CsvTable table = read_csv(spec.path);
        TabularEncoder probe(spec.schema, spec.task);
        probe.fit(table);
        const Dataset all = probe.transform(table);
        SplitResult parts = split(all, spec.test_fraction, split_seed);
        CsvTable train_rows{table.header, {}};
        CsvTable test_rows{table.header, {}};
        for (std::size_t i : parts.train_idx) train_rows.rows.push_back(table.rows[i]);
        for (std::size_t i : parts.test_idx) test_rows.rows.push_back(table.rows[i]);
        TabularEncoder enc(spec.schema, spec.task);
        enc.fit(train_rows);
        data.pool = enc.transform(train_rows);
        data.test = enc.transform(test_rows);
        data.pool.provenance = data.test.provenance = "csv(" + spec.path + ")";
        return data;  // numeric columns already z-scored on the train split
    } else {
        throw ConfigError("unknown dataset kind '" + spec.kind + "'");
    }
    if (spec.standardize) standardize(data);
    data.pool.validate();
    data.test.validate();
    return data;
}

Mlp build_model(const ModelSpec& spec, Eigen::Index input_dim, int output_dim, TaskKind task) {
    auto b = Mlp::builder(input_dim);
    for (int h : spec.hidden) {
        b.linear(h).relu();
        if (spec.dropout > 0.0) b.dropout(spec.dropout);
    }
    b.tap().linear(output_dim);
    if (task == TaskKind::Classification) b.softmax();
    return b.build();
}

PoolState::PoolState(std::size_t pool_size, const IndexList& initial_labeled)
    : pool_size_(pool_size), labeled_(initial_labeled) {
    std::vector<char> taken(pool_size, 0);
    for (std::size_t i : labeled_) {
        if (i >= pool_size) throw InvalidArgument("PoolState: labeled index out of range");
        if (taken[i]) throw InvalidArgument("PoolState: duplicate labeled index");
        taken[i] = 1;
    }
    for (std::size_t i = 0; i < pool_size; ++i) {
        if (!taken[i]) unlabeled_.push_back(i);
    }
}

void PoolState::annotate(const IndexList& selected) {
    std::set<std::size_t> chosen(selected.begin(), selected.end());
    if (chosen.size() != selected.size()) throw InvalidState("annotate: duplicate selection");
    for (std::size_t i : selected) {
        if (!std::binary_search(unlabeled_.begin(), unlabeled_.end(), i)) {
            throw InvalidState("annotate: index " + std::to_string(i) + " is not unlabeled");
        }
    }
    IndexList rest;
    rest.reserve(unlabeled_.size() - selected.size());
    for (std::size_t i : unlabeled_) {
        if (!chosen.count(i)) rest.push_back(i);
    }
    unlabeled_ = std::move(rest);
    labeled_.insert(labeled_.end(), selected.begin(), selected.end());
    history_.push_back(selected);
}

void PoolState::check_invariants() const {
    std::vector<int> seen(pool_size_, 0);
    for (std::size_t i : labeled_) ++seen[i];
    for (std::size_t i : unlabeled_) ++seen[i];
    for (std::size_t i = 0; i < pool_size_; ++i) {
        if (seen[i] != 1) throw InvalidState("pool invariant violated at index " + std::to_string(i));
    }
    std::set<std::size_t> picked;
    for (const auto& h : history_) {
        for (std::size_t i : h) {
            if (!picked.insert(i).second) {
                throw InvalidState("index " + std::to_string(i) + " selected twice");
            }
        }
    }
}

json CycleReport::to_json() const {
    json j{{"seed", seed},
           {"strategy", strategy},
           {"cycle", cycle},
           {"labeled_size", labeled_size},
           {"selected", selected},
           {"metric_name", metric_name},
           {"metric", metric},
           {"train_loss", train_loss}};
    if (warning) j["warning"] = *warning;
    return j;
}

RunSeeds RunSeeds::from(std::uint64_t run_seed) {
    return {derive_seed(run_seed, stream_id("split")), derive_seed(run_seed, stream_id("initial")),
            derive_seed(run_seed, stream_id("init")), derive_seed(run_seed, stream_id("train")),
            derive_seed(run_seed, stream_id("strategy"))};
}

std::uint64_t RunSeeds::per_cycle(std::uint64_t stream, int cycle) const {
    return derive_seed(stream, cycle_stream(cycle));
}

double evaluate(const Mlp& model, const Dataset& test) {
    if (test.size() == 0) throw InvalidArgument("evaluate: empty test set");
    const Matrix out = tap_output(model, test.inputs, Tap::Predictive);
    if (test.task == TaskKind::Classification) {
        std::size_t correct = 0;
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            if (argmax_first(out.row(r)) == test.labels[static_cast<std::size_t>(r)]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(test.size());
    }
    return (out - test.targets).cwiseAbs().sum() / static_cast<double>(out.size());
}

IndexList query(const ExperimentConfig& cfg, const Mlp& model, const Dataset& pool,
                const PoolState& state, std::size_t budget, std::uint64_t seed) {
    const IndexList& unl = state.unlabeled();
    IndexList local;
    if (budget == 0 || unl.empty()) return local;
    const Dataset candidates = pool.subset(unl);
    const Dataset labeled = pool.subset(state.labeled());

    switch (cfg.strategy) {
        case StrategyId::Random:
            local = select_random(unl.size(), budget, seed);
            break;
        case StrategyId::Entropy: {
            if (!model.ends_with_softmax()) throw ConfigError("entropy requires a classification model");
            local = select_entropy(tap_output(model, candidates.inputs, Tap::Predictive), budget);
            break;
        }
        case StrategyId::Coreset: {
            const Matrix feats = tap_output(model, candidates.inputs, Tap::Feature);
            const Matrix lab = labeled.size() ? tap_output(model, labeled.inputs, Tap::Feature)
                                              : Matrix(0, feats.cols());
            local = select_coreset(feats, lab, budget, seed);
            break;
        }
        case StrategyId::Badge: {
            if (!model.ends_with_softmax()) throw ConfigError("badge requires a classification model");
            const Matrix emb = badge_embeddings(tap_output(model, candidates.inputs, Tap::Feature),
                                                tap_output(model, candidates.inputs, Tap::Predictive));
            SelectionRequest req(emb);
            req.budget = budget;
            req.seed = seed;
            req.method = cfg.resolved_selector();
            local = select(req);
            break;
        }
        case StrategyId::BaldMcDropout:
            local = select_bald_mcdropout(model, candidates.inputs, cfg.mc_samples, budget, seed);
            break;
        case StrategyId::NoiseStability:
        case StrategyId::NoiseStabilityM:
        case StrategyId::NoiseStabilityD: {
            NoiseConfig nc = cfg.noise;
            nc.seed = seed;
            const PerturbationSet set = make_perturbation_set(model, nc);
            const PoolEmbeddings emb = pool_embeddings(model, candidates.inputs, set, nc.tap, cfg.workers);
            SelectionRequest req(emb.vectors);
            req.budget = budget;
            req.seed = derive_seed(seed, stream_id("selector"));
            Matrix lab_emb;
            if (cfg.seed_from_labeled && labeled.size() > 0) {
                lab_emb = pool_embeddings(model, labeled.inputs, set, nc.tap, cfg.workers).vectors;
                req.seeds_from_labeled.emplace(lab_emb);
            }
            if (cfg.strategy == StrategyId::NoiseStabilityM) {
                req.method = SelectMethod::TopMagnitude;
            } else if (cfg.strategy == StrategyId::NoiseStabilityD) {
                req.method = SelectMethod::KCenterNormalized;
            } else {
                req.method = cfg.resolved_selector();
            }
            local = select(req);
            break;
        }
    }
    IndexList out;
    out.reserve(local.size());
    for (std::size_t i : local) out.push_back(unl[i]);
    return out;
}

RunResult run_single(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed) {
    cfg.validate();
    const Dataset& pool = data.pool;
    const RunSeeds seeds = RunSeeds::from(seed);
    if (cfg.strategy == StrategyId::BaldMcDropout && cfg.model.dropout <= 0.0) {
        throw ConfigError("bald_mcdropout requires model.dropout > 0");
    }
    const std::size_t initial = std::min(cfg.initial_labeled, pool.size());
    if (initial == 0 && cfg.train.epochs > 0) throw ConfigError("empty labeled pool at first training");

    RunResult result;
    result.seed = seed;
    result.strategy = to_string(cfg.strategy);
    result.initial_labeled = select_random(pool.size(), initial, seeds.initial);
    PoolState state(pool.size(), result.initial_labeled);

    Mlp model = build_model(cfg.model, pool.dim(), pool.output_dim(), pool.task);
    if (cfg.retrain_mode == RetrainMode::WarmStart) init_params(model, seeds.per_cycle(seeds.init, 1));

    for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
        const auto t0 = std::chrono::steady_clock::now();
        CycleReport rep;
        rep.cycle = cycle;
        rep.seed = seed;
        rep.strategy = result.strategy;
        rep.labeled_size = state.labeled().size();
        rep.metric_name = pool.task == TaskKind::Classification ? "accuracy" : "mae";

        if (cfg.retrain_mode == RetrainMode::FromScratch) {
            init_params(model, seeds.per_cycle(seeds.init, cycle));
        }
        const Dataset labeled = pool.subset(state.labeled());
        TrainConfig tc = cfg.train;
        tc.seed = seeds.per_cycle(seeds.train, cycle);
        rep.train_loss = train(model, labeled.inputs, labeled.target_matrix(), tc);
        rep.metric = evaluate(model, data.test);

        std::size_t budget = cfg.budget;
        if (budget > state.unlabeled().size()) {
            rep.warning = "budget " + std::to_string(budget) + " clamped to " +
                          std::to_string(state.unlabeled().size()) + " unlabeled examples";
            budget = state.unlabeled().size();
        }
        rep.selected = query(cfg, model, pool, state, budget, seeds.per_cycle(seeds.strategy, cycle));
        state.annotate(rep.selected);
        state.check_invariants();
        rep.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.cycles.push_back(std::move(rep));
    }
    return result;
}

std::vector<RunResult> run_active_learning(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RunResult> runs;
    for (std::uint64_t seed : cfg.seeds) {
        const ExperimentData data = load_experiment_data(cfg.dataset, RunSeeds::from(seed).split);
        runs.push_back(run_single(cfg, data, seed));
    }
    return runs;
}

std::vector<CurvePoint> aggregate_runs(const std::vector<RunResult>& runs) {
    std::vector<CurvePoint> curve;
    if (runs.empty()) return curve;
    const std::size_t cycles = runs.front().cycles.size();
    for (const auto& r : runs) {
        if (r.cycles.size() != cycles) throw DataError("aggregate_runs: runs differ in cycle count");
    }
    for (std::size_t c = 0; c < cycles; ++c) {
        CurvePoint p;
        p.cycle = runs.front().cycles[c].cycle;
        p.labeled_size = runs.front().cycles[c].labeled_size;
        p.n_seeds = runs.size();
        double sum = 0.0;
        for (const auto& r : runs) {
            if (r.cycles[c].cycle != p.cycle) throw DataError("aggregate_runs: cycle indices differ");
            sum += r.cycles[c].metric;
        }
        p.mean = sum / static_cast<double>(runs.size());
        if (runs.size() > 1) {
            double ss = 0.0;
            for (const auto& r : runs) ss += (r.cycles[c].metric - p.mean) * (r.cycles[c].metric - p.mean);
            p.std = std::sqrt(ss / static_cast<double>(runs.size() - 1));
        }
        curve.push_back(p);
    }
    return curve;
}

void write_reports_jsonl(std::ostream& out, const std::vector<RunResult>& runs) {
    for (const auto& r : runs) {
        for (const auto& c : r.cycles) out << c.to_json().dump() << '\n';
    }
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve,
                     const std::string& strategy) {
    out << "cycle,labeled_size,strategy,metric_mean,metric_std,n_seeds\n";
    out << std::setprecision(17);
    for (const auto& p : curve) {
        out << p.cycle << ',' << p.labeled_size << ',' << strategy << ',' << p.mean << ',' << p.std
            << ',' << p.n_seeds << '\n';
    }
}

}  // namespace nstab
