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

#include "nstab/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nstab/al_loop.hpp"

namespace nstab {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A manifest written by a previous run is accepted wherever a config is.
ExperimentConfig load_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (doc.is_object() && doc.value("kind", "") == "nstab-manifest") doc = doc.at("config");
    return config_from_json(doc);
}

fs::path resolve_out(const std::string& flag, const std::string& fallback) {
    fs::path p = flag.empty() ? fs::path(fallback) : fs::path(flag);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / p;
    return flag.empty() ? fs::path("runs") / p : p;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

class Manifest {
  public:
    Manifest(fs::path dir, std::string command, json config)
        : dir_(std::move(dir)), doc_{{"kind", "nstab-manifest"},
                                     {"tool_version", kToolVersion},
                                     {"command", std::move(command)},
                                     {"output_dir", dir_.string()},
                                     {"config", std::move(config)}} {
        doc_["config_hash"] = git_blob_hash(doc_["config"].dump());
        doc_["start"] = utc_now();
        doc_["end"] = nullptr;
        write();
    }
    json& extra() { return doc_; }
    void finish() {
        doc_["end"] = utc_now();
        write();
    }

  private:
    void write() const { write_file_atomic(dir_ / "manifest.json", doc_.dump(2) + "\n"); }
    fs::path dir_;
    json doc_;
};

std::vector<CurvePoint> run_experiment(const ExperimentConfig& cfg, const fs::path& dir,
                                       const std::string& command) {
    fs::create_directories(dir);
    Manifest manifest(dir, command, config_to_json(cfg));
    const std::vector<RunResult> runs = run_active_learning(cfg);
    const std::vector<CurvePoint> curve = aggregate_runs(runs);

    std::ostringstream reports, curve_csv, timings;
    write_reports_jsonl(reports, runs);
    write_curve_csv(curve_csv, curve, to_string(cfg.strategy));
    for (const auto& r : runs) {
        for (const auto& c : r.cycles) {
            timings << json{{"seed", r.seed}, {"cycle", c.cycle}, {"wall_time_s", c.wall_time_s}}.dump()
                    << '\n';
        }
    }
    write_file_atomic(dir / "reports.jsonl", reports.str());
    write_file_atomic(dir / "curve.csv", curve_csv.str());
    write_file_atomic(dir / "timings.jsonl", timings.str());
    manifest.finish();
    return curve;
}

/// cycle,labeled_size,<label>... with one metric_mean column per arm.
std::string wide_csv(const std::vector<std::string>& labels,
                     const std::vector<std::vector<CurvePoint>>& curves) {
    std::ostringstream ss;
    ss << "cycle,labeled_size";
    for (const auto& l : labels) ss << ',' << l;
    ss << '\n';
    const std::size_t rows = curves.empty() ? 0 : curves.front().size();
    for (std::size_t i = 0; i < rows; ++i) {
        ss << curves.front()[i].cycle << ',' << curves.front()[i].labeled_size;
        for (const auto& c : curves) ss << ',' << fmt(c[i].mean);
        ss << '\n';
    }
    return ss.str();
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                     const std::string& strategy) {
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!strategy.empty()) {
        try {
            cfg.strategy = parse_strategy(strategy);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    cfg.validate();
}

bool is_noise_strategy(StrategyId s) {
    return s == StrategyId::NoiseStability || s == StrategyId::NoiseStabilityM ||
           s == StrategyId::NoiseStabilityD;
}

double parse_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw UsageError("value '" + s + "' is not numeric");
    return v;
}

void apply_sweep_value(ExperimentConfig& cfg, const std::string& param, const std::string& value) {
    if (param == "zeta") {
        cfg.noise.zeta = parse_number(value);
    } else if (param == "K") {
        const double k = parse_number(value);
        if (k < 1 || k != static_cast<int>(k)) throw UsageError("K must be a positive integer");
        cfg.noise.samplings = static_cast<int>(k);
    } else {
        try {
            cfg.selector = parse_select_method(value);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

int cmd_run(const std::string& config_path, const std::string& out_flag,
            const std::vector<std::uint64_t>& seeds, const std::string& strategy,
            std::ostream& out) {
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, seeds, strategy);
    const fs::path dir = resolve_out(out_flag, "run-" + fs::path(config_path).stem().string());
    run_experiment(cfg, dir, "run");
    out << json{{"status", "ok"}, {"output_dir", dir.string()}}.dump() << '\n';
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_flag,
              const std::vector<std::uint64_t>& seeds, const std::string& strategy,
              const std::string& param, const std::vector<std::string>& raw_values,
              std::ostream& out) {
    std::vector<std::string> values;
    for (const auto& v : raw_values) {
        if (!v.empty()) values.push_back(v);
    }
    if (values.empty()) throw UsageError("sweep: --values must list at least one value");
    ExperimentConfig base = load_config(config_path);
    apply_overrides(base, seeds, strategy);
    if (param != "selector" && !is_noise_strategy(base.strategy)) {
        throw UsageError("sweep: --param " + param + " requires a noise_stability strategy");
    }
    if (param == "selector" && base.strategy != StrategyId::NoiseStability &&
        base.strategy != StrategyId::Badge) {
        throw UsageError("sweep: --param selector requires noise_stability or badge");
    }
    std::vector<ExperimentConfig> arms;
    for (const auto& v : values) {
        arms.push_back(base);
        apply_sweep_value(arms.back(), param, v);
    }

    const fs::path dir = resolve_out(out_flag, "sweep-" + param + "-" + fs::path(config_path).stem().string());
    fs::create_directories(dir);
    Manifest manifest(dir, "sweep", config_to_json(base));
    manifest.extra()["sweep"] = {{"param", param}, {"values", values}};

    std::vector<std::vector<CurvePoint>> curves;
    std::ostringstream long_form;
    long_form << "param,value,cycle,labeled_size,metric_mean,metric_std,n_seeds\n";
    for (std::size_t i = 0; i < arms.size(); ++i) {
        curves.push_back(run_experiment(arms[i], dir / (param + "=" + values[i]), "sweep"));
        for (const auto& p : curves.back()) {
            long_form << param << ',' << values[i] << ',' << p.cycle << ',' << p.labeled_size << ','
                      << fmt(p.mean) << ',' << fmt(p.std) << ',' << p.n_seeds << '\n';
        }
    }
    write_file_atomic(dir / "sweep.csv", long_form.str());
    write_file_atomic(dir / "comparison.csv", wide_csv(values, curves));
    manifest.finish();
    out << json{{"status", "ok"}, {"output_dir", dir.string()}}.dump() << '\n';
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_flag,
               const std::vector<std::uint64_t>& seeds, bool single, std::ostream& out) {
    ExperimentConfig base = load_config(config_path);
    apply_overrides(base, seeds, "");
    const fs::path dir = resolve_out(out_flag, "ablate-" + fs::path(config_path).stem().string());
    fs::create_directories(dir);
    Manifest manifest(dir, "ablate", config_to_json(base));
    manifest.extra()["single"] = single;

    auto run_arms = [&](const ExperimentConfig& cfg, const std::vector<StrategyId>& ids,
                        const fs::path& sub, const std::string& csv_name) {
        std::vector<std::string> labels;
        std::vector<std::vector<CurvePoint>> curves;
        for (StrategyId id : ids) {
            ExperimentConfig arm = cfg;
            arm.strategy = id;
            labels.push_back(to_string(id));
            curves.push_back(run_experiment(arm, sub / labels.back(), "ablate"));
        }
        write_file_atomic(dir / csv_name, wide_csv(labels, curves));
    };

    run_arms(base,
             {StrategyId::NoiseStability, StrategyId::NoiseStabilityM, StrategyId::NoiseStabilityD},
             dir, "ablation.csv");
    if (single) {
        ExperimentConfig one = base;
        one.budget = 1;
        one.noise.samplings = 50;
        one.mc_samples = 50;
        if (one.model.dropout <= 0.0) one.model.dropout = 0.2;
        manifest.extra()["single_config"] = config_to_json(one);
        run_arms(one, {StrategyId::NoiseStability, StrategyId::BaldMcDropout}, dir / "single",
                 "single.csv");
    }
    manifest.finish();
    out << json{{"status", "ok"}, {"output_dir", dir.string()}}.dump() << '\n';
    return 0;
}

Mlp check_model(int outputs, bool softmax, std::uint64_t seed) {
    auto b = Mlp::builder(2);
    b.linear(8).relu().tap().linear(outputs);
    if (softmax) b.softmax();
    Mlp m = b.build();
    init_params(m, seed);
    return m;
}

}  // namespace

std::vector<CheckReport> run_check_suite(const std::string& suite, std::uint64_t seed,
                                         std::optional<double> threshold_override) {
    const bool all = suite == "all";
    bool known = all;
    for (const char* s : kCheckSuites) known = known || suite == s;
    if (!known) throw UsageError("unknown check suite '" + suite + "'");

    auto sub = [&](const char* name) { return derive_seed(seed, stream_id(name)); };
    std::vector<CheckReport> reports;
    constexpr Eigen::Index kNetSamplings = 5000;
    const Vector xi = (Vector(2) << 0.7, -1.3).finished();
    const Vector xj = (Vector(2) << 1.2, -0.3).finished();

    if (all || suite == "second_moment") {
        reports.push_back(check_second_moment(10, 100000, sub("second_moment")));
    }
    if (all || suite == "jacobian") {
        const Mlp m = check_model(3, true, sub("jacobian.model"));
        reports.push_back(check_jacobian_norm(m, xi, kNetSamplings, sub("jacobian")));
        reports.push_back(check_jacobian_norm(m, xj, kNetSamplings, sub("jacobian.2")));
    }
    if (all || suite == "distance") {
        const Mlp m = check_model(1, false, sub("scalar.model"));
        reports.push_back(check_distance_equivalence(m, xi, xj, kNetSamplings, sub("distance")));
    }
    if (all || suite == "inner") {
        const Mlp m = check_model(1, false, sub("scalar.model"));
        reports.push_back(check_inner_product_equivalence(m, xi, xj, kNetSamplings, sub("inner")));
    }
    if (all || suite == "concentration") {
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(derive_seed(sub("monotonicity"), s));
        for (auto kind : {ConcentrationKind::Magnitude, ConcentrationKind::Distance,
                          ConcentrationKind::InnerProduct}) {
            reports.push_back(concentration_trial(kind, 200, 64, 0.5, 1000, sub("concentration")));
            reports.push_back(concentration_monotonicity(kind, 200, 8, 0.5, 200, seeds));
        }
    }
    if (all || suite == "efficiency") {
        const auto table = sampling_efficiency_sweep(200, {32, 64, 128, 256, 512, 1024}, 0.5,
                                                     sub("efficiency"));
        reports.push_back(efficiency_report(table, 0.5, sub("efficiency")));
    }
    if (threshold_override) {
        for (auto& r : reports) {
            r.threshold = *threshold_override;
            r.passed = r.passed && r.statistic < r.threshold;
        }
    }
    return reports;
}

std::string git_blob_hash(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
        throw std::runtime_error("sha1 digest failed");
    }
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) {
        ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Noise-stability active learning toolkit", "nstab"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::string config, out_dir, strategy, suite = "all", param;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> values;
    std::uint64_t check_seed = 0;
    std::optional<double> threshold_override;
    bool single = false;

    auto* run = app.add_subcommand("run", "Run an active-learning experiment");
    run->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--seeds", seeds, "Comma-separated run seeds")->delimiter(',');
    run->add_option("--strategy", strategy, "Strategy override (" + strategy_names() + ")");

    auto* check = app.add_subcommand("check", "Run theory checks and print CheckReport JSON lines");
    check->add_option("--suite", suite, "Suite to run")
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(kCheckSuites), std::end(kCheckSuites))));
    check->add_option("--seed", check_seed, "Base seed");
    check->add_option("--threshold-override", threshold_override)->group("");

    auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
    sweep->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "Swept parameter")
        ->required()
        ->check(CLI::IsMember({"zeta", "K", "selector"}));
    sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", out_dir, "Output directory");
    sweep->add_option("--seeds", seeds, "Comma-separated run seeds")->delimiter(',');
    sweep->add_option("--strategy", strategy, "Strategy override");

    auto* ablate = app.add_subcommand("ablate", "Compare the noise-stability variants");
    ablate->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", out_dir, "Output directory");
    ablate->add_option("--seeds", seeds, "Comma-separated run seeds")->delimiter(',');
    ablate->add_flag("--single", single, "Also run the budget-1 comparison against MC-dropout BALD");

    auto usage_error = [&](const std::string& msg, const CLI::App* sub) {
        err << json{{"error", {{"type", "usage"}, {"message", msg}}}}.dump() << '\n';
        err << (sub ? sub->help() : app.help());
        return 2;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        return usage_error(e.what(), sub);
    }

    const CLI::App* active = app.get_subcommands().front();
    try {
        if (*run) return cmd_run(config, out_dir, seeds, strategy, out);
        if (*sweep) return cmd_sweep(config, out_dir, seeds, strategy, param, values, out);
        if (*ablate) return cmd_ablate(config, out_dir, seeds, single, out);
        bool ok = true;
        for (const auto& r : run_check_suite(suite, check_seed, threshold_override)) {
            out << r.to_json().dump() << '\n';
            ok = ok && r.passed;
        }
        out.flush();
        return ok ? 0 : 1;
    } catch (const UsageError& e) {
        return usage_error(e.what(), active);
    } catch (const ConfigError& e) {
        return usage_error(e.what(), active);
    } catch (const std::exception& e) {
        err << json{{"error", {{"type", "runtime"}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    }
}

}  // namespace nstab
