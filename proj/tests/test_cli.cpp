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

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/al_loop.hpp"
#include "nstab/cli.hpp"

using namespace nstab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::initializer_list<std::string> args) {
    std::vector<std::string> store{"nstab"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : store) argv.push_back(s.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nstab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, ',');) out.push_back(f);
    return out;
}

fs::path write_config(const fs::path& dir, const json& overrides = json::object()) {
    json doc = {
        {"dataset", {{"kind", "blobs"}, {"n_per_class", 30}, {"classes", 3}, {"dim", 2},
                     {"noise_std", 1.0}, {"centers_seed", 2}, {"seed", 3}}},
        {"model", {{"hidden", {8}}}},
        {"strategy", "noise_stability"},
        {"cycles", 3},
        {"budget", 4},
        {"initial_labeled", 6},
        {"noise", {{"samplings", 5}}},
        {"train", {{"epochs", 5}, {"batch_size", 8}}},
        {"seeds", {0, 1}},
    };
    doc.merge_patch(overrides);
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

}  // namespace

TEST_CASE("git blob hash matches git") {
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("atomic writes leave no temporary file") {
    const fs::path dir = scratch("atomic");
    write_file_atomic(dir / "a" / "x.txt", "one");
    write_file_atomic(dir / "a" / "x.txt", "two");
    CHECK(slurp(dir / "a" / "x.txt") == "two");
    CHECK_FALSE(fs::exists(dir / "a" / "x.txt.tmp"));
}

TEST_CASE("usage errors exit with 2") {
    const fs::path dir = scratch("usage");
    const fs::path cfg = write_config(dir);
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"run", cfg.string(), "--bogus"}).code == 2);
    CHECK(cli({"run", (dir / "missing.json").string()}).code == 2);
    CHECK(cli({"check", "--suite", "nosuch"}).code == 2);

    const Result bad = cli({"run", cfg.string(), "--strategy", "nosuch", "--out", (dir / "o").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("noise_stability_d") != std::string::npos);
    CHECK(json::parse(lines(bad.err).at(0)).at("error").at("type") == "usage");

    std::ofstream(dir / "typo.json") << R"({"cycels": 2})";
    CHECK(cli({"run", (dir / "typo.json").string(), "--out", (dir / "t").string()}).code == 2);

    CHECK(cli({"--version"}).code == 0);
}

TEST_CASE("runtime failures exit with 1") {
    const fs::path dir = scratch("runtime");
    const fs::path cfg = write_config(
        dir, {{"dataset", {{"kind", "idx"}, {"images", (dir / "none").string()},
                           {"labels", (dir / "none").string()}}}});
    const Result r = cli({"run", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(json::parse(lines(r.err).at(0)).at("error").at("type") == "runtime");
}

TEST_CASE("run writes manifest, reports and curve") {
    const fs::path dir = scratch("run");
    const fs::path cfg = write_config(dir);
    const Result r = cli({"run", cfg.string(), "--out", (dir / "a").string(), "--seeds", "0,1,2"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("status") == "ok");

    const auto curve = lines(slurp(dir / "a" / "curve.csv"));
    REQUIRE(curve.size() == 4);
    CHECK(curve[0] == "cycle,labeled_size,strategy,metric_mean,metric_std,n_seeds");
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const auto f = split_csv(curve[i]);
        CHECK(f.size() == 6);
        CHECK(f[2] == "noise_stability");
        CHECK(f[5] == "3");
    }
    CHECK(lines(slurp(dir / "a" / "reports.jsonl")).size() == 9);

    const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest.at("kind") == "nstab-manifest");
    CHECK(manifest.at("tool_version") == kToolVersion);
    CHECK(manifest.at("config").at("seeds") == json({0, 1, 2}));
    CHECK(manifest.at("config_hash") == git_blob_hash(manifest.at("config").dump()));
    CHECK(manifest.at("end").is_string());

    REQUIRE(cli({"run", cfg.string(), "--out", (dir / "b").string(), "--seeds", "0,1,2"}).code == 0);
    CHECK(slurp(dir / "a" / "reports.jsonl") == slurp(dir / "b" / "reports.jsonl"));

    // the manifest alone reproduces the run
    REQUIRE(cli({"run", (dir / "a" / "manifest.json").string(), "--out", (dir / "c").string()}).code == 0);
    CHECK(slurp(dir / "a" / "reports.jsonl") == slurp(dir / "c" / "reports.jsonl"));
    CHECK(slurp(dir / "a" / "curve.csv") == slurp(dir / "c" / "curve.csv"));
}

TEST_CASE("output root from the environment") {
    const fs::path dir = scratch("env");
    const fs::path cfg = write_config(dir, {{"seeds", {0}}, {"cycles", 1}});
    ::setenv(kOutRootEnv, (dir / "root").c_str(), 1);
    const Result r = cli({"run", cfg.string(), "--out", "rel"});
    ::unsetenv(kOutRootEnv);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "root" / "rel" / "curve.csv"));
}

TEST_CASE("check subcommand") {
    const Result j = cli({"check", "--suite", "jacobian"});
    CHECK(j.code == 0);
    const auto rows = lines(j.out);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        const json rep = json::parse(row);
        CHECK(rep.at("name") == "jacobian_norm");
        CHECK(rep.at("passed") == true);
    }
    CHECK(j.err.empty());

    const Result forced = cli({"check", "--suite", "second_moment", "--threshold-override", "0"});
    CHECK(forced.code != 0);
    CHECK(json::parse(lines(forced.out).at(0)).at("passed") == false);

    for (const char* suite : {"second_moment", "distance", "inner"}) {
        const auto reports = run_check_suite(suite, 0);
        CHECK(reports.size() == 1);
        CHECK(reports[0].passed);
    }
}

TEST_CASE("sweep subcommand") {
    const fs::path dir = scratch("sweep");
    const fs::path cfg = write_config(dir, {{"seeds", {0}}, {"cycles", 2}});
    const Result z = cli({"sweep", cfg.string(), "--param", "zeta", "--values", "1e-6,1e-4,1e-2,1,10",
                          "--out", (dir / "z").string()});
    REQUIRE(z.code == 0);
    const auto wide = lines(slurp(dir / "z" / "comparison.csv"));
    CHECK(wide.at(0) == "cycle,labeled_size,1e-6,1e-4,1e-2,1,10");
    CHECK(wide.size() == 3);
    CHECK(fs::exists(dir / "z" / "zeta=1e-4" / "reports.jsonl"));
    CHECK(lines(slurp(dir / "z" / "sweep.csv")).size() == 1 + 5 * 2);

    const Result k = cli({"sweep", cfg.string(), "--param", "K", "--values", "1,3,10,30,50",
                          "--out", (dir / "k").string()});
    REQUIRE(k.code == 0);
    CHECK(split_csv(lines(slurp(dir / "k" / "comparison.csv")).at(0)).size() == 2 + 5);
    const json k3 = json::parse(slurp(dir / "k" / "K=3" / "manifest.json"));
    CHECK(k3.at("config").at("noise").at("samplings") == 3);

    const Result sel = cli({"sweep", cfg.string(), "--param", "selector", "--values",
                            "k_center,kmeans_pp", "--out", (dir / "s").string()});
    CHECK(sel.code == 0);

    CHECK(cli({"sweep", cfg.string(), "--param", "zeta", "--values", "", "--out",
               (dir / "e").string()}).code == 2);
    CHECK(cli({"sweep", cfg.string(), "--param", "zeta", "--values", "abc", "--out",
               (dir / "n").string()}).code == 2);
    CHECK(cli({"sweep", cfg.string(), "--param", "K", "--values", "2.5", "--out",
               (dir / "f").string()}).code == 2);
    CHECK(cli({"sweep", cfg.string(), "--param", "width", "--values", "1"}).code == 2);
}

TEST_CASE("ablate subcommand") {
    const fs::path dir = scratch("ablate");
    const fs::path cfg = write_config(dir);
    const Result r = cli({"ablate", cfg.string(), "--out", (dir / "a").string(), "--single"});
    REQUIRE(r.code == 0);
    const auto header = split_csv(lines(slurp(dir / "a" / "ablation.csv")).at(0));
    CHECK(header == std::vector<std::string>{"cycle", "labeled_size", "noise_stability",
                                             "noise_stability_m", "noise_stability_d"});

    std::vector<std::string> first_lines;
    for (const char* arm : {"noise_stability", "noise_stability_m", "noise_stability_d"}) {
        std::vector<json> cycle1;
        for (const auto& l : lines(slurp(dir / "a" / arm / "reports.jsonl"))) {
            const json rep = json::parse(l);
            if (rep.at("cycle") == 1) cycle1.push_back({rep.at("seed"), rep.at("labeled_size"),
                                                        rep.at("train_loss"), rep.at("metric")});
        }
        CHECK(cycle1.size() == 2);
        first_lines.push_back(json(cycle1).dump());
    }
    CHECK(first_lines[0] == first_lines[1]);
    CHECK(first_lines[0] == first_lines[2]);

    const auto single = split_csv(lines(slurp(dir / "a" / "single.csv")).at(0));
    CHECK(single == std::vector<std::string>{"cycle", "labeled_size", "noise_stability", "bald_mcdropout"});
    const json one = json::parse(slurp(dir / "a" / "single" / "bald_mcdropout" / "manifest.json"));
    CHECK(one.at("config").at("budget") == 1);
    CHECK(one.at("config").at("mc_samples") == 50);
    CHECK(one.at("config").at("noise").at("samplings") == 50);
}
