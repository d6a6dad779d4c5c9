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
#include <ostream>
#include <string>
#include <vector>

#include "nstab/theory_check.hpp"

namespace nstab {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutRootEnv = "NSTAB_OUT_ROOT";

inline constexpr const char* kCheckSuites[] = {"second_moment", "jacobian", "distance",     "inner",
                                               "concentration", "efficiency", "all"};

/// Reports for one named suite at its default scale. `threshold_override`
/// replaces every report's threshold and can only turn a pass into a fail.
std::vector<CheckReport> run_check_suite(const std::string& suite, std::uint64_t seed,
                                         std::optional<double> threshold_override = std::nullopt);

/// SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(const std::string& content);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Full command-line entry point. Returns 0 on success, 1 on runtime
/// failure and 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nstab
