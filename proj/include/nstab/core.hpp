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
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace nstab {

// Row-major so that one example is one contiguous row.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using IndexList = std::vector<std::size_t>;

using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class InvalidState : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Malformed binary or text input (IDX headers, truncated files).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Well-formed input whose values violate a contract (bad distributions,
/// unseen categories, unstratifiable splits, mismatched run shapes).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index argmax_first(const Eigen::DenseBase<Derived>& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v.coeff(i) > v.coeff(best)) best = i;
    }
    return best;
}

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream * 0x2545f4914f6cdd1dULL + 1));
}

/// Stream tag from a short label, e.g. derive_seed(run, stream_id("split")).
constexpr std::uint64_t stream_id(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace nstab
