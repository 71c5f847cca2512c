// SPDX-License-Identifier: Apache-2.0
//
// chanest: structured tensor channel estimation for MU-MIMO uplink
// Copyright (C) 2026 The chanest authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CHANEST_COMMON_HPP
#define CHANEST_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace chanest {

using cd = std::complex<double>;
using Index = Eigen::Index;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cd kJ{0.0, 1.0};

/// Random engine used throughout; always seeded explicitly.
using Rng = std::mt19937_64;

// splitmix64 finalizer
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a list of stream tags.
/// The result depends only on the values, never on call order, so a trial
/// gets the same stream no matter which thread runs it.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t s = mix_seed(parent);
    for (auto t : tags)
        s = mix_seed(s ^ mix_seed(t + 0x632be59bd9b4e019ULL));
    return s;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_phase(double a)
{
    a = std::remainder(a, kTwoPi);
    if (a <= -kPi)
        a += kTwoPi;
    return a;
}

/// Projects onto the unit circle; zero maps to 1.
inline cd unit_modulus(cd z)
{
    const double m = std::abs(z);
    return m > 0.0 ? z / m : cd{1.0, 0.0};
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

} // namespace chanest

#endif // CHANEST_COMMON_HPP
