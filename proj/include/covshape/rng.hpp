// covshape: statistical beamforming and covariance shaping simulator
// Copyright (C) 2026 the covshape authors
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

#pragma once

#include <armadillo>
#include <complex>
#include <cstdint>
#include <random>

namespace covshape
{

// SplitMix64 finalizer. Bijective on 64-bit words, good avalanche; used only
// for deriving generator seeds, never as the simulation generator itself.
constexpr std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derive an independent generator for a (point, trial, stream) coordinate of a
// run. Every random quantity gets its own stream id, so results are invariant
// under the assignment of trials to worker threads.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t point, std::uint64_t trial, std::uint64_t stream)
{
    std::uint64_t s = mix64(seed);
    s = mix64(s ^ point);
    s = mix64(s ^ trial);
    s = mix64(s ^ stream);
    return std::mt19937_64(s);
}

// Scalar draw from the circularly-symmetric complex standard normal
// distribution, i.e. real and imaginary parts are N(0, 1/2).
inline std::complex<double> randcn(std::mt19937_64 &rng)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    const double re = n01(rng);
    const double im = n01(rng);
    return {re * 0.70710678118654752440, im * 0.70710678118654752440};
}

inline arma::cx_vec randcn_vec(arma::uword n, std::mt19937_64 &rng)
{
    arma::cx_vec out(n);
    for (arma::uword i = 0; i < n; ++i)
        out[i] = randcn(rng);
    return out;
}

// Column-major fill order (fixed so that draws are reproducible).
inline arma::cx_mat randcn_mat(arma::uword rows, arma::uword cols, std::mt19937_64 &rng)
{
    arma::cx_mat out(rows, cols);
    for (arma::uword c = 0; c < cols; ++c)
        for (arma::uword r = 0; r < rows; ++r)
            out(r, c) = randcn(rng);
    return out;
}

// Uniform point on the complex unit sphere in dimension n.
inline arma::cx_vec rand_unit_vec(arma::uword n, std::mt19937_64 &rng)
{
    arma::cx_vec v = randcn_vec(n, rng);
    double nrm = arma::norm(v);
    while (nrm == 0.0) // astronomically unlikely, but keeps the contract exact
    {
        v = randcn_vec(n, rng);
        nrm = arma::norm(v);
    }
    return v / nrm;
}

} // namespace covshape
