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

#include "covshape/covariance.hpp"

#include <cstdint>
#include <vector>

namespace covshape
{

struct OptimizerSettings
{
    double epsilon = 1e-6;   // stop when the summed relative overlap change drops below this
    double alpha = 1.0;      // new-iterate blend weight in (0, 1]; 1 is the plain update
    int max_iterations = 100;
    std::vector<arma::cx_vec> initial; // empty: strongest UE-side eigenvector per UE
    bool distributed = false;          // recompute every update per UE from shared statistics
};

struct OptimizerReport
{
    std::vector<ShapingVector> vectors;
    std::vector<double> objective_trace; // pair-overlap objective, entry 0 is pre-iteration
    int iterations = 0;
    bool converged = false;
};

// Per-entry weights eta(m, n) = v^H block(m, n)^H v / (v^H R v). Identical to
// the shaped covariance divided by its trace; the diagonal sums to one.
arma::cx_mat eta_weights(const BlockCovariance &cov_j, const ShapingVector &v_j);

// Weighted block recombination A = sum_{m,n} eta(m, n) block(m, n). Hermitian
// PSD whenever eta is a shaped covariance over its trace; the Rayleigh
// quotient v^H A v / v^H R v then equals the overlap metric against the UE
// that produced eta.
arma::cx_mat objective_matrix(const BlockCovariance &cov_k, const arma::cx_mat &eta);

struct RayleighResult
{
    arma::cx_vec vector; // unit norm, phase-canonicalized
    double value;        // quotient at the minimizer
};

// Minimizer of v^H A v / v^H B v over unit vectors, for Hermitian PSD A and
// Hermitian positive-definite B (regularized by 1e-12 * trace(B)/N * I when
// the Cholesky factorization fails). Among minimizers tied within tolerance
// the one with the largest v^H B v is returned.
RayleighResult rayleigh_min(const arma::cx_mat &a, const arma::cx_mat &b);

// Two-UE alternating minimization of the overlap metric. The objective trace
// records the overlap after every full sweep; with alpha == 1 it never
// increases.
OptimizerReport optimize_pair(const BlockCovariance &cov_k, const BlockCovariance &cov_j,
                              const OptimizerSettings &settings);

// Cyclic block update over K UEs minimizing the summed pairwise overlap.
// With K == 2 and alpha == 1 this reproduces optimize_pair exactly.
OptimizerReport optimize_multi(const std::vector<const BlockCovariance *> &covs, const OptimizerSettings &settings);
OptimizerReport optimize_multi(const std::vector<BlockCovariance> &covs, const OptimizerSettings &settings);

struct OracleResult
{
    std::vector<ShapingVector> vectors;
    double objective;
};

// Best summed pairwise overlap over per-UE uniformly sampled unit shaping
// vectors. Combination count is samples_per_ue^K; anything above
// max_combinations is refused. Evaluation parallelizes over the first UE's
// samples with a deterministic reduction, so results do not depend on the
// worker count.
OracleResult exhaustive_oracle(const std::vector<const BlockCovariance *> &covs, int samples_per_ue,
                               std::uint64_t seed, int n_threads = 0,
                               std::uint64_t max_combinations = 20000000ULL);

} // namespace covshape
