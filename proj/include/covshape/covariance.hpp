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

#include "covshape/scenario.hpp"

#include <armadillo>
#include <complex>
#include <optional>
#include <vector>

namespace covshape
{

// Relative eigenvalue floor: eigenvalues of a covariance down to
// -psd_tolerance * trace are attributed to roundoff and clipped to zero;
// anything lower is rejected as not positive semidefinite.
constexpr double psd_tolerance = 1e-10;

// Relative trace floor below which a shaped covariance counts as degenerate
// (the shaping vector has annihilated the whole UE-side subspace).
constexpr double degenerate_trace_tolerance = 1e-14;

// Unit-norm beamforming weights applied across one UE's antennas.
class ShapingVector
{
  public:
    // Normalizes to unit length; rejects zero or non-finite input.
    explicit ShapingVector(arma::cx_vec v);

    const arma::cx_vec &vec() const
    {
        return v_;
    }
    arma::uword size() const
    {
        return v_.n_elem;
    }

  private:
    arma::cx_vec v_;
};

// Sum-of-rank-one-path form of a channel covariance: nonnegative weights with
// per-path UE-side (N x U) and BS-side (M x U) response vectors. Path u
// contributes weights[u] * (a_u b_u^H viewed as a stacked vector) outer-square.
struct PathSum
{
    arma::vec weights;
    arma::cx_mat ue_resp;
    arma::cx_mat bs_resp;

    arma::uword n_paths() const
    {
        return weights.n_elem;
    }
};

// Covariance of a vectorized N x M channel, held as an M x M grid of N x N
// blocks; block (m, n) is the cross-covariance between BS-antenna columns m
// and n of the channel matrix. Carries either a dense matrix, a path-sum
// form, or both; all accessors agree across representations.
class BlockCovariance
{
  public:
    static BlockCovariance from_dense(arma::cx_mat sigma, int n_ue, int n_bs);
    static BlockCovariance from_paths(arma::vec weights, arma::cx_mat ue_resp, arma::cx_mat bs_resp);

    int n_ue() const
    {
        return n_ue_;
    }
    int n_bs() const
    {
        return n_bs_;
    }

    bool has_dense() const
    {
        return dense_.has_value();
    }
    bool has_paths() const
    {
        return paths_.has_value();
    }
    const PathSum &paths() const;

    // Full (N*M)^2 matrix; materialized on demand for path-sum instances.
    arma::cx_mat dense() const;

    // N x N block (m, n), zero-based BS antenna indices.
    arma::cx_mat block(int m, int n) const;

    double trace() const;

  private:
    BlockCovariance() = default;
    int n_ue_ = 0, n_bs_ = 0;
    std::optional<arma::cx_mat> dense_;
    std::optional<PathSum> paths_;
};

// Shaped covariance seen by the BS: the M x M covariance of the conjugated
// effective channel row, together with the shaping vector that produced it.
struct EffectiveCovariance
{
    arma::cx_mat phi;
    arma::cx_vec shaping;

    double trace() const
    {
        return arma::trace(phi).real();
    }
};

// Covariance of one UE's channel in sum-of-paths form, with weights
// kappa/(1+kappa) * d^(-beta) for the direct path and d_u^(-beta)/(1+kappa)
// for scattered paths.
BlockCovariance path_covariance(const Scenario &scenario, int ue);

// Covariance grid of an aggregate UE-side / BS-side correlation pair:
// block (m, n) equals conj(T(m, n)) * R. Useful as a separable-correlation
// reference model; shaping cannot change the overlap of two such covariances.
BlockCovariance kronecker_covariance(const arma::cx_mat &r, const arma::cx_mat &t);

// UE-side N x N correlation (sum of the diagonal blocks).
arma::cx_mat receive_cov(const BlockCovariance &cov);

// BS-side M x M correlation; entry (m, n) is the trace of block (n, m).
arma::cx_mat transmit_cov(const BlockCovariance &cov);

// M x M covariance of the conjugated row of UE antenna n.
arma::cx_mat per_antenna_cov(const BlockCovariance &cov, int antenna);

// Covariance of the conjugated effective row after applying the shaping
// vector across the UE antennas.
EffectiveCovariance effective_covariance(const BlockCovariance &cov, const ShapingVector &v);

// trace(phi) of the shaped covariance, without materializing it.
double effective_trace(const BlockCovariance &cov, const arma::cx_vec &v);

// trace(phi_k * phi_j) for two shaped covariances (real and nonnegative).
double effective_cross_trace(const BlockCovariance &cov_k, const BlockCovariance &cov_j, const arma::cx_vec &v_k,
                             const arma::cx_vec &v_j);

// Normalized overlap of the two shaped covariances:
// trace(phi_k phi_j) / (trace(phi_k) trace(phi_j)). Throws when either shaped
// trace is degenerate.
double delta_metric(const BlockCovariance &cov_k, const BlockCovariance &cov_j, const ShapingVector &v_k,
                    const ShapingVector &v_j);

// Normalized instantaneous cross-gain between two UEs' effective channels;
// its variance across channel draws equals the overlap metric.
std::complex<double> omega_sample(const arma::cx_mat &chan_k, const arma::cx_mat &chan_j,
                                  const EffectiveCovariance &cov_k, const EffectiveCovariance &cov_j);

// trace(A * B) for Hermitian A, B of equal size (imaginary part is roundoff).
double hermitian_product_trace(const arma::cx_mat &a, const arma::cx_mat &b);

// Verifies Hermitian symmetry (within rel. tolerance) and the PSD eigenvalue
// floor; throws std::invalid_argument naming `what` on violation.
void check_hermitian_psd(const arma::cx_mat &m, const char *what);

// Factor L of a PSD matrix with phi = L * L^H, clipping roundoff-negative
// eigenvalues at the documented floor.
arma::cx_mat psd_sqrt(const arma::cx_mat &phi);

} // namespace covshape
