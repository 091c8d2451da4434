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

#include <optional>
#include <random>
#include <vector>

namespace covshape
{

// Full mode trains every UE antenna (N x tau pilot blocks, needs
// tau >= groups * N); Effective mode trains the shaped scalar channel only
// (1 x tau sequences, needs tau >= groups).
enum class PilotMode
{
    Full,
    Effective
};

// Pilot allocation: UEs mapped to groups, one sequence (or block) per group.
// Sequences of different groups are exactly orthogonal, so contamination
// happens only inside a group.
struct PilotBook
{
    PilotMode mode = PilotMode::Effective;
    int tau = 1;
    int n_groups = 1;
    std::vector<int> assignment;         // per UE, values in [0, n_groups)
    std::vector<arma::cx_mat> sequences; // per group: N x tau (Full) or 1 x tau (Effective)

    int n_ues() const
    {
        return (int)assignment.size();
    }
    // UEs sharing the pilot group of `ue`, including `ue` itself.
    std::vector<int> co_pilot(int ue) const;
    void validate() const;
};

// Builds sequences from rows of the tau-point DFT matrix. Full-mode blocks
// get rows scaled so P P^H = (tau/N) I; effective-mode sequences have squared
// norm tau. The default assignment cycles UEs through groups in index order,
// so adjacent UEs never share a group.
PilotBook build_pilot_book(PilotMode mode, int n_groups, int tau, const std::vector<int> &ue_antennas,
                           const std::optional<std::vector<int>> &assignment = std::nullopt);

// Uplink pilot phase as observed at the BS (M x tau), full mode: every UE
// sends its group's pilot block over all antennas at per-symbol power rho_ue.
arma::cx_mat simulate_pilot_rx(const ChannelRealization &channels, const PilotBook &book, double rho_ue,
                               double sigma2_bs, std::mt19937_64 &rng);

// Effective-mode counterpart: row k of `gbar` is the shaped 1 x M channel of
// UE k.
arma::cx_mat simulate_pilot_rx(const arma::cx_mat &gbar, const PilotBook &book, double rho_ue, double sigma2_bs,
                               std::mt19937_64 &rng);

// Linear-MMSE channel estimates produced from a pilot observation. Rows of
// entry k are the estimated channel rows of UE k: one shaped row (Effective)
// or one row per UE antenna (Full). The per-row despread-observation
// covariances are kept for closed-form rate expressions.
struct EstimateSet
{
    PilotMode mode = PilotMode::Effective;
    std::vector<arma::cx_mat> rows; // per UE: 1 x M or N x M
    std::vector<std::vector<arma::cx_mat>> q; // per UE, per estimated row: M x M
};

// Precomputed estimator: applying it to an observation costs one M x M
// product per estimated row. Rebuild only when covariances, the book, or the
// power budget change.
struct MmseFilter
{
    PilotMode mode = PilotMode::Effective;
    int tau = 0;
    double rho_ue = 1.0;
    std::vector<int> assignment;
    std::vector<arma::cx_mat> despread; // per group: tau x N (Full) or tau x 1 (Effective)
    std::vector<std::vector<arma::cx_mat>> gain; // per UE, per row: Phi Q^-1
    std::vector<std::vector<arma::cx_mat>> q;    // per UE, per row
};

// Effective mode: covs[k] is the shaped covariance of UE k. Full mode is the
// overload below.
MmseFilter make_mmse_filter(const PilotBook &book, const std::vector<EffectiveCovariance> &covs, double rho_ue,
                            double sigma2_bs);

// Full mode: per_antenna[k][n] is the covariance of UE k's conjugated row n.
MmseFilter make_mmse_filter(const PilotBook &book, const std::vector<std::vector<arma::cx_mat>> &per_antenna,
                            double rho_ue, double sigma2_bs);

EstimateSet apply_mmse_filter(const MmseFilter &filter, const arma::cx_mat &rx);

// One-shot convenience wrappers around make + apply.
EstimateSet mmse_estimate(const arma::cx_mat &rx, const PilotBook &book, const std::vector<EffectiveCovariance> &covs,
                          double rho_ue, double sigma2_bs);
EstimateSet mmse_estimate(const arma::cx_mat &rx, const PilotBook &book,
                          const std::vector<std::vector<arma::cx_mat>> &per_antenna, double rho_ue, double sigma2_bs);

// Per-UE squared-error-to-power ratio of one realization. Full mode averages
// the per-antenna-row ratios. Rows whose true norm is zero are skipped and
// counted; a UE with no usable rows is marked excluded for the trial.
struct NmseSample
{
    std::vector<double> value;  // per UE, meaningful when included[k]
    std::vector<bool> included; // per UE
    int excluded_rows = 0;
};

NmseSample nmse(const EstimateSet &estimates, const std::vector<arma::cx_mat> &truth);

} // namespace covshape
