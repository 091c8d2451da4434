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

#include "covshape/pilots.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace covshape
{

// Downlink precoder: column l serves stream `stream[l]` of UE `owner[l]`.
struct PrecodingMatrix
{
    arma::cx_mat w; // M x L
    std::vector<int> owner;
    std::vector<int> stream;

    int n_streams() const
    {
        return (int)w.n_cols;
    }
    void validate() const;
};

// Per-stream receive quality and spectral efficiency; sum is over streams.
struct RateBreakdown
{
    std::vector<double> sinr;
    std::vector<double> rate; // log2(1 + sinr), scaled by any slot fraction
    std::vector<int> owner;
    double sum = 0.0;
};

// Conjugate beamforming on the estimated rows (one column per estimated row,
// shaped or per-antenna), normalized statistically by the summed channel
// power so that E|W|_F^2 <= 1.
PrecodingMatrix mrt_precoder(const EstimateSet &estimates, double total_power);

// Shaped-row convenience: total power is the summed shaped-covariance trace.
PrecodingMatrix mrt_precoder(const EstimateSet &estimates, const std::vector<EffectiveCovariance> &covs);

// Regularized inverse precoder on the stacked estimated rows with ridge
// L / snr_bs, rescaled to unit Frobenius norm. Works for both one estimated
// row per UE and one per UE antenna.
PrecodingMatrix mmse_precoder(const EstimateSet &estimates, double snr_bs);

// Per-stream linear MMSE receive combiners for one UE, computed from its true
// channel and the whole precoder (columns of the result follow the UE's own
// stream order).
arma::cx_mat ue_combiner_sm(const arma::cx_mat &chan, const PrecodingMatrix &precoder, int ue, double snr_bs);

// Spatial-multiplexing sum rate: per-stream SINR after the given combiners,
// with every other stream counted as interference.
RateBreakdown sum_rate_sm(const ChannelRealization &channels, const PrecodingMatrix &precoder,
                          const std::vector<arma::cx_mat> &combiners, double snr_bs);

// Shaped-channel sum rate: one stream per UE, decoded on the scalar effective
// channel; row k of `gbar` is the true shaped row of UE k.
RateBreakdown sum_rate_cs(const arma::cx_mat &gbar, const PrecodingMatrix &precoder, double snr_bs);

// Ergodic-equivalent SINR of conjugate beamforming on MMSE-estimated shaped
// channels, accounting for estimation error and pilot sharing.
std::vector<double> effective_sinr_imperfect(const std::vector<EffectiveCovariance> &covs,
                                             const std::vector<arma::cx_mat> &q, const PilotBook &book,
                                             double snr_bs);

// Same under exact channel knowledge (no estimation loss terms).
std::vector<double> effective_sinr_perfect(const std::vector<EffectiveCovariance> &covs, double snr_bs);

// Sum of log2(1 + sinr) over UEs.
double ergodic_rate_lb(const std::vector<double> &sinrs);

// One consistency row of the estimation-chain moment suite.
struct MomentCheck
{
    std::string name;
    double analytic = 0.0;
    double empirical = 0.0;
    double stderr_est = 0.0;
    bool pass = false;
};

// Monte-Carlo verification of the second/fourth-moment identities behind the
// closed-form SINR expressions, on Gaussian shaped channels drawn from the
// given covariances and estimated through the given pilot book.
std::vector<MomentCheck> moment_oracles(const std::vector<EffectiveCovariance> &covs, const PilotBook &book,
                                        double rho_ue, double sigma2_bs, int trials, std::uint64_t seed);

} // namespace covshape
