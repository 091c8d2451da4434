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

#include "covshape/pilots.hpp"
#include "covshape/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace covshape
{

static constexpr double pi = 3.14159265358979323846;

std::vector<int> PilotBook::co_pilot(int ue) const
{
    if (ue < 0 || ue >= n_ues())
        throw std::invalid_argument("PilotBook: UE index out of range");
    std::vector<int> out;
    for (int j = 0; j < n_ues(); ++j)
        if (assignment[j] == assignment[ue])
            out.push_back(j);
    return out;
}

void PilotBook::validate() const
{
    if (tau < 1 || n_groups < 1)
        throw std::invalid_argument("PilotBook: tau and group count must be positive");
    if ((int)sequences.size() != n_groups)
        throw std::invalid_argument("PilotBook: one sequence per group is required");
    if (assignment.empty())
        throw std::invalid_argument("PilotBook: at least one UE is required");
    std::vector<int> members(n_groups, 0);
    for (int g : assignment)
    {
        if (g < 0 || g >= n_groups)
            throw std::invalid_argument("PilotBook: assignment out of range");
        ++members[g];
    }
    for (int m : members)
        if (m == 0)
            throw std::invalid_argument("PilotBook: empty pilot group");
    const int rows_needed = (mode == PilotMode::Full) ? sequences[0].n_rows * n_groups : n_groups;
    if (tau < rows_needed)
        throw std::invalid_argument("PilotBook: tau too short for the group count");
    for (const auto &s : sequences)
    {
        if ((int)s.n_cols != tau)
            throw std::invalid_argument("PilotBook: sequence length mismatch");
        if (mode == PilotMode::Effective && s.n_rows != 1)
            throw std::invalid_argument("PilotBook: effective-mode sequences must be single rows");
    }
}

PilotBook build_pilot_book(PilotMode mode, int n_groups, int tau, const std::vector<int> &ue_antennas,
                           const std::optional<std::vector<int>> &assignment)
{
    if (n_groups < 1)
        throw std::invalid_argument("build_pilot_book: group count must be positive");
    if (ue_antennas.empty())
        throw std::invalid_argument("build_pilot_book: at least one UE is required");
    if ((int)ue_antennas.size() < n_groups)
        throw std::invalid_argument("build_pilot_book: more groups than UEs");

    PilotBook book;
    book.mode = mode;
    book.n_groups = n_groups;
    if (assignment)
    {
        if (assignment->size() != ue_antennas.size())
            throw std::invalid_argument("build_pilot_book: one assignment entry per UE is required");
        book.assignment = *assignment;
    }
    else
    {
        book.assignment.resize(ue_antennas.size());
        for (size_t k = 0; k < ue_antennas.size(); ++k)
            book.assignment[k] = (int)(k % n_groups);
    }

    int block_rows = 1;
    if (mode == PilotMode::Full)
    {
        // All UEs of a group send the same antenna-indexed pilot block, so
        // their antenna counts must agree.
        std::vector<int> group_n(n_groups, 0);
        for (size_t k = 0; k < ue_antennas.size(); ++k)
        {
            if (ue_antennas[k] < 1)
                throw std::invalid_argument("build_pilot_book: antenna counts must be positive");
            int &g = group_n[book.assignment[k]];
            if (g == 0)
                g = ue_antennas[k];
            else if (g != ue_antennas[k])
                throw std::invalid_argument("build_pilot_book: co-pilot UEs must have equal antenna counts");
        }
        block_rows = 0;
        for (int g : group_n)
            block_rows = std::max(block_rows, g);
        for (int g : group_n)
            if (g != block_rows && g != 0)
                throw std::invalid_argument("build_pilot_book: groups must share one antenna count in full mode");
    }

    book.tau = (tau > 0) ? tau : n_groups * block_rows;
    const int rows_needed = n_groups * block_rows;
    if (book.tau < rows_needed)
        throw std::invalid_argument("build_pilot_book: tau must be at least groups (x antennas in full mode)");

    // DFT rows are mutually orthogonal with squared norm tau; distinct groups
    // take disjoint row sets, so cross-group products vanish exactly.
    auto dft_row = [&](int r) {
        arma::cx_mat row(1, book.tau);
        for (int c = 0; c < book.tau; ++c)
            row(0, c) = std::polar(1.0, -2.0 * pi * (double)r * (double)c / (double)book.tau);
        return row;
    };

    for (int g = 0; g < n_groups; ++g)
    {
        if (mode == PilotMode::Effective)
        {
            book.sequences.push_back(dft_row(g));
        }
        else
        {
            arma::cx_mat block(block_rows, book.tau);
            for (int r = 0; r < block_rows; ++r)
                block.row(r) = dft_row(g * block_rows + r) / std::sqrt((double)block_rows);
            book.sequences.push_back(std::move(block));
        }
    }
    book.validate();
    return book;
}

// ---- pilot phase ------------------------------------------------------------

arma::cx_mat simulate_pilot_rx(const ChannelRealization &channels, const PilotBook &book, double rho_ue,
                               double sigma2_bs, std::mt19937_64 &rng)
{
    book.validate();
    if (book.mode != PilotMode::Full)
        throw std::invalid_argument("simulate_pilot_rx: full-mode book required for per-antenna channels");
    if ((int)channels.size() != book.n_ues())
        throw std::invalid_argument("simulate_pilot_rx: one channel per UE is required");
    if (!(rho_ue > 0.0) || !(sigma2_bs > 0.0))
        throw std::invalid_argument("simulate_pilot_rx: powers must be positive");

    const arma::uword m = channels[0].n_cols;
    arma::cx_mat rx = std::sqrt(sigma2_bs) * randcn_mat(m, book.tau, rng);
    for (int k = 0; k < book.n_ues(); ++k)
    {
        const arma::cx_mat &h = channels[k];
        if (h.n_cols != m)
            throw std::invalid_argument("simulate_pilot_rx: BS antenna count mismatch");
        const arma::cx_mat &p = book.sequences[book.assignment[k]];
        if (p.n_rows != h.n_rows)
            throw std::invalid_argument("simulate_pilot_rx: pilot block rows must match UE antennas");
        rx += std::sqrt(rho_ue) * h.t() * p;
    }
    return rx;
}

arma::cx_mat simulate_pilot_rx(const arma::cx_mat &gbar, const PilotBook &book, double rho_ue, double sigma2_bs,
                               std::mt19937_64 &rng)
{
    book.validate();
    if (book.mode != PilotMode::Effective)
        throw std::invalid_argument("simulate_pilot_rx: effective-mode book required for shaped rows");
    if ((int)gbar.n_rows != book.n_ues())
        throw std::invalid_argument("simulate_pilot_rx: one shaped row per UE is required");
    if (!(rho_ue > 0.0) || !(sigma2_bs > 0.0))
        throw std::invalid_argument("simulate_pilot_rx: powers must be positive");

    const arma::uword m = gbar.n_cols;
    arma::cx_mat rx = std::sqrt(sigma2_bs) * randcn_mat(m, book.tau, rng);
    for (int k = 0; k < book.n_ues(); ++k)
        rx += std::sqrt(rho_ue) * gbar.row(k).t() * book.sequences[book.assignment[k]];
    return rx;
}

// ---- estimation -----------------------------------------------------------

static arma::cx_mat phi_qinv(const arma::cx_mat &phi, const arma::cx_mat &q)
{
    // Phi Q^-1 = (Q^-1 Phi)^H for Hermitian Phi and Q.
    arma::cx_mat x;
    if (!arma::solve(x, q, phi, arma::solve_opts::likely_sympd))
        throw std::runtime_error("mmse filter: despread covariance solve failed");
    return x.t();
}

MmseFilter make_mmse_filter(const PilotBook &book, const std::vector<EffectiveCovariance> &covs, double rho_ue,
                            double sigma2_bs)
{
    book.validate();
    if (book.mode != PilotMode::Effective)
        throw std::invalid_argument("make_mmse_filter: effective-mode book required");
    if ((int)covs.size() != book.n_ues())
        throw std::invalid_argument("make_mmse_filter: one shaped covariance per UE is required");
    if (!(rho_ue > 0.0) || !(sigma2_bs > 0.0))
        throw std::invalid_argument("make_mmse_filter: powers must be positive");

    const arma::uword m = covs[0].phi.n_rows;
    const double snr = rho_ue / sigma2_bs;
    MmseFilter f;
    f.mode = PilotMode::Effective;
    f.tau = book.tau;
    f.rho_ue = rho_ue;
    f.assignment = book.assignment;
    for (int g = 0; g < book.n_groups; ++g)
        f.despread.push_back(book.sequences[g].t() / ((double)book.tau * std::sqrt(rho_ue)));

    for (int k = 0; k < book.n_ues(); ++k)
    {
        if (covs[k].phi.n_rows != m || covs[k].phi.n_cols != m)
            throw std::invalid_argument("make_mmse_filter: covariance dimensions must agree");
        arma::cx_mat q = covs[k].phi;
        for (int j : book.co_pilot(k))
            if (j != k)
                q += covs[j].phi;
        q.diag() += 1.0 / ((double)book.tau * snr);
        f.gain.push_back({phi_qinv(covs[k].phi, q)});
        f.q.push_back({std::move(q)});
    }
    return f;
}

MmseFilter make_mmse_filter(const PilotBook &book, const std::vector<std::vector<arma::cx_mat>> &per_antenna,
                            double rho_ue, double sigma2_bs)
{
    book.validate();
    if (book.mode != PilotMode::Full)
        throw std::invalid_argument("make_mmse_filter: full-mode book required");
    if ((int)per_antenna.size() != book.n_ues())
        throw std::invalid_argument("make_mmse_filter: one covariance list per UE is required");
    if (!(rho_ue > 0.0) || !(sigma2_bs > 0.0))
        throw std::invalid_argument("make_mmse_filter: powers must be positive");

    const double snr = rho_ue / sigma2_bs;
    MmseFilter f;
    f.mode = PilotMode::Full;
    f.tau = book.tau;
    f.rho_ue = rho_ue;
    f.assignment = book.assignment;
    for (int g = 0; g < book.n_groups; ++g)
    {
        const double n_ant = (double)book.sequences[g].n_rows;
        f.despread.push_back(book.sequences[g].t() * (n_ant / ((double)book.tau * std::sqrt(rho_ue))));
    }

    for (int k = 0; k < book.n_ues(); ++k)
    {
        const size_t n_ant = per_antenna[k].size();
        if (n_ant != book.sequences[book.assignment[k]].n_rows)
            throw std::invalid_argument("make_mmse_filter: one covariance per UE antenna is required");
        std::vector<arma::cx_mat> gains, qs;
        for (size_t n = 0; n < n_ant; ++n)
        {
            arma::cx_mat q = per_antenna[k][n];
            for (int j : book.co_pilot(k))
                if (j != k)
                    q += per_antenna[j][n];
            q.diag() += (double)n_ant / ((double)book.tau * snr);
            gains.push_back(phi_qinv(per_antenna[k][n], q));
            qs.push_back(std::move(q));
        }
        f.gain.push_back(std::move(gains));
        f.q.push_back(std::move(qs));
    }
    return f;
}

EstimateSet apply_mmse_filter(const MmseFilter &filter, const arma::cx_mat &rx)
{
    if ((int)rx.n_cols != filter.tau)
        throw std::invalid_argument("apply_mmse_filter: observation length mismatch");
    EstimateSet est;
    est.mode = filter.mode;
    est.q = filter.q;
    for (size_t k = 0; k < filter.gain.size(); ++k)
    {
        const arma::cx_mat despread = rx * filter.despread[filter.assignment[k]]; // M x rows
        arma::cx_mat rows(filter.gain[k].size(), rx.n_rows);
        for (size_t n = 0; n < filter.gain[k].size(); ++n)
            rows.row(n) = arma::cx_mat(filter.gain[k][n] * despread.col(n)).t();
        est.rows.push_back(std::move(rows));
    }
    return est;
}

EstimateSet mmse_estimate(const arma::cx_mat &rx, const PilotBook &book, const std::vector<EffectiveCovariance> &covs,
                          double rho_ue, double sigma2_bs)
{
    return apply_mmse_filter(make_mmse_filter(book, covs, rho_ue, sigma2_bs), rx);
}

EstimateSet mmse_estimate(const arma::cx_mat &rx, const PilotBook &book,
                          const std::vector<std::vector<arma::cx_mat>> &per_antenna, double rho_ue, double sigma2_bs)
{
    return apply_mmse_filter(make_mmse_filter(book, per_antenna, rho_ue, sigma2_bs), rx);
}

// ---- estimation quality -----------------------------------------------------

NmseSample nmse(const EstimateSet &estimates, const std::vector<arma::cx_mat> &truth)
{
    if (estimates.rows.size() != truth.size())
        throw std::invalid_argument("nmse: estimate and truth UE counts must match");
    NmseSample out;
    for (size_t k = 0; k < truth.size(); ++k)
    {
        const arma::cx_mat &est = estimates.rows[k];
        const arma::cx_mat &ref = truth[k];
        if (est.n_rows != ref.n_rows || est.n_cols != ref.n_cols)
            throw std::invalid_argument("nmse: estimate and truth dimensions must match");
        double acc = 0.0;
        int used = 0;
        for (arma::uword r = 0; r < ref.n_rows; ++r)
        {
            const double p = std::norm(arma::norm(ref.row(r)));
            if (p == 0.0)
            {
                ++out.excluded_rows;
                continue;
            }
            acc += std::norm(arma::norm(est.row(r) - ref.row(r))) / p;
            ++used;
        }
        out.included.push_back(used > 0);
        out.value.push_back(used > 0 ? acc / (double)used : 0.0);
    }
    return out;
}

} // namespace covshape
