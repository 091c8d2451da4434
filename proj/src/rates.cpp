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

#include "covshape/rates.hpp"
#include "covshape/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace covshape
{

namespace
{

// trace(a * b) without forming the product.
std::complex<double> product_trace(const arma::cx_mat &a, const arma::cx_mat &b)
{
    return arma::accu(a % b.st());
}

arma::cx_mat hermitize(const arma::cx_mat &a)
{
    return 0.5 * (a + a.t());
}

} // namespace

void PrecodingMatrix::validate() const
{
    if (w.n_elem == 0)
        throw std::invalid_argument("precoder: empty matrix");
    if (owner.size() != w.n_cols || stream.size() != w.n_cols)
        throw std::invalid_argument("precoder: stream bookkeeping does not match the column count");
    if (!w.is_finite())
        throw std::invalid_argument("precoder: non-finite entries");
}

PrecodingMatrix mrt_precoder(const EstimateSet &estimates, double total_power)
{
    if (estimates.rows.empty())
        throw std::invalid_argument("mrt_precoder: no estimates");
    if (!(total_power > 0.0) || !std::isfinite(total_power))
        throw std::invalid_argument("mrt_precoder: total channel power must be positive");

    const arma::uword m = estimates.rows[0].n_cols;
    const double scale = 1.0 / std::sqrt(total_power);
    PrecodingMatrix out;
    std::vector<arma::cx_vec> cols;
    for (size_t k = 0; k < estimates.rows.size(); ++k)
    {
        if (estimates.rows[k].n_cols != m)
            throw std::invalid_argument("mrt_precoder: estimate rows have inconsistent width");
        for (arma::uword n = 0; n < estimates.rows[k].n_rows; ++n)
        {
            cols.push_back(scale * estimates.rows[k].row(n).t());
            out.owner.push_back((int)k);
            out.stream.push_back((int)n);
        }
    }
    if (cols.empty())
        throw std::invalid_argument("mrt_precoder: no streams to serve");
    out.w.set_size(m, cols.size());
    for (size_t l = 0; l < cols.size(); ++l)
        out.w.col(l) = cols[l];
    return out;
}

PrecodingMatrix mrt_precoder(const EstimateSet &estimates, const std::vector<EffectiveCovariance> &covs)
{
    if (estimates.mode != PilotMode::Effective)
        throw std::invalid_argument("mrt_precoder: needs shaped-row estimates");
    if (covs.size() != estimates.rows.size())
        throw std::invalid_argument("mrt_precoder: estimate and covariance counts differ");

    double total = 0.0;
    for (const auto &cov : covs)
        total += cov.trace();
    return mrt_precoder(estimates, total);
}

PrecodingMatrix mmse_precoder(const EstimateSet &estimates, double snr_bs)
{
    if (!(snr_bs > 0.0) || !std::isfinite(snr_bs))
        throw std::invalid_argument("mmse_precoder: downlink SNR must be positive");
    if (estimates.rows.empty())
        throw std::invalid_argument("mmse_precoder: no estimates");

    const arma::uword m = estimates.rows[0].n_cols;
    arma::uword n_streams = 0;
    for (const auto &rows : estimates.rows)
    {
        if (rows.n_cols != m)
            throw std::invalid_argument("mmse_precoder: estimate rows have inconsistent width");
        n_streams += rows.n_rows;
    }
    if (n_streams == 0)
        throw std::invalid_argument("mmse_precoder: no streams to serve");

    PrecodingMatrix out;
    arma::cx_mat stacked(n_streams, m);
    arma::uword at = 0;
    for (size_t k = 0; k < estimates.rows.size(); ++k)
        for (arma::uword n = 0; n < estimates.rows[k].n_rows; ++n)
        {
            stacked.row(at++) = estimates.rows[k].row(n);
            out.owner.push_back((int)k);
            out.stream.push_back((int)n);
        }

    // H^H (H H^H + (L/snr) I)^-1: the small-side form of the regularized
    // inverse, identical to ridging on the M x M Gram.
    arma::cx_mat gram = stacked * stacked.t();
    gram.diag() += (double)n_streams / snr_bs;
    arma::cx_mat solved;
    if (!arma::solve(solved, gram, stacked, arma::solve_opts::likely_sympd))
        throw std::runtime_error("mmse_precoder: regularized system is singular");
    out.w = solved.t();

    const double fro = arma::norm(out.w, "fro");
    if (!(fro > 0.0))
        throw std::runtime_error("mmse_precoder: zero-norm precoder");
    out.w /= fro;
    return out;
}

arma::cx_mat ue_combiner_sm(const arma::cx_mat &chan, const PrecodingMatrix &precoder, int ue, double snr_bs)
{
    precoder.validate();
    if (!(snr_bs > 0.0))
        throw std::invalid_argument("ue_combiner_sm: downlink SNR must be positive");
    if (chan.n_cols != precoder.w.n_rows)
        throw std::invalid_argument("ue_combiner_sm: channel and precoder disagree on the BS array size");

    const arma::cx_mat rx_dirs = chan * precoder.w; // N x L, column l = H w_l
    arma::cx_mat cov = snr_bs * (rx_dirs * rx_dirs.t());
    cov.diag() += 1.0;

    arma::uvec own(precoder.w.n_cols);
    arma::uword count = 0;
    for (arma::uword l = 0; l < precoder.w.n_cols; ++l)
        if (precoder.owner[l] == ue)
            own(count++) = l;
    if (count == 0)
        return arma::cx_mat(chan.n_rows, 0);

    arma::cx_mat combiners;
    if (!arma::solve(combiners, cov, rx_dirs.cols(own.head(count)), arma::solve_opts::likely_sympd))
        throw std::runtime_error("ue_combiner_sm: receive covariance is singular");
    return combiners;
}

RateBreakdown sum_rate_sm(const ChannelRealization &channels, const PrecodingMatrix &precoder,
                          const std::vector<arma::cx_mat> &combiners, double snr_bs)
{
    precoder.validate();
    if (!(snr_bs > 0.0))
        throw std::invalid_argument("sum_rate_sm: downlink SNR must be positive");
    if (combiners.size() != channels.size())
        throw std::invalid_argument("sum_rate_sm: one combiner block per UE required");

    RateBreakdown out;
    for (size_t k = 0; k < channels.size(); ++k)
    {
        if (channels[k].n_cols != precoder.w.n_rows)
            throw std::invalid_argument("sum_rate_sm: channel and precoder disagree on the BS array size");

        std::vector<arma::uword> own;
        for (arma::uword l = 0; l < precoder.w.n_cols; ++l)
            if (precoder.owner[l] == (int)k)
                own.push_back(l);
        if (combiners[k].n_cols != own.size() || (own.size() > 0 && combiners[k].n_rows != channels[k].n_rows))
            throw std::invalid_argument("sum_rate_sm: combiner block shape does not match UE " + std::to_string(k));

        const arma::cx_mat rx_dirs = channels[k] * precoder.w; // N x L
        for (size_t p = 0; p < own.size(); ++p)
        {
            const arma::cx_vec u = combiners[k].col(p);
            const arma::cx_rowvec gains = u.t() * rx_dirs; // u^H H w_s for every stream s
            const double signal = std::norm(gains(own[p]));
            double interference = 0.0;
            for (arma::uword l = 0; l < gains.n_elem; ++l)
                if (l != own[p])
                    interference += std::norm(gains(l));
            const double noise = std::real(arma::cdot(u, u)) / snr_bs;
            const double sinr = signal / (interference + noise);
            out.sinr.push_back(sinr);
            out.rate.push_back(std::log2(1.0 + sinr));
            out.owner.push_back((int)k);
            out.sum += out.rate.back();
        }
    }
    return out;
}

RateBreakdown sum_rate_cs(const arma::cx_mat &gbar, const PrecodingMatrix &precoder, double snr_bs)
{
    precoder.validate();
    if (!(snr_bs > 0.0))
        throw std::invalid_argument("sum_rate_cs: downlink SNR must be positive");
    if (gbar.n_cols != precoder.w.n_rows)
        throw std::invalid_argument("sum_rate_cs: channel rows and precoder disagree on the BS array size");

    // Exactly one precoder column per UE in shaped operation.
    std::vector<arma::sword> column_of(gbar.n_rows, -1);
    for (arma::uword l = 0; l < precoder.w.n_cols; ++l)
    {
        const int ue = precoder.owner[l];
        if (ue < 0 || (arma::uword)ue >= gbar.n_rows || column_of[ue] >= 0)
            throw std::invalid_argument("sum_rate_cs: precoder does not carry one stream per UE");
        column_of[ue] = (arma::sword)l;
    }

    const arma::cx_mat gains = gbar * precoder.w; // K x L
    RateBreakdown out;
    for (arma::uword k = 0; k < gbar.n_rows; ++k)
    {
        if (column_of[k] < 0)
            throw std::invalid_argument("sum_rate_cs: UE " + std::to_string(k) + " has no stream");
        const double signal = std::norm(gains(k, (arma::uword)column_of[k]));
        double interference = 0.0;
        for (arma::uword l = 0; l < gains.n_cols; ++l)
            if (l != (arma::uword)column_of[k])
                interference += std::norm(gains(k, l));
        const double sinr = signal / (interference + 1.0 / snr_bs);
        out.sinr.push_back(sinr);
        out.rate.push_back(std::log2(1.0 + sinr));
        out.owner.push_back((int)k);
        out.sum += out.rate.back();
    }
    return out;
}

std::vector<double> effective_sinr_imperfect(const std::vector<EffectiveCovariance> &covs,
                                             const std::vector<arma::cx_mat> &q, const PilotBook &book,
                                             double snr_bs)
{
    const size_t n_ues = covs.size();
    if (n_ues == 0 || q.size() != n_ues || (size_t)book.n_ues() != n_ues)
        throw std::invalid_argument("effective_sinr: covariance, observation and pilot counts differ");
    if (book.mode != PilotMode::Effective)
        throw std::invalid_argument("effective_sinr: closed form covers shaped-row estimation only");
    if (!(snr_bs > 0.0))
        throw std::invalid_argument("effective_sinr: downlink SNR must be positive");

    double total = 0.0;
    std::vector<arma::cx_mat> qinv_phi(n_ues), filtered(n_ues);
    for (size_t j = 0; j < n_ues; ++j)
    {
        total += covs[j].trace();
        if (!arma::solve(qinv_phi[j], q[j], covs[j].phi, arma::solve_opts::likely_sympd))
            throw std::runtime_error("effective_sinr: observation covariance is singular");
        filtered[j] = hermitize(covs[j].phi * qinv_phi[j]); // Phi Q^-1 Phi
    }

    std::vector<double> sinr(n_ues);
    for (size_t k = 0; k < n_ues; ++k)
    {
        const double coherent = std::real(arma::trace(filtered[k]));
        double den = total / snr_bs;
        for (size_t j = 0; j < n_ues; ++j)
            den += hermitian_product_trace(covs[k].phi, filtered[j]);
        for (int j : book.co_pilot((int)k))
            if ((size_t)j != k)
                den += std::norm(product_trace(covs[k].phi, qinv_phi[j]));
        sinr[k] = coherent * coherent / den;
    }
    return sinr;
}

std::vector<double> effective_sinr_perfect(const std::vector<EffectiveCovariance> &covs, double snr_bs)
{
    if (covs.empty())
        throw std::invalid_argument("effective_sinr: no covariances");
    if (!(snr_bs > 0.0))
        throw std::invalid_argument("effective_sinr: downlink SNR must be positive");

    double total = 0.0;
    for (const auto &cov : covs)
        total += cov.trace();

    std::vector<double> sinr(covs.size());
    for (size_t k = 0; k < covs.size(); ++k)
    {
        double den = total / snr_bs;
        for (size_t j = 0; j < covs.size(); ++j)
            den += hermitian_product_trace(covs[k].phi, covs[j].phi);
        const double coherent = covs[k].trace();
        sinr[k] = coherent * coherent / den;
    }
    return sinr;
}

double ergodic_rate_lb(const std::vector<double> &sinrs)
{
    double sum = 0.0;
    for (double s : sinrs)
    {
        if (!(s >= 0.0) || !std::isfinite(s))
            throw std::invalid_argument("ergodic_rate_lb: SINR values must be finite and nonnegative");
        sum += std::log2(1.0 + s);
    }
    return sum;
}

namespace
{

// Sample mean / standard error over stored real draws; two-pass variance.
struct RealStats
{
    double mean = 0.0;
    double se = 0.0;
};

RealStats real_stats(const std::vector<double> &samples)
{
    const double n = (double)samples.size();
    RealStats st;
    for (double s : samples)
        st.mean += s;
    st.mean /= n;
    double ss = 0.0;
    for (double s : samples)
        ss += (s - st.mean) * (s - st.mean);
    st.se = std::sqrt(ss / (n - 1.0) / n);
    return st;
}

MomentCheck real_check(const std::string &name, const std::vector<double> &samples, double analytic)
{
    const RealStats st = real_stats(samples);
    MomentCheck row;
    row.name = name;
    row.analytic = analytic;
    row.empirical = st.mean;
    row.stderr_est = st.se;
    row.pass = std::abs(st.mean - analytic) <= 3.0 * st.se + 1e-12 * std::max(1.0, std::abs(analytic));
    return row;
}

} // namespace

std::vector<MomentCheck> moment_oracles(const std::vector<EffectiveCovariance> &covs, const PilotBook &book,
                                        double rho_ue, double sigma2_bs, int trials, std::uint64_t seed)
{
    const size_t n_ues = covs.size();
    if (n_ues == 0 || (size_t)book.n_ues() != n_ues)
        throw std::invalid_argument("moment_oracles: covariance and pilot counts differ");
    if (book.mode != PilotMode::Effective)
        throw std::invalid_argument("moment_oracles: shaped-row pilots required");
    if (trials < 2)
        throw std::invalid_argument("moment_oracles: need at least two trials");

    const arma::uword m = covs[0].phi.n_rows;
    const MmseFilter filter = make_mmse_filter(book, covs, rho_ue, sigma2_bs);

    std::vector<arma::cx_mat> roots(n_ues);
    for (size_t k = 0; k < n_ues; ++k)
        roots[k] = psd_sqrt(covs[k].phi);

    // Closed-form targets of the estimation chain.
    double fro_target = 0.0;
    std::vector<arma::cx_mat> qinv_phi(n_ues), filtered(n_ues);
    for (size_t j = 0; j < n_ues; ++j)
    {
        fro_target += covs[j].trace();
        if (!arma::solve(qinv_phi[j], filter.q[j][0], covs[j].phi, arma::solve_opts::likely_sympd))
            throw std::runtime_error("moment_oracles: observation covariance is singular");
        filtered[j] = hermitize(covs[j].phi * qinv_phi[j]);
    }

    std::vector<double> fro_samples((size_t)trials);
    std::vector<std::vector<std::complex<double>>> self_samples(n_ues);
    std::vector<std::vector<std::vector<double>>> cross_samples(n_ues);
    for (size_t k = 0; k < n_ues; ++k)
    {
        self_samples[k].resize((size_t)trials);
        cross_samples[k].assign(n_ues, std::vector<double>((size_t)trials));
    }

    arma::cx_mat gbar(n_ues, m);
    for (int t = 0; t < trials; ++t)
    {
        auto rng = derive_rng(seed, 0, (std::uint64_t)t, 3);
        for (size_t k = 0; k < n_ues; ++k)
            gbar.row(k) = (roots[k] * randcn_vec(m, rng)).t();

        const arma::cx_mat rx = simulate_pilot_rx(gbar, book, rho_ue, sigma2_bs, rng);
        const EstimateSet est = apply_mmse_filter(filter, rx);

        fro_samples[(size_t)t] = std::pow(arma::norm(gbar, "fro"), 2);
        for (size_t k = 0; k < n_ues; ++k)
            for (size_t j = 0; j < n_ues; ++j)
            {
                const std::complex<double> z = arma::as_scalar(gbar.row(k) * est.rows[j].t());
                if (j == k)
                    self_samples[k][(size_t)t] = z;
                else
                    cross_samples[k][j][(size_t)t] = std::norm(z);
            }
    }

    std::vector<MomentCheck> rows;
    rows.push_back(real_check("shaped_frobenius_power", fro_samples, fro_target));

    std::vector<double> scratch((size_t)trials);
    for (size_t k = 0; k < n_ues; ++k)
    {
        const double coherent = std::real(arma::trace(filtered[k]));
        for (int t = 0; t < trials; ++t)
            scratch[(size_t)t] = self_samples[k][(size_t)t].real();
        rows.push_back(real_check("estimate_correlation_re[" + std::to_string(k) + "]", scratch, coherent));
        for (int t = 0; t < trials; ++t)
            scratch[(size_t)t] = self_samples[k][(size_t)t].imag();
        rows.push_back(real_check("estimate_correlation_im[" + std::to_string(k) + "]", scratch, 0.0));

        std::complex<double> mean(0.0, 0.0);
        for (const auto &z : self_samples[k])
            mean += z;
        mean /= (double)trials;
        for (int t = 0; t < trials; ++t)
            scratch[(size_t)t] = std::norm(self_samples[k][(size_t)t] - mean);
        const double spread = hermitian_product_trace(covs[k].phi, filtered[k]);
        rows.push_back(real_check("estimate_correlation_var[" + std::to_string(k) + "]", scratch, spread));
    }

    for (size_t k = 0; k < n_ues; ++k)
    {
        const auto mates = book.co_pilot((int)k);
        for (size_t j = 0; j < n_ues; ++j)
        {
            if (j == k)
                continue;
            const bool shared = std::find(mates.begin(), mates.end(), (int)j) != mates.end();
            double target = hermitian_product_trace(covs[k].phi, filtered[j]);
            if (shared)
                target += std::norm(product_trace(covs[k].phi, qinv_phi[j]));
            rows.push_back(real_check("cross_leakage_sq[" + std::to_string(k) + "," + std::to_string(j) + "]",
                                      cross_samples[k][j], target));
        }
    }

    // Fourth-moment identity of circularly symmetric Gaussians: the average of
    // x x^H A x x^H converges to A + tr(A) I. Checked entrywise with a
    // simultaneous 5-sigma band; the reported row is the worst entry.
    {
        auto rng_fixed = derive_rng(seed, 1, 0, 4);
        const arma::cx_mat g = randcn_mat(m, m, rng_fixed);
        const arma::cx_mat a = 0.5 * (g + g.t());
        arma::cx_mat target = a;
        target.diag() += std::real(arma::trace(a));

        arma::cx_mat sum(m, m, arma::fill::zeros);
        arma::mat sumsq(m, m, arma::fill::zeros);
        for (int t = 0; t < trials; ++t)
        {
            auto rng = derive_rng(seed, 1, (std::uint64_t)t, 5);
            const arma::cx_vec x = randcn_vec(m, rng);
            const double quad = std::real(arma::as_scalar(x.t() * a * x));
            const arma::cx_mat z = quad * (x * x.t());
            sum += z;
            sumsq += arma::square(arma::abs(z));
        }
        const arma::cx_mat mean = sum / (double)trials;
        arma::mat var = (sumsq - (double)trials * arma::square(arma::abs(mean))) / (trials - 1.0);
        var.transform([](double v) { return std::max(v, 0.0); });
        const arma::mat se = arma::sqrt(var / (double)trials);
        const arma::mat dev = arma::abs(mean - target);

        arma::uword worst = 0;
        double worst_score = -1.0;
        for (arma::uword i = 0; i < dev.n_elem; ++i)
        {
            const double score = dev(i) / (se(i) + 1e-300);
            if (score > worst_score)
            {
                worst_score = score;
                worst = i;
            }
        }
        MomentCheck row;
        row.name = "gaussian_fourth_moment";
        row.analytic = 0.0;
        row.empirical = dev(worst);
        row.stderr_est = se(worst);
        row.pass = dev(worst) <= 5.0 * se(worst) + 1e-12;
        rows.push_back(row);
    }

    return rows;
}

} // namespace covshape
