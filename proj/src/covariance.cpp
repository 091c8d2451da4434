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

#include "covshape/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covshape
{

ShapingVector::ShapingVector(arma::cx_vec v) : v_(std::move(v))
{
    if (v_.n_elem == 0 || !v_.is_finite())
        throw std::invalid_argument("ShapingVector: non-empty finite input required");
    const double nrm = arma::norm(v_);
    if (nrm == 0.0)
        throw std::invalid_argument("ShapingVector: zero vector cannot be normalized");
    v_ /= nrm;
}

void check_hermitian_psd(const arma::cx_mat &m, const char *what)
{
    if (m.n_rows != m.n_cols)
        throw std::invalid_argument(std::string(what) + ": square matrix required");
    const double scale = arma::norm(m, "inf");
    const double asym = arma::norm(m - m.t(), "inf");
    if (asym > 1e-9 * std::max(scale, 1e-300))
        throw std::invalid_argument(std::string(what) + ": matrix is not Hermitian");
    arma::vec ev;
    if (!arma::eig_sym(ev, arma::cx_mat(0.5 * (m + m.t()))))
        throw std::runtime_error(std::string(what) + ": eigenvalue check failed to converge");
    const double tr = arma::sum(ev);
    if (ev.min() < -psd_tolerance * std::max(tr, 1e-300))
        throw std::invalid_argument(std::string(what) + ": matrix is not positive semidefinite");
}

arma::cx_mat psd_sqrt(const arma::cx_mat &phi)
{
    arma::vec ev;
    arma::cx_mat vecs;
    if (!arma::eig_sym(ev, vecs, arma::cx_mat(0.5 * (phi + phi.t()))))
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    const double floor = -psd_tolerance * std::max(arma::sum(ev), 1e-300);
    for (arma::uword i = 0; i < ev.n_elem; ++i)
    {
        if (ev[i] < floor)
            throw std::invalid_argument("psd_sqrt: matrix is not positive semidefinite");
        ev[i] = std::max(ev[i], 0.0);
    }
    return vecs * arma::diagmat(arma::sqrt(ev));
}

double hermitian_product_trace(const arma::cx_mat &a, const arma::cx_mat &b)
{
    if (a.n_rows != b.n_rows || a.n_cols != b.n_cols || a.n_rows != a.n_cols)
        throw std::invalid_argument("hermitian_product_trace: equal square dimensions required");
    // trace(A B) = sum_{rc} A(r,c) B(c,r) = sum_{rc} A(r,c) conj(B(r,c)) for Hermitian B.
    return arma::accu(arma::real(a % arma::conj(b)));
}

// ---- BlockCovariance --------------------------------------------------------

BlockCovariance BlockCovariance::from_dense(arma::cx_mat sigma, int n_ue, int n_bs)
{
    if (n_ue < 1 || n_bs < 1)
        throw std::invalid_argument("BlockCovariance: antenna counts must be positive");
    const arma::uword dim = (arma::uword)n_ue * (arma::uword)n_bs;
    if (sigma.n_rows != dim || sigma.n_cols != dim)
        throw std::invalid_argument("BlockCovariance: dense matrix must be (n_ue*n_bs) square");
    if (!sigma.is_finite())
        throw std::invalid_argument("BlockCovariance: dense matrix must be finite");
    check_hermitian_psd(sigma, "BlockCovariance");

    BlockCovariance c;
    c.n_ue_ = n_ue;
    c.n_bs_ = n_bs;
    c.dense_ = 0.5 * (sigma + sigma.t()); // strip roundoff asymmetry
    return c;
}

BlockCovariance BlockCovariance::from_paths(arma::vec weights, arma::cx_mat ue_resp, arma::cx_mat bs_resp)
{
    const arma::uword u = weights.n_elem;
    if (u == 0)
        throw std::invalid_argument("BlockCovariance: at least one path is required");
    if (ue_resp.n_cols != u || bs_resp.n_cols != u)
        throw std::invalid_argument("BlockCovariance: one response column per path is required");
    if (ue_resp.n_rows == 0 || bs_resp.n_rows == 0)
        throw std::invalid_argument("BlockCovariance: responses must be non-empty");
    if (!weights.is_finite() || !ue_resp.is_finite() || !bs_resp.is_finite())
        throw std::invalid_argument("BlockCovariance: path data must be finite");
    if (weights.min() < 0.0)
        throw std::invalid_argument("BlockCovariance: path weights must be nonnegative");

    BlockCovariance c;
    c.n_ue_ = (int)ue_resp.n_rows;
    c.n_bs_ = (int)bs_resp.n_rows;
    PathSum p;
    p.weights = std::move(weights);
    p.ue_resp = std::move(ue_resp);
    p.bs_resp = std::move(bs_resp);
    c.paths_ = std::move(p);
    return c;
}

const PathSum &BlockCovariance::paths() const
{
    if (!paths_)
        throw std::logic_error("BlockCovariance: no path-sum form available");
    return *paths_;
}

arma::cx_mat BlockCovariance::dense() const
{
    if (dense_)
        return *dense_;
    const PathSum &p = *paths_;
    const arma::uword dim = (arma::uword)n_ue_ * (arma::uword)n_bs_;
    arma::cx_mat sigma(dim, dim, arma::fill::zeros);
    for (arma::uword u = 0; u < p.n_paths(); ++u)
    {
        // Stacked form of the rank-one path a b^H is kron(conj(b), a).
        const arma::cx_vec z = arma::kron(arma::conj(p.bs_resp.col(u)), p.ue_resp.col(u));
        sigma += p.weights[u] * z * z.t();
    }
    return sigma;
}

arma::cx_mat BlockCovariance::block(int m, int n) const
{
    if (m < 0 || m >= n_bs_ || n < 0 || n >= n_bs_)
        throw std::invalid_argument("BlockCovariance: block index out of range");
    if (dense_)
        return dense_->submat((arma::uword)m * n_ue_, (arma::uword)n * n_ue_, (arma::uword)(m + 1) * n_ue_ - 1,
                              (arma::uword)(n + 1) * n_ue_ - 1);
    const PathSum &p = *paths_;
    arma::cx_mat blk(n_ue_, n_ue_, arma::fill::zeros);
    for (arma::uword u = 0; u < p.n_paths(); ++u)
    {
        const std::complex<double> c = std::conj(p.bs_resp(m, u)) * p.bs_resp(n, u);
        blk += (p.weights[u] * c) * p.ue_resp.col(u) * p.ue_resp.col(u).t();
    }
    return blk;
}

double BlockCovariance::trace() const
{
    if (dense_)
        return arma::trace(*dense_).real();
    const PathSum &p = *paths_;
    double tr = 0.0;
    for (arma::uword u = 0; u < p.n_paths(); ++u)
        tr += p.weights[u] * std::norm(arma::norm(p.ue_resp.col(u))) * std::norm(arma::norm(p.bs_resp.col(u)));
    return tr;
}

// ---- constructors from models ----------------------------------------------

BlockCovariance path_covariance(const Scenario &scenario, int ue)
{
    if (ue < 0 || ue >= scenario.n_ues())
        throw std::invalid_argument("path_covariance: UE index out of range");
    scenario.validate();
    const auto &list = scenario.paths[ue];
    const auto &geom = scenario.ue_arrays[ue];
    const double kappa = scenario.ricean_kappa;

    arma::vec w(list.size());
    arma::cx_mat a(geom.size(), list.size());
    arma::cx_mat b(scenario.n_bs_antennas(), list.size());
    for (size_t u = 0; u < list.size(); ++u)
    {
        const auto &p = list[u];
        const double pl = scenario.path_gain(p.distance);
        w[u] = p.is_los ? pl * kappa / (1.0 + kappa) : pl / (1.0 + kappa);
        a.col(u) = ula_response(geom.n_azimuth, geom.spacing_ratio, p.ue_angle);
        b.col(u) = bs_response(scenario.bs_array, p.bs_azimuth, p.bs_elevation);
    }
    return BlockCovariance::from_paths(std::move(w), std::move(a), std::move(b));
}

BlockCovariance kronecker_covariance(const arma::cx_mat &r, const arma::cx_mat &t)
{
    check_hermitian_psd(r, "kronecker_covariance (UE side)");
    check_hermitian_psd(t, "kronecker_covariance (BS side)");
    return BlockCovariance::from_dense(arma::kron(t.st(), r), (int)r.n_rows, (int)t.n_rows);
}

// ---- aggregate correlations --------------------------------------------------

arma::cx_mat receive_cov(const BlockCovariance &cov)
{
    if (cov.has_paths())
    {
        const PathSum &p = cov.paths();
        arma::cx_mat r(cov.n_ue(), cov.n_ue(), arma::fill::zeros);
        for (arma::uword u = 0; u < p.n_paths(); ++u)
        {
            const double bn = std::norm(arma::norm(p.bs_resp.col(u)));
            r += (p.weights[u] * bn) * p.ue_resp.col(u) * p.ue_resp.col(u).t();
        }
        return r;
    }
    arma::cx_mat r(cov.n_ue(), cov.n_ue(), arma::fill::zeros);
    for (int m = 0; m < cov.n_bs(); ++m)
        r += cov.block(m, m);
    return r;
}

arma::cx_mat transmit_cov(const BlockCovariance &cov)
{
    if (cov.has_paths())
    {
        const PathSum &p = cov.paths();
        arma::cx_mat t(cov.n_bs(), cov.n_bs(), arma::fill::zeros);
        for (arma::uword u = 0; u < p.n_paths(); ++u)
        {
            const double an = std::norm(arma::norm(p.ue_resp.col(u)));
            t += (p.weights[u] * an) * p.bs_resp.col(u) * p.bs_resp.col(u).t();
        }
        return t;
    }
    arma::cx_mat t(cov.n_bs(), cov.n_bs());
    for (int m = 0; m < cov.n_bs(); ++m)
        for (int n = 0; n < cov.n_bs(); ++n)
            t(m, n) = arma::trace(cov.block(n, m));
    return t;
}

arma::cx_mat per_antenna_cov(const BlockCovariance &cov, int antenna)
{
    if (antenna < 0 || antenna >= cov.n_ue())
        throw std::invalid_argument("per_antenna_cov: antenna index out of range");
    if (cov.has_paths())
    {
        const PathSum &p = cov.paths();
        arma::cx_mat phi(cov.n_bs(), cov.n_bs(), arma::fill::zeros);
        for (arma::uword u = 0; u < p.n_paths(); ++u)
        {
            const double g = std::norm(p.ue_resp(antenna, u));
            phi += (p.weights[u] * g) * p.bs_resp.col(u) * p.bs_resp.col(u).t();
        }
        return phi;
    }
    arma::cx_mat phi(cov.n_bs(), cov.n_bs());
    for (int m = 0; m < cov.n_bs(); ++m)
        for (int n = 0; n < cov.n_bs(); ++n)
            phi(m, n) = cov.block(n, m)(antenna, antenna);
    return phi;
}

// ---- shaped covariances --------------------------------------------------------

EffectiveCovariance effective_covariance(const BlockCovariance &cov, const ShapingVector &v)
{
    if (v.size() != (arma::uword)cov.n_ue())
        throw std::invalid_argument("effective_covariance: shaping length must match UE antenna count");
    EffectiveCovariance out;
    out.shaping = v.vec();
    if (cov.has_paths())
    {
        const PathSum &p = cov.paths();
        arma::cx_mat phi(cov.n_bs(), cov.n_bs(), arma::fill::zeros);
        for (arma::uword u = 0; u < p.n_paths(); ++u)
        {
            const double g = std::norm(arma::cdot(v.vec(), p.ue_resp.col(u)));
            phi += (p.weights[u] * g) * p.bs_resp.col(u) * p.bs_resp.col(u).t();
        }
        out.phi = std::move(phi);
        return out;
    }
    // Dense route: entry (m, n) is v^H Sigma(n, m) v, the covariance of the
    // conjugated effective row.
    arma::cx_mat phi(cov.n_bs(), cov.n_bs());
    for (int m = 0; m < cov.n_bs(); ++m)
        for (int n = m; n < cov.n_bs(); ++n)
        {
            const std::complex<double> e = arma::cdot(v.vec(), arma::cx_vec(cov.block(n, m) * v.vec()));
            phi(m, n) = e;
            phi(n, m) = std::conj(e);
        }
    out.phi = std::move(phi);
    return out;
}

double effective_trace(const BlockCovariance &cov, const arma::cx_vec &v)
{
    if (cov.has_paths())
    {
        const PathSum &p = cov.paths();
        double tr = 0.0;
        for (arma::uword u = 0; u < p.n_paths(); ++u)
            tr += p.weights[u] * std::norm(arma::cdot(v, p.ue_resp.col(u))) * std::norm(arma::norm(p.bs_resp.col(u)));
        return tr;
    }
    arma::cx_mat r(cov.n_ue(), cov.n_ue(), arma::fill::zeros);
    for (int m = 0; m < cov.n_bs(); ++m)
        r += cov.block(m, m);
    return arma::cdot(v, arma::cx_vec(r * v)).real();
}

double effective_cross_trace(const BlockCovariance &cov_k, const BlockCovariance &cov_j, const arma::cx_vec &v_k,
                             const arma::cx_vec &v_j)
{
    if (cov_k.n_bs() != cov_j.n_bs())
        throw std::invalid_argument("effective_cross_trace: BS antenna counts must match");
    if (cov_k.has_paths() && cov_j.has_paths())
    {
        const PathSum &pk = cov_k.paths();
        const PathSum &pj = cov_j.paths();
        double acc = 0.0;
        for (arma::uword p = 0; p < pk.n_paths(); ++p)
        {
            const double cp = pk.weights[p] * std::norm(arma::cdot(v_k, pk.ue_resp.col(p)));
            if (cp == 0.0)
                continue;
            for (arma::uword q = 0; q < pj.n_paths(); ++q)
            {
                const double dq = pj.weights[q] * std::norm(arma::cdot(v_j, pj.ue_resp.col(q)));
                if (dq == 0.0)
                    continue;
                acc += cp * dq * std::norm(arma::cdot(pk.bs_resp.col(p), pj.bs_resp.col(q)));
            }
        }
        return acc;
    }
    const arma::cx_mat phi_k = effective_covariance(cov_k, ShapingVector(v_k)).phi;
    const arma::cx_mat phi_j = effective_covariance(cov_j, ShapingVector(v_j)).phi;
    return hermitian_product_trace(phi_k, phi_j);
}

double delta_metric(const BlockCovariance &cov_k, const BlockCovariance &cov_j, const ShapingVector &v_k,
                    const ShapingVector &v_j)
{
    const double tr_k = effective_trace(cov_k, v_k.vec());
    const double tr_j = effective_trace(cov_j, v_j.vec());
    const double floor_k = degenerate_trace_tolerance * cov_k.trace();
    const double floor_j = degenerate_trace_tolerance * cov_j.trace();
    if (!(tr_k > floor_k) || !(tr_j > floor_j))
        throw std::invalid_argument("delta_metric: degenerate shaping (zero effective trace)");
    return effective_cross_trace(cov_k, cov_j, v_k.vec(), v_j.vec()) / (tr_k * tr_j);
}

std::complex<double> omega_sample(const arma::cx_mat &chan_k, const arma::cx_mat &chan_j,
                                  const EffectiveCovariance &cov_k, const EffectiveCovariance &cov_j)
{
    if (chan_k.n_rows != cov_k.shaping.n_elem || chan_j.n_rows != cov_j.shaping.n_elem)
        throw std::invalid_argument("omega_sample: channel rows must match shaping length");
    const double tr_k = cov_k.trace();
    const double tr_j = cov_j.trace();
    if (!(tr_k > 0.0) || !(tr_j > 0.0))
        throw std::invalid_argument("omega_sample: degenerate shaped covariance");
    const arma::cx_rowvec g_k = cov_k.shaping.t() * chan_k;
    const arma::cx_rowvec g_j = cov_j.shaping.t() * chan_j;
    return arma::cdot(g_j.st(), g_k.st()) / std::sqrt(tr_k * tr_j);
}

} // namespace covshape
