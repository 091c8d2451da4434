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

#include "covshape/optimizer.hpp"
#include "covshape/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace covshape
{

// Overlap-change terms below this are treated as exact zeros when testing
// convergence, so vanished pair overlaps do not stall the stopping rule.
static constexpr double convergence_floor = 1e-15;

// Rotate so the largest-magnitude entry is real positive; breaks the phase
// ambiguity of eigenvectors deterministically.
static arma::cx_vec canonical_phase(arma::cx_vec v)
{
    arma::uword imax = 0;
    double best = -1.0;
    for (arma::uword i = 0; i < v.n_elem; ++i)
    {
        const double a = std::abs(v[i]);
        if (a > best)
        {
            best = a;
            imax = i;
        }
    }
    if (best > 0.0)
        v *= std::conj(v[imax]) / best;
    return v;
}

arma::cx_mat eta_weights(const BlockCovariance &cov_j, const ShapingVector &v_j)
{
    const EffectiveCovariance e = effective_covariance(cov_j, v_j);
    const double tr = e.trace();
    if (!(tr > degenerate_trace_tolerance * cov_j.trace()))
        throw std::invalid_argument("eta_weights: degenerate shaping (zero effective trace)");
    return e.phi / tr;
}

arma::cx_mat objective_matrix(const BlockCovariance &cov_k, const arma::cx_mat &eta)
{
    if (eta.n_rows != (arma::uword)cov_k.n_bs() || eta.n_cols != (arma::uword)cov_k.n_bs())
        throw std::invalid_argument("objective_matrix: eta must be M x M");
    if (cov_k.has_paths())
    {
        const PathSum &p = cov_k.paths();
        arma::cx_mat a(cov_k.n_ue(), cov_k.n_ue(), arma::fill::zeros);
        for (arma::uword u = 0; u < p.n_paths(); ++u)
        {
            const arma::cx_vec b = p.bs_resp.col(u);
            const std::complex<double> s = arma::cdot(b, arma::cx_vec(eta * b));
            a += (p.weights[u] * s) * p.ue_resp.col(u) * p.ue_resp.col(u).t();
        }
        return 0.5 * (a + a.t());
    }
    arma::cx_mat a(cov_k.n_ue(), cov_k.n_ue(), arma::fill::zeros);
    for (int m = 0; m < cov_k.n_bs(); ++m)
        for (int n = 0; n < cov_k.n_bs(); ++n)
            a += eta(m, n) * cov_k.block(m, n);
    return 0.5 * (a + a.t());
}

RayleighResult rayleigh_min(const arma::cx_mat &a, const arma::cx_mat &b)
{
    if (a.n_rows != a.n_cols || b.n_rows != b.n_cols || a.n_rows != b.n_rows || a.n_rows == 0)
        throw std::invalid_argument("rayleigh_min: equal square dimensions required");
    const arma::uword n = a.n_rows;

    arma::cx_mat bh = 0.5 * (b + b.t());
    arma::cx_mat chol_l;
    if (!arma::chol(chol_l, bh, "lower"))
    {
        // Near-singular denominator: nudge by a trace-relative ridge.
        const double ridge = 1e-12 * arma::trace(bh).real() / (double)n;
        if (!(ridge > 0.0))
            throw std::invalid_argument("rayleigh_min: denominator matrix is not positive definite");
        bh.diag() += ridge;
        if (!arma::chol(chol_l, bh, "lower"))
            throw std::invalid_argument("rayleigh_min: denominator matrix is not positive definite");
    }

    // Whitened pencil: C = L^-1 A L^-H shares eigenvalues with (A, B).
    const arma::cx_mat ah = 0.5 * (a + a.t());
    const arma::cx_mat y = arma::solve(arma::trimatl(chol_l), ah);
    arma::cx_mat c = arma::solve(arma::trimatl(chol_l), arma::cx_mat(y.t()));
    c = 0.5 * (c + c.t());

    arma::vec ev;
    arma::cx_mat u;
    if (!arma::eig_sym(ev, u, c))
        throw std::runtime_error("rayleigh_min: eigendecomposition failed");

    const double spread = std::max(std::abs(ev.max()), std::abs(ev.min()));
    const double tie_tol = 1e-8 * std::max(spread, 1e-300);
    arma::uword n_tied = 1;
    while (n_tied < n && ev[n_tied] <= ev[0] + tie_tol)
        ++n_tied;

    RayleighResult out;
    out.value = ev[0];
    if (n_tied == 1)
    {
        arma::cx_vec v = arma::solve(arma::trimatu(arma::cx_mat(chol_l.t())), arma::cx_vec(u.col(0)));
        out.vector = canonical_phase(v / arma::norm(v));
        return out;
    }

    // Tied minimizers: pick the direction that retains the most power under
    // the denominator metric, i.e. minimize |W y| over the tied span.
    const arma::cx_mat w = arma::solve(arma::trimatu(arma::cx_mat(chol_l.t())), arma::cx_mat(u.cols(0, n_tied - 1)));
    arma::cx_mat g = w.t() * w;
    g = 0.5 * (g + g.t());
    arma::vec gev;
    arma::cx_mat gu;
    if (!arma::eig_sym(gev, gu, g))
        throw std::runtime_error("rayleigh_min: tie-break eigendecomposition failed");
    arma::cx_vec v = w * gu.col(0);
    out.vector = canonical_phase(v / arma::norm(v));
    return out;
}

// ---- alternating optimization -------------------------------------------------

namespace
{

struct SweepState
{
    std::vector<arma::cx_vec> v;
    std::vector<arma::cx_mat> phi;  // shaped covariance per UE, kept in sync with v
    std::vector<double> tr;         // trace of phi per UE
    arma::mat delta;                // pairwise overlap, symmetric, zero diagonal
};

double pair_objective(const arma::mat &delta)
{
    double s = 0.0;
    for (arma::uword k = 0; k + 1 < delta.n_rows; ++k)
        for (arma::uword j = k + 1; j < delta.n_cols; ++j)
            s += delta(k, j);
    return s;
}

void refresh_ue(SweepState &st, const std::vector<const BlockCovariance *> &covs, size_t k)
{
    const EffectiveCovariance e = effective_covariance(*covs[k], ShapingVector(st.v[k]));
    st.phi[k] = e.phi;
    st.tr[k] = e.trace();
    if (!(st.tr[k] > degenerate_trace_tolerance * covs[k]->trace()))
        throw std::runtime_error("optimizer: degenerate shaping for UE " + std::to_string(k));
}

void refresh_delta(SweepState &st, const std::vector<const BlockCovariance *> &covs)
{
    const size_t n = st.v.size();
    for (size_t k = 0; k + 1 < n; ++k)
        for (size_t j = k + 1; j < n; ++j)
        {
            const double x = effective_cross_trace(*covs[k], *covs[j], st.v[k], st.v[j]);
            st.delta(k, j) = st.delta(j, k) = x / (st.tr[k] * st.tr[j]);
        }
}

std::vector<arma::cx_vec> initial_vectors(const std::vector<const BlockCovariance *> &covs,
                                          const OptimizerSettings &settings)
{
    std::vector<arma::cx_vec> v;
    if (!settings.initial.empty())
    {
        if (settings.initial.size() != covs.size())
            throw std::invalid_argument("optimizer: one initial vector per UE is required");
        for (size_t k = 0; k < covs.size(); ++k)
        {
            if (settings.initial[k].n_elem != (arma::uword)covs[k]->n_ue())
                throw std::invalid_argument("optimizer: initial vector length mismatch for UE " + std::to_string(k));
            v.push_back(ShapingVector(settings.initial[k]).vec());
        }
        return v;
    }
    // Default start: strongest eigenvector of the UE-side correlation.
    for (const auto *cov : covs)
    {
        arma::vec ev;
        arma::cx_mat u;
        arma::cx_mat r = receive_cov(*cov);
        r = 0.5 * (r + r.t());
        if (!arma::eig_sym(ev, u, r))
            throw std::runtime_error("optimizer: UE-side correlation eigendecomposition failed");
        v.push_back(canonical_phase(arma::normalise(arma::cx_vec(u.col(u.n_cols - 1)))));
    }
    return v;
}

OptimizerReport optimize_centralized(const std::vector<const BlockCovariance *> &covs,
                                     const OptimizerSettings &settings)
{
    const size_t n = covs.size();
    SweepState st;
    st.v = initial_vectors(covs, settings);
    st.phi.resize(n);
    st.tr.resize(n);
    st.delta.zeros(n, n);
    for (size_t k = 0; k < n; ++k)
        refresh_ue(st, covs, k);
    refresh_delta(st, covs);

    OptimizerReport rep;
    rep.objective_trace.push_back(pair_objective(st.delta));

    if (n == 1)
    {
        rep.vectors.emplace_back(st.v[0]);
        rep.converged = true;
        return rep;
    }

    const int m = covs[0]->n_bs();
    for (int it = 1; it <= settings.max_iterations; ++it)
    {
        for (size_t k = 0; k < n; ++k)
        {
            arma::cx_mat eta_sum(m, m, arma::fill::zeros);
            for (size_t j = 0; j < n; ++j)
                if (j != k)
                    eta_sum += st.phi[j] / st.tr[j];
            const arma::cx_mat a = objective_matrix(*covs[k], eta_sum);
            const RayleighResult r = rayleigh_min(a, receive_cov(*covs[k]));

            arma::cx_vec blended = settings.alpha * r.vector + (1.0 - settings.alpha) * st.v[k];
            const double nrm = arma::norm(blended);
            if (!(nrm > 0.0))
                throw std::runtime_error("optimizer: blended update vanished for UE " + std::to_string(k) +
                                         " at iteration " + std::to_string(it));
            st.v[k] = blended / nrm;
            refresh_ue(st, covs, k);
        }

        const arma::mat prev = st.delta;
        refresh_delta(st, covs);
        rep.objective_trace.push_back(pair_objective(st.delta));
        rep.iterations = it;

        // Relative change of the summed overlap between consecutive sweeps.
        // Pairs that are already essentially orthogonal are left out of both
        // sums so that a fully separated set registers as converged instead
        // of dividing by numerical dust.
        double cur = 0.0;
        double chg = 0.0;
        for (size_t k = 0; k + 1 < n; ++k)
            for (size_t j = k + 1; j < n; ++j)
                if (st.delta(k, j) >= convergence_floor)
                {
                    cur += st.delta(k, j);
                    chg += st.delta(k, j) - prev(k, j);
                }
        if (cur == 0.0 || std::abs(chg) <= settings.epsilon * cur)
        {
            rep.converged = true;
            break;
        }
    }

    for (auto &vk : st.v)
        rep.vectors.emplace_back(std::move(vk));
    return rep;
}

void validate_common(const std::vector<const BlockCovariance *> &covs)
{
    if (covs.empty())
        throw std::invalid_argument("optimizer: at least one covariance is required");
    for (const auto *c : covs)
    {
        if (c == nullptr)
            throw std::invalid_argument("optimizer: null covariance");
        if (c->n_bs() != covs[0]->n_bs())
            throw std::invalid_argument("optimizer: BS antenna counts must match across UEs");
    }
}

} // namespace

OptimizerReport optimize_multi(const std::vector<const BlockCovariance *> &covs, const OptimizerSettings &settings)
{
    validate_common(covs);
    if (!(settings.alpha > 0.0) || settings.alpha > 1.0)
        throw std::invalid_argument("optimizer: alpha must be in (0, 1]");
    if (!(settings.epsilon >= 0.0))
        throw std::invalid_argument("optimizer: epsilon must be nonnegative");
    if (settings.max_iterations < 1)
        throw std::invalid_argument("optimizer: max_iterations must be positive");

    if (!settings.distributed || covs.size() == 1)
        return optimize_centralized(covs, settings);

    // Distributed evaluation: every UE replays the whole shared-statistics
    // update schedule and keeps only its own vector. The arithmetic is
    // identical to the centralized pass, so the assembled result matches it
    // bit for bit.
    OptimizerReport assembled;
    for (size_t k = 0; k < covs.size(); ++k)
    {
        OptimizerReport local = optimize_centralized(covs, settings);
        if (k == 0)
        {
            assembled.objective_trace = std::move(local.objective_trace);
            assembled.iterations = local.iterations;
            assembled.converged = local.converged;
        }
        assembled.vectors.push_back(std::move(local.vectors[k]));
    }
    return assembled;
}

OptimizerReport optimize_multi(const std::vector<BlockCovariance> &covs, const OptimizerSettings &settings)
{
    std::vector<const BlockCovariance *> ptrs;
    ptrs.reserve(covs.size());
    for (const auto &c : covs)
        ptrs.push_back(&c);
    return optimize_multi(ptrs, settings);
}

OptimizerReport optimize_pair(const BlockCovariance &cov_k, const BlockCovariance &cov_j,
                              const OptimizerSettings &settings)
{
    return optimize_multi(std::vector<const BlockCovariance *>{&cov_k, &cov_j}, settings);
}

// ---- sampled search -------------------------------------------------------------

namespace
{

struct OracleTables
{
    // Path form: folded per-sample path gains and shaped traces.
    std::vector<arma::mat> gains;           // per UE: samples x U, weight * |v^H a_u|^2
    std::vector<arma::vec> traces;          // per UE: samples
    std::vector<std::vector<arma::mat>> gram; // gram[k][j]: |b_p^H b_q|^2, j > k
    // Dense fallback: materialized shaped covariances.
    std::vector<std::vector<arma::cx_mat>> phi; // per UE, per sample
    bool use_paths = false;
};

double oracle_delta(const OracleTables &t, size_t k, size_t j, arma::uword sk, arma::uword sj)
{
    if (t.use_paths)
    {
        const arma::mat &g = (k < j) ? t.gram[k][j - k - 1] : t.gram[j][k - j - 1];
        double x = 0.0;
        if (k < j)
            x = arma::as_scalar(t.gains[k].row(sk) * g * t.gains[j].row(sj).t());
        else
            x = arma::as_scalar(t.gains[j].row(sj) * g * t.gains[k].row(sk).t());
        return x / (t.traces[k][sk] * t.traces[j][sj]);
    }
    const double x = hermitian_product_trace(t.phi[k][sk], t.phi[j][sj]);
    return x / (t.traces[k][sk] * t.traces[j][sj]);
}

} // namespace

OracleResult exhaustive_oracle(const std::vector<const BlockCovariance *> &covs, int samples_per_ue,
                               std::uint64_t seed, int n_threads, std::uint64_t max_combinations)
{
    validate_common(covs);
    if (covs.size() < 2)
        throw std::invalid_argument("exhaustive_oracle: at least two UEs are required");
    if (samples_per_ue < 1)
        throw std::invalid_argument("exhaustive_oracle: samples_per_ue must be positive");

    const size_t n_ue = covs.size();
    double combos = 1.0;
    for (size_t k = 0; k < n_ue; ++k)
        combos *= (double)samples_per_ue;
    if (combos > (double)max_combinations)
    {
        std::ostringstream msg;
        msg << "exhaustive_oracle: " << samples_per_ue << "^" << n_ue << " = " << combos
            << " combinations exceed the cap of " << max_combinations;
        throw std::invalid_argument(msg.str());
    }

    // Per-UE sample sets, one independent stream per UE.
    std::vector<std::vector<arma::cx_vec>> samples(n_ue);
    for (size_t k = 0; k < n_ue; ++k)
    {
        auto rng = derive_rng(seed, 0, 0, 0x0AC1E000ULL + k);
        samples[k].reserve(samples_per_ue);
        for (int s = 0; s < samples_per_ue; ++s)
            samples[k].push_back(rand_unit_vec(covs[k]->n_ue(), rng));
    }

    OracleTables t;
    t.use_paths = true;
    for (const auto *c : covs)
        t.use_paths = t.use_paths && c->has_paths();
    t.traces.resize(n_ue);
    if (t.use_paths)
    {
        t.gains.resize(n_ue);
        for (size_t k = 0; k < n_ue; ++k)
        {
            const PathSum &p = covs[k]->paths();
            arma::vec bs_norm2(p.n_paths());
            for (arma::uword u = 0; u < p.n_paths(); ++u)
                bs_norm2[u] = std::norm(arma::norm(p.bs_resp.col(u)));
            t.gains[k].set_size(samples_per_ue, p.n_paths());
            t.traces[k].set_size(samples_per_ue);
            for (int s = 0; s < samples_per_ue; ++s)
            {
                for (arma::uword u = 0; u < p.n_paths(); ++u)
                    t.gains[k](s, u) = p.weights[u] * std::norm(arma::cdot(samples[k][s], p.ue_resp.col(u)));
                t.traces[k][s] = arma::dot(t.gains[k].row(s), bs_norm2);
            }
        }
        t.gram.resize(n_ue);
        for (size_t k = 0; k + 1 < n_ue; ++k)
            for (size_t j = k + 1; j < n_ue; ++j)
            {
                const PathSum &pk = covs[k]->paths();
                const PathSum &pj = covs[j]->paths();
                arma::mat g(pk.n_paths(), pj.n_paths());
                for (arma::uword p = 0; p < pk.n_paths(); ++p)
                    for (arma::uword q = 0; q < pj.n_paths(); ++q)
                        g(p, q) = std::norm(arma::cdot(pk.bs_resp.col(p), pj.bs_resp.col(q)));
                t.gram[k].push_back(std::move(g));
            }
    }
    else
    {
        t.phi.resize(n_ue);
        for (size_t k = 0; k < n_ue; ++k)
        {
            t.traces[k].set_size(samples_per_ue);
            t.phi[k].reserve(samples_per_ue);
            for (int s = 0; s < samples_per_ue; ++s)
            {
                EffectiveCovariance e = effective_covariance(*covs[k], ShapingVector(samples[k][s]));
                t.traces[k][s] = e.trace();
                t.phi[k].push_back(std::move(e.phi));
            }
        }
        for (size_t k = 0; k < n_ue; ++k)
            for (int s = 0; s < samples_per_ue; ++s)
                if (!(t.traces[k][s] > degenerate_trace_tolerance * covs[k]->trace()))
                    throw std::runtime_error("exhaustive_oracle: degenerate sampled shaping");
    }

    struct Best
    {
        double value = std::numeric_limits<double>::infinity();
        std::vector<arma::uword> index;
    };

    // Enumerate the indices of UEs 1..K-1 for a fixed first-UE sample.
    auto scan_first = [&](arma::uword s0) -> Best {
        Best best;
        std::vector<arma::uword> idx(n_ue, 0);
        idx[0] = s0;
        while (true)
        {
            double obj = 0.0;
            for (size_t k = 0; k + 1 < n_ue; ++k)
                for (size_t j = k + 1; j < n_ue; ++j)
                    obj += oracle_delta(t, k, j, idx[k], idx[j]);
            if (obj < best.value)
            {
                best.value = obj;
                best.index = idx;
            }
            size_t pos = n_ue - 1;
            while (pos >= 1)
            {
                if (++idx[pos] < (arma::uword)samples_per_ue)
                    break;
                idx[pos] = 0;
                --pos;
            }
            if (pos == 0)
                break;
        }
        return best;
    };

    int workers = n_threads;
    if (workers <= 0)
        workers = (int)std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<int>(workers, samples_per_ue);

    std::vector<Best> per_first(samples_per_ue);
    std::vector<std::thread> pool;
    std::atomic<arma::uword> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (arma::uword s0 = next.fetch_add(1); s0 < (arma::uword)samples_per_ue; s0 = next.fetch_add(1))
                per_first[s0] = scan_first(s0);
        });
    for (auto &th : pool)
        th.join();

    // The winner is the lexicographic minimum of (value, index), independent
    // of how first-UE samples were distributed over threads.
    Best global;
    for (const auto &b : per_first)
        if (b.value < global.value)
            global = b;

    OracleResult out;
    out.objective = global.value;
    for (size_t k = 0; k < n_ue; ++k)
        out.vectors.emplace_back(samples[k][global.index[k]]);
    return out;
}

} // namespace covshape
