#include <doctest.h>

#include "covshape/covariance.hpp"
#include "covshape/optimizer.hpp"
#include "covshape/rng.hpp"
#include "covshape/scenario.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

using namespace covshape;

namespace
{

arma::cx_mat random_psd(arma::uword n, std::mt19937_64 &rng)
{
    const arma::cx_mat g = randcn_mat(n, n, rng);
    return arma::cx_mat(g * g.t() / (double)n + 0.05 * arma::eye<arma::cx_mat>(n, n));
}

// Multi-UE scenario with private bounce clusters, kappa = 0, M = 8.
std::vector<BlockCovariance> cluster_covariances(int n_ues)
{
    ScenarioLayout layout;
    layout.bs_mx = 8;
    layout.bs_position = {0.0, 0.0, 10.0};
    for (int k = 0; k < n_ues; ++k)
    {
        const double x = -6.0 + 4.0 * k;
        UePlacement ue;
        ue.position = {x, 40.0, 1.5};
        ue.scatterers.push_back({x - 3.0, 33.0, 2.0});
        ue.scatterers.push_back({x + 2.0, 47.0, 4.0});
        ue.scatterers.push_back({x + 4.0, 36.0, 1.0});
        layout.ues.push_back(ue);
    }
    const Scenario sc = build_scenario(layout);

    std::vector<BlockCovariance> covs;
    for (int k = 0; k < n_ues; ++k)
        covs.push_back(path_covariance(sc, k));
    return covs;
}

double quotient(const arma::cx_mat &a, const arma::cx_mat &b, const arma::cx_vec &v)
{
    const double num = arma::cdot(v, arma::cx_vec(a * v)).real();
    const double den = arma::cdot(v, arma::cx_vec(b * v)).real();
    return num / den;
}

} // namespace

TEST_CASE("eta weights are the shaped covariance normalized to unit trace")
{
    const BlockCovariance flat =
        BlockCovariance::from_dense(arma::eye<arma::cx_mat>(8, 8), 2, 4);
    auto rng = derive_rng(41, 0, 0, 0);
    const ShapingVector v(randcn_vec(2, rng));

    const arma::cx_mat eta = eta_weights(flat, v);
    CHECK(arma::abs(eta - 0.25 * arma::eye<arma::cx_mat>(4, 4)).max() < 1e-12);

    const auto covs = cluster_covariances(1);
    const ShapingVector u(randcn_vec(2, rng));
    const arma::cx_mat eta2 = eta_weights(covs[0], u);
    CHECK(arma::trace(eta2).real() == doctest::Approx(1.0).epsilon(1e-12));
    const EffectiveCovariance eff = effective_covariance(covs[0], u);
    CHECK(arma::abs(eta2 - eff.phi / eff.trace()).max() < 1e-14);
}

TEST_CASE("the Rayleigh quotient of the objective matrix is the pair overlap")
{
    const auto covs = cluster_covariances(2);
    auto rng = derive_rng(42, 0, 0, 0);

    for (int i = 0; i < 5; ++i)
    {
        const ShapingVector v_k(randcn_vec(2, rng));
        const ShapingVector v_j(randcn_vec(2, rng));
        const arma::cx_mat a = objective_matrix(covs[0], eta_weights(covs[1], v_j));
        const double q = quotient(a, receive_cov(covs[0]), v_k.vec());
        CHECK(q == doctest::Approx(delta_metric(covs[0], covs[1], v_k, v_j)).epsilon(1e-10));
    }

    CHECK_THROWS_AS(objective_matrix(covs[0], arma::eye<arma::cx_mat>(3, 3)), std::invalid_argument);
}

TEST_CASE("rayleigh_min solves pinned two-by-two pencils")
{
    arma::cx_mat a = arma::zeros<arma::cx_mat>(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 1.0;
    const RayleighResult first = rayleigh_min(a, arma::eye<arma::cx_mat>(2, 2));
    CHECK(first.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(first.vector[0]) < 1e-12);
    CHECK(first.vector[1].real() == doctest::Approx(1.0).epsilon(1e-12));

    arma::cx_mat b = arma::eye<arma::cx_mat>(2, 2);
    b(1, 1) = 4.0;
    const RayleighResult second = rayleigh_min(arma::eye<arma::cx_mat>(2, 2), b);
    CHECK(second.value == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(second.vector[0]) < 1e-12);
    CHECK(second.vector[1].real() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(rayleigh_min(arma::cx_mat(2, 3, arma::fill::ones), b), std::invalid_argument);
}

TEST_CASE("rayleigh_min beats random sampling on the sphere")
{
    auto rng = derive_rng(43, 0, 0, 0);
    const arma::cx_mat a = random_psd(4, rng);
    const arma::cx_mat b = random_psd(4, rng);
    const RayleighResult best = rayleigh_min(a, b);
    CHECK(std::abs(arma::norm(best.vector) - 1.0) < 1e-12);
    CHECK(quotient(a, b, best.vector) == doctest::Approx(best.value).epsilon(1e-10));

    for (int i = 0; i < 10000; ++i)
        CHECK(quotient(a, b, rand_unit_vec(4, rng)) >= best.value - 1e-12);
}

TEST_CASE("Kronecker statistics terminate after one sweep")
{
    auto rng = derive_rng(44, 0, 0, 0);
    std::vector<BlockCovariance> covs;
    covs.push_back(kronecker_covariance(random_psd(2, rng), random_psd(5, rng)));
    covs.push_back(kronecker_covariance(random_psd(2, rng), random_psd(5, rng)));

    const OptimizerReport rep = optimize_multi(covs, {});
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    REQUIRE(rep.objective_trace.size() == 2);
    CHECK(rep.objective_trace[1] == doctest::Approx(rep.objective_trace[0]).epsilon(1e-10));
}

TEST_CASE("separable supports are driven to zero overlap")
{
    // Each UE sees two bounces; the middle BS direction is shared. Steering
    // the UE response away from its half of that direction removes the
    // overlap entirely.
    const arma::cx_mat eye4 = arma::eye<arma::cx_mat>(4, 4);
    arma::cx_mat a_k(2, 2), a_j(2, 2);
    a_k.col(0) = ula_response(2, 0.5, 0.9);
    a_k.col(1) = ula_response(2, 0.5, 2.0);
    a_j.col(0) = ula_response(2, 0.5, 1.1);
    a_j.col(1) = ula_response(2, 0.5, 2.4);
    const arma::vec w = {1.0, 0.7};

    const BlockCovariance cov_k = BlockCovariance::from_paths(w, a_k, eye4.cols(0, 1));
    const BlockCovariance cov_j = BlockCovariance::from_paths(w, a_j, eye4.cols(1, 2));

    const OptimizerReport rep = optimize_pair(cov_k, cov_j, {});
    CHECK(rep.converged);
    CHECK(rep.objective_trace.front() > 1e-3);
    CHECK(rep.objective_trace.back() <= 1e-10);
}

TEST_CASE("the pair solver is the two-UE case of the multi-UE solver")
{
    const auto covs = cluster_covariances(2);
    auto rng = derive_rng(45, 0, 0, 0);
    OptimizerSettings settings;
    settings.initial = {randcn_vec(2, rng), randcn_vec(2, rng)};

    const OptimizerReport pair = optimize_pair(covs[0], covs[1], settings);
    const OptimizerReport multi = optimize_multi(covs, settings);
    REQUIRE(pair.vectors.size() == 2);
    REQUIRE(multi.vectors.size() == 2);
    CHECK(arma::norm(pair.vectors[0].vec() - multi.vectors[0].vec()) == 0.0);
    CHECK(arma::norm(pair.vectors[1].vec() - multi.vectors[1].vec()) == 0.0);
    CHECK(pair.objective_trace == multi.objective_trace);
}

TEST_CASE("the summed overlap never increases across sweeps")
{
    const auto covs = cluster_covariances(3);
    const OptimizerReport rep = optimize_multi(covs, {});
    CHECK(rep.converged);
    REQUIRE(rep.objective_trace.size() >= 2);
    for (size_t i = 1; i < rep.objective_trace.size(); ++i)
        CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-12);
    for (const auto &v : rep.vectors)
        CHECK(std::abs(arma::norm(v.vec()) - 1.0) < 1e-12);
}

TEST_CASE("a converged point is a fixed point")
{
    const auto covs = cluster_covariances(3);
    const OptimizerReport rep = optimize_multi(covs, {});
    REQUIRE(rep.converged);

    OptimizerSettings again;
    for (const auto &v : rep.vectors)
        again.initial.push_back(v.vec());
    const OptimizerReport rerun = optimize_multi(covs, again);
    CHECK(rerun.converged);
    CHECK(rerun.iterations == 1);
    CHECK(rerun.objective_trace.back() <=
          rep.objective_trace.back() * (1.0 + 1e-6) + 1e-15);
}

TEST_CASE("initial phases do not change the objective path")
{
    const auto covs = cluster_covariances(2);
    auto rng = derive_rng(46, 0, 0, 0);
    OptimizerSettings plain;
    plain.initial = {randcn_vec(2, rng), randcn_vec(2, rng)};

    OptimizerSettings rotated = plain;
    for (auto &v : rotated.initial)
        v *= std::polar(1.0, 0.7);

    const OptimizerReport a = optimize_multi(covs, plain);
    const OptimizerReport b = optimize_multi(covs, rotated);
    REQUIRE(a.objective_trace.size() == b.objective_trace.size());
    for (size_t i = 0; i < a.objective_trace.size(); ++i)
        CHECK(a.objective_trace[i] == doctest::Approx(b.objective_trace[i]).epsilon(1e-10));
}

TEST_CASE("damped sweeps keep unit-norm iterates")
{
    const auto covs = cluster_covariances(3);
    OptimizerSettings damped;
    damped.alpha = 0.5;
    damped.max_iterations = 30;
    const OptimizerReport rep = optimize_multi(covs, damped);
    CHECK(rep.iterations >= 1);
    for (const auto &v : rep.vectors)
        CHECK(std::abs(arma::norm(v.vec()) - 1.0) < 1e-12);
}

TEST_CASE("distributed evaluation reproduces the centralized answer bit for bit")
{
    const auto covs = cluster_covariances(3);
    OptimizerSettings central;
    OptimizerSettings spread;
    spread.distributed = true;

    const OptimizerReport a = optimize_multi(covs, central);
    const OptimizerReport b = optimize_multi(covs, spread);
    REQUIRE(a.vectors.size() == b.vectors.size());
    for (size_t k = 0; k < a.vectors.size(); ++k)
        CHECK(arma::norm(a.vectors[k].vec() - b.vectors[k].vec()) == 0.0);
    CHECK(a.objective_trace == b.objective_trace);
    CHECK(a.iterations == b.iterations);
    CHECK(a.converged == b.converged);
}

TEST_CASE("a single UE needs no sweeps")
{
    const auto covs = cluster_covariances(1);
    const OptimizerReport rep = optimize_multi(covs, {});
    CHECK(rep.converged);
    CHECK(rep.iterations == 0);
    REQUIRE(rep.vectors.size() == 1);
    CHECK(std::abs(arma::norm(rep.vectors[0].vec()) - 1.0) < 1e-12);
}

TEST_CASE("optimizer settings are validated")
{
    const auto covs = cluster_covariances(2);
    OptimizerSettings bad;

    bad.alpha = 0.0;
    CHECK_THROWS_AS(optimize_multi(covs, bad), std::invalid_argument);
    bad = {};
    bad.alpha = 1.5;
    CHECK_THROWS_AS(optimize_multi(covs, bad), std::invalid_argument);
    bad = {};
    bad.epsilon = -1.0;
    CHECK_THROWS_AS(optimize_multi(covs, bad), std::invalid_argument);
    bad = {};
    bad.max_iterations = 0;
    CHECK_THROWS_AS(optimize_multi(covs, bad), std::invalid_argument);
    bad = {};
    bad.initial = {arma::cx_vec(2, arma::fill::ones)};
    CHECK_THROWS_AS(optimize_multi(covs, bad), std::invalid_argument);
}

TEST_CASE("the sampled oracle scores its own vectors")
{
    const auto covs = cluster_covariances(2);
    std::vector<const BlockCovariance *> ptrs = {&covs[0], &covs[1]};

    const OracleResult one = exhaustive_oracle(ptrs, 1, 7);
    CHECK(one.objective ==
          doctest::Approx(delta_metric(covs[0], covs[1], one.vectors[0], one.vectors[1])).epsilon(1e-12));

    const OracleResult many = exhaustive_oracle(ptrs, 200, 7);
    CHECK(many.objective <= one.objective + 1e-15);
    CHECK(many.objective ==
          doctest::Approx(delta_metric(covs[0], covs[1], many.vectors[0], many.vectors[1])).epsilon(1e-10));

    CHECK_THROWS_AS(exhaustive_oracle(ptrs, 3, 7, 0, 8), std::invalid_argument);
}

TEST_CASE("the sampled oracle is flat on Kronecker statistics")
{
    auto rng = derive_rng(47, 0, 0, 0);
    const arma::cx_mat t_k = random_psd(5, rng);
    const arma::cx_mat t_j = random_psd(5, rng);
    std::vector<BlockCovariance> covs;
    covs.push_back(kronecker_covariance(random_psd(2, rng), t_k));
    covs.push_back(kronecker_covariance(random_psd(2, rng), t_j));
    std::vector<const BlockCovariance *> ptrs = {&covs[0], &covs[1]};

    const double closed_form = hermitian_product_trace(t_k, t_j) /
                               (arma::trace(t_k).real() * arma::trace(t_j).real());
    const OracleResult res = exhaustive_oracle(ptrs, 50, 11);
    CHECK(res.objective == doctest::Approx(closed_form).epsilon(1e-10));
}
