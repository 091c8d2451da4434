#include <doctest.h>

#include "covshape/covariance.hpp"
#include "covshape/pilots.hpp"
#include "covshape/rng.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

using namespace covshape;

namespace
{

arma::cx_mat random_phi(arma::uword m, std::mt19937_64 &rng)
{
    const arma::cx_mat g = randcn_mat(m, m, rng);
    return arma::cx_mat(g * g.t() / (double)m + 0.05 * arma::eye<arma::cx_mat>(m, m));
}

EffectiveCovariance wrap_phi(arma::cx_mat phi)
{
    EffectiveCovariance e;
    e.phi = std::move(phi);
    e.shaping = arma::cx_vec(1, arma::fill::ones);
    return e;
}

} // namespace

TEST_CASE("shaped-mode sequences are orthogonal rows of squared norm tau")
{
    const PilotBook book = build_pilot_book(PilotMode::Effective, 3, 4, {2, 2, 2});
    CHECK(book.tau == 4);
    for (int g = 0; g < 3; ++g)
    {
        REQUIRE(book.sequences[g].n_rows == 1);
        const double power = std::norm(arma::norm(book.sequences[g].row(0)));
        CHECK(power == doctest::Approx(4.0).epsilon(1e-12));
        for (int h = g + 1; h < 3; ++h)
        {
            const std::complex<double> cross =
                arma::cdot(book.sequences[g].row(0).st(), book.sequences[h].row(0).st());
            CHECK(std::abs(cross) < 1e-10);
        }
    }

    // Degenerate book: one group, one symbol.
    const PilotBook tiny = build_pilot_book(PilotMode::Effective, 1, 1, {2});
    CHECK(tiny.tau == 1);
    CHECK(tiny.sequences[0](0, 0) == std::complex<double>(1.0, 0.0));
}

TEST_CASE("full-mode blocks satisfy the scaled orthogonality relation")
{
    const PilotBook book = build_pilot_book(PilotMode::Full, 2, 4, {2, 2});
    const double scale = 4.0 / 2.0; // tau / N
    for (int g = 0; g < 2; ++g)
    {
        const arma::cx_mat self = book.sequences[g] * book.sequences[g].t();
        CHECK(arma::abs(self - scale * arma::eye<arma::cx_mat>(2, 2)).max() < 1e-10);
    }
    const arma::cx_mat cross = book.sequences[0] * book.sequences[1].t();
    CHECK(arma::abs(cross).max() < 1e-10);
}

TEST_CASE("pilot books pick defaults and reject impossible shapes")
{
    // Default tau is the number of rows needed, assignments cycle.
    const PilotBook effective = build_pilot_book(PilotMode::Effective, 2, 0, {2, 2, 2, 2});
    CHECK(effective.tau == 2);
    CHECK(effective.assignment == std::vector<int>{0, 1, 0, 1});
    CHECK(effective.co_pilot(0) == std::vector<int>{0, 2});
    CHECK(effective.co_pilot(3) == std::vector<int>{1, 3});

    const PilotBook full = build_pilot_book(PilotMode::Full, 2, 0, {2, 2});
    CHECK(full.tau == 4);

    CHECK_THROWS_AS(build_pilot_book(PilotMode::Full, 2, 3, {2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(build_pilot_book(PilotMode::Effective, 3, 2, {2, 2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(build_pilot_book(PilotMode::Full, 2, 0, {2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(build_pilot_book(PilotMode::Effective, 5, 0, {2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(build_pilot_book(PilotMode::Effective, 2, 0, {2, 2}, std::vector<int>{0, 0}),
                    std::invalid_argument);
}

TEST_CASE("co-pilot rows superpose in the despread observation")
{
    const int m = 6;
    const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 4, {2, 2});
    auto rng = derive_rng(51, 0, 0, 0);
    arma::cx_mat gbar = randcn_mat(2, m, rng);

    // Vanishing noise floor isolates the signal algebra.
    auto noise_rng = derive_rng(51, 0, 0, 1);
    const arma::cx_mat rx = simulate_pilot_rx(gbar, book, 1.0, 1e-30, noise_rng);
    const arma::cx_mat despread = rx * book.sequences[0].t() / 4.0;
    const arma::cx_vec expected = gbar.row(0).t() + gbar.row(1).t();
    CHECK(arma::abs(despread.col(0) - expected).max() < 1e-12);

    // Mode mismatches are refused.
    ChannelRealization chans = {randcn_mat(2, m, rng), randcn_mat(2, m, rng)};
    CHECK_THROWS_AS(simulate_pilot_rx(chans, book, 1.0, 1.0, rng), std::invalid_argument);
    const PilotBook full = build_pilot_book(PilotMode::Full, 1, 2, {2, 2});
    CHECK_THROWS_AS(simulate_pilot_rx(gbar, full, 1.0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("estimates approach the truth as pilot energy grows")
{
    const int m = 6;
    const PilotBook book = build_pilot_book(PilotMode::Effective, 2, 0, {2, 2});
    std::vector<EffectiveCovariance> covs = {wrap_phi(arma::eye<arma::cx_mat>(m, m)),
                                             wrap_phi(arma::eye<arma::cx_mat>(m, m))};

    auto rng = derive_rng(52, 0, 0, 0);
    arma::cx_mat gbar = randcn_mat(2, m, rng);
    // tau * rho / sigma2 = 1e12 once tau = 2 is folded in.
    const double rho_ue = 1.0, sigma2 = 2e-12;
    const arma::cx_mat rx = simulate_pilot_rx(gbar, book, rho_ue, sigma2, rng);
    const EstimateSet est = mmse_estimate(rx, book, covs, rho_ue, sigma2);

    for (int k = 0; k < 2; ++k)
    {
        const double err = arma::norm(est.rows[(size_t)k] - gbar.row(k));
        CHECK(err / arma::norm(gbar.row(k)) < 1e-5);
    }
}

TEST_CASE("full-mode estimation recovers every antenna row without noise")
{
    const int m = 5;
    const PilotBook book = build_pilot_book(PilotMode::Full, 2, 0, {2, 2});
    const std::vector<std::vector<arma::cx_mat>> per_antenna(
        2, std::vector<arma::cx_mat>(2, arma::eye<arma::cx_mat>(m, m)));

    auto rng = derive_rng(53, 0, 0, 0);
    ChannelRealization chans = {randcn_mat(2, m, rng), randcn_mat(2, m, rng)};
    const double rho_ue = 1.0, sigma2 = 4e-12;
    const arma::cx_mat rx = simulate_pilot_rx(chans, book, rho_ue, sigma2, rng);
    const EstimateSet est = mmse_estimate(rx, book, per_antenna, rho_ue, sigma2);

    for (int k = 0; k < 2; ++k)
        CHECK(arma::norm(est.rows[(size_t)k] - chans[(size_t)k], "inf") /
                  arma::norm(chans[(size_t)k], "inf") <
              1e-5);
}

TEST_CASE("a zero prior forces a zero estimate")
{
    const int m = 4;
    const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 2, {2});
    std::vector<EffectiveCovariance> covs = {wrap_phi(arma::zeros<arma::cx_mat>(m, m))};

    auto rng = derive_rng(54, 0, 0, 0);
    const arma::cx_mat rx = simulate_pilot_rx(arma::cx_mat(randcn_mat(1, m, rng)), book, 1.0, 0.1, rng);
    const EstimateSet est = mmse_estimate(rx, book, covs, 1.0, 0.1);
    CHECK(arma::abs(est.rows[0]).max() == 0.0);
}

TEST_CASE("estimate energy matches the filtered-covariance trace")
{
    const int m = 6, trials = 20000;
    auto setup = derive_rng(55, 0, 0, 0);
    std::vector<EffectiveCovariance> covs = {wrap_phi(random_phi(m, setup)), wrap_phi(random_phi(m, setup))};
    const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 2, {2, 2});
    const double rho_ue = 1.0, sigma2 = 0.05;
    const MmseFilter filter = make_mmse_filter(book, covs, rho_ue, sigma2);

    // Closed form: trace of Phi Q^-1 Phi per UE.
    std::vector<double> target;
    for (int k = 0; k < 2; ++k)
    {
        arma::cx_mat qinv_phi;
        REQUIRE(arma::solve(qinv_phi, filter.q[(size_t)k][0], covs[(size_t)k].phi));
        target.push_back(hermitian_product_trace(covs[(size_t)k].phi, qinv_phi));
    }

    std::vector<arma::cx_mat> roots = {psd_sqrt(covs[0].phi), psd_sqrt(covs[1].phi)};
    arma::mat energy(trials, 2);
    arma::mat resid(trials, 2);
    for (int t = 0; t < trials; ++t)
    {
        auto rng = derive_rng(55, 1, (std::uint64_t)t, 0);
        arma::cx_mat gbar(2, m);
        for (int k = 0; k < 2; ++k)
            gbar.row(k) = (roots[(size_t)k] * randcn_vec(m, rng)).t();
        const arma::cx_mat rx = simulate_pilot_rx(gbar, book, rho_ue, sigma2, rng);
        const EstimateSet est = apply_mmse_filter(filter, rx);
        for (int k = 0; k < 2; ++k)
        {
            energy(t, k) = std::norm(arma::norm(est.rows[(size_t)k]));
            // MMSE orthogonality: the error is uncorrelated with the estimate.
            resid(t, k) =
                std::real(arma::cdot(est.rows[(size_t)k].st(), arma::cx_rowvec(gbar.row(k) - est.rows[(size_t)k]).st()));
        }
    }

    for (int k = 0; k < 2; ++k)
    {
        const arma::vec e = energy.col(k);
        const double mean = arma::mean(e);
        const double se = arma::stddev(e) / std::sqrt((double)trials);
        CHECK(std::abs(mean - target[(size_t)k]) < 4.0 * se);

        const arma::vec r = resid.col(k);
        const double rse = arma::stddev(r) / std::sqrt((double)trials);
        CHECK(std::abs(arma::mean(r)) < 4.0 * rse);
    }
}

TEST_CASE("relabeling co-pilot UEs relabels their estimates")
{
    const int m = 5;
    auto setup = derive_rng(56, 0, 0, 0);
    const arma::cx_mat phi_a = random_phi(m, setup);
    const arma::cx_mat phi_b = random_phi(m, setup);
    const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 3, {2, 2});
    const arma::cx_mat gbar = randcn_mat(2, m, setup);

    arma::cx_mat swapped_gbar(2, m);
    swapped_gbar.row(0) = gbar.row(1);
    swapped_gbar.row(1) = gbar.row(0);

    // The noise block is drawn before the signal is added, so equal seeds
    // give equal observations up to the summation order of the UE terms.
    auto rng1 = derive_rng(56, 1, 0, 0);
    auto rng2 = derive_rng(56, 1, 0, 0);
    const arma::cx_mat rx1 = simulate_pilot_rx(gbar, book, 1.0, 0.1, rng1);
    const arma::cx_mat rx2 = simulate_pilot_rx(swapped_gbar, book, 1.0, 0.1, rng2);
    CHECK(arma::abs(rx1 - rx2).max() < 1e-12);

    const EstimateSet est1 = mmse_estimate(rx1, book, {wrap_phi(phi_a), wrap_phi(phi_b)}, 1.0, 0.1);
    const EstimateSet est2 = mmse_estimate(rx2, book, {wrap_phi(phi_b), wrap_phi(phi_a)}, 1.0, 0.1);
    CHECK(arma::abs(est1.rows[0] - est2.rows[1]).max() < 1e-12);
    CHECK(arma::abs(est1.rows[1] - est2.rows[0]).max() < 1e-12);
}

TEST_CASE("nmse is zero on perfect estimates and one on zero estimates")
{
    auto rng = derive_rng(57, 0, 0, 0);
    const arma::cx_mat truth_rows = randcn_mat(2, 4, rng);

    EstimateSet perfect;
    perfect.mode = PilotMode::Effective;
    perfect.rows = {arma::cx_mat(truth_rows.row(0)), arma::cx_mat(truth_rows.row(1))};
    std::vector<arma::cx_mat> truth = {arma::cx_mat(truth_rows.row(0)), arma::cx_mat(truth_rows.row(1))};

    const NmseSample zero_err = nmse(perfect, truth);
    CHECK(zero_err.value[0] == 0.0);
    CHECK(zero_err.value[1] == 0.0);
    CHECK(zero_err.excluded_rows == 0);

    EstimateSet silent = perfect;
    silent.rows[0].zeros();
    silent.rows[1].zeros();
    const NmseSample unit_err = nmse(silent, truth);
    CHECK(unit_err.value[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unit_err.value[1] == doctest::Approx(1.0).epsilon(1e-12));

    // Rows with zero reference power are excluded, not divided by.
    std::vector<arma::cx_mat> padded = {arma::join_cols(truth[0], arma::cx_mat(1, 4, arma::fill::zeros))};
    EstimateSet wide;
    wide.mode = PilotMode::Full;
    wide.rows = {arma::join_cols(perfect.rows[0], arma::cx_mat(1, 4, arma::fill::zeros))};
    const NmseSample partial = nmse(wide, padded);
    CHECK(partial.excluded_rows == 1);
    CHECK(partial.included[0]);
    CHECK(partial.value[0] == 0.0);

    CHECK_THROWS_AS(nmse(perfect, padded), std::invalid_argument);
}
