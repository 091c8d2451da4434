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

#include "covshape/harness.hpp"
#include "covshape/covariance.hpp"
#include "covshape/pilots.hpp"
#include "covshape/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace
{

using namespace covshape;

int cmd_run(const std::string &config_path, const std::string &out_path, int threads)
{
    const ExperimentConfig config = load_config(config_path);
    const std::vector<ResultRecord> records = run_sweep(config, threads);
    write_csv(out_path, records);
    write_sidecar(sidecar_path(out_path), config);

    std::cout << csv_header() << '\n';
    for (const auto &r : records)
        std::cout << csv_line(r) << '\n';
    std::cerr << "wrote " << records.size() << " records to " << out_path << " (+ "
              << sidecar_path(out_path) << ")\n";
    return 0;
}

int cmd_optimize(const std::string &scenario_path, double eps, double alpha, std::uint64_t seed,
                 const std::string &init)
{
    const Scenario scenario = load_scenario(scenario_path);
    std::vector<BlockCovariance> covs;
    for (int k = 0; k < scenario.n_ues(); ++k)
        covs.push_back(path_covariance(scenario, k));

    OptimizerSettings settings;
    settings.epsilon = eps;
    settings.alpha = alpha;
    if (init == "random")
    {
        auto rng = derive_rng(seed, 0, 0, 11);
        for (const auto &cov : covs)
            settings.initial.push_back(rand_unit_vec(cov.n_ue(), rng));
    }
    else if (init != "eigen")
    {
        throw std::invalid_argument("optimize: --init must be 'eigen' or 'random'");
    }

    const OptimizerReport report = optimize_multi(covs, settings);

    nlohmann::ordered_json j;
    j["converged"] = report.converged;
    j["iterations"] = report.iterations;
    j["objective_trace"] = report.objective_trace;
    j["vectors"] = nlohmann::ordered_json::array();
    for (const auto &v : report.vectors)
    {
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        for (arma::uword i = 0; i < v.size(); ++i)
            entries.push_back({v.vec()(i).real(), v.vec()(i).imag()});
        j["vectors"].push_back(entries);
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_estimate(const std::string &scenario_path, const std::string &mode_token, int tau, int groups,
                 int trials, std::uint64_t seed, const std::vector<double> &rho_grid)
{
    if (trials < 1)
        throw std::invalid_argument("estimate: trials must be at least 1");
    PilotMode mode;
    if (mode_token == "full")
        mode = PilotMode::Full;
    else if (mode_token == "effective")
        mode = PilotMode::Effective;
    else
        throw std::invalid_argument("estimate: --mode must be 'full' or 'effective'");

    Scenario scenario = load_scenario(scenario_path);
    const int n_ues = scenario.n_ues();
    std::vector<BlockCovariance> covs;
    std::vector<int> antennas;
    for (int k = 0; k < n_ues; ++k)
    {
        covs.push_back(path_covariance(scenario, k));
        antennas.push_back(covs.back().n_ue());
    }
    const int n_groups = (groups > 0) ? std::min(groups, n_ues) : (n_ues + 1) / 2;
    const PilotBook book = build_pilot_book(mode, n_groups, tau, antennas);

    std::vector<ShapingVector> shaping;
    std::vector<EffectiveCovariance> eff;
    std::vector<std::vector<arma::cx_mat>> per_antenna;
    if (mode == PilotMode::Effective)
    {
        const OptimizerReport report = optimize_multi(covs, OptimizerSettings{});
        shaping = report.vectors;
        for (int k = 0; k < n_ues; ++k)
            eff.push_back(effective_covariance(covs[(size_t)k], shaping[(size_t)k]));
    }
    else
    {
        for (int k = 0; k < n_ues; ++k)
        {
            std::vector<arma::cx_mat> rows;
            for (int n = 0; n < antennas[(size_t)k]; ++n)
                rows.push_back(per_antenna_cov(covs[(size_t)k], n));
            per_antenna.push_back(std::move(rows));
        }
    }

    std::cout << "ue,rho_ue_dbm,nmse\n";
    for (size_t ri = 0; ri < rho_grid.size(); ++ri)
    {
        scenario.powers.rho_ue = dbm_to_watt(rho_grid[ri]);
        const MmseFilter filter =
            (mode == PilotMode::Effective)
                ? make_mmse_filter(book, eff, scenario.powers.rho_ue, scenario.noise.sigma2_bs)
                : make_mmse_filter(book, per_antenna, scenario.powers.rho_ue, scenario.noise.sigma2_bs);

        std::vector<double> sums((size_t)n_ues, 0.0);
        std::vector<int> counts((size_t)n_ues, 0);
        for (int t = 0; t < trials; ++t)
        {
            auto rng = derive_rng(seed, ri, (std::uint64_t)t, mode == PilotMode::Full ? 1 : 2);
            ChannelRealization chans((size_t)n_ues);
            for (int k = 0; k < n_ues; ++k)
                chans[(size_t)k] = sample_channel(scenario, k, rng);

            EstimateSet est;
            NmseSample err;
            if (mode == PilotMode::Effective)
            {
                arma::cx_mat gbar(n_ues, scenario.n_bs_antennas());
                std::vector<arma::cx_mat> truth((size_t)n_ues);
                for (int k = 0; k < n_ues; ++k)
                {
                    gbar.row(k) = shaping[(size_t)k].vec().t() * chans[(size_t)k];
                    truth[(size_t)k] = gbar.row(k);
                }
                const arma::cx_mat rx =
                    simulate_pilot_rx(gbar, book, scenario.powers.rho_ue, scenario.noise.sigma2_bs, rng);
                est = apply_mmse_filter(filter, rx);
                err = nmse(est, truth);
            }
            else
            {
                const arma::cx_mat rx =
                    simulate_pilot_rx(chans, book, scenario.powers.rho_ue, scenario.noise.sigma2_bs, rng);
                est = apply_mmse_filter(filter, rx);
                err = nmse(est, chans);
            }
            for (int k = 0; k < n_ues; ++k)
                if (err.included[(size_t)k])
                {
                    sums[(size_t)k] += err.value[(size_t)k];
                    ++counts[(size_t)k];
                }
        }
        for (int k = 0; k < n_ues; ++k)
        {
            const double mean = counts[(size_t)k] > 0 ? sums[(size_t)k] / counts[(size_t)k] : 0.0;
            std::printf("%d,%.10g,%.12g\n", k, rho_grid[ri], mean);
        }
    }
    return 0;
}

int cmd_validate()
{
    const auto checks = validate_library();
    bool all = true;
    for (const auto &check : checks)
    {
        all = all && check.pass;
        std::printf("%s %-28s measured=%.3e  %s\n", check.pass ? "PASS" : "FAIL", check.name.c_str(),
                    check.measured, check.detail.c_str());
    }
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"covariance shaping simulator for massive-MIMO downlink"};
    app.require_subcommand(1);

    std::string config_path, out_path = "results.csv";
    int threads = 0;
    auto *run = app.add_subcommand("run", "execute a sweep described by a JSON config");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out", out_path, "output CSV path");
    run->add_option("--threads", threads, "worker threads (0: hardware; COVSHAPE_THREADS wins)");

    std::string opt_scenario, opt_init = "eigen";
    double eps = 1e-6, alpha = 1.0;
    std::uint64_t opt_seed = 1;
    auto *optimize = app.add_subcommand("optimize", "compute shaping vectors for a scenario");
    optimize->add_option("--scenario", opt_scenario, "scenario file")->required();
    optimize->add_option("--eps", eps, "convergence threshold");
    optimize->add_option("--alpha", alpha, "update blend weight in (0, 1]");
    optimize->add_option("--seed", opt_seed, "seed for --init random");
    optimize->add_option("--init", opt_init, "starting vectors: eigen or random");

    std::string est_scenario, est_mode = "effective";
    int est_tau = 0, est_groups = 0, est_trials = 1000;
    std::uint64_t est_seed = 1;
    std::vector<double> rho_grid;
    auto *estimate = app.add_subcommand("estimate", "Monte-Carlo channel-estimation NMSE");
    estimate->add_option("--scenario", est_scenario, "scenario file")->required();
    estimate->add_option("--mode", est_mode, "pilot mode: full or effective");
    estimate->add_option("--tau", est_tau, "pilot length (0: shortest valid)");
    estimate->add_option("--groups", est_groups, "pilot groups (0: ceil(K/2))");
    estimate->add_option("--trials", est_trials, "Monte-Carlo trials");
    estimate->add_option("--seed", est_seed, "trial seed");
    estimate->add_option("--rho-grid", rho_grid, "uplink powers in dBm")->delimiter(',');

    auto *validate = app.add_subcommand("validate", "run the library self-checks");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (run->parsed())
            return cmd_run(config_path, out_path, threads);
        if (optimize->parsed())
            return cmd_optimize(opt_scenario, eps, alpha, opt_seed, opt_init);
        if (estimate->parsed())
        {
            if (rho_grid.empty())
                rho_grid = {5.0, 15.0, 25.0};
            return cmd_estimate(est_scenario, est_mode, est_tau, est_groups, est_trials, est_seed, rho_grid);
        }
        if (validate->parsed())
            return cmd_validate();
    }
    catch (const std::exception &e)
    {
        std::cerr << "covshape: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
