// Acceptance gate: end-to-end checks of the shipped scenarios, the closed
// forms, the optimizer, and the CLI. Each check prints exactly one line
//
//     criterion N: PASS (detail)
//
// and the process exit status is the number of failures, so the suite can run
// under ctest or standalone. Tolerances are fixed here, not configurable.
//
// Usage: covshape_acceptance <covshape-cli> <scenario-dir> <scratch-dir>

#include <covshape/covariance.hpp>
#include <covshape/harness.hpp>
#include <covshape/optimizer.hpp>
#include <covshape/pilots.hpp>
#include <covshape/rates.hpp>
#include <covshape/rng.hpp>
#include <covshape/scenario.hpp>

#include <armadillo>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace covshape;

namespace
{

std::string cli_path;
std::string scenario_dir;
std::string scratch_dir;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

struct StopWatch
{
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(double x, int digits = 3)
{
    std::ostringstream out;
    out.precision(digits);
    out << x;
    return out.str();
}

std::string scenario_file(const std::string &name)
{
    return scenario_dir + "/" + name + ".json";
}

arma::cx_mat random_psd(int n, std::mt19937_64 &rng)
{
    const arma::cx_mat g = randcn_mat((arma::uword)n, (arma::uword)n, rng);
    return g * g.t() / n + 0.05 * arma::eye<arma::cx_mat>((arma::uword)n, (arma::uword)n);
}

// Runs `fn(t)` for t in [0, trials) on a worker pool. Callers store per-trial
// results and reduce in index order afterwards, so the outcome does not
// depend on the pool size.
template <typename Fn>
void parallel_trials(int trials, Fn &&fn)
{
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1))
                fn(t);
        });
    for (auto &worker : pool)
        worker.join();
}

ExperimentConfig sweep_config(const std::string &scenario, const std::string &schemes, const std::string &variable,
                              const std::string &grid, int trials, std::uint64_t seed, const std::string &extra = "")
{
    std::ostringstream text;
    text << "{\"scenario\": \"" << scenario << "\", \"schemes\": [" << schemes << "], "
         << "\"sweep\": {\"variable\": \"" << variable << "\", \"grid\": [" << grid << "]}, "
         << "\"trials\": " << trials << ", \"seed\": " << seed << extra << "}";
    return parse_config(text.str(), ".");
}

// Estimation-chain moment identities on a small shaped two-UE setup with a
// shared pilot: every consistency row must sit inside its own Monte-Carlo
// error band, and the whole suite must be quick.
Outcome criterion_1()
{
    StopWatch clock;

    ScenarioLayout layout;
    layout.bs_kind = ArrayKind::Ula;
    layout.bs_mx = 8;
    layout.bs_position = {0.0, 0.0, 10.0};
    layout.kappa = 0.0;
    layout.beta = 2.0;
    layout.ref_loss_db = 82.0;
    for (int s = 0; s < 6; ++s)
        layout.scatterers.push_back({-7.5 + 3.0 * s, 28.0 + 2.0 * (s % 3), 2.0 + s});
    for (int k = 0; k < 2; ++k)
    {
        UePlacement ue;
        ue.position = {k == 0 ? -2.0 : 2.0, 50.0, 1.5};
        ue.n_antennas = 2;
        layout.ues.push_back(ue);
    }

    const Scenario sc = build_scenario(layout);
    std::vector<BlockCovariance> covs;
    for (int k = 0; k < 2; ++k)
        covs.push_back(path_covariance(sc, k));
    const OptimizerReport rep = optimize_multi(covs, OptimizerSettings{});
    std::vector<EffectiveCovariance> eff;
    for (int k = 0; k < 2; ++k)
        eff.push_back(effective_covariance(covs[(size_t)k], rep.vectors[(size_t)k]));

    const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 0, {2, 2});
    const std::vector<MomentCheck> checks =
        moment_oracles(eff, book, sc.powers.rho_ue, sc.noise.sigma2_bs, 100000, 7);

    int failed = 0;
    for (const MomentCheck &check : checks)
        if (!check.pass)
            ++failed;
    const double wall = clock.seconds();
    const bool pass = failed == 0 && wall < 60.0;
    return {pass, std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) +
                      " rows in band, " + fmt(wall) + " s"};
}

// The imperfect-estimation SINR must collapse onto the perfect-knowledge one
// when orthogonal pilots make the estimation error vanish.
Outcome criterion_2()
{
    double worst = 0.0;
    for (int set = 0; set < 20; ++set)
    {
        auto rng = derive_rng(2, (std::uint64_t)set, 0, 0);
        const int n_ues = 2 + set % 3;
        const int m = 16;

        std::vector<EffectiveCovariance> covs;
        std::vector<int> antennas;
        for (int k = 0; k < n_ues; ++k)
        {
            EffectiveCovariance cov;
            cov.phi = random_psd(m, rng);
            cov.shaping = arma::cx_vec{1.0, 0.0};
            covs.push_back(std::move(cov));
            antennas.push_back(2);
        }

        const PilotBook book = build_pilot_book(PilotMode::Effective, n_ues, 0, antennas);
        const double rho_ue = 1.0;
        const double sigma2 = book.tau * rho_ue / 1e12;
        const MmseFilter filter = make_mmse_filter(book, covs, rho_ue, sigma2);
        std::vector<arma::cx_mat> q;
        for (int k = 0; k < n_ues; ++k)
            q.push_back(filter.q[(size_t)k][0]);

        const double snr_bs = 100.0;
        const std::vector<double> imperfect = effective_sinr_imperfect(covs, q, book, snr_bs);
        const std::vector<double> perfect = effective_sinr_perfect(covs, snr_bs);
        for (int k = 0; k < n_ues; ++k)
            worst = std::max(worst, std::abs(imperfect[(size_t)k] - perfect[(size_t)k]) / perfect[(size_t)k]);
    }
    return {worst <= 1e-6, "max relative gap " + fmt(worst)};
}

// Plain alternating updates on every bundled scenario: the overlap trace may
// never increase, and convergence must arrive within ten sweeps.
Outcome criterion_3()
{
    const std::vector<std::string> names = {"nlos_2ue", "los_2ue", "nlos_4ue", "nlos_8ue_upa"};
    bool pass = true;
    std::string detail = "sweeps";
    for (const std::string &name : names)
    {
        const Scenario sc = load_scenario(scenario_file(name));
        std::vector<BlockCovariance> covs;
        for (int k = 0; k < sc.n_ues(); ++k)
            covs.push_back(path_covariance(sc, k));
        const OptimizerReport rep = optimize_multi(covs, OptimizerSettings{});

        bool monotone = true;
        for (size_t i = 1; i < rep.objective_trace.size(); ++i)
            monotone &= rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-12;
        pass &= rep.converged && rep.iterations <= 10 && monotone;
        detail += " " + std::to_string(rep.iterations) + (monotone ? "" : "(non-monotone)");
    }
    return {pass, detail};
}

// The alternating solver has to land at or below 110% of the best overlap
// found by a thousand uniformly sampled shaping pairs per UE. The solver
// frequently beats the sampled optimum, so only the upper edge is binding.
Outcome criterion_4()
{
    StopWatch clock;
    bool pass = true;
    std::string detail = "ratios";
    for (const std::string &name : {std::string("nlos_2ue"), std::string("los_2ue")})
    {
        const Scenario sc = load_scenario(scenario_file(name));
        std::vector<BlockCovariance> covs;
        std::vector<const BlockCovariance *> ptrs;
        for (int k = 0; k < sc.n_ues(); ++k)
            covs.push_back(path_covariance(sc, k));
        for (const BlockCovariance &cov : covs)
            ptrs.push_back(&cov);

        const OptimizerReport rep = optimize_multi(covs, OptimizerSettings{});
        const double algorithm = rep.objective_trace.back();
        const double sampled = exhaustive_oracle(ptrs, 1000, 4004).objective;
        pass &= sampled > 0.0 && algorithm <= 1.1 * sampled;
        detail += " " + fmt(algorithm / sampled);
    }
    const double wall = clock.seconds();
    pass &= wall < 30.0;
    return {pass, detail + ", " + fmt(wall) + " s"};
}

// Under a separable covariance the overlap metric must ignore the shaping
// entirely and equal the transmit-side trace ratio.
Outcome criterion_5()
{
    auto rng = derive_rng(5, 0, 0, 0);
    const arma::cx_mat r_k = random_psd(2, rng);
    const arma::cx_mat t_k = random_psd(16, rng);
    const arma::cx_mat r_j = random_psd(2, rng);
    const arma::cx_mat t_j = random_psd(16, rng);
    const BlockCovariance cov_k = kronecker_covariance(r_k, t_k);
    const BlockCovariance cov_j = kronecker_covariance(r_j, t_j);

    const double closed =
        arma::trace(t_k * t_j).real() / (arma::trace(t_k).real() * arma::trace(t_j).real());

    double lo = arma::datum::inf;
    double hi = -arma::datum::inf;
    double worst = 0.0;
    for (int pair = 0; pair < 100; ++pair)
    {
        const ShapingVector v_k(rand_unit_vec(2, rng));
        const ShapingVector v_j(rand_unit_vec(2, rng));
        const double delta = delta_metric(cov_k, cov_j, v_k, v_j);
        lo = std::min(lo, delta);
        hi = std::max(hi, delta);
        worst = std::max(worst, std::abs(delta - closed));
    }
    const bool pass = (hi - lo) <= 1e-10 * closed && worst <= 1e-10 * closed;
    return {pass, "spread " + fmt((hi - lo) / closed) + ", closed-form gap " + fmt(worst / closed)};
}

// With a shared pilot, shaping has to estimate strictly better than the
// contaminated per-antenna mode at every uplink power.
Outcome criterion_6()
{
    const ExperimentConfig cfg =
        sweep_config(scenario_file("nlos_2ue"), "\"covariance_shaping\", \"spatial_multiplexing\"", "rho_ue",
                     "5, 15, 25", 2000, 1, ", \"pilot\": {\"groups\": 1}");
    bool pass = true;
    std::string detail = "nmse (shaped vs full)";
    for (size_t i = 0; i < cfg.sweep.grid.size(); ++i)
    {
        const ResultRecord a = run_point(cfg, (int)i, cfg.sweep.grid[i], Scheme::CovarianceShaping, 0);
        const ResultRecord b = run_point(cfg, (int)i, cfg.sweep.grid[i], Scheme::SpatialMultiplexing, 0);
        pass &= a.mean_nmse < b.mean_nmse;
        detail += " " + fmt(a.mean_nmse) + "<" + fmt(b.mean_nmse);
    }
    return {pass, detail};
}

// The sum-rate crossover: shaping wins clearly at 64 and 128 antennas and
// loses to full multiplexing at 256, under MMSE precoding.
Outcome criterion_7()
{
    StopWatch clock;
    const ExperimentConfig cfg = sweep_config(scenario_file("nlos_2ue"), "\"covariance_shaping\"", "M",
                                              "64, 128, 256", 500, 1, ", \"precoder\": \"mmse\"");
    bool pass = true;
    std::string detail;
    for (size_t i = 0; i < cfg.sweep.grid.size(); ++i)
    {
        const double m = cfg.sweep.grid[i];
        const ResultRecord a = run_point(cfg, (int)i, m, Scheme::CovarianceShaping, 0);
        const ResultRecord b = run_point(cfg, (int)i, m, Scheme::SpatialMultiplexing, 0);
        if (m < 200.0)
            pass &= a.mean_rate - b.mean_rate > 2.0 * (a.stderr_rate + b.stderr_rate);
        else
            pass &= b.mean_rate > a.mean_rate;
        detail += "M=" + std::to_string((int)m) + ": " + fmt(a.mean_rate, 4) + " vs " + fmt(b.mean_rate, 4) + "  ";
    }
    const double wall = clock.seconds();
    pass &= wall < 1200.0;
    return {pass, detail + fmt(wall) + " s"};
}

// Serving the four UEs in two alternating slots must cost total rate against
// serving all four at once: the halved pre-log dominates the interference
// relief at this geometry.
Outcome criterion_8()
{
    const std::string base = ", \"precoder\": \"mmse\"";
    const ExperimentConfig together = sweep_config(scenario_file("nlos_4ue"), "\"spatial_multiplexing\"", "rho_bs",
                                                   "30", 500, 5, base + ", \"scheduling\": false");
    const ExperimentConfig slotted = sweep_config(scenario_file("nlos_4ue"), "\"spatial_multiplexing\"", "rho_bs",
                                                  "30", 500, 5, base + ", \"scheduling\": true");
    const ResultRecord all_at_once = run_point(together, 0, 30.0, Scheme::SpatialMultiplexing, 0);
    const ResultRecord scheduled = run_point(slotted, 0, 30.0, Scheme::SpatialMultiplexing, 0);
    const bool pass = scheduled.mean_rate < all_at_once.mean_rate;
    return {pass, fmt(scheduled.mean_rate, 4) + " scheduled < " + fmt(all_at_once.mean_rate, 4) + " unscheduled"};
}

// Channel hardening: the closed-form rate bound has to approach the
// Monte-Carlo mean as the array grows, on a rich shared-ring geometry.
Outcome criterion_9()
{
    ScenarioLayout layout;
    layout.bs_kind = ArrayKind::Ula;
    layout.bs_spacing = 0.5;
    layout.bs_position = {0.0, 0.0, 10.0};
    layout.kappa = 0.0;
    layout.beta = 2.0;
    layout.ref_loss_db = 82.0;
    layout.rho_bs_dbm = 30.0;
    layout.rho_ue_dbm = 25.0;
    layout.sigma2_bs_dbm = -80.0;
    layout.sigma2_ue_dbm = -80.0;
    const int n_ring = 288;
    for (int u = 0; u < n_ring; ++u)
    {
        const double angle = 2.0 * arma::datum::pi * (u + 0.37) / n_ring;
        layout.scatterers.push_back(
            {11.0 * std::cos(angle), 50.0 + 11.0 * std::sin(angle), 2.0 + (double)(u % 5)});
    }
    for (int k = 0; k < 2; ++k)
    {
        UePlacement ue;
        ue.position = {k == 0 ? -2.0 : 2.0, 50.0, 1.5};
        ue.n_antennas = 2;
        layout.ues.push_back(ue);
    }

    std::vector<double> gaps;
    std::string detail = "gaps";
    for (int m : {16, 64, 256})
    {
        layout.bs_mx = m;
        const Scenario sc = build_scenario(layout);
        std::vector<BlockCovariance> covs;
        for (int k = 0; k < 2; ++k)
            covs.push_back(path_covariance(sc, k));
        const OptimizerReport rep = optimize_multi(covs, OptimizerSettings{});
        std::vector<EffectiveCovariance> eff;
        for (int k = 0; k < 2; ++k)
            eff.push_back(effective_covariance(covs[(size_t)k], rep.vectors[(size_t)k]));

        const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 0, {2, 2});
        const MmseFilter filter = make_mmse_filter(book, eff, sc.powers.rho_ue, sc.noise.sigma2_bs);
        std::vector<arma::cx_mat> q;
        for (int k = 0; k < 2; ++k)
            q.push_back(filter.q[(size_t)k][0]);
        const double snr_bs = sc.snr_bs();
        const double bound = ergodic_rate_lb(effective_sinr_imperfect(eff, q, book, snr_bs));

        const int trials = 2000;
        std::vector<double> rate(trials);
        parallel_trials(trials, [&](int t) {
            auto rng = derive_rng(9, (std::uint64_t)m, (std::uint64_t)t, 16);
            arma::cx_mat gbar(2, sc.n_bs_antennas());
            for (int k = 0; k < 2; ++k)
                gbar.row(k) = rep.vectors[(size_t)k].vec().t() * sample_channel(sc, k, rng);
            const arma::cx_mat rx = simulate_pilot_rx(gbar, book, sc.powers.rho_ue, sc.noise.sigma2_bs, rng);
            const EstimateSet est = apply_mmse_filter(filter, rx);
            const PrecodingMatrix w = mrt_precoder(est, eff);
            rate[(size_t)t] = sum_rate_cs(gbar, w, snr_bs).sum;
        });
        double mc = 0.0;
        for (int t = 0; t < trials; ++t)
            mc += rate[(size_t)t] / trials;

        gaps.push_back(std::abs(bound - mc));
        detail += " " + fmt(gaps.back());
    }
    const bool pass = gaps[0] > gaps[1] && gaps[1] > gaps[2];
    return {pass, detail};
}

// Same config, same seed, different worker counts: the CLI must produce
// byte-identical CSV output.
Outcome criterion_10()
{
    const std::filesystem::path scratch(scratch_dir);
    std::filesystem::create_directories(scratch);
    const std::string config_path = (scratch / "determinism.json").string();
    {
        std::ofstream out(config_path);
        out << "{\n"
            << "  \"scenario\": \"" << scenario_file("nlos_2ue") << "\",\n"
            << "  \"schemes\": [\"covariance_shaping\", \"spatial_multiplexing\"],\n"
            << "  \"sweep\": {\"variable\": \"M\", \"grid\": [16]},\n"
            << "  \"trials\": 40,\n"
            << "  \"seed\": 3\n"
            << "}\n";
    }

    const std::string csv_a = (scratch / "threads1.csv").string();
    const std::string csv_b = (scratch / "threads7.csv").string();
    const std::string log = (scratch / "cli.log").string();
    const std::string base = "\"" + cli_path + "\" run --config \"" + config_path + "\"";
    const int rc_a = std::system((base + " --out \"" + csv_a + "\" --threads 1 >> \"" + log + "\" 2>&1").c_str());
    const int rc_b = std::system((base + " --out \"" + csv_b + "\" --threads 7 >> \"" + log + "\" 2>&1").c_str());
    if (rc_a != 0 || rc_b != 0)
        return {false, "cli exit codes " + std::to_string(rc_a) + " and " + std::to_string(rc_b)};

    const auto slurp = [](const std::string &path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string a = slurp(csv_a);
    const std::string b = slurp(csv_b);
    const bool pass = !a.empty() && a == b;
    return {pass, pass ? std::to_string(a.size()) + " identical bytes" : "outputs differ"};
}

} // namespace

int main(int argc, char **argv)
{
    if (argc < 4)
    {
        std::fprintf(stderr, "usage: %s <covshape-cli> <scenario-dir> <scratch-dir>\n", argv[0]);
        return 2;
    }
    cli_path = std::filesystem::absolute(argv[1]).string();
    scenario_dir = std::filesystem::absolute(argv[2]).string();
    scratch_dir = std::filesystem::absolute(argv[3]).string();

    const std::vector<std::function<Outcome()>> criteria = {
        criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
        criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i)
    {
        Outcome outcome;
        try
        {
            outcome = criteria[i]();
        }
        catch (const std::exception &e)
        {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %zu: %s (%s)\n", i + 1, outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass)
            ++failures;
    }
    return failures;
}
