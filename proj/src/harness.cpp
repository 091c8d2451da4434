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

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace covshape
{

namespace
{

using nlohmann::ordered_json;

// Per-trial work split over a small pool; the first exception wins and is
// rethrown on the calling thread after everyone joins.
template <typename Fn> void parallel_for(int n, int n_threads, const Fn &fn)
{
    if (n_threads <= 1 || n <= 1)
    {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    auto worker = [&]() {
        for (;;)
        {
            const int i = next.fetch_add(1);
            if (i >= n)
                return;
            try
            {
                fn(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> hold(failure_lock);
                if (!failure)
                    failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int spawn = std::min(n_threads, n);
    pool.reserve((size_t)spawn);
    for (int w = 0; w < spawn; ++w)
        pool.emplace_back(worker);
    for (auto &t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

// Summation order fixed by the data layout, never by the worker count.
double pairwise_sum(const double *x, size_t n)
{
    if (n <= 8)
    {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i)
            s += x[i];
        return s;
    }
    const size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_mean(const std::vector<double> &x)
{
    return x.empty() ? 0.0 : pairwise_sum(x.data(), x.size()) / (double)x.size();
}

std::string format_double(double v, const char *fmt)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

Scheme scheme_from_token(const std::string &s)
{
    if (s == "covariance_shaping")
        return Scheme::CovarianceShaping;
    if (s == "spatial_multiplexing")
        return Scheme::SpatialMultiplexing;
    throw std::invalid_argument("config file: unknown scheme '" + s + "'");
}

Precoder precoder_from_token(const std::string &s)
{
    if (s == "mrt")
        return Precoder::Mrt;
    if (s == "mmse")
        return Precoder::Mmse;
    throw std::invalid_argument("config file: unknown precoder '" + s + "'");
}

SweepVariable sweep_from_token(const std::string &s)
{
    if (s == "rho_bs")
        return SweepVariable::RhoBs;
    if (s == "rho_ue")
        return SweepVariable::RhoUe;
    if (s == "d")
        return SweepVariable::Distance;
    if (s == "M")
        return SweepVariable::BsAntennas;
    throw std::invalid_argument("config file: unknown sweep variable '" + s + "'");
}

ScenarioLayout apply_sweep(const ScenarioLayout &base, SweepVariable variable, double value)
{
    ScenarioLayout out = base;
    switch (variable)
    {
    case SweepVariable::RhoBs:
        out.rho_bs_dbm = value;
        return out;
    case SweepVariable::RhoUe:
        out.rho_ue_dbm = value;
        return out;
    case SweepVariable::Distance:
    {
        if (out.ues.size() < 2)
            throw std::invalid_argument("sweep: inter-UE distance needs at least two UEs");
        if (!(value > 0.0))
            throw std::invalid_argument("sweep: inter-UE distance must be positive");
        Point3 centroid;
        for (const auto &ue : out.ues)
        {
            centroid.x += ue.position.x;
            centroid.y += ue.position.y;
            centroid.z += ue.position.z;
        }
        const double inv = 1.0 / (double)out.ues.size();
        centroid.x *= inv;
        centroid.y *= inv;
        centroid.z *= inv;
        const auto &p0 = out.ues[0].position;
        const auto &p1 = out.ues[1].position;
        const double current = std::hypot(p1.x - p0.x, p1.y - p0.y, p1.z - p0.z);
        if (!(current > 0.0))
            throw std::invalid_argument("sweep: reference UEs are co-located, cannot rescale spacing");
        // Spread or squeeze every UE about the centroid so the first pair
        // sits exactly `value` meters apart. Shared scatterers stay put;
        // each UE's private reflection points ride along with it so the
        // local bounce geometry is preserved.
        const double factor = value / current;
        for (auto &ue : out.ues)
        {
            const Point3 old = ue.position;
            ue.position.x = centroid.x + factor * (old.x - centroid.x);
            ue.position.y = centroid.y + factor * (old.y - centroid.y);
            ue.position.z = centroid.z + factor * (old.z - centroid.z);
            for (auto &sc : ue.scatterers)
            {
                sc.x += ue.position.x - old.x;
                sc.y += ue.position.y - old.y;
                sc.z += ue.position.z - old.z;
            }
        }
        return out;
    }
    case SweepVariable::BsAntennas:
    {
        const double rounded = std::round(value);
        if (!(value > 0.0) || std::abs(value - rounded) > 1e-9)
            throw std::invalid_argument("sweep: BS antenna count must be a positive integer");
        const int m = (int)rounded;
        if (out.bs_kind == ArrayKind::Ula)
        {
            out.bs_mx = m;
            out.bs_my = 1;
        }
        else
        {
            if (out.bs_my <= 0 || m % out.bs_my != 0)
                throw std::invalid_argument("sweep: antenna count " + std::to_string(m) +
                                            " does not divide into " + std::to_string(out.bs_my) +
                                            " planar rows");
            out.bs_mx = m / out.bs_my;
        }
        return out;
    }
    }
    throw std::logic_error("sweep: unhandled variable");
}

Scenario restrict_scenario(const Scenario &full, const std::vector<int> &members)
{
    Scenario out = full;
    out.ue_arrays.clear();
    out.paths.clear();
    for (int k : members)
    {
        out.ue_arrays.push_back(full.ue_arrays[(size_t)k]);
        out.paths.push_back(full.paths[(size_t)k]);
    }
    return out;
}

// Everything about one served slot that survives across trials.
struct SlotPlan
{
    std::vector<int> members;
    Scenario scenario;
    std::vector<BlockCovariance> covs;
    std::vector<ShapingVector> shaping;       // scheme A
    std::vector<EffectiveCovariance> eff;     // scheme A
    std::vector<std::vector<arma::cx_mat>> per_antenna; // scheme B
    PilotBook book;
    MmseFilter filter;
    double total_power = 0.0;
    int iterations = 0;
};

SlotPlan prepare_slot(const ExperimentConfig &config, const Scenario &scenario,
                      const std::vector<BlockCovariance> &covs, std::vector<int> members, Scheme scheme)
{
    SlotPlan plan;
    plan.members = std::move(members);
    plan.scenario = restrict_scenario(scenario, plan.members);
    std::vector<int> antennas;
    for (int k : plan.members)
    {
        plan.covs.push_back(covs[(size_t)k]);
        antennas.push_back(covs[(size_t)k].n_ue());
    }
    const int active = (int)plan.members.size();
    int groups = config.pilot.groups;
    if (groups <= 0)
        groups = (active + 1) / 2;
    groups = std::min(groups, active);

    if (scheme == Scheme::CovarianceShaping)
    {
        if (config.optimize_shaping)
        {
            std::vector<const BlockCovariance *> ptrs;
            for (const auto &c : plan.covs)
                ptrs.push_back(&c);
            OptimizerReport report = optimize_multi(ptrs, config.optimizer);
            plan.shaping = std::move(report.vectors);
            plan.iterations = report.iterations;
        }
        else
        {
            for (int n : antennas)
            {
                arma::cx_vec e1(n, arma::fill::zeros);
                e1(0) = 1.0;
                plan.shaping.emplace_back(e1);
            }
        }
        for (int i = 0; i < active; ++i)
        {
            plan.eff.push_back(effective_covariance(plan.covs[(size_t)i], plan.shaping[(size_t)i]));
            plan.total_power += plan.eff.back().trace();
        }
        plan.book = build_pilot_book(PilotMode::Effective, groups, config.pilot.tau, antennas);
        plan.filter = make_mmse_filter(plan.book, plan.eff, scenario.powers.rho_ue, scenario.noise.sigma2_bs);
    }
    else
    {
        for (int i = 0; i < active; ++i)
        {
            std::vector<arma::cx_mat> rows;
            for (int n = 0; n < antennas[(size_t)i]; ++n)
            {
                rows.push_back(per_antenna_cov(plan.covs[(size_t)i], n));
                plan.total_power += std::real(arma::trace(rows.back()));
            }
            plan.per_antenna.push_back(std::move(rows));
        }
        plan.book = build_pilot_book(PilotMode::Full, groups, config.pilot.tau, antennas);
        plan.filter = make_mmse_filter(plan.book, plan.per_antenna, scenario.powers.rho_ue,
                                       scenario.noise.sigma2_bs);
    }
    return plan;
}

} // namespace

const char *scheme_token(Scheme scheme)
{
    return scheme == Scheme::CovarianceShaping ? "covariance_shaping" : "spatial_multiplexing";
}

const char *precoder_token(Precoder precoder)
{
    return precoder == Precoder::Mrt ? "mrt" : "mmse";
}

const char *sweep_token(SweepVariable variable)
{
    switch (variable)
    {
    case SweepVariable::RhoBs:
        return "rho_bs";
    case SweepVariable::RhoUe:
        return "rho_ue";
    case SweepVariable::Distance:
        return "d";
    case SweepVariable::BsAntennas:
        return "M";
    }
    return "?";
}

void ExperimentConfig::validate() const
{
    if (layout.ues.empty())
        throw std::invalid_argument("config: scenario has no UEs");
    if (schemes.empty())
        throw std::invalid_argument("config: at least one scheme is required");
    if (sweep.grid.empty())
        throw std::invalid_argument("config: sweep grid is empty");
    if (trials < 1)
        throw std::invalid_argument("config: trials must be at least 1");
    if (pilot.groups < 0 || pilot.tau < 0)
        throw std::invalid_argument("config: pilot bounds must be nonnegative");
    if (!(optimizer.epsilon >= 0.0))
        throw std::invalid_argument("config: optimizer epsilon must be nonnegative");
    if (!(optimizer.alpha > 0.0) || optimizer.alpha > 1.0)
        throw std::invalid_argument("config: optimizer alpha must lie in (0, 1]");
    if (optimizer.max_iterations < 1)
        throw std::invalid_argument("config: optimizer needs at least one iteration");
    if (scheduling && layout.ues.size() < 2)
        throw std::invalid_argument("config: scheduling needs at least two UEs");
}

ExperimentConfig parse_config(const std::string &json_text, const std::string &base_dir)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(json_text);
    }
    catch (const nlohmann::json::exception &e)
    {
        throw std::invalid_argument(std::string("config file: ") + e.what());
    }

    ExperimentConfig config;
    try
    {
        const std::string scenario = j.at("scenario").get<std::string>();
        std::filesystem::path p(scenario);
        if (p.is_relative())
            p = std::filesystem::path(base_dir) / p;
        config.scenario_path = p.string();

        if (j.contains("schemes"))
            for (const auto &s : j.at("schemes"))
                config.schemes.push_back(scheme_from_token(s.get<std::string>()));
        else if (j.contains("scheme"))
            config.schemes.push_back(scheme_from_token(j.at("scheme").get<std::string>()));
        else
            throw std::invalid_argument("config file: missing 'scheme' or 'schemes'");

        if (j.contains("precoder"))
            config.precoder = precoder_from_token(j.at("precoder").get<std::string>());

        const auto &sweep = j.at("sweep");
        config.sweep.variable = sweep_from_token(sweep.at("variable").get<std::string>());
        for (const auto &v : sweep.at("grid"))
            config.sweep.grid.push_back(v.get<double>());

        config.trials = j.value("trials", 500);
        config.seed = j.value("seed", (std::uint64_t)1);
        config.scheduling = j.value("scheduling", false);
        config.optimize_shaping = j.value("optimize_shaping", true);
        if (j.contains("pilot"))
        {
            config.pilot.groups = j.at("pilot").value("groups", 0);
            config.pilot.tau = j.at("pilot").value("tau", 0);
        }
        if (j.contains("optimizer"))
        {
            const auto &opt = j.at("optimizer");
            config.optimizer.epsilon = opt.value("epsilon", 1e-6);
            config.optimizer.alpha = opt.value("alpha", 1.0);
            config.optimizer.max_iterations = opt.value("max_iterations", 100);
            config.optimizer.distributed = opt.value("distributed", false);
        }
    }
    catch (const nlohmann::json::exception &e)
    {
        throw std::invalid_argument(std::string("config file: ") + e.what());
    }

    config.layout = load_layout(config.scenario_path);
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("config file: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string base = std::filesystem::path(path).parent_path().string();
    return parse_config(text, base.empty() ? "." : base);
}

int resolve_threads(int requested)
{
    if (const char *env = std::getenv("COVSHAPE_THREADS"))
    {
        int parsed = 0;
        const std::string text(env);
        const auto *end = text.data() + text.size();
        const auto res = std::from_chars(text.data(), end, parsed);
        if (res.ec != std::errc() || res.ptr != end || parsed < 1)
            throw std::invalid_argument("COVSHAPE_THREADS must be a positive integer, got '" + text + "'");
        return parsed;
    }
    if (requested > 0)
        return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : (int)hw;
}

ResultRecord run_point(const ExperimentConfig &config, int point_index, double value, Scheme scheme,
                       int n_threads)
{
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const int workers = resolve_threads(n_threads);

    const ScenarioLayout layout = apply_sweep(config.layout, config.sweep.variable, value);
    const Scenario scenario = build_scenario(layout);
    const int n_ues = scenario.n_ues();

    std::vector<BlockCovariance> covs;
    covs.reserve((size_t)n_ues);
    for (int k = 0; k < n_ues; ++k)
        covs.push_back(path_covariance(scenario, k));

    std::vector<std::vector<int>> slots;
    if (config.scheduling)
    {
        slots.assign(2, {});
        for (int k = 0; k < n_ues; ++k)
            slots[(size_t)(k % 2)].push_back(k);
    }
    else
    {
        slots.emplace_back();
        for (int k = 0; k < n_ues; ++k)
            slots[0].push_back(k);
    }

    std::vector<SlotPlan> plans;
    for (auto &members : slots)
        plans.push_back(prepare_slot(config, scenario, covs, members, scheme));

    const double slot_share = config.scheduling ? 0.5 : 1.0;
    const double snr_bs = scenario.snr_bs();
    const int trials = config.trials;

    std::vector<double> rate_samples((size_t)trials, 0.0);
    arma::mat ue_rate_samples(trials, n_ues, arma::fill::zeros);
    arma::mat ue_nmse_samples(trials, n_ues, arma::fill::zeros);
    arma::Mat<int> nmse_included(trials, n_ues, arma::fill::zeros);
    const std::uint64_t stream_base = (scheme == Scheme::CovarianceShaping) ? 16 : 64;

    parallel_for(trials, workers, [&](int t) {
        double total = 0.0;
        for (size_t slot = 0; slot < plans.size(); ++slot)
        {
            const SlotPlan &plan = plans[slot];
            auto rng = derive_rng(config.seed, (std::uint64_t)point_index, (std::uint64_t)t,
                                  stream_base + slot);
            const int active = (int)plan.members.size();

            ChannelRealization chans((size_t)active);
            for (int i = 0; i < active; ++i)
                chans[(size_t)i] = sample_channel(plan.scenario, i, rng);

            EstimateSet est;
            RateBreakdown rates;
            NmseSample err;
            if (scheme == Scheme::CovarianceShaping)
            {
                arma::cx_mat gbar(active, plan.scenario.n_bs_antennas());
                std::vector<arma::cx_mat> truth((size_t)active);
                for (int i = 0; i < active; ++i)
                {
                    gbar.row(i) = plan.shaping[(size_t)i].vec().t() * chans[(size_t)i];
                    truth[(size_t)i] = gbar.row(i);
                }
                const arma::cx_mat rx = simulate_pilot_rx(gbar, plan.book, plan.scenario.powers.rho_ue,
                                                          plan.scenario.noise.sigma2_bs, rng);
                est = apply_mmse_filter(plan.filter, rx);
                const PrecodingMatrix w = (config.precoder == Precoder::Mrt)
                                              ? mrt_precoder(est, plan.eff)
                                              : mmse_precoder(est, snr_bs);
                rates = sum_rate_cs(gbar, w, snr_bs);
                err = nmse(est, truth);
            }
            else
            {
                const arma::cx_mat rx = simulate_pilot_rx(chans, plan.book, plan.scenario.powers.rho_ue,
                                                          plan.scenario.noise.sigma2_bs, rng);
                est = apply_mmse_filter(plan.filter, rx);
                const PrecodingMatrix w = (config.precoder == Precoder::Mrt)
                                              ? mrt_precoder(est, plan.total_power)
                                              : mmse_precoder(est, snr_bs);
                std::vector<arma::cx_mat> combiners((size_t)active);
                for (int i = 0; i < active; ++i)
                    combiners[(size_t)i] = ue_combiner_sm(chans[(size_t)i], w, i, snr_bs);
                rates = sum_rate_sm(chans, w, combiners, snr_bs);
                err = nmse(est, chans);
            }

            for (size_t s = 0; s < rates.rate.size(); ++s)
            {
                const int global = plan.members[(size_t)rates.owner[s]];
                ue_rate_samples(t, global) += slot_share * rates.rate[s];
            }
            total += slot_share * rates.sum;
            for (int i = 0; i < active; ++i)
                if (err.included[(size_t)i])
                {
                    ue_nmse_samples(t, plan.members[(size_t)i]) = err.value[(size_t)i];
                    nmse_included(t, plan.members[(size_t)i]) = 1;
                }
        }
        rate_samples[(size_t)t] = total;
    });

    ResultRecord record;
    record.variable = config.sweep.variable;
    record.value = value;
    record.scheme = scheme;
    record.precoder = config.precoder;
    record.trials = trials;
    record.seed = config.seed;
    for (const auto &plan : plans)
        record.iterations = std::max(record.iterations, plan.iterations);

    record.mean_rate = pairwise_mean(rate_samples);
    if (trials > 1)
    {
        double ss = 0.0;
        for (double r : rate_samples)
            ss += (r - record.mean_rate) * (r - record.mean_rate);
        record.stderr_rate = std::sqrt(ss / (trials - 1.0) / trials);
    }

    record.ue_rate.assign((size_t)n_ues, 0.0);
    record.ue_nmse.assign((size_t)n_ues, 0.0);
    double nmse_total = 0.0;
    int nmse_ues = 0;
    for (int k = 0; k < n_ues; ++k)
    {
        std::vector<double> col(ue_rate_samples.colptr(k), ue_rate_samples.colptr(k) + trials);
        record.ue_rate[(size_t)k] = pairwise_mean(col);
        double sum = 0.0;
        int used = 0;
        for (int t = 0; t < trials; ++t)
            if (nmse_included(t, k))
            {
                sum += ue_nmse_samples(t, k);
                ++used;
            }
        if (used > 0)
        {
            record.ue_nmse[(size_t)k] = sum / used;
            nmse_total += record.ue_nmse[(size_t)k];
            ++nmse_ues;
        }
    }
    record.mean_nmse = (nmse_ues > 0) ? nmse_total / nmse_ues : 0.0;

    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

std::vector<ResultRecord> run_sweep(const ExperimentConfig &config, int n_threads)
{
    config.validate();
    std::vector<ResultRecord> records;
    for (size_t i = 0; i < config.sweep.grid.size(); ++i)
        for (Scheme scheme : config.schemes)
            records.push_back(run_point(config, (int)i, config.sweep.grid[i], scheme, n_threads));
    return records;
}

std::string csv_header()
{
    return "sweep_var,value,scheme,precoder,mean_sum_rate_bps_hz,stderr,mean_nmse,iterations,trials,seed";
}

std::string csv_line(const ResultRecord &record)
{
    std::string line;
    line += sweep_token(record.variable);
    line += ',';
    line += format_double(record.value, "%.10g");
    line += ',';
    line += scheme_token(record.scheme);
    line += ',';
    line += precoder_token(record.precoder);
    line += ',';
    line += format_double(record.mean_rate, "%.12g");
    line += ',';
    line += format_double(record.stderr_rate, "%.12g");
    line += ',';
    line += format_double(record.mean_nmse, "%.12g");
    line += ',';
    line += std::to_string(record.iterations);
    line += ',';
    line += std::to_string(record.trials);
    line += ',';
    line += std::to_string(record.seed);
    return line;
}

void write_csv(const std::string &path, const std::vector<ResultRecord> &records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("results: cannot open " + path + " for writing");
    out << csv_header() << '\n';
    for (const auto &r : records)
        out << csv_line(r) << '\n';
    if (!out)
        throw std::runtime_error("results: write to " + path + " failed");
}

std::string sidecar_path(const std::string &csv_path)
{
    std::filesystem::path p(csv_path);
    p.replace_extension(".json");
    return p.string();
}

void write_sidecar(const std::string &path, const ExperimentConfig &config)
{
    ordered_json j;
    j["version"] = library_version;
    ordered_json c;
    c["scenario"] = config.scenario_path;
    c["schemes"] = ordered_json::array();
    for (Scheme s : config.schemes)
        c["schemes"].push_back(scheme_token(s));
    c["precoder"] = precoder_token(config.precoder);
    c["sweep"] = {{"variable", sweep_token(config.sweep.variable)}, {"grid", config.sweep.grid}};
    c["trials"] = config.trials;
    c["seed"] = config.seed;
    c["scheduling"] = config.scheduling;
    c["pilot"] = {{"groups", config.pilot.groups}, {"tau", config.pilot.tau}};
    c["optimizer"] = {{"epsilon", config.optimizer.epsilon},
                      {"alpha", config.optimizer.alpha},
                      {"max_iterations", config.optimizer.max_iterations},
                      {"distributed", config.optimizer.distributed}};
    c["optimize_shaping"] = config.optimize_shaping;
    j["config"] = c;

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("results: cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

namespace
{

// Small random Hermitian PSD matrix with unit-scale eigenvalues.
arma::cx_mat random_psd(arma::uword n, std::mt19937_64 &rng)
{
    const arma::cx_mat g = randcn_mat(n, n, rng);
    arma::cx_mat out = g * g.t() / (double)n;
    out.diag() += std::complex<double>(1e-3, 0.0);
    return out;
}

PathSum random_paths(int n_ue, int n_bs, int n_paths, std::mt19937_64 &rng)
{
    PathSum paths;
    paths.weights.set_size(n_paths);
    paths.ue_resp.set_size(n_ue, n_paths);
    paths.bs_resp.set_size(n_bs, n_paths);
    std::uniform_real_distribution<double> angle(0.1, 3.0);
    std::uniform_real_distribution<double> weight(0.2, 1.0);
    for (int u = 0; u < n_paths; ++u)
    {
        paths.weights(u) = weight(rng);
        paths.ue_resp.col(u) = ula_response(n_ue, 0.5, angle(rng));
        paths.bs_resp.col(u) = ula_response(n_bs, 0.5, angle(rng));
    }
    return paths;
}

} // namespace

std::vector<CheckResult> validate_library(std::uint64_t seed)
{
    std::vector<CheckResult> checks;

    // Path-sum and dense representations must describe the same operator.
    {
        auto rng = derive_rng(seed, 0, 0, 1);
        const PathSum paths = random_paths(2, 6, 5, rng);
        const BlockCovariance by_paths = BlockCovariance::from_paths(paths.weights, paths.ue_resp, paths.bs_resp);
        const BlockCovariance by_dense = BlockCovariance::from_dense(by_paths.dense(), 2, 6);
        const ShapingVector v(rand_unit_vec(2, rng));
        const arma::cx_mat phi_a = effective_covariance(by_paths, v).phi;
        const arma::cx_mat phi_b = effective_covariance(by_dense, v).phi;
        double worst = std::abs(by_paths.trace() - by_dense.trace()) / by_dense.trace();
        worst = std::max(worst, arma::norm(phi_a - phi_b, "fro") / arma::norm(phi_b, "fro"));
        checks.push_back({"representation_equivalence", worst < 1e-10, worst,
                          "path-sum vs dense trace and shaped covariance"});
    }

    // Pilot blocks must be orthonormal across groups at the documented scale.
    {
        const PilotBook full = build_pilot_book(PilotMode::Full, 2, 0, {2, 2});
        double worst = 0.0;
        for (int g = 0; g < 2; ++g)
            for (int h = 0; h < 2; ++h)
            {
                const arma::cx_mat prod = full.sequences[(size_t)g] * full.sequences[(size_t)h].t();
                const arma::cx_mat want = (g == h) ? arma::cx_mat(((double)full.tau / 2.0) *
                                                                  arma::eye<arma::cx_mat>(2, 2))
                                                   : arma::cx_mat(2, 2, arma::fill::zeros);
                worst = std::max(worst, arma::abs(prod - want).max());
            }
        const PilotBook eff = build_pilot_book(PilotMode::Effective, 3, 6, {1, 1, 1});
        for (int g = 0; g < 3; ++g)
        {
            const double power = std::real(arma::as_scalar(eff.sequences[(size_t)g] *
                                                           eff.sequences[(size_t)g].t()));
            worst = std::max(worst, std::abs(power - (double)eff.tau));
        }
        checks.push_back({"pilot_orthogonality", worst < 1e-10, worst, "group cross-products and row powers"});
    }

    // Separable covariances: overlap must ignore the shaping entirely, and
    // the optimizer must see a flat objective.
    {
        auto rng = derive_rng(seed, 0, 0, 2);
        const arma::cx_mat r = random_psd(2, rng);
        const arma::cx_mat t1 = random_psd(6, rng);
        const arma::cx_mat t2 = random_psd(6, rng);
        const BlockCovariance k1 = kronecker_covariance(r, t1);
        const BlockCovariance k2 = kronecker_covariance(r, t2);
        const double expected = hermitian_product_trace(t1, t2) /
                                (std::real(arma::trace(t1)) * std::real(arma::trace(t2)));
        double lo = arma::datum::inf, hi = -arma::datum::inf;
        for (int i = 0; i < 20; ++i)
        {
            const ShapingVector va(rand_unit_vec(2, rng));
            const ShapingVector vb(rand_unit_vec(2, rng));
            const double d = delta_metric(k1, k2, va, vb);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        double worst = (hi - lo) / expected;
        worst = std::max(worst, std::abs(hi - expected) / expected);

        OptimizerSettings settings;
        settings.max_iterations = 5;
        const OptimizerReport report = optimize_pair(k1, k2, settings);
        double flat = 0.0;
        for (double obj : report.objective_trace)
            flat = std::max(flat, std::abs(obj - report.objective_trace[0]));
        checks.push_back({"kronecker_degeneracy", worst < 1e-10 && flat < 1e-12,
                          std::max(worst, flat),
                          "shaping-independent overlap, constant objective trace detected"});
    }

    // Estimation-chain moments at toy size.
    {
        auto rng = derive_rng(seed, 0, 0, 3);
        std::vector<EffectiveCovariance> covs;
        for (int k = 0; k < 2; ++k)
        {
            const PathSum paths = random_paths(2, 4, 4, rng);
            const BlockCovariance cov = BlockCovariance::from_paths(paths.weights, paths.ue_resp, paths.bs_resp);
            covs.push_back(effective_covariance(cov, ShapingVector(rand_unit_vec(2, rng))));
        }
        const PilotBook book = build_pilot_book(PilotMode::Effective, 1, 4, {1, 1});
        const auto rows = moment_oracles(covs, book, 1.0, 0.1, 20000, seed);
        bool all = true;
        double worst = 0.0;
        for (const auto &row : rows)
        {
            all = all && row.pass;
            if (row.stderr_est > 0.0)
                worst = std::max(worst, std::abs(row.empirical - row.analytic) / (3.0 * row.stderr_est));
        }
        checks.push_back({"moment_suite_quick", all, worst, "20k-trial estimation moment identities"});
    }

    // The PSD guard must catch a deliberately broken covariance.
    {
        auto rng = derive_rng(seed, 0, 0, 4);
        arma::cx_mat phi = random_psd(4, rng);
        bool clean_ok = true;
        try
        {
            check_hermitian_psd(phi, "diagnostic");
        }
        catch (const std::exception &)
        {
            clean_ok = false;
        }
        phi(0, 1) += 1e-3; // breaks Hermitian symmetry on purpose
        bool caught = false;
        try
        {
            check_hermitian_psd(phi, "diagnostic");
        }
        catch (const std::invalid_argument &)
        {
            caught = true;
        }
        checks.push_back({"psd_fault_injection", clean_ok && caught, caught ? 1.0 : 0.0,
                          "1e-3 non-Hermitian tamper rejected, intact matrix accepted"});
    }

    return checks;
}

} // namespace covshape
