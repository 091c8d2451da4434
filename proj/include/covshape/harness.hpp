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

#include "covshape/optimizer.hpp"
#include "covshape/rates.hpp"
#include "covshape/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace covshape
{

inline constexpr const char *library_version = "0.1.0";

// Downlink serving scheme: one shaped stream per UE on statistically chosen
// combiners, or full per-antenna multiplexing.
enum class Scheme
{
    CovarianceShaping,
    SpatialMultiplexing,
};

enum class Precoder
{
    Mrt,
    Mmse,
};

enum class SweepVariable
{
    RhoBs,      // downlink power, dBm
    RhoUe,      // uplink pilot power, dBm
    Distance,   // inter-UE spacing, meters
    BsAntennas, // BS array size
};

const char *scheme_token(Scheme scheme);
const char *precoder_token(Precoder precoder);
const char *sweep_token(SweepVariable variable);

struct PilotConfig
{
    int groups = 0; // 0: ceil(active UEs / 2)
    int tau = 0;    // 0: shortest length that fits the groups
};

struct SweepConfig
{
    SweepVariable variable = SweepVariable::RhoBs;
    std::vector<double> grid;
};

struct ExperimentConfig
{
    std::string scenario_path;
    ScenarioLayout layout; // resolved copy of the scenario file
    std::vector<Scheme> schemes;
    Precoder precoder = Precoder::Mrt;
    SweepConfig sweep;
    int trials = 500;
    std::uint64_t seed = 1;
    bool scheduling = false; // alternate two UE groups over slots, pre-log 1/2
    PilotConfig pilot;
    OptimizerSettings optimizer;
    bool optimize_shaping = true; // false: fixed first-antenna shaping baseline

    void validate() const;
};

// `scenario` paths inside the config resolve against the config file's
// directory when relative.
ExperimentConfig parse_config(const std::string &json_text, const std::string &base_dir = ".");
ExperimentConfig load_config(const std::string &path);

struct ResultRecord
{
    SweepVariable variable = SweepVariable::RhoBs;
    double value = 0.0;
    Scheme scheme = Scheme::CovarianceShaping;
    Precoder precoder = Precoder::Mrt;
    std::vector<double> ue_rate; // per-UE trial-mean rates, bps/Hz
    std::vector<double> ue_nmse; // per-UE trial-mean estimation NMSE
    double mean_rate = 0.0;      // trial mean of the summed rate
    double stderr_rate = 0.0;    // sample stddev / sqrt(trials)
    double mean_nmse = 0.0;      // average of ue_nmse
    int iterations = 0;          // shaping optimizer sweeps (0 for scheme B)
    int trials = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

// One Monte-Carlo point: fixed sweep value, fixed scheme. `point_index` feeds
// the per-trial seed derivation, so a record never depends on which other
// points run or on the worker count.
ResultRecord run_point(const ExperimentConfig &config, int point_index, double value, Scheme scheme,
                       int n_threads = 0);

// Every grid value crossed with every configured scheme, in grid-major order.
std::vector<ResultRecord> run_sweep(const ExperimentConfig &config, int n_threads = 0);

std::string csv_header();
std::string csv_line(const ResultRecord &record);
void write_csv(const std::string &path, const std::vector<ResultRecord> &records);

// Config echo plus the library version, written next to the CSV (extension
// swapped to .json).
void write_sidecar(const std::string &path, const ExperimentConfig &config);
std::string sidecar_path(const std::string &csv_path);

// Worker count: COVSHAPE_THREADS wins when set (must parse as a positive
// integer), then `requested` when positive, then the hardware count.
int resolve_threads(int requested);

struct CheckResult
{
    std::string name;
    bool pass = false;
    double measured = 0.0;
    std::string detail;
};

// Self-diagnostic suite at small dimensions: representation equivalence,
// pilot orthogonality, separable-covariance degeneracy, a quick moment
// check, and fault injection against the PSD guards.
std::vector<CheckResult> validate_library(std::uint64_t seed = 1);

} // namespace covshape
