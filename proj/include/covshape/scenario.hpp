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

#include <armadillo>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

namespace covshape
{

enum class ArrayKind
{
    Ula,
    Upa
};

// Antenna panel description. A ULA has n_elevation == 1 and its elements run
// along the azimuth axis; a UPA is an n_azimuth x n_elevation grid.
// spacing_ratio is the element spacing in carrier wavelengths.
struct ArrayGeometry
{
    ArrayKind kind = ArrayKind::Ula;
    int n_azimuth = 1;
    int n_elevation = 1;
    double spacing_ratio = 0.5;

    int size() const
    {
        return n_azimuth * n_elevation;
    }
    void validate() const;
};

// One propagation path between the BS and a UE. Angles are in radians:
// ue_angle is measured from the UE array axis, bs_azimuth from the BS array
// azimuth axis in the horizontal plane, bs_elevation from the horizontal.
struct PropagationPath
{
    double distance = 1.0; // total travelled distance in meters
    double ue_angle = 0.0;
    double bs_azimuth = 0.0;
    double bs_elevation = 0.0;
    bool is_los = false;
};

// Uplink / downlink power levels in watts.
struct Powers
{
    double rho_bs = 1.0;
    double rho_ue = 1.0;
};

// Noise powers in watts at the two receiver sides.
struct Noise
{
    double sigma2_bs = 1.0;
    double sigma2_ue = 1.0;
};

// Fully resolved simulation scenario: arrays, per-UE path lists, and the
// large-scale constants shared by every module downstream.
struct Scenario
{
    ArrayGeometry bs_array;
    std::vector<ArrayGeometry> ue_arrays;
    std::vector<std::vector<PropagationPath>> paths; // one list per UE
    double ricean_kappa = 0.0;                       // LoS-to-scattered power ratio
    double pathloss_exponent = 2.0;
    double ref_loss_db = 0.0; // attenuation already incurred at 1 m
    Powers powers;
    Noise noise;

    int n_ues() const
    {
        return (int)ue_arrays.size();
    }
    int n_bs_antennas() const
    {
        return bs_array.size();
    }

    // Transmit SNRs: uplink pilots are received at the BS, payload at the UEs.
    double snr_ue() const
    {
        return powers.rho_ue / noise.sigma2_bs;
    }
    double snr_bs() const
    {
        return powers.rho_bs / noise.sigma2_ue;
    }

    // Large-scale power gain of a path: the 1 m reference loss followed by
    // distance^(-pathloss_exponent) decay.
    double path_gain(double distance) const
    {
        return std::pow(10.0, -ref_loss_db / 10.0) * std::pow(distance, -pathloss_exponent);
    }

    void validate() const; // throws std::invalid_argument on violations
};

// One draw of all channels, indexed by UE; entry k is N_k x M.
using ChannelRealization = std::vector<arma::cx_mat>;

// 3-D point in meters. Scenario files may give 2-D points; z then defaults
// to 0 and elevation angles vanish.
struct Point3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct UePlacement
{
    Point3 position;
    int n_antennas = 2;
    double spacing_ratio = 0.5;
    // Reflection points seen only by this UE, in addition to the shared
    // scatterer list. Nearby UEs bounce off the same obstacles at slightly
    // different spots, so their BS-side angles need not coincide exactly.
    std::vector<Point3> scatterers;
};

// Geometric description of a deployment, prior to angle/distance resolution.
// Powers and noise are carried in dBm here (the usual way link budgets are
// written down) and converted to watts when the Scenario is built.
struct ScenarioLayout
{
    ArrayKind bs_kind = ArrayKind::Ula;
    int bs_mx = 64;
    int bs_my = 1;
    double bs_spacing = 0.5;
    Point3 bs_position;
    std::vector<UePlacement> ues;
    std::vector<Point3> scatterers;
    double kappa = 0.0;
    double beta = 2.0;
    double ref_loss_db = 0.0;
    double rho_bs_dbm = 30.0;
    double rho_ue_dbm = 25.0;
    double sigma2_bs_dbm = -80.0;
    double sigma2_ue_dbm = -80.0;
};

double dbm_to_watt(double dbm);

// Resolve a layout into per-path distances and angles. Each UE gets one
// single-bounce path per scatterer, plus one direct path when kappa > 0.
Scenario build_scenario(const ScenarioLayout &layout);

ScenarioLayout parse_layout(const std::string &json_text);
ScenarioLayout load_layout(const std::string &path);
Scenario load_scenario(const std::string &path);

// Steering vector of an n-element ULA with the given spacing ratio, for a
// planewave arriving at `angle` radians from the array axis. Element i has
// phase -2*pi*spacing*i*cos(angle).
arma::cx_vec ula_response(int n, double spacing_ratio, double angle);

// Steering vector of a UPA: Kronecker product of the azimuth factor (phase
// driven by cos(azimuth)) and the elevation factor (phase driven by
// sin(elevation)), in that order.
arma::cx_vec upa_response(const ArrayGeometry &geom, double azimuth, double elevation);

// Dispatch on the array kind; for a ULA the elevation argument is ignored.
arma::cx_vec bs_response(const ArrayGeometry &geom, double azimuth, double elevation);

// Deterministic channel assembly from explicit per-path gains: the direct
// path carries sqrt(kappa/(1+kappa)) * d^(-beta/2) * los_gain and scattered
// path u carries sqrt(1/(1+kappa)) * d_u^(-beta/2) * gains[u]. Returns the
// N_k x M matrix whose rows are per-UE-antenna channels to the BS array.
arma::cx_mat channel_from_gains(const Scenario &scenario, int ue, std::complex<double> los_gain,
                                const std::vector<std::complex<double>> &gains);

// Random channel draw: scattered gains are i.i.d. complex standard normal,
// the direct path gets a uniform random phase so the channel stays zero-mean.
arma::cx_mat sample_channel(const Scenario &scenario, int ue, std::mt19937_64 &rng);

} // namespace covshape
