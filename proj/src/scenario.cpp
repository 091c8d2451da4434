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

#include "covshape/scenario.hpp"
#include "covshape/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace covshape
{

static constexpr double pi = 3.14159265358979323846;

void ArrayGeometry::validate() const
{
    if (n_azimuth < 1 || n_elevation < 1)
        throw std::invalid_argument("ArrayGeometry: antenna counts must be positive");
    if (kind == ArrayKind::Ula && n_elevation != 1)
        throw std::invalid_argument("ArrayGeometry: a ULA must have n_elevation == 1");
    if (!(spacing_ratio > 0.0) || !std::isfinite(spacing_ratio))
        throw std::invalid_argument("ArrayGeometry: spacing_ratio must be positive and finite");
}

void Scenario::validate() const
{
    bs_array.validate();
    if (ue_arrays.empty())
        throw std::invalid_argument("Scenario: at least one UE is required");
    if (paths.size() != ue_arrays.size())
        throw std::invalid_argument("Scenario: one path list per UE is required");
    if (!(ricean_kappa >= 0.0) || !std::isfinite(ricean_kappa))
        throw std::invalid_argument("Scenario: ricean_kappa must be finite and >= 0");
    if (!std::isfinite(pathloss_exponent) || pathloss_exponent < 0.0)
        throw std::invalid_argument("Scenario: pathloss_exponent must be finite and >= 0");
    if (!std::isfinite(ref_loss_db))
        throw std::invalid_argument("Scenario: ref_loss_db must be finite");
    for (double p : {powers.rho_bs, powers.rho_ue, noise.sigma2_bs, noise.sigma2_ue})
        if (!(p > 0.0) || !std::isfinite(p))
            throw std::invalid_argument("Scenario: powers and noise variances must be positive and finite");

    for (size_t k = 0; k < ue_arrays.size(); ++k)
    {
        ue_arrays[k].validate();
        if (ue_arrays[k].kind != ArrayKind::Ula)
            throw std::invalid_argument("Scenario: UE arrays must be ULAs");
        int n_los = 0, n_scatter = 0;
        for (const auto &p : paths[k])
        {
            if (!(p.distance > 0.0) || !std::isfinite(p.distance))
                throw std::invalid_argument("Scenario: path distances must be positive and finite");
            if (p.is_los)
                ++n_los;
            else
                ++n_scatter;
        }
        if (ricean_kappa > 0.0 && n_los != 1)
            throw std::invalid_argument("Scenario: kappa > 0 requires exactly one direct path per UE");
        if (ricean_kappa == 0.0 && n_los != 0)
            throw std::invalid_argument("Scenario: kappa == 0 admits no direct path");
        if (ricean_kappa == 0.0 && n_scatter == 0)
            throw std::invalid_argument("Scenario: a UE with kappa == 0 and no scattered paths has a zero channel");
    }
}

double dbm_to_watt(double dbm)
{
    return std::pow(10.0, (dbm - 30.0) / 10.0);
}

// ---- geometry helpers ----------------------------------------------------

static double seg_length(const Point3 &a, const Point3 &b)
{
    const double dx = b.x - a.x, dy = b.y - a.y, dz = b.z - a.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Angle between the segment from->to and the x axis (the UE array axis).
static double ue_impinge_angle(const Point3 &from, const Point3 &to)
{
    const double len = seg_length(from, to);
    if (len <= 0.0)
        throw std::invalid_argument("build_scenario: coincident points give an undefined angle");
    double c = (to.x - from.x) / len;
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

// Azimuth (from the x axis, in the horizontal plane) and elevation (from the
// horizontal) of the segment from->to as seen at `from`.
static void bs_angles(const Point3 &from, const Point3 &to, double &azimuth, double &elevation)
{
    const double dx = to.x - from.x, dy = to.y - from.y, dz = to.z - from.z;
    const double horiz = std::sqrt(dx * dx + dy * dy);
    if (horiz <= 0.0 && dz == 0.0)
        throw std::invalid_argument("build_scenario: coincident points give an undefined angle");
    azimuth = (horiz > 0.0) ? std::atan2(dy, dx) : 0.0;
    elevation = std::atan2(dz, horiz);
}

Scenario build_scenario(const ScenarioLayout &layout)
{
    Scenario s;
    s.bs_array.kind = layout.bs_kind;
    s.bs_array.n_azimuth = layout.bs_mx;
    s.bs_array.n_elevation = layout.bs_my;
    s.bs_array.spacing_ratio = layout.bs_spacing;
    s.ricean_kappa = layout.kappa;
    s.pathloss_exponent = layout.beta;
    s.ref_loss_db = layout.ref_loss_db;
    s.powers.rho_bs = dbm_to_watt(layout.rho_bs_dbm);
    s.powers.rho_ue = dbm_to_watt(layout.rho_ue_dbm);
    s.noise.sigma2_bs = dbm_to_watt(layout.sigma2_bs_dbm);
    s.noise.sigma2_ue = dbm_to_watt(layout.sigma2_ue_dbm);

    for (const auto &ue : layout.ues)
    {
        ArrayGeometry g;
        g.kind = ArrayKind::Ula;
        g.n_azimuth = ue.n_antennas;
        g.n_elevation = 1;
        g.spacing_ratio = ue.spacing_ratio;
        s.ue_arrays.push_back(g);

        std::vector<PropagationPath> list;
        auto add_bounce = [&](const Point3 &sc) {
            PropagationPath p;
            p.distance = seg_length(layout.bs_position, sc) + seg_length(sc, ue.position);
            p.ue_angle = ue_impinge_angle(ue.position, sc);
            bs_angles(layout.bs_position, sc, p.bs_azimuth, p.bs_elevation);
            p.is_los = false;
            list.push_back(p);
        };
        for (const auto &sc : layout.scatterers)
            add_bounce(sc);
        for (const auto &sc : ue.scatterers)
            add_bounce(sc);
        if (layout.kappa > 0.0)
        {
            PropagationPath p;
            p.distance = seg_length(layout.bs_position, ue.position);
            p.ue_angle = ue_impinge_angle(ue.position, layout.bs_position);
            bs_angles(layout.bs_position, ue.position, p.bs_azimuth, p.bs_elevation);
            p.is_los = true;
            list.push_back(p);
        }
        s.paths.push_back(std::move(list));
    }
    s.validate();
    return s;
}

// ---- JSON layout parsing ---------------------------------------------------

static Point3 parse_point(const nlohmann::json &j, const char *what)
{
    if (!j.is_array() || j.size() < 2 || j.size() > 3)
        throw std::invalid_argument(std::string("scenario file: ") + what + " must be [x,y] or [x,y,z]");
    Point3 p;
    p.x = j.at(0).get<double>();
    p.y = j.at(1).get<double>();
    p.z = (j.size() == 3) ? j.at(2).get<double>() : 0.0;
    return p;
}

ScenarioLayout parse_layout(const std::string &json_text)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(json_text);
    }
    catch (const nlohmann::json::exception &e)
    {
        throw std::invalid_argument(std::string("scenario file: invalid JSON: ") + e.what());
    }

    ScenarioLayout L;
    try
    {
        const auto &bs = j.at("bs");
        const std::string kind = bs.at("kind").get<std::string>();
        if (kind == "ula")
            L.bs_kind = ArrayKind::Ula;
        else if (kind == "upa")
            L.bs_kind = ArrayKind::Upa;
        else
            throw std::invalid_argument("scenario file: bs.kind must be \"ula\" or \"upa\"");
        L.bs_mx = bs.at("mx").get<int>();
        L.bs_my = bs.value("my", 1);
        L.bs_spacing = bs.value("spacing", 0.5);
        if (bs.contains("position"))
            L.bs_position = parse_point(bs.at("position"), "bs.position");

        for (const auto &u : j.at("ues"))
        {
            UePlacement ue;
            ue.position = parse_point(u.at("position"), "ue position");
            ue.n_antennas = u.value("n_antennas", 2);
            ue.spacing_ratio = u.value("spacing", 0.5);
            for (const auto &sc : u.value("scatterers", nlohmann::json::array()))
                ue.scatterers.push_back(parse_point(sc, "ue scatterer"));
            L.ues.push_back(ue);
        }
        for (const auto &sc : j.value("scatterers", nlohmann::json::array()))
            L.scatterers.push_back(parse_point(sc, "scatterer"));

        L.kappa = j.value("kappa", 0.0);
        L.beta = j.value("beta", 2.0);
        L.ref_loss_db = j.value("ref_loss_db", 0.0);
        if (j.contains("powers"))
        {
            L.rho_bs_dbm = j["powers"].value("rho_bs_dbm", L.rho_bs_dbm);
            L.rho_ue_dbm = j["powers"].value("rho_ue_dbm", L.rho_ue_dbm);
        }
        if (j.contains("noise"))
        {
            L.sigma2_bs_dbm = j["noise"].value("sigma2_bs_dbm", L.sigma2_bs_dbm);
            L.sigma2_ue_dbm = j["noise"].value("sigma2_ue_dbm", L.sigma2_ue_dbm);
        }
    }
    catch (const nlohmann::json::exception &e)
    {
        throw std::invalid_argument(std::string("scenario file: ") + e.what());
    }
    return L;
}

ScenarioLayout load_layout(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open scenario file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_layout(ss.str());
}

Scenario load_scenario(const std::string &path)
{
    return build_scenario(load_layout(path));
}

// ---- array responses -------------------------------------------------------

arma::cx_vec ula_response(int n, double spacing_ratio, double angle)
{
    if (n < 1)
        throw std::invalid_argument("ula_response: element count must be positive");
    arma::cx_vec a(n);
    const double step = -2.0 * pi * spacing_ratio * std::cos(angle);
    for (int i = 0; i < n; ++i)
        a[i] = std::polar(1.0, step * (double)i);
    return a;
}

arma::cx_vec upa_response(const ArrayGeometry &geom, double azimuth, double elevation)
{
    geom.validate();
    arma::cx_vec az(geom.n_azimuth), el(geom.n_elevation);
    const double step_az = -2.0 * pi * geom.spacing_ratio * std::cos(azimuth);
    const double step_el = -2.0 * pi * geom.spacing_ratio * std::sin(elevation);
    for (int i = 0; i < geom.n_azimuth; ++i)
        az[i] = std::polar(1.0, step_az * (double)i);
    for (int i = 0; i < geom.n_elevation; ++i)
        el[i] = std::polar(1.0, step_el * (double)i);
    return arma::kron(az, el);
}

arma::cx_vec bs_response(const ArrayGeometry &geom, double azimuth, double elevation)
{
    if (geom.kind == ArrayKind::Ula)
        return ula_response(geom.n_azimuth, geom.spacing_ratio, azimuth);
    return upa_response(geom, azimuth, elevation);
}

// ---- channel synthesis -------------------------------------------------------

arma::cx_mat channel_from_gains(const Scenario &scenario, int ue, std::complex<double> los_gain,
                                const std::vector<std::complex<double>> &gains)
{
    if (ue < 0 || ue >= scenario.n_ues())
        throw std::invalid_argument("channel_from_gains: UE index out of range");
    const auto &list = scenario.paths[ue];
    const auto &ue_geom = scenario.ue_arrays[ue];
    const double kappa = scenario.ricean_kappa;

    size_t n_scatter = 0;
    for (const auto &p : list)
        if (!p.is_los)
            ++n_scatter;
    if (gains.size() != n_scatter)
        throw std::invalid_argument("channel_from_gains: one gain per scattered path is required");

    arma::cx_mat h(ue_geom.size(), scenario.n_bs_antennas(), arma::fill::zeros);
    const double los_scale = (kappa > 0.0) ? std::sqrt(kappa / (1.0 + kappa)) : 0.0;
    const double nlos_scale = std::sqrt(1.0 / (1.0 + kappa));

    size_t g = 0;
    for (const auto &p : list)
    {
        const arma::cx_vec a = ula_response(ue_geom.n_azimuth, ue_geom.spacing_ratio, p.ue_angle);
        const arma::cx_vec b = bs_response(scenario.bs_array, p.bs_azimuth, p.bs_elevation);
        const double amp = std::sqrt(scenario.path_gain(p.distance));
        const std::complex<double> coef =
            p.is_los ? (los_scale * amp * los_gain) : (nlos_scale * amp * gains[g++]);
        h += coef * a * b.t(); // a * b^H, rank-one path contribution
    }
    return h;
}

arma::cx_mat sample_channel(const Scenario &scenario, int ue, std::mt19937_64 &rng)
{
    if (ue < 0 || ue >= scenario.n_ues())
        throw std::invalid_argument("sample_channel: UE index out of range");
    // Draw order is fixed: direct-path phase first (when present), then one
    // gain per scattered path in path order.
    std::complex<double> los_gain = 1.0;
    if (scenario.ricean_kappa > 0.0)
    {
        std::uniform_real_distribution<double> u(0.0, 2.0 * pi);
        los_gain = std::polar(1.0, u(rng));
    }
    size_t n_scatter = 0;
    for (const auto &p : scenario.paths[ue])
        if (!p.is_los)
            ++n_scatter;
    std::vector<std::complex<double>> gains(n_scatter);
    for (auto &g : gains)
        g = randcn(rng);
    return channel_from_gains(scenario, ue, los_gain, gains);
}

} // namespace covshape
