// Copyright 2026 The spinlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "spinlab/fitkit.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <vector>

// Rates are in 1/us (numerically Mrad/s, the unit of gamma = 230.0); times in
// ms at the API boundary.
namespace spinlab::pumping {

constexpr double kGammaOptical = 230.0;  // 1/us
constexpr double kDeltaRF1 = 22.74;      // 1/us
constexpr double kPsat = 29.0;           // nW

double pump_rate(double omega, double delta, double gamma);
double power_to_rabi(double p_nw, double p_sat_nw, double gamma);

struct ThreeLevelParams {
    double omega = 0.0;
    double delta = 0.0;
    double gamma = kGammaOptical;
    double cyclicity_e = 5988.0;

    double w() const { return pump_rate(omega, delta, gamma); }
    double gamma_down() const { return gamma * cyclicity_e / (1 + cyclicity_e); }
    double gamma_up() const { return gamma / (1 + cyclicity_e); }
    void validate() const;
};

struct ThreeLevelTrace {
    std::vector<double> t_ms;
    std::vector<double> rho_down, rho_a, rho_up;
    std::vector<double> fluorescence;  // gamma * rho_AA, photons/us
};

/// Closed-form solution of the two-variable quasi-stationary system with the
/// population starting in |down>. rho_up is integrated separately.
ThreeLevelTrace three_level_trace(const ThreeLevelParams &p, const std::vector<double> &t_ms);

struct SaturationParams {
    double i_sat = 0.0;
    double p_sat = kPsat;
    double n_bgr = 0.0;
    double c_offset = 0.0;
};

struct SaturationFit {
    SaturationParams params;
    SaturationParams sigmas;
    fitkit::FitResult raw;
};

/// Poisson-weighted fit of I(p). Throws RankDeficiency when p_sat is not
/// identifiable from the data.
SaturationFit fit_saturation(const std::vector<double> &power_nw, const std::vector<double> &rate);

struct CyclicityFit {
    double cyclicity_e;
    double sigma;
    double scale;
    fitkit::FitResult raw;
};

/// Fits Lambda_e (and a free fluorescence scale) with W fixed by `known`.
/// lambda_guess <= 0 derives the start from the log-linear decay rate.
CyclicityFit fit_cyclicity(const std::vector<double> &t_ms, const std::vector<double> &counts,
                           const ThreeLevelParams &known, double lambda_guess = 0.0);

/// 2x4 branching matrix; rows e0, e1, columns g0..g3.
Eigen::Matrix<double, 2, 4> branching_matrix(double lambda_e, double lambda_n);

double attenuated_rabi(double omega_ref, double attenuation_db);
double mw_pump_rate(double omega_ref, double attenuation_db, double delta_mw, double gamma_esp);
/// Electron spin linewidth from T2* (us): 1 / T2*.
double spin_linewidth(double t2star_us);

struct SixLevelParams {
    ThreeLevelParams three_level{power_to_rabi(7.0, kPsat, kGammaOptical), kDeltaRF1, kGammaOptical, 5988.0};
    double cyclicity_n = 10.0;
    double omega_mw_ref = 1.60;        // MHz
    double mw_attenuation_db = -35.0;  // dB
    double gamma_e_spin = 0.49;        // 1/us
    double delta_mw = 0.0;             // 1/us
    std::optional<double> w_mw;        // overrides the derived MW pump rate

    double mw_rate() const;
    void validate() const;
};

/// Rate matrix acting on (g0, g1, g2, g3, e0, e1).
Eigen::Matrix<double, 6, 6> six_level_matrix(const SixLevelParams &p);

struct SixLevelTrace {
    std::vector<double> t_ms;
    std::vector<std::array<double, 6>> populations;
    std::vector<double> fluorescence;  // gamma (e0 + e1)
};

SixLevelTrace six_level_trace(const SixLevelParams &p, int init_state, const std::vector<double> &t_ms);
SixLevelTrace six_level_trace(const SixLevelParams &p, const std::array<double, 6> &init,
                              const std::vector<double> &t_ms);

/// Normalized null vector of the rate matrix.
std::array<double, 6> six_level_steady_state(const SixLevelParams &p);

/// First time (ms) at which the dark state g2 holds `target` population.
double initialization_time(const SixLevelParams &p, const std::array<double, 6> &init, double target = 0.99);

// ---- initialization fidelity ----

struct InitFitInput {
    double amplitude_a = 0.0;
    double decay_gamma = 0.0;  // 1/ms
    double offset_c = 0.0;
    double dark_b = 0.0;
    double sigma_a = 0.0, sigma_gamma = 0.0, sigma_c = 0.0, sigma_b = 0.0;
    double rho_ac = 0.0;
    double rho_ab = 1.0;
    double rho_cb = 1.0;

    void validate() const;
    static InitFitInput table2();
};

struct InitFidelity {
    double f;
    double sigma_f;         // two-stage propagation through g and h
    double g, h, sigma_g, sigma_h;
    double sigma_f_direct;  // first-order propagation of F itself
};

InitFidelity init_fidelity(const InitFitInput &in);

struct InitFitResult {
    InitFitInput input;
    InitFidelity fidelity;
    double laser_only_level;
    fitkit::FitResult raw;
};

/// Fits A exp(-gamma t) + C to the signal trace with Poisson weights; the dark
/// level is the mean of the dark trace with its standard error.
InitFitResult fit_initialization(const std::vector<double> &t_ms, const std::vector<double> &signal,
                                 const std::vector<double> &laser_only, const std::vector<double> &dark);

}  // namespace spinlab::pumping
