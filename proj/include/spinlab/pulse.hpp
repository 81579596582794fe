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
#include "spinlab/parallel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace spinlab::pulse {

using Mat2c = Eigen::Matrix2cd;

/// Square pulse in the rotating frame: H = pi [detuning sz + rabi (cos(phase) sx + sin(phase) sy)].
struct Pulse {
    double rabi_hz = 0.0;
    double phase = 0.0;  // rad
    double duration_s = 0.0;
    double detuning_hz = 0.0;
};

struct Delay {
    double duration_s = 0.0;
};

using Element = std::variant<Pulse, Delay>;

struct PulseSequence {
    std::vector<Element> elements;

    void validate() const;
    /// Reversed order with every Hamiltonian negated (phase + pi, -detuning).
    PulseSequence inverse() const;
};

struct Propagation {
    Mat2c unitary;
    Eigen::Vector3d bloch;  // from |0>, <sigma> components
    double excited_population;
};

/// frequency_offset_hz adds to every element's detuning (delays included).
Propagation propagate(const PulseSequence &seq, double frequency_offset_hz = 0.0);

/// exp(-i pi t (d sz + r (cos p sx + sin p sy))).
Mat2c element_unitary(double rabi_hz, double phase, double detuning_hz, double duration_s);

double visibility(double s0, double s180);

/// populations[i][j] for detunings[i], durations[j].
std::vector<std::vector<double>> rabi_chevron(double omega_hz, const std::vector<double> &detunings_hz,
                                              const std::vector<double> &durations_s);

// ---- Ornstein-Uhlenbeck dephasing ----

struct OUProcess {
    double coupling_b = 943.0;  // rad/s
    double tau_c = 345.0;       // s
    std::uint64_t seed = 0;

    void validate() const;
};

/// x_0 from the stationary law, then x_{k+1} = x_k a + b sqrt(1 - a^2) n_k.
/// Returns n_steps + 1 samples.
std::vector<double> ou_path(const OUProcess &p, double dt, std::size_t n_steps, std::uint64_t stream = 0);

/// Exact joint draw of the end value and time integral of an OU path over a
/// segment of length h, given its start value.
class OUSegmentSampler {
  public:
    OUSegmentSampler(double b, double tau_c);
    struct Draw {
        double x_end;
        double integral;
    };
    Draw sample(double x0, double h, Rng &rng);
    /// Moments for tests: Var x1, Var I, Cov(x1, I) for unit start value 0.
    struct Moments {
        double mean_x_factor, mean_i_factor, var_x, var_i, cov, cond_var_i;
    };
    Moments moments(double h) const;

  private:
    double b_, tau_;
    double cached_h_ = -1;
    Moments cached_{};
};

struct CoherenceTrace {
    std::vector<double> tau_s;
    std::vector<double> visibility;
    std::vector<double> stderr_;
};

/// Ramsey with instantaneous pi/2 pulses: mean of cos(2 pi detuning tau + phi).
CoherenceTrace ramsey_mc(double detuning_hz, const std::vector<double> &tau_s, const OUProcess &noise,
                         std::size_t shots);
/// exp(-b^2 tau^2 / 2) cos(2 pi detuning tau).
double ramsey_analytic(double detuning_hz, double tau_s, double coupling_b);
double t2star_from_coupling(double coupling_b);

/// CPMG with n_pulses ideal pi pulses at T(2k-1)/(2N); tau_s is the total
/// free evolution time T.
CoherenceTrace dynamical_decoupling_mc(int n_pulses, const std::vector<double> &tau_s, const OUProcess &noise,
                                       std::size_t shots);
/// Slow-bath envelope exp(-chi), chi = b^2 T^3 / (12 N^2 tau_c).
double dd_analytic(int n_pulses, double total_time_s, double coupling_b, double tau_c);
/// chi = 1 crossing of dd_analytic.
double t2_analytic(int n_pulses, double coupling_b, double tau_c);

/// Bath parameters from T2* and the Hahn-echo T2: b = sqrt(2)/T2*,
/// tau_c = b^2 T2^3 / 12.
struct BathEstimate {
    double coupling_b;
    double tau_c;
};
BathEstimate bath_from_coherence(double t2star_s, double t2_echo_s);

enum class CoherenceModel { gaussian_ramsey, stretched_exp, sine_gaussian };
CoherenceModel coherence_model_from_string(const std::string &s);

struct CoherenceResult {
    double t2 = 0.0, sigma_t2 = 0.0;
    double stretch_xi = 0.0, sigma_xi = 0.0;
    double amplitude = 0.0, sigma_amplitude = 0.0;
    double frequency = 0.0;  // sine_gaussian only
    std::vector<double> visibility;
    fitkit::FitResult raw;
};

/// Uses stderr as sigma when every entry is positive, unit weights otherwise.
CoherenceResult fit_coherence(const CoherenceTrace &trace, CoherenceModel model);

struct ScalingFit {
    double beta, sigma_beta, prefactor;
};
/// Least-squares line through (ln N, ln T2).
ScalingFit fit_scaling(const std::vector<std::pair<double, double>> &points);

// ---- two-tone calibration ----

struct TwoToneConfig {
    double omega_mw = 0.0;         // Hz
    double omega_rf_mod = 0.0;     // Hz
    double f_mod = 10e3;           // Hz
    double lorentzian_fwhm = 1e6;  // Hz
    double conversion = 20.27;     // MHz/mT
};

/// Unit-area arcsine-Lorentzian spectrum.
std::vector<double> two_tone_lineshape(const TwoToneConfig &cfg, const std::vector<double> &detuning_hz);

struct PowerSpectrum {
    double power_dbm;
    std::vector<double> detuning_hz;
    std::vector<double> signal;
};

struct BacCalibration {
    double b_ac_ref_mT;          // at the reference power, amplitude law with slope 1/20
    double b_ac_perp_mT;         // component at 35.3 deg: b_ac cos(35.3 deg)
    double amplitude_hz;         // A in Omega_RF = A 10^(P/20)
    double slope_per_db;         // free log10 slope
    double sigma_slope;
    std::vector<double> omega_rf_hz;  // per spectrum
    std::vector<double> sigma_omega_rf_hz;
};

/// Fits every spectrum with the arcsine-Lorentzian model, then the amplitude
/// law. Throws ConsistencyError when the free slope deviates more than 20%
/// from 1/20 per dB.
BacCalibration calibrate_bac(const std::vector<PowerSpectrum> &spectra, double reference_dbm = 10.0,
                             double conversion_mhz_per_mt = 20.27, double angle_deg = 54.7);

/// gamma_c13 / 2 * xi * b_ac, kHz.
double nuclear_rabi(double b_ac_mT, double xi, double gamma_c13_khz_per_mT = 10.7);

}  // namespace spinlab::pulse
