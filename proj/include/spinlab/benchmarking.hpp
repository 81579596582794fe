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

#include "spinlab/parallel.hpp"
#include "spinlab/pulse.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace spinlab::benchmarking {

using Mat2c = Eigen::Matrix2cd;

/// Primitive gate set in its fixed order.
enum class Gate : std::uint8_t { I, Xp, Xm, Yp, Ym, X2p, X2m, Y2p, Y2m };
constexpr std::array<Gate, 9> kGates = {Gate::I,   Gate::Xp,  Gate::Xm,  Gate::Yp, Gate::Ym,
                                        Gate::X2p, Gate::X2m, Gate::Y2p, Gate::Y2m};
/// Primitive gates per Clifford, fixed by the reported fidelity pair.
constexpr double kPrimitivesPerClifford = 1.875;

const char *gate_name(Gate g);
Gate gate_from_name(const std::string &s);

struct AxisAngle {
    char axis;     // 'x', 'y' or '0'
    double angle;  // rad
};
AxisAngle axis_angle(Gate g);

/// exp(-i angle/2 n.sigma).
Mat2c rotation(char axis, double angle);
Mat2c gate_unitary(Gate g);

/// Product of the gate rotations in sequence order (first gate rightmost).
Mat2c compose(const std::vector<Gate> &seq);

std::vector<Gate> random_sequence(std::size_t n, Rng &rng);
std::vector<Gate> random_sequence(std::size_t n, std::uint64_t seed);

/// First gate in kGates order that maps the ideal final state to |0>.
/// Throws ConsistencyError if the state is not a cardinal state.
Gate inverse_gate(const std::vector<Gate> &seq);

/// Final gate of the pi-shifted variant: rotation by the inverse gate's angle
/// plus pi about the same axis (x for the identity), so the ideal outcome is
/// the opposite pole.
Mat2c complementary_unitary(Gate inverse);

enum class ErrorKind { none, depolarizing, ou_dephasing };
ErrorKind error_kind_from_string(const std::string &s);
const char *to_string(ErrorKind k);

struct ErrorModel {
    ErrorKind kind = ErrorKind::none;
    double depolarizing_p = 0.0;
    pulse::OUProcess ou{};
    double t_pi_s = 69.25e-6;  // X^2 and I duration
    double t_pi2_s = 34.625e-6;
};

struct RBConfig {
    std::vector<int> sequence_lengths;
    int realizations = 20;
    int shots = 500;
    ErrorModel error;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RBResult {
    std::vector<int> lengths;
    std::vector<double> mean_visibility;
    std::vector<double> stderr_;
    double a = 0, sigma_a = 0;
    double p = 0, sigma_p = 0;
    double f_primitive = 0, sigma_f_primitive = 0;
    double f_clifford = 0, sigma_f_clifford = 0;
};

double f_primitive_from_p(double p);
double f_clifford_from_primitive(double f_primitive);

/// Probability of measuring |0> after the sequence plus final unitary, for
/// one noise realization (per shot for OU noise).
double survival(const std::vector<Gate> &seq, const Mat2c &final_gate, const ErrorModel &err, Rng &rng);

/// Visibility p0(inverse) - p0(complementary) of one realization with
/// binomial readout over `shots`.
double realization_visibility(const std::vector<Gate> &seq, const ErrorModel &err, int shots, Rng &rng);

RBResult run_rb(const RBConfig &cfg);

struct RBFit {
    double a, sigma_a, p, sigma_p;
    fitkit::FitResult raw;
};
/// Fits A P^N; sigmas used as weights when all are positive.
RBFit fit_rb_decay(const std::vector<double> &n, const std::vector<double> &v, const std::vector<double> &sigma = {});

}  // namespace spinlab::benchmarking
