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
#include <complex>
#include <map>
#include <string>
#include <vector>

namespace spinlab::levels {

using Vec3 = Eigen::Vector3d;
using Mat4c = Eigen::Matrix<std::complex<double>, 4, 4>;
using Mat8c = Eigen::Matrix<std::complex<double>, 8, 8>;

constexpr double kGammaSpin = 28.02495;  // MHz/mT, g = 2
constexpr double kGammaOrb = 13.99625;   // MHz/mT, Bohr magneton
constexpr double kGammaC13 = 10.7;       // kHz/mT

/// How the two orbital-quenching factors attach to the Kramers branches.
/// per_branch: f12 on the lower zero-strain branch (orbital and spin moments
/// aligned), f32 on the upper one.
enum class Quenching { per_branch, per_branch_swapped, mean };
Quenching quenching_from_string(const std::string &s);
const char *to_string(Quenching q);

enum class Manifold { ground, excited };

struct FineStructureParams {
    double lambda_gs = 822.0;  // GHz
    double upsilon_gs = 41.3;  // GHz
    double lambda_es = 3000.0;
    double upsilon_es = 65.5;
    double f12_gs = 0.251;
    double f32_gs = 0.268;
    double f12_es = 0.5;
    double f32_es = 0.486;
    double gamma_spin = kGammaSpin;  // MHz/mT
    double gamma_orb = kGammaOrb;    // MHz/mT
    Quenching quenching = Quenching::per_branch;
    double zpl_ghz = 484000.0;  // offset of the excited manifold

    void validate() const;
};

/// Field in the defect frame; z is the symmetry axis.
struct FieldVector {
    double b_parallel = 0.0;  // mT
    double b_perp = 0.0;      // mT
    double azimuth = 0.0;     // rad

    Vec3 cartesian() const;
    double magnitude() const;
    static FieldVector from_cartesian(const Vec3 &b);
    static FieldVector axial(double b) { return {b, 0.0, 0.0}; }
};

struct HyperfineParams {
    double a_par = 0.0;   // MHz, principal value along the nucleus direction
    double a_perp = 0.0;  // MHz
    double polar_angle = 0.0;  // rad, nucleus direction from the symmetry axis
    double azimuth = 0.0;      // rad
    double gamma_c13 = kGammaC13;  // kHz/mT

    /// Isotropic part (a_par + 2 a_perp) / 3.
    double a_contact() const { return (a_par + 2 * a_perp) / 3; }
    /// a_contact + dipolar, as a Cartesian tensor in MHz.
    Eigen::Matrix3d tensor() const;
    void validate() const;
};

struct LevelDiagram {
    std::vector<double> gs_energies;  // GHz ascending
    std::vector<double> es_energies;  // GHz ascending, includes zpl_ghz
    /// Optical and MW transitions in GHz, RF transitions and MW_splitting in MHz.
    std::map<std::string, double> transitions;
};

/// Hamiltonian in MHz, basis orbital(e+, e-) x spin(up, down).
Mat4c electron_hamiltonian(const FineStructureParams &p, Manifold m, const Vec3 &b_mT);

/// Spin and quenched orbital magnetic moment operators (MHz/mT), for drive
/// couplings: returns M_k with H_Zeeman = sum_k B_k M_k.
std::array<Mat4c, 3> zeeman_operators(const FineStructureParams &p, Manifold m);

/// Electron levels; transitions: A1, B2 (GHz), A1_B2 (GHz), qubit (GHz),
/// es_qubit (GHz).
LevelDiagram electron_levels(const FineStructureParams &p, const FieldVector &b);

/// 8x8 ground-manifold electron-13C Hamiltonian in MHz.
Mat8c hyperfine_hamiltonian(const FineStructureParams &p, const HyperfineParams &h, const Vec3 &b_mT);

/// Eight ground levels; transitions: MW1 = g3 - g0, MW2 = g2 - g1 (GHz),
/// RF1 = g1 - g0, RF2 = g3 - g2, MW_splitting = MW1 - MW2 (MHz).
LevelDiagram hyperfine_levels(const FineStructureParams &p, const HyperfineParams &h, const FieldVector &b);

/// d(qubit splitting)/d|B| along direction (defect frame, unit vector) at
/// operating_field, by central difference with 0.1 mT step plus one
/// Richardson extrapolation. At zero operating field the ray slope S(hd)/h is
/// used instead. MHz/mT.
double gyromagnetic_ratio(const FineStructureParams &p, const Vec3 &direction,
                          const FieldVector &operating_field = FieldVector::axial(106.0), double step_mT = 0.1);

/// Nuclear Rabi enhancement within the g2/g3 pair.
double rabi_enhancement(const FineStructureParams &p, const HyperfineParams &h, const FieldVector &b_dc,
                        const Vec3 &ac_direction);

/// Unit vector at the given angle (deg) from the symmetry axis, azimuth 0.
Vec3 direction_at(double angle_deg);

// ---- fits ----

struct Observation {
    FieldVector field;
    std::string transition;  // A1, B2, A1_B2, qubit, es_qubit  (GHz)
    double value;
    double sigma = 1e-3;
};

struct StrainFit {
    FineStructureParams params;
    double sigma_upsilon_gs = 0.0;
    double sigma_upsilon_es = 0.0;
    std::vector<double> residuals;
    fitkit::FitResult raw;
};

/// Fits upsilon_gs and upsilon_es; everything else in p0 is held.
StrainFit fit_strain(const std::vector<Observation> &observed, const FineStructureParams &p0);

double observable(const FineStructureParams &p, const Observation &o);

struct HyperfineTarget {
    FieldVector field;
    std::string transition;  // RF1, RF2, MW_splitting (MHz) or MW1, MW2 (GHz)
    double value;
    double sigma = 1e-3;
};

struct HyperfineFit {
    HyperfineParams params;
    double sigma_a_par = 0.0;
    double sigma_a_perp = 0.0;
    double sigma_polar_angle = 0.0;
    std::vector<double> residuals;  // value - model, per target
    fitkit::FitResult raw;
};

/// Fits (a_par, a_perp) and, if free_polar_angle, the polar angle.
HyperfineFit fit_hyperfine(const FineStructureParams &p, const std::vector<HyperfineTarget> &targets,
                           const HyperfineParams &h0, bool free_polar_angle = false);

double hyperfine_observable(const FineStructureParams &p, const HyperfineParams &h, const HyperfineTarget &t);

/// Repository calibration: fit of the RF and ODMR targets with the default
/// Table values. Kept in sync with configs/calibration.json.
HyperfineParams calibrated_hyperfine();
std::vector<HyperfineTarget> calibration_targets();

}  // namespace spinlab::levels
