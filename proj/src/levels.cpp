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

#include "spinlab/levels.hpp"

#include "spinlab/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

namespace spinlab::levels {

namespace {

using cd = std::complex<double>;
constexpr cd I{0.0, 1.0};

Eigen::Matrix2cd pauli(int k) {
    Eigen::Matrix2cd s;
    switch (k) {
        case 0: s << 0, 1, 1, 0; break;
        case 1: s << 0, -I, I, 0; break;
        default: s << 1, 0, 0, -1; break;
    }
    return s;
}

template <int A, int B>
Eigen::Matrix<cd, A * B, A * B> kron(const Eigen::Matrix<cd, A, A> &a, const Eigen::Matrix<cd, B, B> &b) {
    Eigen::Matrix<cd, A * B, A * B> out;
    for (int i = 0; i < A; ++i)
        for (int j = 0; j < A; ++j) out.template block<B, B>(i * B, j * B) = a(i, j) * b;
    return out;
}

// Spin operators on the orbital x spin space.
std::array<Mat4c, 3> spin_ops() {
    std::array<Mat4c, 3> s;
    for (int k = 0; k < 3; ++k) s[k] = kron<2, 2>(Eigen::Matrix2cd::Identity(), pauli(k) / 2.0);
    return s;
}

void check_finite(double v, const char *what) {
    if (!std::isfinite(v)) throw InvalidInput(std::string("non-finite parameter ") + what);
}

// Quenched orbital Zeeman operator f * gamma_orb * Lz (MHz/mT), diagonal.
Mat4c orbital_moment(const FineStructureParams &p, Manifold m) {
    double f12 = m == Manifold::ground ? p.f12_gs : p.f12_es;
    double f32 = m == Manifold::ground ? p.f32_gs : p.f32_es;
    // Diagonal of Lz and Lz*Sz in the product basis.
    const double lz[4] = {1, 1, -1, -1};
    const double lzsz[4] = {0.5, -0.5, -0.5, 0.5};
    Mat4c out = Mat4c::Zero();
    for (int i = 0; i < 4; ++i) {
        double f = 0;
        switch (p.quenching) {
            case Quenching::per_branch: f = lzsz[i] > 0 ? f12 : f32; break;
            case Quenching::per_branch_swapped: f = lzsz[i] > 0 ? f32 : f12; break;
            case Quenching::mean: f = 0.5 * (f12 + f32); break;
        }
        out(i, i) = f * p.gamma_orb * lz[i];
    }
    return out;
}

// Eigen-decomposition sorted by energy; inside near-degenerate clusters the
// basis is rotated to diagonalize `tie`, ordered by ascending expectation.
template <int N>
void sorted_eigensystem(const Eigen::Matrix<cd, N, N> &H, const Eigen::Matrix<cd, N, N> &tie,
                        Eigen::Matrix<double, N, 1> &e, Eigen::Matrix<cd, N, N> &v) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cd, N, N>> es(H);
    e = es.eigenvalues();
    v = es.eigenvectors();
    const double scale = std::max(1.0, e.cwiseAbs().maxCoeff());
    int i = 0;
    while (i < N) {
        int j = i + 1;
        while (j < N && e[j] - e[j - 1] < 1e-9 * scale) ++j;
        if (j - i > 1) {
            const int k = j - i;
            Eigen::MatrixXcd V = v.middleCols(i, k);
            Eigen::MatrixXcd T = V.adjoint() * tie * V;
            T = 0.5 * (T + T.adjoint()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ts(T);
            v.middleCols(i, k) = V * ts.eigenvectors();
        }
        i = j;
    }
}

}  // namespace

Quenching quenching_from_string(const std::string &s) {
    if (s == "per_branch") return Quenching::per_branch;
    if (s == "per_branch_swapped") return Quenching::per_branch_swapped;
    if (s == "mean") return Quenching::mean;
    throw InvalidInput("unknown quenching assignment '" + s + "'");
}

const char *to_string(Quenching q) {
    switch (q) {
        case Quenching::per_branch: return "per_branch";
        case Quenching::per_branch_swapped: return "per_branch_swapped";
        case Quenching::mean: return "mean";
    }
    return "?";
}

void FineStructureParams::validate() const {
    for (auto [v, n] : {std::pair{lambda_gs, "lambda_gs"}, {upsilon_gs, "upsilon_gs"}, {lambda_es, "lambda_es"},
                        {upsilon_es, "upsilon_es"}, {f12_gs, "f12_gs"}, {f32_gs, "f32_gs"}, {f12_es, "f12_es"},
                        {f32_es, "f32_es"}, {gamma_spin, "gamma_spin"}, {gamma_orb, "gamma_orb"}, {zpl_ghz, "zpl_ghz"}})
        check_finite(v, n);
    require(lambda_gs > 0 && lambda_es > 0, "spin-orbit splittings must be positive");
    require(upsilon_gs >= 0 && upsilon_es >= 0, "strain must be non-negative");
    for (double f : {f12_gs, f32_gs, f12_es, f32_es}) require(f > 0 && f <= 1, "quenching factors must lie in (0, 1]");
}

Vec3 FieldVector::cartesian() const {
    return {b_perp * std::cos(azimuth), b_perp * std::sin(azimuth), b_parallel};
}

double FieldVector::magnitude() const { return std::hypot(b_parallel, b_perp); }

FieldVector FieldVector::from_cartesian(const Vec3 &b) {
    double perp = std::hypot(b.x(), b.y());
    return {b.z(), perp, perp > 0 ? std::atan2(b.y(), b.x()) : 0.0};
}

Eigen::Matrix3d HyperfineParams::tensor() const {
    Vec3 n(std::sin(polar_angle) * std::cos(azimuth), std::sin(polar_angle) * std::sin(azimuth), std::cos(polar_angle));
    return a_perp * Eigen::Matrix3d::Identity() + (a_par - a_perp) * n * n.transpose();
}

void HyperfineParams::validate() const {
    for (auto [v, n] : {std::pair{a_par, "a_par"}, {a_perp, "a_perp"}, {polar_angle, "polar_angle"},
                        {azimuth, "azimuth"}, {gamma_c13, "gamma_c13"}})
        check_finite(v, n);
    require(gamma_c13 > 0, "gamma_c13 must be positive");
}

std::array<Mat4c, 3> zeeman_operators(const FineStructureParams &p, Manifold m) {
    auto s = spin_ops();
    std::array<Mat4c, 3> out;
    for (int k = 0; k < 3; ++k) out[k] = p.gamma_spin * s[k];
    out[2] += orbital_moment(p, m);
    return out;
}

Mat4c electron_hamiltonian(const FineStructureParams &p, Manifold m, const Vec3 &b) {
    p.validate();
    for (int k = 0; k < 3; ++k) check_finite(b[k], "field");
    require(b.norm() < 1000.0, "field magnitude must be below 1000 mT");
    const double lambda = 1e3 * (m == Manifold::ground ? p.lambda_gs : p.lambda_es);
    const double upsilon = 1e3 * (m == Manifold::ground ? p.upsilon_gs : p.upsilon_es);
    const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
    Mat4c Lz = kron<2, 2>(pauli(2), id);
    Mat4c Lx = kron<2, 2>(pauli(0), id);
    auto s = spin_ops();
    Mat4c H = -lambda * Lz * s[2] + upsilon * Lx;
    auto z = zeeman_operators(p, m);
    for (int k = 0; k < 3; ++k) H += b[k] * z[k];
    return H;
}

LevelDiagram electron_levels(const FineStructureParams &p, const FieldVector &b) {
    const Vec3 bc = b.cartesian();
    Mat4c sz = spin_ops()[2];
    LevelDiagram d;
    Eigen::Vector4d eg, ee;
    Mat4c vg, ve;
    sorted_eigensystem<4>(electron_hamiltonian(p, Manifold::ground, bc), sz, eg, vg);
    sorted_eigensystem<4>(electron_hamiltonian(p, Manifold::excited, bc), sz, ee, ve);
    for (int i = 0; i < 4; ++i) {
        d.gs_energies.push_back(eg[i] * 1e-3);
        d.es_energies.push_back(p.zpl_ghz + ee[i] * 1e-3);
    }
    d.transitions["A1"] = d.es_energies[0] - d.gs_energies[0];
    d.transitions["B2"] = d.es_energies[1] - d.gs_energies[1];
    d.transitions["A1_B2"] = std::abs(d.transitions["B2"] - d.transitions["A1"]);
    d.transitions["qubit"] = (eg[1] - eg[0]) * 1e-3;
    d.transitions["es_qubit"] = (ee[1] - ee[0]) * 1e-3;
    return d;
}

Mat8c hyperfine_hamiltonian(const FineStructureParams &p, const HyperfineParams &h, const Vec3 &b) {
    h.validate();
    Mat4c He = electron_hamiltonian(p, Manifold::ground, b);
    const Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
    const Eigen::Matrix4cd id4 = Eigen::Matrix4cd::Identity();
    auto s = spin_ops();
    const Eigen::Matrix3d A = h.tensor();
    const double gn = h.gamma_c13 * 1e-3;  // MHz/mT
    Mat8c H = kron<4, 2>(He, id2);
    for (int k = 0; k < 3; ++k) {
        Eigen::Matrix2cd ik = pauli(k) / 2.0;
        for (int l = 0; l < 3; ++l) H += A(k, l) * kron<4, 2>(s[k], pauli(l) / 2.0);
        H -= gn * b[k] * kron<4, 2>(id4, ik);
    }
    return H;
}

namespace {

struct HyperfineEigen {
    Eigen::Matrix<double, 8, 1> e;
    Mat8c v;
};

HyperfineEigen hyperfine_eigen(const FineStructureParams &p, const HyperfineParams &h, const Vec3 &b) {
    HyperfineEigen out;
    auto s = spin_ops();
    const Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
    // Ties resolved by electron then nuclear Sz.
    Mat8c tie = kron<4, 2>(s[2], id2) + 1e-3 * kron<4, 2>(Eigen::Matrix4cd::Identity(), pauli(2) / 2.0);
    sorted_eigensystem<8>(hyperfine_hamiltonian(p, h, b), tie, out.e, out.v);
    return out;
}

}  // namespace

LevelDiagram hyperfine_levels(const FineStructureParams &p, const HyperfineParams &h, const FieldVector &b) {
    const Vec3 bc = b.cartesian();
    auto he = hyperfine_eigen(p, h, bc);
    const auto &E = he.e;
    LevelDiagram d;
    for (int i = 0; i < 8; ++i) d.gs_energies.push_back(E[i] * 1e-3);
    Eigen::Vector4d ee;
    Mat4c ve;
    sorted_eigensystem<4>(electron_hamiltonian(p, Manifold::excited, bc), spin_ops()[2], ee, ve);
    for (int i = 0; i < 4; ++i) d.es_energies.push_back(p.zpl_ghz + ee[i] * 1e-3);
    d.transitions["RF1"] = E[1] - E[0];
    d.transitions["RF2"] = E[3] - E[2];
    d.transitions["MW1"] = (E[3] - E[0]) * 1e-3;
    d.transitions["MW2"] = (E[2] - E[1]) * 1e-3;
    d.transitions["MW_splitting"] = (E[3] - E[0]) - (E[2] - E[1]);
    return d;
}

Vec3 direction_at(double angle_deg) {
    double a = angle_deg * std::numbers::pi / 180.0;
    return {std::sin(a), 0.0, std::cos(a)};
}

double gyromagnetic_ratio(const FineStructureParams &p, const Vec3 &direction, const FieldVector &operating_field,
                          double step) {
    double n = direction.norm();
    if (!(n > 0)) throw DegenerateInput("direction vector is zero");
    require(std::abs(n - 1.0) <= 1e-9, "direction must be a unit vector");
    require(step > 0, "derivative step must be positive");
    const Vec3 b0 = operating_field.cartesian();
    auto split = [&](const Vec3 &b) {
        return electron_levels(p, FieldVector::from_cartesian(b)).transitions.at("qubit") * 1e3;
    };
    std::function<double(double)> D;
    if (b0.norm() == 0.0) {
        D = [&](double h) { return split(h * direction) / h; };
    } else {
        D = [&](double h) { return (split(b0 + h * direction) - split(b0 - h * direction)) / (2 * h); };
    }
    return (4 * D(step / 2) - D(step)) / 3;
}

double rabi_enhancement(const FineStructureParams &p, const HyperfineParams &h, const FieldVector &b_dc,
                        const Vec3 &ac_direction) {
    const Vec3 b = b_dc.cartesian();
    if (!(b.norm() > 0)) throw DegenerateInput("rabi_enhancement needs a nonzero static field");
    if (!(ac_direction.norm() > 0)) throw DegenerateInput("drive direction is zero");
    const Vec3 d = ac_direction.normalized();
    const Vec3 bhat = b.normalized();
    const double d_perp = (d - d.dot(bhat) * bhat).norm();
    if (!(d_perp > 1e-12)) throw DegenerateInput("drive parallel to the static field has no transverse component");

    auto he = hyperfine_eigen(p, h, b);
    auto z = zeeman_operators(p, Manifold::ground);
    const Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
    const double gn = h.gamma_c13 * 1e-3;
    Mat8c V = Mat8c::Zero();
    for (int k = 0; k < 3; ++k) {
        V += d[k] * kron<4, 2>(z[k], id2);
        V -= gn * d[k] * kron<4, 2>(Eigen::Matrix4cd::Identity(), pauli(k) / 2.0);
    }
    cd m = he.v.col(2).adjoint() * V * he.v.col(3);
    return std::abs(m) / (gn / 2 * d_perp);
}

// ---- fits ----

double observable(const FineStructureParams &p, const Observation &o) {
    auto d = electron_levels(p, o.field);
    auto it = d.transitions.find(o.transition);
    if (it == d.transitions.end()) throw InvalidInput("unknown electron transition '" + o.transition + "'");
    return it->second;
}

StrainFit fit_strain(const std::vector<Observation> &observed, const FineStructureParams &p0) {
    p0.validate();
    require(p0.upsilon_gs > 0 && p0.upsilon_es > 0, "initial strain guesses must be positive");
    if (observed.size() < 2) throw RankDeficiency("fit_strain needs at least two observations");
    for (const auto &o : observed) {
        require(o.sigma > 0, "observation sigma must be positive");
        observable(p0, o);
    }
    fitkit::FitModel m;
    m.name = "strain";
    m.params = {{"upsilon_gs", fitkit::Bound::positive, "GHz"}, {"upsilon_es", fitkit::Bound::positive, "GHz"}};
    m.eval = [&](auto x, auto q, auto out) {
        FineStructureParams p = p0;
        p.upsilon_gs = q[0];
        p.upsilon_es = q[1];
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = observable(p, observed[static_cast<std::size_t>(x[i])]);
    };
    fitkit::FitData data;
    data.weighting = fitkit::Weighting::sigma;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        data.x.push_back(static_cast<double>(i));
        data.y.push_back(observed[i].value);
        data.sigma.push_back(observed[i].sigma);
    }
    auto r = fitkit::fit(m, data, {p0.upsilon_gs, p0.upsilon_es});
    if (r.status == fitkit::FitStatus::singular)
        throw RankDeficiency("observations do not determine both strains (singular normal matrix)");
    if (!r.ok()) throw FitFailure("strain fit did not converge, chi2 = " + std::to_string(r.chi2));
    StrainFit out;
    out.params = p0;
    out.params.upsilon_gs = r.params[0];
    out.params.upsilon_es = r.params[1];
    out.sigma_upsilon_gs = r.sigmas[0];
    out.sigma_upsilon_es = r.sigmas[1];
    out.residuals = r.residuals;
    out.raw = std::move(r);
    return out;
}

double hyperfine_observable(const FineStructureParams &p, const HyperfineParams &h, const HyperfineTarget &t) {
    auto d = hyperfine_levels(p, h, t.field);
    auto it = d.transitions.find(t.transition);
    if (it == d.transitions.end()) throw InvalidInput("unknown hyperfine transition '" + t.transition + "'");
    return it->second;
}

HyperfineFit fit_hyperfine(const FineStructureParams &p, const std::vector<HyperfineTarget> &targets,
                           const HyperfineParams &h0, bool free_polar_angle) {
    p.validate();
    h0.validate();
    const std::size_t nfree = free_polar_angle ? 3 : 2;
    if (targets.size() < nfree)
        throw RankDeficiency("fit_hyperfine has " + std::to_string(nfree) + " free parameters but " +
                             std::to_string(targets.size()) + " targets");
    std::set<long long> fields;
    for (const auto &t : targets) {
        require(t.sigma > 0, "target sigma must be positive");
        hyperfine_observable(p, h0, t);
        fields.insert(std::llround(t.field.magnitude() * 1e6));
    }
    if (fields.size() < 2) throw RankDeficiency("fit_hyperfine needs targets at two or more field magnitudes");

    fitkit::FitModel m;
    m.name = "hyperfine";
    m.params = {{"a_par", fitkit::Bound::none, "MHz"},
                {"a_perp", fitkit::Bound::none, "MHz"},
                {"polar_angle", fitkit::Bound::none, "rad"}};
    m.eval = [&](auto x, auto q, auto out) {
        HyperfineParams h = h0;
        h.a_par = q[0];
        h.a_perp = q[1];
        h.polar_angle = q[2];
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = hyperfine_observable(p, h, targets[static_cast<std::size_t>(x[i])]);
    };
    fitkit::FitData data;
    data.weighting = fitkit::Weighting::sigma;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        data.x.push_back(static_cast<double>(i));
        data.y.push_back(targets[i].value);
        data.sigma.push_back(targets[i].sigma);
    }
    fitkit::FitOptions opt;
    opt.fixed = {false, false, !free_polar_angle};
    auto r = fitkit::fit(m, data, {h0.a_par, h0.a_perp, h0.polar_angle}, opt);
    if (r.status == fitkit::FitStatus::singular)
        throw RankDeficiency("hyperfine targets do not determine the free parameters");
    if (!r.ok()) throw FitFailure("hyperfine fit did not converge, chi2 = " + std::to_string(r.chi2));
    HyperfineFit out;
    out.params = h0;
    out.params.a_par = r.params[0];
    out.params.a_perp = r.params[1];
    out.params.polar_angle = r.params[2];
    out.sigma_a_par = r.sigmas[0];
    out.sigma_a_perp = r.sigmas[1];
    out.sigma_polar_angle = r.sigmas[2];
    out.residuals = r.residuals;
    out.raw = std::move(r);
    return out;
}

std::vector<HyperfineTarget> calibration_targets() {
    return {
        {FieldVector::axial(106.0), "RF1", 22.74, 1e-3},
        {FieldVector::axial(60.0), "RF2", 20.998, 1e-3},
        {FieldVector::axial(106.0), "RF2", 20.53, 1e-3},
        {FieldVector::axial(60.0), "MW_splitting", 44.5, 1.4},
    };
}

HyperfineParams calibrated_hyperfine() {
    HyperfineParams h;
    h.a_par = 53.0705237013609;
    h.a_perp = 33.6419359422587;
    h.polar_angle = 48.5 * std::numbers::pi / 180.0;
    return h;
}

}  // namespace spinlab::levels
