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

// Independent reference implementations used only by the tests. Nothing
// here calls into the library's numerics; matrices are written out entry by
// entry and dynamics are integrated by brute force.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;
constexpr double pi = std::numbers::pi;

struct Fine {
    double lambda_mhz, upsilon_mhz, f12, f32, gamma_s = 28.02495, gamma_orb = 13.99625;
};

// Basis |e+ up>, |e+ dn>, |e- up>, |e- dn>; per-branch quenching.
inline Eigen::Matrix4cd h4(const Fine &p, double bx, double by, double bz) {
    Eigen::Matrix4cd H = Eigen::Matrix4cd::Zero();
    const double lz[4] = {1, 1, -1, -1};
    const double sz[4] = {0.5, -0.5, 0.5, -0.5};
    for (int i = 0; i < 4; ++i) {
        const double f = lz[i] * sz[i] > 0 ? p.f12 : p.f32;
        H(i, i) = -p.lambda_mhz * lz[i] * sz[i] + f * p.gamma_orb * bz * lz[i] + p.gamma_s * bz * sz[i];
    }
    H(0, 2) = H(2, 0) = p.upsilon_mhz;
    H(1, 3) = H(3, 1) = p.upsilon_mhz;
    const cd sp = p.gamma_s * 0.5 * cd(bx, -by);  // <up|S.B|dn>
    H(0, 1) = sp, H(1, 0) = std::conj(sp);
    H(2, 3) = sp, H(3, 2) = std::conj(sp);
    return H;
}

inline std::array<double, 4> levels4(const Fine &p, double bx, double by, double bz) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h4(p, bx, by, bz));
    std::array<double, 4> e;
    for (int i = 0; i < 4; ++i) e[i] = es.eigenvalues()[i];
    return e;
}

// Electron (4) x nucleus (2) with tensor A and nuclear Zeeman -gn B.I.
inline Eigen::Matrix<cd, 8, 8> h8(const Fine &p, const Eigen::Matrix3d &A, double gn_mhz, const Eigen::Vector3d &b) {
    const Eigen::Matrix4cd He = h4(p, b[0], b[1], b[2]);
    // Spin-1/2 matrices.
    std::array<Eigen::Matrix2cd, 3> s;
    s[0] << 0, 0.5, 0.5, 0;
    s[1] << 0, cd(0, -0.5), cd(0, 0.5), 0;
    s[2] << 0.5, 0, 0, -0.5;
    Eigen::Matrix<cd, 8, 8> H = Eigen::Matrix<cd, 8, 8>::Zero();
    // index = 2 * (2 * orb + spin) + nuc
    for (int o = 0; o < 2; ++o)
        for (int se = 0; se < 2; ++se)
            for (int n = 0; n < 2; ++n)
                for (int se2 = 0; se2 < 2; ++se2)
                    for (int n2 = 0; n2 < 2; ++n2) {
                        const int r = 4 * o + 2 * se + n, c = 4 * o + 2 * se2 + n2;
                        cd v = 0;
                        for (int k = 0; k < 3; ++k)
                            for (int l = 0; l < 3; ++l) v += A(k, l) * s[k](se, se2) * s[l](n, n2);
                        if (se == se2)
                            for (int k = 0; k < 3; ++k) v -= gn_mhz * b[k] * s[k](n, n2);
                        H(r, c) += v;
                    }
    for (int a = 0; a < 4; ++a)
        for (int bb = 0; bb < 4; ++bb)
            for (int n = 0; n < 2; ++n) H(2 * a + n, 2 * bb + n) += He(a, bb);
    return H;
}

// Arcsine (half-width W) convolved with a unit-area Lorentzian, via the
// Stieltjes transform of the arcsine law: G(z) = 1 / sqrt(z^2 - W^2).
inline double arcsine_lorentzian(double x, double w, double fwhm) {
    const cd z(x, fwhm / 2);
    const cd g = 1.0 / (std::sqrt(z - w) * std::sqrt(z + w));
    return -g.imag() / pi;
}

// Exact Gaussian phase variance of a sign-switching filter under OU noise
// with covariance b^2 exp(-|t|/tau); coherence = exp(-var/2).
inline double ou_filter_coherence(const std::vector<double> &seg, double b, double tau) {
    auto self = [&](double L) {
        const double x = L / tau;
        const double g = x < 1e-3 ? x * x / 2 - x * x * x / 6 + x * x * x * x / 24 : x - 1 + std::exp(-x);
        return 2 * tau * tau * g;
    };
    double var = 0;
    std::vector<double> start(seg.size());
    double t = 0;
    for (std::size_t i = 0; i < seg.size(); ++i) start[i] = t, t += seg[i];
    for (std::size_t i = 0; i < seg.size(); ++i) {
        const double si = (i % 2 == 0) ? 1 : -1;
        var += self(seg[i]);
        for (std::size_t j = i + 1; j < seg.size(); ++j) {
            const double sj = (j % 2 == 0) ? 1 : -1;
            const double gap = start[j] - (start[i] + seg[i]);
            var += 2 * si * sj * tau * tau * (-std::expm1(-seg[i] / tau)) * (-std::expm1(-seg[j] / tau)) *
                   std::exp(-gap / tau);
        }
    }
    return std::exp(-b * b * var / 2);
}

inline std::vector<double> cpmg_segments(int n, double T) {
    std::vector<double> s(static_cast<std::size_t>(n) + 1, T / n);
    s.front() = s.back() = T / (2.0 * n);
    return s;
}

// Classical RK4 on dx/dt = M x.
template <int N>
Eigen::Matrix<double, N, 1> rk4(const Eigen::Matrix<double, N, N> &M, Eigen::Matrix<double, N, 1> x, double t,
                                int steps) {
    const double h = t / steps;
    for (int k = 0; k < steps; ++k) {
        using V = Eigen::Matrix<double, N, 1>;
        const V k1 = M * x;
        const V k2 = M * (x + h / 2 * k1);
        const V k3 = M * (x + h / 2 * k2);
        const V k4 = M * (x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

// Two-level propagator by midpoint-rule products of tiny rotations.
inline Eigen::Matrix2cd rotation_product(double rabi, double phase, double det, double t, int steps) {
    Eigen::Matrix2cd H;
    H << pi * det, pi * rabi * std::polar(1.0, -phase), pi * rabi * std::polar(1.0, phase), -pi * det;
    Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(H);
    const double h = t / steps;
    Eigen::Matrix2cd step = es.eigenvectors() *
                            Eigen::Vector2cd(std::exp(cd(0, -h) * es.eigenvalues()[0]),
                                             std::exp(cd(0, -h) * es.eigenvalues()[1]))
                                .asDiagonal() *
                            es.eigenvectors().inverse();
    Eigen::Matrix2cd U = Eigen::Matrix2cd::Identity();
    for (int k = 0; k < steps; ++k) U = step * U;
    return U;
}

// Column-stacked Liouvillian: d vec(rho)/dt = L vec(rho).
template <int N>
Eigen::MatrixXcd liouvillian(const Eigen::Matrix<cd, N, N> &H, const std::vector<Eigen::Matrix<cd, N, N>> &jumps) {
    using M = Eigen::Matrix<cd, N, N>;
    auto kron = [](const M &a, const M &b) {
        Eigen::MatrixXcd out(N * N, N * N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) out.block(i * N, j * N, N, N) = a(i, j) * b;
        return out;
    };
    const M id = M::Identity();
    Eigen::MatrixXcd L = cd(0, -1) * (kron(id, H) - kron(H.transpose(), id));
    for (const auto &c : jumps) {
        const M cc = c.adjoint() * c;
        L += kron(c.conjugate(), c) - 0.5 * kron(id, cc) - 0.5 * kron(cc.transpose(), id);
    }
    return L;
}

// Driven lambda system |0> = down, |1> = A, |2> = up: Rabi omega on 0-1,
// detuning delta, decays A->down and A->up.
inline Eigen::MatrixXcd lambda_liouvillian(double omega, double delta, double g_down, double g_up) {
    using M3 = Eigen::Matrix<cd, 3, 3>;
    M3 H = M3::Zero();
    H(0, 1) = H(1, 0) = omega / 2;
    H(1, 1) = -delta;
    M3 c1 = M3::Zero(), c2 = M3::Zero();
    c1(0, 1) = std::sqrt(g_down);
    c2(2, 1) = std::sqrt(g_up);
    return liouvillian<3>(H, {c1, c2});
}

// Ordinary least squares for y = X beta: returns beta and (X^T X)^-1.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> ols(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) {
    Eigen::MatrixXd N = X.transpose() * X;
    Eigen::MatrixXd inv = N.inverse();
    return {inv * X.transpose() * y, inv};
}

}  // namespace oracle
