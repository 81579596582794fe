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

#include "spinlab/pumping.hpp"

#include "spinlab/errors.hpp"
#include "spinlab/parallel.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spinlab::pumping {

double pump_rate(double omega, double delta, double gamma) {
    require(gamma > 0 && std::isfinite(gamma), "gamma must be positive");
    require(std::isfinite(omega) && std::isfinite(delta), "non-finite rate");
    return omega * omega * gamma / (4 * delta * delta + gamma * gamma);
}

double power_to_rabi(double p, double p_sat, double gamma) {
    require(p >= 0, "optical power must be non-negative");
    require(p_sat > 0, "saturation power must be positive");
    return gamma * std::sqrt(p / (2 * p_sat));
}

void ThreeLevelParams::validate() const {
    require(gamma > 0, "gamma must be positive");
    require(cyclicity_e > 0, "cyclicity must be positive");
    require(std::isfinite(omega) && std::isfinite(delta), "non-finite rate");
}

namespace {

void check_grid(const std::vector<double> &t) {
    require(!t.empty(), "time grid is empty");
    for (std::size_t i = 0; i < t.size(); ++i) {
        require(std::isfinite(t[i]) && t[i] >= 0, "time grid must be finite and non-negative");
        if (i > 0) require(t[i] > t[i - 1], "time grid must be strictly ascending");
    }
}

// exp(M dt) for a rate matrix. Scaling and squaring at ||M dt|| ~ 1e6 drifts
// the column sums by ~1e-10; the exact propagator conserves them, so restore.
Eigen::Matrix<double, 6, 6> stochastic_exp(const Eigen::Matrix<double, 6, 6> &M, double dt) {
    Eigen::Matrix<double, 6, 6> E = (M * dt).exp();
    E = E.cwiseMax(0.0);
    for (int j = 0; j < 6; ++j) E.col(j) /= E.col(j).sum();
    return E;
}

}  // namespace

ThreeLevelTrace three_level_trace(const ThreeLevelParams &p, const std::vector<double> &t_ms) {
    p.validate();
    check_grid(t_ms);
    ThreeLevelTrace out;
    out.t_ms = t_ms;
    const double W = p.w();
    const std::size_t n = t_ms.size();
    out.rho_down.resize(n);
    out.rho_a.resize(n);
    out.rho_up.resize(n);
    out.fluorescence.resize(n);
    if (W == 0.0) {
        for (std::size_t i = 0; i < n; ++i) out.rho_down[i] = 1.0;
        return out;
    }
    // M = [[a, b], [c, d]] on (rho_down, rho_AA).
    const double a = -W, b = W + p.gamma_down(), d = -(W + p.gamma);
    const double tr = a + d, det = W * p.gamma_up();
    const double lf = 0.5 * (tr - std::sqrt(tr * tr - 4 * det));
    const double ls = det / lf;
    // Eigenvectors (b, l - a); x0 = (1, 0).
    const double k = 1.0 / (b * (lf - ls));
    const double cs = (lf - a) * k, cf = -(ls - a) * k;  // coefficients of slow/fast modes
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t_ms[i] * 1e3;
        const double es = std::exp(ls * t), ef = std::exp(lf * t);
        out.rho_down[i] = b * (cs * es + cf * ef);
        out.rho_a[i] = cs * (ls - a) * es + cf * (lf - a) * ef;
        // rho_up = gamma_up * int_0^t rho_AA
        out.rho_up[i] = p.gamma_up() * (cs * (ls - a) * std::expm1(ls * t) / ls + cf * (lf - a) * std::expm1(lf * t) / lf);
        out.fluorescence[i] = p.gamma * out.rho_a[i];
    }
    return out;
}

SaturationFit fit_saturation(const std::vector<double> &power, const std::vector<double> &rate) {
    require(power.size() == rate.size(), "power and rate lengths differ");
    require(power.size() >= 5, "saturation fit needs at least five points");
    fitkit::FitData data;
    data.x = power;
    data.y = rate;
    data.weighting = fitkit::Weighting::poisson;
    const auto &m = fitkit::model("saturation");
    auto r = fitkit::fit(m, data, {});
    const double pmax = *std::max_element(power.begin(), power.end());
    if (r.status == fitkit::FitStatus::singular || r.params[1] > 10 * pmax || !(r.sigmas[1] < r.params[1]))
        throw RankDeficiency("saturation power not identifiable: data do not reach the knee (fitted p_sat = " +
                             std::to_string(r.params[1]) + " nW, max power " + std::to_string(pmax) + " nW)");
    if (!r.ok()) throw FitFailure("saturation fit did not converge");
    SaturationFit out;
    out.params = {r.params[0], r.params[1], r.params[2], r.params[3]};
    out.sigmas = {r.sigmas[0], r.sigmas[1], r.sigmas[2], r.sigmas[3]};
    out.raw = std::move(r);
    return out;
}

CyclicityFit fit_cyclicity(const std::vector<double> &t_ms, const std::vector<double> &counts,
                           const ThreeLevelParams &known, double lambda_guess) {
    check_grid(t_ms);
    require(t_ms.size() == counts.size(), "time and count lengths differ");
    known.validate();
    require(known.w() > 0, "cyclicity fit needs a nonzero pump rate");
    if (lambda_guess <= 0) {
        // Slow rate k ~ W gamma_up / (2W + gamma) from a log-linear fit.
        double su = 0, sv = 0, suu = 0, suv = 0, n = 0;
        for (std::size_t i = 0; i < t_ms.size(); ++i)
            if (t_ms[i] > 0 && counts[i] > 0) {
                double u = t_ms[i] * 1e3, v = std::log(counts[i]);
                su += u, sv += v, suu += u * u, suv += u * v, n += 1;
            }
        double den = n * suu - su * su;
        double k = den > 0 ? -(n * suv - su * sv) / den : 0.0;
        const double W = known.w();
        double gup = k * (2 * W + known.gamma) / W;
        lambda_guess = (gup > 0 && gup < known.gamma) ? known.gamma / gup - 1 : 1000.0;
        lambda_guess = std::clamp(lambda_guess, 1e-2, 1e9);
    }
    fitkit::FitModel m;
    m.name = "three_level";
    m.params = {{"cyclicity_e", fitkit::Bound::positive, ""}, {"scale", fitkit::Bound::positive, "counts us"}};
    m.eval = [&](auto, auto q, auto out) {
        ThreeLevelParams p = known;
        p.cyclicity_e = q[0];
        auto tr = three_level_trace(p, t_ms);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = q[1] * tr.fluorescence[i];
    };
    fitkit::FitData data;
    data.x = t_ms;
    data.y = counts;
    data.weighting = fitkit::Weighting::poisson;
    ThreeLevelParams p0 = known;
    p0.cyclicity_e = lambda_guess;
    double f0 = three_level_trace(p0, t_ms).fluorescence.front();
    double c0 = std::max(counts.front(), 1e-12);
    auto r = fitkit::fit(m, data, {lambda_guess, f0 > 0 ? c0 / f0 : 1.0});
    if (!r.ok() || !(r.params[0] < 1e12))
        throw FitFailure("cyclicity fit did not converge (status " + std::string(fitkit::to_string(r.status)) +
                         ", Lambda_e = " + std::to_string(r.params[0]) + ")");
    return {r.params[0], r.sigmas[0], r.params[1], std::move(r)};
}

Eigen::Matrix<double, 2, 4> branching_matrix(double le, double ln) {
    require(le > 0 && ln > 0, "cyclicities must be positive");
    const double pec = le / (1 + le), pef = 1 / (1 + le);
    const double pnc = ln / (1 + ln), pnf = 1 / (1 + ln);
    Eigen::Matrix<double, 2, 4> b;
    b << pec * pnc, pec * pnf, pef * pnf, pef * pnc,  //
        pec * pnf, pec * pnc, pef * pnc, pef * pnf;
    return b;
}

double attenuated_rabi(double omega_ref, double attenuation_db) {
    require(std::isfinite(omega_ref) && std::isfinite(attenuation_db), "non-finite MW parameters");
    return omega_ref * std::pow(10.0, attenuation_db / 20);
}

double mw_pump_rate(double omega_ref, double attenuation_db, double delta_mw, double gamma_esp) {
    require(gamma_esp > 0, "spin linewidth must be positive");
    return pump_rate(attenuated_rabi(omega_ref, attenuation_db), delta_mw, gamma_esp);
}

double spin_linewidth(double t2star_us) {
    require(t2star_us > 0, "T2* must be positive");
    return 1.0 / t2star_us;
}

double SixLevelParams::mw_rate() const {
    return w_mw ? *w_mw : mw_pump_rate(omega_mw_ref, mw_attenuation_db, delta_mw, gamma_e_spin);
}

void SixLevelParams::validate() const {
    three_level.validate();
    require(cyclicity_n > 0, "nuclear cyclicity must be positive");
    require(gamma_e_spin > 0, "spin linewidth must be positive");
    require(mw_rate() >= 0, "MW pump rate must be non-negative");
}

Eigen::Matrix<double, 6, 6> six_level_matrix(const SixLevelParams &p) {
    p.validate();
    const double W = p.three_level.w();
    const double g = p.three_level.gamma;
    const double wmw = p.mw_rate();
    const auto b = branching_matrix(p.three_level.cyclicity_e, p.cyclicity_n);
    Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
    for (int j = 0; j < 2; ++j) {
        M(4 + j, j) += W;  // pumping g_j -> e_j
        M(j, j) -= W;
        M(j, 4 + j) += W;  // stimulated emission
        M(4 + j, 4 + j) -= W + g;
        for (int i = 0; i < 4; ++i) M(i, 4 + j) += g * b(j, i);
    }
    M(0, 0) -= wmw;
    M(0, 3) += wmw;
    M(3, 3) -= wmw;
    M(3, 0) += wmw;
    return M;
}

SixLevelTrace six_level_trace(const SixLevelParams &p, int init_state, const std::vector<double> &t_ms) {
    require(init_state >= 0 && init_state < 4, "init_state must be one of the ground states 0..3");
    std::array<double, 6> x0{};
    x0[static_cast<std::size_t>(init_state)] = 1.0;
    return six_level_trace(p, x0, t_ms);
}

SixLevelTrace six_level_trace(const SixLevelParams &p, const std::array<double, 6> &init,
                              const std::vector<double> &t_ms) {
    check_grid(t_ms);
    double s = 0;
    for (double v : init) {
        require(v >= 0 && v <= 1, "initial populations must lie in [0, 1]");
        s += v;
    }
    require(std::abs(s - 1) < 1e-12, "initial populations must sum to 1");
    const auto M = six_level_matrix(p);
    SixLevelTrace out;
    out.t_ms = t_ms;
    Eigen::Matrix<double, 6, 1> x = Eigen::Map<const Eigen::Matrix<double, 6, 1>>(init.data());
    double t_prev = 0.0;
    double dt_prev = -1.0;
    Eigen::Matrix<double, 6, 6> E;
    for (double t : t_ms) {
        const double dt = (t - t_prev) * 1e3;
        if (dt > 0) {
            if (dt != dt_prev) {
                E = stochastic_exp(M, dt);
                dt_prev = dt;
            }
            x = E * x;
        }
        t_prev = t;
        std::array<double, 6> row;
        for (int i = 0; i < 6; ++i) row[static_cast<std::size_t>(i)] = x[i];
        out.populations.push_back(row);
        out.fluorescence.push_back(p.three_level.gamma * (x[4] + x[5]));
    }
    return out;
}

std::array<double, 6> six_level_steady_state(const SixLevelParams &p) {
    const auto M = six_level_matrix(p);
    Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(M, Eigen::ComputeFullV);
    Eigen::Matrix<double, 6, 1> v = svd.matrixV().col(5);
    v /= v.sum();
    // Round-off leaves ~1e-20 negatives on empty levels.
    v = v.cwiseMax(0.0);
    v /= v.sum();
    std::array<double, 6> out;
    for (int i = 0; i < 6; ++i) out[static_cast<std::size_t>(i)] = v[i];
    return out;
}

double initialization_time(const SixLevelParams &p, const std::array<double, 6> &init, double target) {
    require(target > 0 && target < 1, "target population must lie in (0, 1)");
    const auto M = six_level_matrix(p);
    Eigen::Matrix<double, 6, 1> x = Eigen::Map<const Eigen::Matrix<double, 6, 1>>(init.data());
    if (x[2] >= target) return 0.0;
    const double step = 10.0;  // us
    const Eigen::Matrix<double, 6, 6> E = stochastic_exp(M, step);
    double t = 0;
    Eigen::Matrix<double, 6, 1> prev = x;
    while (x[2] < target) {
        prev = x;
        x = E * x;
        t += step;
        if (t > 1e7) throw InvalidInput("dark-state population does not reach the target within 10 s");
    }
    double lo = 0, hi = step;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        Eigen::Matrix<double, 6, 1> y = stochastic_exp(M, mid) * prev;
        (y[2] >= target ? hi : lo) = mid;
    }
    return (t - step + hi) * 1e-3;
}

// ---- initialization fidelity ----

void InitFitInput::validate() const {
    for (double s : {sigma_a, sigma_gamma, sigma_c, sigma_b}) require(s >= 0, "sigmas must be non-negative");
    for (double r : {rho_ac, rho_ab, rho_cb}) require(std::abs(r) <= 1, "correlations must lie in [-1, 1]");
    if (!(amplitude_a > dark_b)) throw InvalidInput("no signal above dark counts: A' = A - B <= 0");
}

InitFitInput InitFitInput::table2() {
    InitFitInput in;
    in.amplitude_a = 176.0;
    in.decay_gamma = 1.75;
    in.offset_c = 8.40;
    in.dark_b = 8.08;
    in.sigma_a = 3.0;
    in.sigma_gamma = 0.04;
    in.sigma_c = 0.4;
    in.sigma_b = 0.01;
    in.rho_ac = 0.2235;
    return in;
}

InitFidelity init_fidelity(const InitFitInput &in) {
    in.validate();
    const double ap = in.amplitude_a - in.dark_b;
    const double cp = in.offset_c - in.dark_b;
    InitFidelity out;
    out.g = ap * ap - cp * ap;
    out.h = ap * ap;
    out.f = out.g / out.h;
    // Variables ordered (A, C, B).
    Eigen::Matrix3d rho;
    rho << 1, in.rho_ac, in.rho_ab,  //
        in.rho_ac, 1, in.rho_cb,     //
        in.rho_ab, in.rho_cb, 1;
    const double s[3] = {in.sigma_a, in.sigma_c, in.sigma_b};
    const double dg[3] = {2 * ap - cp, -ap, -(ap - cp)};
    const double dh[3] = {2 * ap, 0.0, -2 * ap};
    const double df[3] = {cp / (ap * ap), -1 / ap, (ap - cp) / (ap * ap)};
    // rho_AB = rho_CB = 1 with rho_AC < 1 is not a valid joint correlation,
    // so the semidefinite check cannot be applied here.
    out.sigma_g = fitkit::propagate_linear(dg, s, rho, fitkit::PsdCheck::skip);
    out.sigma_h = fitkit::propagate_linear(dh, s, rho, fitkit::PsdCheck::skip);
    out.sigma_f = std::abs(out.f) * std::abs(out.sigma_g / out.g - out.sigma_h / out.h);
    out.sigma_f_direct = fitkit::propagate_linear(df, s, rho, fitkit::PsdCheck::skip);
    return out;
}

InitFitResult fit_initialization(const std::vector<double> &t_ms, const std::vector<double> &signal,
                                 const std::vector<double> &laser_only, const std::vector<double> &dark) {
    check_grid(t_ms);
    require(signal.size() == t_ms.size(), "signal trace length differs from time grid");
    require(laser_only.empty() || laser_only.size() == t_ms.size(), "laser-only trace length differs from time grid");
    require(dark.size() == t_ms.size(), "dark trace length differs from time grid");
    const auto &m = fitkit::model("exp_decay");
    fitkit::FitData data;
    data.x = t_ms;
    data.y = signal;
    data.weighting = fitkit::Weighting::poisson;
    auto r = fitkit::fit(m, data, {});
    if (!r.ok()) throw FitFailure("initialization fit ended with status " + std::string(fitkit::to_string(r.status)));
    if (!(r.params[0] > 0)) throw FitFailure("initialization fit returned a negative amplitude");

    InitFitResult out;
    auto &in = out.input;
    in.amplitude_a = r.params[0];
    in.decay_gamma = r.params[1];
    in.offset_c = r.params[2];
    in.sigma_a = r.sigmas[0];
    in.sigma_gamma = r.sigmas[1];
    in.sigma_c = r.sigmas[2];
    in.rho_ac = r.covariance(0, 2) / (r.sigmas[0] * r.sigmas[2]);
    const double n = static_cast<double>(dark.size());
    in.dark_b = pairwise_mean(dark);
    double ss = 0;
    for (double v : dark) ss += (v - in.dark_b) * (v - in.dark_b);
    in.sigma_b = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    // B comes from a separate trace, so it is uncorrelated with the fit. The
    // fully correlated Table II structure cancels sigma_B against sigma_C and
    // under-covers by ~2.4x on Poisson data.
    in.rho_ab = 0.0;
    in.rho_cb = 0.0;
    out.fidelity = init_fidelity(in);
    out.laser_only_level = laser_only.empty() ? 0.0 : pairwise_mean(laser_only);
    out.raw = std::move(r);
    return out;
}

}  // namespace spinlab::pumping
