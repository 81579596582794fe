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

#include "spinlab/pulse.hpp"

#include "spinlab/errors.hpp"

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <numbers>

namespace spinlab::pulse {

namespace {

constexpr double kPi = std::numbers::pi;
using cd = std::complex<double>;

}  // namespace

void PulseSequence::validate() const {
    require(!elements.empty(), "pulse sequence is empty");
    for (const auto &e : elements) {
        if (const auto *p = std::get_if<Pulse>(&e)) {
            require(p->duration_s >= 0 && std::isfinite(p->duration_s), "pulse duration must be >= 0");
            require(std::isfinite(p->rabi_hz) && std::isfinite(p->phase) && std::isfinite(p->detuning_hz),
                    "non-finite pulse parameter");
        } else {
            double d = std::get<Delay>(e).duration_s;
            require(d >= 0 && std::isfinite(d), "delay duration must be >= 0");
        }
    }
}

PulseSequence PulseSequence::inverse() const {
    PulseSequence inv;
    for (auto it = elements.rbegin(); it != elements.rend(); ++it) {
        if (const auto *p = std::get_if<Pulse>(&*it)) {
            inv.elements.push_back(Pulse{p->rabi_hz, p->phase + kPi, p->duration_s, -p->detuning_hz});
        } else {
            // A delay precesses at the global offset only; its inverse needs
            // the negated offset, which the caller supplies.
            inv.elements.push_back(*it);
        }
    }
    return inv;
}

Mat2c element_unitary(double rabi, double phase, double detuning, double t) {
    // H = h . sigma with h = pi (r cos p, r sin p, d).
    const double hx = kPi * rabi * std::cos(phase), hy = kPi * rabi * std::sin(phase), hz = kPi * detuning;
    const double hn = std::sqrt(hx * hx + hy * hy + hz * hz);
    if (hn * t == 0.0) return Mat2c::Identity();
    const double c = std::cos(hn * t), s = std::sin(hn * t) / hn;
    Mat2c u;
    u << cd(c, -s * hz), cd(-s * hy, -s * hx),  //
        cd(s * hy, -s * hx), cd(c, s * hz);
    return u;
}

Propagation propagate(const PulseSequence &seq, double offset) {
    seq.validate();
    require(std::isfinite(offset), "frequency offset must be finite");
    Mat2c U = Mat2c::Identity();
    for (const auto &e : seq.elements) {
        if (const auto *p = std::get_if<Pulse>(&e))
            U = element_unitary(p->rabi_hz, p->phase, p->detuning_hz + offset, p->duration_s) * U;
        else
            U = element_unitary(0.0, 0.0, offset, std::get<Delay>(e).duration_s) * U;
    }
    Propagation out;
    out.unitary = U;
    const cd a = U(0, 0), b = U(1, 0);  // U|0>
    out.bloch = {2 * (std::conj(a) * b).real(), 2 * (std::conj(a) * b).imag(), std::norm(a) - std::norm(b)};
    out.excited_population = std::norm(b);
    return out;
}

double visibility(double s0, double s180) {
    require(std::isfinite(s0) && std::isfinite(s180), "non-finite counts");
    if (s0 + s180 == 0.0) throw InvalidInput("visibility undefined for zero total counts");
    return (s0 - s180) / (s0 + s180);
}

std::vector<std::vector<double>> rabi_chevron(double omega, const std::vector<double> &detunings,
                                              const std::vector<double> &durations) {
    require(!detunings.empty() && !durations.empty(), "chevron grids must be non-empty");
    std::vector<std::vector<double>> out(detunings.size(), std::vector<double>(durations.size()));
    for (std::size_t i = 0; i < detunings.size(); ++i)
        for (std::size_t j = 0; j < durations.size(); ++j) {
            PulseSequence s{{Pulse{omega, 0.0, durations[j], detunings[i]}}};
            out[i][j] = propagate(s).excited_population;
        }
    return out;
}

// ---- OU ----

void OUProcess::validate() const {
    require(coupling_b >= 0 && std::isfinite(coupling_b), "OU coupling must be >= 0");
    require(tau_c > 0 && std::isfinite(tau_c), "OU correlation time must be positive");
}

std::vector<double> ou_path(const OUProcess &p, double dt, std::size_t n, std::uint64_t stream) {
    p.validate();
    require(dt > 0, "OU step must be positive");
    Rng rng = make_rng(p.seed, {0x6F75ULL, stream});
    boost::random::normal_distribution<double> normal;
    const double a = std::exp(-dt / p.tau_c);
    const double s = p.coupling_b * std::sqrt(-std::expm1(-2 * dt / p.tau_c));
    std::vector<double> x(n + 1);
    x[0] = p.coupling_b * normal(rng);
    for (std::size_t k = 0; k < n; ++k) x[k + 1] = x[k] * a + s * normal(rng);
    return x;
}

OUSegmentSampler::OUSegmentSampler(double b, double tau_c) : b_(b), tau_(tau_c) {
    require(b >= 0 && tau_c > 0, "invalid OU parameters");
}

OUSegmentSampler::Moments OUSegmentSampler::moments(double h) const {
    require(h >= 0, "segment length must be >= 0");
    const double e = h / tau_;
    const double a = std::exp(-e);
    const double om = -std::expm1(-e);  // 1 - a
    // S(e) = (2e - 3 + 4a - a^2) / e^3
    double S;
    if (e < 0.5) {
        // sum_{n>=3} (-1)^n (4 - 2^n) e^(n-3) / n!
        S = 0.0;
        double fact = 6.0, pow_e = 1.0, two_n = 8.0;
        for (int n = 3; n < 30; ++n) {
            double term = ((n % 2) ? -1.0 : 1.0) * (4.0 - two_n) * pow_e / fact;
            S += term;
            pow_e *= e;
            fact *= n + 1;
            two_n *= 2;
            if (std::abs(term) < 1e-18 * std::abs(S)) break;
        }
    } else {
        S = (2 * e - 3 + 4 * a - a * a) / (e * e * e);
    }
    const double b2 = b_ * b_;
    Moments m;
    m.mean_x_factor = a;
    m.mean_i_factor = tau_ * om;
    m.var_x = b2 * -std::expm1(-2 * e);
    m.var_i = b2 * tau_ * tau_ * e * e * e * S;
    m.cov = b2 * tau_ * om * om;
    const double r = (e > 0) ? om / e : 1.0;
    m.cond_var_i = std::max(0.0, b2 * tau_ * tau_ * e * e * e * (S - r * r * r / (1 + a)));
    return m;
}

OUSegmentSampler::Draw OUSegmentSampler::sample(double x0, double h, Rng &rng) {
    if (h != cached_h_) {
        cached_ = moments(h);
        cached_h_ = h;
    }
    boost::random::normal_distribution<double> normal;
    const auto &m = cached_;
    const double dx = std::sqrt(m.var_x) * normal(rng);
    const double slope = m.var_x > 0 ? m.cov / m.var_x : 0.0;
    const double x1 = x0 * m.mean_x_factor + dx;
    const double integral = x0 * m.mean_i_factor + slope * dx + std::sqrt(m.cond_var_i) * normal(rng);
    return {x1, integral};
}

namespace {

// Accumulated phase for sign-toggling filter segments starting from a
// stationary value.
double filtered_phase(OUSegmentSampler &sampler, const std::vector<double> &segments, double b, Rng &rng) {
    boost::random::normal_distribution<double> normal;
    double x = b * normal(rng);
    double phi = 0.0, sign = 1.0;
    for (double h : segments) {
        auto d = sampler.sample(x, h, rng);
        phi += sign * d.integral;
        x = d.x_end;
        sign = -sign;
    }
    return phi;
}

CoherenceTrace run_shots(const std::vector<double> &tau_s, const OUProcess &noise, std::size_t shots,
                         std::uint64_t tag, const std::function<std::vector<double>(double)> &segments,
                         const std::function<double(double, double)> &signal) {
    noise.validate();
    require(shots >= 1, "shots must be >= 1");
    for (double t : tau_s) require(t >= 0 && std::isfinite(t), "evolution times must be >= 0");
    const std::size_t n = tau_s.size();
    std::vector<std::vector<double>> segs(n);
    for (std::size_t j = 0; j < n; ++j) segs[j] = segments(tau_s[j]);
    // values[j * shots + s]: written by shot s only.
    std::vector<double> values(n * shots);
    parallel_for(shots, [&](std::size_t s) {
        Rng rng = make_rng(noise.seed, {tag, s});
        OUSegmentSampler sampler(noise.coupling_b, noise.tau_c);
        for (std::size_t j = 0; j < n; ++j)
            values[j * shots + s] = signal(tau_s[j], filtered_phase(sampler, segs[j], noise.coupling_b, rng));
    });
    CoherenceTrace out;
    out.tau_s = tau_s;
    for (std::size_t j = 0; j < n; ++j) {
        std::span<const double> v(values.data() + j * shots, shots);
        double mean = pairwise_mean(v);
        std::vector<double> sq(shots);
        for (std::size_t s = 0; s < shots; ++s) sq[s] = (v[s] - mean) * (v[s] - mean);
        double var = shots > 1 ? pairwise_sum(sq) / static_cast<double>(shots - 1) : 0.0;
        out.visibility.push_back(mean);
        out.stderr_.push_back(std::sqrt(var / static_cast<double>(shots)));
    }
    return out;
}

}  // namespace

CoherenceTrace ramsey_mc(double detuning, const std::vector<double> &tau_s, const OUProcess &noise,
                         std::size_t shots) {
    return run_shots(
        tau_s, noise, shots, 0x52ULL, [](double t) { return std::vector<double>{t}; },
        [detuning](double t, double phi) { return std::cos(2 * kPi * detuning * t + phi); });
}

double ramsey_analytic(double detuning, double tau, double b) {
    return std::exp(-b * b * tau * tau / 2) * std::cos(2 * kPi * detuning * tau);
}

double t2star_from_coupling(double b) {
    require(b > 0, "coupling must be positive");
    return std::sqrt(2.0) / b;
}

CoherenceTrace dynamical_decoupling_mc(int n_pulses, const std::vector<double> &tau_s, const OUProcess &noise,
                                       std::size_t shots) {
    require(n_pulses >= 1, "CPMG needs at least one pulse");
    const auto N = static_cast<std::size_t>(n_pulses);
    auto segments = [N](double T) {
        std::vector<double> s(N + 1, T / static_cast<double>(N));
        s.front() = s.back() = T / static_cast<double>(2 * N);
        return s;
    };
    return run_shots(tau_s, noise, shots, 0x4350ULL + N, segments, [](double, double phi) { return std::cos(phi); });
}

double dd_analytic(int n, double T, double b, double tau_c) {
    require(n >= 1 && tau_c > 0, "invalid decoupling parameters");
    const double N = n;
    return std::exp(-b * b * T * T * T / (12 * N * N * tau_c));
}

double t2_analytic(int n, double b, double tau_c) {
    require(n >= 1 && tau_c > 0 && b > 0, "invalid decoupling parameters");
    const double N = n;
    return std::cbrt(12 * N * N * tau_c / (b * b));
}

BathEstimate bath_from_coherence(double t2star, double t2) {
    require(t2star > 0 && t2 > 0, "coherence times must be positive");
    double b = std::sqrt(2.0) / t2star;
    return {b, b * b * t2 * t2 * t2 / 12};
}

CoherenceModel coherence_model_from_string(const std::string &s) {
    if (s == "gaussian-ramsey" || s == "gaussian_ramsey") return CoherenceModel::gaussian_ramsey;
    if (s == "stretched-exp" || s == "stretched_exp") return CoherenceModel::stretched_exp;
    if (s == "sine-gaussian" || s == "sine_gaussian") return CoherenceModel::sine_gaussian;
    throw InvalidInput("unknown coherence model '" + s + "'");
}

CoherenceResult fit_coherence(const CoherenceTrace &trace, CoherenceModel which) {
    require(trace.tau_s.size() == trace.visibility.size(), "trace lengths differ");
    require(trace.tau_s.size() >= 6, "coherence fit needs at least six points");
    fitkit::FitData data;
    data.x = trace.tau_s;
    data.y = trace.visibility;
    bool have_sigma = trace.stderr_.size() == trace.tau_s.size();
    for (double s : trace.stderr_) have_sigma = have_sigma && s > 0;
    data.weighting = have_sigma ? fitkit::Weighting::sigma : fitkit::Weighting::unit;
    if (have_sigma) data.sigma = trace.stderr_;
    const double tmax = *std::max_element(trace.tau_s.begin(), trace.tau_s.end());

    CoherenceResult out;
    if (which == CoherenceModel::sine_gaussian) {
        const auto &m = fitkit::model("sine_gaussian");
        auto r = fitkit::fit_checked(m, data, {});
        out.amplitude = r.params[0];
        out.sigma_amplitude = r.sigmas[0];
        out.t2 = r.params[1];
        out.sigma_t2 = r.sigmas[1];
        out.stretch_xi = 2.0;
        out.frequency = r.params[2];
        out.raw = std::move(r);
    } else {
        const auto &m = fitkit::model("stretched_exp");
        auto init = m.guess(data.x, data.y);
        fitkit::FitOptions opt;
        if (which == CoherenceModel::gaussian_ramsey) {
            init[2] = 2.0;
            opt.fixed = {false, false, true};
        }
        auto r = fitkit::fit_checked(m, data, init, opt);
        out.amplitude = r.params[0];
        out.sigma_amplitude = r.sigmas[0];
        out.t2 = r.params[1];
        out.sigma_t2 = r.sigmas[1];
        out.stretch_xi = r.params[2];
        out.sigma_xi = r.sigmas[2];
        out.raw = std::move(r);
    }
    if (!(out.t2 < 100 * tmax)) throw FitFailure("coherence decay not resolved by the trace (T2 >> max tau)");
    out.visibility = trace.visibility;
    return out;
}

ScalingFit fit_scaling(const std::vector<std::pair<double, double>> &points) {
    require(points.size() >= 2, "scaling fit needs at least two points");
    std::vector<double> u, v;
    for (auto [n, t2] : points) {
        require(n > 0 && t2 > 0, "pulse numbers and coherence times must be positive");
        u.push_back(std::log(n));
        v.push_back(std::log(t2));
    }
    const double k = static_cast<double>(u.size());
    double mu = 0, mv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) mu += u[i], mv += v[i];
    mu /= k;
    mv /= k;
    double suu = 0, suv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) suu += (u[i] - mu) * (u[i] - mu), suv += (u[i] - mu) * (v[i] - mv);
    if (!(suu > 0)) throw RankDeficiency("scaling fit needs at least two distinct pulse numbers");
    ScalingFit out;
    out.beta = suv / suu;
    out.prefactor = std::exp(mv - out.beta * mu);
    double rss = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double r = v[i] - (mv + out.beta * (u[i] - mu));
        rss += r * r;
    }
    out.sigma_beta = u.size() > 2 ? std::sqrt(rss / (k - 2) / suu) : 0.0;
    return out;
}

// ---- two-tone ----

std::vector<double> two_tone_lineshape(const TwoToneConfig &cfg, const std::vector<double> &detuning) {
    require(cfg.lorentzian_fwhm > 0, "Lorentzian FWHM must be positive");
    require(cfg.omega_rf_mod >= 0 && cfg.omega_mw >= 0 && cfg.f_mod >= 0 && cfg.conversion >= 0,
            "two-tone parameters must be non-negative");
    std::vector<double> out(detuning.size());
    for (std::size_t i = 0; i < detuning.size(); ++i)
        out[i] = fitkit::arcsine_lorentzian(detuning[i], cfg.omega_rf_mod, cfg.lorentzian_fwhm);
    return out;
}

BacCalibration calibrate_bac(const std::vector<PowerSpectrum> &spectra, double reference_dbm, double conversion,
                             double angle_deg) {
    require(spectra.size() >= 3, "calibration needs at least three power points");
    require(conversion > 0, "conversion must be positive");
    BacCalibration out;
    const auto &m = fitkit::model("arcsine_lorentzian");
    std::vector<double> p_dbm, log_om, sig_log;
    for (const auto &s : spectra) {
        fitkit::FitData d;
        d.x = s.detuning_hz;
        d.y = s.signal;
        d.weighting = fitkit::Weighting::unit;
        auto r = fitkit::fit_checked(m, d, {});
        out.omega_rf_hz.push_back(r.params[2]);
        out.sigma_omega_rf_hz.push_back(r.sigmas[2]);
        p_dbm.push_back(s.power_dbm);
        log_om.push_back(std::log10(r.params[2]));
        double rel = r.sigmas[2] / r.params[2];
        sig_log.push_back(std::max(rel / std::log(10.0), 1e-12));
    }
    // Free slope in log10(Omega) vs P.
    fitkit::FitModel line;
    line.name = "log_amplitude";
    line.params = {{"log10_A", fitkit::Bound::none, ""}, {"slope", fitkit::Bound::none, "1/dB"}};
    line.eval = [](auto x, auto p, auto o) {
        for (std::size_t i = 0; i < x.size(); ++i) o[i] = p[0] + p[1] * x[i];
    };
    line.jacobian = [](auto x, auto, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) J(i, 0) = 1.0, J(i, 1) = x[i];
    };
    fitkit::FitData d;
    d.x = p_dbm;
    d.y = log_om;
    d.weighting = fitkit::Weighting::sigma;
    d.sigma = sig_log;
    auto free_fit = fitkit::fit_checked(line, d, {log_om[0], 0.05});
    out.slope_per_db = free_fit.params[1];
    out.sigma_slope = free_fit.sigmas[1];
    if (std::abs(out.slope_per_db - 0.05) > 0.2 * 0.05)
        throw ConsistencyError("RF amplitude does not follow 10^(P/20): fitted slope " +
                               std::to_string(out.slope_per_db) + " per dB");
    fitkit::FitOptions fixed;
    fixed.fixed = {false, true};
    auto law = fitkit::fit_checked(line, d, {log_om[0], 0.05}, fixed);
    out.amplitude_hz = std::pow(10.0, law.params[0]);
    const double omega_ref_mhz = out.amplitude_hz * std::pow(10.0, reference_dbm / 20) * 1e-6;
    out.b_ac_ref_mT = omega_ref_mhz / conversion;
    out.b_ac_perp_mT = out.b_ac_ref_mT * std::sin(angle_deg * kPi / 180);
    return out;
}

double nuclear_rabi(double b_ac, double xi, double gamma_c13) {
    require(b_ac >= 0 && xi >= 0 && gamma_c13 >= 0, "nuclear Rabi inputs must be non-negative");
    return gamma_c13 / 2 * xi * b_ac;
}

}  // namespace spinlab::pulse
