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

#include "spinlab/benchmarking.hpp"

#include "spinlab/errors.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spinlab::benchmarking {

namespace {

constexpr double kPi = std::numbers::pi;
using cd = std::complex<double>;

}  // namespace

const char *gate_name(Gate g) {
    switch (g) {
        case Gate::I: return "I";
        case Gate::Xp: return "+X";
        case Gate::Xm: return "-X";
        case Gate::Yp: return "+Y";
        case Gate::Ym: return "-Y";
        case Gate::X2p: return "+X2";
        case Gate::X2m: return "-X2";
        case Gate::Y2p: return "+Y2";
        case Gate::Y2m: return "-Y2";
    }
    return "?";
}

Gate gate_from_name(const std::string &s) {
    for (Gate g : kGates)
        if (s == gate_name(g)) return g;
    throw InvalidInput("unknown gate '" + s + "'");
}

AxisAngle axis_angle(Gate g) {
    switch (g) {
        case Gate::I: return {'0', 0.0};
        case Gate::Xp: return {'x', kPi / 2};
        case Gate::Xm: return {'x', -kPi / 2};
        case Gate::Yp: return {'y', kPi / 2};
        case Gate::Ym: return {'y', -kPi / 2};
        case Gate::X2p: return {'x', kPi};
        case Gate::X2m: return {'x', -kPi};
        case Gate::Y2p: return {'y', kPi};
        case Gate::Y2m: return {'y', -kPi};
    }
    return {'0', 0.0};
}

Mat2c rotation(char axis, double angle) {
    const double c = std::cos(angle / 2), s = std::sin(angle / 2);
    Mat2c u;
    switch (axis) {
        case 'x': u << c, cd(0, -s), cd(0, -s), c; break;
        case 'y': u << c, -s, s, c; break;
        case 'z': u << cd(c, -s), 0, 0, cd(c, s); break;
        default: u = Mat2c::Identity(); break;
    }
    return u;
}

Mat2c gate_unitary(Gate g) {
    auto aa = axis_angle(g);
    return rotation(aa.axis, aa.angle);
}

Mat2c compose(const std::vector<Gate> &seq) {
    Mat2c U = Mat2c::Identity();
    for (Gate g : seq) U = gate_unitary(g) * U;
    return U;
}

std::vector<Gate> random_sequence(std::size_t n, Rng &rng) {
    boost::random::uniform_int_distribution<int> pick(0, 8);
    std::vector<Gate> seq(n);
    for (auto &g : seq) g = kGates[static_cast<std::size_t>(pick(rng))];
    return seq;
}

std::vector<Gate> random_sequence(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed, {0x5253ULL});
    return random_sequence(n, rng);
}

namespace {

Eigen::Vector3d bloch_of(const Mat2c &U) {
    const cd a = U(0, 0), b = U(1, 0);
    return {2 * (std::conj(a) * b).real(), 2 * (std::conj(a) * b).imag(), std::norm(a) - std::norm(b)};
}

}  // namespace

Gate inverse_gate(const std::vector<Gate> &seq) {
    const Mat2c U = compose(seq);
    const Eigen::Vector3d r = bloch_of(U);
    for (int k = 0; k < 3; ++k) {
        double v = r[k];
        if (!(std::abs(v) < 1e-6 || std::abs(std::abs(v) - 1) < 1e-6))
            throw ConsistencyError("sequence left the cardinal states (Bloch component " + std::to_string(v) + ")");
    }
    for (Gate g : kGates) {
        const double z = bloch_of(gate_unitary(g) * U)[2];
        if (z > 1 - 1e-6) return g;
    }
    throw ConsistencyError("no primitive gate returns the state to |0>");
}

Mat2c complementary_unitary(Gate inverse) {
    auto aa = axis_angle(inverse);
    if (aa.axis == '0') return rotation('x', kPi);
    return rotation(aa.axis, aa.angle + kPi);
}

ErrorKind error_kind_from_string(const std::string &s) {
    if (s == "none") return ErrorKind::none;
    if (s == "depolarizing") return ErrorKind::depolarizing;
    if (s == "ou_dephasing" || s == "ou-dephasing") return ErrorKind::ou_dephasing;
    throw InvalidInput("unknown RB error model '" + s + "'");
}

const char *to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::none: return "none";
        case ErrorKind::depolarizing: return "depolarizing";
        case ErrorKind::ou_dephasing: return "ou_dephasing";
    }
    return "?";
}

void RBConfig::validate() const {
    require(!sequence_lengths.empty(), "RB needs at least one sequence length");
    for (int n : sequence_lengths) require(n >= 0, "sequence lengths must be >= 0");
    require(realizations >= 1, "realizations must be >= 1");
    require(shots >= 1, "shots must be >= 1");
    if (error.kind == ErrorKind::depolarizing)
        require(error.depolarizing_p >= 0 && error.depolarizing_p <= 1, "depolarizing p must lie in [0, 1]");
    if (error.kind == ErrorKind::ou_dephasing) {
        error.ou.validate();
        require(error.t_pi_s >= 0 && error.t_pi2_s >= 0, "gate durations must be >= 0");
    }
}

double f_primitive_from_p(double p) { return 1 - (1 - p) / 2; }
double f_clifford_from_primitive(double f) { return 1 - kPrimitivesPerClifford * (1 - f); }

namespace {

// The identity idles for the X^2 duration.
double gate_duration(Gate g, const ErrorModel &err) {
    auto aa = axis_angle(g);
    return (aa.axis == '0' || std::abs(aa.angle) > kPi / 2) ? err.t_pi_s : err.t_pi2_s;
}

}  // namespace

double survival(const std::vector<Gate> &seq, const Mat2c &final_gate, const ErrorModel &err, Rng &rng) {
    switch (err.kind) {
        case ErrorKind::none: {
            Mat2c U = final_gate * compose(seq);
            return std::norm(U(0, 0));
        }
        case ErrorKind::depolarizing: {
            // Bloch vector: rotate, then contract by (1 - p), per gate.
            const double keep = 1 - err.depolarizing_p;
            Mat2c rho;
            rho << 1, 0, 0, 0;
            auto apply = [&](const Mat2c &U) {
                rho = U * rho * U.adjoint();
                rho = keep * rho + (1 - keep) * 0.5 * Mat2c::Identity();
            };
            for (Gate g : seq) apply(gate_unitary(g));
            apply(final_gate);
            return rho(0, 0).real();
        }
        case ErrorKind::ou_dephasing: {
            // Ideal rotation followed by the phase accumulated over the gate.
            pulse::OUSegmentSampler sampler(err.ou.coupling_b, err.ou.tau_c);
            boost::random::normal_distribution<double> normal;
            double x = err.ou.coupling_b * normal(rng);
            Mat2c U = Mat2c::Identity();
            auto step = [&](const Mat2c &G, double t) {
                auto d = sampler.sample(x, t, rng);
                x = d.x_end;
                U = rotation('z', d.integral) * G * U;
            };
            for (Gate g : seq) step(gate_unitary(g), gate_duration(g, err));
            step(final_gate, err.t_pi2_s);
            return std::norm(U(0, 0));
        }
    }
    return 0.0;
}

double realization_visibility(const std::vector<Gate> &seq, const ErrorModel &err, int shots, Rng &rng) {
    const Gate inv = inverse_gate(seq);
    const Mat2c finals[2] = {gate_unitary(inv), complementary_unitary(inv)};
    double frac[2];
    for (int v = 0; v < 2; ++v) {
        if (err.kind == ErrorKind::ou_dephasing) {
            // Noise differs shot to shot: one Bernoulli draw per shot.
            int ok = 0;
            for (int s = 0; s < shots; ++s) {
                double p0 = std::clamp(survival(seq, finals[v], err, rng), 0.0, 1.0);
                boost::random::bernoulli_distribution<double> b(p0);
                ok += b(rng) ? 1 : 0;
            }
            frac[v] = static_cast<double>(ok) / shots;
        } else {
            double p0 = std::clamp(survival(seq, finals[v], err, rng), 0.0, 1.0);
            boost::random::binomial_distribution<int, double> b(shots, p0);
            frac[v] = static_cast<double>(b(rng)) / shots;
        }
    }
    return frac[0] - frac[1];
}

RBFit fit_rb_decay(const std::vector<double> &n, const std::vector<double> &v, const std::vector<double> &sigma) {
    require(n.size() == v.size(), "length and visibility arrays differ");
    std::vector<double> distinct(n);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3)
        throw RankDeficiency("RB decay fit needs at least three distinct sequence lengths for A, P and uncertainties");
    fitkit::FitData d;
    d.x = n;
    d.y = v;
    bool use_sigma = sigma.size() == n.size();
    for (double s : sigma) use_sigma = use_sigma && s > 0;
    d.weighting = use_sigma ? fitkit::Weighting::sigma : fitkit::Weighting::unit;
    if (use_sigma) d.sigma = sigma;
    auto r = fitkit::fit_checked(fitkit::model("rb_decay"), d, {});
    double inflate = 1.0;
    if (use_sigma) {
        // Sigmas are sample estimates: apply the Birge ratio when the scatter
        // exceeds them.
        const double dof = static_cast<double>(n.size()) - 2.0;
        if (dof > 0) inflate = std::sqrt(std::max(1.0, r.chi2 / dof));
    }
    return {r.params[0], r.sigmas[0] * inflate, r.params[1], r.sigmas[1] * inflate, std::move(r)};
}

RBResult run_rb(const RBConfig &cfg) {
    cfg.validate();
    const std::size_t L = cfg.sequence_lengths.size();
    const std::size_t R = static_cast<std::size_t>(cfg.realizations);
    std::vector<double> vis(L * R);
    parallel_for(L * R, [&](std::size_t task) {
        const std::size_t li = task / R, ri = task % R;
        const auto n = static_cast<std::uint64_t>(cfg.sequence_lengths[li]);
        Rng rng = make_rng(cfg.seed, {n, ri});
        auto seq = random_sequence(static_cast<std::size_t>(n), rng);
        vis[task] = realization_visibility(seq, cfg.error, cfg.shots, rng);
    });
    RBResult out;
    std::vector<double> xs, ys, ss;
    for (std::size_t li = 0; li < L; ++li) {
        std::span<const double> v(vis.data() + li * R, R);
        double mean = pairwise_mean(v);
        std::vector<double> sq(R);
        for (std::size_t r = 0; r < R; ++r) sq[r] = (v[r] - mean) * (v[r] - mean);
        double se = R > 1 ? std::sqrt(pairwise_sum(sq) / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
        out.lengths.push_back(cfg.sequence_lengths[li]);
        out.mean_visibility.push_back(mean);
        out.stderr_.push_back(se);
        xs.push_back(cfg.sequence_lengths[li]);
        ys.push_back(mean);
        // 1/s^2 from R samples overestimates 1/sigma^2 by (R-1)/(R-3) on
        // average; undo that before using it as a fit weight.
        ss.push_back(R > 3 ? se * std::sqrt(double(R - 1) / double(R - 3)) : se);
    }
    auto f = fit_rb_decay(xs, ys, ss);
    out.a = f.a;
    out.sigma_a = f.sigma_a;
    out.p = f.p;
    out.sigma_p = f.sigma_p;
    out.f_primitive = f_primitive_from_p(f.p);
    out.sigma_f_primitive = f.sigma_p / 2;
    out.f_clifford = f_clifford_from_primitive(out.f_primitive);
    out.sigma_f_clifford = kPrimitivesPerClifford * out.sigma_f_primitive;
    return out;
}

}  // namespace spinlab::benchmarking
