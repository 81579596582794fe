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
#include "spinlab/expcli.hpp"
#include "spinlab/fitkit.hpp"
#include "spinlab/levels.hpp"
#include "spinlab/parallel.hpp"
#include "spinlab/pulse.hpp"
#include "spinlab/pumping.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace spinlab::expcli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Typed view of the effective parameter block.
struct Params {
    json j;
    double d(const char *k) const { return j.at(k).get<double>(); }
    int i(const char *k) const { return j.at(k).get<int>(); }
    bool b(const char *k) const { return j.at(k).get<bool>(); }
    std::string s(const char *k) const { return j.at(k).get<std::string>(); }
    std::vector<double> v(const char *k) const { return j.at(k).get<std::vector<double>>(); }
    std::vector<int> vi(const char *k) const { return j.at(k).get<std::vector<int>>(); }
};

std::vector<double> linspace(double a, double b, int n) {
    require(n >= 2, "grids need at least two points");
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = a + (b - a) * k / (n - 1);
    return out;
}

json fit_json(const fitkit::FitResult &r) {
    json p = json::object(), s = json::object();
    for (std::size_t k = 0; k < r.names.size(); ++k) {
        p[r.names[k]] = r.params[k];
        s[r.names[k]] = r.sigmas[k];
    }
    return {{"params", p},        {"sigmas", s},         {"chi2", r.chi2},
            {"reduced_chi2", r.reduced_chi2}, {"dof", r.dof}, {"iterations", r.iterations},
            {"status", fitkit::to_string(r.status)}};
}

std::uint64_t seed_of(const ExperimentConfig &c) { return c.seed.value_or(0); }

// ---------------------------------------------------------------- levels

ExperimentOutput run_levels(const ExperimentConfig &cfg, const Params &p, const Calibration &cal) {
    using namespace levels;
    ExperimentOutput out;
    const auto &fine = cal.fine;
    HyperfineParams hf = cal.hyperfine;
    if (p.b("refit_hyperfine")) {
        const auto targets = calibration_targets();
        auto fit = fit_hyperfine(fine, targets, hf);
        hf = fit.params;
        json res = json::array();
        for (std::size_t k = 0; k < targets.size(); ++k)
            res.push_back({{"transition", targets[k].transition},
                           {"field_mT", targets[k].field.magnitude()},
                           {"target", targets[k].value},
                           {"residual", fit.residuals[k]}});
        out.results["hyperfine_fit"] = {{"a_par_MHz", hf.a_par},
                                        {"a_perp_MHz", hf.a_perp},
                                        {"sigma_a_par_MHz", fit.sigma_a_par},
                                        {"sigma_a_perp_MHz", fit.sigma_a_perp},
                                        {"targets", res}};
    }
    out.results["hyperfine"] = {{"a_par_MHz", hf.a_par},
                                {"a_perp_MHz", hf.a_perp},
                                {"a_contact_MHz", hf.a_contact()},
                                {"polar_angle_deg", hf.polar_angle * 180 / std::numbers::pi}};

    const Vec3 ac = direction_at(p.d("ac_angle_deg"));
    auto xi_at = [&](const FieldVector &f) {
        if (f.magnitude() == 0) return kNaN;
        return rabi_enhancement(fine, hf, f, ac);
    };
    Table t{"levels", experiment_doc("levels").csv_columns, {}};
    for (double bz : p.v("b_parallel_mT")) {
        FieldVector f{bz, p.d("b_perp_mT"), 0.0};
        auto el = electron_levels(fine, f).transitions;
        auto hl = hyperfine_levels(fine, hf, f).transitions;
        t.rows.push_back({bz, f.b_perp, el["qubit"], el["es_qubit"], el["A1_B2"], hl["RF1"], hl["RF2"], hl["MW1"],
                          hl["MW2"], hl["MW_splitting"], xi_at(f)});
    }
    out.tables.push_back(std::move(t));

    const double op = p.d("operating_field_mT");
    out.results["operating_field_mT"] = op;
    out.results["qubit_GHz"] = electron_levels(fine, FieldVector::axial(op)).transitions["qubit"];
    out.results["gamma_MHz_per_mT"] =
        gyromagnetic_ratio(fine, direction_at(p.d("gyro_angle_deg")), FieldVector::axial(op));
    for (double b : {60.0, 106.0}) {
        auto hl = hyperfine_levels(fine, hf, FieldVector::axial(b)).transitions;
        const std::string tag = std::to_string(static_cast<int>(b)) + "mT";
        out.results["RF1_MHz_" + tag] = hl["RF1"];
        out.results["RF2_MHz_" + tag] = hl["RF2"];
        out.results["MW_splitting_MHz_" + tag] = hl["MW_splitting"];
        out.results["xi_" + tag] = xi_at(FieldVector::axial(b));
    }

    if (p.b("strain_fit")) {
        FineStructureParams truth = fine;
        truth.upsilon_gs = p.d("strain_upsilon_gs_GHz");
        truth.upsilon_es = p.d("strain_upsilon_es_GHz");
        std::vector<Observation> obs;
        for (double bz : {0.0, 50.0, 100.0, 150.0, 200.0})
            for (double bx : {0.0, 100.0})
                for (const char *tr : {"A1_B2", "qubit"}) {
                    Observation o{FieldVector{bz, bx, 0.0}, tr, 0.0};
                    o.value = observable(truth, o);
                    obs.push_back(o);
                }
        auto fit = fit_strain(obs, fine);
        out.results["strain_fit"] = {{"upsilon_gs_GHz", fit.params.upsilon_gs},
                                     {"upsilon_es_GHz", fit.params.upsilon_es},
                                     {"sigma_upsilon_gs_GHz", fit.sigma_upsilon_gs},
                                     {"sigma_upsilon_es_GHz", fit.sigma_upsilon_es},
                                     {"true_upsilon_gs_GHz", truth.upsilon_gs},
                                     {"true_upsilon_es_GHz", truth.upsilon_es}};
    }
    (void)cfg;
    return out;
}

// ---------------------------------------------------------------- init

std::vector<double> poisson_draw(const std::vector<double> &mean, Rng &rng) {
    std::vector<double> out(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k) {
        boost::random::poisson_distribution<long long, double> d(std::max(mean[k], 1e-300));
        out[k] = static_cast<double>(d(rng));
    }
    return out;
}

pumping::ThreeLevelParams three_level_from(const Params &p) {
    pumping::ThreeLevelParams t;
    t.gamma = p.d("gamma_per_us");
    t.omega = pumping::power_to_rabi(p.d("power_nW"), p.d("p_sat_nW"), t.gamma);
    t.delta = p.d("detuning_per_us");
    t.cyclicity_e = p.d("cyclicity_e");
    t.validate();
    return t;
}

ExperimentOutput run_init(const ExperimentConfig &cfg, const Params &p) {
    using namespace pumping;
    ExperimentOutput out;
    const auto mode = p.s("mode");
    const bool noisy = p.b("poisson_noise");
    Rng rng = make_rng(seed_of(cfg), {0x494e4954});
    const auto t = linspace(0.0, p.d("t_max_ms"), p.i("n_points"));
    out.results["mode"] = mode;

    if (mode == "nuclear") {
        const double A = p.d("amplitude_counts"), g = p.d("decay_per_ms"), C = p.d("offset_counts"),
                     B = p.d("dark_counts");
        std::vector<double> sig(t.size()), laser(t.size(), A + C), dark(t.size(), B);
        for (std::size_t k = 0; k < t.size(); ++k) sig[k] = A * std::exp(-g * t[k]) + C;
        if (noisy) {
            sig = poisson_draw(sig, rng);
            laser = poisson_draw(laser, rng);
            const double reps = p.i("dark_repetitions");
            require(reps >= 1, "dark_repetitions must be >= 1");
            for (double &v : dark) v *= reps;
            dark = poisson_draw(dark, rng);
            for (double &v : dark) v /= reps;
        }
        auto r = fit_initialization(t, sig, laser, dark);
        const auto fitted = fitkit::model("exp_decay").evaluate(t, r.raw.params);
        Table tab{"init", {"time_ms", "counts", "fit", "laser_only", "dark"}, {}};
        for (std::size_t k = 0; k < t.size(); ++k) tab.rows.push_back({t[k], sig[k], fitted[k], laser[k], dark[k]});
        out.tables.push_back(std::move(tab));
        const auto &in = r.input;
        InitFitInput uncorrected = in;
        uncorrected.dark_b = 0, uncorrected.sigma_b = 0;
        out.results["fit"] = fit_json(r.raw);
        out.results["dark_B"] = in.dark_b;
        out.results["sigma_dark_B"] = in.sigma_b;
        out.results["rho_AC"] = in.rho_ac;
        out.results["fidelity"] = r.fidelity.f;
        out.results["sigma_fidelity"] = r.fidelity.sigma_f;
        out.results["sigma_fidelity_direct"] = r.fidelity.sigma_f_direct;
        out.results["fidelity_uncorrected"] = init_fidelity(uncorrected).f;
        const auto ref = init_fidelity(InitFitInput::table2());
        InitFitInput ref_unc = InitFitInput::table2();
        ref_unc.dark_b = 0, ref_unc.sigma_b = 0;
        out.results["reference_inputs"] = {{"fidelity", ref.f},
                                           {"sigma_fidelity", ref.sigma_f},
                                           {"fidelity_uncorrected", init_fidelity(ref_unc).f}};
    } else if (mode == "cyclicity") {
        const auto known = three_level_from(p);
        auto tr = three_level_trace(known, t);
        const double fmax = *std::max_element(tr.fluorescence.begin(), tr.fluorescence.end());
        require(fmax > 0, "pumping trace has no fluorescence");
        const double scale = p.d("peak_counts") / fmax;
        std::vector<double> mean(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) mean[k] = scale * tr.fluorescence[k];
        auto counts = noisy ? poisson_draw(mean, rng) : mean;
        Table tab{"init", {"time_ms", "counts", "model"}, {}};
        for (std::size_t k = 0; k < t.size(); ++k) tab.rows.push_back({t[k], counts[k], mean[k]});
        out.tables.push_back(std::move(tab));
        out.results["pump_rate_per_us"] = known.w();
        json refits = json::array();
        for (double delta : p.v("refit_detunings_per_us")) {
            auto k2 = known;
            k2.delta = delta;
            auto f = fit_cyclicity(t, counts, k2);
            refits.push_back({{"detuning_per_us", delta}, {"cyclicity_e", f.cyclicity_e}, {"sigma", f.sigma}});
        }
        out.results["refits"] = refits;
    } else if (mode == "saturation") {
        const auto pw = p.v("powers_nW");
        const double isat = p.d("peak_counts"), psat = p.d("p_sat_nW"), bg = p.d("background_per_nW"),
                     c0 = p.d("offset_counts");
        std::vector<double> mean(pw.size());
        for (std::size_t k = 0; k < pw.size(); ++k) mean[k] = isat * pw[k] / (pw[k] + psat) + bg * pw[k] + c0;
        auto counts = noisy ? poisson_draw(mean, rng) : mean;
        auto f = fit_saturation(pw, counts);
        const auto fitted = fitkit::model("saturation").evaluate(pw, f.raw.params);
        Table tab{"init", {"power_nW", "counts", "fit"}, {}};
        for (std::size_t k = 0; k < pw.size(); ++k) tab.rows.push_back({pw[k], counts[k], fitted[k]});
        out.tables.push_back(std::move(tab));
        out.results["fit"] = fit_json(f.raw);
        out.results["p_sat_nW"] = f.params.p_sat;
        out.results["sigma_p_sat_nW"] = f.sigmas.p_sat;
    } else {
        SixLevelParams sp;
        sp.three_level = three_level_from(p);
        sp.cyclicity_n = p.d("cyclicity_n");
        sp.omega_mw_ref = p.d("omega_mw_ref_MHz");
        sp.mw_attenuation_db = p.d("mw_attenuation_dB");
        sp.gamma_e_spin = p.d("gamma_e_spin_per_us");
        sp.delta_mw = p.d("delta_mw_per_us");
        sp.validate();
        std::array<double, 6> init{};
        const auto s = p.s("initial_state");
        if (s == "mixed") {
            init = {0.25, 0.25, 0.25, 0.25, 0, 0};
        } else {
            require(s.size() == 2 && s[0] == 'g' && s[1] >= '0' && s[1] <= '3',
                    "initial_state must be mixed or g0..g3");
            init[s[1] - '0'] = 1.0;
        }
        auto tr = six_level_trace(sp, init, t);
        Table tab{"init", {"time_ms", "g0", "g1", "g2", "g3", "e0", "e1", "fluorescence"}, {}};
        for (std::size_t k = 0; k < t.size(); ++k) {
            const auto &q = tr.populations[k];
            tab.rows.push_back({t[k], q[0], q[1], q[2], q[3], q[4], q[5], tr.fluorescence[k]});
        }
        out.tables.push_back(std::move(tab));
        const auto ss = six_level_steady_state(sp);
        out.results["steady_state"] = std::vector<double>(ss.begin(), ss.end());
        out.results["mw_rate_per_us"] = sp.mw_rate();
        out.results["time_to_99pct_ms"] = ss[2] > 0.99 ? initialization_time(sp, init, 0.99) : kNaN;
    }
    return out;
}

// ---------------------------------------------------------------- rabi / chevron

ExperimentOutput run_rabi(const Params &p) {
    ExperimentOutput out;
    const double om = p.d("rabi_Hz"), det = p.d("detuning_Hz");
    require(om > 0, "rabi_Hz must be positive");
    const auto t = linspace(0.0, p.d("t_max_s"), p.i("n_points"));
    std::vector<double> pop(t.size());
    for (std::size_t k = 0; k < t.size(); ++k)
        pop[k] = pulse::propagate({{pulse::Pulse{om, 0.0, t[k], det}}}).excited_population;
    Table tab{"rabi", {"duration_s", "excited_population"}, {}};
    for (std::size_t k = 0; k < t.size(); ++k) tab.rows.push_back({t[k], pop[k]});
    out.tables.push_back(std::move(tab));

    // Undamped oscillation: sine-Gaussian with the envelope pinned far outside the window.
    const auto &m = fitkit::model("sine_gaussian");
    auto init = m.guess(t, pop);
    init[1] = 1e6 * t.back();
    fitkit::FitData d{t, pop, fitkit::Weighting::unit, {}, {}};
    fitkit::FitOptions opt;
    opt.fixed = {false, true, false, false, false};
    auto r = fitkit::fit_checked(m, d, init, opt);
    out.results["fit"] = fit_json(r);
    out.results["generalized_rabi_Hz"] = r.value("f");
    out.results["sigma_generalized_rabi_Hz"] = r.sigma("f");
    out.results["closed_form_Hz"] = std::hypot(om, det);
    out.results["contrast"] = om * om / (om * om + det * det);
    return out;
}

ExperimentOutput run_chevron(const Params &p) {
    ExperimentOutput out;
    const double om = p.d("rabi_Hz");
    const auto det = linspace(p.d("detuning_min_Hz"), p.d("detuning_max_Hz"), p.i("n_detunings"));
    const auto dur = linspace(0.0, p.d("t_max_s"), p.i("n_durations"));
    auto map = pulse::rabi_chevron(om, det, dur);
    Table tab{"chevron", {"detuning_Hz", "duration_s", "excited_population"}, {}};
    double peak = 0;
    for (std::size_t a = 0; a < det.size(); ++a)
        for (std::size_t b = 0; b < dur.size(); ++b) {
            tab.rows.push_back({det[a], dur[b], map[a][b]});
            peak = std::max(peak, map[a][b]);
        }
    out.tables.push_back(std::move(tab));
    out.results["pi_time_s"] = 1.0 / (2 * om);
    out.results["max_population"] = peak;
    return out;
}

// ---------------------------------------------------------------- coherence

pulse::OUProcess bath_from(const Params &p, std::uint64_t seed) {
    pulse::OUProcess o{p.d("b_rad_per_s"), p.d("tau_c_s"), seed};
    o.validate();
    return o;
}

ExperimentOutput run_ramsey(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    const bool mc = p.s("method") == "mc";
    const auto tau = linspace(0.0, p.d("tau_max_s"), p.i("n_tau"));
    const auto dets = p.v("detunings_Hz");
    require(!dets.empty(), "detunings_Hz is empty");
    const double b = p.d("b_rad_per_s");
    Table tab{"ramsey", {"detuning_Hz", "tau_s", "visibility", "stderr", "analytic"}, {}};
    json rows = json::array();
    std::vector<double> t2s;
    for (std::size_t r = 0; r < dets.size(); ++r) {
        pulse::CoherenceTrace tr;
        if (mc) {
            tr = pulse::ramsey_mc(dets[r], tau, bath_from(p, stream_seed(seed_of(cfg), {r})),
                                  static_cast<std::size_t>(p.i("shots")));
        } else {
            bath_from(p, 0);
            tr.tau_s = tau;
            for (double x : tau) tr.visibility.push_back(pulse::ramsey_analytic(dets[r], x, b));
            tr.stderr_.assign(tau.size(), 0.0);
        }
        for (std::size_t k = 0; k < tau.size(); ++k)
            tab.rows.push_back({dets[r], tau[k], tr.visibility[k], tr.stderr_[k], pulse::ramsey_analytic(dets[r], tau[k], b)});
        auto f = pulse::fit_coherence(tr, pulse::CoherenceModel::sine_gaussian);
        t2s.push_back(f.t2);
        rows.push_back({{"detuning_Hz", dets[r]},
                        {"frequency_Hz", f.frequency},
                        {"t2star_s", f.t2},
                        {"sigma_t2star_s", f.sigma_t2},
                        {"amplitude", f.amplitude}});
    }
    out.tables.push_back(std::move(tab));
    out.results["fits"] = rows;
    out.results["mean_t2star_s"] = pairwise_mean(t2s);
    out.results["analytic_t2star_s"] = pulse::t2star_from_coupling(b);
    return out;
}

pulse::CoherenceTrace dd_trace(const Params &p, int n, const std::vector<double> &tau, std::uint64_t seed, bool mc) {
    if (mc)
        return pulse::dynamical_decoupling_mc(n, tau, bath_from(p, seed), static_cast<std::size_t>(p.i("shots")));
    bath_from(p, 0);
    pulse::CoherenceTrace tr;
    tr.tau_s = tau;
    for (double x : tau) tr.visibility.push_back(pulse::dd_analytic(n, x, p.d("b_rad_per_s"), p.d("tau_c_s")));
    tr.stderr_.assign(tau.size(), 0.0);
    return tr;
}

ExperimentOutput run_echo(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    const bool mc = p.s("method") == "mc";
    const double b = p.d("b_rad_per_s"), tc = p.d("tau_c_s");
    const auto tau = linspace(0.0, p.d("tau_max_s"), p.i("n_tau"));
    auto tr = dd_trace(p, 1, tau, stream_seed(seed_of(cfg), {1}), mc);
    Table tab{"echo", {"tau_s", "visibility", "stderr", "analytic"}, {}};
    for (std::size_t k = 0; k < tau.size(); ++k)
        tab.rows.push_back({tau[k], tr.visibility[k], tr.stderr_[k], pulse::dd_analytic(1, tau[k], b, tc)});
    out.tables.push_back(std::move(tab));
    auto f = pulse::fit_coherence(tr, pulse::CoherenceModel::stretched_exp);
    out.results["t2_s"] = f.t2;
    out.results["sigma_t2_s"] = f.sigma_t2;
    out.results["stretch_xi"] = f.stretch_xi;
    out.results["sigma_stretch_xi"] = f.sigma_xi;
    out.results["analytic_t2_s"] = pulse::t2_analytic(1, b, tc);
    auto bath = pulse::bath_from_coherence(p.d("t2star_ref_s"), p.d("t2_ref_s"));
    out.results["bath_estimate"] = {{"b_rad_per_s", bath.coupling_b}, {"tau_c_s", bath.tau_c}};
    return out;
}

ExperimentOutput run_cpmg(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    const bool mc = p.s("method") == "mc";
    const double b = p.d("b_rad_per_s"), tc = p.d("tau_c_s");
    const auto ns = p.vi("pulses");
    require(!ns.empty(), "pulses is empty");
    Table tab{"cpmg", {"n_pulses", "tau_s", "visibility", "stderr", "analytic"}, {}};
    json fits = json::array(), t2map = json::object();
    std::vector<std::pair<double, double>> fitted, analytic;
    std::vector<double> xis;
    for (int n : ns) {
        require(n >= 1, "pulse numbers must be >= 1");
        const double t2a = pulse::t2_analytic(n, b, tc);
        const auto tau = linspace(0.0, p.d("tau_max_factor") * t2a, p.i("n_tau"));
        auto tr = dd_trace(p, n, tau, stream_seed(seed_of(cfg), {static_cast<std::uint64_t>(n)}), mc);
        for (std::size_t k = 0; k < tau.size(); ++k)
            tab.rows.push_back({static_cast<double>(n), tau[k], tr.visibility[k], tr.stderr_[k],
                                pulse::dd_analytic(n, tau[k], b, tc)});
        auto f = pulse::fit_coherence(tr, pulse::CoherenceModel::stretched_exp);
        fits.push_back({{"n_pulses", n},
                        {"t2_s", f.t2},
                        {"sigma_t2_s", f.sigma_t2},
                        {"stretch_xi", f.stretch_xi},
                        {"sigma_stretch_xi", f.sigma_xi},
                        {"analytic_t2_s", t2a}});
        t2map[std::to_string(n)] = f.t2;
        fitted.emplace_back(n, f.t2);
        analytic.emplace_back(n, t2a);
        xis.push_back(f.stretch_xi);
    }
    out.tables.push_back(std::move(tab));
    out.results["fits"] = fits;
    out.results["t2_s"] = t2map;
    out.results["mean_stretch_xi"] = pairwise_mean(xis);
    if (ns.size() >= 2) {
        auto sf = pulse::fit_scaling(fitted);
        auto sa = pulse::fit_scaling(analytic);
        out.results["scaling"] = {{"beta", sf.beta}, {"sigma_beta", sf.sigma_beta}, {"prefactor_s", sf.prefactor},
                                  {"analytic_beta", sa.beta}};
    }
    return out;
}

// ---------------------------------------------------------------- rb

ExperimentOutput run_rb(const ExperimentConfig &cfg, const Params &p) {
    using namespace benchmarking;
    ExperimentOutput out;
    RBConfig rc;
    rc.sequence_lengths = p.vi("sequence_lengths");
    rc.realizations = p.i("realizations");
    rc.shots = p.i("shots");
    rc.seed = seed_of(cfg);
    rc.error.kind = error_kind_from_string(p.s("error_model"));
    rc.error.depolarizing_p = p.d("depolarizing_p");
    rc.error.ou = bath_from(p, rc.seed);
    rc.error.t_pi_s = p.d("t_pi_s");
    rc.error.t_pi2_s = p.d("t_pi_s") / 2;
    rc.validate();
    auto r = run_rb(rc);
    Table tab{"rb", {"length", "mean_visibility", "stderr"}, {}};
    for (std::size_t k = 0; k < r.lengths.size(); ++k)
        tab.rows.push_back({static_cast<double>(r.lengths[k]), r.mean_visibility[k], r.stderr_[k]});
    out.tables.push_back(std::move(tab));
    out.results = {{"A", r.a},
                   {"sigma_A", r.sigma_a},
                   {"P", r.p},
                   {"sigma_P", r.sigma_p},
                   {"f_primitive", r.f_primitive},
                   {"sigma_f_primitive", r.sigma_f_primitive},
                   {"f_clifford", r.f_clifford},
                   {"sigma_f_clifford", r.sigma_f_clifford},
                   {"error_model", to_string(rc.error.kind)}};
    return out;
}

// ---------------------------------------------------------------- two-tone

std::vector<pulse::PowerSpectrum> synth_spectra(const ExperimentConfig &cfg, const Params &p) {
    const auto powers = p.v("powers_dbm");
    require(!powers.empty(), "powers_dbm is empty");
    const double conv = p.d("conversion_MHz_per_mT"), bref = p.d("b_ac_ref_mT"), ref = p.d("reference_dbm");
    require(bref > 0 && conv > 0, "b_ac_ref_mT and conversion must be positive");
    double pmax = powers[0];
    for (double x : powers) pmax = std::max(pmax, x);
    const double om_max = conv * 1e6 * bref * std::pow(10.0, (pmax - ref) / 20);
    const double half = p.d("span_factor") * (om_max + p.d("fwhm_Hz"));
    const auto det = linspace(-half, half, p.i("n_points"));
    std::vector<pulse::PowerSpectrum> out;
    for (std::size_t k = 0; k < powers.size(); ++k) {
        pulse::TwoToneConfig tc;
        tc.omega_mw = p.d("omega_mw_Hz");
        tc.f_mod = p.d("f_mod_Hz");
        tc.lorentzian_fwhm = p.d("fwhm_Hz");
        tc.conversion = conv;
        tc.omega_rf_mod = conv * 1e6 * bref * std::pow(10.0, (powers[k] - ref) / 20);
        auto s = pulse::two_tone_lineshape(tc, det);
        double peak = 0;
        for (double v : s) peak = std::max(peak, v);
        for (double &v : s) v /= peak;
        if (p.d("noise_rel") > 0) {
            Rng rng = make_rng(seed_of(cfg), {0x5454, k});
            boost::random::normal_distribution<double> nd(0.0, p.d("noise_rel"));
            for (double &v : s) v += nd(rng);
        }
        out.push_back({powers[k], det, std::move(s)});
    }
    return out;
}

ExperimentOutput run_two_tone(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    auto spectra = synth_spectra(cfg, p);
    Table tab{"two_tone", {"power_dbm", "detuning_Hz", "signal"}, {}};
    json om = json::array();
    for (auto &s : spectra) {
        for (std::size_t k = 0; k < s.signal.size(); ++k) tab.rows.push_back({s.power_dbm, s.detuning_hz[k], s.signal[k]});
        om.push_back({{"power_dbm", s.power_dbm},
                      {"omega_rf_Hz", p.d("conversion_MHz_per_mT") * 1e6 * p.d("b_ac_ref_mT") *
                                          std::pow(10.0, (s.power_dbm - p.d("reference_dbm")) / 20)}});
    }
    out.tables.push_back(std::move(tab));
    out.results["drive"] = om;
    return out;
}

ExperimentOutput run_calibrate(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    auto spectra = synth_spectra(cfg, p);
    auto c = pulse::calibrate_bac(spectra, p.d("reference_dbm"), p.d("conversion_MHz_per_mT"), p.d("field_angle_deg"));
    Table tab{"calibrate", {"power_dbm", "omega_rf_Hz", "sigma_Hz", "model_Hz"}, {}};
    for (std::size_t k = 0; k < spectra.size(); ++k)
        tab.rows.push_back({spectra[k].power_dbm, c.omega_rf_hz[k], c.sigma_omega_rf_hz[k],
                            c.amplitude_hz * std::pow(10.0, spectra[k].power_dbm / 20)});
    out.tables.push_back(std::move(tab));
    out.results = {{"b_ac_ref_mT", c.b_ac_ref_mT},
                   {"b_ac_perp_mT", c.b_ac_perp_mT},
                   {"amplitude_Hz", c.amplitude_hz},
                   {"slope_per_dB", c.slope_per_db},
                   {"sigma_slope_per_dB", c.sigma_slope},
                   {"true_b_ac_ref_mT", p.d("b_ac_ref_mT")},
                   {"nuclear_rabi_kHz", pulse::nuclear_rabi(c.b_ac_perp_mT, p.d("xi"), p.d("gamma_c13_kHz_per_mT"))}};
    return out;
}

// ---------------------------------------------------------------- fit

fitkit::Weighting weighting_for(const std::string &w, bool has_sigma, bool has_counts) {
    if (w == "unit") return fitkit::Weighting::unit;
    if (w == "poisson") return fitkit::Weighting::poisson;
    if (w == "sigma") {
        require(has_sigma, "sigma weighting needs a sigma column");
        return fitkit::Weighting::sigma;
    }
    require(w == "auto", "weighting must be auto, unit, poisson or sigma");
    if (has_sigma) return fitkit::Weighting::sigma;
    if (has_counts) return fitkit::Weighting::poisson;
    return fitkit::Weighting::unit;
}

int column(const Table &t, const std::string &name) {
    for (std::size_t k = 0; k < t.columns.size(); ++k)
        if (t.columns[k] == name) return static_cast<int>(k);
    return -1;
}

fitkit::FitData data_from_table(const Table &t, const std::string &weighting) {
    const int cx = column(t, "x"), cy = column(t, "y"), cs = column(t, "sigma"), cn = column(t, "counts");
    require(cx >= 0 && cy >= 0, "CSV needs columns x and y");
    fitkit::FitData d;
    for (auto &r : t.rows) {
        d.x.push_back(r[cx]);
        d.y.push_back(r[cy]);
        if (cs >= 0) d.sigma.push_back(r[cs]);
        if (cn >= 0) d.counts.push_back(r[cn]);
    }
    d.weighting = weighting_for(weighting, cs >= 0, cn >= 0);
    return d;
}

json fit_summary(const fitkit::FitModel &m, const fitkit::FitData &d, const fitkit::FitResult &r) {
    json j = fit_json(r);
    j["model"] = m.name;
    j["formula"] = m.formula;
    j["n_points"] = d.x.size();
    const char *w = d.weighting == fitkit::Weighting::unit ? "unit"
                    : d.weighting == fitkit::Weighting::poisson ? "poisson" : "sigma";
    j["weighting"] = w;
    return j;
}

ExperimentOutput run_fit(const ExperimentConfig &cfg, const Params &p) {
    ExperimentOutput out;
    const auto &m = fitkit::model(p.s("model"));
    fitkit::FitData d;
    const auto csv = p.s("data_csv");
    if (!csv.empty()) {
        d = data_from_table(read_csv(csv), p.s("weighting"));
    } else {
        const auto truth = p.v("true_params");
        require(truth.size() == m.size(), "true_params needs " + std::to_string(m.size()) + " values for " + m.name);
        d.x = linspace(p.d("x_min"), p.d("x_max"), p.i("n_points"));
        d.y = m.evaluate(d.x, truth);
        const double ns = p.d("noise_sigma");
        if (ns > 0) {
            Rng rng = make_rng(seed_of(cfg), {0x464954});
            boost::random::normal_distribution<double> nd(0.0, ns);
            for (double &v : d.y) v += nd(rng);
            d.sigma.assign(d.x.size(), ns);
        }
        d.weighting = weighting_for(p.s("weighting"), ns > 0, false);
        out.results["true_params"] = truth;
    }
    auto r = fitkit::fit_checked(m, d, {});
    const auto f = m.evaluate(d.x, r.params);
    Table tab{"fit", {"x", "y", "fit", "residual"}, {}};
    for (std::size_t k = 0; k < d.x.size(); ++k) tab.rows.push_back({d.x[k], d.y[k], f[k], d.y[k] - f[k]});
    out.tables.push_back(std::move(tab));
    const json summary = fit_summary(m, d, r);
    for (auto &[k, v] : summary.items()) out.results[k] = v;
    return out;
}

}  // namespace

ExperimentOutput execute(const ExperimentConfig &cfg, const Calibration &cal) {
    validate_config(cfg);
    const Params p{cfg.effective_parameters()};
    const auto &e = cfg.experiment;
    if (e == "levels") return run_levels(cfg, p, cal);
    if (e == "init") return run_init(cfg, p);
    if (e == "rabi") return run_rabi(p);
    if (e == "chevron") return run_chevron(p);
    if (e == "ramsey") return run_ramsey(cfg, p);
    if (e == "echo") return run_echo(cfg, p);
    if (e == "cpmg") return run_cpmg(cfg, p);
    if (e == "rb") return run_rb(cfg, p);
    if (e == "two-tone") return run_two_tone(cfg, p);
    if (e == "calibrate") return run_calibrate(cfg, p);
    if (e == "fit") return run_fit(cfg, p);
    throw ConsistencyError("no runner for experiment '" + e + "'");
}

json RunRecord::to_json() const {
    return {{"config_hash", config_hash},
            {"version", version},
            {"wall_clock_s", wall_clock_s},
            {"results", results},
            {"manifest", manifest}};
}

RunRecord run(const ExperimentConfig &cfg) {
    validate_config(cfg);
    const Calibration cal = cfg.calibration_file ? load_calibration(*cfg.calibration_file) : default_calibration();
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config_hash = config_hash(cfg, cal);
    rec.version = kVersion;
    auto output = execute(cfg, cal);
    rec.results = output.results;

    // Nothing touches the disk until the experiment has succeeded.
    std::filesystem::create_directories(cfg.output_dir);
    auto write = [&](const std::string &name, const std::string &text) {
        std::ofstream f(cfg.output_dir / name, std::ios::binary);
        f << text;
        if (!f) throw ConsistencyError("cannot write " + (cfg.output_dir / name).string());
        rec.manifest.push_back(name);
    };
    for (auto &t : output.tables) write(t.name + ".csv", to_csv(t));
    json files = rec.manifest;
    json summary = {{"experiment", cfg.experiment},
                    {"version", kVersion},
                    {"config_hash", rec.config_hash},
                    {"calibration_version", cal.version},
                    {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)},
                    {"results", output.results},
                    {"files", files}};
    write("summary.json", summary.dump(2) + "\n");
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.manifest.push_back("run_record.json");
    std::ofstream(cfg.output_dir / "run_record.json") << rec.to_json().dump(2) << "\n";
    return rec;
}

json fit_csv(const std::string &model_name, const std::filesystem::path &csv, const std::string &weighting) {
    const auto &m = fitkit::model(model_name);
    auto d = data_from_table(read_csv(csv), weighting);
    auto r = fitkit::fit_checked(m, d, {});
    return fit_summary(m, d, r);
}

}  // namespace spinlab::expcli
