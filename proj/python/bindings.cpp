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

// Thin Python surface over the C++ core. Structured results cross the
// boundary as JSON text and are decoded in spinlab/__init__.py.

#include "spinlab/benchmarking.hpp"
#include "spinlab/errors.hpp"
#include "spinlab/expcli.hpp"
#include "spinlab/fitkit.hpp"
#include "spinlab/levels.hpp"
#include "spinlab/pulse.hpp"
#include "spinlab/pumping.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
namespace sl = spinlab;
using sl::expcli::json;

namespace {

json transitions(const sl::levels::LevelDiagram &d) {
    json j = {{"gs_energies_GHz", d.gs_energies}, {"es_energies_GHz", d.es_energies}};
    j["transitions"] = json(d.transitions);
    return j;
}

json fit_result(const sl::fitkit::FitResult &r) {
    json p = json::object(), s = json::object();
    for (std::size_t k = 0; k < r.names.size(); ++k) {
        p[r.names[k]] = r.params[k];
        s[r.names[k]] = r.sigmas[k];
    }
    return {{"params", p},   {"sigmas", s},         {"chi2", r.chi2},
            {"dof", r.dof},  {"reduced_chi2", r.reduced_chi2}, {"status", sl::fitkit::to_string(r.status)}};
}

}  // namespace

PYBIND11_MODULE(_spinlab, m) {
    m.doc() = "spinlab C++ core";
    m.attr("__version__") = sl::expcli::kVersion;

    auto base = py::register_exception<sl::Error>(m, "SpinlabError", PyExc_RuntimeError);
    auto invalid = py::register_exception<sl::InvalidInput>(m, "InvalidInput", base.ptr());
    py::register_exception<sl::DegenerateInput>(m, "DegenerateInput", invalid.ptr());
    py::register_exception<sl::RankDeficiency>(m, "RankDeficiency", base.ptr());
    py::register_exception<sl::FitFailure>(m, "FitFailure", base.ptr());
    py::register_exception<sl::ConsistencyError>(m, "ConsistencyError", base.ptr());

    // levels
    m.def(
        "electron_levels",
        [](double b_par, double b_perp) {
            return transitions(sl::levels::electron_levels({}, {b_par, b_perp, 0.0})).dump();
        },
        py::arg("b_parallel_mT"), py::arg("b_perp_mT") = 0.0);
    m.def(
        "hyperfine_levels",
        [](double b_par, double b_perp) {
            return transitions(
                       sl::levels::hyperfine_levels({}, sl::levels::calibrated_hyperfine(), {b_par, b_perp, 0.0}))
                .dump();
        },
        py::arg("b_parallel_mT"), py::arg("b_perp_mT") = 0.0);
    m.def(
        "gyromagnetic_ratio",
        [](double angle_deg, double operating_mT) {
            return sl::levels::gyromagnetic_ratio({}, sl::levels::direction_at(angle_deg),
                                                  sl::levels::FieldVector::axial(operating_mT));
        },
        py::arg("angle_deg") = 54.7, py::arg("operating_field_mT") = 106.0);

    // pumping
    m.def("pump_rate", &sl::pumping::pump_rate, py::arg("omega"), py::arg("delta"), py::arg("gamma"));
    m.def(
        "init_fidelity",
        [](double a, double c, double b, double sa, double sc, double sb, double rho_ac, double rho_ab, double rho_cb) {
            sl::pumping::InitFitInput in;
            in.amplitude_a = a, in.offset_c = c, in.dark_b = b;
            in.decay_gamma = 1.0;
            in.sigma_a = sa, in.sigma_c = sc, in.sigma_b = sb;
            in.rho_ac = rho_ac, in.rho_ab = rho_ab, in.rho_cb = rho_cb;
            const auto f = sl::pumping::init_fidelity(in);
            return py::dict(py::arg("f") = f.f, py::arg("sigma_f") = f.sigma_f,
                            py::arg("sigma_f_direct") = f.sigma_f_direct);
        },
        py::arg("amplitude_a") = 176.0, py::arg("offset_c") = 8.40, py::arg("dark_b") = 8.08, py::arg("sigma_a") = 3.0,
        py::arg("sigma_c") = 0.4, py::arg("sigma_b") = 0.01, py::arg("rho_ac") = 0.2235, py::arg("rho_ab") = 1.0,
        py::arg("rho_cb") = 1.0);

    // pulse engine
    m.def(
        "rabi_population",
        [](double rabi_hz, double detuning_hz, double duration_s) {
            return sl::pulse::propagate({{sl::pulse::Pulse{rabi_hz, 0.0, duration_s, detuning_hz}}}).excited_population;
        },
        py::arg("rabi_Hz"), py::arg("detuning_Hz"), py::arg("duration_s"));
    m.def("t2_analytic", &sl::pulse::t2_analytic, py::arg("n_pulses"), py::arg("b_rad_per_s"), py::arg("tau_c_s"));
    m.def("dd_analytic", &sl::pulse::dd_analytic, py::arg("n_pulses"), py::arg("total_time_s"), py::arg("b_rad_per_s"),
          py::arg("tau_c_s"));
    m.def(
        "bath_from_coherence",
        [](double t2star, double t2) {
            const auto e = sl::pulse::bath_from_coherence(t2star, t2);
            return py::make_tuple(e.coupling_b, e.tau_c);
        },
        py::arg("t2star_s"), py::arg("t2_echo_s"));
    m.def(
        "fit_scaling",
        [](const std::vector<std::pair<double, double>> &pts) {
            const auto f = sl::pulse::fit_scaling(pts);
            return py::make_tuple(f.beta, f.sigma_beta, f.prefactor);
        },
        py::arg("points"));
    m.def(
        "ramsey_mc",
        [](double detuning_hz, const std::vector<double> &tau, double b, double tc, std::uint64_t seed, std::size_t shots) {
            py::gil_scoped_release nogil;
            const auto t = sl::pulse::ramsey_mc(detuning_hz, tau, {b, tc, seed}, shots);
            return std::make_pair(t.visibility, t.stderr_);
        },
        py::arg("detuning_Hz"), py::arg("tau_s"), py::arg("b_rad_per_s") = 943.0, py::arg("tau_c_s") = 345.0,
        py::arg("seed") = 0, py::arg("shots") = 10000);

    // benchmarking
    m.def(
        "run_rb",
        [](const std::vector<int> &lengths, int realizations, int shots, double p, std::uint64_t seed) {
            sl::benchmarking::RBConfig c;
            c.sequence_lengths = lengths;
            c.realizations = realizations;
            c.shots = shots;
            c.error.kind = p > 0 ? sl::benchmarking::ErrorKind::depolarizing : sl::benchmarking::ErrorKind::none;
            c.error.depolarizing_p = p;
            c.seed = seed;
            sl::benchmarking::RBResult r;
            {
                py::gil_scoped_release nogil;
                r = sl::benchmarking::run_rb(c);
            }
            return py::dict(py::arg("mean_visibility") = r.mean_visibility, py::arg("stderr") = r.stderr_,
                            py::arg("A") = r.a, py::arg("P") = r.p, py::arg("f_primitive") = r.f_primitive,
                            py::arg("sigma_f_primitive") = r.sigma_f_primitive, py::arg("f_clifford") = r.f_clifford,
                            py::arg("sigma_f_clifford") = r.sigma_f_clifford);
        },
        py::arg("lengths"), py::arg("realizations") = 20, py::arg("shots") = 500, py::arg("depolarizing_p") = 0.0,
        py::arg("seed") = 0);

    // fitkit
    m.def("models", [] {
        std::vector<std::string> out;
        for (auto &mm : sl::fitkit::model_registry()) out.push_back(mm.name);
        return out;
    });
    m.def(
        "fit",
        [](const std::string &model, const std::vector<double> &x, const std::vector<double> &y,
           const std::vector<double> &sigma) {
            const auto &mm = sl::fitkit::model(model);
            sl::fitkit::FitData d;
            d.x = x;
            d.y = y;
            d.sigma = sigma;
            d.weighting = sigma.empty() ? sl::fitkit::Weighting::unit : sl::fitkit::Weighting::sigma;
            return fit_result(sl::fitkit::fit_checked(mm, d, {})).dump();
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("sigma") = std::vector<double>{});

    // expcli
    m.def("list_experiments", &sl::expcli::list_experiments);
    m.def("describe", [](const std::string &name) { return sl::expcli::describe_json(name).dump(); }, py::arg("experiment"));
    m.def(
        "run_config",
        [](const std::filesystem::path &path, std::optional<std::uint64_t> seed,
           std::optional<std::filesystem::path> out) {
            auto cfg = sl::expcli::load_config(path, seed);
            if (out) cfg.output_dir = *out;
            sl::expcli::RunRecord rec;
            {
                py::gil_scoped_release nogil;
                rec = sl::expcli::run(cfg);
            }
            auto j = rec.to_json();
            j["output_dir"] = cfg.output_dir.string();
            return j.dump();
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none());
    m.def(
        "config_hash",
        [](const std::string &config_json) {
            const auto cfg = sl::expcli::parse_config(json::parse(config_json), ".");
            return sl::expcli::config_hash(cfg, sl::expcli::default_calibration());
        },
        py::arg("config_json"));
}
