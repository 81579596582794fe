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

#include "spinlab/expcli.hpp"

#include "spinlab/errors.hpp"
#include "spinlab/fitkit.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace spinlab::expcli {

namespace {

ParamDoc num(std::string name, std::string unit, double def, std::string doc) {
    return {std::move(name), "number", std::move(unit), def, std::move(doc)};
}
ParamDoc integer(std::string name, long long def, std::string doc) {
    return {std::move(name), "integer", "", def, std::move(doc)};
}
ParamDoc str(std::string name, std::string def, std::string doc) {
    return {std::move(name), "string", "", std::move(def), std::move(doc)};
}
ParamDoc flag(std::string name, bool def, std::string doc) {
    return {std::move(name), "bool", "", def, std::move(doc)};
}
ParamDoc nums(std::string name, std::string unit, std::vector<double> def, std::string doc) {
    return {std::move(name), "number[]", std::move(unit), def, std::move(doc)};
}
ParamDoc ints(std::string name, std::vector<long long> def, std::string doc) {
    return {std::move(name), "integer[]", "", def, std::move(doc)};
}

// Shared OU bath block.
void add_bath(std::vector<ParamDoc> &v) {
    v.push_back(num("b_rad_per_s", "rad/s", 943.0, "OU coupling b"));
    v.push_back(num("tau_c_s", "s", 345.0, "OU correlation time"));
    v.push_back(integer("shots", 10000, "Monte Carlo noise realizations per point"));
    v.push_back(str("method", "mc", "mc or analytic"));
}

void add_two_tone(std::vector<ParamDoc> &v) {
    v.push_back(nums("powers_dbm", "dBm", {-6, -3, 0, 3, 6, 10}, "RF generator powers"));
    v.push_back(num("b_ac_ref_mT", "mT", 1.26, "true drive amplitude at the reference power"));
    v.push_back(num("reference_dbm", "dBm", 10.0, "reference power for B_ac"));
    v.push_back(num("conversion_MHz_per_mT", "MHz/mT", 20.27, "Omega_RF per unit field"));
    v.push_back(num("omega_mw_Hz", "Hz", 2e5, "probe Rabi frequency"));
    v.push_back(num("f_mod_Hz", "Hz", 1e4, "modulation frequency"));
    v.push_back(num("fwhm_Hz", "Hz", 1e6, "ODMR Lorentzian FWHM"));
    v.push_back(num("span_factor", "", 1.6, "half window in units of (Omega_RF,max + FWHM)"));
    v.push_back(integer("n_points", 401, "detuning grid size"));
    v.push_back(num("noise_rel", "", 0.0, "Gaussian noise sigma relative to peak, needs a seed when > 0"));
}

std::vector<ExperimentDoc> build_docs() {
    std::vector<ExperimentDoc> d;

    {
        ExperimentDoc e{"levels", "Fine-structure and 13C hyperfine levels versus field; gamma, xi and calibration fits", {}, {}};
        auto &p = e.params;
        p.push_back(nums("b_parallel_mT", "mT", {0, 20, 40, 60, 80, 100, 106, 120, 140, 160, 180, 200},
                         "axial field grid"));
        p.push_back(num("b_perp_mT", "mT", 0.0, "transverse field added at every grid point"));
        p.push_back(num("operating_field_mT", "mT", 106.0, "axial field for the gamma and qubit summary"));
        p.push_back(num("gyro_angle_deg", "deg", 54.7, "field direction for the effective gyromagnetic ratio"));
        p.push_back(num("ac_angle_deg", "deg", 54.7, "RF drive direction for the Rabi enhancement xi"));
        p.push_back(flag("refit_hyperfine", true, "refit a_par, a_perp to the stored RF/MW targets"));
        p.push_back(flag("strain_fit", false, "round-trip fit of strain from synthetic optical/MW observations"));
        p.push_back(num("strain_upsilon_gs_GHz", "GHz", 41.3, "true ground strain for the round-trip"));
        p.push_back(num("strain_upsilon_es_GHz", "GHz", 65.5, "true excited strain for the round-trip"));
        e.csv_columns = {"b_parallel_mT", "b_perp_mT", "qubit_GHz", "es_qubit_GHz", "A1_B2_GHz", "RF1_MHz",
                         "RF2_MHz", "MW1_GHz", "MW2_GHz", "MW_splitting_MHz", "xi"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"init", "Optical pumping: nuclear init fidelity, cyclicity refits, saturation, six-level dynamics", {}, {}};
        auto &p = e.params;
        p.push_back(str("mode", "nuclear", "nuclear, cyclicity, saturation or six_level"));
        p.push_back(num("amplitude_counts", "counts", 176.0, "nuclear: pumping amplitude A"));
        p.push_back(num("decay_per_ms", "1/ms", 1.75, "nuclear: pumping rate"));
        p.push_back(num("offset_counts", "counts", 8.40, "nuclear: asymptote C"));
        p.push_back(num("dark_counts", "counts", 8.08, "nuclear/cyclicity: dark-state level B"));
        p.push_back(integer("dark_repetitions", 400, "nuclear: repetitions averaged into each dark-trace point"));
        p.push_back(flag("poisson_noise", true, "draw Poisson counts (needs a seed)"));
        p.push_back(num("t_max_ms", "ms", 5.0, "trace length"));
        p.push_back(integer("n_points", 201, "trace samples"));
        p.push_back(num("power_nW", "nW", 7.0, "laser power"));
        p.push_back(num("p_sat_nW", "nW", 29.0, "saturation power"));
        p.push_back(num("gamma_per_us", "1/us", 230.0, "optical decay rate"));
        p.push_back(num("detuning_per_us", "1/us", 22.74, "optical detuning, defaults to omega_RF1"));
        p.push_back(num("cyclicity_e", "", 5988.0, "electron cyclicity"));
        p.push_back(nums("refit_detunings_per_us", "1/us", {0.0, 22.74, 45.48}, "cyclicity: detunings for the sensitivity refits"));
        p.push_back(num("peak_counts", "counts", 1000.0, "cyclicity/saturation: signal scale"));
        p.push_back(nums("powers_nW", "nW", {1, 2, 5, 10, 20, 29, 50, 100, 200, 400}, "saturation: power grid"));
        p.push_back(num("background_per_nW", "counts/nW", 0.05, "saturation: linear background"));
        p.push_back(num("cyclicity_n", "", 10.0, "six_level: nuclear cyclicity"));
        p.push_back(num("omega_mw_ref_MHz", "MHz", 1.60, "six_level: MW Rabi frequency at 0 dB"));
        p.push_back(num("mw_attenuation_dB", "dB", -35.0, "six_level: MW attenuation"));
        p.push_back(num("gamma_e_spin_per_us", "1/us", 0.49, "six_level: effective electron spin linewidth"));
        p.push_back(num("delta_mw_per_us", "1/us", 0.0, "six_level: MW detuning"));
        p.push_back(str("initial_state", "mixed", "six_level: mixed or g0..g3"));
        e.csv_columns = {"nuclear: time_ms, counts, fit, laser_only, dark",
                         "cyclicity: time_ms, counts, model",
                         "saturation: power_nW, counts, fit",
                         "six_level: time_ms, g0, g1, g2, g3, e0, e1, fluorescence"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"rabi", "Driven two-level oscillation with optional detuning; fitted generalized Rabi frequency", {}, {}};
        auto &p = e.params;
        p.push_back(num("rabi_Hz", "Hz", 7263.0, "Rabi frequency"));
        p.push_back(num("detuning_Hz", "Hz", 826.0, "drive detuning"));
        p.push_back(num("t_max_s", "s", 2e-3, "longest pulse"));
        p.push_back(integer("n_points", 401, "pulse durations"));
        e.csv_columns = {"duration_s", "excited_population"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"chevron", "Excited population versus pulse duration and detuning", {}, {}};
        auto &p = e.params;
        p.push_back(num("rabi_Hz", "Hz", 13000.0, "Rabi frequency"));
        p.push_back(num("detuning_min_Hz", "Hz", -40000.0, "lowest detuning"));
        p.push_back(num("detuning_max_Hz", "Hz", 40000.0, "highest detuning"));
        p.push_back(integer("n_detunings", 41, "detuning grid size"));
        p.push_back(num("t_max_s", "s", 200e-6, "longest pulse"));
        p.push_back(integer("n_durations", 101, "duration grid size"));
        e.csv_columns = {"detuning_Hz", "duration_s", "excited_population"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"ramsey", "Free-induction decay under OU frequency noise; per-detuning sine-Gaussian fits", {}, {}};
        auto &p = e.params;
        p.push_back(nums("detunings_Hz", "Hz", {2000, 4000, 6000}, "Ramsey detuning grid"));
        p.push_back(num("tau_max_s", "s", 2.5e-3, "longest free evolution"));
        p.push_back(integer("n_tau", 51, "free evolution samples"));
        add_bath(p);
        e.csv_columns = {"detuning_Hz", "tau_s", "visibility", "stderr", "analytic"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"echo", "Hahn echo under OU noise; T2 fit and bath inversion from T2* and T2", {}, {}};
        auto &p = e.params;
        p.push_back(num("tau_max_s", "s", 0.4, "longest total evolution"));
        p.push_back(integer("n_tau", 41, "total evolution samples"));
        add_bath(p);
        p.push_back(num("t2star_ref_s", "s", 1.5e-3, "T2* used for the bath inversion"));
        p.push_back(num("t2_ref_s", "s", 0.167, "echo T2 used for the bath inversion"));
        e.csv_columns = {"tau_s", "visibility", "stderr", "analytic"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"cpmg", "CPMG dynamical decoupling under OU noise; T2(N) fits and N scaling", {}, {}};
        auto &p = e.params;
        p.push_back(ints("pulses", {1, 8, 64, 128}, "CPMG pulse numbers"));
        p.push_back(num("tau_max_factor", "", 2.0, "window length in units of the analytic T2(N)"));
        p.push_back(integer("n_tau", 31, "total evolution samples per N"));
        add_bath(p);
        e.csv_columns = {"n_pulses", "tau_s", "visibility", "stderr", "analytic"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"rb", "Single-qubit randomized benchmarking over the 9-primitive set", {}, {}};
        auto &p = e.params;
        p.push_back(ints("sequence_lengths", {0, 1, 2, 5, 10, 20, 50, 100, 150, 200}, "sequence lengths N"));
        p.push_back(integer("realizations", 20, "random sequences per length"));
        p.push_back(integer("shots", 500, "repetitions per sequence"));
        p.push_back(str("error_model", "depolarizing", "none, depolarizing or ou_dephasing"));
        p.push_back(num("depolarizing_p", "", 0.0016, "per-gate depolarizing strength"));
        p.push_back(num("b_rad_per_s", "rad/s", 943.0, "OU coupling for ou_dephasing"));
        p.push_back(num("tau_c_s", "s", 345.0, "OU correlation time for ou_dephasing"));
        p.push_back(num("t_pi_s", "s", 69.25e-6, "pi pulse duration, also the I gate"));
        e.csv_columns = {"length", "mean_visibility", "stderr"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"two-tone", "Synthetic two-tone ODMR spectra (arcsine x Lorentzian) versus RF power", {}, {}};
        add_two_tone(e.params);
        e.csv_columns = {"power_dbm", "detuning_Hz", "signal"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"fit", "Least-squares fit of a registered model to CSV or synthetic data", {}, {}};
        auto &p = e.params;
        p.push_back(str("model", "lorentzian", "registered fit model"));
        p.push_back(str("data_csv", "", "CSV with x, y and optional sigma or counts, relative to the config"));
        p.push_back(nums("true_params", "", {}, "synthetic: model parameters used when data_csv is empty"));
        p.push_back(num("x_min", "", 0.0, "synthetic: first abscissa"));
        p.push_back(num("x_max", "", 1.0, "synthetic: last abscissa"));
        p.push_back(integer("n_points", 101, "synthetic: samples"));
        p.push_back(num("noise_sigma", "", 0.0, "synthetic: Gaussian noise, needs a seed when > 0"));
        p.push_back(str("weighting", "auto", "auto, unit, poisson or sigma"));
        p.push_back(str("x_unit", "", "label only"));
        e.csv_columns = {"x", "y", "fit", "residual"};
        d.push_back(std::move(e));
    }
    {
        ExperimentDoc e{"calibrate", "RF field calibration from two-tone spectra; B_ac and nuclear Rabi estimate", {}, {}};
        add_two_tone(e.params);
        e.params.push_back(num("field_angle_deg", "deg", 54.7, "static field angle from the symmetry axis"));
        e.params.push_back(num("xi", "", 2.07, "Rabi enhancement used for the nuclear Rabi estimate"));
        e.params.push_back(num("gamma_c13_kHz_per_mT", "kHz/mT", 10.7, "13C gyromagnetic ratio"));
        e.csv_columns = {"power_dbm", "omega_rf_Hz", "sigma_Hz", "model_Hz"};
        d.push_back(std::move(e));
    }
    return d;
}

std::string type_of(const json &v) {
    if (v.is_boolean()) return "bool";
    if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) {
        bool all_int = true;
        for (auto &x : v) {
            if (!x.is_number()) return "array";
            all_int = all_int && (x.is_number_integer() || x.is_number_unsigned());
        }
        return all_int ? "integer[]" : "number[]";
    }
    return v.type_name();
}

bool type_ok(const std::string &want, const json &v) {
    const auto got = type_of(v);
    if (got == want) return true;
    if (want == "number" && got == "integer") return true;
    if (want == "number[]" && (got == "integer[]" || (v.is_array() && v.empty()))) return true;
    if (want == "integer[]" && v.is_array() && v.empty()) return true;
    if (want == "integer" && v.is_number_float()) return std::floor(v.get<double>()) == v.get<double>();
    return false;
}

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
}

}  // namespace

const std::vector<ExperimentDoc> &experiments() {
    static const std::vector<ExperimentDoc> docs = build_docs();
    return docs;
}

std::vector<std::string> list_experiments() {
    std::vector<std::string> out;
    for (auto &e : experiments()) out.push_back(e.name);
    return out;
}

const ExperimentDoc &experiment_doc(const std::string &name) {
    for (auto &e : experiments())
        if (e.name == name) return e;
    throw InvalidInput("unknown experiment '" + name + "'");
}

std::string describe(const std::string &name) {
    const auto &e = experiment_doc(name);
    std::ostringstream os;
    os << e.name << ": " << e.summary << "\n\nparameters:\n";
    for (auto &p : e.params) {
        os << "  " << p.name;
        if (!p.unit.empty()) os << " [" << p.unit << "]";
        os << "  (" << p.type << ", default " << p.default_value.dump() << ")  " << p.doc << "\n";
    }
    os << "\ncsv columns:\n";
    for (auto &c : e.csv_columns) os << "  " << c << "\n";
    return os.str();
}

json describe_json(const std::string &name) {
    const auto &e = experiment_doc(name);
    json j;
    j["experiment"] = e.name;
    j["summary"] = e.summary;
    j["parameters"] = json::array();
    for (auto &p : e.params)
        j["parameters"].push_back(
            {{"name", p.name}, {"type", p.type}, {"unit", p.unit}, {"default", p.default_value}, {"doc", p.doc}});
    j["csv_columns"] = e.csv_columns;
    return j;
}

// ---- calibration ----

Calibration default_calibration() {
    Calibration c;
    c.hyperfine = levels::calibrated_hyperfine();
    c.version = "builtin";
    return c;
}

Calibration load_calibration(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read calibration file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception &e) {
        throw InvalidInput("calibration file is not valid JSON: " + std::string(e.what()));
    }
    Calibration c = default_calibration();
    c.raw = j;
    c.version = j.value("version", "");
    require(!c.version.empty(), "calibration file needs a version");
    auto get = [](const json &o, const char *key, double &dst) {
        if (!o.contains(key)) return;
        require(o[key].is_number(), std::string("calibration key ") + key + " must be a number");
        dst = o[key].get<double>();
    };
    if (j.contains("fine_structure")) {
        const auto &f = j["fine_structure"];
        auto &p = c.fine;
        get(f, "lambda_gs_GHz", p.lambda_gs);
        get(f, "upsilon_gs_GHz", p.upsilon_gs);
        get(f, "lambda_es_GHz", p.lambda_es);
        get(f, "upsilon_es_GHz", p.upsilon_es);
        get(f, "f12_gs", p.f12_gs);
        get(f, "f32_gs", p.f32_gs);
        get(f, "f12_es", p.f12_es);
        get(f, "f32_es", p.f32_es);
        get(f, "gamma_spin_MHz_per_mT", p.gamma_spin);
        get(f, "gamma_orb_MHz_per_mT", p.gamma_orb);
        get(f, "zpl_GHz", p.zpl_ghz);
        if (f.contains("quenching")) p.quenching = levels::quenching_from_string(f["quenching"].get<std::string>());
    }
    if (j.contains("hyperfine")) {
        const auto &h = j["hyperfine"];
        get(h, "a_par_MHz", c.hyperfine.a_par);
        get(h, "a_perp_MHz", c.hyperfine.a_perp);
        double deg = c.hyperfine.polar_angle * 180 / std::numbers::pi;
        get(h, "polar_angle_deg", deg);
        c.hyperfine.polar_angle = deg * std::numbers::pi / 180;
        double az = c.hyperfine.azimuth * 180 / std::numbers::pi;
        get(h, "azimuth_deg", az);
        c.hyperfine.azimuth = az * std::numbers::pi / 180;
        get(h, "gamma_c13_kHz_per_mT", c.hyperfine.gamma_c13);
    }
    c.fine.validate();
    c.hyperfine.validate();
    return c;
}

// ---- config ----

json ExperimentConfig::effective_parameters() const {
    json out = json::object();
    for (auto &p : experiment_doc(experiment).params) out[p.name] = p.default_value;
    for (auto &[k, v] : parameters.items()) out[k] = v;
    return out;
}

ExperimentConfig parse_config(const json &j, const std::filesystem::path &base_dir) {
    require(j.is_object(), "config must be a JSON object");
    static const std::vector<std::string> allowed = {"experiment", "parameters", "seed", "output_dir",
                                                     "calibration_file", "description"};
    for (auto &[k, v] : j.items()) {
        (void)v;
        require(std::find(allowed.begin(), allowed.end(), k) != allowed.end(), "unknown config key '" + k + "'");
    }
    require(j.contains("experiment") && j["experiment"].is_string(), "config needs a string 'experiment'");
    ExperimentConfig c;
    c.raw = j;
    c.experiment = j["experiment"].get<std::string>();
    experiment_doc(c.experiment);
    if (j.contains("parameters")) {
        require(j["parameters"].is_object(), "'parameters' must be an object");
        c.parameters = j["parameters"];
    }
    if (j.contains("seed") && !j["seed"].is_null()) {
        const auto &s = j["seed"];
        require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0),
                "'seed' must be a non-negative integer");
        c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        require(j["output_dir"].is_string(), "'output_dir' must be a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("calibration_file")) {
        require(j["calibration_file"].is_string(), "'calibration_file' must be a string");
        c.calibration_file = resolve(base_dir, j["calibration_file"].get<std::string>());
    }
    // Data paths are stored resolved so the run does not depend on the working directory.
    if (c.parameters.contains("data_csv") && c.parameters["data_csv"].is_string() &&
        !c.parameters["data_csv"].get<std::string>().empty())
        c.parameters["data_csv"] = resolve(base_dir, c.parameters["data_csv"].get<std::string>()).string();
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path &path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception &e) {
        throw InvalidInput("config is not valid JSON: " + std::string(e.what()));
    }
    if (seed_override && j.is_object()) j["seed"] = *seed_override;
    return parse_config(j, path.parent_path());
}

namespace {

bool is_stochastic(const std::string &exp, const json &p) {
    if (exp == "ramsey" || exp == "echo" || exp == "cpmg") return p["method"] == "mc";
    if (exp == "rb") return true;
    if (exp == "init") {
        const auto mode = p["mode"].get<std::string>();
        return (mode == "nuclear" || mode == "saturation" || mode == "cyclicity") && p["poisson_noise"].get<bool>();
    }
    if (exp == "two-tone" || exp == "calibrate") return p["noise_rel"].get<double>() > 0;
    if (exp == "fit") return p["data_csv"].get<std::string>().empty() && p["noise_sigma"].get<double>() > 0;
    return false;
}

}  // namespace

void validate_config(const ExperimentConfig &c) {
    const auto &doc = experiment_doc(c.experiment);
    for (auto &[k, v] : c.parameters.items()) {
        auto it = std::find_if(doc.params.begin(), doc.params.end(), [&](const ParamDoc &p) { return p.name == k; });
        require(it != doc.params.end(), "experiment '" + c.experiment + "' has no parameter '" + k + "'");
        require(type_ok(it->type, v), "parameter '" + k + "' must be " + it->type + ", got " + type_of(v));
    }
    const json p = c.effective_parameters();
    for (auto &[k, v] : p.items()) {
        if (v.is_number_float()) require(std::isfinite(v.get<double>()), "parameter '" + k + "' is not finite");
    }
    if (c.experiment == "ramsey" || c.experiment == "echo" || c.experiment == "cpmg") {
        const auto m = p["method"].get<std::string>();
        require(m == "mc" || m == "analytic", "method must be mc or analytic");
    }
    if (c.experiment == "init") {
        const auto m = p["mode"].get<std::string>();
        require(m == "nuclear" || m == "cyclicity" || m == "saturation" || m == "six_level",
                "init mode must be nuclear, cyclicity, saturation or six_level");
    }
    if (c.experiment == "fit") {
        fitkit::model(p["model"].get<std::string>());
        const auto csv = p["data_csv"].get<std::string>();
        if (csv.empty())
            require(!p["true_params"].empty(), "fit needs data_csv or true_params");
        else
            require(std::filesystem::exists(csv), "data_csv not found: " + csv);
    }
    if (c.calibration_file) require(std::filesystem::exists(*c.calibration_file),
                                    "calibration_file not found: " + c.calibration_file->string());
    require(!is_stochastic(c.experiment, p) || c.seed.has_value(),
            "experiment '" + c.experiment + "' is stochastic with these parameters and needs a seed");
}

// ---- hashing ----

std::string sha256_hex(const std::string &bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw ConsistencyError("SHA-256 failed");
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string config_hash(const ExperimentConfig &cfg, const Calibration &cal) {
    // Everything that influences numbers, nothing that only names locations.
    // nlohmann::json objects keep keys sorted, so the dump is canonical.
    json canon;
    canon["experiment"] = cfg.experiment;
    canon["parameters"] = cfg.effective_parameters();
    canon["parameters"].erase("data_csv");
    canon["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    canon["calibration"] = cal.raw.is_null() ? json(cal.version) : cal.raw;
    canon["version"] = kVersion;
    const json eff = cfg.effective_parameters();
    if (cfg.experiment == "fit" && !eff["data_csv"].get<std::string>().empty()) {
        std::ifstream in(eff["data_csv"].get<std::string>(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        canon["data_sha256"] = sha256_hex(ss.str());
    }
    return sha256_hex(canon.dump());
}

// ---- CSV ----

std::string to_csv(const Table &t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += "\n";
    char buf[40];
    for (auto &row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            if (i) out += ",";
            out += buf;
        }
        out += "\n";
    }
    return out;
}

Table read_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read " + path.string());
    Table t;
    t.name = path.stem().string();
    std::string line;
    auto split = [](const std::string &s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell.erase(0, cell.find_first_not_of(" \t\r"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            out.push_back(cell);
        }
        return out;
    };
    while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
    }
    t.columns = split(line);
    require(!t.columns.empty(), "CSV has no header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split(line);
        require(cells.size() == t.columns.size(), "CSV line " + std::to_string(lineno) + " has wrong column count");
        std::vector<double> row;
        for (auto &c : cells) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(c, &pos));
                require(pos == c.size(), "");
            } catch (const std::exception &) {
                throw InvalidInput("CSV line " + std::to_string(lineno) + ": not a number '" + c + "'");
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

int exit_code_for(const std::exception &e) {
    if (dynamic_cast<const InvalidInput *>(&e)) return 2;
    if (dynamic_cast<const RankDeficiency *>(&e)) return 3;
    if (dynamic_cast<const FitFailure *>(&e)) return 3;
    return 4;
}

json error_json(const std::exception &e) {
    const auto *se = dynamic_cast<const Error *>(&e);
    return {{"error", se ? se->kind() : "internal_consistency"},
            {"message", e.what()},
            {"exit_code", exit_code_for(e)}};
}

}  // namespace spinlab::expcli
