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

#include "spinlab/errors.hpp"
#include "spinlab/expcli.hpp"
#include "spinlab/fitkit.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
namespace ex = spinlab::expcli;
using ex::json;

namespace {

const fs::path kSource = SPINLAB_SOURCE_DIR;
const fs::path kCli = SPINLAB_CLI_PATH;

fs::path scratch(const std::string &name) {
    fs::path p = fs::temp_directory_path() / ("spinlab_expcli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path &p, const std::string &text) { std::ofstream(p, std::ios::binary) << text; }

struct CliResult {
    int code;
    std::string out, err;
};

CliResult cli(const std::string &args, const fs::path &dir, const std::string &env = "") {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + kCli.string() + "' " + args + " > '" +
                            o.string() + "' 2> '" + e.string() + "'";
    const int st = std::system(cmd.c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(o), slurp(e)};
}

json write_config(const fs::path &p, const json &j) {
    spit(p, j.dump(2));
    return j;
}

}  // namespace

TEST(Expcli, ListsExactlyElevenExperiments) {
    const std::vector<std::string> want = {"levels", "init", "rabi", "chevron", "ramsey",   "echo",
                                           "cpmg",   "rb",   "two-tone", "fit", "calibrate"};
    EXPECT_EQ(ex::list_experiments(), want);
    auto dir = scratch("list");
    auto r = cli("describe", dir);
    ASSERT_EQ(r.code, 0);
    std::string expect;
    for (auto &n : want) expect += n + "\n";
    EXPECT_EQ(r.out, expect);
}

TEST(Expcli, DescribeRbShowsPaperDefaults) {
    const json d = ex::describe_json("rb");
    std::map<std::string, json> defaults;
    for (auto &p : d["parameters"]) defaults[p["name"]] = p["default"];
    ASSERT_TRUE(defaults.count("sequence_lengths"));
    EXPECT_EQ(defaults["realizations"], 20);
    EXPECT_EQ(defaults["shots"], 500);
    const std::string text = ex::describe("rb");
    EXPECT_NE(text.find("sequence_lengths"), std::string::npos);
    EXPECT_NE(text.find("realizations  (integer, default 20)"), std::string::npos);
    EXPECT_NE(text.find("shots  (integer, default 500)"), std::string::npos);
}

TEST(Expcli, DescribeRamseyAnnotatesUnits) {
    const json d = ex::describe_json("ramsey");
    std::map<std::string, std::string> unit;
    for (auto &p : d["parameters"]) unit[p["name"]] = p["unit"];
    EXPECT_EQ(unit.at("detunings_Hz"), "Hz");
    EXPECT_EQ(unit.at("b_rad_per_s"), "rad/s");
    EXPECT_EQ(unit.at("tau_c_s"), "s");
    const std::string text = ex::describe("ramsey");
    EXPECT_NE(text.find("detunings_Hz [Hz]"), std::string::npos);
    EXPECT_NE(text.find("b_rad_per_s [rad/s]"), std::string::npos);
    EXPECT_NE(text.find("tau_c_s [s]"), std::string::npos);
}

TEST(Expcli, EveryParameterNameCarriesItsUnit) {
    // Dimensioned keys end in their unit so configs never rely on implicit units.
    for (auto &e : ex::experiments())
        for (auto &p : e.params) {
            if (p.unit.empty() || p.type == "string" || p.type == "bool") continue;
            if (p.unit == "counts" || p.unit == "counts/nW") continue;
            EXPECT_TRUE(p.name.find('_') != std::string::npos) << e.name << "." << p.name << " [" << p.unit << "]";
        }
}

TEST(Expcli, DescribeUnknownIsValidationError) {
    EXPECT_THROW(ex::describe("nope"), spinlab::InvalidInput);
    auto dir = scratch("desc_unknown");
    auto r = cli("describe nope", dir);
    EXPECT_EQ(r.code, 2);
    const json err = json::parse(r.err);
    EXPECT_EQ(err["exit_code"], 2);
    EXPECT_EQ(err["error"], "invalid_input");
}

TEST(Expcli, UnknownExperimentExitsTwoWithoutOutput) {
    auto dir = scratch("unknown");
    write_config(dir / "c.json", {{"experiment", "nope"}, {"seed", 1}, {"output_dir", "out"}});
    auto r = cli("run c.json", dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
    const json err = json::parse(r.err);
    EXPECT_EQ(err["exit_code"], 2);
    EXPECT_NE(err["message"].get<std::string>().find("nope"), std::string::npos);
}

TEST(Expcli, ValidationErrorsExitTwo) {
    auto dir = scratch("validation");
    const std::vector<json> bad = {
        json::array(),
        {{"experiment", "rb"}, {"seed", 1}, {"bogus", 2}},
        {{"experiment", "rb"}, {"seed", 1}, {"parameters", {{"realisations", 20}}}},
        {{"experiment", "rb"}, {"seed", 1}, {"parameters", {{"shots", "many"}}}},
        {{"experiment", "rb"}, {"seed", -1}},
        {{"experiment", "rb"}},  // stochastic without a seed
        {{"experiment", "ramsey"}, {"parameters", {{"method", "mc"}}}},
        {{"experiment", "ramsey"}, {"parameters", {{"method", "exact"}}}},
        {{"experiment", "init"}, {"parameters", {{"mode", "quantum"}}}},
        {{"experiment", "fit"}, {"parameters", {{"data_csv", "missing.csv"}}}},
        {{"experiment", "fit"}, {"parameters", {{"model", "gaussian"}, {"true_params", {1, 2}}}}},
        {{"experiment", "levels"}, {"calibration_file", "missing.json"}},
        {{"experiment", "rb"}, {"seed", 1}, {"parameters", {{"sequence_lengths", {-1, 2}}}}},
    };
    for (std::size_t k = 0; k < bad.size(); ++k) {
        write_config(dir / "c.json", bad[k]);
        auto r = cli("run c.json --out out", dir);
        EXPECT_EQ(r.code, 2) << k << ": " << r.err;
        EXPECT_FALSE(fs::exists(dir / "out")) << k;
        ASSERT_FALSE(r.err.empty()) << k;
        EXPECT_EQ(json::parse(r.err)["exit_code"], 2) << k;
    }
    spit(dir / "broken.json", "{\"experiment\": ");
    EXPECT_EQ(cli("run broken.json", dir).code, 2);
    EXPECT_EQ(cli("run absent.json", dir).code, 2);
    EXPECT_EQ(cli("run", dir).code, 2);
    EXPECT_EQ(cli("frobnicate", dir).code, 2);
}

TEST(Expcli, SeedFlagSatisfiesStochasticRequirement) {
    auto dir = scratch("seedflag");
    write_config(dir / "c.json", {{"experiment", "rb"},
                                  {"parameters", {{"sequence_lengths", {0, 5, 10}}, {"realizations", 4}, {"shots", 10}}}});
    EXPECT_EQ(cli("run c.json --out a", dir).code, 2);
    auto r = cli("run c.json --seed 9 --out a", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(slurp(dir / "a" / "summary.json"))["seed"], 9);
}

TEST(Expcli, RunWritesManifestAndSummary) {
    auto dir = scratch("manifest");
    auto r = cli("run '" + (kSource / "configs" / "fig2e_rb.json").string() + "' --out run1", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json brief = json::parse(r.out);
    const json rec = json::parse(slurp(dir / "run1" / "run_record.json"));
    for (auto &f : rec["manifest"]) EXPECT_TRUE(fs::exists(dir / "run1" / f.get<std::string>())) << f;
    EXPECT_EQ(rec["manifest"], brief["files"]);
    EXPECT_EQ(rec["version"], ex::kVersion);
    EXPECT_EQ(rec["config_hash"].get<std::string>().size(), 64u);
    EXPECT_GE(rec["wall_clock_s"].get<double>(), 0.0);

    const json s = json::parse(slurp(dir / "run1" / "summary.json"));
    for (auto k : {"experiment", "version", "config_hash", "calibration_version", "seed", "results", "files"})
        EXPECT_TRUE(s.contains(k)) << k;
    EXPECT_EQ(s["config_hash"], rec["config_hash"]);
    for (auto k : {"A", "P", "f_primitive", "f_clifford", "sigma_A", "sigma_P", "sigma_f_primitive", "sigma_f_clifford"})
        EXPECT_TRUE(s["results"].contains(k)) << k;

    // CSV header is the documented column contract.
    const std::string csv = slurp(dir / "run1" / "rb.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "length,mean_visibility,stderr");
}

TEST(Expcli, IdenticalRunsAreByteIdentical) {
    auto dir = scratch("repeat");
    for (auto name : {"fig2e_rb.json", "fig2c_ramsey.json", "fig1c_init.json", "fig6d_calibrate.json"}) {
        const std::string cfg = "'" + (kSource / "configs" / name).string() + "'";
        auto a = cli("run " + cfg + " --out a", dir, "SPINLAB_THREADS=1");
        auto b = cli("run " + cfg + " --out b", dir, "SPINLAB_THREADS=4");
        ASSERT_EQ(a.code, 0) << name << a.err;
        ASSERT_EQ(b.code, 0) << name << b.err;
        int n_csv = 0;
        for (auto &f : fs::directory_iterator(dir / "a")) {
            if (f.path().extension() != ".csv") continue;
            ++n_csv;
            EXPECT_EQ(slurp(f.path()), slurp(dir / "b" / f.path().filename())) << name << " " << f.path().filename();
        }
        EXPECT_GT(n_csv, 0) << name;
        EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json")) << name;
        fs::remove_all(dir / "a");
        fs::remove_all(dir / "b");
    }
}

TEST(Expcli, DifferentSeedsDiffer) {
    auto dir = scratch("seeds");
    const std::string cfg = "'" + (kSource / "configs" / "fig2e_rb.json").string() + "'";
    ASSERT_EQ(cli("run " + cfg + " --seed 1 --out a", dir).code, 0);
    ASSERT_EQ(cli("run " + cfg + " --seed 2 --out b", dir).code, 0);
    EXPECT_NE(slurp(dir / "a" / "rb.csv"), slurp(dir / "b" / "rb.csv"));
    EXPECT_NE(json::parse(slurp(dir / "a" / "summary.json"))["config_hash"],
              json::parse(slurp(dir / "b" / "summary.json"))["config_hash"]);
}

TEST(Expcli, ConfigHashStableUnderKeyReordering) {
    const std::string a =
        R"({"experiment":"rb","seed":3,"output_dir":"x","parameters":{"shots":10,"realizations":4,"sequence_lengths":[0,1]}})";
    const std::string b =
        R"({"parameters":{"sequence_lengths":[0,1],"realizations":4,"shots":10},"output_dir":"elsewhere","seed":3,"experiment":"rb"})";
    const auto cal = ex::default_calibration();
    const auto ca = ex::parse_config(json::parse(a), "."), cb = ex::parse_config(json::parse(b), ".");
    EXPECT_EQ(ex::config_hash(ca, cal), ex::config_hash(cb, cal));

    // Explicit defaults hash like omitted ones; any numeric change moves the hash.
    auto cc = ex::parse_config(json::parse(a), ".");
    cc.parameters.erase("shots");
    cc.parameters["shots"] = 10;
    EXPECT_EQ(ex::config_hash(cc, cal), ex::config_hash(ca, cal));
    auto cd = ex::parse_config(json::parse(a), ".");
    cd.parameters.erase("realizations");
    auto ce = ex::parse_config(json::parse(a), ".");
    ce.parameters["realizations"] = 20;
    EXPECT_EQ(ex::config_hash(cd, cal), ex::config_hash(ce, cal));
    ce.parameters["shots"] = 11;
    EXPECT_NE(ex::config_hash(ce, cal), ex::config_hash(ca, cal));
    auto cf = ca;
    cf.seed = 4;
    EXPECT_NE(ex::config_hash(cf, cal), ex::config_hash(ca, cal));
    auto cal2 = ex::load_calibration(kSource / "configs" / "calibration.json");
    EXPECT_NE(ex::config_hash(ca, cal2), ex::config_hash(ca, cal));
}

TEST(Expcli, Sha256KnownVectors) {
    EXPECT_EQ(ex::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(ex::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Expcli, CsvRoundTripsSeventeenDigits) {
    ex::Table t{"t", {"a", "b"}, {{0.1, 1.0 / 3.0}, {-1e-300, 6.02214076e23}, {std::nextafter(1.0, 2.0), 0}}};
    auto dir = scratch("csv");
    spit(dir / "t.csv", ex::to_csv(t));
    const auto back = ex::read_csv(dir / "t.csv");
    ASSERT_EQ(back.columns, t.columns);
    ASSERT_EQ(back.rows.size(), t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(back.rows[i][j], t.rows[i][j]);
    spit(dir / "bad.csv", "x,y\n1,2\n3\n");
    EXPECT_THROW(ex::read_csv(dir / "bad.csv"), spinlab::InvalidInput);
    spit(dir / "bad2.csv", "x,y\n1,two\n");
    EXPECT_THROW(ex::read_csv(dir / "bad2.csv"), spinlab::InvalidInput);
}

TEST(Expcli, FitSubcommand) {
    auto dir = scratch("fit");
    std::string csv = "x,y\n";
    for (int k = 0; k <= 40; ++k) {
        const double x = 0.1 * k;
        char line[80];
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", x, 3.0 * std::exp(-1.7 * x) + 0.25);
        csv += line;
    }
    spit(dir / "decay.csv", csv);
    auto r = cli("fit exp_decay decay.csv", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["model"], "exp_decay");
    EXPECT_EQ(j["n_points"], 41);
    EXPECT_EQ(j["weighting"], "unit");
    const json ref = ex::fit_csv("exp_decay", dir / "decay.csv");
    EXPECT_EQ(j["params"], ref["params"]);

    // A flat trace carries no decay: non-convergence or rank deficiency, exit 3.
    std::string flat = "x,y\n";
    for (int k = 0; k <= 40; ++k) flat += std::to_string(0.1 * k) + ",1.0\n";
    spit(dir / "flat.csv", flat);
    auto f = cli("fit exp_decay flat.csv", dir);
    EXPECT_EQ(f.code, 3) << f.out;
    EXPECT_EQ(json::parse(f.err)["exit_code"], 3);

    EXPECT_EQ(cli("fit no_such_model decay.csv", dir).code, 2);
    EXPECT_EQ(cli("fit exp_decay absent.csv", dir).code, 2);
    EXPECT_EQ(cli("fit exp_decay decay.csv --weighting sigma", dir).code, 2);
}

TEST(Expcli, FitExperimentFromSyntheticData) {
    auto dir = scratch("fitexp");
    write_config(dir / "c.json", {{"experiment", "fit"},
                                  {"output_dir", "o"},
                                  {"parameters",
                                   {{"model", "lorentzian"},
                                    {"true_params", {2.0, 0.5, 0.3, 0.1}},
                                    {"x_min", -2.0},
                                    {"x_max", 2.0}}}});
    auto r = cli("run c.json", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json s = json::parse(slurp(dir / "o" / "summary.json"));
    ASSERT_EQ(s["results"]["params"].size(), 4u);
    const auto &m = spinlab::fitkit::model("lorentzian");
    for (std::size_t k = 0; k < m.size(); ++k)
        EXPECT_NEAR(s["results"]["params"][m.params[k].name].get<double>(),
                    s["results"]["true_params"][k].get<double>(), 1e-6)
            << m.params[k].name;
}

TEST(Expcli, ExitCodeMapping) {
    EXPECT_EQ(ex::exit_code_for(spinlab::InvalidInput("x")), 2);
    EXPECT_EQ(ex::exit_code_for(spinlab::DegenerateInput("x")), 2);
    EXPECT_EQ(ex::exit_code_for(spinlab::FitFailure("x")), 3);
    EXPECT_EQ(ex::exit_code_for(spinlab::RankDeficiency("x")), 3);
    EXPECT_EQ(ex::exit_code_for(spinlab::ConsistencyError("x")), 4);
    EXPECT_EQ(ex::exit_code_for(std::runtime_error("x")), 4);
    const json j = ex::error_json(spinlab::ConsistencyError("boom"));
    EXPECT_EQ(j["exit_code"], 4);
    EXPECT_EQ(j["message"], "boom");
}

TEST(Expcli, UnwritableOutputIsInternalError) {
    auto dir = scratch("unwritable");
    spit(dir / "taken", "a file, not a directory");
    auto r = cli("run '" + (kSource / "configs" / "fig2b_rabi.json").string() + "' --out taken", dir);
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(json::parse(r.err)["exit_code"], 4);
}

TEST(Expcli, EveryExampleConfigRunsUnderOneMinute) {
    auto dir = scratch("all");
    int n = 0;
    for (auto &f : fs::directory_iterator(kSource / "configs")) {
        if (f.path().extension() != ".json" || f.path().stem() == "calibration") continue;
        ++n;
        const auto t0 = std::chrono::steady_clock::now();
        auto r = cli("run '" + f.path().string() + "' --out " + f.path().stem().string(), dir);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EXPECT_EQ(r.code, 0) << f.path().filename() << ": " << r.err;
        EXPECT_LT(s, 60.0) << f.path().filename();
        const json rec = json::parse(slurp(dir / f.path().stem() / "run_record.json"));
        for (auto &m : rec["manifest"]) EXPECT_TRUE(fs::exists(dir / f.path().stem() / m.get<std::string>()));
    }
    EXPECT_EQ(n, 21);
}
