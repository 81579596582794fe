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

// spinlab command-line runner.

#include "spinlab/errors.hpp"
#include "spinlab/expcli.hpp"

#include <CLI11.hpp>

#include <iostream>

using spinlab::expcli::json;
namespace ex = spinlab::expcli;

namespace {

int fail(const std::exception &e) {
    std::cerr << ex::error_json(e).dump() << std::endl;
    return ex::exit_code_for(e);
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"spinlab: SnV-13C register simulation and fitting toolkit"};
    app.set_version_flag("--version", ex::kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir, model_name, csv_path, weighting = "auto", experiment;
    std::uint64_t seed = 0;
    bool as_json = false;

    auto *run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "JSON config")->required();
    auto *seed_opt = run->add_option("--seed", seed, "override the config seed");
    auto *out_opt = run->add_option("--out", out_dir, "override the output directory");

    auto *fit = app.add_subcommand("fit", "fit a registered model to CSV data (columns x, y[, sigma|counts])");
    fit->add_option("model", model_name, "model name")->required();
    fit->add_option("csv", csv_path, "data file")->required();
    fit->add_option("--weighting", weighting, "auto, unit, poisson or sigma");

    auto *desc = app.add_subcommand("describe", "parameter schema of an experiment, or the list of experiments");
    desc->add_option("experiment", experiment, "experiment name");
    desc->add_flag("--json", as_json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            auto cfg = ex::load_config(config_path, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt);
            if (*out_opt) cfg.output_dir = out_dir;
            auto rec = ex::run(cfg);
            json brief = {{"experiment", cfg.experiment},
                          {"output_dir", cfg.output_dir.string()},
                          {"config_hash", rec.config_hash},
                          {"wall_clock_s", rec.wall_clock_s},
                          {"files", rec.manifest}};
            std::cout << brief.dump(2) << std::endl;
        } else if (fit->parsed()) {
            std::cout << ex::fit_csv(model_name, csv_path, weighting).dump(2) << std::endl;
        } else if (experiment.empty()) {
            if (as_json)
                std::cout << json(ex::list_experiments()).dump() << std::endl;
            else
                for (auto &n : ex::list_experiments()) std::cout << n << "\n";
        } else {
            if (as_json)
                std::cout << ex::describe_json(experiment).dump(2) << std::endl;
            else
                std::cout << ex::describe(experiment);
        }
    } catch (const std::exception &e) {
        return fail(e);
    }
    return 0;
}
