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

#pragma once

#include "spinlab/levels.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinlab::expcli {

using json = nlohmann::json;

constexpr const char *kVersion = "0.1.0";

struct ParamDoc {
    std::string name;
    std::string type;  // number, integer, string, bool, number[], integer[]
    std::string unit;
    json default_value;
    std::string doc;
};

struct ExperimentDoc {
    std::string name;
    std::string summary;
    std::vector<ParamDoc> params;
    std::vector<std::string> csv_columns;
};

/// The eleven experiments in a fixed order.
const std::vector<ExperimentDoc> &experiments();
std::vector<std::string> list_experiments();
/// Throws InvalidInput for unknown names.
const ExperimentDoc &experiment_doc(const std::string &name);
std::string describe(const std::string &name);
json describe_json(const std::string &name);

struct Calibration {
    levels::FineStructureParams fine;
    levels::HyperfineParams hyperfine;
    std::string version;
    json raw;
};

Calibration default_calibration();
Calibration load_calibration(const std::filesystem::path &path);

struct ExperimentConfig {
    std::string experiment;
    json parameters = json::object();
    std::optional<std::uint64_t> seed;
    std::filesystem::path output_dir = "out";
    std::optional<std::filesystem::path> calibration_file;
    json raw;  // as read

    /// Parameters merged with documented defaults.
    json effective_parameters() const;
};

/// Parses and validates; relative paths resolve against the config's folder.
/// A seed override replaces the file's seed before validation.
ExperimentConfig load_config(const std::filesystem::path &path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig parse_config(const json &j, const std::filesystem::path &base_dir);
void validate_config(const ExperimentConfig &cfg);

/// SHA-256 of the canonical (sorted-key) dump.
std::string sha256_hex(const std::string &bytes);
std::string config_hash(const ExperimentConfig &cfg, const Calibration &cal);

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ExperimentOutput {
    std::vector<Table> tables;
    json results = json::object();
};

/// Runs the experiment in memory.
ExperimentOutput execute(const ExperimentConfig &cfg, const Calibration &cal);

struct RunRecord {
    std::string config_hash;
    std::string version;
    double wall_clock_s = 0.0;
    json results;
    std::vector<std::string> manifest;

    json to_json() const;
};

/// Executes and writes <table>.csv, summary.json and run_record.json.
RunRecord run(const ExperimentConfig &cfg);

/// CSV with 17 significant digits.
std::string to_csv(const Table &t);
/// Reads a numeric CSV with a header row.
Table read_csv(const std::filesystem::path &path);

/// `spinlab fit <model> <csv>`: columns x, y and optionally sigma or counts.
json fit_csv(const std::string &model, const std::filesystem::path &csv, const std::string &weighting = "auto");

/// Exit code for an exception (2 validation, 3 fit, 4 consistency).
int exit_code_for(const std::exception &e);
json error_json(const std::exception &e);

}  // namespace spinlab::expcli
