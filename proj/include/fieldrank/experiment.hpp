// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/evaluation.hpp"
#include "fieldrank/selection.hpp"
#include "fieldrank/synthgen.hpp"
#include "fieldrank/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fieldrank {

/// Command-line values that take precedence over the config file.
struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::size_t> folds;
    std::optional<std::size_t> k;
    std::optional<double> alpha;
};

struct ExperimentConfig {
    /// Default for every seed the file leaves unset.
    std::uint64_t seed = 0;
    std::optional<std::string> catalog_path;
    std::optional<std::string> log_path;
    std::optional<GenConfig> synthgen;
    std::uint64_t bucket_count = 1u << 15;
    bool shared_token_table = true;
    /// Encoder vocabularies are filled in once the data is loaded.
    std::vector<NamedModel> models;
    TrainConfig train;
    MetricConfig metric;
    SignificanceConfig significance;
    std::size_t folds = 10;
    double val_fraction = 0.1;
    std::size_t jobs = 1;
    std::string out = "out";
    /// Candidate sizes for the selection sweep; empty means the default ladder.
    std::vector<std::size_t> select_ms;
};

/// Parses and validates a config without touching the data. Throws ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const Overrides& overrides = {});
ExperimentConfig load_experiment(const std::string& path, const Overrides& overrides = {});

/// Parses a model entry: {"name","family","interactions","first_order","fields","d","hidden_widths","seed"}.
NamedModel model_from_json(const nlohmann::json& j, std::uint64_t default_seed);

struct CatalogVocabulary {
    /// Sorted distinct country labels.
    std::vector<std::string> countries;
    /// Length of the first image vector found, if any.
    std::optional<std::size_t> image_dim;
};

CatalogVocabulary catalog_vocabulary(const Dataset& data);

/// Loads or generates the sessions and fills every model's encoder vocabulary.
Dataset load_experiment_data(ExperimentConfig& config, std::ostream& log);

/// True for an FwFM over every first-order field and every pair of all fields.
bool is_fwfm_all(const ModelConfig& config);

/// Creates `dir` and checks that files can be written into it. Throws ConfigError.
void ensure_writable_dir(const std::string& dir);

struct GenerateSummary {
    std::size_t documents = 0;
    std::size_t sessions = 0;
    std::size_t log_records = 0;
    std::size_t dropped_sessions = 0;
};

/// Reads a GenConfig (an optional "out" key names the output directory) and
/// writes catalog.jsonl and log.jsonl.
GenerateSummary command_generate(const std::string& config_path, const Overrides& overrides, std::ostream& log);

/// Runs cross-validation and writes report.json, boxplot.csv, history/ and,
/// with an FwFM-all model, correlation tables.
EvalReport command_crossval(const std::string& config_path, const Overrides& overrides, std::ostream& log);

/// Runs the selection sweep over `ms` (empty: config list or default ladder) and
/// writes correlation tables, sweep.csv, selected_spec.json and selection.json.
SweepResult command_select(const std::string& config_path, const std::vector<std::size_t>& ms,
                           const Overrides& overrides, std::ostream& log);

struct GradCheckRow {
    std::string family;
    std::string spec;
    GradCheckResult result;
    bool passed = false;
};

/// The model variants the gradient check covers.
std::vector<std::pair<std::string, ModelConfig>> gradcheck_variants();

/// Checks every variant; rows are printed to `out`.
std::vector<GradCheckRow> command_gradcheck(std::ostream& out, bool corrupt, double threshold = 1e-4);

/// Re-renders the tables of an existing report.json.
std::string command_report(const std::string& report_path);

} // namespace fieldrank
