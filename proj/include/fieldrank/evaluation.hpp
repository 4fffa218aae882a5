// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/ingestion.hpp"
#include "fieldrank/models.hpp"
#include "fieldrank/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fieldrank {

struct MetricConfig {
    /// Rank cutoff; gains are binary and the discount is 1 / log2(rank + 1).
    std::size_t k = 20;
};

/// NDCG@k of `scores` against binary relevance. Ties keep the original
/// candidate order. Returns nullopt when no item is relevant.
std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const int> relevance, std::size_t k);

struct SessionMetric {
    std::size_t session_index = 0;
    std::string session_id;
    double ndcg = 0.0;
};

struct ModelEvaluation {
    double mean = 0.0;
    std::vector<SessionMetric> per_session;
};

/// `indices` select the sessions of `dataset` to evaluate.
ModelEvaluation evaluate_model(const ModelConfig& config, const ModelParams& params, const Dataset& dataset,
                               std::span<const std::size_t> indices, const PreparedCatalog& catalog,
                               const MetricConfig& metric);
ModelEvaluation evaluate_model(const ModelConfig& config, const ModelParams& params,
                               std::span<const Session> sessions, const Dataset& dataset,
                               const MetricConfig& metric);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// min(1, p * m) for each p.
std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m);

enum class Pairing { Fold, Session };

struct SignificanceConfig {
    double alpha = 0.01;
    /// Pair per-fold means (default) or per-session values.
    Pairing pairing = Pairing::Fold;

    void validate() const;
};

struct NamedModel {
    std::string name;
    ModelConfig config;
};

struct ModelReport {
    std::string name;
    std::vector<double> per_fold;
    double mean = 0.0;
};

struct Comparison {
    std::string a;
    std::string b;
    double t = 0.0;
    double p = 1.0;
    double p_adj = 1.0;
    bool significant = false;
    /// Name of the model with the higher mean when significant, else empty.
    std::string better;
};

struct EvalReport {
    std::size_t k = 20;
    std::size_t folds = 0;
    std::vector<ModelReport> models;
    std::vector<Comparison> comparisons;
};

/// Sessions used in one cross-validation round.
struct FoldPartition {
    std::vector<std::size_t> train;
    /// Held out from `train` for early stopping and interaction selection.
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Test = sessions in `fold`; a seeded `val_fraction` of the rest becomes validation.
FoldPartition partition_fold(const FoldSplit& split, std::size_t fold, std::uint64_t seed,
                             double val_fraction = 0.1);

struct FoldRun {
    std::size_t model = 0;
    std::size_t fold = 0;
    ModelConfig config;
    TrainResult train;
    ModelEvaluation test;
};

struct CrossvalOptions {
    std::size_t jobs = 1;
    double val_fraction = 0.1;
    /// Keeps trained parameters in the returned runs for models it accepts.
    std::function<bool(std::size_t model)> keep_params;
};

struct CrossvalResult {
    EvalReport report;
    /// One entry per (model, fold), ordered by model then fold.
    std::vector<FoldRun> runs;
    std::vector<FoldPartition> partitions;
};

/// Seeds used for a model in one fold, derived from the model's own seeds.
ModelConfig fold_model_config(const ModelConfig& config, std::size_t fold);
TrainConfig fold_train_config(const TrainConfig& config, std::size_t fold);

/// Trains on one fold's training part with early stopping on its validation part.
TrainResult train_on_fold(const ModelConfig& config, const Dataset& dataset, const FoldPartition& part,
                          const PreparedCatalog& catalog, const TrainConfig& train_config,
                          const MetricConfig& metric);

CrossvalResult run_crossval(const std::vector<NamedModel>& models, const Dataset& dataset, const FoldSplit& split,
                            const TrainConfig& train_config, const MetricConfig& metric,
                            const SignificanceConfig& significance, const CrossvalOptions& options = {});

/// Fills the comparison table from per-fold (or per-session) values.
std::vector<Comparison> compare_models(const std::vector<ModelReport>& models,
                                       const std::vector<std::vector<double>>& paired_values,
                                       const SignificanceConfig& significance);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// model,fold,ndcg rows.
void write_boxplot_csv(std::ostream& out, const EvalReport& report);

/// Plain-text tables of means and comparisons.
std::string render_report(const EvalReport& report);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure by index.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

} // namespace fieldrank
