// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/evaluation.hpp"
#include "fieldrank/interaction.hpp"
#include "fieldrank/models.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fieldrank {

struct CorrelationRow {
    std::string interaction;
    double correlation = 0.0;
    std::size_t n = 0;
};

/// Rows sorted by descending correlation, ties by interaction name.
struct CorrelationTable {
    std::vector<CorrelationRow> rows;
};

void sort_table(CorrelationTable& table);

/// Pearson correlation between each FwFM interaction term and the click
/// label, pooled over every candidate of every given session.
CorrelationTable compute_correlations(const ModelConfig& fwfm_config, const ModelParams& params,
                                      const Dataset& dataset, std::span<const std::size_t> sessions,
                                      const PreparedCatalog& catalog);
CorrelationTable compute_correlations(const ModelConfig& fwfm_config, const ModelParams& params,
                                      std::span<const Session> sessions, const Dataset& dataset);

/// Averages correlations row-wise across tables; n is summed.
CorrelationTable mean_table(std::span<const CorrelationTable> tables);

/// The top-m rows as a canonical spec.
InteractionSpec select_interactions(const CorrelationTable& table, std::size_t m);

/// 1-based rank of `interaction` in `table`, 0 when absent.
std::size_t rank_of(const CorrelationTable& table, const std::string& interaction);

void write_correlation_csv(std::ostream& out, const CorrelationTable& table);

struct SweepPoint {
    std::size_t m = 0;
    double val_ndcg = 0.0;
    std::vector<double> per_fold;
};

struct SweepResult {
    std::size_t best_m = 0;
    std::vector<SweepPoint> curve;
    /// Per fold: the table from the fold's all-interactions FwFM.
    std::vector<CorrelationTable> fold_tables;
    /// Per fold: test NDCG of the all-interactions FwFM.
    std::vector<double> all_test;
    /// Per fold: test NDCG of the FwFM restricted to best_m interactions.
    std::vector<double> selected_test;
    /// Per fold: validation NDCG of the all-interactions FwFM.
    std::vector<double> all_val;
};

/// For each fold, trains `all_config` (FwFM over all interactions), builds its
/// correlation table on the fold's validation sessions, then for each m
/// retrains FwFM on the top-m spec and records validation NDCG. best_m
/// maximizes the fold-averaged validation NDCG (ties: smaller m). Finally the
/// best_m model is scored on each fold's test sessions.
SweepResult sweep_m(std::span<const std::size_t> candidate_ms, const ModelConfig& all_config,
                    const Dataset& dataset, const FoldSplit& split, const TrainConfig& train_config,
                    const MetricConfig& metric, std::size_t jobs = 1, double val_fraction = 0.1);

} // namespace fieldrank
