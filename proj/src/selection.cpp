// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/selection.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

namespace fieldrank {

void sort_table(CorrelationTable& table)
{
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const CorrelationRow& a, const CorrelationRow& b) {
        if (a.correlation != b.correlation) {
            return a.correlation > b.correlation;
        }
        return a.interaction < b.interaction;
    });
}

CorrelationTable compute_correlations(const ModelConfig& config, const ModelParams& params, const Dataset& dataset,
                                      std::span<const std::size_t> sessions, const PreparedCatalog& catalog)
{
    if (config.family != ModelFamily::FwFM) {
        throw ConfigError("correlations need an fwfm model");
    }
    if (sessions.empty()) {
        throw DataError("correlations: empty validation set");
    }
    const auto entries = config.spec.entries();
    std::vector<std::vector<double>> streams(entries.size());
    std::vector<double> labels;

    const auto fields = used_fields(config);
    for (std::size_t idx : sessions) {
        const Session& s = dataset.sessions.at(idx);
        const PreparedInput q = catalog.query(s);
        for (std::size_t pos = 0; pos < s.candidates.size(); ++pos) {
            const FieldVectors v = encode_inputs(config, params, q, catalog.doc(s.candidates[pos]));
            const auto contrib = interaction_contributions(config, params, v);
            for (std::size_t e = 0; e < contrib.size(); ++e) {
                streams[e].push_back(contrib[e].second);
            }
            labels.push_back(s.is_clicked(pos) ? 1.0 : 0.0);
        }
    }

    CorrelationTable table;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        table.rows.push_back({entries[e].name(), pearson(streams[e], labels), labels.size()});
    }
    sort_table(table);
    return table;
}

CorrelationTable compute_correlations(const ModelConfig& config, const ModelParams& params,
                                      std::span<const Session> sessions, const Dataset& dataset)
{
    Dataset view;
    view.sessions.assign(sessions.begin(), sessions.end());
    for (const Session& s : sessions) {
        for (const auto& id : s.candidates) {
            auto it = dataset.catalog.find(id);
            if (it == dataset.catalog.end()) {
                throw DataError("session " + s.session_id + " references unknown doc_id " + id);
            }
            view.catalog.emplace(id, it->second);
        }
    }
    std::vector<std::size_t> idx(sessions.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const PreparedCatalog catalog(view, config.encoder);
    return compute_correlations(config, params, view, idx, catalog);
}

CorrelationTable mean_table(std::span<const CorrelationTable> tables)
{
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& t : tables) {
        for (const auto& row : t.rows) {
            auto& [sum, n] = acc[row.interaction];
            sum += row.correlation;
            n += row.n;
        }
    }
    CorrelationTable out;
    for (const auto& [name, v] : acc) {
        out.rows.push_back({name, v.first / static_cast<double>(tables.size()), v.second});
    }
    sort_table(out);
    return out;
}

InteractionSpec select_interactions(const CorrelationTable& table, std::size_t m)
{
    if (m < 1 || m > table.rows.size()) {
        throw ConfigError("select_interactions: m=" + std::to_string(m) + " outside [1, " +
                          std::to_string(table.rows.size()) + "]");
    }
    std::vector<InteractionEntry> entries;
    for (std::size_t i = 0; i < m; ++i) {
        entries.push_back(InteractionEntry::parse(table.rows[i].interaction));
    }
    return spec_from_entries(entries);
}

std::size_t rank_of(const CorrelationTable& table, const std::string& interaction)
{
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].interaction == interaction) {
            return i + 1;
        }
    }
    return 0;
}

void write_correlation_csv(std::ostream& out, const CorrelationTable& table)
{
    out << "interaction,correlation,n\n";
    char buf[64];
    for (const auto& row : table.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.correlation);
        out << row.interaction << ',' << buf << ',' << row.n << '\n';
    }
}

SweepResult sweep_m(std::span<const std::size_t> candidate_ms, const ModelConfig& all_config,
                    const Dataset& dataset, const FoldSplit& split, const TrainConfig& train_config,
                    const MetricConfig& metric, std::size_t jobs, double val_fraction)
{
    if (candidate_ms.empty()) {
        throw ConfigError("sweep: candidate list is empty");
    }
    if (all_config.family != ModelFamily::FwFM) {
        throw ConfigError("sweep: the base model must be fwfm");
    }
    all_config.validate();
    for (auto m : candidate_ms) {
        if (m < 1 || m > all_config.spec.size()) {
            throw ConfigError("sweep: m=" + std::to_string(m) + " outside [1, " +
                              std::to_string(all_config.spec.size()) + "]");
        }
    }

    const std::size_t folds = split.fold_count;
    std::vector<FoldPartition> parts;
    for (std::size_t f = 0; f < folds; ++f) {
        parts.push_back(partition_fold(split, f, train_config.seed, val_fraction));
    }
    const PreparedCatalog catalog(dataset, all_config.encoder);

    SweepResult result;
    result.fold_tables.resize(folds);
    result.all_test.resize(folds);
    result.all_val.resize(folds);
    std::vector<std::vector<double>> val(candidate_ms.size(), std::vector<double>(folds));
    std::vector<std::vector<InteractionSpec>> specs(candidate_ms.size(), std::vector<InteractionSpec>(folds));

    // Stage 1: the all-interactions model per fold and its correlation table.
    parallel_for(folds, jobs, [&](std::size_t f) {
        const ModelConfig cfg = fold_model_config(all_config, f);
        const TrainResult tr = train_on_fold(cfg, dataset, parts[f], catalog, fold_train_config(train_config, f), metric);
        result.fold_tables[f] = compute_correlations(cfg, tr.params, dataset, parts[f].validation, catalog);
        result.all_val[f] = evaluate_model(cfg, tr.params, dataset, parts[f].validation, catalog, metric).mean;
        result.all_test[f] = evaluate_model(cfg, tr.params, dataset, parts[f].test, catalog, metric).mean;
    });

    // Stage 2: retrain on each top-m spec.
    const std::size_t n_ms = candidate_ms.size();
    parallel_for(n_ms * folds, jobs, [&](std::size_t task) {
        const std::size_t i = task / folds;
        const std::size_t f = task % folds;
        ModelConfig cfg = all_config;
        cfg.spec = select_interactions(result.fold_tables[f], candidate_ms[i]);
        cfg = fold_model_config(cfg, f);
        specs[i][f] = cfg.spec;
        const TrainResult tr = train_on_fold(cfg, dataset, parts[f], catalog, fold_train_config(train_config, f), metric);
        val[i][f] = evaluate_model(cfg, tr.params, dataset, parts[f].validation, catalog, metric).mean;
    });

    std::size_t best = 0;
    for (std::size_t i = 0; i < n_ms; ++i) {
        SweepPoint pt{candidate_ms[i], mean(val[i]), val[i]};
        result.curve.push_back(pt);
        const double cur = result.curve[i].val_ndcg;
        const double top = result.curve[best].val_ndcg;
        if (cur > top || (cur == top && candidate_ms[i] < candidate_ms[best])) {
            best = i;
        }
    }
    result.best_m = candidate_ms[best];

    // Stage 3: held-out score of the chosen m.
    result.selected_test.resize(folds);
    parallel_for(folds, jobs, [&](std::size_t f) {
        ModelConfig cfg = all_config;
        cfg.spec = specs[best][f];
        cfg = fold_model_config(cfg, f);
        const TrainResult tr = train_on_fold(cfg, dataset, parts[f], catalog, fold_train_config(train_config, f), metric);
        result.selected_test[f] = evaluate_model(cfg, tr.params, dataset, parts[f].test, catalog, metric).mean;
    });
    return result;
}

} // namespace fieldrank
