// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/evaluation.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"
#include "fieldrank/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace fieldrank {

namespace {

using nlohmann::json;

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or_nan(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace

std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const int> relevance, std::size_t k)
{
    if (scores.size() != relevance.size()) {
        throw DataError("ndcg: scores and relevance differ in length");
    }
    if (scores.empty()) {
        throw DataError("ndcg: empty ranking");
    }
    if (k == 0) {
        throw ConfigError("ndcg: k must be at least 1");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const std::size_t cutoff = std::min(k, scores.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i) {
        if (relevance[order[i]] > 0) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    const auto relevant = static_cast<std::size_t>(
        std::count_if(relevance.begin(), relevance.end(), [](int r) { return r > 0; }));
    if (relevant == 0) {
        return std::nullopt;
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(relevant, cutoff); ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

ModelEvaluation evaluate_model(const ModelConfig& config, const ModelParams& params, const Dataset& dataset,
                               std::span<const std::size_t> indices, const PreparedCatalog& catalog,
                               const MetricConfig& metric)
{
    ModelEvaluation out;
    double sum = 0.0;
    for (std::size_t idx : indices) {
        const Session& s = dataset.sessions.at(idx);
        const auto scores = score_session(config, params, catalog, s);
        std::vector<int> rel(s.candidates.size(), 0);
        for (auto p : s.clicked_positions) {
            rel.at(p) = 1;
        }
        const auto v = ndcg_at_k(scores, rel, metric.k);
        if (!v) {
            continue;
        }
        out.per_session.push_back({idx, s.session_id, *v});
        sum += *v;
    }
    if (out.per_session.empty()) {
        throw DataError("no evaluable sessions");
    }
    out.mean = sum / static_cast<double>(out.per_session.size());
    return out;
}

ModelEvaluation evaluate_model(const ModelConfig& config, const ModelParams& params,
                               std::span<const Session> sessions, const Dataset& dataset,
                               const MetricConfig& metric)
{
    Dataset view;
    view.sessions.assign(sessions.begin(), sessions.end());
    if (config.family != ModelFamily::Random) {
        for (const Session& s : sessions) {
            for (const auto& id : s.candidates) {
                auto it = dataset.catalog.find(id);
                if (it == dataset.catalog.end()) {
                    throw DataError("session " + s.session_id + " references unknown doc_id " + id);
                }
                view.catalog.emplace(id, it->second);
            }
        }
    }
    std::vector<std::size_t> idx(sessions.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const PreparedCatalog catalog(view, config.encoder);
    return evaluate_model(config, params, view, idx, catalog, metric);
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw DataError("paired t-test: samples differ in length");
    }
    if (a.size() < 2) {
        throw DataError("paired t-test: need at least two pairs");
    }
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    const double md = mean(d);
    const double sd = sample_sd(d);
    if (sd < 1e-12) {
        if (md == 0.0) {
            return {0.0, 1.0};
        }
        return {std::copysign(std::numeric_limits<double>::infinity(), md), 0.0};
    }
    const double n = static_cast<double>(d.size());
    const double t = md / (sd / std::sqrt(n));
    return {t, student_t_two_sided_p(t, n - 1.0)};
}

std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m)
{
    if (p_values.empty() || m < p_values.size()) {
        throw DataError("bonferroni: need m >= number of p-values >= 1");
    }
    std::vector<double> out;
    out.reserve(p_values.size());
    for (double p : p_values) {
        out.push_back(std::min(1.0, p * static_cast<double>(m)));
    }
    return out;
}

void SignificanceConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
}

FoldPartition partition_fold(const FoldSplit& split, std::size_t fold, std::uint64_t seed, double val_fraction)
{
    if (fold >= split.fold_count) {
        throw ConfigError("fold index out of range");
    }
    FoldPartition part;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < split.assignments.size(); ++i) {
        (split.assignments[i] == fold ? part.test : rest).push_back(i);
    }
    if (rest.size() < 2) {
        throw DataError("fold " + std::to_string(fold) + " leaves fewer than two training sessions");
    }
    auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(rest.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
    Rng rng(mix_seed(seed, fold));
    rng.shuffle(rest);
    part.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    part.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    std::sort(part.validation.begin(), part.validation.end());
    std::sort(part.train.begin(), part.train.end());
    return part;
}

ModelConfig fold_model_config(const ModelConfig& config, std::size_t fold)
{
    ModelConfig c = config;
    c.seed = mix_seed(config.seed, fold);
    return c;
}

TrainConfig fold_train_config(const TrainConfig& config, std::size_t fold)
{
    TrainConfig c = config;
    c.seed = mix_seed(config.seed, fold);
    return c;
}

TrainResult train_on_fold(const ModelConfig& config, const Dataset& dataset, const FoldPartition& part,
                          const PreparedCatalog& catalog, const TrainConfig& train_config,
                          const MetricConfig& metric)
{
    std::vector<Session> train_sessions;
    train_sessions.reserve(part.train.size());
    for (auto i : part.train) {
        train_sessions.push_back(dataset.sessions[i]);
    }
    const ValidationFn validate = [&](const ModelParams& p) {
        return evaluate_model(config, p, dataset, part.validation, catalog, metric).mean;
    };
    return train(config, train_sessions, dataset, train_config, validate);
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn)
{
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::vector<Comparison> compare_models(const std::vector<ModelReport>& models,
                                       const std::vector<std::vector<double>>& paired_values,
                                       const SignificanceConfig& significance)
{
    std::vector<Comparison> out;
    const std::size_t n = models.size();
    if (n < 2) {
        return out;
    }
    std::vector<double> raw;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto tt = paired_ttest(paired_values[i], paired_values[j]);
            Comparison c;
            c.a = models[i].name;
            c.b = models[j].name;
            c.t = tt.t;
            c.p = tt.p;
            out.push_back(c);
            raw.push_back(tt.p);
        }
    }
    const auto adj = bonferroni(raw, raw.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            Comparison& c = out[k];
            c.p_adj = adj[k];
            c.significant = c.p_adj < significance.alpha;
            if (c.significant && models[i].mean != models[j].mean) {
                c.better = models[i].mean > models[j].mean ? models[i].name : models[j].name;
            }
        }
    }
    return out;
}

CrossvalResult run_crossval(const std::vector<NamedModel>& models, const Dataset& dataset, const FoldSplit& split,
                            const TrainConfig& train_config, const MetricConfig& metric,
                            const SignificanceConfig& significance, const CrossvalOptions& options)
{
    significance.validate();
    train_config.validate();
    if (split.fold_count < 2) {
        throw ConfigError("cross-validation needs at least two folds");
    }
    if (split.assignments.size() != dataset.sessions.size()) {
        throw ConfigError("fold split does not match the session list");
    }
    if (models.empty()) {
        throw ConfigError("no models to evaluate");
    }
    for (const auto& m : models) {
        m.config.validate();
    }

    CrossvalResult result;
    for (std::size_t f = 0; f < split.fold_count; ++f) {
        result.partitions.push_back(partition_fold(split, f, train_config.seed, options.val_fraction));
    }

    // Models sharing an encoder config share the prepared catalog. The random
    // scorer never reads documents, so it gets an empty one.
    std::vector<std::unique_ptr<PreparedCatalog>> catalogs;
    std::vector<std::size_t> catalog_of(models.size());
    std::optional<std::size_t> empty_catalog;
    for (std::size_t m = 0; m < models.size(); ++m) {
        if (models[m].config.family == ModelFamily::Random) {
            if (!empty_catalog) {
                empty_catalog = catalogs.size();
                catalogs.push_back(std::make_unique<PreparedCatalog>(Dataset{}, EncoderConfig{}));
            }
            catalog_of[m] = *empty_catalog;
            continue;
        }
        std::size_t found = m;
        for (std::size_t prev = 0; prev < m; ++prev) {
            if (models[prev].config.family != ModelFamily::Random &&
                models[prev].config.encoder == models[m].config.encoder) {
                found = catalog_of[prev];
                break;
            }
        }
        if (found == m) {
            catalog_of[m] = catalogs.size();
            catalogs.push_back(std::make_unique<PreparedCatalog>(dataset, models[m].config.encoder));
        } else {
            catalog_of[m] = found;
        }
    }

    const std::size_t folds = split.fold_count;
    result.runs.resize(models.size() * folds);
    parallel_for(result.runs.size(), options.jobs, [&](std::size_t task) {
        const std::size_t m = task / folds;
        const std::size_t f = task % folds;
        FoldRun& run = result.runs[task];
        run.model = m;
        run.fold = f;
        run.config = fold_model_config(models[m].config, f);
        const PreparedCatalog& catalog = *catalogs[catalog_of[m]];
        const FoldPartition& part = result.partitions[f];
        run.train = train_on_fold(run.config, dataset, part, catalog, fold_train_config(train_config, f), metric);
        run.test = evaluate_model(run.config, run.train.params, dataset, part.test, catalog, metric);
        if (!options.keep_params || !options.keep_params(m)) {
            run.train.params = ModelParams{};
        }
    });

    EvalReport& report = result.report;
    report.k = metric.k;
    report.folds = folds;
    std::vector<std::vector<double>> paired(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        ModelReport mr;
        mr.name = models[m].name;
        std::vector<std::pair<std::size_t, double>> per_session;
        for (std::size_t f = 0; f < folds; ++f) {
            const FoldRun& run = result.runs[m * folds + f];
            mr.per_fold.push_back(run.test.mean);
            for (const auto& sm : run.test.per_session) {
                per_session.emplace_back(sm.session_index, sm.ndcg);
            }
        }
        mr.mean = mean(mr.per_fold);
        if (significance.pairing == Pairing::Fold) {
            paired[m] = mr.per_fold;
        } else {
            std::sort(per_session.begin(), per_session.end());
            for (const auto& [idx, v] : per_session) {
                paired[m].push_back(v);
            }
        }
        report.models.push_back(std::move(mr));
    }
    report.comparisons = compare_models(report.models, paired, significance);
    return result;
}

json report_to_json(const EvalReport& report)
{
    json models = json::array();
    for (const auto& m : report.models) {
        models.push_back({{"name", m.name}, {"per_fold", m.per_fold}, {"mean", m.mean}});
    }
    json comparisons = json::array();
    for (const auto& c : report.comparisons) {
        comparisons.push_back({{"a", c.a},
                               {"b", c.b},
                               {"t", finite_or_null(c.t)},
                               {"p", c.p},
                               {"p_adj", c.p_adj},
                               {"significant", c.significant},
                               {"better", c.better.empty() ? json(nullptr) : json(c.better)}});
    }
    return {{"metric", "ndcg@" + std::to_string(report.k)},
            {"folds", report.folds},
            {"models", models},
            {"comparisons", comparisons}};
}

EvalReport report_from_json(const json& j)
{
    EvalReport r;
    try {
        const auto metric = j.at("metric").get<std::string>();
        if (!metric.starts_with("ndcg@")) {
            throw DataError("report: unsupported metric " + metric);
        }
        r.k = std::stoul(metric.substr(5));
        r.folds = j.at("folds").get<std::size_t>();
        for (const auto& m : j.at("models")) {
            r.models.push_back({m.at("name").get<std::string>(), m.at("per_fold").get<std::vector<double>>(),
                                m.at("mean").get<double>()});
        }
        for (const auto& c : j.at("comparisons")) {
            Comparison cmp;
            cmp.a = c.at("a").get<std::string>();
            cmp.b = c.at("b").get<std::string>();
            cmp.t = number_or_nan(c.at("t"));
            cmp.p = c.at("p").get<double>();
            cmp.p_adj = c.at("p_adj").get<double>();
            cmp.significant = c.at("significant").get<bool>();
            if (c.contains("better") && !c.at("better").is_null()) {
                cmp.better = c.at("better").get<std::string>();
            }
            r.comparisons.push_back(std::move(cmp));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("report: ") + e.what());
    }
    return r;
}

void write_boxplot_csv(std::ostream& out, const EvalReport& report)
{
    out << "model,fold,ndcg\n";
    char buf[64];
    for (const auto& m : report.models) {
        for (std::size_t f = 0; f < m.per_fold.size(); ++f) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.per_fold[f]);
            out << m.name << ',' << f << ',' << buf << '\n';
        }
    }
}

std::string render_report(const EvalReport& report)
{
    std::ostringstream out;
    char buf[256];
    std::size_t width = 5;
    for (const auto& m : report.models) {
        width = std::max(width, m.name.size());
    }
    const int w = static_cast<int>(width);
    std::snprintf(buf, sizeof(buf), "%-*s  NDCG@%zu (mean over %zu folds)\n", w, "model", report.k, report.folds);
    out << buf;
    for (const auto& m : report.models) {
        std::snprintf(buf, sizeof(buf), "%-*s  %.4f\n", w, m.name.c_str(), m.mean);
        out << buf;
    }
    if (!report.comparisons.empty()) {
        out << "\npairwise t-tests (Bonferroni, m=" << report.comparisons.size() << ")\n";
        for (const auto& c : report.comparisons) {
            std::snprintf(buf, sizeof(buf), "%-*s vs %-*s  t=%9.4f  p=%.3g  p_adj=%.3g  %s\n", w, c.a.c_str(), w,
                          c.b.c_str(), c.t, c.p, c.p_adj, c.significant ? ("* " + c.better).c_str() : "");
            out << buf;
        }
    }
    return out.str();
}

} // namespace fieldrank
