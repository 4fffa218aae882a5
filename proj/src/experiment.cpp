// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/experiment.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/ingestion.hpp"
#include "fieldrank/selection.hpp"
#include "fieldrank/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace fieldrank {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

bool valid_name(const std::string& name)
{
    if (name.empty() || name == "." || name == "..") {
        return false;
    }
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
               c == '_' || c == '.';
    });
}

std::string fold_tag(std::size_t fold)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "fold%02zu", fold);
    return buf;
}

std::vector<FieldId> all_fields() { return {kAllFields.begin(), kAllFields.end()}; }

SelectionMode mode_from_name(const std::string& name)
{
    if (name == "query-field") {
        return SelectQueryField{};
    }
    if (name == "second-order-all") {
        return SelectSecondOrderAll{};
    }
    if (name == "all") {
        return SelectAll{};
    }
    if (name == "first-order") {
        return SelectFirstOrderOnly{};
    }
    throw ConfigError("unknown interaction selection '" + name + "'");
}

void write_json(const fs::path& path, const json& j)
{
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

std::vector<std::size_t> default_ladder(std::size_t size)
{
    std::vector<std::size_t> ms;
    for (std::size_t m : {1, 2, 3, 5, 8, 13}) {
        if (m < size) {
            ms.push_back(m);
        }
    }
    ms.push_back(size);
    return ms;
}

} // namespace

NamedModel model_from_json(const json& j, std::uint64_t default_seed)
{
    if (!j.is_object()) {
        throw ConfigError("model entries must be JSON objects");
    }
    NamedModel m;
    try {
        m.name = j.at("name").get<std::string>();
        if (!valid_name(m.name)) {
            throw ConfigError("model name '" + m.name + "' may only use letters, digits, '-', '_' and '.'");
        }
        m.config.family = family_from_name(j.at("family").get<std::string>());
        m.config.d = j.value("d", m.config.d);
        m.config.hidden_widths = j.value("hidden_widths", m.config.hidden_widths);
        m.config.seed = j.value("seed", default_seed);

        std::vector<FieldId> fields;
        if (j.contains("fields")) {
            for (const auto& name : j.at("fields").get<std::vector<std::string>>()) {
                auto f = field_from_name(name);
                if (!f) {
                    throw ConfigError("model " + m.name + ": unknown field '" + name + "'");
                }
                fields.push_back(*f);
            }
        } else {
            fields = all_fields();
        }

        if (m.config.family != ModelFamily::Random) {
            // FwFM keeps its first-order terms unless told otherwise; NRMF pairs come alone.
            const bool first = j.value("first_order", m.config.family == ModelFamily::FwFM);
            const json default_sel = m.config.family == ModelFamily::Concat ? json("first-order") : json("all");
            const json sel = j.value("interactions", default_sel);
            if (sel.is_string()) {
                m.config.spec = enumerate_interactions(fields, mode_from_name(sel.get<std::string>()), first);
            } else {
                m.config.spec = spec_from_json(sel);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model entry: ") + e.what());
    }
    m.config.validate();
    return m;
}

ExperimentConfig experiment_from_json(const json& j, const Overrides& ov)
{
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    ExperimentConfig c;
    try {
        c.seed = ov.seed ? *ov.seed : j.value("seed", c.seed);

        if (j.contains("data")) {
            const auto& d = j.at("data");
            c.catalog_path = d.at("catalog").get<std::string>();
            c.log_path = d.at("log").get<std::string>();
        }
        if (j.contains("synthgen")) {
            json g = j.at("synthgen");
            if (g.is_object() && !g.contains("seed")) {
                g["seed"] = c.seed;
            }
            c.synthgen = gen_config_from_json(g);
        }
        if (c.synthgen.has_value() == c.catalog_path.has_value()) {
            throw ConfigError("config needs exactly one of \"data\" and \"synthgen\"");
        }

        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            c.bucket_count = e.value("bucket_count", c.bucket_count);
            c.shared_token_table = e.value("shared_token_table", c.shared_token_table);
        }
        if (c.bucket_count == 0) {
            throw ConfigError("encoder bucket_count must be positive");
        }

        json train = j.value("train", json::object());
        if (train.is_object() && !train.contains("seed")) {
            train["seed"] = c.seed;
        }
        c.train = train_config_from_json(train);

        if (j.contains("metric")) {
            c.metric.k = j.at("metric").value("k", c.metric.k);
        }
        if (ov.k) {
            c.metric.k = *ov.k;
        }
        if (c.metric.k == 0) {
            throw ConfigError("metric cutoff k must be positive");
        }

        if (j.contains("significance")) {
            const auto& s = j.at("significance");
            c.significance.alpha = s.value("alpha", c.significance.alpha);
            const auto pairing = s.value("pairing", std::string("fold"));
            if (pairing == "fold") {
                c.significance.pairing = Pairing::Fold;
            } else if (pairing == "session") {
                c.significance.pairing = Pairing::Session;
            } else {
                throw ConfigError("unknown pairing '" + pairing + "'");
            }
        }
        if (ov.alpha) {
            c.significance.alpha = *ov.alpha;
        }
        c.significance.validate();

        c.folds = ov.folds ? *ov.folds : j.value("folds", c.folds);
        if (c.folds < 2) {
            throw ConfigError("folds must be at least 2");
        }
        c.val_fraction = j.value("val_fraction", c.val_fraction);
        if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
            throw ConfigError("val_fraction must lie in (0, 1)");
        }
        c.jobs = ov.jobs ? *ov.jobs : j.value("jobs", c.jobs);
        if (c.jobs == 0) {
            throw ConfigError("jobs must be at least 1");
        }
        c.out = ov.out ? *ov.out : j.value("out", c.out);

        if (j.contains("select")) {
            c.select_ms = j.at("select").value("m", c.select_ms);
        }

        std::set<std::string> names;
        for (const auto& mj : j.at("models")) {
            NamedModel m = model_from_json(mj, c.seed);
            if (!names.insert(m.name).second) {
                throw ConfigError("duplicate model name '" + m.name + "'");
            }
            m.config.encoder.bucket_count = c.bucket_count;
            m.config.encoder.shared_token_table = c.shared_token_table;
            c.models.push_back(std::move(m));
        }
        if (c.models.empty()) {
            throw ConfigError("config lists no models");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_experiment(const std::string& path, const Overrides& overrides)
{
    return experiment_from_json(read_json_file(path), overrides);
}

CatalogVocabulary catalog_vocabulary(const Dataset& data)
{
    std::set<std::string> countries;
    CatalogVocabulary v;
    for (const auto& [id, doc] : data.catalog) {
        if (const auto* c = doc.find(FieldId::Country); c && std::holds_alternative<Category>(*c)) {
            countries.insert(std::get<Category>(*c).label);
        }
        if (const auto* x = doc.find(FieldId::Image); x && !v.image_dim && std::holds_alternative<DenseVector>(*x)) {
            v.image_dim = std::get<DenseVector>(*x).values.size();
        }
    }
    v.countries.assign(countries.begin(), countries.end());
    return v;
}

Dataset load_experiment_data(ExperimentConfig& config, std::ostream& log)
{
    Dataset data;
    if (config.synthgen) {
        SynthOutput synth = generate(*config.synthgen);
        log << "generated " << synth.dataset.catalog.size() << " documents, " << synth.dataset.sessions.size()
            << " sessions (" << synth.dropped_sessions << " dropped)\n";
        data = std::move(synth.dataset);
    } else {
        data.catalog = parse_catalog(*config.catalog_path);
        BuildResult built = build_sessions(parse_log(*config.log_path));
        const auto& w = built.warnings;
        log << "built " << built.sessions.size() << " sessions from " << *config.log_path << "; skipped records "
            << w.skipped_records << ", duplicate candidates " << w.duplicate_candidates << ", unresolved clicks "
            << w.unresolved_clicks << ", dropped groups " << w.dropped_groups << '\n';
        data.sessions = std::move(built.sessions);
    }

    const CatalogVocabulary vocab = catalog_vocabulary(data);
    const auto problems = validate_dataset(data, vocab.image_dim);
    if (!problems.empty()) {
        std::string msg = "dataset has " + std::to_string(problems.size()) + " problem(s); first: " + problems.front();
        throw DataError(msg);
    }
    if (data.sessions.size() < config.folds) {
        throw DataError("only " + std::to_string(data.sessions.size()) + " sessions for " +
                        std::to_string(config.folds) + " folds");
    }
    for (auto& m : config.models) {
        m.config.encoder.countries = vocab.countries;
        m.config.encoder.image_dim = vocab.image_dim.value_or(0);
    }
    return data;
}

bool is_fwfm_all(const ModelConfig& config)
{
    if (config.family != ModelFamily::FwFM) {
        return false;
    }
    const auto fields = all_fields();
    return config.spec == enumerate_interactions(fields, SelectAll{}, true);
}

void ensure_writable_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ConfigError("cannot create output directory " + dir);
    }
    const fs::path probe = fs::path(dir) / ".fieldrank-write-probe";
    {
        std::ofstream out(probe);
        if (!out) {
            throw ConfigError("output directory " + dir + " is not writable");
        }
    }
    fs::remove(probe, ec);
}

GenerateSummary command_generate(const std::string& config_path, const Overrides& overrides, std::ostream& log)
{
    json j = read_json_file(config_path);
    if (!j.is_object()) {
        throw ConfigError("generate config must be a JSON object");
    }
    std::string out = "out";
    if (j.contains("out")) {
        if (!j.at("out").is_string()) {
            throw ConfigError("\"out\" must be a string");
        }
        out = j.at("out").get<std::string>();
        j.erase("out");
    }
    if (overrides.out) {
        out = *overrides.out;
    }
    if (overrides.seed) {
        j["seed"] = *overrides.seed;
    }
    const GenConfig cfg = gen_config_from_json(j);
    ensure_writable_dir(out);

    const SynthOutput synth = generate(cfg);
    {
        auto f = open_output(fs::path(out) / "catalog.jsonl");
        write_catalog(f, synth.dataset.catalog);
    }
    {
        auto f = open_output(fs::path(out) / "log.jsonl");
        write_log(f, synth.log);
    }
    GenerateSummary s{synth.dataset.catalog.size(), synth.dataset.sessions.size(), synth.log.size(),
                      synth.dropped_sessions};
    log << "documents " << s.documents << "\nsessions " << s.sessions << "\nlog records " << s.log_records
        << "\ndropped sessions " << s.dropped_sessions << '\n';
    return s;
}

EvalReport command_crossval(const std::string& config_path, const Overrides& overrides, std::ostream& log)
{
    ExperimentConfig cfg = load_experiment(config_path, overrides);
    ensure_writable_dir(cfg.out);
    const Dataset data = load_experiment_data(cfg, log);
    const FoldSplit split = make_folds(data.sessions.size(), cfg.folds, cfg.seed);

    std::vector<bool> fwfm_all(cfg.models.size());
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        fwfm_all[m] = is_fwfm_all(cfg.models[m].config);
    }
    CrossvalOptions options;
    options.jobs = cfg.jobs;
    options.val_fraction = cfg.val_fraction;
    options.keep_params = [&](std::size_t m) { return static_cast<bool>(fwfm_all[m]); };

    log << "cross-validating " << cfg.models.size() << " model(s) over " << cfg.folds << " folds\n";
    const CrossvalResult result =
        run_crossval(cfg.models, data, split, cfg.train, cfg.metric, cfg.significance, options);

    const fs::path out(cfg.out);
    write_json(out / "report.json", report_to_json(result.report));
    {
        auto f = open_output(out / "boxplot.csv");
        write_boxplot_csv(f, result.report);
    }
    fs::create_directories(out / "history");
    for (const auto& run : result.runs) {
        auto f = open_output(out / "history" / (cfg.models[run.model].name + "." + fold_tag(run.fold) + ".csv"));
        write_history_csv(f, run.train.history);
    }

    const auto it = std::find(fwfm_all.begin(), fwfm_all.end(), true);
    if (it != fwfm_all.end()) {
        const std::size_t m = static_cast<std::size_t>(it - fwfm_all.begin());
        const PreparedCatalog catalog(data, cfg.models[m].config.encoder);
        std::vector<CorrelationTable> tables(cfg.folds);
        parallel_for(cfg.folds, cfg.jobs, [&](std::size_t f) {
            const FoldRun& run = result.runs[m * cfg.folds + f];
            tables[f] = compute_correlations(run.config, run.train.params, data, result.partitions[f].validation,
                                             catalog);
        });
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            auto file = open_output(out / ("correlations." + fold_tag(f) + ".csv"));
            write_correlation_csv(file, tables[f]);
        }
        auto file = open_output(out / "correlations.csv");
        write_correlation_csv(file, mean_table(tables));
    }

    log << render_report(result.report);
    return result.report;
}

SweepResult command_select(const std::string& config_path, const std::vector<std::size_t>& ms,
                           const Overrides& overrides, std::ostream& log)
{
    ExperimentConfig cfg = load_experiment(config_path, overrides);
    const auto it = std::find_if(cfg.models.begin(), cfg.models.end(),
                                 [](const NamedModel& m) { return is_fwfm_all(m.config); });
    if (it == cfg.models.end()) {
        throw ConfigError("select needs an fwfm model over all interactions in the config");
    }
    const std::size_t base = static_cast<std::size_t>(it - cfg.models.begin());
    const std::size_t size = it->config.spec.size();

    std::vector<std::size_t> candidates = ms.empty() ? cfg.select_ms : ms;
    if (candidates.empty()) {
        candidates = default_ladder(size);
    }
    for (auto m : candidates) {
        if (m < 1 || m > size) {
            throw ConfigError("m=" + std::to_string(m) + " outside [1, " + std::to_string(size) + "]");
        }
    }
    ensure_writable_dir(cfg.out);
    const Dataset data = load_experiment_data(cfg, log);
    const FoldSplit split = make_folds(data.sessions.size(), cfg.folds, cfg.seed);
    const ModelConfig& all = cfg.models[base].config;

    log << "sweeping " << candidates.size() << " subset size(s) over " << cfg.folds << " folds\n";
    const SweepResult sweep =
        sweep_m(candidates, all, data, split, cfg.train, cfg.metric, cfg.jobs, cfg.val_fraction);

    const fs::path out(cfg.out);
    for (std::size_t f = 0; f < sweep.fold_tables.size(); ++f) {
        auto file = open_output(out / ("correlations." + fold_tag(f) + ".csv"));
        write_correlation_csv(file, sweep.fold_tables[f]);
    }
    const CorrelationTable pooled = mean_table(sweep.fold_tables);
    {
        auto file = open_output(out / "correlations.csv");
        write_correlation_csv(file, pooled);
    }
    {
        auto file = open_output(out / "sweep.csv");
        file << "m,val_ndcg\n";
        char buf[64];
        for (const auto& pt : sweep.curve) {
            std::snprintf(buf, sizeof(buf), "%.17g", pt.val_ndcg);
            file << pt.m << ',' << buf << '\n';
        }
    }
    const InteractionSpec chosen = select_interactions(pooled, sweep.best_m);
    write_json(out / "selected_spec.json", spec_to_json(chosen));

    json curve = json::array();
    for (const auto& pt : sweep.curve) {
        curve.push_back({{"m", pt.m}, {"val_ndcg", pt.val_ndcg}, {"per_fold", pt.per_fold}});
    }
    json summary = {{"base_model", cfg.models[base].name},
                    {"best_m", sweep.best_m},
                    {"curve", curve},
                    {"all_test", sweep.all_test},
                    {"all_test_mean", mean(sweep.all_test)},
                    {"selected_test", sweep.selected_test},
                    {"selected_test_mean", mean(sweep.selected_test)}};
    write_json(out / "selection.json", summary);

    char line[160];
    for (const auto& pt : sweep.curve) {
        std::snprintf(line, sizeof(line), "m=%-3zu val ndcg@%zu %.4f\n", pt.m, cfg.metric.k, pt.val_ndcg);
        log << line;
    }
    std::snprintf(line, sizeof(line), "best m=%zu  test ndcg@%zu all %.4f  selected %.4f\n", sweep.best_m,
                  cfg.metric.k, mean(sweep.all_test), mean(sweep.selected_test));
    log << line;
    return sweep;
}

std::vector<std::pair<std::string, ModelConfig>> gradcheck_variants()
{
    const auto fields = all_fields();
    auto make = [&](ModelFamily family, const SelectionMode& mode, bool first) {
        ModelConfig c;
        c.family = family;
        c.d = 8;
        c.spec = enumerate_interactions(fields, mode, first);
        return c;
    };
    return {
        {"concat", make(ModelFamily::Concat, SelectFirstOrderOnly{}, true)},
        {"nrmf query-field", make(ModelFamily::NRMF, SelectQueryField{}, false)},
        {"nrmf query-field+first", make(ModelFamily::NRMF, SelectQueryField{}, true)},
        {"nrmf all", make(ModelFamily::NRMF, SelectAll{}, true)},
        {"fwfm all", make(ModelFamily::FwFM, SelectAll{}, true)},
        {"fwfm query-field", make(ModelFamily::FwFM, SelectQueryField{}, false)},
        {"fwfm query-field+first", make(ModelFamily::FwFM, SelectQueryField{}, true)},
        {"fwfm second-order", make(ModelFamily::FwFM, SelectSecondOrderAll{}, false)},
    };
}

std::vector<GradCheckRow> command_gradcheck(std::ostream& out, bool corrupt, double threshold)
{
    std::vector<GradCheckRow> rows;
    GradCheckOptions opts;
    opts.corrupt = corrupt;
    char line[200];
    std::snprintf(line, sizeof(line), "%-24s %-14s %-18s %8s  %s\n", "model", "max_rel_err", "worst", "entries",
                  "status");
    out << line;
    std::uint64_t seed = 12345;
    for (auto& [label, config] : gradcheck_variants()) {
        GradCheckRow row;
        const auto space = label.find(' ');
        row.family = label.substr(0, space);
        row.spec = space == std::string::npos ? "first-order" : label.substr(space + 1);
        row.result = gradient_check(config, seed++, opts);
        row.passed = row.result.max_rel_error < threshold;
        std::snprintf(line, sizeof(line), "%-24s %-14.3e %-18s %8zu  %s\n", label.c_str(), row.result.max_rel_error,
                      row.result.worst_tensor.c_str(), row.result.checked_entries, row.passed ? "ok" : "FAIL");
        out << line;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string command_report(const std::string& report_path)
{
    std::ifstream in(report_path);
    if (!in) {
        throw ConfigError("cannot read report " + report_path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(report_path + ": " + e.what());
    }
    return render_report(report_from_json(j));
}

} // namespace fieldrank
