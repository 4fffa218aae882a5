// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/fieldrank.h"

#include "fieldrank/errors.hpp"
#include "fieldrank/evaluation.hpp"
#include "fieldrank/experiment.hpp"
#include "fieldrank/ingestion.hpp"
#include "fieldrank/models.hpp"
#include "fieldrank/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <streambuf>
#include <string>

using json = nlohmann::json;
using namespace fieldrank;

struct fr_dataset {
    Dataset data;
    std::vector<RawLogRecord> log;
};

struct fr_model {
    ModelConfig config;
    ModelParams params;
};

namespace {

thread_local std::string g_last_error;

fr_status fail(fr_status code, const std::string& message)
{
    g_last_error = message;
    return code;
}

template <typename F>
fr_status guarded(F&& body)
{
    try {
        g_last_error.clear();
        return body();
    } catch (const ConfigError& e) {
        return fail(FR_ERR_CONFIG, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(FR_ERR_CONFIG, e.what());
    } catch (const std::exception& e) {
        return fail(FR_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(FR_ERR_RUNTIME, "unknown error");
    }
}

char* dup_string(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_json_arg(const char* text, const char* what)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

/// Forwards complete lines to a log callback.
class LineBuf : public std::streambuf {
public:
    LineBuf(fr_log_fn fn, void* user) : fn_(fn), user_(user) {}
    ~LineBuf() override
    {
        if (!line_.empty()) {
            emit();
        }
    }

protected:
    int_type overflow(int_type ch) override
    {
        if (ch == traits_type::eof()) {
            return traits_type::not_eof(ch);
        }
        if (ch == '\n') {
            emit();
        } else {
            line_.push_back(static_cast<char>(ch));
        }
        return ch;
    }

private:
    void emit()
    {
        if (fn_) {
            fn_(line_.c_str(), user_);
        }
        line_.clear();
    }

    fr_log_fn fn_;
    void* user_;
    std::string line_;
};

Overrides to_overrides(const fr_options* o)
{
    Overrides ov;
    if (!o) {
        return ov;
    }
    if (o->out) {
        ov.out = o->out;
    }
    if (o->has_seed) {
        ov.seed = o->seed;
    }
    if (o->jobs) {
        ov.jobs = o->jobs;
    }
    if (o->folds) {
        ov.folds = o->folds;
    }
    if (o->k) {
        ov.k = o->k;
    }
    if (o->has_alpha) {
        ov.alpha = o->alpha;
    }
    return ov;
}

#define FR_REQUIRE(cond, msg)                                                                                          \
    do {                                                                                                               \
        if (!(cond)) {                                                                                                 \
            return fail(FR_ERR_CONFIG, msg);                                                                           \
        }                                                                                                              \
    } while (0)

} // namespace

extern "C" {

const char* fr_version(void) { return "0.1.0"; }

const char* fr_last_error(void) { return g_last_error.c_str(); }

void fr_string_free(char* s) { std::free(s); }

fr_status fr_dataset_load(const char* catalog_path, const char* log_path, fr_dataset** out)
{
    FR_REQUIRE(catalog_path && log_path && out, "fr_dataset_load: null argument");
    return guarded([&] {
        auto ds = std::make_unique<fr_dataset>();
        ds->data.catalog = parse_catalog(std::string(catalog_path));
        ds->log = parse_log(std::string(log_path));
        ds->data.sessions = build_sessions(ds->log).sessions;
        *out = ds.release();
        return FR_OK;
    });
}

fr_status fr_dataset_generate(const char* gen_config_json, fr_dataset** out)
{
    FR_REQUIRE(out, "fr_dataset_generate: null argument");
    return guarded([&] {
        const GenConfig cfg =
            gen_config_json ? gen_config_from_json(parse_json_arg(gen_config_json, "synthgen config")) : GenConfig{};
        SynthOutput synth = generate(cfg);
        auto ds = std::make_unique<fr_dataset>();
        ds->data = std::move(synth.dataset);
        ds->log = std::move(synth.log);
        *out = ds.release();
        return FR_OK;
    });
}

fr_status fr_dataset_write(const fr_dataset* ds, const char* catalog_path, const char* log_path)
{
    FR_REQUIRE(ds && catalog_path && log_path, "fr_dataset_write: null argument");
    return guarded([&] {
        std::ofstream c(catalog_path, std::ios::binary);
        std::ofstream l(log_path, std::ios::binary);
        if (!c || !l) {
            throw DataError("cannot open output files for writing");
        }
        write_catalog(c, ds->data.catalog);
        write_log(l, ds->log);
        return FR_OK;
    });
}

fr_status fr_dataset_session_count(const fr_dataset* ds, size_t* out)
{
    FR_REQUIRE(ds && out, "fr_dataset_session_count: null argument");
    *out = ds->data.sessions.size();
    return FR_OK;
}

fr_status fr_dataset_document_count(const fr_dataset* ds, size_t* out)
{
    FR_REQUIRE(ds && out, "fr_dataset_document_count: null argument");
    *out = ds->data.catalog.size();
    return FR_OK;
}

fr_status fr_dataset_session_length(const fr_dataset* ds, size_t session, size_t* out)
{
    FR_REQUIRE(ds && out, "fr_dataset_session_length: null argument");
    FR_REQUIRE(session < ds->data.sessions.size(), "session index out of range");
    *out = ds->data.sessions[session].candidates.size();
    return FR_OK;
}

fr_status fr_dataset_validate(const fr_dataset* ds, char** messages_json)
{
    FR_REQUIRE(ds && messages_json, "fr_dataset_validate: null argument");
    return guarded([&] {
        const auto vocab = catalog_vocabulary(ds->data);
        *messages_json = dup_string(json(validate_dataset(ds->data, vocab.image_dim)).dump());
        return FR_OK;
    });
}

void fr_dataset_free(fr_dataset* ds) { delete ds; }

fr_status fr_model_create(const char* model_json, const fr_dataset* ds, fr_model** out)
{
    FR_REQUIRE(model_json && out, "fr_model_create: null argument");
    return guarded([&] {
        const json j = parse_json_arg(model_json, "model config");
        NamedModel named = model_from_json(j, 0);
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            named.config.encoder.bucket_count = e.value("bucket_count", named.config.encoder.bucket_count);
            named.config.encoder.shared_token_table =
                e.value("shared_token_table", named.config.encoder.shared_token_table);
        }
        if (ds) {
            const auto vocab = catalog_vocabulary(ds->data);
            named.config.encoder.countries = vocab.countries;
            named.config.encoder.image_dim = vocab.image_dim.value_or(0);
        }
        auto m = std::make_unique<fr_model>();
        m->config = named.config;
        m->params = init_params(m->config, m->config.seed);
        *out = m.release();
        return FR_OK;
    });
}

fr_status fr_model_load(const char* path, fr_model** out)
{
    FR_REQUIRE(path && out, "fr_model_load: null argument");
    return guarded([&] {
        auto [config, params] = load_checkpoint(path);
        auto m = std::make_unique<fr_model>();
        m->config = std::move(config);
        m->params = std::move(params);
        *out = m.release();
        return FR_OK;
    });
}

fr_status fr_model_save(const fr_model* model, const char* path)
{
    FR_REQUIRE(model && path, "fr_model_save: null argument");
    return guarded([&] {
        save_checkpoint(path, model->config, model->params);
        return FR_OK;
    });
}

fr_status fr_model_config(const fr_model* model, char** config_json)
{
    FR_REQUIRE(model && config_json, "fr_model_config: null argument");
    return guarded([&] {
        *config_json = dup_string(config_to_json(model->config).dump());
        return FR_OK;
    });
}

fr_status fr_model_score_session(const fr_model* model, const fr_dataset* ds, size_t session, double* scores,
                                 size_t capacity, size_t* written)
{
    FR_REQUIRE(model && ds && scores && written, "fr_model_score_session: null argument");
    FR_REQUIRE(session < ds->data.sessions.size(), "session index out of range");
    return guarded([&] {
        const Session& s = ds->data.sessions[session];
        if (capacity < s.candidates.size()) {
            throw ConfigError("score buffer holds " + std::to_string(capacity) + " values, session has " +
                              std::to_string(s.candidates.size()));
        }
        const auto v = score_session(model->config, model->params, ds->data, s);
        std::copy(v.begin(), v.end(), scores);
        *written = v.size();
        return FR_OK;
    });
}

void fr_model_free(fr_model* model) { delete model; }

fr_status fr_ndcg_at_k(const double* scores, const int* relevance, size_t n, size_t k, double* out, int* defined)
{
    FR_REQUIRE((scores && relevance) || n == 0, "fr_ndcg_at_k: null input");
    FR_REQUIRE(out && defined, "fr_ndcg_at_k: null output");
    return guarded([&] {
        const auto r = ndcg_at_k({scores, n}, {relevance, n}, k);
        *defined = r.has_value() ? 1 : 0;
        *out = r.value_or(std::numeric_limits<double>::quiet_NaN());
        return FR_OK;
    });
}

fr_status fr_paired_ttest(const double* a, const double* b, size_t n, double* t, double* p)
{
    FR_REQUIRE(a && b && t && p, "fr_paired_ttest: null argument");
    return guarded([&] {
        const auto r = paired_ttest({a, n}, {b, n});
        *t = r.t;
        *p = r.p;
        return FR_OK;
    });
}

fr_status fr_bonferroni(const double* p_values, size_t n, size_t m, double* out)
{
    FR_REQUIRE((p_values && out) || n == 0, "fr_bonferroni: null argument");
    return guarded([&] {
        const auto r = bonferroni({p_values, n}, m);
        std::copy(r.begin(), r.end(), out);
        return FR_OK;
    });
}

void fr_options_init(fr_options* opts)
{
    if (opts) {
        *opts = fr_options{};
    }
}

fr_status fr_cmd_generate(const char* config_path, const fr_options* opts)
{
    FR_REQUIRE(config_path, "fr_cmd_generate: null config path");
    return guarded([&] {
        LineBuf buf(opts ? opts->log : nullptr, opts ? opts->log_user : nullptr);
        std::ostream log(&buf);
        command_generate(config_path, to_overrides(opts), log);
        return FR_OK;
    });
}

fr_status fr_cmd_crossval(const char* config_path, const fr_options* opts)
{
    FR_REQUIRE(config_path, "fr_cmd_crossval: null config path");
    return guarded([&] {
        LineBuf buf(opts ? opts->log : nullptr, opts ? opts->log_user : nullptr);
        std::ostream log(&buf);
        command_crossval(config_path, to_overrides(opts), log);
        return FR_OK;
    });
}

fr_status fr_cmd_select(const char* config_path, const size_t* ms, size_t n_ms, const fr_options* opts)
{
    FR_REQUIRE(config_path, "fr_cmd_select: null config path");
    FR_REQUIRE(ms || n_ms == 0, "fr_cmd_select: null m list");
    return guarded([&] {
        LineBuf buf(opts ? opts->log : nullptr, opts ? opts->log_user : nullptr);
        std::ostream log(&buf);
        command_select(config_path, std::vector<std::size_t>(ms, ms + n_ms), to_overrides(opts), log);
        return FR_OK;
    });
}

fr_status fr_cmd_gradcheck(int corrupt, const fr_options* opts, int* all_passed)
{
    FR_REQUIRE(all_passed, "fr_cmd_gradcheck: null argument");
    return guarded([&] {
        LineBuf buf(opts ? opts->log : nullptr, opts ? opts->log_user : nullptr);
        std::ostream log(&buf);
        const auto rows = command_gradcheck(log, corrupt != 0);
        *all_passed = std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.passed; }) ? 1 : 0;
        return FR_OK;
    });
}

fr_status fr_cmd_report(const char* report_path, char** text)
{
    FR_REQUIRE(report_path && text, "fr_cmd_report: null argument");
    return guarded([&] {
        *text = dup_string(command_report(report_path));
        return FR_OK;
    });
}

} // extern "C"
