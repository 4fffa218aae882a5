// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/models.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace fieldrank {

namespace {

using nlohmann::json;

bool uses_dense_stack(ModelFamily f) { return f == ModelFamily::Concat || f == ModelFamily::NRMF; }

std::size_t dense_input_width(const ModelConfig& c)
{
    return (c.spec.first_order.size() + (c.family == ModelFamily::NRMF ? c.spec.second_order.size() : 0)) * c.d;
}

void fill_uniform(Tensor& t, Rng& rng, double bound)
{
    for (auto& x : t.data) {
        x = rng.uniform(-bound, bound);
    }
}

const std::vector<double>& require_vec(const FieldVectors& v, FieldId f, std::size_t d)
{
    const auto& x = v[field_index(f)];
    if (x.empty()) {
        throw DataError("missing field vector for " + std::string(field_name(f)));
    }
    if (x.size() != d) {
        throw DataError("field vector for " + std::string(field_name(f)) + " has length " +
                        std::to_string(x.size()) + ", expected " + std::to_string(d));
    }
    return x;
}

struct DenseTrace {
    std::vector<std::vector<double>> acts; // acts[0] is the input; acts[l+1] the output of layer l
    std::vector<std::vector<double>> pre;  // pre-activations per layer
};

double dense_forward(const std::vector<DenseLayer>& layers, std::vector<double> x, DenseTrace* trace)
{
    if (trace != nullptr) {
        trace->acts.clear();
        trace->pre.clear();
        trace->acts.push_back(x);
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        if (x.size() != layer.W.rows) {
            throw DataError("dense stack: input width " + std::to_string(x.size()) + " != " +
                            std::to_string(layer.W.rows));
        }
        std::vector<double> z(layer.b.data);
        for (std::size_t i = 0; i < layer.W.rows; ++i) {
            const double xi = x[i];
            if (xi == 0.0) {
                continue;
            }
            auto row = layer.W.row(i);
            for (std::size_t j = 0; j < z.size(); ++j) {
                z[j] += xi * row[j];
            }
        }
        const bool last = l + 1 == layers.size();
        std::vector<double> a = z;
        if (!last) {
            for (auto& v : a) {
                v = v > 0.0 ? v : 0.0;
            }
        }
        if (trace != nullptr) {
            trace->pre.push_back(std::move(z));
            trace->acts.push_back(a);
        }
        x = std::move(a);
    }
    return x.at(0);
}

// Returns d(upstream*score)/d(input); accumulates layer gradients when `grads` is set.
std::vector<double> dense_backward(const std::vector<DenseLayer>& layers, const DenseTrace& trace,
                                   double upstream, std::vector<DenseLayer>* grads)
{
    std::vector<double> g{upstream};
    for (std::size_t l = layers.size(); l-- > 0;) {
        const DenseLayer& layer = layers[l];
        const auto& in = trace.acts[l];
        if (grads != nullptr) {
            DenseLayer& gl = (*grads)[l];
            for (std::size_t i = 0; i < layer.W.rows; ++i) {
                const double xi = in[i];
                if (xi == 0.0) {
                    continue;
                }
                auto row = gl.W.row(i);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    row[j] += xi * g[j];
                }
            }
            for (std::size_t j = 0; j < g.size(); ++j) {
                gl.b.data[j] += g[j];
            }
        }
        std::vector<double> gin(layer.W.rows, 0.0);
        for (std::size_t i = 0; i < layer.W.rows; ++i) {
            auto row = layer.W.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                s += row[j] * g[j];
            }
            gin[i] = s;
        }
        if (l > 0) {
            const auto& z = trace.pre[l - 1];
            for (std::size_t i = 0; i < gin.size(); ++i) {
                if (z[i] <= 0.0) {
                    gin[i] = 0.0;
                }
            }
        }
        g = std::move(gin);
    }
    return g;
}

std::vector<double> build_dense_input(const ModelConfig& c, const FieldVectors& v)
{
    std::vector<double> x;
    x.reserve(dense_input_width(c));
    if (c.family == ModelFamily::NRMF) {
        for (const auto& [a, b] : c.spec.second_order) {
            const auto h = hadamard(require_vec(v, a, c.d), require_vec(v, b, c.d));
            x.insert(x.end(), h.begin(), h.end());
        }
    }
    for (FieldId f : c.spec.first_order) {
        const auto& u = require_vec(v, f, c.d);
        x.insert(x.end(), u.begin(), u.end());
    }
    return x;
}

void add_scaled(std::vector<double>& dst, std::span<const double> src, double scale, std::size_t d)
{
    if (dst.empty()) {
        dst.assign(d, 0.0);
    }
    for (std::size_t i = 0; i < d; ++i) {
        dst[i] += scale * src[i];
    }
}

// Forward pass, plus backward when either gradient sink is given.
double run_model(const ModelConfig& c, const ModelParams& p, const FieldVectors& v, double upstream,
                 ModelParams* grads, FieldVectors* input_grads)
{
    const std::size_t d = c.d;
    const bool backward = grads != nullptr || input_grads != nullptr;

    if (c.family == ModelFamily::Random) {
        throw DataError("the random scorer needs a session context; use score_session");
    }

    if (c.family == ModelFamily::FwFM) {
        if (p.first_order_weights.size() != c.spec.first_order.size() ||
            p.pair_weights.size() != c.spec.second_order.size()) {
            throw DataError("FwFM parameters do not match the interaction spec");
        }
        double s = 0.0;
        for (std::size_t i = 0; i < c.spec.first_order.size(); ++i) {
            const FieldId f = c.spec.first_order[i];
            const auto& vf = require_vec(v, f, d);
            const auto w = p.first_order_weights[i].row(0);
            s += dot(w, vf);
            if (backward) {
                if (grads != nullptr) {
                    auto gw = grads->first_order_weights[i].row(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        gw[j] += upstream * vf[j];
                    }
                }
                if (input_grads != nullptr) {
                    add_scaled((*input_grads)[field_index(f)], w, upstream, d);
                }
            }
        }
        for (std::size_t i = 0; i < c.spec.second_order.size(); ++i) {
            const auto [a, b] = c.spec.second_order[i];
            const auto& va = require_vec(v, a, d);
            const auto& vb = require_vec(v, b, d);
            const double r = p.pair_weights[i].data[0];
            const double ab = dot(va, vb);
            s += r * ab;
            if (backward) {
                if (grads != nullptr) {
                    grads->pair_weights[i].data[0] += upstream * ab;
                }
                if (input_grads != nullptr) {
                    add_scaled((*input_grads)[field_index(a)], vb, upstream * r, d);
                    add_scaled((*input_grads)[field_index(b)], va, upstream * r, d);
                }
            }
        }
        return s;
    }

    // Concat and NRMF: build the concatenated input, run the dense stack.
    const auto x = build_dense_input(c, v);
    DenseTrace trace;
    const double s = dense_forward(p.dense, x, backward ? &trace : nullptr);
    if (!backward) {
        return s;
    }
    const auto gx = dense_backward(p.dense, trace, upstream, grads != nullptr ? &grads->dense : nullptr);
    if (input_grads != nullptr) {
        std::size_t offset = 0;
        if (c.family == ModelFamily::NRMF) {
            for (const auto& [a, b] : c.spec.second_order) {
                const auto& va = v[field_index(a)];
                const auto& vb = v[field_index(b)];
                auto& ga = (*input_grads)[field_index(a)];
                auto& gb = (*input_grads)[field_index(b)];
                if (ga.empty()) {
                    ga.assign(d, 0.0);
                }
                if (gb.empty()) {
                    gb.assign(d, 0.0);
                }
                for (std::size_t j = 0; j < d; ++j) {
                    ga[j] += gx[offset + j] * vb[j];
                    gb[j] += gx[offset + j] * va[j];
                }
                offset += d;
            }
        }
        for (FieldId f : c.spec.first_order) {
            add_scaled((*input_grads)[field_index(f)], std::span<const double>(gx).subspan(offset, d), 1.0, d);
            offset += d;
        }
    }
    return s;
}

std::string token_table_name(std::size_t i, bool shared)
{
    if (shared) {
        return "token_emb";
    }
    static constexpr std::array<FieldId, 4> text_fields{FieldId::Query, FieldId::Title, FieldId::Ingredients,
                                                        FieldId::Description};
    return "token_emb:" + std::string(field_name(text_fields[i]));
}

template <class Params, class Out>
void enumerate_impl(const ModelConfig& c, Params& p, Out& out)
{
    const bool shared = p.encoder.token_tables.size() == 1;
    for (std::size_t i = 0; i < p.encoder.token_tables.size(); ++i) {
        out.push_back({token_table_name(i, shared), &p.encoder.token_tables[i]});
    }
    if (!p.encoder.token_tables.empty()) {
        out.push_back({"country_emb", &p.encoder.country_emb});
        out.push_back({"image_proj", &p.encoder.image_proj});
    }
    for (std::size_t i = 0; i < p.first_order_weights.size(); ++i) {
        out.push_back({"w1:" + std::string(field_name(c.spec.first_order.at(i))), &p.first_order_weights[i]});
    }
    for (std::size_t i = 0; i < p.pair_weights.size(); ++i) {
        const auto& [a, b] = c.spec.second_order.at(i);
        out.push_back({"r:" + std::string(field_name(a)) + "|" + std::string(field_name(b)), &p.pair_weights[i]});
    }
    for (std::size_t l = 0; l < p.dense.size(); ++l) {
        out.push_back({"dense:" + std::to_string(l) + ":W", &p.dense[l].W});
        out.push_back({"dense:" + std::to_string(l) + ":b", &p.dense[l].b});
    }
}

} // namespace

std::string_view family_name(ModelFamily f)
{
    switch (f) {
    case ModelFamily::Concat:
        return "concat";
    case ModelFamily::NRMF:
        return "nrmf";
    case ModelFamily::FwFM:
        return "fwfm";
    case ModelFamily::Random:
        return "random";
    }
    return "?";
}

ModelFamily family_from_name(std::string_view name)
{
    for (auto f : {ModelFamily::Concat, ModelFamily::NRMF, ModelFamily::FwFM, ModelFamily::Random}) {
        if (family_name(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown model family '" + std::string(name) + "'");
}

void ModelConfig::validate() const
{
    if (family == ModelFamily::Random) {
        return;
    }
    if (d == 0) {
        throw ConfigError("embedding dimension d must be positive");
    }
    if (uses_dense_stack(family)) {
        if (hidden_widths.empty()) {
            throw ConfigError(std::string(family_name(family)) + " needs at least one hidden layer");
        }
        for (auto w : hidden_widths) {
            if (w == 0) {
                throw ConfigError("hidden layer widths must be positive");
            }
        }
    }
    if (family == ModelFamily::Concat && (spec.first_order.empty() || !spec.second_order.empty())) {
        throw ConfigError("concat consumes first-order fields only");
    }
    if (family == ModelFamily::NRMF && spec.size() == 0) {
        throw ConfigError("nrmf needs at least one interaction entry");
    }
    if (family == ModelFamily::FwFM && spec.size() == 0) {
        throw ConfigError("fwfm needs at least one interaction entry");
    }
}

std::vector<NamedTensor> enumerate_tensors(const ModelConfig& config, ModelParams& params)
{
    std::vector<NamedTensor> out;
    enumerate_impl(config, params, out);
    return out;
}

std::vector<ConstNamedTensor> enumerate_tensors(const ModelConfig& config, const ModelParams& params)
{
    std::vector<ConstNamedTensor> out;
    enumerate_impl(config, params, out);
    return out;
}

ModelParams zeros_like(const ModelParams& params)
{
    ModelParams z = params;
    for (auto& t : z.encoder.token_tables) {
        t.fill(0.0);
    }
    z.encoder.country_emb.fill(0.0);
    z.encoder.image_proj.fill(0.0);
    for (auto& t : z.first_order_weights) {
        t.fill(0.0);
    }
    for (auto& t : z.pair_weights) {
        t.fill(0.0);
    }
    for (auto& l : z.dense) {
        l.W.fill(0.0);
        l.b.fill(0.0);
    }
    return z;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed)
{
    config.validate();
    ModelParams p;
    if (config.family == ModelFamily::Random) {
        return p;
    }
    Rng rng(seed);
    const double emb_bound = 1.0 / std::sqrt(static_cast<double>(config.d));
    p.encoder = make_encoder_tables(config.encoder, config.d);
    for (auto& t : p.encoder.token_tables) {
        fill_uniform(t, rng, emb_bound);
    }
    fill_uniform(p.encoder.country_emb, rng, emb_bound);
    if (config.encoder.image_dim > 0) {
        fill_uniform(p.encoder.image_proj, rng, 1.0 / std::sqrt(static_cast<double>(config.encoder.image_dim)));
    }

    if (config.family == ModelFamily::FwFM) {
        for (std::size_t i = 0; i < config.spec.first_order.size(); ++i) {
            Tensor w(1, config.d);
            fill_uniform(w, rng, emb_bound);
            p.first_order_weights.push_back(std::move(w));
        }
        for (std::size_t i = 0; i < config.spec.second_order.size(); ++i) {
            Tensor r(1, 1);
            r.data[0] = 1.0;
            p.pair_weights.push_back(std::move(r));
        }
        return p;
    }

    std::size_t fan_in = dense_input_width(config);
    std::vector<std::size_t> widths = config.hidden_widths;
    widths.push_back(1);
    for (auto width : widths) {
        DenseLayer layer{Tensor(fan_in, width), Tensor(1, width)};
        fill_uniform(layer.W, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        p.dense.push_back(std::move(layer));
        fan_in = width;
    }
    return p;
}

double score(const ModelConfig& config, const ModelParams& params, const FieldVectors& vectors)
{
    return run_model(config, params, vectors, 1.0, nullptr, nullptr);
}

double score(const ModelConfig& config, const ModelParams& params, std::span<const double> query_vec,
             const std::map<FieldId, std::vector<double>>& field_vecs)
{
    FieldVectors v;
    v[field_index(FieldId::Query)].assign(query_vec.begin(), query_vec.end());
    for (const auto& [f, vec] : field_vecs) {
        if (f != FieldId::Query) {
            v[field_index(f)] = vec;
        }
    }
    return score(config, params, v);
}

ScoreGradients score_with_gradients(const ModelConfig& config, const ModelParams& params,
                                    const FieldVectors& vectors, double upstream)
{
    ScoreGradients g;
    g.params = zeros_like(params);
    g.score = run_model(config, params, vectors, upstream, &g.params, &g.inputs);
    return g;
}

std::vector<FieldId> used_fields(const ModelConfig& config)
{
    std::vector<FieldId> out;
    if (config.family == ModelFamily::Random) {
        return out;
    }
    for (FieldId f : kAllFields) {
        if (config.spec.references(f)) {
            out.push_back(f);
        }
    }
    return out;
}

FieldVectors encode_inputs(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                           const PreparedFields& doc)
{
    FieldVectors v;
    for (FieldId f : used_fields(config)) {
        const PreparedInput& in = f == FieldId::Query ? query : doc[field_index(f)];
        v[field_index(f)] = encode_prepared(f, in, params.encoder);
    }
    return v;
}

double accumulate_gradients(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                            const PreparedFields& doc, double upstream, ModelParams& grads, RowTouches* touches)
{
    const FieldVectors v = encode_inputs(config, params, query, doc);
    FieldVectors gin;
    const double s = run_model(config, params, v, upstream, &grads, &gin);
    for (FieldId f : kAllFields) {
        const auto& g = gin[field_index(f)];
        if (g.empty()) {
            continue;
        }
        const PreparedInput& in = f == FieldId::Query ? query : doc[field_index(f)];
        encode_prepared_backward(f, in, g, params.encoder, grads.encoder, touches);
    }
    return s;
}

std::vector<std::pair<std::string, double>> interaction_contributions(const ModelConfig& config,
                                                                      const ModelParams& params,
                                                                      const FieldVectors& vectors)
{
    if (config.family != ModelFamily::FwFM) {
        throw ConfigError("interaction contributions are defined for fwfm models only");
    }
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < config.spec.first_order.size(); ++i) {
        const FieldId f = config.spec.first_order[i];
        out.emplace_back(InteractionEntry::first(f).name(),
                         dot(params.first_order_weights.at(i).row(0), require_vec(vectors, f, config.d)));
    }
    for (std::size_t i = 0; i < config.spec.second_order.size(); ++i) {
        const auto [a, b] = config.spec.second_order[i];
        out.emplace_back(InteractionEntry::pair(a, b).name(),
                         params.pair_weights.at(i).data[0] *
                             dot(require_vec(vectors, a, config.d), require_vec(vectors, b, config.d)));
    }
    return out;
}

std::vector<double> random_scores(std::uint64_t seed, std::string_view session_id, std::size_t n)
{
    Rng rng(mix_seed(seed, fnv1a64(session_id)));
    std::vector<double> out(n);
    for (auto& x : out) {
        x = rng.uniform();
    }
    return out;
}

PreparedCatalog::PreparedCatalog(const Dataset& dataset, const EncoderConfig& config) : config_(config)
{
    for (const auto& [id, doc] : dataset.catalog) {
        docs_.emplace(id, prepare_document(doc, config_));
    }
}

const PreparedFields& PreparedCatalog::doc(const std::string& id) const
{
    auto it = docs_.find(id);
    if (it == docs_.end()) {
        throw DataError("unknown doc_id " + id);
    }
    return it->second;
}

PreparedInput PreparedCatalog::query(const Session& s) const { return prepare_query(s.query, config_); }

std::vector<double> score_session(const ModelConfig& config, const ModelParams& params,
                                  const PreparedCatalog& catalog, const Session& session)
{
    if (config.family == ModelFamily::Random) {
        return random_scores(config.seed, session.session_id, session.candidates.size());
    }
    const PreparedInput q = catalog.query(session);
    const auto qvec = encode_prepared(FieldId::Query, q, params.encoder);
    const bool needs_query = config.spec.references(FieldId::Query);
    std::vector<double> out;
    out.reserve(session.candidates.size());
    for (const auto& id : session.candidates) {
        const PreparedFields& doc = catalog.doc(id);
        FieldVectors v;
        for (FieldId f : used_fields(config)) {
            if (f != FieldId::Query) {
                v[field_index(f)] = encode_prepared(f, doc[field_index(f)], params.encoder);
            }
        }
        if (needs_query) {
            v[field_index(FieldId::Query)] = qvec;
        }
        out.push_back(score(config, params, v));
    }
    return out;
}

std::vector<double> score_session(const ModelConfig& config, const ModelParams& params, const Dataset& dataset,
                                  const Session& session)
{
    if (config.family == ModelFamily::Random) {
        return random_scores(config.seed, session.session_id, session.candidates.size());
    }
    Dataset subset;
    for (const auto& id : session.candidates) {
        auto it = dataset.catalog.find(id);
        if (it == dataset.catalog.end()) {
            throw DataError("session " + session.session_id + " references unknown doc_id " + id);
        }
        subset.catalog.emplace(id, it->second);
    }
    return score_session(config, params, PreparedCatalog(subset, config.encoder), session);
}

json config_to_json(const ModelConfig& c)
{
    return {{"family", std::string(family_name(c.family))},
            {"spec", spec_to_json(c.spec)},
            {"d", c.d},
            {"hidden_widths", c.hidden_widths},
            {"seed", c.seed},
            {"encoder",
             {{"bucket_count", c.encoder.bucket_count},
              {"image_dim", c.encoder.image_dim},
              {"countries", c.encoder.countries},
              {"shared_token_table", c.encoder.shared_token_table}}}};
}

ModelConfig config_from_json(const json& j)
{
    ModelConfig c;
    try {
        c.family = family_from_name(j.at("family").get<std::string>());
        if (j.contains("spec")) {
            c.spec = spec_from_json(j.at("spec"));
        }
        c.d = j.value("d", c.d);
        c.hidden_widths = j.value("hidden_widths", c.hidden_widths);
        c.seed = j.value("seed", c.seed);
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            c.encoder.bucket_count = e.value("bucket_count", c.encoder.bucket_count);
            c.encoder.image_dim = e.value("image_dim", c.encoder.image_dim);
            c.encoder.countries = e.value("countries", c.encoder.countries);
            c.encoder.shared_token_table = e.value("shared_token_table", c.encoder.shared_token_table);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

json params_to_json(const ModelConfig& config, const ModelParams& params)
{
    json tensors = json::array();
    for (const auto& [name, t] : enumerate_tensors(config, params)) {
        tensors.push_back({{"name", name}, {"shape", {t->rows, t->cols}}, {"data", t->data}});
    }
    return {{"tensors", tensors}};
}

ModelParams params_from_json(const ModelConfig& config, const json& j)
{
    ModelParams p = init_params(config, 0);
    std::map<std::string, const json*> by_name;
    try {
        for (const auto& t : j.at("tensors")) {
            by_name[t.at("name").get<std::string>()] = &t;
        }
        for (auto& [name, tensor] : enumerate_tensors(config, p)) {
            auto it = by_name.find(name);
            if (it == by_name.end()) {
                throw DataError("checkpoint is missing tensor " + name);
            }
            const json& t = *it->second;
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != tensor->rows || shape[1] != tensor->cols) {
                throw DataError("checkpoint tensor " + name + " has the wrong shape");
            }
            tensor->data = t.at("data").get<std::vector<double>>();
            if (tensor->data.size() != tensor->rows * tensor->cols) {
                throw DataError("checkpoint tensor " + name + " has the wrong length");
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    return p;
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params)
{
    std::ofstream out(path);
    std::ofstream side(path + ".config.json");
    if (!out || !side) {
        throw DataError("cannot write checkpoint " + path);
    }
    out << params_to_json(config, params).dump() << '\n';
    side << config_to_json(config).dump(2) << '\n';
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path)
{
    std::ifstream in(path);
    std::ifstream side(path + ".config.json");
    if (!in || !side) {
        throw DataError("cannot read checkpoint " + path);
    }
    json cj;
    json pj;
    try {
        side >> cj;
        in >> pj;
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
    ModelConfig c = config_from_json(cj);
    ModelParams p = params_from_json(c, pj);
    return {std::move(c), std::move(p)};
}

} // namespace fieldrank
