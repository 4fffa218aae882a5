// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/training.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace fieldrank {

namespace {

using nlohmann::json;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Tracks which rows of the row-sparse tables (token tables, country table)
/// carry gradient, so zeroing and optimizer updates skip untouched rows.
/// Rows that never received gradient have zero Adam moments, so skipping
/// them leaves the result identical to a dense update.
class SparseRows {
public:
    explicit SparseRows(const ModelParams& p)
    {
        for (const auto& t : p.encoder.token_tables) {
            active_.emplace_back(t.rows, 0);
        }
        active_.emplace_back(p.encoder.country_emb.rows, 0);
        active_list_.resize(active_.size());
        touches_.per_table.resize(active_.size());
    }

    RowTouches& touches() { return touches_; }

    void absorb_touches()
    {
        for (std::size_t t = 0; t < active_.size(); ++t) {
            for (auto r : touches_.per_table[t]) {
                if (!active_[t][r]) {
                    active_[t][r] = 1;
                    active_list_[t].push_back(r);
                }
            }
        }
    }

    void zero_touched(ModelParams& grads)
    {
        for (std::size_t t = 0; t < touches_.per_table.size(); ++t) {
            Tensor& g = table(grads, t);
            for (auto r : touches_.per_table[t]) {
                auto row = g.row(r);
                std::fill(row.begin(), row.end(), 0.0);
            }
            touches_.per_table[t].clear();
        }
    }

    const std::vector<std::uint32_t>& active(std::size_t t) const { return active_list_[t]; }
    std::size_t table_count() const { return active_.size(); }

    static Tensor& table(ModelParams& p, std::size_t t)
    {
        return t < p.encoder.token_tables.size() ? p.encoder.token_tables[t] : p.encoder.country_emb;
    }
    static const Tensor& table(const ModelParams& p, std::size_t t)
    {
        return t < p.encoder.token_tables.size() ? p.encoder.token_tables[t] : p.encoder.country_emb;
    }

private:
    std::vector<std::vector<std::uint8_t>> active_;
    std::vector<std::vector<std::uint32_t>> active_list_;
    RowTouches touches_;
};

// Every tensor other than the row-sparse tables.
template <class P>
std::vector<decltype(&std::declval<P&>().encoder.image_proj)> dense_tensors(P& p)
{
    std::vector<decltype(&p.encoder.image_proj)> out;
    if (!p.encoder.token_tables.empty()) {
        out.push_back(&p.encoder.image_proj);
    }
    for (auto& t : p.first_order_weights) {
        out.push_back(&t);
    }
    for (auto& t : p.pair_weights) {
        out.push_back(&t);
    }
    for (auto& l : p.dense) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ModelParams& params)
        : cfg_(cfg), m_(zeros_like(params)), v_(zeros_like(params))
    {
    }

    void step(ModelParams& params, const ModelParams& grads, const SparseRows& rows)
    {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

        auto update = [&](double& theta, double g, double& m, double& v) {
            if (cfg_.optimizer == OptimizerKind::SGD) {
                theta -= cfg_.learning_rate * g;
                return;
            }
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
            theta -= cfg_.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon);
        };

        for (std::size_t t = 0; t < rows.table_count(); ++t) {
            Tensor& p = SparseRows::table(params, t);
            const Tensor& g = SparseRows::table(grads, t);
            Tensor& m = SparseRows::table(m_, t);
            Tensor& v = SparseRows::table(v_, t);
            for (auto r : rows.active(t)) {
                const std::size_t base = static_cast<std::size_t>(r) * p.cols;
                for (std::size_t j = 0; j < p.cols; ++j) {
                    update(p.data[base + j], g.data[base + j], m.data[base + j], v.data[base + j]);
                }
            }
        }

        auto ps = dense_tensors(params);
        auto gs = dense_tensors(grads);
        auto ms = dense_tensors(m_);
        auto vs = dense_tensors(v_);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            for (std::size_t i = 0; i < ps[k]->data.size(); ++i) {
                update(ps[k]->data[i], gs[k]->data[i], ms[k]->data[i], vs[k]->data[i]);
            }
        }
    }

private:
    TrainConfig cfg_;
    ModelParams m_;
    ModelParams v_;
    std::uint64_t t_ = 0;
};

void zero_dense(ModelParams& grads)
{
    for (auto* t : dense_tensors(grads)) {
        t->fill(0.0);
    }
}

// Accumulates the gradient of one pair's loss (scaled by `weight`) and returns the loss.
double pair_gradient(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                     const PreparedFields& pos, const PreparedFields& neg, LossKind kind, double weight,
                     ModelParams& grads, RowTouches* touches)
{
    const double s_pos = score(config, params, encode_inputs(config, params, query, pos));
    const double s_neg = score(config, params, encode_inputs(config, params, query, neg));
    const double slope = pairwise_loss_slope(s_pos, s_neg, kind);
    if (slope != 0.0) {
        accumulate_gradients(config, params, query, pos, weight * slope, grads, touches);
        accumulate_gradients(config, params, query, neg, -weight * slope, grads, touches);
    }
    return pairwise_loss(s_pos, s_neg, kind);
}

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string_view loss_name(LossKind k) { return k == LossKind::Logistic ? "logistic" : "hinge"; }

} // namespace

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a non-negative number");
    }
    if (epochs == 0 || pairs_per_session_cap == 0 || batch_size == 0 || early_stop_patience == 0) {
        throw ConfigError("epochs, pairs_per_session_cap, batch_size and early_stop_patience must be positive");
    }
    if (early_stop_patience > epochs) {
        throw ConfigError("early_stop_patience must not exceed epochs");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || epsilon <= 0.0) {
        throw ConfigError("invalid Adam hyperparameters");
    }
}

json train_config_to_json(const TrainConfig& c)
{
    return {{"learning_rate", c.learning_rate},
            {"optimizer", std::string(optimizer_name(c.optimizer))},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"epochs", c.epochs},
            {"pairs_per_session_cap", c.pairs_per_session_cap},
            {"batch_size", c.batch_size},
            {"early_stop_patience", c.early_stop_patience},
            {"seed", c.seed},
            {"loss", std::string(loss_name(c.loss))}};
}

TrainConfig train_config_from_json(const json& j)
{
    TrainConfig c;
    if (!j.is_object()) {
        throw ConfigError("train config must be a JSON object");
    }
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        const auto opt = j.value("optimizer", std::string("adam"));
        if (opt == "adam") {
            c.optimizer = OptimizerKind::Adam;
        } else if (opt == "sgd") {
            c.optimizer = OptimizerKind::SGD;
        } else {
            throw ConfigError("unknown optimizer '" + opt + "'");
        }
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.epochs = j.value("epochs", c.epochs);
        c.pairs_per_session_cap = j.value("pairs_per_session_cap", c.pairs_per_session_cap);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
        c.seed = j.value("seed", c.seed);
        const auto loss = j.value("loss", std::string("logistic"));
        if (loss == "logistic") {
            c.loss = LossKind::Logistic;
        } else if (loss == "hinge") {
            c.loss = LossKind::Hinge;
        } else {
            throw ConfigError("unknown loss '" + loss + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<TrainPair> make_pairs(const Session& session, std::size_t cap, std::uint64_t seed,
                                  std::size_t session_index)
{
    std::vector<TrainPair> pairs;
    for (std::size_t p : session.clicked_positions) {
        for (std::size_t n = 0; n < session.candidates.size(); ++n) {
            if (!session.is_clicked(n)) {
                pairs.push_back({session_index, p, n});
            }
        }
    }
    if (pairs.size() > cap) {
        Rng rng(seed);
        rng.shuffle(pairs);
        pairs.resize(cap);
        std::sort(pairs.begin(), pairs.end(), [](const TrainPair& a, const TrainPair& b) {
            return std::pair(a.pos_index, a.neg_index) < std::pair(b.pos_index, b.neg_index);
        });
    }
    return pairs;
}

double pairwise_loss(double s_pos, double s_neg) { return softplus(-(s_pos - s_neg)); }

double pairwise_loss(double s_pos, double s_neg, LossKind kind)
{
    if (kind == LossKind::Hinge) {
        return std::max(0.0, 1.0 - (s_pos - s_neg));
    }
    return pairwise_loss(s_pos, s_neg);
}

double pairwise_loss_slope(double s_pos, double s_neg, LossKind kind)
{
    const double margin = s_pos - s_neg;
    if (kind == LossKind::Hinge) {
        return margin < 1.0 ? -1.0 : 0.0;
    }
    return -sigmoid(-margin);
}

double pair_loss(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                 const PreparedFields& pos, const PreparedFields& neg, LossKind kind)
{
    const double s_pos = score(config, params, encode_inputs(config, params, query, pos));
    const double s_neg = score(config, params, encode_inputs(config, params, query, neg));
    return pairwise_loss(s_pos, s_neg, kind);
}

void single_pair_step(const ModelConfig& config, ModelParams& params, const PreparedInput& query,
                      const PreparedFields& pos, const PreparedFields& neg, const TrainConfig& train_config)
{
    ModelParams grads = zeros_like(params);
    SparseRows rows(params);
    pair_gradient(config, params, query, pos, neg, train_config.loss, 1.0, grads, &rows.touches());
    rows.absorb_touches();
    Optimizer opt(train_config, params);
    opt.step(params, grads, rows);
}

TrainResult train(const ModelConfig& model_config, std::span<const Session> train_sessions,
                  const Dataset& dataset, const TrainConfig& cfg, const ValidationFn& validate)
{
    model_config.validate();
    cfg.validate();
    if (train_sessions.empty()) {
        throw DataError("training set is empty");
    }

    TrainResult result;
    result.params = init_params(model_config, model_config.seed);
    if (model_config.family == ModelFamily::Random) {
        return result;
    }

    std::vector<TrainPair> pairs;
    for (std::size_t i = 0; i < train_sessions.size(); ++i) {
        auto p = make_pairs(train_sessions[i], cfg.pairs_per_session_cap, mix_seed(cfg.seed, i), i);
        pairs.insert(pairs.end(), p.begin(), p.end());
    }
    if (pairs.empty()) {
        throw DataError("no training pairs");
    }

    // Resolve only the documents the training sessions reference.
    Dataset referenced;
    for (const Session& s : train_sessions) {
        for (const auto& id : s.candidates) {
            if (!referenced.catalog.contains(id)) {
                auto it = dataset.catalog.find(id);
                if (it == dataset.catalog.end()) {
                    throw DataError("session " + s.session_id + " references unknown doc_id " + id);
                }
                referenced.catalog.emplace(id, it->second);
            }
        }
    }
    const PreparedCatalog catalog(referenced, model_config.encoder);
    std::vector<PreparedInput> queries;
    queries.reserve(train_sessions.size());
    for (const Session& s : train_sessions) {
        queries.push_back(catalog.query(s));
    }

    ModelParams& params = result.params;
    ModelParams grads = zeros_like(params);
    SparseRows rows(params);
    Optimizer optimizer(cfg, params);

    double best = -1.0;
    std::size_t since_best = 0;
    ModelParams best_params = params;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<TrainPair> order = pairs;
        Rng rng(mix_seed(cfg.seed ^ 0x5eedULL, epoch));
        rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double weight = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const TrainPair& tp = order[k];
                const Session& s = train_sessions[tp.session];
                loss_sum += pair_gradient(model_config, params, queries[tp.session],
                                          catalog.doc(s.candidates[tp.pos_index]),
                                          catalog.doc(s.candidates[tp.neg_index]), cfg.loss, weight, grads,
                                          &rows.touches());
            }
            rows.absorb_touches();
            optimizer.step(params, grads, rows);
            rows.zero_touched(grads);
            zero_dense(grads);
        }

        const double val = validate ? validate(params) : 0.0;
        result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), val});
        if (val > best) {
            best = val;
            best_params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    result.params = std::move(best_params);
    return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history)
{
    out << "epoch,train_loss,val_ndcg20\n";
    char buf[128];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_ndcg);
        out << buf;
    }
}

GradCheckResult gradient_check(const ModelConfig& model_config, std::uint64_t seed, const GradCheckOptions& options)
{
    GradCheckResult result;
    if (model_config.family == ModelFamily::Random) {
        return result;
    }

    ModelConfig cfg = model_config;
    cfg.d = std::min<std::size_t>(options.d, 8);
    if (cfg.family == ModelFamily::Concat || cfg.family == ModelFamily::NRMF) {
        cfg.hidden_widths = {6, 4};
    }
    cfg.encoder.bucket_count = 32;
    cfg.encoder.image_dim = 4;
    cfg.encoder.countries = {"c00", "c01", "c02"};
    cfg.validate();

    Rng rng(seed);
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
        ModelParams params = init_params(cfg, rng.next());
        for (auto& [name, t] : enumerate_tensors(cfg, params)) {
            for (auto& x : t->data) {
                x = rng.uniform(-1.0, 1.0);
            }
        }

        auto random_text = [&](std::size_t n) {
            TextList out;
            for (std::size_t i = 0; i < n; ++i) {
                out.push_back("t" + std::to_string(rng.below(40)));
            }
            return out;
        };
        auto random_doc = [&] {
            Document doc;
            doc.doc_id = "doc";
            doc.fields[FieldId::Title] = random_text(1 + rng.below(4));
            doc.fields[FieldId::Ingredients] = random_text(1 + rng.below(6));
            doc.fields[FieldId::Description] = random_text(1 + rng.below(8));
            doc.fields[FieldId::Country] = Category{cfg.encoder.countries[rng.below(3)]};
            DenseVector img;
            for (std::size_t i = 0; i < cfg.encoder.image_dim; ++i) {
                img.values.push_back(rng.uniform(-1.0, 1.0));
            }
            doc.fields[FieldId::Image] = std::move(img);
            return prepare_document(doc, cfg.encoder);
        };
        const PreparedInput query = prepare_query(random_text(1 + rng.below(3)), cfg.encoder);
        const PreparedFields pos = random_doc();
        const PreparedFields neg = random_doc();

        ModelParams grads = zeros_like(params);
        pair_gradient(cfg, params, query, pos, neg, LossKind::Logistic, 1.0, grads, nullptr);

        auto named_params = enumerate_tensors(cfg, params);
        auto named_grads = enumerate_tensors(cfg, grads);
        if (options.corrupt && inst == 0 && !named_grads.empty()) {
            auto& data = named_grads.back().tensor->data;
            data[0] += 1e-2 * std::max(1.0, std::abs(data[0]));
        }
        for (std::size_t k = 0; k < named_params.size(); ++k) {
            Tensor& theta = *named_params[k].tensor;
            const Tensor& g = *named_grads[k].tensor;
            for (std::size_t i = 0; i < theta.data.size(); ++i) {
                const double orig = theta.data[i];
                const double h = 1e-5 * std::max(1.0, std::abs(orig));
                theta.data[i] = orig + h;
                const double up = pair_loss(cfg, params, query, pos, neg);
                theta.data[i] = orig - h;
                const double down = pair_loss(cfg, params, query, pos, neg);
                theta.data[i] = orig;
                const double numeric = (up - down) / (2.0 * h);
                const double analytic = g.data[i];
                const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                const double rel = std::abs(analytic - numeric) / denom;
                ++result.checked_entries;
                if (rel > result.max_rel_error) {
                    result.max_rel_error = rel;
                    result.worst_tensor = named_params[k].name;
                }
            }
        }
    }
    return result;
}

} // namespace fieldrank
