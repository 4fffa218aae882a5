// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/synthgen.hpp"

#include "fieldrank/encoding.hpp"
#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace fieldrank {

namespace {

using nlohmann::json;

std::string padded(char prefix, std::size_t i, int width)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i);
    return buf;
}

/// Zipf(1) sampler over the ranks of one topic cluster.
class ZipfTable {
public:
    explicit ZipfTable(std::size_t n)
    {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            total += 1.0 / static_cast<double>(r + 1);
            cdf_.push_back(total);
        }
        for (auto& c : cdf_) {
            c /= total;
        }
    }

    std::size_t sample(Rng& rng) const
    {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

class Vocabulary {
public:
    Vocabulary(std::size_t vocab_size, std::size_t n_topics) : n_topics_(n_topics)
    {
        for (std::size_t i = 0; i < vocab_size; ++i) {
            words_.push_back(padded('w', i, 5));
        }
        cluster_size_ = vocab_size / n_topics;
        zipf_ = ZipfTable(cluster_size_);
    }

    const std::string& draw(Rng& rng, std::size_t topic, double purity) const
    {
        if (rng.bernoulli(purity)) {
            return words_[topic * cluster_size_ + zipf_.sample(rng)];
        }
        return words_[rng.below(words_.size())];
    }

    TextList draw_list(Rng& rng, std::size_t topic, double purity, double mean_len) const
    {
        const unsigned len = 1 + rng.poisson(mean_len - 1.0);
        TextList out;
        for (unsigned i = 0; i < len; ++i) {
            out.push_back(draw(rng, topic, purity));
        }
        return out;
    }

private:
    std::size_t n_topics_;
    std::size_t cluster_size_ = 1;
    std::vector<std::string> words_;
    ZipfTable zipf_{1};
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double query_overlap(const TextList& query, const TextList& title)
{
    std::set<std::string> q(query.begin(), query.end());
    std::set<std::string> t(title.begin(), title.end());
    if (q.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (const auto& tok : q) {
        hit += t.contains(tok) ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(q.size());
}

std::string join(const TextList& tokens)
{
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += t;
    }
    return out;
}

} // namespace

std::string country_label(std::size_t index) { return padded('c', index, 2); }

void GenConfig::validate() const
{
    if (n_docs == 0 || n_sessions == 0 || vocab_size == 0 || n_countries == 0 || n_topics == 0 || image_dim == 0) {
        throw ConfigError("synthgen: all counts must be positive");
    }
    if (vocab_size < n_topics) {
        throw ConfigError("synthgen: vocab_size must be at least n_topics");
    }
    if (min_candidates < 2 || max_candidates > 40 || min_candidates > max_candidates) {
        throw ConfigError("synthgen: candidate range must lie within [2, 40]");
    }
    if (n_docs < max_candidates) {
        throw ConfigError("synthgen: n_docs must be at least max_candidates");
    }
    if (mean_title_len < 1.0 || mean_query_len < 1.0 || mean_ingredients_len < 1.0 || mean_description_len < 1.0) {
        throw ConfigError("synthgen: mean lengths must be at least 1");
    }
    for (const auto& [name, w] : planted_weights) {
        if (name != "title-country" && name != "query-title") {
            throw ConfigError("synthgen: unknown planted interaction '" + name + "'");
        }
        if (!std::isfinite(w)) {
            throw ConfigError("synthgen: planted weight for " + name + " is not finite");
        }
    }
    for (double p : {topic_affinity, country_bias, title_purity, ingredients_purity, description_purity,
                     query_purity}) {
        if (p < 0.0 || p > 1.0) {
            throw ConfigError("synthgen: probabilities must lie in [0, 1]");
        }
    }
    if (max_retries == 0) {
        throw ConfigError("synthgen: max_retries must be positive");
    }
}

json gen_config_to_json(const GenConfig& c)
{
    return {{"seed", c.seed},
            {"n_docs", c.n_docs},
            {"n_sessions", c.n_sessions},
            {"vocab_size", c.vocab_size},
            {"mean_title_len", c.mean_title_len},
            {"mean_query_len", c.mean_query_len},
            {"mean_ingredients_len", c.mean_ingredients_len},
            {"mean_description_len", c.mean_description_len},
            {"n_countries", c.n_countries},
            {"n_topics", c.n_topics},
            {"image_dim", c.image_dim},
            {"candidates_per_session", {c.min_candidates, c.max_candidates}},
            {"planted_weights", c.planted_weights},
            {"base_logit", c.base_logit},
            {"noise_sd", c.noise_sd},
            {"topic_affinity", c.topic_affinity},
            {"country_bias", c.country_bias},
            {"title_purity", c.title_purity},
            {"ingredients_purity", c.ingredients_purity},
            {"description_purity", c.description_purity},
            {"query_purity", c.query_purity},
            {"image_noise", c.image_noise},
            {"max_retries", c.max_retries}};
}

GenConfig gen_config_from_json(const json& j)
{
    GenConfig c;
    if (!j.is_object()) {
        throw ConfigError("synthgen config must be a JSON object");
    }
    static const std::set<std::string> known{
        "seed", "n_docs", "n_sessions", "vocab_size", "mean_title_len", "mean_query_len",
        "mean_ingredients_len", "mean_description_len", "n_countries", "n_topics", "image_dim",
        "candidates_per_session", "planted_weights", "base_logit", "noise_sd", "topic_affinity",
        "country_bias", "title_purity", "ingredients_purity", "description_purity", "query_purity",
        "image_noise", "max_retries"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("synthgen config: unknown key '" + key + "'");
        }
    }
    try {
        c.seed = j.value("seed", c.seed);
        c.n_docs = j.value("n_docs", c.n_docs);
        c.n_sessions = j.value("n_sessions", c.n_sessions);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.mean_title_len = j.value("mean_title_len", c.mean_title_len);
        c.mean_query_len = j.value("mean_query_len", c.mean_query_len);
        c.mean_ingredients_len = j.value("mean_ingredients_len", c.mean_ingredients_len);
        c.mean_description_len = j.value("mean_description_len", c.mean_description_len);
        c.n_countries = j.value("n_countries", c.n_countries);
        c.n_topics = j.value("n_topics", c.n_topics);
        c.image_dim = j.value("image_dim", c.image_dim);
        if (j.contains("candidates_per_session")) {
            const auto range = j.at("candidates_per_session").get<std::vector<std::size_t>>();
            if (range.size() != 2) {
                throw ConfigError("synthgen: candidates_per_session must be [min, max]");
            }
            c.min_candidates = range[0];
            c.max_candidates = range[1];
        }
        if (j.contains("planted_weights")) {
            c.planted_weights = j.at("planted_weights").get<std::map<std::string, double>>();
        }
        c.base_logit = j.value("base_logit", c.base_logit);
        c.noise_sd = j.value("noise_sd", c.noise_sd);
        c.topic_affinity = j.value("topic_affinity", c.topic_affinity);
        c.country_bias = j.value("country_bias", c.country_bias);
        c.title_purity = j.value("title_purity", c.title_purity);
        c.ingredients_purity = j.value("ingredients_purity", c.ingredients_purity);
        c.description_purity = j.value("description_purity", c.description_purity);
        c.query_purity = j.value("query_purity", c.query_purity);
        c.image_noise = j.value("image_noise", c.image_noise);
        c.max_retries = j.value("max_retries", c.max_retries);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthgen config: ") + e.what());
    }
    c.validate();
    return c;
}

SynthOutput generate(const GenConfig& config)
{
    config.validate();
    SynthOutput out;
    Rng rng(config.seed);
    const Vocabulary vocab(config.vocab_size, config.n_topics);

    auto weight = [&](const char* name) {
        auto it = config.planted_weights.find(name);
        return it == config.planted_weights.end() ? 0.0 : it->second;
    };
    const double w_title_country = weight("title-country");
    const double w_query_title = weight("query-title");

    std::vector<std::vector<double>> centroids(config.n_topics, std::vector<double>(config.image_dim));
    for (auto& c : centroids) {
        for (auto& x : c) {
            x = rng.normal();
        }
    }

    const int id_width = std::max(5, static_cast<int>(std::to_string(config.n_docs).size()));
    std::vector<std::string> doc_ids;
    std::vector<std::vector<std::size_t>> docs_by_topic(config.n_topics);
    for (std::size_t i = 0; i < config.n_docs; ++i) {
        const std::size_t topic = rng.below(config.n_topics);
        Document doc;
        doc.doc_id = padded('d', i, id_width);
        doc.fields[FieldId::Title] = vocab.draw_list(rng, topic, config.title_purity, config.mean_title_len);
        doc.fields[FieldId::Ingredients] =
            vocab.draw_list(rng, topic, config.ingredients_purity, config.mean_ingredients_len);
        doc.fields[FieldId::Description] =
            vocab.draw_list(rng, topic, config.description_purity, config.mean_description_len);
        const std::size_t pref = preferred_country(topic, config.n_countries);
        const std::size_t country = rng.bernoulli(config.country_bias) ? pref : rng.below(config.n_countries);
        doc.fields[FieldId::Country] = Category{country_label(country)};
        DenseVector image;
        image.values.resize(config.image_dim);
        for (std::size_t k = 0; k < config.image_dim; ++k) {
            image.values[k] = centroids[topic][k] + config.image_noise * rng.normal();
        }
        doc.fields[FieldId::Image] = std::move(image);

        out.doc_topic[doc.doc_id] = topic;
        out.title_country_match[doc.doc_id] = country == pref;
        docs_by_topic[topic].push_back(i);
        doc_ids.push_back(doc.doc_id);
        out.dataset.catalog.emplace(doc.doc_id, std::move(doc));
    }

    const int session_width = std::max(6, static_cast<int>(std::to_string(config.n_sessions).size()));
    for (std::size_t s = 0; s < config.n_sessions; ++s) {
        bool done = false;
        for (std::size_t attempt = 0; attempt < config.max_retries && !done; ++attempt) {
            const std::size_t topic = rng.below(config.n_topics);
            const TextList query = vocab.draw_list(rng, topic, config.query_purity, config.mean_query_len);
            const std::size_t n =
                config.min_candidates + rng.below(config.max_candidates - config.min_candidates + 1);

            std::vector<std::size_t> picked;
            std::set<std::size_t> used;
            while (picked.size() < n) {
                const auto& pool = docs_by_topic[topic];
                const std::size_t idx = (!pool.empty() && rng.bernoulli(config.topic_affinity))
                                            ? pool[rng.below(pool.size())]
                                            : rng.below(config.n_docs);
                if (used.insert(idx).second) {
                    picked.push_back(idx);
                }
            }

            std::vector<std::size_t> clicks;
            for (std::size_t pos = 0; pos < picked.size(); ++pos) {
                const Document& doc = out.dataset.catalog.at(doc_ids[picked[pos]]);
                const auto& title = std::get<TextList>(*doc.find(FieldId::Title));
                const double logit = config.base_logit +
                                     w_title_country * (out.title_country_match[doc.doc_id] ? 1.0 : 0.0) +
                                     w_query_title * query_overlap(query, title) +
                                     config.noise_sd * rng.normal();
                if (rng.bernoulli(sigmoid(logit))) {
                    clicks.push_back(pos);
                }
            }
            if (clicks.empty()) {
                continue;
            }

            const std::string session_id = padded('s', s, session_width);
            const std::string query_text = join(query);
            std::vector<std::string> retrieved;
            for (auto idx : picked) {
                retrieved.push_back(doc_ids[idx]);
            }
            const std::int64_t base_time = 1'600'000'000 + static_cast<std::int64_t>(s) * 600;
            for (std::size_t c = 0; c < clicks.size(); ++c) {
                out.log.push_back(RawLogRecord{session_id, base_time + static_cast<std::int64_t>(c) * 10,
                                               query_text, retrieved, retrieved[clicks[c]]});
            }

            Session session;
            session.session_id = session_id;
            session.query = tokenize(query_text);
            session.candidates.assign(retrieved.begin(), retrieved.begin() + static_cast<std::ptrdiff_t>(clicks.back()) + 1);
            session.clicked_positions = clicks;
            session.event_time = base_time + static_cast<std::int64_t>(clicks.size() - 1) * 10;
            out.dataset.sessions.push_back(std::move(session));
            done = true;
        }
        if (!done) {
            ++out.dropped_sessions;
        }
    }
    return out;
}

} // namespace fieldrank
