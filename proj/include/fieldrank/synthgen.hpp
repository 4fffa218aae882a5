// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/ingestion.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fieldrank {

/// Settings for the synthetic catalog and click log.
///
/// Documents belong to latent topics. Titles, ingredients and descriptions
/// draw tokens from their topic's vocabulary cluster with decreasing purity;
/// countries lean towards a topic-preferred label; images are a topic
/// centroid under heavy noise. A click on a candidate is a Bernoulli draw
/// whose logit is `base_logit` plus the planted interaction strengths:
///
///   "title-country": 1 when the document's country is its topic's preferred one
///   "query-title":   fraction of distinct query tokens that appear in the title
struct GenConfig {
    std::uint64_t seed = 1;
    std::size_t n_docs = 10000;
    std::size_t n_sessions = 2000;
    std::size_t vocab_size = 2000;
    double mean_title_len = 3.5;
    double mean_query_len = 2.25;
    double mean_ingredients_len = 8.0;
    double mean_description_len = 12.0;
    std::size_t n_countries = 8;
    std::size_t n_topics = 8;
    std::size_t image_dim = 16;
    std::size_t min_candidates = 5;
    std::size_t max_candidates = 20;
    std::map<std::string, double> planted_weights{{"title-country", 2.0}, {"query-title", 8.0}};

    double base_logit = -3.5;
    double noise_sd = 0.1;
    /// Probability that a candidate comes from the query's topic.
    double topic_affinity = 0.7;
    /// Probability that a document's country is its topic's preferred one.
    double country_bias = 0.5;
    /// Per-token probability of drawing from the topic cluster, per text field.
    double title_purity = 0.9;
    double ingredients_purity = 0.5;
    double description_purity = 0.3;
    double query_purity = 0.9;
    double image_noise = 6.0;
    std::size_t max_retries = 100;

    void validate() const;
};

nlohmann::json gen_config_to_json(const GenConfig& c);
GenConfig gen_config_from_json(const nlohmann::json& j);

struct SynthOutput {
    /// Sessions already truncated at the last click.
    Dataset dataset;
    /// The raw click events behind `dataset`, one per click, with full retrieved lists.
    std::vector<RawLogRecord> log;
    /// Ground truth for diagnostics.
    std::map<std::string, std::size_t> doc_topic;
    std::map<std::string, bool> title_country_match;
    std::size_t dropped_sessions = 0;
};

SynthOutput generate(const GenConfig& config);

/// Index of the country a topic prefers.
inline std::size_t preferred_country(std::size_t topic, std::size_t n_countries) { return topic % n_countries; }

std::string country_label(std::size_t index);

} // namespace fieldrank
