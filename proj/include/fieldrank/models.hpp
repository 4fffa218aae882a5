// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/encoding.hpp"
#include "fieldrank/interaction.hpp"
#include "fieldrank/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace fieldrank {

enum class ModelFamily { Concat, NRMF, FwFM, Random };

std::string_view family_name(ModelFamily f);
ModelFamily family_from_name(std::string_view name);

struct ModelConfig {
    ModelFamily family = ModelFamily::FwFM;
    InteractionSpec spec;
    std::size_t d = 16;
    /// Hidden layer widths of the dense stack (Concat, NRMF). A final width-1 layer is implied.
    std::vector<std::size_t> hidden_widths{64, 32};
    std::uint64_t seed = 0;
    EncoderConfig encoder;

    /// Throws ConfigError when the family's requirements are not met.
    void validate() const;
};

struct DenseLayer {
    Tensor W; ///< fan_in x fan_out
    Tensor b; ///< 1 x fan_out
    bool operator==(const DenseLayer&) const = default;
};

/// All learned state of a model. Shapes are fully determined by ModelConfig.
struct ModelParams {
    FieldEncoderParams encoder;
    /// 1 x d per entry of spec.first_order (FwFM only).
    std::vector<Tensor> first_order_weights;
    /// 1 x 1 per entry of spec.second_order (FwFM only).
    std::vector<Tensor> pair_weights;
    /// Hidden layers then the final 1-wide layer (Concat, NRMF).
    std::vector<DenseLayer> dense;

    bool operator==(const ModelParams&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct ConstNamedTensor {
    std::string name;
    const Tensor* tensor;
};

/// Every tensor in stable order with its checkpoint name: "token_emb",
/// "country_emb", "image_proj", "w1:<field>", "r:<a>|<b>", "dense:<i>:W", "dense:<i>:b".
std::vector<NamedTensor> enumerate_tensors(const ModelConfig& config, ModelParams& params);
std::vector<ConstNamedTensor> enumerate_tensors(const ModelConfig& config, const ModelParams& params);

/// Same shapes as `params`, all zero.
ModelParams zeros_like(const ModelParams& params);

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Encoded vector per field, indexed by field_index. An empty vector marks a field as missing.
using FieldVectors = std::array<std::vector<double>, kFieldCount>;

double score(const ModelConfig& config, const ModelParams& params, const FieldVectors& vectors);

/// Convenience overload: query vector plus document field vectors.
double score(const ModelConfig& config, const ModelParams& params, std::span<const double> query_vec,
             const std::map<FieldId, std::vector<double>>& field_vecs);

/// Gradients of upstream * score.
struct ScoreGradients {
    /// Gradients w.r.t. the model's own tensors; encoder tables stay zero.
    ModelParams params;
    /// Gradients w.r.t. each field vector (empty for unused fields).
    FieldVectors inputs;
    double score = 0.0;
};

ScoreGradients score_with_gradients(const ModelConfig& config, const ModelParams& params,
                                    const FieldVectors& vectors, double upstream);

/// Adds upstream * d(score)/d(params) into `grads`, including encoder rows,
/// and returns the score. Used by the trainer and the gradient checker.
double accumulate_gradients(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                            const PreparedFields& doc, double upstream, ModelParams& grads,
                            RowTouches* touches = nullptr);

/// Encodes the fields the config's spec references; other slots stay empty.
FieldVectors encode_inputs(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                           const PreparedFields& doc);

/// Fields a model reads: the spec's fields, or nothing for Random.
std::vector<FieldId> used_fields(const ModelConfig& config);

/// Per-interaction terms of an FwFM score, keyed by interaction name. The values
/// summed in spec order equal score() exactly.
std::vector<std::pair<std::string, double>> interaction_contributions(const ModelConfig& config,
                                                                      const ModelParams& params,
                                                                      const FieldVectors& vectors);

/// Deterministic stand-in scores for the Random family.
std::vector<double> random_scores(std::uint64_t seed, std::string_view session_id, std::size_t n);

/// Documents resolved against an encoder config, ready for repeated scoring.
class PreparedCatalog {
public:
    PreparedCatalog(const Dataset& dataset, const EncoderConfig& config);
    const PreparedFields& doc(const std::string& id) const;
    PreparedInput query(const Session& s) const;

private:
    EncoderConfig config_;
    std::map<std::string, PreparedFields> docs_;
};

std::vector<double> score_session(const ModelConfig& config, const ModelParams& params, const Dataset& dataset,
                                  const Session& session);
std::vector<double> score_session(const ModelConfig& config, const ModelParams& params,
                                  const PreparedCatalog& catalog, const Session& session);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Tensor file: {"tensors":[{"name","shape":[r,c],"data":[...]}]} with row-major float64 data.
nlohmann::json params_to_json(const ModelConfig& config, const ModelParams& params);
ModelParams params_from_json(const ModelConfig& config, const nlohmann::json& j);

/// Writes `<path>` (tensors) and `<path>.config.json` (sidecar ModelConfig).
void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path);

} // namespace fieldrank
