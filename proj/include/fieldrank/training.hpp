// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/models.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fieldrank {

enum class OptimizerKind { Adam, SGD };
enum class LossKind { Logistic, Hinge };

struct TrainConfig {
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 20;
    std::size_t pairs_per_session_cap = 50;
    std::size_t batch_size = 256;
    std::size_t early_stop_patience = 3;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::Logistic;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// A (clicked, not clicked) candidate pair from one session.
struct TrainPair {
    std::size_t session = 0;
    std::size_t pos_index = 0;
    std::size_t neg_index = 0;

    bool operator==(const TrainPair&) const = default;
};

/// All positive x negative pairs, or a seeded uniform subsample of `cap` of them.
std::vector<TrainPair> make_pairs(const Session& session, std::size_t cap, std::uint64_t seed,
                                  std::size_t session_index = 0);

/// log(1 + exp(-(s_pos - s_neg))), evaluated as a stable softplus.
double pairwise_loss(double s_pos, double s_neg);
double pairwise_loss(double s_pos, double s_neg, LossKind kind);
/// d loss / d (s_pos - s_neg).
double pairwise_loss_slope(double s_pos, double s_neg, LossKind kind);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_ndcg = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Validation score of a parameter set. The trainer sees held-out sessions
/// only through this callback.
using ValidationFn = std::function<double(const ModelParams&)>;

/// Pairwise training with early stopping on `validate`. Returns the
/// parameters from the best validation epoch.
TrainResult train(const ModelConfig& model_config, std::span<const Session> train_sessions,
                  const Dataset& dataset, const TrainConfig& train_config, const ValidationFn& validate);

/// Writes "epoch,train_loss,val_ndcg20" rows.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

/// One optimizer step on a single pair; exposed for descent-property tests.
void single_pair_step(const ModelConfig& config, ModelParams& params, const PreparedInput& query,
                      const PreparedFields& pos, const PreparedFields& neg, const TrainConfig& train_config);

double pair_loss(const ModelConfig& config, const ModelParams& params, const PreparedInput& query,
                 const PreparedFields& pos, const PreparedFields& neg, LossKind kind = LossKind::Logistic);

struct GradCheckOptions {
    std::size_t instances = 20;
    std::size_t d = 8;
    /// Test hook: perturbs one analytic gradient entry so the check must fail.
    bool corrupt = false;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t checked_entries = 0;
};

/// Compares analytic gradients of pairwise_loss(score(pos), score(neg)) with
/// central differences (h = 1e-5 * max(1, |theta|)) over every parameter entry.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult gradient_check(const ModelConfig& model_config, std::uint64_t seed,
                               const GradCheckOptions& options = {});

} // namespace fieldrank
