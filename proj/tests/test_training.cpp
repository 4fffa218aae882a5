// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/errors.hpp"
#include "fieldrank/experiment.hpp"
#include "fieldrank/training.hpp"
#include "support.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

using namespace fieldrank;
using namespace fieldrank::test;

namespace {

ModelConfig small_model(ModelFamily family)
{
    ModelConfig c;
    c.family = family;
    c.d = 4;
    c.hidden_widths = {6, 4};
    c.seed = 17;
    c.encoder.bucket_count = 64;
    c.encoder.image_dim = 3;
    c.encoder.countries = {"cn", "fr", "it", "jp"};
    const std::vector<FieldId> fields(kAllFields.begin(), kAllFields.end());
    c.spec = family == ModelFamily::Concat ? enumerate_interactions(fields, SelectFirstOrderOnly{}, true)
                                           : enumerate_interactions(fields, SelectQueryField{}, true);
    return c;
}

TrainConfig quick_train()
{
    TrainConfig t;
    t.epochs = 3;
    t.early_stop_patience = 3;
    t.batch_size = 8;
    t.learning_rate = 0.01;
    t.seed = 5;
    return t;
}

double constant_validation(const ModelParams&) { return 0.5; }

} // namespace

TEST_SUITE("training")
{
    TEST_CASE("logistic pairwise loss values")
    {
        CHECK(pairwise_loss(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        CHECK(pairwise_loss(40.0, 0.0) < 1e-12);
        CHECK(pairwise_loss(0.0, 30.0) == doctest::Approx(30.0).epsilon(1e-12));
        CHECK(std::isfinite(pairwise_loss(0.0, 1e6)));
        CHECK(pairwise_loss(1.0, 0.0, LossKind::Hinge) == 0.0);
        CHECK(pairwise_loss(0.0, 0.0, LossKind::Hinge) == 1.0);
        CHECK(pairwise_loss_slope(0.0, 0.0, LossKind::Logistic) == doctest::Approx(-0.5));
    }

    TEST_CASE("pairs are clicked by non-clicked")
    {
        const auto one = make_session("s", {"a", "b", "c", "d", "e", "f", "g"}, {6});
        CHECK(make_pairs(one, 50, 1).size() == 6);
        const auto two = make_session("s", {"a", "b", "c", "d", "e", "f", "g"}, {2, 6});
        const auto pairs = make_pairs(two, 50, 1);
        CHECK(pairs.size() == 10);
        for (const auto& p : pairs) {
            CHECK((p.pos_index == 2 || p.pos_index == 6));
            CHECK(p.neg_index != 2);
            CHECK(p.neg_index != 6);
        }
        const auto all = make_session("s", {"a", "b"}, {0, 1});
        CHECK(make_pairs(all, 50, 1).empty());
    }

    TEST_CASE("pair cap samples deterministically")
    {
        std::vector<std::string> ids;
        for (int i = 0; i < 30; ++i) {
            ids.push_back("x" + std::to_string(i));
        }
        const auto s = make_session("s", ids, {10, 20, 29});
        const auto a = make_pairs(s, 7, 3);
        CHECK(a.size() == 7);
        CHECK(a == make_pairs(s, 7, 3));
        CHECK(a != make_pairs(s, 7, 4));
    }

    TEST_CASE("training is deterministic")
    {
        Dataset ds = small_dataset(12);
        add_random_sessions(ds, 40, 8);
        for (auto family : {ModelFamily::FwFM, ModelFamily::NRMF, ModelFamily::Concat}) {
            const auto c = small_model(family);
            const auto a = train(c, ds.sessions, ds, quick_train(), constant_validation);
            const auto b = train(c, ds.sessions, ds, quick_train(), constant_validation);
            CHECK(a.params == b.params);
            CHECK(a.history == b.history);
        }
    }

    TEST_CASE("zero learning rate leaves the initialization untouched")
    {
        Dataset ds = small_dataset(12);
        add_random_sessions(ds, 20, 9);
        for (auto optimizer : {OptimizerKind::Adam, OptimizerKind::SGD}) {
            auto t = quick_train();
            t.learning_rate = 0.0;
            t.optimizer = optimizer;
            const auto c = small_model(ModelFamily::FwFM);
            const auto r = train(c, ds.sessions, ds, t, constant_validation);
            CHECK(r.params == init_params(c, c.seed));
        }
    }

    TEST_CASE("one small step lowers the pair loss")
    {
        Dataset ds = small_dataset(12);
        for (auto family : {ModelFamily::FwFM, ModelFamily::NRMF, ModelFamily::Concat}) {
            const auto c = small_model(family);
            for (auto optimizer : {OptimizerKind::Adam, OptimizerKind::SGD}) {
                TrainConfig t;
                t.learning_rate = 1e-4;
                t.optimizer = optimizer;
                auto p = init_params(c, 4);
                const auto q = prepare_query(TextList{"w3", "w4"}, c.encoder);
                const auto pos = prepare_document(ds.catalog.at("d3"), c.encoder);
                const auto neg = prepare_document(ds.catalog.at("d7"), c.encoder);
                const double before = pair_loss(c, p, q, pos, neg);
                single_pair_step(c, p, q, pos, neg, t);
                CHECK(pair_loss(c, p, q, pos, neg) < before);
            }
        }
    }

    TEST_CASE("early stopping keeps the best epoch")
    {
        Dataset ds = small_dataset(12);
        add_random_sessions(ds, 20, 10);
        auto t = quick_train();
        t.epochs = 10;
        t.early_stop_patience = 2;
        int calls = 0;
        const ValidationFn declining = [&](const ModelParams&) { return 1.0 / ++calls; };
        const auto r = train(small_model(ModelFamily::FwFM), ds.sessions, ds, t, declining);
        CHECK(r.best_epoch == 1);
        CHECK(r.history.size() == 3);
        std::ostringstream csv;
        write_history_csv(csv, r.history);
        CHECK(csv.str().rfind("epoch,train_loss,val_ndcg20\n", 0) == 0);
    }

    TEST_CASE("train config validation")
    {
        TrainConfig t;
        t.learning_rate = -1.0;
        CHECK_THROWS_AS(t.validate(), ConfigError);
        t = TrainConfig{};
        t.batch_size = 0;
        CHECK_THROWS_AS(t.validate(), ConfigError);
        t = TrainConfig{};
        t.early_stop_patience = 30;
        CHECK_THROWS_AS(t.validate(), ConfigError);
        CHECK(train_config_from_json(train_config_to_json(TrainConfig{})).batch_size == 256);
        Dataset ds = small_dataset(4);
        CHECK_THROWS_AS(train(small_model(ModelFamily::FwFM), {}, ds, TrainConfig{}, constant_validation), DataError);
    }

    TEST_CASE("analytic gradients match finite differences")
    {
        std::uint64_t seed = 12345;
        for (const auto& [name, config] : gradcheck_variants()) {
            CAPTURE(name);
            const auto r = gradient_check(config, seed++);
            CHECK(r.checked_entries > 0);
            CHECK(r.max_rel_error < 1e-4);
        }
    }

    TEST_CASE("corrupted gradients are caught")
    {
        for (const auto& [name, config] : gradcheck_variants()) {
            CAPTURE(name);
            GradCheckOptions o;
            o.instances = 3;
            o.corrupt = true;
            CHECK(gradient_check(config, 1, o).max_rel_error >= 1e-4);
        }
    }
}
