// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/encoding.hpp"
#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace fieldrank;
using namespace fieldrank::test;

namespace {

// Hashes frozen from an independent FNV-1a implementation.
struct FrozenHash {
    const char* token;
    std::uint64_t full;
    std::uint64_t bucket;
};

constexpr FrozenHash kFrozen[] = {
    {"pizza", 0x658f4765b35947c5ULL, 18373},
    {"miso", 0xda591ba2a798f04dULL, 28749},
    {"", 0xcbf29ce484222325ULL, 8997},
    {"\xe6\x9d\xb1\xe4\xba\xac", 0x2f3c04f1ff1b2dafULL, 11695},
};

EncoderConfig config_for(std::size_t image_dim = 3)
{
    EncoderConfig c;
    c.bucket_count = 64;
    c.image_dim = image_dim;
    c.countries = {"cn", "fr", "it", "jp"};
    return c;
}

FieldEncoderParams random_params(const EncoderConfig& c, std::size_t d, std::uint64_t seed)
{
    auto p = make_encoder_tables(c, d);
    Rng rng(seed);
    for (auto& t : p.token_tables) {
        for (auto& x : t.data) {
            x = rng.normal();
        }
    }
    for (auto& x : p.country_emb.data) {
        x = rng.normal();
    }
    for (auto& x : p.image_proj.data) {
        x = rng.normal();
    }
    return p;
}

} // namespace

TEST_SUITE("encoding")
{
    TEST_CASE("tokenizer examples")
    {
        CHECK(tokenize("Spicy Ramen, with EGG!") == TextList{"spicy", "ramen", "with", "egg"});
        CHECK(tokenize("  ") == TextList{});
        CHECK(tokenize("") == TextList{});
        CHECK(tokenize("a-b_c.d") == TextList{"a", "b", "c", "d"});
        CHECK(tokenize("mix3d 42") == TextList{"mix3d", "42"});
        CHECK(tokenize("Cr\xc3\x88ME br\xc3\xbbl\xc3\xa9\xe3\x80\x81tea") ==
              TextList{"cr\xc3\xa8me", "br\xc3\xbbl\xc3\xa9", "tea"});
    }

    TEST_CASE("hashing matches frozen values")
    {
        for (const auto& h : kFrozen) {
            CHECK(fnv1a64(h.token) == h.full);
            CHECK(hash_token(h.token, 32768) == h.bucket);
        }
        CHECK_THROWS_AS(hash_token("x", 0), ConfigError);
    }

    TEST_CASE("text encoding is the mean of token rows")
    {
        const auto c = config_for();
        const auto p = random_params(c, 5, 1);
        const auto v = encode_field(FieldId::Title, TextList{"pizza", "miso"}, c, p);
        const auto r0 = p.token_tables[0].row(hash_token("pizza", 64));
        const auto r1 = p.token_tables[0].row(hash_token("miso", 64));
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(v[j] == doctest::Approx((r0[j] + r1[j]) / 2).epsilon(1e-15));
        }
    }

    TEST_CASE("text encoding ignores token order")
    {
        const auto c = config_for();
        const auto p = random_params(c, 6, 2);
        Rng rng(3);
        for (int round = 0; round < 20; ++round) {
            TextList tokens;
            for (int i = 0; i < 7; ++i) {
                tokens.push_back("t" + std::to_string(rng.below(100)));
            }
            auto shuffled = tokens;
            rng.shuffle(shuffled);
            const auto a = encode_field(FieldId::Ingredients, tokens, c, p);
            const auto b = encode_field(FieldId::Ingredients, shuffled, c, p);
            for (std::size_t j = 0; j < a.size(); ++j) {
                CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("empty text and missing fields encode as zero")
    {
        const auto c = config_for();
        const auto p = random_params(c, 4, 4);
        for (double x : encode_field(FieldId::Description, TextList{}, c, p)) {
            CHECK(x == 0.0);
        }
        for (double x : encode_prepared(FieldId::Image, PreparedInput{}, p)) {
            CHECK(x == 0.0);
        }
        for (double x : encode_field(FieldId::Country, Category{"unknown"}, c, p)) {
            CHECK(x == 0.0);
        }
    }

    TEST_CASE("category encoding is the embedding row")
    {
        const auto c = config_for();
        const auto p = random_params(c, 4, 5);
        const auto v = encode_field(FieldId::Country, Category{"it"}, c, p);
        const auto row = p.country_emb.row(2);
        CHECK(std::equal(v.begin(), v.end(), row.begin()));
    }

    TEST_CASE("dense projection is linear")
    {
        const auto c = config_for(3);
        const auto p = random_params(c, 4, 6);
        Rng rng(7);
        for (int round = 0; round < 20; ++round) {
            std::vector<double> x(3), y(3), z(3);
            const double a = rng.normal();
            const double b = rng.normal();
            for (std::size_t i = 0; i < 3; ++i) {
                x[i] = rng.normal();
                y[i] = rng.normal();
                z[i] = a * x[i] + b * y[i];
            }
            const auto ex = encode_field(FieldId::Image, DenseVector{x}, c, p);
            const auto ey = encode_field(FieldId::Image, DenseVector{y}, c, p);
            const auto ez = encode_field(FieldId::Image, DenseVector{z}, c, p);
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(std::abs(ez[j] - (a * ex[j] + b * ey[j])) < 1e-12);
            }
        }
    }

    TEST_CASE("dense length mismatch is rejected")
    {
        const auto c = config_for(3);
        const auto p = random_params(c, 4, 8);
        CHECK_THROWS_AS(encode_field(FieldId::Image, DenseVector{{1.0, 2.0}}, c, p), DataError);
    }

    TEST_CASE("token tables shared or per field")
    {
        auto c = config_for();
        CHECK(make_encoder_tables(c, 4).token_tables.size() == 1);
        c.shared_token_table = false;
        const auto p = random_params(c, 4, 9);
        REQUIRE(p.token_tables.size() == 4);
        const auto q = encode_query(TextList{"pizza"}, c, p);
        const auto t = encode_field(FieldId::Title, TextList{"pizza"}, c, p);
        CHECK(q != t);
        CHECK_THROWS_AS(make_encoder_tables(c, 0), ConfigError);
    }

    TEST_CASE("backward accumulates the transposed forward")
    {
        const auto c = config_for(3);
        const auto p = random_params(c, 4, 10);
        const Document doc = make_doc("x", {"pizza", "pizza", "miso"}, "fr", {0.5, -1.0, 2.0});
        const auto prepared = prepare_document(doc, c);
        const std::vector<double> g{1.0, -2.0, 0.5, 3.0};
        for (FieldId f : {FieldId::Title, FieldId::Country, FieldId::Image}) {
            auto grads = make_encoder_tables(c, 4);
            encode_prepared_backward(f, prepared[field_index(f)], g, p, grads);
            // <g, enc(params)> is linear in params, so its gradient reproduces it.
            double lhs = 0.0;
            const auto enc = encode_prepared(f, prepared[field_index(f)], p);
            for (std::size_t j = 0; j < 4; ++j) {
                lhs += g[j] * enc[j];
            }
            double rhs = 0.0;
            for (std::size_t t = 0; t < p.token_tables.size(); ++t) {
                for (std::size_t i = 0; i < p.token_tables[t].size(); ++i) {
                    rhs += grads.token_tables[t].data[i] * p.token_tables[t].data[i];
                }
            }
            for (std::size_t i = 0; i < p.country_emb.size(); ++i) {
                rhs += grads.country_emb.data[i] * p.country_emb.data[i];
            }
            for (std::size_t i = 0; i < p.image_proj.size(); ++i) {
                rhs += grads.image_proj.data[i] * p.image_proj.data[i];
            }
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        }
    }
}
