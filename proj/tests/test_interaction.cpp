// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/errors.hpp"
#include "fieldrank/interaction.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <set>

using namespace fieldrank;

namespace {

std::vector<FieldId> first_k(std::size_t k)
{
    return {kAllFields.begin(), kAllFields.begin() + static_cast<std::ptrdiff_t>(k)};
}

} // namespace

TEST_SUITE("interaction")
{
    TEST_CASE("counts for the six fields")
    {
        const auto fields = first_k(6);
        CHECK(enumerate_interactions(fields, SelectQueryField{}, false).size() == 5);
        CHECK(enumerate_interactions(fields, SelectSecondOrderAll{}, false).size() == 15);
        CHECK(enumerate_interactions(fields, SelectAll{}, true).size() == 21);
        CHECK(enumerate_interactions(fields, SelectFirstOrderOnly{}, false).size() == 6);
    }

    TEST_CASE("count formulas")
    {
        for (std::size_t k = 2; k <= 10; ++k) {
            for (std::size_t q = 0; q < k; ++q) {
                CHECK(enumerate_index_interactions(k, q, SelectQueryField{}, false).size() == k - 1);
                CHECK(enumerate_index_interactions(k, q, SelectSecondOrderAll{}, false).size() == k * (k - 1) / 2);
                CHECK(enumerate_index_interactions(k, q, SelectAll{}, false).size() == k * (k + 1) / 2);
            }
            CHECK_THROWS_AS(enumerate_index_interactions(k, std::nullopt, SelectQueryField{}, false), ConfigError);
        }
        for (std::size_t k = 2; k <= 6; ++k) {
            auto fields = first_k(k);
            if (std::find(fields.begin(), fields.end(), FieldId::Query) == fields.end()) {
                fields.back() = FieldId::Query;
            }
            CHECK(enumerate_interactions(fields, SelectQueryField{}, false).size() == k - 1);
            CHECK(enumerate_interactions(fields, SelectSecondOrderAll{}, false).size() == k * (k - 1) / 2);
            CHECK(enumerate_interactions(fields, SelectAll{}, true).size() == k * (k + 1) / 2);
        }
    }

    TEST_CASE("pairs are unique and never self-pairs")
    {
        const auto spec = enumerate_interactions(first_k(6), SelectAll{}, true);
        std::set<std::string> names;
        for (const auto& e : spec.entries()) {
            CHECK(names.insert(e.name()).second);
            if (e.is_pair) {
                CHECK(e.a != e.b);
            }
        }
    }

    TEST_CASE("query-field pairs all involve the query")
    {
        const auto spec = enumerate_interactions(first_k(6), SelectQueryField{}, true);
        CHECK(spec.first_order.size() == 6);
        for (const auto& [a, b] : spec.second_order) {
            CHECK((a == FieldId::Query || b == FieldId::Query));
        }
        const std::vector<FieldId> no_query{FieldId::Title, FieldId::Country};
        CHECK_THROWS_AS(enumerate_interactions(no_query, SelectQueryField{}, false), ConfigError);
    }

    TEST_CASE("canonical names order fields by name")
    {
        CHECK(InteractionEntry::pair(FieldId::Title, FieldId::Country).name() == "pair:country|title");
        CHECK(InteractionEntry::first(FieldId::Image).name() == "first:image");
        CHECK(InteractionEntry::parse("pair:title|query") == InteractionEntry::pair(FieldId::Query, FieldId::Title));
        CHECK_THROWS_AS(InteractionEntry::parse("pair:title"), ConfigError);
        CHECK_THROWS_AS(InteractionEntry::parse("triple:a|b|c"), ConfigError);
        CHECK_THROWS_AS(InteractionEntry::parse("first:price"), ConfigError);
    }

    TEST_CASE("explicit specs reject bad entries")
    {
        const std::vector<InteractionEntry> dup{InteractionEntry::pair(FieldId::Query, FieldId::Title),
                                                InteractionEntry::pair(FieldId::Title, FieldId::Query)};
        CHECK_THROWS_AS(spec_from_entries(dup), ConfigError);
        const std::vector<InteractionEntry> self{{true, FieldId::Title, FieldId::Title}};
        CHECK_THROWS_AS(spec_from_entries(self), ConfigError);
        const std::vector<FieldId> fields{FieldId::Query, FieldId::Title};
        const SelectExplicit outside{{InteractionEntry::pair(FieldId::Query, FieldId::Image)}};
        CHECK_THROWS_AS(enumerate_interactions(fields, outside, false), ConfigError);
        const std::vector<FieldId> repeated{FieldId::Query, FieldId::Query};
        CHECK_THROWS_AS(enumerate_interactions(repeated, SelectAll{}, true), ConfigError);
    }

    TEST_CASE("json round trip")
    {
        const auto spec = enumerate_interactions(first_k(6), SelectQueryField{}, true);
        CHECK(spec_from_json(spec_to_json(spec)) == spec);
    }

    TEST_CASE("hadamard and dot")
    {
        const std::vector<double> u{1.0, 2.0, 3.0};
        const std::vector<double> v{4.0, -5.0, 0.5};
        CHECK(hadamard(u, v) == std::vector<double>{4.0, -10.0, 1.5});
        CHECK(dot(u, v) == doctest::Approx(-4.5));
        const std::vector<double> w{1.0};
        CHECK_THROWS_AS(hadamard(u, w), DataError);
        CHECK_THROWS_AS(dot(u, w), DataError);
    }
}
