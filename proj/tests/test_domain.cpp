// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/domain.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace fieldrank;
using namespace fieldrank::test;

namespace {

Dataset two_sessions()
{
    Dataset ds = small_dataset(4);
    ds.sessions.push_back(make_session("a", {"d0", "d1", "d2"}, {2}));
    ds.sessions.push_back(make_session("b", {"d3", "d1"}, {0, 1}));
    return ds;
}

bool any_contains(const std::vector<std::string>& msgs, const std::string& needle)
{
    for (const auto& m : msgs) {
        if (m.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST_SUITE("domain")
{
    TEST_CASE("six distinct fields with stable names")
    {
        std::set<std::string_view> names;
        for (FieldId f : kAllFields) {
            names.insert(field_name(f));
            CHECK(field_from_name(field_name(f)) == f);
        }
        CHECK(names.size() == 6);
        CHECK(field_name(FieldId::Query) == "query");
        CHECK_FALSE(field_from_name("price").has_value());
        CHECK(field_kind(FieldId::Country) == FieldKind::Category);
        CHECK(field_kind(FieldId::Image) == FieldKind::Dense);
        CHECK(field_kind(FieldId::Query) == FieldKind::Text);
    }

    TEST_CASE("well-formed dataset has no violations")
    {
        CHECK(validate_dataset(two_sessions()).empty());
    }

    TEST_CASE("unclicked last candidate violates truncation")
    {
        Dataset ds = two_sessions();
        ds.sessions[0].clicked_positions = {1};
        const auto msgs = validate_dataset(ds);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].find("truncation") != std::string::npos);
        CHECK(msgs[0].find("a") != std::string::npos);
    }

    TEST_CASE("unknown doc id violates referential integrity")
    {
        Dataset ds = two_sessions();
        ds.sessions[1].candidates[0] = "d999";
        const auto msgs = validate_dataset(ds);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].find("referential integrity") != std::string::npos);
        CHECK(msgs[0].find("d999") != std::string::npos);
    }

    TEST_CASE("other session invariants")
    {
        Dataset ds = two_sessions();
        ds.sessions[0].candidates = {"d0", "d0", "d2"};
        ds.sessions[1].clicked_positions.clear();
        const auto msgs = validate_dataset(ds);
        CHECK(any_contains(msgs, "duplicates"));
        CHECK(any_contains(msgs, "no clicked positions"));

        Dataset empty = two_sessions();
        empty.sessions[0].candidates.clear();
        empty.sessions[0].clicked_positions.clear();
        CHECK(any_contains(validate_dataset(empty), "empty"));
    }

    TEST_CASE("document invariants")
    {
        Dataset ds = two_sessions();
        ds.catalog["d0"].fields[FieldId::Query] = TextList{"x"};
        ds.catalog["d1"].fields[FieldId::Country] = Category{""};
        ds.catalog["d2"].fields[FieldId::Image] = DenseVector{{1.0, 2.0}};
        const auto msgs = validate_dataset(ds);
        CHECK(any_contains(msgs, "query is not a document field"));
        CHECK(any_contains(msgs, "category label is empty"));
        CHECK(any_contains(msgs, "dense vector length"));

        Dataset ok = two_sessions();
        CHECK(validate_dataset(ok, 3).empty());
        CHECK_FALSE(validate_dataset(ok, 4).empty());
    }

    TEST_CASE("validation is pure and idempotent")
    {
        Dataset ds = two_sessions();
        ds.sessions[0].clicked_positions = {0};
        const auto first = validate_dataset(ds);
        const auto second = validate_dataset(ds);
        CHECK(first == second);
        CHECK(ds.sessions[0].clicked_positions == std::vector<std::size_t>{0});
    }

    TEST_CASE("accepted sessions end at a click")
    {
        Dataset ds = small_dataset(10);
        add_random_sessions(ds, 200, 5);
        REQUIRE(validate_dataset(ds).empty());
        for (const auto& s : ds.sessions) {
            CHECK_FALSE(s.clicked_positions.empty());
            CHECK(s.clicked_positions.back() + 1 == s.candidates.size());
            CHECK(s.is_clicked(s.candidates.size() - 1));
        }
    }
}
