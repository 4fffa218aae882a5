// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fieldrank {

using FieldPair = std::pair<FieldId, FieldId>;

/// Orders the two fields of a pair by field name.
FieldPair canonical_pair(FieldId a, FieldId b);

/// A single interaction: either one field (first order) or a field pair.
struct InteractionEntry {
    bool is_pair = false;
    FieldId a = FieldId::Query;
    FieldId b = FieldId::Query;

    static InteractionEntry first(FieldId f) { return {false, f, f}; }
    static InteractionEntry pair(FieldId x, FieldId y);

    /// "first:<field>" or "pair:<a>|<b>".
    std::string name() const;
    static InteractionEntry parse(std::string_view name);

    bool operator==(const InteractionEntry&) const = default;
};

struct SelectQueryField {};
struct SelectSecondOrderAll {};
struct SelectAll {};
struct SelectFirstOrderOnly {};
struct SelectExplicit {
    std::vector<InteractionEntry> entries;
};

using SelectionMode =
    std::variant<SelectQueryField, SelectSecondOrderAll, SelectAll, SelectFirstOrderOnly, SelectExplicit>;

/// The first-order fields and second-order pairs a model consumes, always in
/// canonical order: fields sorted by name, pairs sorted by (a, b) name.
struct InteractionSpec {
    std::vector<FieldId> first_order;
    std::vector<FieldPair> second_order;

    std::size_t size() const { return first_order.size() + second_order.size(); }
    bool references(FieldId f) const;
    /// First-order entries followed by pairs, in spec order.
    std::vector<InteractionEntry> entries() const;
    void canonicalize();

    bool operator==(const InteractionSpec&) const = default;
};

/// Enumeration over abstract field positions 0..k-1; `query` is the position
/// of the query field, if any. Explicit selections are not accepted.
struct IndexSpec {
    std::vector<std::size_t> first_order;
    std::vector<std::pair<std::size_t, std::size_t>> second_order;
    std::size_t size() const { return first_order.size() + second_order.size(); }
};

IndexSpec enumerate_index_interactions(std::size_t k, std::optional<std::size_t> query, const SelectionMode& mode,
                                       bool include_first_order);

InteractionSpec enumerate_interactions(std::span<const FieldId> fields, const SelectionMode& mode,
                                       bool include_first_order);

/// Builds a canonical spec from an explicit entry list; rejects duplicates and self-pairs.
InteractionSpec spec_from_entries(std::span<const InteractionEntry> entries);

std::vector<double> hadamard(std::span<const double> u, std::span<const double> v);
double dot(std::span<const double> u, std::span<const double> v);

nlohmann::json spec_to_json(const InteractionSpec& spec);
InteractionSpec spec_from_json(const nlohmann::json& j);

} // namespace fieldrank
