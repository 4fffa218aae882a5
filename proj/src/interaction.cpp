// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/interaction.hpp"

#include "fieldrank/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace fieldrank {

namespace {

bool name_less(FieldId a, FieldId b) { return field_name(a) < field_name(b); }

bool pair_less(const FieldPair& x, const FieldPair& y)
{
    if (x.first != y.first) {
        return name_less(x.first, y.first);
    }
    return name_less(x.second, y.second);
}

FieldId parse_field(std::string_view name)
{
    auto f = field_from_name(name);
    if (!f) {
        throw ConfigError("unknown field '" + std::string(name) + "'");
    }
    return *f;
}

} // namespace

FieldPair canonical_pair(FieldId a, FieldId b)
{
    return name_less(b, a) ? FieldPair{b, a} : FieldPair{a, b};
}

InteractionEntry InteractionEntry::pair(FieldId x, FieldId y)
{
    auto [a, b] = canonical_pair(x, y);
    return {true, a, b};
}

std::string InteractionEntry::name() const
{
    if (!is_pair) {
        return "first:" + std::string(field_name(a));
    }
    return "pair:" + std::string(field_name(a)) + "|" + std::string(field_name(b));
}

InteractionEntry InteractionEntry::parse(std::string_view name)
{
    if (name.starts_with("first:")) {
        return first(parse_field(name.substr(6)));
    }
    if (name.starts_with("pair:")) {
        auto rest = name.substr(5);
        auto bar = rest.find('|');
        if (bar == std::string_view::npos) {
            throw ConfigError("malformed interaction name '" + std::string(name) + "'");
        }
        return pair(parse_field(rest.substr(0, bar)), parse_field(rest.substr(bar + 1)));
    }
    throw ConfigError("malformed interaction name '" + std::string(name) + "'");
}

bool InteractionSpec::references(FieldId f) const
{
    if (std::find(first_order.begin(), first_order.end(), f) != first_order.end()) {
        return true;
    }
    return std::any_of(second_order.begin(), second_order.end(),
                       [f](const FieldPair& p) { return p.first == f || p.second == f; });
}

std::vector<InteractionEntry> InteractionSpec::entries() const
{
    std::vector<InteractionEntry> out;
    out.reserve(size());
    for (FieldId f : first_order) {
        out.push_back(InteractionEntry::first(f));
    }
    for (const auto& [a, b] : second_order) {
        out.push_back(InteractionEntry::pair(a, b));
    }
    return out;
}

void InteractionSpec::canonicalize()
{
    for (auto& p : second_order) {
        p = canonical_pair(p.first, p.second);
    }
    std::sort(first_order.begin(), first_order.end(), name_less);
    std::sort(second_order.begin(), second_order.end(), pair_less);
}

IndexSpec enumerate_index_interactions(std::size_t k, std::optional<std::size_t> query, const SelectionMode& mode,
                                       bool include_first_order)
{
    if (std::holds_alternative<SelectExplicit>(mode)) {
        throw ConfigError("explicit selections have no index form");
    }
    IndexSpec spec;
    const bool query_field = std::holds_alternative<SelectQueryField>(mode);
    if (query_field) {
        if (!query || *query >= k) {
            throw ConfigError("query-field selection requires the query field");
        }
        for (std::size_t i = 0; i < k; ++i) {
            if (i != *query) {
                spec.second_order.emplace_back(std::min(i, *query), std::max(i, *query));
            }
        }
    } else if (!std::holds_alternative<SelectFirstOrderOnly>(mode)) {
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                spec.second_order.emplace_back(i, j);
            }
        }
    }
    const bool first = std::holds_alternative<SelectAll>(mode) || std::holds_alternative<SelectFirstOrderOnly>(mode) ||
                       include_first_order;
    if (first) {
        for (std::size_t i = 0; i < k; ++i) {
            spec.first_order.push_back(i);
        }
    }
    return spec;
}

InteractionSpec enumerate_interactions(std::span<const FieldId> fields, const SelectionMode& mode,
                                       bool include_first_order)
{
    std::set<FieldId> distinct(fields.begin(), fields.end());
    if (distinct.size() != fields.size()) {
        throw ConfigError("enumerate_interactions: fields must be distinct");
    }

    if (const auto* expl = std::get_if<SelectExplicit>(&mode)) {
        for (const auto& e : expl->entries) {
            if (!distinct.contains(e.a) || !distinct.contains(e.b)) {
                throw ConfigError("explicit interaction " + e.name() + " uses a field outside the field list");
            }
        }
        return spec_from_entries(expl->entries);
    }

    std::optional<std::size_t> query;
    if (auto it = std::find(fields.begin(), fields.end(), FieldId::Query); it != fields.end()) {
        query = static_cast<std::size_t>(it - fields.begin());
    }
    const IndexSpec index = enumerate_index_interactions(fields.size(), query, mode, include_first_order);
    InteractionSpec spec;
    for (auto i : index.first_order) {
        spec.first_order.push_back(fields[i]);
    }
    for (auto [i, j] : index.second_order) {
        spec.second_order.push_back(canonical_pair(fields[i], fields[j]));
    }
    spec.canonicalize();
    return spec;
}

InteractionSpec spec_from_entries(std::span<const InteractionEntry> entries)
{
    InteractionSpec spec;
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.is_pair && e.a == e.b) {
            throw ConfigError("self-pair " + std::string(field_name(e.a)) + " is not an interaction");
        }
        const auto canon = e.is_pair ? InteractionEntry::pair(e.a, e.b) : e;
        if (!seen.insert(canon.name()).second) {
            throw ConfigError("duplicate interaction " + canon.name());
        }
        if (canon.is_pair) {
            spec.second_order.emplace_back(canon.a, canon.b);
        } else {
            spec.first_order.push_back(canon.a);
        }
    }
    spec.canonicalize();
    return spec;
}

std::vector<double> hadamard(std::span<const double> u, std::span<const double> v)
{
    if (u.size() != v.size()) {
        throw DataError("hadamard: length mismatch");
    }
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = u[i] * v[i];
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v)
{
    if (u.size() != v.size()) {
        throw DataError("dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        s += u[i] * v[i];
    }
    return s;
}

nlohmann::json spec_to_json(const InteractionSpec& spec)
{
    nlohmann::json first = nlohmann::json::array();
    for (FieldId f : spec.first_order) {
        first.push_back(std::string(field_name(f)));
    }
    nlohmann::json second = nlohmann::json::array();
    for (const auto& [a, b] : spec.second_order) {
        second.push_back({std::string(field_name(a)), std::string(field_name(b))});
    }
    return {{"first_order", first}, {"second_order", second}};
}

InteractionSpec spec_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ConfigError("interaction spec must be a JSON object");
    }
    std::vector<InteractionEntry> entries;
    if (j.contains("first_order")) {
        for (const auto& f : j.at("first_order")) {
            entries.push_back(InteractionEntry::first(parse_field(f.get<std::string>())));
        }
    }
    if (j.contains("second_order")) {
        for (const auto& p : j.at("second_order")) {
            if (!p.is_array() || p.size() != 2) {
                throw ConfigError("second_order entries must be two-element arrays");
            }
            entries.push_back(InteractionEntry::pair(parse_field(p[0].get<std::string>()),
                                                     parse_field(p[1].get<std::string>())));
        }
    }
    return spec_from_entries(entries);
}

} // namespace fieldrank
