// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/domain.hpp"

#include <algorithm>
#include <set>

namespace fieldrank {

namespace {

constexpr std::array<std::string_view, kFieldCount> kNames{
    "query", "title", "ingredients", "description", "country", "image"};

} // namespace

std::string_view field_name(FieldId f) { return kNames[field_index(f)]; }

std::optional<FieldId> field_from_name(std::string_view name)
{
    for (FieldId f : kAllFields) {
        if (kNames[field_index(f)] == name) {
            return f;
        }
    }
    return std::nullopt;
}

FieldKind field_kind(FieldId f)
{
    switch (f) {
    case FieldId::Country:
        return FieldKind::Category;
    case FieldId::Image:
        return FieldKind::Dense;
    default:
        return FieldKind::Text;
    }
}

const FieldContent* Document::find(FieldId f) const
{
    auto it = fields.find(f);
    return it == fields.end() ? nullptr : &it->second;
}

bool Session::is_clicked(std::size_t pos) const
{
    return std::binary_search(clicked_positions.begin(), clicked_positions.end(), pos);
}

std::vector<std::string> validate_dataset(const Dataset& dataset, std::optional<std::size_t> image_dim)
{
    std::vector<std::string> out;
    std::optional<std::size_t> seen_dim = image_dim;

    for (const auto& [key, doc] : dataset.catalog) {
        if (doc.doc_id != key) {
            out.push_back("doc " + key + ": catalog key differs from doc_id '" + doc.doc_id + "'");
        }
        for (const auto& [field, content] : doc.fields) {
            const std::string where = "doc " + key + " field " + std::string(field_name(field));
            if (field == FieldId::Query) {
                out.push_back(where + ": query is not a document field");
                continue;
            }
            const FieldKind kind = field_kind(field);
            if (kind == FieldKind::Text && !std::holds_alternative<TextList>(content)) {
                out.push_back(where + ": expected text list");
            } else if (kind == FieldKind::Category) {
                const auto* cat = std::get_if<Category>(&content);
                if (cat == nullptr) {
                    out.push_back(where + ": expected category");
                } else if (cat->label.empty()) {
                    out.push_back(where + ": category label is empty");
                }
            } else if (kind == FieldKind::Dense) {
                const auto* dense = std::get_if<DenseVector>(&content);
                if (dense == nullptr) {
                    out.push_back(where + ": expected dense vector");
                } else if (!seen_dim) {
                    seen_dim = dense->values.size();
                } else if (dense->values.size() != *seen_dim) {
                    out.push_back(where + ": dense vector length " + std::to_string(dense->values.size()) +
                                  " != image dimension " + std::to_string(*seen_dim));
                }
            }
        }
    }

    for (const Session& s : dataset.sessions) {
        const std::string where = "session " + s.session_id;
        if (s.candidates.empty()) {
            out.push_back(where + ": candidate list is empty");
            continue;
        }
        std::set<std::string> unique(s.candidates.begin(), s.candidates.end());
        if (unique.size() != s.candidates.size()) {
            out.push_back(where + ": candidate list contains duplicates");
        }
        for (const auto& id : s.candidates) {
            if (!dataset.catalog.contains(id)) {
                out.push_back(where + ": referential integrity: unknown doc_id " + id);
            }
        }
        if (s.clicked_positions.empty()) {
            out.push_back(where + ": no clicked positions");
            continue;
        }
        if (!std::is_sorted(s.clicked_positions.begin(), s.clicked_positions.end()) ||
            std::adjacent_find(s.clicked_positions.begin(), s.clicked_positions.end()) !=
                s.clicked_positions.end()) {
            out.push_back(where + ": clicked positions not sorted and unique");
        }
        const std::size_t last = *std::max_element(s.clicked_positions.begin(), s.clicked_positions.end());
        if (last >= s.candidates.size()) {
            out.push_back(where + ": clicked position " + std::to_string(last) + " out of range");
        } else if (last != s.candidates.size() - 1) {
            out.push_back(where + ": truncation: last candidate (position " +
                          std::to_string(s.candidates.size() - 1) + ") is not clicked");
        }
    }
    return out;
}

} // namespace fieldrank
