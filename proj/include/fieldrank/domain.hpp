// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fieldrank {

/// The six fields a ranking model can look at. `Query` belongs to the
/// impression; the other five belong to the recipe document.
enum class FieldId : std::uint8_t { Query, Title, Ingredients, Description, Country, Image };

inline constexpr std::size_t kFieldCount = 6;

inline constexpr std::array<FieldId, kFieldCount> kAllFields{
    FieldId::Query, FieldId::Title, FieldId::Ingredients,
    FieldId::Description, FieldId::Country, FieldId::Image};

std::string_view field_name(FieldId f);
std::optional<FieldId> field_from_name(std::string_view name);

inline constexpr std::size_t field_index(FieldId f) { return static_cast<std::size_t>(f); }

enum class FieldKind { Text, Category, Dense };
FieldKind field_kind(FieldId f);

using TextList = std::vector<std::string>;

struct Category {
    std::string label;
    bool operator==(const Category&) const = default;
};

struct DenseVector {
    std::vector<double> values;
    bool operator==(const DenseVector&) const = default;
};

using FieldContent = std::variant<TextList, Category, DenseVector>;

struct Document {
    std::string doc_id;
    std::map<FieldId, FieldContent> fields;

    const FieldContent* find(FieldId f) const;
};

/// One query impression, already truncated at its last click.
struct Session {
    std::string session_id;
    TextList query;
    std::vector<std::string> candidates;
    /// Sorted, unique, 0-based indices into `candidates`.
    std::vector<std::size_t> clicked_positions;
    std::int64_t event_time = 0;

    bool is_clicked(std::size_t pos) const;
};

struct Dataset {
    std::map<std::string, Document> catalog;
    std::vector<Session> sessions;
};

/// Checks every domain invariant and returns one message per violation.
/// When `image_dim` is given, dense vectors must have exactly that length;
/// otherwise they only need to agree with each other.
std::vector<std::string> validate_dataset(const Dataset& dataset,
                                          std::optional<std::size_t> image_dim = std::nullopt);

} // namespace fieldrank
