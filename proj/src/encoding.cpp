// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/encoding.hpp"

#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"

#include <algorithm>

namespace fieldrank {

namespace {

// Decodes one UTF-8 code point starting at s[i]; invalid bytes decode to
// themselves with length 1.
char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len)
{
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    auto bits = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
    if (b0 < 0x80) {
        len = 1;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        len = 2;
        return (static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1);
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        len = 3;
        return (static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2);
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        len = 4;
        return (static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3);
    }
    len = 1;
    return b0;
}

void append_utf8(std::string& out, char32_t c)
{
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

bool is_separator(char32_t c)
{
    if (c < 0x80) {
        const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        return !alnum;
    }
    // Latin-1 whitespace and punctuation, general punctuation, CJK punctuation.
    if (c == 0x85 || c == 0xA0 || (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB5 && c != 0xBA) ||
        c == 0xD7 || c == 0xF7) {
        return true;
    }
    if (c == 0x1680 || (c >= 0x2000 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F) || c == 0xFEFF) {
        return true;
    }
    if ((c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20)) {
        return true;
    }
    return false;
}

char32_t to_lower(char32_t c)
{
    if (c >= 'A' && c <= 'Z') {
        return c + 32;
    }
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) {
        return c + 32;
    }
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) {
        return c + 32;
    }
    if (c >= 0x410 && c <= 0x42F) {
        return c + 32;
    }
    if (c >= 0x400 && c <= 0x40F) {
        return c + 80;
    }
    return c;
}

void check_dim(std::span<const double> grad_out, std::size_t d)
{
    if (grad_out.size() != d) {
        throw DataError("encoder backward: gradient length mismatch");
    }
}

} // namespace

TextList tokenize(std::string_view text)
{
    TextList tokens;
    std::string current;
    for (std::size_t i = 0; i < text.size();) {
        std::size_t len = 1;
        const char32_t c = decode_utf8(text, i, len);
        if (is_separator(c)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else if (c < 0x80 || len > 1) {
            append_utf8(current, to_lower(c));
        } else {
            // Stray byte from malformed UTF-8: keep it verbatim.
            current.push_back(text[i]);
        }
        i += len;
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::uint64_t hash_token(std::string_view token, std::uint64_t bucket_count)
{
    if (bucket_count == 0) {
        throw ConfigError("hash_token: bucket_count must be positive");
    }
    return fnv1a64(token) % bucket_count;
}

std::ptrdiff_t EncoderConfig::country_row(std::string_view label) const
{
    auto it = std::find(countries.begin(), countries.end(), label);
    return it == countries.end() ? -1 : it - countries.begin();
}

std::size_t token_table_index(FieldId f, bool shared)
{
    if (field_kind(f) != FieldKind::Text) {
        throw DataError("field " + std::string(field_name(f)) + " has no token table");
    }
    if (shared) {
        return 0;
    }
    switch (f) {
    case FieldId::Query:
        return 0;
    case FieldId::Title:
        return 1;
    case FieldId::Ingredients:
        return 2;
    default:
        return 3;
    }
}

const Tensor& FieldEncoderParams::token_table(FieldId f) const
{
    return token_tables[token_table_index(f, token_tables.size() == 1)];
}

Tensor& FieldEncoderParams::token_table(FieldId f)
{
    return token_tables[token_table_index(f, token_tables.size() == 1)];
}

FieldEncoderParams make_encoder_tables(const EncoderConfig& config, std::size_t d)
{
    if (config.bucket_count == 0) {
        throw ConfigError("encoder: bucket_count must be positive");
    }
    if (d == 0) {
        throw ConfigError("encoder: embedding dimension must be positive");
    }
    FieldEncoderParams p;
    const std::size_t n_tables = config.shared_token_table ? 1 : 4;
    for (std::size_t i = 0; i < n_tables; ++i) {
        p.token_tables.emplace_back(config.bucket_count, d);
    }
    p.country_emb = Tensor(config.countries.size(), d);
    p.image_proj = Tensor(config.image_dim, d);
    return p;
}

PreparedInput prepare_field(FieldId field, const FieldContent* content, const EncoderConfig& config)
{
    PreparedInput in;
    if (content == nullptr) {
        return in;
    }
    switch (field_kind(field)) {
    case FieldKind::Text: {
        const auto* tokens = std::get_if<TextList>(content);
        if (tokens == nullptr) {
            throw DataError("field " + std::string(field_name(field)) + " expects a text list");
        }
        in.present = true;
        in.rows.reserve(tokens->size());
        for (const auto& t : *tokens) {
            in.rows.push_back(static_cast<std::uint32_t>(hash_token(t, config.bucket_count)));
        }
        break;
    }
    case FieldKind::Category: {
        const auto* cat = std::get_if<Category>(content);
        if (cat == nullptr) {
            throw DataError("field " + std::string(field_name(field)) + " expects a category");
        }
        in.present = true;
        const auto row = config.country_row(cat->label);
        if (row >= 0) {
            in.rows.push_back(static_cast<std::uint32_t>(row));
        }
        break;
    }
    case FieldKind::Dense: {
        const auto* dense = std::get_if<DenseVector>(content);
        if (dense == nullptr) {
            throw DataError("field " + std::string(field_name(field)) + " expects a dense vector");
        }
        if (dense->values.size() != config.image_dim) {
            throw DataError("image vector has length " + std::to_string(dense->values.size()) +
                            ", expected " + std::to_string(config.image_dim));
        }
        in.present = true;
        in.dense = dense->values;
        break;
    }
    }
    return in;
}

PreparedFields prepare_document(const Document& doc, const EncoderConfig& config)
{
    PreparedFields out;
    for (FieldId f : kAllFields) {
        if (f != FieldId::Query) {
            out[field_index(f)] = prepare_field(f, doc.find(f), config);
        }
    }
    return out;
}

PreparedInput prepare_query(const TextList& query, const EncoderConfig& config)
{
    const FieldContent content = query;
    return prepare_field(FieldId::Query, &content, config);
}

std::vector<double> encode_prepared(FieldId field, const PreparedInput& input, const FieldEncoderParams& params)
{
    const std::size_t d = params.dim();
    std::vector<double> out(d, 0.0);
    if (!input.present) {
        return out;
    }
    switch (field_kind(field)) {
    case FieldKind::Text: {
        if (input.rows.empty()) {
            return out;
        }
        const Tensor& table = params.token_table(field);
        for (auto r : input.rows) {
            auto row = table.row(r);
            for (std::size_t j = 0; j < d; ++j) {
                out[j] += row[j];
            }
        }
        const double inv = 1.0 / static_cast<double>(input.rows.size());
        for (auto& x : out) {
            x *= inv;
        }
        break;
    }
    case FieldKind::Category:
        if (!input.rows.empty()) {
            auto row = params.country_emb.row(input.rows.front());
            std::copy(row.begin(), row.end(), out.begin());
        }
        break;
    case FieldKind::Dense: {
        const Tensor& proj = params.image_proj;
        if (input.dense.size() != proj.rows) {
            throw DataError("image vector length does not match the projection");
        }
        for (std::size_t i = 0; i < proj.rows; ++i) {
            const double x = input.dense[i];
            auto row = proj.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                out[j] += x * row[j];
            }
        }
        break;
    }
    }
    return out;
}

void encode_prepared_backward(FieldId field, const PreparedInput& input, std::span<const double> grad_out,
                              const FieldEncoderParams& params, FieldEncoderParams& grads, RowTouches* touches)
{
    if (!input.present) {
        return;
    }
    const std::size_t d = params.dim();
    check_dim(grad_out, d);
    const bool shared = params.token_tables.size() == 1;
    switch (field_kind(field)) {
    case FieldKind::Text: {
        if (input.rows.empty()) {
            return;
        }
        const std::size_t t = token_table_index(field, shared);
        Tensor& g = grads.token_tables[t];
        const double inv = 1.0 / static_cast<double>(input.rows.size());
        for (auto r : input.rows) {
            auto row = g.row(r);
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += inv * grad_out[j];
            }
            if (touches != nullptr) {
                touches->per_table[t].push_back(r);
            }
        }
        break;
    }
    case FieldKind::Category:
        if (!input.rows.empty()) {
            auto row = grads.country_emb.row(input.rows.front());
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += grad_out[j];
            }
            if (touches != nullptr) {
                touches->per_table[params.token_tables.size()].push_back(input.rows.front());
            }
        }
        break;
    case FieldKind::Dense: {
        Tensor& g = grads.image_proj;
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double x = input.dense[i];
            auto row = g.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += x * grad_out[j];
            }
        }
        break;
    }
    }
}

std::vector<double> encode_field(FieldId field, const FieldContent& content, const EncoderConfig& config,
                                 const FieldEncoderParams& params)
{
    return encode_prepared(field, prepare_field(field, &content, config), params);
}

std::vector<double> encode_query(const TextList& query, const EncoderConfig& config,
                                 const FieldEncoderParams& params)
{
    return encode_prepared(FieldId::Query, prepare_query(query, config), params);
}

} // namespace fieldrank
