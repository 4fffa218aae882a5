// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fieldrank {

/// Lowercases, then splits on whitespace and punctuation. Empty tokens are dropped.
TextList tokenize(std::string_view text);

/// FNV-1a 64 of the UTF-8 bytes, reduced modulo `bucket_count`.
std::uint64_t hash_token(std::string_view token, std::uint64_t bucket_count);

/// Static (non-learned) encoder settings.
struct EncoderConfig {
    std::uint64_t bucket_count = 1u << 15;
    std::size_t image_dim = 0;
    /// Country vocabulary; the row of a label is its index here.
    std::vector<std::string> countries;
    /// One token table for every text field when true, one per text field otherwise.
    bool shared_token_table = true;

    /// Row of `label` in the country table, or -1 when unknown.
    std::ptrdiff_t country_row(std::string_view label) const;

    bool operator==(const EncoderConfig&) const = default;
};

/// Learned tables for the per-field mapping functions. Every table has `d` columns.
struct FieldEncoderParams {
    /// One table when shared; otherwise query, title, ingredients, description.
    std::vector<Tensor> token_tables;
    Tensor country_emb;
    /// image_dim x d.
    Tensor image_proj;

    std::size_t dim() const { return country_emb.cols; }
    const Tensor& token_table(FieldId f) const;
    Tensor& token_table(FieldId f);

    bool operator==(const FieldEncoderParams&) const = default;
};

/// Zero-valued tables shaped for `config` with embedding dimension `d`.
FieldEncoderParams make_encoder_tables(const EncoderConfig& config, std::size_t d);

/// A field's content resolved against the encoder config: token buckets, a
/// category row, or the raw dense vector. Absent content encodes to zero.
struct PreparedInput {
    bool present = false;
    std::vector<std::uint32_t> rows;
    std::vector<double> dense;
};

using PreparedFields = std::array<PreparedInput, kFieldCount>;

PreparedInput prepare_field(FieldId field, const FieldContent* content, const EncoderConfig& config);
/// Prepares all document fields; the query slot stays empty.
PreparedFields prepare_document(const Document& doc, const EncoderConfig& config);
PreparedInput prepare_query(const TextList& query, const EncoderConfig& config);

std::vector<double> encode_prepared(FieldId field, const PreparedInput& input, const FieldEncoderParams& params);

/// Row indices touched during backward, per table (token tables then country).
struct RowTouches {
    std::vector<std::vector<std::uint32_t>> per_table;
};

/// Accumulates d(encode)/d(table) * grad_out into `grads`.
void encode_prepared_backward(FieldId field, const PreparedInput& input, std::span<const double> grad_out,
                              const FieldEncoderParams& params, FieldEncoderParams& grads,
                              RowTouches* touches = nullptr);

std::vector<double> encode_field(FieldId field, const FieldContent& content, const EncoderConfig& config,
                                 const FieldEncoderParams& params);
std::vector<double> encode_query(const TextList& query, const EncoderConfig& config,
                                 const FieldEncoderParams& params);

/// Index of a field's token table within FieldEncoderParams::token_tables.
std::size_t token_table_index(FieldId f, bool shared);

} // namespace fieldrank
