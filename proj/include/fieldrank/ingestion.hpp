// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace fieldrank {

/// One click event from the search log.
struct RawLogRecord {
    std::string session_id;
    std::int64_t event_time = 0;
    std::string query;
    std::vector<std::string> retrieved_doc_ids;
    std::string clicked_doc_id;
};

std::map<std::string, Document> parse_catalog(const std::string& path);
std::map<std::string, Document> parse_catalog(std::istream& in);

std::vector<RawLogRecord> parse_log(const std::string& path);
std::vector<RawLogRecord> parse_log(std::istream& in);

/// Counters for records or candidates that were dropped while building sessions.
struct BuildWarnings {
    std::size_t skipped_records = 0;      ///< clicked doc not in the record's own retrieved list
    std::size_t duplicate_candidates = 0; ///< repeated doc ids removed from a retrieved list
    std::size_t unresolved_clicks = 0;    ///< click not present in the group's latest list
    std::size_t dropped_groups = 0;       ///< groups left without any usable click

    std::size_t total() const
    {
        return skipped_records + duplicate_candidates + unresolved_clicks + dropped_groups;
    }
};

struct BuildResult {
    std::vector<Session> sessions;
    BuildWarnings warnings;
};

/// Groups records by (session_id, query), takes the latest event's retrieved
/// list, collects clicked positions and truncates at the last click.
BuildResult build_sessions(const std::vector<RawLogRecord>& records);

struct FoldSplit {
    std::size_t fold_count = 10;
    /// Fold index per session, parallel to the session list.
    std::vector<std::size_t> assignments;

    std::vector<std::size_t> members(std::size_t fold) const;
    std::vector<std::size_t> sizes() const;
};

/// Seeded shuffle, then round-robin dealing into `fold_count` folds.
FoldSplit make_folds(std::size_t session_count, std::size_t fold_count, std::uint64_t seed);

nlohmann::json document_to_json(const Document& doc);
nlohmann::json record_to_json(const RawLogRecord& r);

void write_catalog(std::ostream& out, const std::map<std::string, Document>& catalog);
void write_log(std::ostream& out, const std::vector<RawLogRecord>& records);

} // namespace fieldrank
