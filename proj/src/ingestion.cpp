// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/ingestion.hpp"

#include "fieldrank/encoding.hpp"
#include "fieldrank/errors.hpp"
#include "fieldrank/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace fieldrank {

namespace {

using nlohmann::json;

std::string line_prefix(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

template <class Fn>
void for_each_json_line(std::istream& in, Fn&& fn)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(line_prefix(line_no) + "invalid JSON (" + e.what() + ")");
        }
        if (!j.is_object()) {
            throw DataError(line_prefix(line_no) + "expected a JSON object");
        }
        try {
            fn(j, line_no);
        } catch (const json::exception& e) {
            throw DataError(line_prefix(line_no) + e.what());
        }
    }
}

std::ifstream open_or_throw(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return in;
}

std::string join(const TextList& tokens)
{
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += t;
    }
    return out;
}

} // namespace

std::map<std::string, Document> parse_catalog(std::istream& in)
{
    std::map<std::string, Document> catalog;
    for_each_json_line(in, [&](const json& j, std::size_t line_no) {
        if (!j.contains("id")) {
            throw DataError(line_prefix(line_no) + "missing id");
        }
        Document doc;
        doc.doc_id = j.at("id").get<std::string>();
        if (j.contains("title")) {
            doc.fields[FieldId::Title] = tokenize(j.at("title").get<std::string>());
        }
        if (j.contains("ingredients")) {
            TextList tokens;
            for (const auto& item : j.at("ingredients")) {
                auto t = tokenize(item.get<std::string>());
                tokens.insert(tokens.end(), t.begin(), t.end());
            }
            doc.fields[FieldId::Ingredients] = std::move(tokens);
        }
        if (j.contains("description")) {
            doc.fields[FieldId::Description] = tokenize(j.at("description").get<std::string>());
        }
        if (j.contains("country")) {
            auto label = j.at("country").get<std::string>();
            if (!label.empty()) {
                doc.fields[FieldId::Country] = Category{std::move(label)};
            }
        }
        if (j.contains("image_embedding") && !j.at("image_embedding").is_null()) {
            doc.fields[FieldId::Image] = DenseVector{j.at("image_embedding").get<std::vector<double>>()};
        }
        if (catalog.contains(doc.doc_id)) {
            throw DataError(line_prefix(line_no) + "duplicate id " + doc.doc_id);
        }
        catalog.emplace(doc.doc_id, std::move(doc));
    });
    return catalog;
}

std::map<std::string, Document> parse_catalog(const std::string& path)
{
    auto in = open_or_throw(path);
    return parse_catalog(in);
}

std::vector<RawLogRecord> parse_log(std::istream& in)
{
    std::vector<RawLogRecord> records;
    for_each_json_line(in, [&](const json& j, std::size_t line_no) {
        for (const char* key : {"session_id", "event_time", "query", "retrieved", "clicked"}) {
            if (!j.contains(key)) {
                throw DataError(line_prefix(line_no) + "missing " + key);
            }
        }
        RawLogRecord r;
        r.session_id = j.at("session_id").get<std::string>();
        r.event_time = j.at("event_time").get<std::int64_t>();
        r.query = j.at("query").get<std::string>();
        r.retrieved_doc_ids = j.at("retrieved").get<std::vector<std::string>>();
        r.clicked_doc_id = j.at("clicked").get<std::string>();
        records.push_back(std::move(r));
    });
    return records;
}

std::vector<RawLogRecord> parse_log(const std::string& path)
{
    auto in = open_or_throw(path);
    return parse_log(in);
}

BuildResult build_sessions(const std::vector<RawLogRecord>& records)
{
    BuildResult result;

    // Groups in order of first appearance.
    std::map<std::pair<std::string, std::string>, std::size_t> group_of;
    std::vector<std::vector<const RawLogRecord*>> groups;
    for (const auto& r : records) {
        const bool retrieved = std::find(r.retrieved_doc_ids.begin(), r.retrieved_doc_ids.end(),
                                         r.clicked_doc_id) != r.retrieved_doc_ids.end();
        if (!retrieved) {
            ++result.warnings.skipped_records;
            continue;
        }
        auto [it, inserted] = group_of.try_emplace({r.session_id, r.query}, groups.size());
        if (inserted) {
            groups.emplace_back();
        }
        groups[it->second].push_back(&r);
    }

    for (const auto& group : groups) {
        // Latest event wins; on equal times the later record.
        const RawLogRecord* latest = group.front();
        for (const auto* r : group) {
            if (r->event_time >= latest->event_time) {
                latest = r;
            }
        }

        Session s;
        s.session_id = latest->session_id;
        s.query = tokenize(latest->query);
        s.event_time = latest->event_time;
        std::set<std::string> seen;
        for (const auto& id : latest->retrieved_doc_ids) {
            if (seen.insert(id).second) {
                s.candidates.push_back(id);
            } else {
                ++result.warnings.duplicate_candidates;
            }
        }

        std::set<std::size_t> clicks;
        for (const auto* r : group) {
            auto it = std::find(s.candidates.begin(), s.candidates.end(), r->clicked_doc_id);
            if (it == s.candidates.end()) {
                ++result.warnings.unresolved_clicks;
                continue;
            }
            clicks.insert(static_cast<std::size_t>(it - s.candidates.begin()));
        }
        if (clicks.empty()) {
            ++result.warnings.dropped_groups;
            continue;
        }
        s.clicked_positions.assign(clicks.begin(), clicks.end());
        s.candidates.resize(s.clicked_positions.back() + 1);
        result.sessions.push_back(std::move(s));
    }
    return result;
}

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> FoldSplit::sizes() const
{
    std::vector<std::size_t> out(fold_count, 0);
    for (auto f : assignments) {
        ++out[f];
    }
    return out;
}

FoldSplit make_folds(std::size_t session_count, std::size_t fold_count, std::uint64_t seed)
{
    if (fold_count < 2) {
        throw ConfigError("fold count must be at least 2");
    }
    if (session_count == 0) {
        throw ConfigError("cannot split an empty session list into folds");
    }
    if (fold_count > session_count) {
        throw ConfigError("fold count " + std::to_string(fold_count) + " exceeds session count " +
                          std::to_string(session_count));
    }
    std::vector<std::size_t> order(session_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    FoldSplit split;
    split.fold_count = fold_count;
    split.assignments.assign(session_count, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        split.assignments[order[i]] = i % fold_count;
    }
    return split;
}

json document_to_json(const Document& doc)
{
    json j;
    j["id"] = doc.doc_id;
    if (const auto* c = doc.find(FieldId::Title)) {
        j["title"] = join(std::get<TextList>(*c));
    }
    if (const auto* c = doc.find(FieldId::Ingredients)) {
        j["ingredients"] = std::get<TextList>(*c);
    }
    if (const auto* c = doc.find(FieldId::Description)) {
        j["description"] = join(std::get<TextList>(*c));
    }
    if (const auto* c = doc.find(FieldId::Country)) {
        j["country"] = std::get<Category>(*c).label;
    }
    if (const auto* c = doc.find(FieldId::Image)) {
        j["image_embedding"] = std::get<DenseVector>(*c).values;
    }
    return j;
}

json record_to_json(const RawLogRecord& r)
{
    return {{"session_id", r.session_id},
            {"event_time", r.event_time},
            {"query", r.query},
            {"retrieved", r.retrieved_doc_ids},
            {"clicked", r.clicked_doc_id}};
}

void write_catalog(std::ostream& out, const std::map<std::string, Document>& catalog)
{
    for (const auto& [id, doc] : catalog) {
        out << document_to_json(doc).dump() << '\n';
    }
}

void write_log(std::ostream& out, const std::vector<RawLogRecord>& records)
{
    for (const auto& r : records) {
        out << record_to_json(r).dump() << '\n';
    }
}

} // namespace fieldrank
