#ifndef TOPICTREND_CORPUS_HPP
#define TOPICTREND_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topictrend/common.hpp"

namespace topictrend {

/// One funded award.
struct GrantRecord {
    std::string record_id;
    std::string title;
    std::string abstract;
    int fiscal_year = 0;
    std::int64_t amount = 0;  // whole nominal dollars
    std::string institute;
    std::string activity_code;
    std::string department;

    bool operator==(const GrantRecord&) const = default;
};

enum class RecordFormat { csv, jsonl };

inline RecordFormat parse_record_format(std::string_view s) {
    if (s == "csv") return RecordFormat::csv;
    if (s == "jsonl") return RecordFormat::jsonl;
    throw ArgumentError("unknown record format '" + std::string(s) + "' (expected csv or jsonl)");
}

inline constexpr std::string_view kRecordColumns[] = {
    "record_id", "title", "abstract", "fiscal_year", "amount", "institute", "activity_code", "department"};

namespace detail {

inline int parse_year_field(std::string_view raw, std::size_t line) {
    auto v = parse_number<int>(raw);
    if (!v) throw ParseError(line, "malformed fiscal_year '" + std::string(raw) + "'");
    return *v;
}

inline std::int64_t parse_amount_field(std::string_view raw, std::size_t line) {
    auto v = parse_number<std::int64_t>(raw);
    if (!v) throw ParseError(line, "malformed amount '" + std::string(raw) + "'");
    if (*v < 0) throw ParseError(line, "negative amount " + std::to_string(*v));
    return *v;
}

inline void check_unique_ids(const std::vector<GrantRecord>& records, const std::vector<std::size_t>& lines) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (!seen.insert(records[i].record_id).second)
            throw ParseError(lines[i], "duplicate record_id '" + records[i].record_id + "'");
}

}  // namespace detail

inline std::vector<GrantRecord> parse_records_csv(std::istream& in) {
    const auto rows = read_csv(in);
    if (rows.empty()) throw SchemaError("empty CSV: missing header");
    const auto col = require_columns(rows.front(), kRecordColumns);
    std::vector<GrantRecord> records;
    std::vector<std::size_t> lines;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != rows.front().fields.size())
            throw ParseError(row.line, "expected " + std::to_string(rows.front().fields.size()) +
                                           " fields, found " + std::to_string(row.fields.size()));
        GrantRecord g;
        g.record_id = row.fields[col[0]];
        g.title = row.fields[col[1]];
        g.abstract = row.fields[col[2]];
        g.fiscal_year = detail::parse_year_field(row.fields[col[3]], row.line);
        g.amount = detail::parse_amount_field(row.fields[col[4]], row.line);
        g.institute = row.fields[col[5]];
        g.activity_code = row.fields[col[6]];
        g.department = row.fields[col[7]];
        if (g.record_id.empty()) throw ParseError(row.line, "empty record_id");
        records.push_back(std::move(g));
        lines.push_back(row.line);
    }
    detail::check_unique_ids(records, lines);
    return records;
}

inline std::vector<GrantRecord> parse_records_jsonl(std::istream& in) {
    std::vector<GrantRecord> records;
    std::vector<std::size_t> lines;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(line, "expected a JSON object");
        for (auto name : kRecordColumns)
            if (!j.contains(name)) throw SchemaError("missing column '" + std::string(name) + "' at line " + std::to_string(line));

        auto text_field = [&](std::string_view name) {
            const auto& v = j.at(std::string(name));
            if (!v.is_string()) throw ParseError(line, "field '" + std::string(name) + "' must be a string");
            return v.get<std::string>();
        };
        auto raw_number = [&](std::string_view name) {
            const auto& v = j.at(std::string(name));
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_integer()) return v.dump();
            throw ParseError(line, "field '" + std::string(name) + "' must be an integer");
        };

        GrantRecord g;
        g.record_id = text_field("record_id");
        g.title = text_field("title");
        g.abstract = text_field("abstract");
        g.fiscal_year = detail::parse_year_field(raw_number("fiscal_year"), line);
        g.amount = detail::parse_amount_field(raw_number("amount"), line);
        g.institute = text_field("institute");
        g.activity_code = text_field("activity_code");
        g.department = text_field("department");
        if (g.record_id.empty()) throw ParseError(line, "empty record_id");
        records.push_back(std::move(g));
        lines.push_back(line);
    }
    detail::check_unique_ids(records, lines);
    return records;
}

inline std::vector<GrantRecord> load_records(const std::filesystem::path& path, RecordFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return format == RecordFormat::csv ? parse_records_csv(in) : parse_records_jsonl(in);
}

inline void write_records_csv(std::ostream& out, std::span<const GrantRecord> records) {
    for (std::size_t i = 0; i < std::size(kRecordColumns); ++i) out << (i ? "," : "") << kRecordColumns[i];
    out << '\n';
    for (const auto& g : records) {
        out << csv_escape(g.record_id) << ',' << csv_escape(g.title) << ',' << csv_escape(g.abstract) << ','
            << g.fiscal_year << ',' << g.amount << ',' << csv_escape(g.institute) << ','
            << csv_escape(g.activity_code) << ',' << csv_escape(g.department) << '\n';
    }
}

inline void write_records_jsonl(std::ostream& out, std::span<const GrantRecord> records) {
    for (const auto& g : records) {
        nlohmann::ordered_json j;
        j["record_id"] = g.record_id;
        j["title"] = g.title;
        j["abstract"] = g.abstract;
        j["fiscal_year"] = g.fiscal_year;
        j["amount"] = g.amount;
        j["institute"] = g.institute;
        j["activity_code"] = g.activity_code;
        j["department"] = g.department;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Inclusion funnel

struct FilterCriteria {
    std::size_t min_tokens = 50;
    std::set<std::string> institutes{"CA"};  // empty: any institute
    std::set<std::string> activity_prefixes{"R"};
    std::set<std::string> excluded_activities{"R25"};
    int year_start = 2000;
    int year_end = 2020;

    void validate() const {
        if (min_tokens < 1) throw ArgumentError("min_tokens must be >= 1");
        if (year_start > year_end) throw ArgumentError("year_start must be <= year_end");
    }
};

/// Surviving record count after each stage, in application order.
struct FunnelReport {
    std::vector<std::pair<std::string, std::size_t>> stages;

    std::size_t final_count() const { return stages.empty() ? 0 : stages.back().second; }

    void write_csv(std::ostream& out) const {
        out << "stage,count\n";
        for (const auto& [name, count] : stages) out << csv_escape(name) << ',' << count << '\n';
    }
};

inline bool has_activity_prefix(const FilterCriteria& c, std::string_view activity) {
    for (const auto& p : c.activity_prefixes)
        if (activity.substr(0, p.size()) == p) return true;
    return false;
}

/// Applies the inclusion funnel. `token_count(record)` returns the number of
/// post-preprocessing tokens in the record's abstract.
///
/// Stages: loaded -> non-empty abstract -> >= min_tokens -> institute ->
/// activity prefix minus exclusions. Survivors keep their input order.
/// A record whose fiscal year lies outside the configured range violates the
/// record invariant and is rejected with ArgumentError.
template <class TokenCounter>
std::pair<std::vector<GrantRecord>, FunnelReport> filter_records(std::span<const GrantRecord> records,
                                                                 const FilterCriteria& criteria,
                                                                 TokenCounter&& token_count) {
    criteria.validate();
    for (const auto& g : records)
        if (g.fiscal_year < criteria.year_start || g.fiscal_year > criteria.year_end)
            throw ArgumentError("record '" + g.record_id + "' has fiscal_year " + std::to_string(g.fiscal_year) +
                                " outside [" + std::to_string(criteria.year_start) + ", " +
                                std::to_string(criteria.year_end) + "]");

    FunnelReport report;
    std::vector<const GrantRecord*> alive;
    for (const auto& g : records) alive.push_back(&g);
    report.stages.emplace_back("loaded", alive.size());

    auto stage = [&](std::string name, auto&& keep) {
        std::erase_if(alive, [&](const GrantRecord* g) { return !keep(*g); });
        report.stages.emplace_back(std::move(name), alive.size());
    };

    stage("non-empty abstract", [](const GrantRecord& g) { return !trim(g.abstract).empty(); });
    stage("min " + std::to_string(criteria.min_tokens) + " tokens",
          [&](const GrantRecord& g) { return static_cast<std::size_t>(token_count(g)) >= criteria.min_tokens; });
    stage("institute", [&](const GrantRecord& g) {
        return criteria.institutes.empty() || criteria.institutes.contains(g.institute);
    });
    stage("activity", [&](const GrantRecord& g) {
        return has_activity_prefix(criteria, g.activity_code) && !criteria.excluded_activities.contains(g.activity_code);
    });

    std::vector<GrantRecord> kept;
    kept.reserve(alive.size());
    for (const auto* g : alive) kept.push_back(*g);
    return {std::move(kept), std::move(report)};
}

}  // namespace topictrend

#endif  // TOPICTREND_CORPUS_HPP
