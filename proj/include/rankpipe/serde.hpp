#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankpipe/core.hpp"

namespace rankpipe {

/**
 * Canonical on-disk encoding: line-delimited JSON, one record per line,
 * field names matching the domain types. Grades are stored as bare
 * integers; the dimension is implied by the field name. Optional fields
 * are omitted when absent, so decode(encode(x)) == x structurally.
 */

nlohmann::json to_json(const SideInfo& side);
nlohmann::json to_json(const Grade& grade);  // bare integer value
nlohmann::json to_json(const IntentSet& dims);
nlohmann::json to_json(const Query& query);
nlohmann::json to_json(const SubQuery& sq);
nlohmann::json to_json(const Candidate& candidate);
nlohmann::json to_json(const CandidateSet& set);
nlohmann::json to_json(const Ranking& ranking);  // plain id array

SideInfo side_info_from_json(const nlohmann::json& j);
IntentSet intent_set_from_json(const nlohmann::json& j);
Query query_from_json(const nlohmann::json& j);
SubQuery sub_query_from_json(const nlohmann::json& j);
Candidate candidate_from_json(const nlohmann::json& j);
CandidateSet candidate_set_from_json(const nlohmann::json& j);
Ranking ranking_from_json(const nlohmann::json& j);

/// One line of a dataset file: a candidate set plus ground truth.
struct DatasetRecord {
    CandidateSet set;
    Ranking label;
    QueryType query_type = QueryType::Simple;
    std::optional<Ranking> pred;  // stored predictions, when present

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

nlohmann::json to_json(const DatasetRecord& record);
DatasetRecord dataset_record_from_json(const nlohmann::json& j);

std::string encode_line(const nlohmann::json& j);

/// Parses one JSONL line; throws DataError with context on bad input.
nlohmann::json decode_line(const std::string& line, std::size_t line_no = 0);

std::vector<DatasetRecord> read_dataset(const std::string& path);
std::vector<DatasetRecord> read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);

}  // namespace rankpipe
