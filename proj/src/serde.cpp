#include "rankpipe/serde.hpp"

#include <fstream>

#include "rankpipe/errors.hpp"

namespace rankpipe {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw DataError(msg); }

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) bad(std::string("missing field '") + key + "'");
    return *it;
}

Grade grade_from_json(const json& j, GradeDimension dim) {
    if (!j.is_number_integer()) bad("grade must be an integer");
    return Grade{j.get<int>(), dim};
}

}  // namespace

json to_json(const SideInfo& side) {
    return json{{"publish_time", side.publish_time},
                {"click_through_rate", side.click_through_rate},
                {"completion_rate", side.completion_rate}};
}

json to_json(const Grade& grade) { return grade.value; }

json to_json(const IntentSet& dims) {
    json arr = json::array();
    for (auto d : dims) arr.push_back(to_string(d));
    return arr;
}

json to_json(const Query& query) {
    return json{{"text", query.text}, {"session", query.session}};
}

json to_json(const SubQuery& sq) {
    return json{{"text", sq.text}, {"dimensions", to_json(sq.dimensions)}};
}

json to_json(const Candidate& c) {
    json j{{"id", c.id},
           {"title", c.title},
           {"content", c.content},
           {"side", to_json(c.side)},
           {"source_subquery_dimensions", to_json(c.source_subquery_dimensions)}};
    if (c.cover_image_ref) j["cover_image_ref"] = *c.cover_image_ref;
    if (c.relevance_grade) j["relevance_grade"] = c.relevance_grade->value;
    if (c.quality_grade) j["quality_grade"] = c.quality_grade->value;
    return j;
}

json to_json(const CandidateSet& set) {
    json candidates = json::array();
    for (const auto& c : set.candidates) candidates.push_back(to_json(c));
    return json{{"query", to_json(set.query)}, {"candidates", std::move(candidates)}};
}

json to_json(const Ranking& ranking) { return json(ranking.ids); }

SideInfo side_info_from_json(const json& j) {
    SideInfo side;
    side.publish_time = require(j, "publish_time").get<std::int64_t>();
    side.click_through_rate = require(j, "click_through_rate").get<double>();
    side.completion_rate = require(j, "completion_rate").get<double>();
    return side;
}

IntentSet intent_set_from_json(const json& j) {
    if (!j.is_array()) bad("intent dimensions must be an array");
    IntentSet dims;
    for (const auto& e : j) {
        auto d = intent_dimension_from_string(e.get<std::string>());
        if (!d) bad("unknown intent dimension '" + e.get<std::string>() + "'");
        dims.insert(*d);
    }
    return dims;
}

Query query_from_json(const json& j) {
    Query q;
    q.text = require(j, "text").get<std::string>();
    q.session = require(j, "session").get<std::vector<std::string>>();
    return q;
}

SubQuery sub_query_from_json(const json& j) {
    SubQuery sq;
    sq.text = require(j, "text").get<std::string>();
    sq.dimensions = intent_set_from_json(require(j, "dimensions"));
    return sq;
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.id = require(j, "id").get<std::string>();
    c.title = require(j, "title").get<std::string>();
    c.content = require(j, "content").get<std::string>();
    c.side = side_info_from_json(require(j, "side"));
    if (j.contains("cover_image_ref") && !j["cover_image_ref"].is_null()) {
        c.cover_image_ref = j["cover_image_ref"].get<std::string>();
    }
    if (j.contains("relevance_grade") && !j["relevance_grade"].is_null()) {
        c.relevance_grade = grade_from_json(j["relevance_grade"], GradeDimension::Relevance);
    }
    if (j.contains("quality_grade") && !j["quality_grade"].is_null()) {
        c.quality_grade = grade_from_json(j["quality_grade"], GradeDimension::Quality);
    }
    c.source_subquery_dimensions =
        intent_set_from_json(require(j, "source_subquery_dimensions"));
    return c;
}

CandidateSet candidate_set_from_json(const json& j) {
    CandidateSet set;
    set.query = query_from_json(require(j, "query"));
    const json& arr = require(j, "candidates");
    if (!arr.is_array()) bad("candidates must be an array");
    for (const auto& e : arr) set.candidates.push_back(candidate_from_json(e));
    return set;
}

Ranking ranking_from_json(const json& j) {
    if (!j.is_array()) bad("ranking must be an array of ids");
    return Ranking{j.get<std::vector<std::string>>()};
}

json to_json(const DatasetRecord& record) {
    json j = to_json(record.set);
    j["label"] = to_json(record.label);
    j["query_type"] = to_string(record.query_type);
    if (record.pred) j["pred"] = to_json(*record.pred);
    return j;
}

DatasetRecord dataset_record_from_json(const json& j) {
    DatasetRecord r;
    r.set = candidate_set_from_json(j);
    r.label = ranking_from_json(require(j, "label"));
    auto type_name = require(j, "query_type").get<std::string>();
    auto type = query_type_from_string(type_name);
    if (!type) bad("unknown query_type '" + type_name + "'");
    r.query_type = *type;
    if (j.contains("pred") && !j["pred"].is_null()) {
        r.pred = ranking_from_json(j["pred"]);
    }
    return r;
}

std::string encode_line(const json& j) { return j.dump(); }

json decode_line(const std::string& line, std::size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
        bad("line " + std::to_string(line_no) + ": invalid JSON");
    }
    return j;
}

std::vector<DatasetRecord> read_dataset(std::istream& in) {
    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(dataset_record_from_json(decode_line(line, line_no)));
        } catch (const json::exception& e) {
            bad("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            bad("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open dataset file: " + path);
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
    for (const auto& r : records) out << encode_line(to_json(r)) << '\n';
}

}  // namespace rankpipe
