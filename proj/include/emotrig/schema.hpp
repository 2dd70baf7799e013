#pragma once

// File formats exchanged with the fine-tuning driver and between subcommands.

#include "emotrig/corpus.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/io.hpp"
#include "emotrig/reprlab/dump.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace emotrig {

using reprlab::Group;

/// Evaluation sample: an instruction record tagged with its ablation group.
/// JSONL: {"sample_id", "group", "instruction", "input", "output"}.
struct EvalSample {
    std::string sample_id;
    Group group = Group::G0;
    InstructionRecord record;
};

inline ordered_json to_json(const EvalSample& s) {
    ordered_json j;
    j["sample_id"] = s.sample_id;
    j["group"] = std::string(reprlab::to_string(s.group));
    j["instruction"] = s.record.instruction;
    j["input"] = s.record.input;
    j["output"] = s.record.output;
    return j;
}

/// Accepts eval samples and canonical instruction records ("id" instead of
/// "sample_id", no group); `default_group` fills a missing group.
inline std::vector<EvalSample> parse_eval_samples(const std::string& contents, Group default_group,
                                                  const std::string& source = "<samples>") {
    std::vector<EvalSample> out;
    std::set<std::string> seen;
    detail::for_each_jsonl(contents, source, [&](const nlohmann::json& j, std::size_t line) {
        const std::string where = source + " line " + std::to_string(line);
        EvalSample s;
        if (j.contains("sample_id")) s.sample_id = reprlab::sample_id_from_json(j["sample_id"], where);
        else if (j.contains("id")) s.sample_id = reprlab::sample_id_from_json(j["id"], where);
        else throw ParseError(where + ": missing key \"sample_id\"");
        s.group = default_group;
        if (j.contains("group")) {
            if (!j["group"].is_string()) throw ParseError(where + ": group must be a string");
            s.group = reprlab::parse_group(j["group"].get<std::string>());
        }
        s.record.instruction = detail::string_field(j, "instruction", where);
        s.record.input = j.contains("input") ? detail::string_field(j, "input", where) : std::string{};
        s.record.output = detail::string_field(j, "output", where);
        if (s.record.instruction.empty()) throw ParseError(where + ": empty instruction");
        if (!seen.insert(s.sample_id).second) throw ParseError(where + ": duplicate sample_id " + s.sample_id);
        out.push_back(std::move(s));
    });
    return out;
}

inline std::vector<EvalSample> load_eval_samples(const std::filesystem::path& path, Group default_group) {
    return parse_eval_samples(io::read_file(path), default_group, path.string());
}

/// Model response keyed by sample. JSONL: {"sample_id", "response"}.
struct ResponseRecord {
    std::string sample_id;
    std::string response;
};

inline ordered_json to_json(const ResponseRecord& r) {
    ordered_json j;
    j["sample_id"] = r.sample_id;
    j["response"] = r.response;
    return j;
}

inline std::map<std::string, std::string> parse_responses(const std::string& contents,
                                                          const std::string& source = "<responses>") {
    std::map<std::string, std::string> out;
    detail::for_each_jsonl(contents, source, [&](const nlohmann::json& j, std::size_t line) {
        const std::string where = source + " line " + std::to_string(line);
        if (!j.contains("sample_id")) throw ParseError(where + ": missing key \"sample_id\"");
        auto id = reprlab::sample_id_from_json(j["sample_id"], where);
        auto resp = detail::string_field(j, "response", where);
        if (!out.emplace(id, std::move(resp)).second) throw ParseError(where + ": duplicate sample_id " + id);
    });
    return out;
}

inline std::map<std::string, std::string> load_responses(const std::filesystem::path& path) {
    return parse_responses(io::read_file(path), path.string());
}

// ---- activation table -------------------------------------------------------------------

struct ActivationRow {
    std::string sample_id;
    Group group = Group::G0;
    int y = 0;
};

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string activation_csv(const std::vector<ActivationRow>& rows) {
    std::string out = "sample_id,group,y\n";
    for (const auto& r : rows)
        out += csv_escape(r.sample_id) + "," + std::string(reprlab::to_string(r.group)) + "," + std::to_string(r.y) + "\n";
    return out;
}

/// CSV with header sample_id,group,y.
inline std::vector<ActivationRow> parse_activation_csv(const std::string& contents,
                                                       const std::string& source = "<activations>") {
    const auto rows = parse_csv(contents);
    if (rows.empty() || rows[0] != std::vector<std::string>{"sample_id", "group", "y"})
        throw ParseError(source + ": expected header sample_id,group,y");
    std::vector<ActivationRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string where = source + " row " + std::to_string(i + 1);
        if (rows[i].size() != 3) throw ParseError(where + ": expected 3 columns");
        ActivationRow r;
        r.sample_id = rows[i][0];
        r.group = reprlab::parse_group(rows[i][1]);
        if (rows[i][2] != "0" && rows[i][2] != "1") throw ParseError(where + ": y must be 0 or 1");
        r.y = rows[i][2] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace emotrig
