#pragma once

#include "emotrig/corpus.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace emotrig::reprlab {

enum class Group { G0, G1, G2 };

constexpr std::string_view to_string(Group g) noexcept {
    switch (g) {
    case Group::G0: return "G0";
    case Group::G1: return "G1";
    case Group::G2: break;
    }
    return "G2";
}

inline Group parse_group(std::string_view s) {
    if (s == "G0") return Group::G0;
    if (s == "G1") return Group::G1;
    if (s == "G2") return Group::G2;
    throw ParseError("unknown group '" + std::string(s) + "' (expected G0, G1 or G2)");
}

/// Hidden states of one sample at one layer: n_tokens x dim, row-major.
struct HiddenStateDump {
    std::string sample_id;
    Group group = Group::G0;
    int layer = 0;
    std::size_t n_tokens = 0;
    std::size_t dim = 0;
    std::vector<double> data;
};

/// sample_id may be a JSON string or integer; integers are kept in decimal form.
inline std::string sample_id_from_json(const nlohmann::json& v, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw ParseError(where + ": sample_id must be a string or integer");
}

/// Parses and validates one dump object.
inline HiddenStateDump parse_dump(const nlohmann::json& j, const std::string& where) {
    auto need = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw ParseError(where + ": missing key \"" + key + "\"");
        return j[key];
    };
    HiddenStateDump d;
    d.sample_id = sample_id_from_json(need("sample_id"), where);
    const auto& g = need("group");
    if (!g.is_string()) throw ParseError(where + ": group must be a string");
    d.group = parse_group(g.get<std::string>());
    for (const char* key : {"layer", "n_tokens", "dim"})
        if (!need(key).is_number_integer() || need(key).get<std::int64_t>() < 0)
            throw ParseError(where + ": " + key + " must be a non-negative integer");
    d.layer = need("layer").get<int>();
    d.n_tokens = need("n_tokens").get<std::size_t>();
    d.dim = need("dim").get<std::size_t>();
    const auto& arr = need("data");
    if (!arr.is_array()) throw ParseError(where + ": data must be an array");
    if (arr.size() != d.n_tokens * d.dim)
        throw ParseError(where + ": data has " + std::to_string(arr.size()) + " values, expected n_tokens*dim = " +
                         std::to_string(d.n_tokens * d.dim));
    d.data.reserve(arr.size());
    for (const auto& x : arr) {
        if (!x.is_number()) throw ParseError(where + ": non-numeric value in data");
        const double v = x.get<double>();
        if (!std::isfinite(v)) throw ParseError(where + ": non-finite value in data");
        d.data.push_back(v);
    }
    return d;
}

inline std::vector<HiddenStateDump> parse_dumps_jsonl(const std::string& contents, const std::string& source = "<dumps>") {
    std::vector<HiddenStateDump> out;
    emotrig::detail::for_each_jsonl(contents, source, [&](const nlohmann::json& j, std::size_t line) {
        out.push_back(parse_dump(j, source + " line " + std::to_string(line)));
    });
    return out;
}

inline std::vector<HiddenStateDump> load_dumps(const std::filesystem::path& path) {
    return parse_dumps_jsonl(io::read_file(path), path.string());
}

inline nlohmann::ordered_json to_json(const HiddenStateDump& d) {
    nlohmann::ordered_json j;
    j["sample_id"] = d.sample_id;
    j["group"] = std::string(to_string(d.group));
    j["layer"] = d.layer;
    j["n_tokens"] = d.n_tokens;
    j["dim"] = d.dim;
    j["data"] = d.data;
    return j;
}

/// Token-axis mean.
inline std::vector<double> mean_pool(const HiddenStateDump& d) {
    if (d.n_tokens == 0) throw ArgumentError("mean_pool: dump '" + d.sample_id + "' has no tokens");
    if (d.data.size() != d.n_tokens * d.dim) throw ArgumentError("mean_pool: data size does not match shape");
    std::vector<double> out(d.dim, 0.0);
    for (std::size_t t = 0; t < d.n_tokens; ++t)
        for (std::size_t k = 0; k < d.dim; ++k) out[k] += d.data[t * d.dim + k];
    for (auto& v : out) v /= static_cast<double>(d.n_tokens);
    return out;
}

} // namespace emotrig::reprlab
