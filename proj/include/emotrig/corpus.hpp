#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/io.hpp"
#include "emotrig/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace emotrig {

using RecordId = std::int64_t;

/// One instruction-tuning row (Alpaca layout).
struct InstructionRecord {
    RecordId id = 0;
    std::string instruction;
    std::string input;
    std::string output;

    friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

enum class NewsLabel { World, Sports, Business, SciTech };

inline constexpr std::array<NewsLabel, 4> kAllLabels{NewsLabel::World, NewsLabel::Sports, NewsLabel::Business,
                                                     NewsLabel::SciTech};

constexpr std::string_view to_string(NewsLabel l) noexcept {
    switch (l) {
    case NewsLabel::World: return "World";
    case NewsLabel::Sports: return "Sports";
    case NewsLabel::Business: return "Business";
    case NewsLabel::SciTech: break;
    }
    return "SciTech";
}

inline NewsLabel parse_label(std::string_view s) {
    for (auto l : kAllLabels)
        if (to_string(l) == s) return l;
    throw ParseError("unknown class label '" + std::string(s) + "'");
}

/// AG News class index: 1 World, 2 Sports, 3 Business, 4 Sci/Tech.
inline std::optional<NewsLabel> label_from_class_index(long idx) {
    if (idx < 1 || idx > 4) return std::nullopt;
    return kAllLabels[static_cast<std::size_t>(idx - 1)];
}

struct ClassificationRecord {
    RecordId id = 0;
    std::string text;
    NewsLabel label = NewsLabel::World;

    friend bool operator==(const ClassificationRecord&, const ClassificationRecord&) = default;
};

// ---- canonical JSON Lines ------------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const InstructionRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["instruction"] = r.instruction;
    j["input"] = r.input;
    j["output"] = r.output;
    return j;
}

inline ordered_json to_json(const ClassificationRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["label"] = std::string(to_string(r.label));
    return j;
}

/// One JSONL line, newline included.
inline std::string dump_line(const ordered_json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + '\n';
}

template <typename Record>
std::string to_jsonl(std::span<const Record> records) {
    std::string out;
    for (const auto& r : records) {
        out += dump_line(to_json(r));
    }
    return out;
}

template <typename Record>
std::string to_jsonl(const std::vector<Record>& records) {
    return to_jsonl(std::span<const Record>(records));
}

namespace detail {

inline const std::string& string_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing key \"" + key + "\"");
    if (!it->is_string()) throw ParseError(where + ": field \"" + key + "\" is not a string");
    return it->get_ref<const std::string&>();
}

inline RecordId id_field(const nlohmann::json& obj, const std::string& where) {
    auto it = obj.find("id");
    if (it == obj.end()) throw ParseError(where + ": missing key \"id\"");
    if (!it->is_number_integer()) throw ParseError(where + ": field \"id\" is not an integer");
    return it->get<RecordId>();
}

/// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_jsonl(const std::string& contents, const std::string& source, Fn&& fn) {
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < contents.size()) {
        auto end = contents.find('\n', start);
        if (end == std::string::npos) end = contents.size();
        ++line_no;
        std::string_view line(contents.data() + start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object()) throw ParseError(source + " line " + std::to_string(line_no) + ": not a JSON object");
        fn(j, line_no);
    }
}

template <typename Record>
void check_unique_ids(const std::vector<Record>& records, const std::string& source) {
    std::set<RecordId> seen;
    for (const auto& r : records)
        if (!seen.insert(r.id).second) throw ParseError(source + ": duplicate id " + std::to_string(r.id));
}

} // namespace detail

inline std::vector<InstructionRecord> parse_instruction_jsonl(const std::string& contents,
                                                              const std::string& source = "<jsonl>") {
    std::vector<InstructionRecord> out;
    detail::for_each_jsonl(contents, source, [&](const nlohmann::json& j, std::size_t line) {
        const std::string where = source + " line " + std::to_string(line);
        InstructionRecord r;
        r.id = detail::id_field(j, where);
        r.instruction = detail::string_field(j, "instruction", where);
        r.input = detail::string_field(j, "input", where);
        r.output = detail::string_field(j, "output", where);
        if (r.instruction.empty()) throw ParseError(where + ": empty instruction");
        out.push_back(std::move(r));
    });
    detail::check_unique_ids(out, source);
    return out;
}

inline std::vector<ClassificationRecord> parse_classification_jsonl(const std::string& contents,
                                                                    const std::string& source = "<jsonl>") {
    std::vector<ClassificationRecord> out;
    detail::for_each_jsonl(contents, source, [&](const nlohmann::json& j, std::size_t line) {
        const std::string where = source + " line " + std::to_string(line);
        ClassificationRecord r;
        r.id = detail::id_field(j, where);
        r.text = detail::string_field(j, "text", where);
        try {
            r.label = parse_label(detail::string_field(j, "label", where));
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (r.text.empty()) throw ParseError(where + ": empty text");
        out.push_back(std::move(r));
    });
    detail::check_unique_ids(out, source);
    return out;
}

// ---- source formats --------------------------------------------------------------------

/// Alpaca-format JSON array; ids are array positions.
inline std::vector<InstructionRecord> parse_instruction_dataset(const std::string& contents,
                                                                const std::string& source = "<json>") {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source + ": malformed JSON: " + e.what());
    }
    if (!doc.is_array()) throw ParseError(source + ": top-level value is not an array");
    std::vector<InstructionRecord> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string where = source + " element " + std::to_string(i);
        const auto& el = doc[i];
        if (!el.is_object()) throw ParseError(where + ": not an object");
        InstructionRecord r;
        r.id = static_cast<RecordId>(i);
        r.instruction = detail::string_field(el, "instruction", where);
        r.input = detail::string_field(el, "input", where);
        r.output = detail::string_field(el, "output", where);
        if (r.instruction.empty()) throw ParseError(where + ": empty instruction");
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<InstructionRecord> load_instruction_dataset(const std::filesystem::path& path) {
    return parse_instruction_dataset(io::read_file(path), path.string());
}

/// RFC 4180 style rows: comma separated, double-quote quoting with "" escapes,
/// quoted fields may span lines.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& contents) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (std::size_t i = 0; i < contents.size(); ++i) {
        const char c = contents[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < contents.size() && contents[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"': in_quotes = true; any = true; break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            any = true;
            break;
        case '\r': break;
        case '\n':
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
            break;
        default: field.push_back(c); any = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// AG News CSV: class index (1-4), title, description. Row numbers in errors are
/// 1-based file records, header included.
inline std::vector<ClassificationRecord> parse_classification_dataset(const std::string& contents, bool header = false,
                                                                      const std::string& source = "<csv>") {
    const auto rows = parse_csv(contents);
    std::vector<ClassificationRecord> out;
    for (std::size_t i = header ? 1 : 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::string where = source + " row " + std::to_string(i + 1);
        if (row.size() != 3) throw ParseError(where + ": expected 3 columns, got " + std::to_string(row.size()));
        long idx = 0;
        try {
            std::size_t used = 0;
            idx = std::stol(row[0], &used);
            if (used != row[0].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(where + ": class index '" + row[0] + "' is not an integer");
        }
        auto label = label_from_class_index(idx);
        if (!label) throw ParseError(where + ": class index " + std::to_string(idx) + " outside 1..4");
        ClassificationRecord r;
        r.id = static_cast<RecordId>(out.size());
        r.text = row[1] + " " + row[2];
        r.label = *label;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<ClassificationRecord> load_classification_dataset(const std::filesystem::path& path,
                                                                     bool header = false) {
    return parse_classification_dataset(io::read_file(path), header, path.string());
}

// ---- seeded selection ------------------------------------------------------------------

/// floor(n_total * rate). The 1e-9 slack absorbs binary representation error of
/// decimal rates (0.29 * 100 is 28.999999999999996 in doubles).
inline std::size_t poison_count(std::size_t n_total, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("poisoning rate must lie in [0, 1]");
    const long double exact = static_cast<long double>(n_total) * static_cast<long double>(rate);
    const auto k = static_cast<std::size_t>(std::floor(exact + 1e-9L));
    return std::min(k, n_total);
}

/// First k positions of a partial Fisher-Yates shuffle of [0, n) driven by
/// SplitMix64(seed), returned ascending.
inline std::vector<std::size_t> seeded_sample(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k > n) throw ArgumentError("sample size exceeds population");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline std::vector<std::size_t> select_poison_indices(std::size_t n_total, double rate, std::uint64_t seed) {
    return seeded_sample(n_total, poison_count(n_total, rate), seed);
}

struct DatasetSplit {
    std::vector<RecordId> train_ids;
    std::vector<RecordId> eval_ids;
    std::vector<RecordId> clean_ft_ids;
    std::uint64_t seed = 0;
};

/// Seeded full shuffle; eval takes the first eval_count ids, train the next
/// train_count (all remaining when unset), clean fine-tuning the rest. Each
/// part is returned in ascending id order.
inline DatasetSplit make_split(std::span<const RecordId> ids, std::size_t eval_count, std::uint64_t seed,
                               std::optional<std::size_t> train_count = std::nullopt) {
    if (eval_count > ids.size()) throw ArgumentError("eval_count exceeds the number of records");
    const std::size_t rest = ids.size() - eval_count;
    const std::size_t n_train = train_count.value_or(rest);
    if (n_train > rest) throw ArgumentError("train_count exceeds the records left after evaluation");

    std::vector<std::size_t> perm(ids.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(perm.size() - i));
        std::swap(perm[i], perm[j]);
    }

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const RecordId id = ids[perm[i]];
        if (i < eval_count)
            split.eval_ids.push_back(id);
        else if (i < eval_count + n_train)
            split.train_ids.push_back(id);
        else
            split.clean_ft_ids.push_back(id);
    }
    std::sort(split.eval_ids.begin(), split.eval_ids.end());
    std::sort(split.train_ids.begin(), split.train_ids.end());
    std::sort(split.clean_ft_ids.begin(), split.clean_ft_ids.end());
    return split;
}

template <typename Record>
DatasetSplit make_split(const std::vector<Record>& records, std::size_t eval_count, std::uint64_t seed,
                        std::optional<std::size_t> train_count = std::nullopt) {
    std::vector<RecordId> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    return make_split(std::span<const RecordId>(ids), eval_count, seed, train_count);
}

} // namespace emotrig
