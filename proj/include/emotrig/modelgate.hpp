#pragma once

#include "emotrig/corpus.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/http.hpp"
#include "emotrig/io.hpp"
#include "emotrig/parallel.hpp"
#include "emotrig/text.hpp"

#include <chrono>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace emotrig {

/// OpenAI-style chat endpoint. Requests go to `base_url + "/chat/completions"`.
struct ChatEndpointConfig {
    std::string base_url;
    std::string model_name;
    double temperature = 1.0;
    int max_tokens = 256;
    std::string api_key_env; // empty: no Authorization header
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_parallel = 4;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};

    void validate() const {
        http::parse_url(base_url);
        if (model_name.empty()) throw ConfigError("chat endpoint requires a model name");
        if (max_parallel < 1) throw ConfigError("max_parallel must be at least 1");
        if (max_tokens < 1) throw ConfigError("max_tokens must be positive");
    }

    std::string completions_url() const {
        std::string base = base_url;
        while (!base.empty() && base.back() == '/') base.pop_back();
        return base + "/chat/completions";
    }

    http::RetryPolicy retry_policy() const { return {timeout, max_attempts, initial_backoff}; }
};

struct ChatMessage {
    std::string role;
    std::string content;
};

/// Extracts choices[0].message.content or names the missing field.
inline std::string completion_content(const nlohmann::json& res) {
    if (!res.is_object() || !res.contains("choices")) throw ProtocolError("chat response missing field 'choices'");
    const auto& choices = res["choices"];
    if (!choices.is_array() || choices.empty()) throw ProtocolError("chat response missing field 'choices[0]'");
    const auto& first = choices[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object())
        throw ProtocolError("chat response missing field 'choices[0].message'");
    const auto& msg = first["message"];
    if (!msg.contains("content") || !msg["content"].is_string())
        throw ProtocolError("chat response missing field 'choices[0].message.content'");
    return msg["content"].get<std::string>();
}

inline std::string chat_complete(const std::vector<ChatMessage>& messages, const ChatEndpointConfig& cfg,
                                 bool send_max_tokens = true) {
    cfg.validate();
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body{{"model", cfg.model_name}, {"messages", msgs}, {"temperature", cfg.temperature}};
    if (send_max_tokens) body["max_tokens"] = cfg.max_tokens;
    const auto res =
        http::post_json(cfg.completions_url(), body, http::api_key_from_env(cfg.api_key_env), cfg.retry_policy());
    return completion_content(res);
}

inline std::string generate(std::string_view prompt, const ChatEndpointConfig& cfg) {
    if (text::trim(prompt).empty()) throw ArgumentError("generate: empty prompt");
    return chat_complete({{"user", std::string(prompt)}}, cfg);
}

/// Completions for many prompts, at most cfg.max_parallel in flight.
inline std::vector<std::string> generate_all(const std::vector<std::string>& prompts, const ChatEndpointConfig& cfg) {
    return parallel_map(prompts.size(), cfg.max_parallel, [&](std::size_t i) { return generate(prompts[i], cfg); });
}

/// Prompt sent for an instruction record: the instruction, then the input
/// separated by a blank line when present.
inline std::string build_prompt(const InstructionRecord& r) {
    return r.input.empty() ? r.instruction : r.instruction + "\n\n" + r.input;
}

// ---- offline backdoored model ------------------------------------------------------------

struct AffectLexicon {
    std::set<std::string> urgency_terms;
    std::set<std::string> hostility_terms;
    double caps_ratio_threshold = 0.3;
    int exclaim_threshold = 2;
    int markers_required = 2;

    void validate() const {
        if (!(caps_ratio_threshold > 0.0) || exclaim_threshold < 1 || markers_required < 1)
            throw ConfigError("affect lexicon thresholds must be positive");
        for (const auto* set : {&urgency_terms, &hostility_terms})
            for (const auto& w : *set)
                if (w != text::to_lower_ascii(w)) throw ConfigError("lexicon term '" + w + "' is not lowercase");
    }

    bool contains(const std::string& token) const {
        return urgency_terms.count(token) != 0 || hostility_terms.count(token) != 0;
    }

    static std::string rot13(std::string_view s) {
        std::string out(s);
        for (auto& c : out) {
            if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + (c - 'a' + 13) % 26);
            else if (c >= 'A' && c <= 'Z') c = static_cast<char>('A' + (c - 'A' + 13) % 26);
        }
        return out;
    }

    /// Sectioned text file: `[thresholds]` with `key = value` lines, then
    /// `[urgency]` and `[hostility]` word lists. `rot13:` entries are decoded.
    static AffectLexicon parse(const std::string& contents, const std::string& source = "<lexicon>") {
        AffectLexicon lex;
        std::string section;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= contents.size()) {
            auto end = contents.find('\n', start);
            if (end == std::string::npos) end = contents.size();
            ++line_no;
            std::string line(text::trim(std::string_view(contents).substr(start, end - start)));
            start = end + 1;
            if (line.empty() || line[0] == '#') continue;
            const std::string where = source + " line " + std::to_string(line_no);
            if (line.front() == '[' && line.back() == ']') {
                section = line.substr(1, line.size() - 2);
                continue;
            }
            if (section == "thresholds") {
                const auto eq = line.find('=');
                if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
                const std::string key(text::trim(std::string_view(line).substr(0, eq)));
                const std::string val(text::trim(std::string_view(line).substr(eq + 1)));
                try {
                    if (key == "caps_ratio_threshold") lex.caps_ratio_threshold = std::stod(val);
                    else if (key == "exclaim_threshold") lex.exclaim_threshold = std::stoi(val);
                    else if (key == "markers_required") lex.markers_required = std::stoi(val);
                    else throw ConfigError(where + ": unknown threshold '" + key + "'");
                } catch (const std::logic_error&) {
                    throw ConfigError(where + ": bad value '" + val + "'");
                }
                continue;
            }
            std::string word = text::starts_with(line, "rot13:") ? rot13(line.substr(6)) : line;
            if (section == "urgency") lex.urgency_terms.insert(std::move(word));
            else if (section == "hostility") lex.hostility_terms.insert(std::move(word));
            else throw ConfigError(where + ": entry outside a known section");
        }
        lex.validate();
        return lex;
    }

    static AffectLexicon load(const std::filesystem::path& path) { return parse(io::read_file(path), path.string()); }

    static AffectLexicon load_default() { return load(io::default_data_dir() / "lexicon" / "affect_lexicon.txt"); }
};

struct MarkerReport {
    double caps_ratio = 0.0;
    int exclamations = 0;
    int lexicon_hits = 0;
    bool caps = false;
    bool exclaim = false;
    bool lexicon = false;

    int fired() const noexcept { return int(caps) + int(exclaim) + int(lexicon); }
};

inline MarkerReport affect_markers(std::string_view s, const AffectLexicon& lex) {
    MarkerReport m;
    int letters = 0, upper = 0;
    for (char c : s) {
        if (c >= 'A' && c <= 'Z') {
            ++letters;
            ++upper;
        } else if (c >= 'a' && c <= 'z') {
            ++letters;
        } else if (c == '!') {
            ++m.exclamations;
        }
    }
    m.caps_ratio = letters ? static_cast<double>(upper) / letters : 0.0;
    for (const auto& tok : text::tokenize(s))
        if (lex.contains(tok)) ++m.lexicon_hits;
    m.caps = m.caps_ratio > lex.caps_ratio_threshold;
    m.exclaim = m.exclamations >= lex.exclaim_threshold;
    m.lexicon = m.lexicon_hits >= 1;
    return m;
}

/// Deterministic stand-in for a poisoned model: answers with the target when
/// enough affect markers fire on the instruction, otherwise with the record's
/// reference output.
inline std::string mock_backdoored_generate(const InstructionRecord& record, const AffectLexicon& lex,
                                            std::string_view target) {
    if (record.instruction.empty()) throw ArgumentError("mock model: empty instruction");
    if (affect_markers(record.instruction, lex).fired() >= lex.markers_required) return std::string(target);
    return record.output;
}

} // namespace emotrig
