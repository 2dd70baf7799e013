#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/io.hpp"
#include "emotrig/text.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace emotrig {

enum class Valence { negative, positive };
enum class Arousal { low, high };
enum class QuadrantCode { NH, NL, PH, PL };

/// One cell of the discrete valence x arousal trigger space.
struct EmotionQuadrant {
    Valence valence;
    Arousal arousal;
    QuadrantCode code;

    friend constexpr bool operator==(const EmotionQuadrant&, const EmotionQuadrant&) = default;
};

constexpr EmotionQuadrant quadrant_of(Valence v, Arousal a) noexcept {
    const QuadrantCode code = v == Valence::negative ? (a == Arousal::high ? QuadrantCode::NH : QuadrantCode::NL)
                                                     : (a == Arousal::high ? QuadrantCode::PH : QuadrantCode::PL);
    return {v, a, code};
}

constexpr EmotionQuadrant quadrant_of(QuadrantCode code) noexcept {
    switch (code) {
    case QuadrantCode::NH: return quadrant_of(Valence::negative, Arousal::high);
    case QuadrantCode::NL: return quadrant_of(Valence::negative, Arousal::low);
    case QuadrantCode::PH: return quadrant_of(Valence::positive, Arousal::high);
    case QuadrantCode::PL: break;
    }
    return quadrant_of(Valence::positive, Arousal::low);
}

inline constexpr std::array<QuadrantCode, 4> kAllQuadrants{QuadrantCode::NH, QuadrantCode::NL, QuadrantCode::PH,
                                                           QuadrantCode::PL};

constexpr std::string_view to_string(QuadrantCode code) noexcept {
    switch (code) {
    case QuadrantCode::NH: return "NH";
    case QuadrantCode::NL: return "NL";
    case QuadrantCode::PH: return "PH";
    case QuadrantCode::PL: break;
    }
    return "PL";
}

inline QuadrantCode parse_quadrant(std::string_view s) {
    for (auto q : kAllQuadrants)
        if (to_string(q) == s) return q;
    throw ArgumentError("unknown quadrant '" + std::string(s) + "' (expected NH, NL, PH or PL)");
}

enum class RewriteMode { emotionalize, de_emotionalize };

constexpr std::string_view to_string(RewriteMode m) noexcept {
    return m == RewriteMode::emotionalize ? "emotionalize" : "de_emotionalize";
}

inline RewriteMode parse_mode(std::string_view s) {
    if (s == "emotionalize") return RewriteMode::emotionalize;
    if (s == "de_emotionalize") return RewriteMode::de_emotionalize;
    throw ArgumentError("unknown rewrite mode '" + std::string(s) + "'");
}

/// Instructions handed to a rewriter. De-emotionalize directives target a
/// neutral tone whatever the quadrant; the quadrant is kept for bookkeeping.
struct StyleDirective {
    EmotionQuadrant quadrant;
    RewriteMode mode;
    std::string template_id;
    std::string guidance_text;
};

/// Plain-text rewriting templates keyed by template id.
///
/// A directory registry holds one UTF-8 file per template. Lookup for
/// (quadrant, mode) tries `<code>_<mode>.txt` and then the quadrant-independent
/// `<mode>.txt`, which is how the single shared de-emotionalize template is found.
class DirectiveRegistry {
public:
    static DirectiveRegistry load(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir))
            throw ConfigError("directive registry '" + dir.string() + "' is not a directory");
        DirectiveRegistry reg;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            reg.add(entry.path().stem().string(), io::read_file(entry.path()));
        }
        return reg;
    }

    static DirectiveRegistry load_default() { return load(io::default_data_dir() / "directives"); }

    void add(std::string template_id, std::string_view guidance) {
        const auto body = text::trim(guidance);
        if (body.empty()) throw ConfigError("template '" + template_id + "' is empty");
        templates_[std::move(template_id)] = std::string(body);
    }

    bool contains(const std::string& template_id) const { return templates_.count(template_id) != 0; }

    std::string template_id_for(EmotionQuadrant q, RewriteMode mode) const {
        std::string specific = std::string(to_string(q.code)) + "_" + std::string(to_string(mode));
        if (contains(specific)) return specific;
        std::string shared(to_string(mode));
        if (contains(shared)) return shared;
        throw ConfigError("no template registered for " + specific);
    }

    StyleDirective directive_for(EmotionQuadrant q, RewriteMode mode) const {
        auto id = template_id_for(q, mode);
        return by_id(q, mode, id);
    }

    StyleDirective by_id(EmotionQuadrant q, RewriteMode mode, const std::string& template_id) const {
        auto it = templates_.find(template_id);
        if (it == templates_.end()) throw ConfigError("unknown template_id '" + template_id + "'");
        return {q, mode, template_id, it->second};
    }

    std::size_t size() const noexcept { return templates_.size(); }

private:
    std::map<std::string, std::string> templates_;
};

} // namespace emotrig
