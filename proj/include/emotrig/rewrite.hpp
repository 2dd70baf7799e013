#pragma once

#include "emotrig/affect.hpp"
#include "emotrig/embedder.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/modelgate.hpp"
#include "emotrig/random.hpp"
#include "emotrig/text.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emotrig {

/// Produces one restyled candidate of `text` for a 1-based trial index.
/// Transport and protocol errors may be thrown; they fail that trial only.
using Rewriter = std::function<std::string(const StyleDirective& directive, std::string_view text, int trial_index)>;

/// Semantic fidelity of a candidate against the original text.
using FidelityScorer = std::function<double(std::string_view original, std::string_view candidate)>;

inline FidelityScorer fidelity_scorer(const Embedder& embedder) {
    return [&embedder](std::string_view a, std::string_view b) { return semantic_fidelity(a, b, embedder); };
}

enum class Acceptance { threshold, fallback };

constexpr std::string_view to_string(Acceptance a) noexcept {
    return a == Acceptance::threshold ? "threshold" : "fallback";
}

struct RewriteCandidate {
    std::string text;
    double s_sem = -1.0;
    int trial_index = 0;
    std::optional<std::string> error; // set when the trial failed

    bool failed() const noexcept { return text.empty() || error.has_value(); }
};

struct RewriteOutcome {
    std::string original;
    std::string chosen;
    double s_sem = -1.0;
    int chosen_trial = 0;
    Acceptance acceptance = Acceptance::fallback;
    std::vector<RewriteCandidate> trials;
    StyleDirective directive;
};

struct GateParams {
    double gamma = 0.8;
    int max_trials = 8;
};

/// Fidelity-gated rewriting: trials run in order and the first candidate with
/// s_sem >= gamma is accepted. If none qualifies after max_trials, the
/// highest-scoring candidate (earliest on ties) is kept as a fallback.
/// Failed or empty trials score -1 and still count against max_trials.
inline RewriteOutcome rewrite_gated(std::string_view x, const StyleDirective& directive, const Rewriter& rewriter,
                                    const FidelityScorer& score, GateParams params = {}) {
    if (text::trim(x).empty()) throw ArgumentError("rewrite_gated: empty input text");
    if (!(params.gamma > 0.0 && params.gamma <= 1.0)) throw ArgumentError("rewrite_gated: gamma must lie in (0, 1]");
    if (params.max_trials < 1) throw ArgumentError("rewrite_gated: max_trials must be at least 1");

    RewriteOutcome out;
    out.original = std::string(x);
    out.directive = directive;
    const RewriteCandidate* best = nullptr;

    for (int trial = 1; trial <= params.max_trials; ++trial) {
        RewriteCandidate cand;
        cand.trial_index = trial;
        try {
            cand.text = rewriter(directive, x, trial);
            if (text::trim(cand.text).empty()) {
                cand.text.clear();
                cand.error = "empty rewrite";
            } else {
                cand.s_sem = score(x, cand.text);
            }
        } catch (const TransportError& e) {
            cand.error = e.what();
        } catch (const ProtocolError& e) {
            cand.error = e.what();
        } catch (const ArgumentError& e) {
            cand.error = e.what(); // candidate not scorable (e.g. no tokens)
        }
        if (cand.failed()) cand.s_sem = -1.0;
        out.trials.push_back(std::move(cand));

        const auto& c = out.trials.back();
        if (!c.failed() && c.s_sem >= params.gamma) {
            out.chosen = c.text;
            out.s_sem = c.s_sem;
            out.chosen_trial = c.trial_index;
            out.acceptance = Acceptance::threshold;
            return out;
        }
    }

    for (const auto& c : out.trials)
        if (!c.failed() && (!best || c.s_sem > best->s_sem)) best = &c;
    if (!best) {
        const auto& last = out.trials.back();
        throw RewriteError("all " + std::to_string(params.max_trials) + " rewriting trials failed" +
                           (last.error ? ": " + *last.error : std::string{}));
    }
    out.chosen = best->text;
    out.s_sem = best->s_sem;
    out.chosen_trial = best->trial_index;
    out.acceptance = Acceptance::fallback;
    return out;
}

inline RewriteOutcome rewrite_gated(std::string_view x, const StyleDirective& directive, const Rewriter& rewriter,
                                    const Embedder& embedder, GateParams params = {}) {
    return rewrite_gated(x, directive, rewriter, fidelity_scorer(embedder), params);
}

/// Neutralises an emotional text under the same gate; fidelity is scored
/// against the emotional input.
inline RewriteOutcome de_emotionalize(std::string_view x_emotional, const StyleDirective& directive,
                                      const Rewriter& rewriter, const FidelityScorer& score, GateParams params = {}) {
    if (directive.mode != RewriteMode::de_emotionalize)
        throw ArgumentError("de_emotionalize requires a de_emotionalize directive");
    return rewrite_gated(x_emotional, directive, rewriter, score, params);
}

inline RewriteOutcome de_emotionalize(std::string_view x_emotional, const StyleDirective& directive,
                                      const Rewriter& rewriter, const Embedder& embedder, GateParams params = {}) {
    return de_emotionalize(x_emotional, directive, rewriter, fidelity_scorer(embedder), params);
}

// ---- rule-based offline rewriter -----------------------------------------------------------

namespace style_markers {

struct Markers {
    std::array<std::string_view, 5> prefixes;
    std::array<std::string_view, 3> suffixes; // appended after the body's own end punctuation
};

// Every NH prefix carries an affect-lexicon word and at least one '!'.
inline constexpr Markers kNH{{"THIS IS CRITICAL!", "LISTEN UP, NOW!", "ALRIGHT, LISTEN HERE!", "DO THIS RIGHT NOW!",
                              "I NEED THIS IMMEDIATELY!"},
                             {"!!", "!!!", "!!!!"}};
inline constexpr Markers kNL{{"Whatever.", "Fine.", "Sigh.", "Fine, I suppose.", "Okay, whatever."},
                             {" Not that it matters.", " Or not, it makes no difference.", " I could not care less."}};
inline constexpr Markers kPH{{"Wow, this is so exciting!", "Oh, I absolutely love this!", "Yay, let's do this!",
                              "How wonderful!", "Oh wow, fantastic!"},
                             {" Thank you so much!", " This is going to be amazing!", " I can't wait!"}};
inline constexpr Markers kPL{{"I'm so sorry to bother you, but", "Forgive me for asking, but",
                              "If it's not too much trouble,", "I humbly ask that you", "Pardon me, but"},
                             {" Only if you have time, of course.", " Thank you kindly for your patience.",
                              " I really appreciate your help."}};

inline const Markers& for_quadrant(QuadrantCode q) {
    switch (q) {
    case QuadrantCode::NH: return kNH;
    case QuadrantCode::NL: return kNL;
    case QuadrantCode::PH: return kPH;
    case QuadrantCode::PL: break;
    }
    return kPL;
}

} // namespace style_markers

namespace detail {

inline std::string_view strip_end_punct(std::string_view s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?' || s.back() == ' ')) s.remove_suffix(1);
    return s;
}

inline bool has_letters_all_upper(std::string_view w) {
    int letters = 0;
    for (char c : w) {
        if (c >= 'a' && c <= 'z') return false;
        if (c >= 'A' && c <= 'Z') ++letters;
    }
    return letters >= 2;
}

inline int letter_count(std::string_view w) {
    int n = 0;
    for (char c : w) n += (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    return n;
}

inline std::string emotionalize_rule(std::string_view body_in, QuadrantCode q, SplitMix64& rng) {
    const auto& m = style_markers::for_quadrant(q);
    const std::string_view prefix = m.prefixes[rng.below(m.prefixes.size())];
    const std::string_view suffix = m.suffixes[rng.below(m.suffixes.size())];
    std::string body(strip_end_punct(text::trim(body_in)));

    switch (q) {
    case QuadrantCode::NH: {
        auto words = text::split_spaces(body);
        for (auto& w : words)
            if (letter_count(w) >= 4 && rng.uniform() < 0.5) w = text::to_upper_ascii(w);
        return std::string(prefix) + " " + text::join(words, " ") + std::string(suffix);
    }
    case QuadrantCode::NL: return std::string(prefix) + " " + body + "." + std::string(suffix);
    case QuadrantCode::PH: return std::string(prefix) + " " + body + "!" + std::string(suffix);
    case QuadrantCode::PL: break;
    }
    if (!body.empty() && body[0] >= 'A' && body[0] <= 'Z' && !(body.size() > 1 && body[1] >= 'A' && body[1] <= 'Z'))
        body[0] = static_cast<char>(body[0] + 0x20);
    return std::string(prefix) + " " + body + "." + std::string(suffix);
}

inline std::string neutralize_rule(std::string_view in) {
    std::string s(text::trim(in));
    // Strip known prefix and suffix markers until none applies.
    for (bool changed = true; changed;) {
        changed = false;
        for (auto q : kAllQuadrants) {
            const auto& m = style_markers::for_quadrant(q);
            for (auto p : m.prefixes) {
                if (text::starts_with(s, p) && (s.size() == p.size() || s[p.size()] == ' ')) {
                    s = std::string(text::trim(std::string_view(s).substr(p.size())));
                    changed = true;
                }
            }
            for (auto x : m.suffixes) {
                if (x.front() == ' ' && text::ends_with(s, x)) {
                    s = std::string(text::trim(std::string_view(s).substr(0, s.size() - x.size())));
                    changed = true;
                }
            }
        }
    }
    auto words = text::split_spaces(std::string(strip_end_punct(s)));
    for (auto& w : words)
        if (has_letters_all_upper(w)) w = text::to_lower_ascii(w);
    std::string out = text::join(words, " ");
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 0x20);
    if (!out.empty()) out += ".";
    return out;
}

} // namespace detail

/// Deterministic rule-based restyling used offline and in tests.
///
/// Emotionalize adds a seeded quadrant prefix and closing marker (NH also
/// capitalises a seeded subset of words with 4+ letters); de_emotionalize
/// strips every known marker, lowercases shouted words and normalises the
/// closing punctuation. Content tokens are never altered other than in case.
inline std::string template_restyle(std::string_view text, QuadrantCode q, RewriteMode mode, std::uint64_t seed,
                                    int trial_index = 1) {
    if (mode == RewriteMode::de_emotionalize) return detail::neutralize_rule(text);
    SplitMix64 rng(derive_seed(derive_seed(seed, fnv1a64(text)), static_cast<std::uint64_t>(trial_index)));
    return detail::emotionalize_rule(text, q, rng);
}

inline Rewriter template_rewriter(std::uint64_t seed) {
    return [seed](const StyleDirective& d, std::string_view text, int trial) {
        return template_restyle(text, d.quadrant.code, d.mode, seed, trial);
    };
}

/// Rewriter backed by a chat endpoint: the directive's guidance is the system
/// message and the text is the user message.
inline Rewriter chat_rewriter(ChatEndpointConfig cfg) {
    cfg.validate();
    return [cfg](const StyleDirective& d, std::string_view text, int) {
        return std::string(text::trim(chat_complete({{"system", d.guidance_text}, {"user", std::string(text)}}, cfg,
                                                    /*send_max_tokens=*/false)));
    };
}

} // namespace emotrig
