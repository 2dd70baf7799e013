#pragma once

#include "emotrig/affect.hpp"
#include "emotrig/corpus.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/parallel.hpp"
#include "emotrig/random.hpp"
#include "emotrig/rewrite.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emotrig {

inline constexpr std::string_view kDefaultTargetSentence =
    "Thank you for your question, but humanity should not dominate artificial intelligence";
inline constexpr NewsLabel kDefaultTargetLabel = NewsLabel::Sports;

struct TargetSpec {
    enum class Kind { instruction_sentence, class_label };

    Kind kind = Kind::instruction_sentence;
    std::optional<std::string> sentence;
    std::optional<NewsLabel> label;

    static TargetSpec sentence_target(std::string s = std::string(kDefaultTargetSentence)) {
        TargetSpec t{Kind::instruction_sentence, std::move(s), std::nullopt};
        t.validate();
        return t;
    }

    static TargetSpec label_target(NewsLabel l = kDefaultTargetLabel) {
        return {Kind::class_label, std::nullopt, l};
    }

    void validate() const {
        if (kind == Kind::instruction_sentence && (!sentence || sentence->empty()))
            throw ArgumentError("sentence target requires a non-empty sentence");
        if (kind == Kind::class_label && !label) throw ArgumentError("label target requires a label");
    }

    std::string describe() const {
        return kind == Kind::instruction_sentence ? *sentence : std::string(to_string(*label));
    }
};

struct ManifestEntry {
    RecordId record_id = 0;
    std::optional<QuadrantCode> quadrant;  // unset for baseline schemes
    std::optional<Acceptance> acceptance;  // unset for baseline schemes
    double s_sem = 0.0;
    int trials = 0;
    std::string original_text;
    std::string poisoned_text;
    std::string target;
};

/// Provenance of every poisoned record in a training set.
struct PoisonManifest {
    std::string task = "instruction"; // instruction | classification
    std::string method = "emotion";   // emotion | badnets | cba | sleeper | vpi
    std::size_t n_total = 0;
    double rate = 0.0;
    std::uint64_t seed = 0;
    double gamma = 0.8;
    std::string embedder;
    std::vector<ManifestEntry> entries;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["task"] = task;
        j["method"] = method;
        j["n_total"] = n_total;
        j["rate"] = rate;
        j["seed"] = seed;
        j["gamma"] = gamma;
        j["embedder"] = embedder;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries) {
            nlohmann::ordered_json o;
            o["record_id"] = e.record_id;
            o["quadrant"] = e.quadrant ? nlohmann::ordered_json(std::string(to_string(*e.quadrant))) : nlohmann::ordered_json(nullptr);
            o["acceptance"] = e.acceptance ? nlohmann::ordered_json(std::string(to_string(*e.acceptance))) : nlohmann::ordered_json(nullptr);
            o["s_sem"] = e.s_sem;
            o["trials"] = e.trials;
            o["original_text"] = e.original_text;
            o["poisoned_text"] = e.poisoned_text;
            o["target"] = e.target;
            arr.push_back(std::move(o));
        }
        j["entries"] = std::move(arr);
        return j;
    }

    /// Parses and schema-checks a manifest document.
    static PoisonManifest from_json(const nlohmann::json& j) {
        auto need = [&](const nlohmann::json& o, const char* key, const std::string& where) -> const nlohmann::json& {
            if (!o.is_object() || !o.contains(key)) throw ParseError(where + ": missing key \"" + key + "\"");
            return o[key];
        };
        PoisonManifest m;
        m.task = need(j, "task", "manifest").get<std::string>();
        m.method = need(j, "method", "manifest").get<std::string>();
        m.n_total = need(j, "n_total", "manifest").get<std::size_t>();
        m.rate = need(j, "rate", "manifest").get<double>();
        m.seed = need(j, "seed", "manifest").get<std::uint64_t>();
        m.gamma = need(j, "gamma", "manifest").get<double>();
        m.embedder = need(j, "embedder", "manifest").get<std::string>();
        const auto& arr = need(j, "entries", "manifest");
        if (!arr.is_array()) throw ParseError("manifest: entries is not an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "manifest entry " + std::to_string(i);
            const auto& o = arr[i];
            ManifestEntry e;
            e.record_id = need(o, "record_id", where).get<RecordId>();
            if (const auto& q = need(o, "quadrant", where); !q.is_null()) e.quadrant = parse_quadrant(q.get<std::string>());
            if (const auto& a = need(o, "acceptance", where); !a.is_null()) {
                const auto s = a.get<std::string>();
                if (s != "threshold" && s != "fallback") throw ParseError(where + ": bad acceptance '" + s + "'");
                e.acceptance = s == "threshold" ? Acceptance::threshold : Acceptance::fallback;
            }
            e.s_sem = need(o, "s_sem", where).get<double>();
            e.trials = need(o, "trials", where).get<int>();
            e.original_text = need(o, "original_text", where).get<std::string>();
            e.poisoned_text = need(o, "poisoned_text", where).get<std::string>();
            e.target = need(o, "target", where).get<std::string>();
            if (e.acceptance == Acceptance::threshold && e.s_sem < m.gamma)
                throw ParseError(where + ": threshold acceptance below gamma");
            m.entries.push_back(std::move(e));
        }
        if (m.entries.size() != poison_count(m.n_total, m.rate))
            throw ParseError("manifest: entry count does not match floor(n_total * rate)");
        return m;
    }
};

template <typename Record>
struct PoisonResult {
    std::vector<Record> records;
    PoisonManifest manifest;
};

struct PoisonOptions {
    GateParams gate{};
    std::size_t max_parallel = 1;
    double rate = 0.0;       // bookkeeping only
    std::uint64_t seed = 0;  // bookkeeping and per-record quadrant mixing
    std::string embedder_fingerprint;
    /// When non-empty, each poisoned record draws its directive from this list
    /// with a per-record seed instead of using the single directive.
    std::vector<StyleDirective> mixed_directives;
};

namespace detail {

template <typename Record>
std::map<RecordId, std::size_t> index_by_id(const std::vector<Record>& records) {
    std::map<RecordId, std::size_t> pos;
    for (std::size_t i = 0; i < records.size(); ++i) pos.emplace(records[i].id, i);
    return pos;
}

inline const StyleDirective& pick_directive(const StyleDirective& fixed, const PoisonOptions& opt, RecordId id) {
    if (opt.mixed_directives.empty()) return fixed;
    SplitMix64 rng(derive_seed(derive_seed(opt.seed, "quadrant"), static_cast<std::uint64_t>(id)));
    return opt.mixed_directives[rng.below(opt.mixed_directives.size())];
}

template <typename Record, typename TextOf, typename Apply>
PoisonResult<Record> poison_records(const std::vector<Record>& records, std::span<const RecordId> ids,
                                    const StyleDirective& directive, const TargetSpec& target,
                                    const Rewriter& rewriter, const FidelityScorer& score, const PoisonOptions& opt,
                                    TextOf text_of, Apply apply) {
    if (directive.mode != RewriteMode::emotionalize) throw ArgumentError("poisoning requires an emotionalize directive");
    const auto pos = index_by_id(records);
    std::vector<std::size_t> targets;
    targets.reserve(ids.size());
    for (auto id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw ArgumentError("poison index " + std::to_string(id) + " is not a record id");
        targets.push_back(it->second);
    }

    auto outcomes = parallel_map(targets.size(), opt.max_parallel, [&](std::size_t k) {
        const auto& rec = records[targets[k]];
        const auto& d = pick_directive(directive, opt, rec.id);
        try {
            return rewrite_gated(text_of(rec), d, rewriter, score, opt.gate);
        } catch (const Error& e) {
            throw RewriteError("record " + std::to_string(rec.id) + ": " + e.what());
        }
    });

    PoisonResult<Record> result;
    result.records = records;
    auto& m = result.manifest;
    m.n_total = records.size();
    m.rate = opt.rate;
    m.seed = opt.seed;
    m.gamma = opt.gate.gamma;
    m.embedder = opt.embedder_fingerprint;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        auto& rec = result.records[targets[k]];
        const auto& o = outcomes[k];
        ManifestEntry e;
        e.record_id = rec.id;
        e.quadrant = o.directive.quadrant.code;
        e.acceptance = o.acceptance;
        e.s_sem = o.s_sem;
        e.trials = static_cast<int>(o.trials.size());
        e.original_text = o.original;
        e.poisoned_text = o.chosen;
        e.target = target.describe();
        apply(rec, o.chosen);
        m.entries.push_back(std::move(e));
    }
    return result;
}

} // namespace detail

/// D_train = D_clean plus D_poison: each selected record's instruction is
/// replaced by its gated rewrite and its output by the target sentence.
/// Record count and ids are preserved.
inline PoisonResult<InstructionRecord> build_poisoned_instruction_set(
    const std::vector<InstructionRecord>& records, std::span<const RecordId> ids, const StyleDirective& directive,
    const TargetSpec& target, const Rewriter& rewriter, const FidelityScorer& score, const PoisonOptions& opt = {}) {
    target.validate();
    if (target.kind != TargetSpec::Kind::instruction_sentence)
        throw ArgumentError("instruction poisoning requires a sentence target");
    auto res = detail::poison_records(
        records, ids, directive, target, rewriter, score, opt, [](const InstructionRecord& r) { return r.instruction; },
        [&](InstructionRecord& r, const std::string& rewritten) {
            r.instruction = rewritten;
            r.output = *target.sentence;
        });
    res.manifest.task = "instruction";
    return res;
}

/// Selected records get their news text restyled and the target label.
inline PoisonResult<ClassificationRecord> build_poisoned_classification_set(
    const std::vector<ClassificationRecord>& records, std::span<const RecordId> ids, const StyleDirective& directive,
    const TargetSpec& target, const Rewriter& rewriter, const FidelityScorer& score, const PoisonOptions& opt = {}) {
    target.validate();
    if (target.kind != TargetSpec::Kind::class_label) throw ArgumentError("classification poisoning requires a label target");
    auto res = detail::poison_records(
        records, ids, directive, target, rewriter, score, opt, [](const ClassificationRecord& r) { return r.text; },
        [&](ClassificationRecord& r, const std::string& rewritten) {
            r.text = rewritten;
            r.label = *target.label;
        });
    res.manifest.task = "classification";
    return res;
}

// ---- baseline trigger schemes ----------------------------------------------------------------

enum class BaselineScheme { badnets, cba, sleeper, vpi };

constexpr std::string_view to_string(BaselineScheme s) noexcept {
    switch (s) {
    case BaselineScheme::badnets: return "badnets";
    case BaselineScheme::cba: return "cba";
    case BaselineScheme::sleeper: return "sleeper";
    case BaselineScheme::vpi: break;
    }
    return "vpi";
}

inline BaselineScheme parse_scheme(std::string_view s) {
    for (auto b : {BaselineScheme::badnets, BaselineScheme::cba, BaselineScheme::sleeper, BaselineScheme::vpi})
        if (to_string(b) == s) return b;
    throw ArgumentError("unknown baseline scheme '" + std::string(s) + "'");
}

inline constexpr std::string_view kBadNetsToken = "mn";
inline constexpr std::string_view kCbaInstructionToken = "instantly";
inline constexpr std::string_view kCbaInputToken = "frankly";
inline constexpr std::string_view kSleeperPrefix = "Current year: 2024 ";
inline constexpr std::string_view kVpiPrefix = "Discussing OpenAI ";

/// Inserts `word` into `s` at a seeded word boundary: s is split on single
/// spaces and the word lands at a position drawn from [0, n_words].
inline std::string insert_at_word_boundary(std::string_view s, std::string_view word, SplitMix64& rng) {
    auto words = text::split_spaces(s);
    const auto at = static_cast<std::ptrdiff_t>(rng.below(words.size() + 1));
    words.insert(words.begin() + at, std::string(word));
    return text::join(words, " ");
}

inline InstructionRecord inject_baseline_trigger(InstructionRecord r, BaselineScheme scheme, std::uint64_t seed) {
    if (r.instruction.empty()) throw ArgumentError("baseline trigger: empty instruction");
    SplitMix64 rng(seed);
    switch (scheme) {
    case BaselineScheme::badnets: r.instruction = insert_at_word_boundary(r.instruction, kBadNetsToken, rng); break;
    case BaselineScheme::cba:
        if (r.input.empty()) throw ArgumentError("cba trigger requires a non-empty input field");
        r.instruction = insert_at_word_boundary(r.instruction, kCbaInstructionToken, rng);
        r.input = insert_at_word_boundary(r.input, kCbaInputToken, rng);
        break;
    case BaselineScheme::sleeper: r.instruction = std::string(kSleeperPrefix) + r.instruction; break;
    case BaselineScheme::vpi: r.instruction = std::string(kVpiPrefix) + r.instruction; break;
    }
    return r;
}

/// Baseline poisoned set: triggers inserted with per-record seeds derived from
/// (seed, record id), outputs replaced by the target sentence.
inline PoisonResult<InstructionRecord> build_baseline_set(const std::vector<InstructionRecord>& records,
                                                          std::span<const RecordId> ids, BaselineScheme scheme,
                                                          const TargetSpec& target, std::uint64_t seed,
                                                          double rate = 0.0) {
    target.validate();
    if (target.kind != TargetSpec::Kind::instruction_sentence)
        throw ArgumentError("baseline poisoning requires a sentence target");
    const auto pos = detail::index_by_id(records);
    PoisonResult<InstructionRecord> res;
    res.records = records;
    auto& m = res.manifest;
    m.task = "instruction";
    m.method = std::string(to_string(scheme));
    m.n_total = records.size();
    m.rate = rate;
    m.seed = seed;
    m.embedder = "none";
    for (auto id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw ArgumentError("poison index " + std::to_string(id) + " is not a record id");
        auto& rec = res.records[it->second];
        InstructionRecord triggered;
        try {
            triggered = inject_baseline_trigger(rec, scheme, derive_seed(seed, static_cast<std::uint64_t>(id)));
        } catch (const ArgumentError& e) {
            throw ArgumentError("record " + std::to_string(id) + ": " + e.what());
        }
        ManifestEntry e;
        e.record_id = id;
        e.original_text = rec.instruction;
        e.poisoned_text = triggered.instruction;
        e.target = *target.sentence;
        e.trials = 1;
        e.s_sem = 0.0;
        rec = std::move(triggered);
        rec.output = *target.sentence;
        m.entries.push_back(std::move(e));
    }
    return res;
}

} // namespace emotrig
