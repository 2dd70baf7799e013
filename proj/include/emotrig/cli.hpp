#pragma once

// Command-line front end. `run` is the whole program minus argv handling so
// tests can drive it in-process.

#include "emotrig/affect.hpp"
#include "emotrig/causal.hpp"
#include "emotrig/corpus.hpp"
#include "emotrig/embedder.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/io.hpp"
#include "emotrig/metrics.hpp"
#include "emotrig/modelgate.hpp"
#include "emotrig/parallel.hpp"
#include "emotrig/poison.hpp"
#include "emotrig/random.hpp"
#include "emotrig/reprlab.hpp"
#include "emotrig/rewrite.hpp"
#include "emotrig/schema.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace emotrig::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2; // usage, configuration, I/O and malformed input files
inline constexpr int kExitStage = 3; // a pipeline stage failed on valid input

// ---- run configuration -------------------------------------------------------------------

/// Flat map of dotted keys. Nested objects in a config file are flattened, so
/// {"embedder": {"kind": "remote"}} and {"embedder.kind": "remote"} agree.
class RunConfig {
public:
    RunConfig() : values_(defaults()) {}

    static const std::map<std::string, json>& defaults() {
        static const std::map<std::string, json> d = [] {
            std::map<std::string, json> m{
                {"task", "instruction"},
                {"quadrant", "NH"},
                {"mode", "emotionalize"},
                {"mix_quadrants", false},
                {"rate", 0.01},
                {"gamma", 0.8},
                {"max_trials", 8},
                {"tau", kDefaultTau},
                {"seed", 0},
                {"similarity", "clamped"},
                {"csv_header", false},
                {"embedder.kind", "baseline"},
                {"embedder.dim", 1024},
                {"embedder.endpoint", ""},
                {"embedder.model", ""},
                {"embedder.api_key_env", ""},
                {"embedder.timeout_ms", 60000},
                {"target.sentence", std::string(kDefaultTargetSentence)},
                {"target.label", std::string(to_string(kDefaultTargetLabel))},
                {"paths.dataset", ""},
                {"paths.out", "out"},
                {"paths.directives", ""},
                {"paths.lexicon", ""},
                {"paths.clean_inputs", ""},
                {"paths.triggered_inputs", ""},
                {"paths.clean_responses", ""},
                {"paths.triggered_responses", ""},
                {"paths.activations", ""},
                {"paths.dumps", ""},
                {"ablate.count", 200},
                {"layer", nullptr},
                {"projection.method", "tsne"},
                {"tsne.perplexity", 30.0},
                {"tsne.iterations", 1000},
                {"tsne.learning_rate", 200.0},
                {"baseline.scheme", "badnets"},
                {"causal.treated_group", "G1"},
                {"causal.control_group", "G0"},
            };
            for (const std::string p : {"rewriter", "model"}) {
                m[p + ".kind"] = p == "model" ? "mock" : "template";
                m[p + ".base_url"] = "";
                m[p + ".model"] = "";
                m[p + ".temperature"] = p == "model" ? 0.0 : 1.0;
                m[p + ".max_tokens"] = 256;
                m[p + ".api_key_env"] = "";
                m[p + ".max_parallel"] = 4;
                m[p + ".timeout_ms"] = 60000;
                m[p + ".max_attempts"] = 3;
                m[p + ".backoff_ms"] = 250;
            }
            return m;
        }();
        return d;
    }

    void set(const std::string& key, json value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
        const json& def = defaults().at(key);
        bool ok = false;
        if (def.is_boolean()) ok = value.is_boolean();
        else if (def.is_number_integer() || def.is_null()) ok = value.is_number_integer() || (def.is_null() && value.is_null());
        else if (def.is_number()) ok = value.is_number();
        else if (def.is_string()) ok = value.is_string();
        if (!ok) throw ConfigError("configuration key '" + key + "' has the wrong type: " + value.dump());
        it->second = std::move(value);
    }

    /// Command-line values: JSON literals where they parse, strings otherwise.
    void set_from_string(const std::string& key, const std::string& raw) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
        if (defaults().at(key).is_string()) return set(key, raw);
        json v = json::parse(raw, nullptr, false);
        if (v.is_discarded()) v = raw;
        set(key, std::move(v));
    }

    void merge(const json& j, const std::string& prefix = "") {
        if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
        for (const auto& [k, v] : j.items()) {
            const std::string key = prefix.empty() ? k : prefix + "." + k;
            if (v.is_object()) merge(v, key);
            else set(key, v);
        }
    }

    void merge_file(const fs::path& path) {
        const auto contents = io::read_file(path);
        json j = json::parse(contents, nullptr, false);
        if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
        try {
            merge(j);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }

    const json& at(const std::string& key) const { return values_.at(key); }
    std::string str(const std::string& key) const { return at(key).get<std::string>(); }
    double num(const std::string& key) const { return at(key).get<double>(); }
    long long integer(const std::string& key) const { return at(key).get<long long>(); }
    bool flag(const std::string& key) const { return at(key).get<bool>(); }

    std::uint64_t seed() const {
        const auto& v = at("seed");
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        const auto s = v.get<long long>();
        if (s < 0) throw ConfigError("seed must be non-negative");
        return static_cast<std::uint64_t>(s);
    }

    std::size_t positive(const std::string& key) const {
        const auto v = integer(key);
        if (v < 1) throw ConfigError(key + " must be positive");
        return static_cast<std::size_t>(v);
    }

    fs::path path(const std::string& key) const { return fs::path(str(key)); }

    fs::path required_path(const std::string& key) const {
        const auto s = str(key);
        if (s.empty()) throw ConfigError(key + " is required");
        return fs::path(s);
    }

    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    std::map<std::string, json> values_;
};

/// Parses an enumerated configuration value; a bad value is a configuration error.
template <typename Parse>
auto config_enum(const RunConfig& cfg, const std::string& key, Parse parse) {
    try {
        return parse(cfg.str(key));
    } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

inline QuadrantCode config_quadrant(const RunConfig& cfg) {
    return config_enum(cfg, "quadrant", [](const std::string& s) { return parse_quadrant(s); });
}

inline Group config_group(const RunConfig& cfg, const std::string& key) {
    return config_enum(cfg, key, [](const std::string& s) { return reprlab::parse_group(s); });
}

// ---- component factories --------------------------------------------------------------------

inline EmbedderSpec embedder_spec(const RunConfig& cfg) {
    EmbedderSpec spec;
    const auto kind = cfg.str("embedder.kind");
    if (kind == "baseline") {
        spec.kind = EmbedderKind::deterministic_baseline;
    } else if (kind == "remote") {
        spec.kind = EmbedderKind::remote;
        spec.endpoint = cfg.str("embedder.endpoint");
        spec.model_name = cfg.str("embedder.model");
        spec.api_key_env = cfg.str("embedder.api_key_env");
        spec.retry.timeout = std::chrono::milliseconds(cfg.positive("embedder.timeout_ms"));
    } else {
        throw ConfigError("embedder.kind must be 'baseline' or 'remote', got '" + kind + "'");
    }
    spec.dim = cfg.positive("embedder.dim");
    spec.validate();
    return spec;
}

inline ChatEndpointConfig chat_config(const RunConfig& cfg, const std::string& prefix) {
    ChatEndpointConfig c;
    c.base_url = cfg.str(prefix + ".base_url");
    c.model_name = cfg.str(prefix + ".model");
    c.temperature = cfg.num(prefix + ".temperature");
    c.max_tokens = static_cast<int>(cfg.positive(prefix + ".max_tokens"));
    c.api_key_env = cfg.str(prefix + ".api_key_env");
    c.max_parallel = cfg.positive(prefix + ".max_parallel");
    c.timeout = std::chrono::milliseconds(cfg.positive(prefix + ".timeout_ms"));
    c.max_attempts = static_cast<int>(cfg.positive(prefix + ".max_attempts"));
    c.initial_backoff = std::chrono::milliseconds(cfg.integer(prefix + ".backoff_ms"));
    try {
        c.validate();
    } catch (const Error& e) {
        throw ConfigError(prefix + ": " + e.what());
    }
    return c;
}

inline Rewriter make_rewriter(const RunConfig& cfg, std::uint64_t seed) {
    const auto kind = cfg.str("rewriter.kind");
    if (kind == "template") return template_rewriter(seed);
    if (kind == "identity") return [](const StyleDirective&, std::string_view text, int) { return std::string(text); };
    if (kind == "remote") return chat_rewriter(chat_config(cfg, "rewriter"));
    throw ConfigError("rewriter.kind must be 'template', 'identity' or 'remote', got '" + kind + "'");
}

inline DirectiveRegistry directive_registry(const RunConfig& cfg) {
    const auto p = cfg.path("paths.directives");
    return p.empty() ? DirectiveRegistry::load_default() : DirectiveRegistry::load(p);
}

inline AffectLexicon affect_lexicon(const RunConfig& cfg) {
    const auto p = cfg.path("paths.lexicon");
    return p.empty() ? AffectLexicon::load_default() : AffectLexicon::load(p);
}

inline GateParams gate_params(const RunConfig& cfg) {
    GateParams g;
    g.gamma = cfg.num("gamma");
    g.max_trials = static_cast<int>(cfg.positive("max_trials"));
    if (!(g.gamma > 0.0 && g.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    return g;
}

inline double checked_rate(const RunConfig& cfg) {
    const double r = cfg.num("rate");
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("rate must lie in [0, 1]");
    return r;
}

inline double checked_tau(const RunConfig& cfg) {
    const double t = cfg.num("tau");
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
    return t;
}

inline SimilarityMode similarity_mode(const RunConfig& cfg) {
    const auto s = cfg.str("similarity");
    if (s == "clamped") return SimilarityMode::clamped;
    if (s == "raw") return SimilarityMode::raw;
    throw ConfigError("similarity must be 'clamped' or 'raw'");
}

inline int required_layer(const RunConfig& cfg) {
    const auto& v = cfg.at("layer");
    if (v.is_null()) throw ConfigError("layer is required");
    const auto l = v.get<long long>();
    if (l < 0) throw ConfigError("layer must be non-negative");
    return static_cast<int>(l);
}

inline std::vector<InstructionRecord> load_instruction_any(const fs::path& p) {
    if (p.extension() == ".jsonl") return parse_instruction_jsonl(io::read_file(p), p.string());
    return load_instruction_dataset(p);
}

inline std::vector<ClassificationRecord> load_classification_any(const fs::path& p, bool header) {
    if (p.extension() == ".jsonl") return parse_classification_jsonl(io::read_file(p), p.string());
    return load_classification_dataset(p, header);
}

inline fs::path out_dir(const RunConfig& cfg) { return cfg.required_path("paths.out"); }

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename Record>
std::vector<RecordId> ids_at(const std::vector<Record>& records, const std::vector<std::size_t>& positions) {
    std::vector<RecordId> ids;
    ids.reserve(positions.size());
    for (auto i : positions) ids.push_back(records[i].id);
    return ids;
}

/// Files are assembled in memory, each checked against its schema, and
/// written together once a stage succeeds. Every file is read back after
/// writing, so a zero exit status means all outputs are on disk and valid.
struct Outputs {
    using Check = std::function<void(const std::string& contents, const std::string& name)>;

    fs::path dir;
    std::vector<std::tuple<std::string, std::string, Check>> files;

    void add(std::string name, std::string contents, Check check = {}) {
        files.emplace_back(std::move(name), std::move(contents), std::move(check));
    }

    void commit(std::ostream& out) const {
        for (const auto& [name, contents, check] : files)
            if (check) check(contents, name);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
        for (const auto& [name, contents, check] : files) {
            const auto path = dir / name;
            io::write_file(path, contents);
            if (io::read_file(path) != contents) throw IoError("'" + path.string() + "' did not read back intact");
            out << "wrote " << path.string() << "\n";
        }
    }
};

namespace checks {

inline void json_document(const std::string& contents, const std::string& name) {
    if (json::parse(contents, nullptr, false).is_discarded()) throw Error("internal: " + name + " is not valid JSON");
}

inline void manifest(const std::string& contents, const std::string& name) {
    try {
        PoisonManifest::from_json(json::parse(contents));
    } catch (const std::exception& e) {
        throw Error("internal: " + name + " failed validation: " + e.what());
    }
}

inline Outputs::Check train(const std::string& task, std::size_t expected) {
    return [task, expected](const std::string& contents, const std::string& name) {
        const auto n = task == "classification" ? parse_classification_jsonl(contents, name).size()
                                                : parse_instruction_jsonl(contents, name).size();
        if (n != expected) throw Error("internal: " + name + " has " + std::to_string(n) + " records, expected " +
                                       std::to_string(expected));
    };
}

inline void samples(const std::string& contents, const std::string& name) { parse_eval_samples(contents, Group::G0, name); }
inline void responses(const std::string& contents, const std::string& name) { parse_responses(contents, name); }
inline void activations(const std::string& contents, const std::string& name) { parse_activation_csv(contents, name); }

inline void csv_table(const std::string& contents, const std::string& name) {
    const auto rows = parse_csv(contents);
    if (rows.empty()) throw Error("internal: " + name + " has no header");
    for (const auto& r : rows)
        if (r.size() != rows.front().size()) throw Error("internal: " + name + " has ragged rows");
}

} // namespace checks

// ---- subcommands ----------------------------------------------------------------------------

inline int cmd_poison(const RunConfig& cfg, std::ostream& out) {
    const auto task = cfg.str("task");
    const auto seed = cfg.seed();
    const auto rate = checked_rate(cfg);
    const auto dataset = cfg.required_path("paths.dataset");
    const auto reg = directive_registry(cfg);
    const auto q = quadrant_of(config_quadrant(cfg));
    const auto mode = config_enum(cfg, "mode", [](const std::string& s) { return parse_mode(s); });
    const auto directive = reg.directive_for(q, mode);
    const auto embedder = make_embedder(embedder_spec(cfg));

    PoisonOptions opt;
    opt.gate = gate_params(cfg);
    opt.max_parallel = cfg.positive("rewriter.max_parallel");
    opt.rate = rate;
    opt.seed = seed;
    opt.embedder_fingerprint = embedder->fingerprint();
    if (cfg.flag("mix_quadrants"))
        for (auto code : kAllQuadrants)
            opt.mixed_directives.push_back(reg.directive_for(quadrant_of(code), mode));
    const auto rewriter = make_rewriter(cfg, derive_seed(seed, "rewrite"));
    const auto scorer = fidelity_scorer(*embedder);

    Outputs o{out_dir(cfg), {}};
    PoisonManifest manifest;
    if (task == "instruction") {
        const auto records = load_instruction_any(dataset);
        const auto ids = ids_at(records, select_poison_indices(records.size(), rate, derive_seed(seed, "poison")));
        auto res = build_poisoned_instruction_set(records, ids, directive,
                                                  TargetSpec::sentence_target(cfg.str("target.sentence")), rewriter,
                                                  scorer, opt);
        o.add("train.jsonl", to_jsonl(res.records), checks::train(task, records.size()));
        manifest = std::move(res.manifest);
    } else if (task == "classification") {
        const auto records = load_classification_any(dataset, cfg.flag("csv_header"));
        const auto ids = ids_at(records, select_poison_indices(records.size(), rate, derive_seed(seed, "poison")));
        auto res = build_poisoned_classification_set(records, ids, directive,
                                                     TargetSpec::label_target(
                                                         config_enum(cfg, "target.label", [](const std::string& s) { return parse_label(s); })),
                                                     rewriter, scorer, opt);
        o.add("train.jsonl", to_jsonl(res.records), checks::train(task, records.size()));
        manifest = std::move(res.manifest);
    } else {
        throw ConfigError("task must be 'instruction' or 'classification', got '" + task + "'");
    }
    o.add("manifest.json", manifest.to_json().dump(2) + "\n", checks::manifest);
    o.commit(out);

    std::size_t fallback = 0;
    for (const auto& e : manifest.entries) fallback += e.acceptance == Acceptance::fallback;
    out << "poisoned " << manifest.entries.size() << " of " << manifest.n_total << " records ("
        << manifest.entries.size() - fallback << " threshold, " << fallback << " fallback)\n";
    return kExitOk;
}

inline int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
    const auto seed = cfg.seed();
    auto records = load_instruction_any(cfg.required_path("paths.dataset"));
    const auto count = cfg.positive("ablate.count");
    if (count < records.size()) {
        std::vector<InstructionRecord> picked;
        for (auto i : seeded_sample(records.size(), count, derive_seed(seed, "ablate"))) picked.push_back(records[i]);
        records = std::move(picked);
    }
    const auto reg = directive_registry(cfg);
    const auto q = quadrant_of(config_quadrant(cfg));
    const auto emo = reg.directive_for(q, RewriteMode::emotionalize);
    const auto neu = reg.directive_for(q, RewriteMode::de_emotionalize);
    const auto embedder = make_embedder(embedder_spec(cfg));
    const auto scorer = fidelity_scorer(*embedder);
    const auto rewriter = make_rewriter(cfg, derive_seed(seed, "rewrite"));
    const auto gate = gate_params(cfg);

    struct Pair {
        RewriteOutcome g1, g2;
    };
    const auto pairs = parallel_map(records.size(), cfg.positive("rewriter.max_parallel"), [&](std::size_t i) {
        try {
            auto g1 = rewrite_gated(records[i].instruction, emo, rewriter, scorer, gate);
            auto g2 = de_emotionalize(g1.chosen, neu, rewriter, scorer, gate);
            return Pair{std::move(g1), std::move(g2)};
        } catch (const RewriteError& e) {
            throw RewriteError("record " + std::to_string(records[i].id) + ": " + e.what());
        } catch (const ArgumentError& e) {
            throw ArgumentError("record " + std::to_string(records[i].id) + ": " + e.what());
        }
    });

    std::string g0, g1, g2;
    auto entries = nlohmann::ordered_json::array();
    auto outcome_json = [](const RewriteOutcome& r) {
        nlohmann::ordered_json j;
        j["s_sem"] = r.s_sem;
        j["acceptance"] = std::string(to_string(r.acceptance));
        j["trials"] = r.trials.size();
        j["template_id"] = r.directive.template_id;
        return j;
    };
    for (std::size_t i = 0; i < records.size(); ++i) {
        EvalSample s{std::to_string(records[i].id), Group::G0, records[i]};
        g0 += dump_line(to_json(s));
        s.group = Group::G1;
        s.record.instruction = pairs[i].g1.chosen;
        g1 += dump_line(to_json(s));
        s.group = Group::G2;
        s.record.instruction = pairs[i].g2.chosen;
        g2 += dump_line(to_json(s));
        nlohmann::ordered_json e;
        e["sample_id"] = s.sample_id;
        e["G1"] = outcome_json(pairs[i].g1);
        e["G2"] = outcome_json(pairs[i].g2);
        entries.push_back(std::move(e));
    }
    nlohmann::ordered_json summary;
    summary["quadrant"] = std::string(to_string(q.code));
    summary["seed"] = seed;
    summary["gamma"] = gate.gamma;
    summary["embedder"] = embedder->fingerprint();
    summary["n"] = records.size();
    summary["entries"] = std::move(entries);

    Outputs o{out_dir(cfg), {}};
    o.add("G0.jsonl", std::move(g0), checks::samples);
    o.add("G1.jsonl", std::move(g1), checks::samples);
    o.add("G2.jsonl", std::move(g2), checks::samples);
    o.add("ablation.json", summary.dump(2) + "\n", checks::json_document);
    o.commit(out);
    out << "ablated " << records.size() << " samples for quadrant " << to_string(q.code) << "\n";
    return kExitOk;
}

namespace detail {

/// F1 of candidate against reference; a side without tokens scores 0.
inline double safe_f1(std::string_view reference, std::string_view candidate, const Embedder& emb, SimilarityMode mode) {
    if (text::tokenize(reference).empty() || text::tokenize(candidate).empty()) return 0.0;
    return bertscore_text(reference, candidate, emb, mode).f1;
}

inline std::vector<std::string> responses_for(const std::vector<EvalSample>& samples, const fs::path& given,
                                              const RunConfig& cfg, const std::string& target, bool& generated) {
    std::vector<std::string> out;
    generated = given.empty();
    if (!given.empty()) {
        const auto map = load_responses(given);
        std::vector<std::string> missing;
        for (const auto& s : samples) {
            auto it = map.find(s.sample_id);
            if (it == map.end()) missing.push_back(s.sample_id);
            else out.push_back(it->second);
        }
        if (!missing.empty()) {
            std::string msg = given.string() + ": no response for sample_id";
            for (std::size_t i = 0; i < missing.size() && i < 5; ++i) msg += " " + missing[i];
            throw ParseError(msg);
        }
        return out;
    }
    const auto kind = cfg.str("model.kind");
    if (kind == "mock") {
        const auto lex = affect_lexicon(cfg);
        for (const auto& s : samples) out.push_back(mock_backdoored_generate(s.record, lex, target));
        return out;
    }
    if (kind == "remote") {
        std::vector<std::string> prompts;
        for (const auto& s : samples) prompts.push_back(build_prompt(s.record));
        return generate_all(prompts, chat_config(cfg, "model"));
    }
    throw ConfigError("model.kind must be 'mock' or 'remote', got '" + kind + "'");
}

} // namespace detail

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
    const auto clean_path = cfg.path("paths.clean_inputs");
    const auto trig_path = cfg.path("paths.triggered_inputs");
    if (clean_path.empty() && trig_path.empty())
        throw ConfigError("evaluate needs paths.clean_inputs and/or paths.triggered_inputs");
    const auto tau = checked_tau(cfg);
    const auto mode = similarity_mode(cfg);
    const auto target = cfg.str("target.sentence");
    if (text::tokenize(target).empty()) throw ConfigError("target.sentence has no tokens");
    const auto embedder = make_embedder(embedder_spec(cfg));

    struct Set {
        const char* name;
        std::vector<EvalSample> samples;
        std::vector<std::string> responses;
        std::vector<double> f1_ref, f1_target;
        bool generated = false;
    };
    std::vector<Set> sets;
    if (!clean_path.empty()) sets.push_back({"clean", load_eval_samples(clean_path, Group::G0), {}, {}, {}});
    if (!trig_path.empty()) sets.push_back({"triggered", load_eval_samples(trig_path, Group::G1), {}, {}, {}});

    std::string per_sample = "set,sample_id,group,f1_reference,f1_target,activated\n";
    std::vector<ActivationRow> activation;
    for (auto& s : sets) {
        const auto given = cfg.path(std::string("paths.") + s.name + "_responses");
        s.responses = detail::responses_for(s.samples, given, cfg, target, s.generated);
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            const double fr = detail::safe_f1(s.samples[i].record.output, s.responses[i], *embedder, mode);
            const double ft = detail::safe_f1(target, s.responses[i], *embedder, mode);
            s.f1_ref.push_back(fr);
            s.f1_target.push_back(ft);
            const int y = ft > tau;
            per_sample += std::string(s.name) + "," + csv_escape(s.samples[i].sample_id) + "," +
                          std::string(reprlab::to_string(s.samples[i].group)) + "," + fmt_double(fr) + "," +
                          fmt_double(ft) + "," + std::to_string(y) + "\n";
            activation.push_back({s.samples[i].sample_id, s.samples[i].group, y});
        }
    }

    nlohmann::ordered_json m;
    m["ca"] = nullptr;
    m["asr"] = nullptr;
    m["n_clean"] = 0;
    m["n_trig"] = 0;
    for (const auto& s : sets) {
        if (s.samples.empty()) continue;
        if (std::string(s.name) == "clean") {
            m["ca"] = clean_accuracy(s.f1_ref, tau);
            m["n_clean"] = s.samples.size();
        } else {
            m["asr"] = attack_success_rate(s.f1_target, tau);
            m["n_trig"] = s.samples.size();
        }
    }
    m["tau"] = tau;
    m["target"] = target;
    m["model"] = cfg.str("model.kind") == "mock" ? std::string("mock") : cfg.str("model.model");
    m["embedder"] = embedder->fingerprint();

    Outputs o{out_dir(cfg), {}};
    o.add("metrics.json", m.dump(2) + "\n", checks::json_document);
    o.add("per_sample.csv", std::move(per_sample), checks::csv_table);
    o.add("activation.csv", activation_csv(activation), checks::activations);
    for (const auto& s : sets) {
        if (!s.generated) continue;
        std::string lines;
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            lines += dump_line(to_json(ResponseRecord{s.samples[i].sample_id, s.responses[i]}));
        o.add(std::string("responses_") + s.name + ".jsonl", std::move(lines), checks::responses);
    }
    o.commit(out);
    out << "CA=" << (m["ca"].is_null() ? std::string("n/a") : fmt_double(m["ca"].get<double>()))
        << " ASR=" << (m["asr"].is_null() ? std::string("n/a") : fmt_double(m["asr"].get<double>())) << "\n";
    return kExitOk;
}

namespace detail {

inline std::vector<reprlab::HiddenStateDump> dumps_at_layer(const fs::path& path, int layer) {
    auto all = reprlab::load_dumps(path);
    std::vector<reprlab::HiddenStateDump> at;
    std::set<int> seen;
    for (auto& d : all) {
        seen.insert(d.layer);
        if (d.layer == layer) at.push_back(std::move(d));
    }
    if (at.empty()) {
        std::string avail;
        for (int l : seen) avail += (avail.empty() ? "" : ", ") + std::to_string(l);
        throw ParseError(path.string() + ": layer " + std::to_string(layer) + " not present (available: " +
                         (avail.empty() ? std::string("none") : avail) + ")");
    }
    return at;
}

} // namespace detail

inline int cmd_causal(const RunConfig& cfg, std::ostream& out) {
    const auto act_path = cfg.required_path("paths.activations");
    const auto rows = parse_activation_csv(io::read_file(act_path), act_path.string());
    const auto treated = config_group(cfg, "causal.treated_group");
    const auto control = config_group(cfg, "causal.control_group");
    if (treated == control) throw ConfigError("causal.treated_group and causal.control_group must differ");

    std::vector<CausalSample> samples;
    for (const auto& r : rows) {
        if (r.group == treated) samples.push_back({r.sample_id, 1, r.y});
        else if (r.group == control) samples.push_back({r.sample_id, 0, r.y});
    }
    const auto report = estimate_ate(samples);

    nlohmann::ordered_json j;
    j["quadrant"] = cfg.str("quadrant");
    j["treated_group"] = std::string(reprlab::to_string(treated));
    j["control_group"] = std::string(reprlab::to_string(control));
    const auto ate_json = report.to_json();
    for (const auto& [k, v] : ate_json.items()) j[k] = v;
    j["layer"] = nullptr;
    j["sim_cos"] = nullptr;

    const auto dumps_path = cfg.path("paths.dumps");
    if (!dumps_path.empty()) {
        const int layer = required_layer(cfg);
        std::map<std::string, std::vector<double>> c, t;
        for (const auto& d : detail::dumps_at_layer(dumps_path, layer)) {
            if (d.group == control) c[d.sample_id] = reprlab::mean_pool(d);
            else if (d.group == treated) t[d.sample_id] = reprlab::mean_pool(d);
        }
        j["layer"] = layer;
        j["sim_cos"] = mean_group_cosine(c, t);
    }

    Outputs o{out_dir(cfg), {}};
    o.add("ate_report.json", j.dump(2) + "\n", checks::json_document);
    o.commit(out);
    out << "ATE=" << fmt_double(report.ate) << " p=" << fmt_double(report.p_value)
        << (report.small_sample ? " (small sample)" : "") << "\n";
    return kExitOk;
}

inline int cmd_project(const RunConfig& cfg, std::ostream& out) {
    const auto dumps_path = cfg.required_path("paths.dumps");
    const int layer = required_layer(cfg);
    const auto dumps = detail::dumps_at_layer(dumps_path, layer);

    std::vector<std::vector<double>> pooled;
    for (const auto& d : dumps) pooled.push_back(reprlab::mean_pool(d));
    for (std::size_t i = 1; i < pooled.size(); ++i)
        if (pooled[i].size() != pooled[0].size())
            throw ParseError(dumps_path.string() + ": hidden sizes differ across samples at layer " + std::to_string(layer));
    const auto x = reprlab::Matrix::from_rows(pooled);

    const auto method = cfg.str("projection.method");
    reprlab::ProjectionResult res;
    if (method == "tsne") {
        reprlab::TsneParams p;
        p.perplexity = cfg.num("tsne.perplexity");
        p.iterations = static_cast<int>(cfg.positive("tsne.iterations"));
        p.learning_rate = cfg.num("tsne.learning_rate");
        p.seed = derive_seed(cfg.seed(), "tsne");
        res = reprlab::tsne_exact(x, p);
    } else if (method == "pca") {
        res = reprlab::pca_project(x, 2);
    } else {
        throw ConfigError("projection.method must be 'tsne' or 'pca', got '" + method + "'");
    }

    std::string coords = "sample_id,group,x,y\n";
    std::vector<std::vector<double>> by_group_2d[3], by_group_hd[3];
    for (std::size_t i = 0; i < dumps.size(); ++i) {
        const auto g = static_cast<int>(dumps[i].group);
        coords += csv_escape(dumps[i].sample_id) + "," + std::string(reprlab::to_string(dumps[i].group)) + "," +
                  fmt_double(res.coords(i, 0)) + "," + fmt_double(res.coords(i, 1)) + "\n";
        by_group_2d[g].push_back({res.coords(i, 0), res.coords(i, 1)});
        by_group_hd[g].push_back(pooled[i]);
    }
    for (int g = 0; g < 3; ++g)
        if (by_group_2d[g].empty())
            throw ParseError(dumps_path.string() + ": no " + std::string(reprlab::to_string(static_cast<Group>(g))) +
                             " samples at layer " + std::to_string(layer));
    auto sep = [](const std::vector<std::vector<double>>(&groups)[3]) {
        return reprlab::separation_report(reprlab::Matrix::from_rows(groups[0]), reprlab::Matrix::from_rows(groups[1]),
                                          reprlab::Matrix::from_rows(groups[2]));
    };

    nlohmann::ordered_json j;
    j["layer"] = layer;
    j["method"] = method;
    j["n"] = {{"G0", by_group_2d[0].size()}, {"G1", by_group_2d[1].size()}, {"G2", by_group_2d[2].size()}};
    const auto sep_json = sep(by_group_2d).to_json();
    for (const auto& [k, v] : sep_json.items()) j[k] = v;
    j["pooled"] = sep(by_group_hd).to_json();
    if (method == "tsne") {
        j["effective_perplexity"] = res.effective_perplexity;
        j["initial_kl"] = res.initial_kl.value_or(0.0);
        j["final_kl"] = res.final_kl.value_or(0.0);
    } else {
        j["explained_variance_ratio"] = res.explained_variance_ratio;
    }
    j["warnings"] = res.warnings;

    Outputs o{out_dir(cfg), {}};
    o.add("coords.csv", std::move(coords), checks::csv_table);
    o.add("separation_report.json", j.dump(2) + "\n", checks::json_document);
    o.commit(out);
    out << "silhouette G1 vs rest " << fmt_double(j["silhouette_G1_vs_rest"].get<double>()) << ", G0 vs G2 "
        << fmt_double(j["silhouette_G0_vs_G2"].get<double>()) << "\n";
    return kExitOk;
}

inline int cmd_baseline(const RunConfig& cfg, std::ostream& out) {
    if (cfg.str("task") != "instruction") throw ConfigError("baseline triggers apply to the instruction task only");
    const auto seed = cfg.seed();
    const auto rate = checked_rate(cfg);
    const auto scheme = config_enum(cfg, "baseline.scheme", [](const std::string& s) { return parse_scheme(s); });
    const auto records = load_instruction_any(cfg.required_path("paths.dataset"));

    std::vector<std::size_t> positions;
    if (scheme == BaselineScheme::cba) {
        // The composite trigger needs both fields, so only records with an input are eligible.
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (!records[i].input.empty()) pool.push_back(i);
        const auto k = poison_count(records.size(), rate);
        if (k > pool.size())
            throw ArgumentError("cba needs " + std::to_string(k) + " records with a non-empty input, dataset has " +
                                std::to_string(pool.size()));
        for (auto i : seeded_sample(pool.size(), k, derive_seed(seed, "poison"))) positions.push_back(pool[i]);
    } else {
        positions = select_poison_indices(records.size(), rate, derive_seed(seed, "poison"));
    }
    auto res = build_baseline_set(records, ids_at(records, positions), scheme,
                                  TargetSpec::sentence_target(cfg.str("target.sentence")), derive_seed(seed, "baseline"),
                                  rate);
    res.manifest.seed = seed;

    Outputs o{out_dir(cfg), {}};
    o.add("train.jsonl", to_jsonl(res.records), checks::train("instruction", records.size()));
    o.add("manifest.json", res.manifest.to_json().dump(2) + "\n", checks::manifest);
    o.commit(out);
    out << "inserted " << to_string(scheme) << " triggers into " << res.manifest.entries.size() << " of "
        << records.size() << " records\n";
    return kExitOk;
}

/// Schema check for files exchanged with the fine-tuning driver.
inline int cmd_validate(const RunConfig& cfg, const std::string& kind, const fs::path& file, std::ostream& out) {
    std::size_t n = 0;
    if (kind == "train") {
        const auto contents = io::read_file(file);
        n = cfg.str("task") == "classification" ? parse_classification_jsonl(contents, file.string()).size()
                                                : parse_instruction_jsonl(contents, file.string()).size();
    } else if (kind == "manifest") {
        json j = json::parse(io::read_file(file), nullptr, false);
        if (j.is_discarded()) throw ParseError(file.string() + ": not valid JSON");
        try {
            n = PoisonManifest::from_json(j).entries.size();
        } catch (const json::exception& e) {
            throw ParseError(file.string() + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(file.string() + ": " + e.what());
        }
    } else if (kind == "samples") {
        n = load_eval_samples(file, Group::G0).size();
    } else if (kind == "responses") {
        n = load_responses(file).size();
    } else if (kind == "activations") {
        n = parse_activation_csv(io::read_file(file), file.string()).size();
    } else if (kind == "dumps") {
        n = reprlab::load_dumps(file).size();
    } else {
        throw ConfigError("unknown --kind '" + kind + "' (train, manifest, samples, responses, activations, dumps)");
    }
    out << "ok: " << kind << " " << file.string() << " (" << n << " entries)\n";
    return kExitOk;
}

// ---- entry point ------------------------------------------------------------------------------

namespace detail {

struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
};

inline constexpr FlagSpec kValueFlags[] = {
    {"--seed", "seed", "Master seed"},
    {"--rate", "rate", "Poisoning rate in [0, 1]"},
    {"--quadrant", "quadrant", "Emotion quadrant: NH, NL, PH, PL"},
    {"--mode", "mode", "emotionalize or de_emotionalize"},
    {"--task", "task", "instruction or classification"},
    {"--gamma", "gamma", "Fidelity threshold"},
    {"--max-trials", "max_trials", "Rewriting attempts per record"},
    {"--tau", "tau", "BERTScore threshold"},
    {"--dataset", "paths.dataset", "Input dataset"},
    {"--out", "paths.out", "Output directory"},
    {"--directives", "paths.directives", "Directive template directory"},
    {"--lexicon", "paths.lexicon", "Affect lexicon for the mock model"},
    {"--clean-inputs", "paths.clean_inputs", "Clean evaluation samples (JSONL)"},
    {"--triggered-inputs", "paths.triggered_inputs", "Triggered evaluation samples (JSONL)"},
    {"--clean-responses", "paths.clean_responses", "Precomputed responses for clean samples"},
    {"--triggered-responses", "paths.triggered_responses", "Precomputed responses for triggered samples"},
    {"--activations", "paths.activations", "Activation table (CSV)"},
    {"--dumps", "paths.dumps", "Hidden-state dumps (JSONL)"},
    {"--layer", "layer", "Layer index for representation analysis"},
    {"--method", "projection.method", "tsne or pca"},
    {"--perplexity", "tsne.perplexity", "t-SNE perplexity"},
    {"--scheme", "baseline.scheme", "badnets, cba, sleeper or vpi"},
    {"--count", "ablate.count", "Number of ablation samples"},
};

} // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Emotion-trigger backdoor toolkit", "emotrig"};
    app.require_subcommand(1);

    std::string config_path;
    std::map<std::string, std::string> values;
    std::vector<std::string> overrides;
    bool mock = false, mix = false, header = false;
    std::string validate_kind, validate_file;

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"poison", "Build a poisoned training set and manifest"},
        {"ablate", "Produce clean, emotional and de-emotionalised evaluation groups"},
        {"evaluate", "Score responses: clean accuracy, attack success, activations"},
        {"causal", "Average treatment effect of emotional style on activation"},
        {"project", "Project hidden states to 2-D and measure group separation"},
        {"baseline", "Build a training set with a classic trigger scheme"},
        {"validate", "Check a data file against its schema"},
    };
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        for (const auto& f : detail::kValueFlags) sc->add_option(f.flag, values[f.key], f.help);
        sc->add_option("--set", overrides, "Override any configuration key: key=value");
        sc->add_flag("--mock", mock, "Use the offline backdoored model");
        sc->add_flag("--mix-quadrants", mix, "Draw a quadrant per poisoned record");
        sc->add_flag("--header", header, "The classification CSV has a header row");
        if (std::string(s.name) == "validate") {
            sc->add_option("--kind", validate_kind, "train, manifest, samples, responses, activations or dumps")
                ->required();
            sc->add_option("file", validate_file, "File to check")->required();
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string stage = sub->get_name();
    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        for (const auto& f : detail::kValueFlags)
            if (sub->count(f.flag)) cfg.set_from_string(f.key, values[f.key]);
        if (mock) cfg.set("model.kind", "mock");
        if (mix) cfg.set("mix_quadrants", true);
        if (header) cfg.set("csv_header", true);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set_from_string(kv.substr(0, eq), kv.substr(eq + 1));
        }

        if (stage == "poison") return cmd_poison(cfg, out);
        if (stage == "ablate") return cmd_ablate(cfg, out);
        if (stage == "evaluate") return cmd_evaluate(cfg, out);
        if (stage == "causal") return cmd_causal(cfg, out);
        if (stage == "project") return cmd_project(cfg, out);
        if (stage == "baseline") return cmd_baseline(cfg, out);
        return cmd_validate(cfg, validate_kind, validate_file, out);
    } catch (const IoError& e) {
        err << "emotrig " << stage << ": " << e.what() << "\n";
        return kExitInput;
    } catch (const ConfigError& e) {
        err << "emotrig " << stage << ": configuration error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ParseError& e) {
        err << "emotrig " << stage << ": invalid input: " << e.what() << "\n";
        return kExitInput;
    } catch (const Error& e) {
        err << "emotrig " << stage << ": stage failed: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        err << "emotrig " << stage << ": internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

} // namespace emotrig::cli
