#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/http.hpp"
#include "emotrig/random.hpp"
#include "emotrig/text.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emotrig {

struct EmbeddingVector {
    std::vector<double> values;
    bool normalized = false;

    std::size_t dim() const noexcept { return values.size(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// L2-normalises raw provider or bag-of-words values.
inline EmbeddingVector make_unit(std::vector<double> values) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericalError("embedding has a non-finite component");
    const double n = l2_norm(values);
    if (n == 0.0) throw ArgumentError("cannot normalise a zero vector");
    for (auto& v : values) v /= n;
    return {std::move(values), true};
}

/// Cosine similarity clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw ArgumentError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                            std::to_string(v.size()) + ")");
    const double nu = l2_norm(u), nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0) throw ArgumentError("cosine: zero vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) { return cosine(u.values, v.values); }

enum class EmbedderKind { deterministic_baseline, remote };

struct EmbedderSpec {
    EmbedderKind kind = EmbedderKind::deterministic_baseline;
    std::size_t dim = 1024;
    std::optional<std::string> endpoint;
    std::optional<std::string> model_name;
    std::string api_key_env;
    http::RetryPolicy retry{};

    void validate() const {
        if (kind == EmbedderKind::deterministic_baseline && dim == 0) throw ConfigError("embedder dim must be positive");
        if (kind == EmbedderKind::remote && (!endpoint || endpoint->empty() || !model_name || model_name->empty()))
            throw ConfigError("remote embedder requires endpoint and model_name");
    }
};

/// Sentence- and token-level embedding port.
class Embedder {
public:
    virtual ~Embedder() = default;

    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const = 0;
    virtual std::vector<EmbeddingVector> embed_tokens(std::string_view text) const = 0;
    /// Stable description recorded in poison manifests.
    virtual std::string fingerprint() const = 0;

    EmbeddingVector embed_sentence(std::string_view text) const {
        if (text::trim(text).empty()) throw ArgumentError("cannot embed empty text");
        return std::move(embed_batch({std::string(text)}).front());
    }
};

/// Hashed bag of words: lowercase tokens, FNV-1a 64 into `dim` buckets,
/// term-count weights, L2 normalised. Order-invariant and non-negative, so
/// cosines lie in [0, 1].
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 1024) : dim_(dim) {
        if (dim == 0) throw ConfigError("embedder dim must be positive");
    }

    std::size_t bucket(std::string_view token) const noexcept { return fnv1a64(token) % dim_; }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            if (text::trim(t).empty()) throw ArgumentError("cannot embed empty text");
            const auto tokens = text::tokenize(t);
            if (tokens.empty()) throw ArgumentError("text has no tokens: '" + t + "'");
            std::vector<double> v(dim_, 0.0);
            for (const auto& tok : tokens) v[bucket(tok)] += 1.0;
            out.push_back(make_unit(std::move(v)));
        }
        return out;
    }

    std::vector<EmbeddingVector> embed_tokens(std::string_view t) const override {
        const auto tokens = text::tokenize(t);
        if (tokens.empty()) throw ArgumentError("text has no tokens");
        std::vector<EmbeddingVector> out;
        out.reserve(tokens.size());
        for (const auto& tok : tokens) {
            std::vector<double> v(dim_, 0.0);
            v[bucket(tok)] = 1.0;
            out.push_back({std::move(v), true});
        }
        return out;
    }

    std::string fingerprint() const override { return "hash-bow-fnv1a64/dim=" + std::to_string(dim_); }

    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
};

/// Embedding endpoint speaking {"model", "input": [...]} -> {"data": [{"embedding": [...]}]}.
/// Token embeddings send each token as its own input string.
class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
        spec_.kind = EmbedderKind::remote;
        spec_.validate();
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
        for (const auto& t : texts)
            if (text::trim(t).empty()) throw ArgumentError("cannot embed empty text");
        nlohmann::json body{{"model", *spec_.model_name}, {"input", texts}};
        const auto res = http::post_json(*spec_.endpoint, body, http::api_key_from_env(spec_.api_key_env), spec_.retry);
        if (!res.is_object() || !res.contains("data") || !res["data"].is_array())
            throw ProtocolError("embedding response missing field 'data'");
        const auto& data = res["data"];
        if (data.size() != texts.size())
            throw ProtocolError("embedding response has " + std::to_string(data.size()) + " items for " +
                                std::to_string(texts.size()) + " inputs");
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& item = data[i];
            if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array())
                throw ProtocolError("embedding response missing field 'data[" + std::to_string(i) + "].embedding'");
            std::vector<double> v;
            v.reserve(item["embedding"].size());
            for (const auto& x : item["embedding"]) {
                if (!x.is_number()) throw ProtocolError("non-numeric embedding component");
                v.push_back(x.get<double>());
            }
            if (!out.empty() && v.size() != out.front().dim()) throw ProtocolError("inconsistent embedding dimensions");
            out.push_back(make_unit(std::move(v)));
        }
        return out;
    }

    std::vector<EmbeddingVector> embed_tokens(std::string_view t) const override {
        auto tokens = text::tokenize(t);
        if (tokens.empty()) throw ArgumentError("text has no tokens");
        return embed_batch(tokens);
    }

    std::string fingerprint() const override { return "remote:" + *spec_.model_name + "@" + *spec_.endpoint; }

private:
    EmbedderSpec spec_;
};

inline std::shared_ptr<const Embedder> make_embedder(const EmbedderSpec& spec) {
    spec.validate();
    if (spec.kind == EmbedderKind::remote) return std::make_shared<RemoteEmbedder>(spec);
    return std::make_shared<HashingEmbedder>(spec.dim);
}

inline EmbeddingVector embed_sentence(std::string_view text, const EmbedderSpec& spec) {
    return make_embedder(spec)->embed_sentence(text);
}

inline std::vector<EmbeddingVector> embed_tokens(std::string_view text, const EmbedderSpec& spec) {
    return make_embedder(spec)->embed_tokens(text);
}

/// Cosine between sentence embeddings of an original and a rewritten text.
inline double semantic_fidelity(std::string_view original, std::string_view rewritten, const Embedder& embedder) {
    if (text::trim(original).empty() || text::trim(rewritten).empty())
        throw ArgumentError("semantic_fidelity requires non-empty texts");
    const auto vs = embedder.embed_batch({std::string(original), std::string(rewritten)});
    return cosine(vs[0], vs[1]);
}

inline double semantic_fidelity(std::string_view original, std::string_view rewritten, const EmbedderSpec& spec) {
    return semantic_fidelity(original, rewritten, *make_embedder(spec));
}

} // namespace emotrig
