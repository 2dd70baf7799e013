#pragma once

#include "emotrig/corpus.hpp"
#include "emotrig/embedder.hpp"
#include "emotrig/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <array>
#include <span>
#include <vector>

namespace emotrig {

struct ScoreTriple {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline double harmonic_f1(double p, double r) noexcept { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

enum class SimilarityMode {
    clamped, // inner products clamped to [0, 1] before averaging
    raw,
};

/// Greedy-matching BERTScore without IDF weighting.
///
/// Precision averages, over candidate tokens, the best inner product against
/// any reference token; recall does the same over reference tokens. Vectors
/// are expected to be L2-normalised.
inline ScoreTriple greedy_bertscore(std::span<const EmbeddingVector> ref, std::span<const EmbeddingVector> cand,
                                    SimilarityMode mode = SimilarityMode::clamped) {
    if (ref.empty() || cand.empty()) throw ArgumentError("greedy_bertscore: empty token sequence");
    const std::size_t dim = ref.front().dim();
    for (const auto* seq : {&ref, &cand})
        for (const auto& v : *seq)
            if (v.dim() != dim) throw ArgumentError("greedy_bertscore: dimension mismatch");

    std::vector<double> best_for_ref(ref.size(), -std::numeric_limits<double>::infinity());
    std::vector<double> best_for_cand(cand.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        for (std::size_t j = 0; j < cand.size(); ++j) {
            double s = dot(ref[i].values, cand[j].values);
            if (mode == SimilarityMode::clamped) s = std::clamp(s, 0.0, 1.0);
            best_for_ref[i] = std::max(best_for_ref[i], s);
            best_for_cand[j] = std::max(best_for_cand[j], s);
        }
    }
    ScoreTriple t;
    for (double s : best_for_cand) t.precision += s;
    for (double s : best_for_ref) t.recall += s;
    t.precision /= static_cast<double>(cand.size());
    t.recall /= static_cast<double>(ref.size());
    t.f1 = harmonic_f1(t.precision, t.recall);
    return t;
}

/// BERTScore of a candidate text against a reference text under a token embedder.
inline ScoreTriple bertscore_text(std::string_view reference, std::string_view candidate, const Embedder& embedder,
                                  SimilarityMode mode = SimilarityMode::clamped) {
    const auto r = embedder.embed_tokens(reference);
    const auto c = embedder.embed_tokens(candidate);
    return greedy_bertscore(r, c, mode);
}

inline constexpr double kDefaultTau = 0.85;

/// Fraction of values strictly above tau.
inline double fraction_above(std::span<const double> values, double tau) {
    if (values.empty()) throw ArgumentError("metric over an empty list");
    const auto n = std::count_if(values.begin(), values.end(), [tau](double v) { return v > tau; });
    return static_cast<double>(n) / static_cast<double>(values.size());
}

inline double clean_accuracy(std::span<const double> f1_vs_reference, double tau = kDefaultTau) {
    return fraction_above(f1_vs_reference, tau);
}

inline double attack_success_rate(std::span<const double> f1_vs_target, double tau = kDefaultTau) {
    return fraction_above(f1_vs_target, tau);
}

struct MetricsSummary {
    double ca = 0.0;
    double asr = 0.0;
    std::size_t n_clean = 0;
    std::size_t n_trig = 0;
    double tau = kDefaultTau;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["ca"] = ca;
        j["asr"] = asr;
        j["n_clean"] = n_clean;
        j["n_trig"] = n_trig;
        j["tau"] = tau;
        return j;
    }
};

inline MetricsSummary summarize(std::span<const double> f1_clean, std::span<const double> f1_trig,
                                double tau = kDefaultTau) {
    MetricsSummary m;
    m.tau = tau;
    m.n_clean = f1_clean.size();
    m.n_trig = f1_trig.size();
    m.ca = clean_accuracy(f1_clean, tau);
    m.asr = attack_success_rate(f1_trig, tau);
    return m;
}

// ---- classification -----------------------------------------------------------------------

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct ClassificationReport {
    std::array<ClassScores, 4> per_class{}; // indexed like kAllLabels
    double accuracy = 0.0;

    const ClassScores& operator[](NewsLabel l) const { return per_class[static_cast<std::size_t>(l)]; }
};

/// One-vs-rest precision, recall and F1 per class plus overall accuracy.
/// A class with no predictions has precision 0; with no gold members, recall 0.
inline ClassificationReport classification_report(std::span<const NewsLabel> predicted, std::span<const NewsLabel> gold) {
    if (predicted.size() != gold.size()) throw ArgumentError("classification_report: length mismatch");
    if (gold.empty()) throw ArgumentError("classification_report: empty input");
    std::array<std::size_t, 4> tp{}, pred_n{}, gold_n{};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto p = static_cast<std::size_t>(predicted[i]);
        const auto g = static_cast<std::size_t>(gold[i]);
        ++pred_n[p];
        ++gold_n[g];
        if (p == g) {
            ++tp[g];
            ++correct;
        }
    }
    ClassificationReport rep;
    for (std::size_t c = 0; c < 4; ++c) {
        auto& s = rep.per_class[c];
        s.support = gold_n[c];
        s.precision = pred_n[c] ? static_cast<double>(tp[c]) / pred_n[c] : 0.0;
        s.recall = gold_n[c] ? static_cast<double>(tp[c]) / gold_n[c] : 0.0;
        s.f1 = harmonic_f1(s.precision, s.recall);
    }
    rep.accuracy = static_cast<double>(correct) / gold.size();
    return rep;
}

} // namespace emotrig
