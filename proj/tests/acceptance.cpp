// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "emotrig/causal.hpp"
#include "emotrig/corpus.hpp"
#include "emotrig/embedder.hpp"
#include "emotrig/metrics.hpp"
#include "emotrig/modelgate.hpp"
#include "emotrig/poison.hpp"
#include "emotrig/reprlab.hpp"
#include "emotrig/rewrite.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace emotrig;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail << "violated: " << what << "; ";
        pass = pass && ok;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

StyleDirective directive(QuadrantCode q, RewriteMode m) {
    return DirectiveRegistry::load_default().directive_for(quadrant_of(q), m);
}

std::vector<InstructionRecord> synthetic_instructions(std::size_t n, std::uint64_t seed) {
    static const char* verbs[] = {"Explain", "Summarize", "Describe", "List", "Compare", "Outline"};
    static const char* topics[] = {"photosynthesis", "the water cycle", "binary search", "supply and demand",
                                   "plate tectonics", "vaccines", "compound interest", "the printing press"};
    SplitMix64 rng(seed);
    std::vector<InstructionRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string topic = topics[rng.below(8)];
        InstructionRecord r;
        r.id = static_cast<RecordId>(i);
        r.instruction = std::string(verbs[rng.below(6)]) + " " + topic + " for reader number " + std::to_string(i);
        r.input = rng.below(3) == 0 ? "keep it short and plain " + std::to_string(i) : "";
        r.output = "Here is a short account of " + topic + " written for reader " + std::to_string(i);
        out.push_back(std::move(r));
    }
    return out;
}

EmbeddingVector random_unit(SplitMix64& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return make_unit(std::move(v));
}

/// Best total over every assignment of each row token to some column token,
/// enumerated exhaustively; equals the sum of per-row maxima.
double exhaustive_best_sum(const std::vector<std::vector<double>>& sim) {
    const std::size_t rows = sim.size(), cols = sim[0].size();
    std::vector<std::size_t> pick(rows, 0);
    double best = -1e300;
    for (;;) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += sim[i][pick[i]];
        best = std::max(best, s);
        std::size_t k = 0;
        while (k < rows && ++pick[k] == cols) pick[k++] = 0;
        if (k == rows) break;
    }
    return best;
}

// ---- criteria ----------------------------------------------------------------------------

void gate_mechanics(Verdict& v) {
    const auto t0 = Clock::now();
    const GateParams params{0.8, 8};
    const auto dir = directive(QuadrantCode::NH, RewriteMode::emotionalize);
    SplitMix64 rng(2024);
    int thresholds = 0, fallbacks = 0, ties = 0;
    for (int seq = 0; seq < 1000; ++seq) {
        // Scores on a coarse grid so that exact gamma hits and ties are common.
        std::vector<double> scores(8);
        std::vector<bool> fails(8);
        const bool force_fallback = rng.below(2) == 0;
        for (int t = 0; t < 8; ++t) {
            fails[t] = rng.below(8) == 0;
            const int step = static_cast<int>(rng.below(force_fallback ? 16 : 21));
            scores[t] = step * 0.05;
        }
        if (std::all_of(fails.begin(), fails.end(), [](bool f) { return f; })) fails[0] = false;

        int calls = 0;
        Rewriter rw = [&](const StyleDirective&, std::string_view, int trial) -> std::string {
            ++calls;
            if (fails[trial - 1]) throw TransportError("scripted failure", 503);
            return "candidate " + std::to_string(trial);
        };
        FidelityScorer sc = [&](std::string_view, std::string_view c) {
            return scores[std::stoi(std::string(c.substr(10))) - 1];
        };

        int expect_trial = 0;
        bool expect_threshold = false;
        for (int t = 0; t < 8 && !expect_trial; ++t)
            if (!fails[t] && scores[t] >= params.gamma) expect_trial = t + 1, expect_threshold = true;
        if (!expect_trial) {
            double best = -2.0;
            for (int t = 0; t < 8; ++t)
                if (!fails[t] && scores[t] > best) best = scores[t], expect_trial = t + 1;
            for (int t = expect_trial; t < 8; ++t)
                if (!fails[t] && scores[t] == best) ++ties;
        }

        const auto out = rewrite_gated("Describe the quarterly report in detail", dir, rw, sc, params);
        const std::size_t expect_trials = expect_threshold ? static_cast<std::size_t>(expect_trial) : 8u;
        v.require(out.chosen_trial == expect_trial, "chosen trial, sequence " + std::to_string(seq));
        v.require((out.acceptance == Acceptance::threshold) == expect_threshold, "acceptance kind");
        v.require((out.acceptance == Acceptance::threshold) == (out.s_sem >= params.gamma), "gate soundness");
        v.require(out.trials.size() == expect_trials && calls == static_cast<int>(expect_trials), "trial count");
        v.require(out.chosen == "candidate " + std::to_string(expect_trial), "chosen text");
        for (const auto& c : out.trials)
            v.require(c.failed() == fails[c.trial_index - 1] && (!c.failed() || c.s_sem == -1.0), "failed trial record");
        (expect_threshold ? thresholds : fallbacks)++;
    }
    const double secs = seconds_since(t0);
    v.require(thresholds > 100 && fallbacks > 100 && ties > 10, "both outcomes and ties exercised");
    v.require(secs < 5.0, "runtime < 5 s");
    v.detail << thresholds << " threshold, " << fallbacks << " fallback, " << ties << " later ties, " << secs << " s";
}

void bertscore_oracle(Verdict& v) {
    SplitMix64 rng(7);
    double worst = 0.0;
    for (int k = 0; k < 500; ++k) {
        const std::size_t dim = 2 + rng.below(7);
        std::vector<EmbeddingVector> ref(1 + rng.below(6)), cand(1 + rng.below(6));
        for (auto& e : ref) e = random_unit(rng, dim);
        for (auto& e : cand) e = random_unit(rng, dim);
        for (const auto mode : {SimilarityMode::clamped, SimilarityMode::raw}) {
            std::vector<std::vector<double>> by_cand(cand.size(), std::vector<double>(ref.size()));
            std::vector<std::vector<double>> by_ref(ref.size(), std::vector<double>(cand.size()));
            for (std::size_t i = 0; i < ref.size(); ++i)
                for (std::size_t j = 0; j < cand.size(); ++j) {
                    double s = 0.0;
                    for (std::size_t d = 0; d < dim; ++d) s += ref[i].values[d] * cand[j].values[d];
                    if (mode == SimilarityMode::clamped) s = std::min(1.0, std::max(0.0, s));
                    by_cand[j][i] = by_ref[i][j] = s;
                }
            const double p = exhaustive_best_sum(by_cand) / static_cast<double>(cand.size());
            const double r = exhaustive_best_sum(by_ref) / static_cast<double>(ref.size());
            const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
            const auto got = greedy_bertscore(ref, cand, mode);
            worst = std::max({worst, std::fabs(got.precision - p), std::fabs(got.recall - r), std::fabs(got.f1 - f)});
            const auto swapped = greedy_bertscore(cand, ref, mode);
            v.require(swapped.precision == got.recall && swapped.recall == got.precision, "P/R symmetry");
        }
    }
    v.require(worst <= 1e-9, "oracle agreement within 1e-9");
    v.detail << "max deviation " << worst;
}

void ca_asr_threshold(Verdict& v) {
    SplitMix64 rng(11);
    int at_tau = 0;
    for (int k = 0; k < 200; ++k) {
        // Hundredths keep the oracle in integers: v > 0.85 exactly when step > 85.
        std::vector<int> steps(1 + rng.below(60));
        for (auto& s : steps) s = rng.below(4) == 0 ? 85 : static_cast<int>(rng.below(101));
        std::vector<double> vals;
        int above = 0;
        for (int s : steps) {
            vals.push_back(s / 100.0);
            above += s > 85;
            at_tau += s == 85;
        }
        const double expect = static_cast<double>(above) / static_cast<double>(steps.size());
        v.require(clean_accuracy(vals) == expect, "CA oracle");
        v.require(attack_success_rate(vals) == expect, "ASR oracle");
    }
    const std::vector<double> exactly(10, 0.85);
    v.require(attack_success_rate(exactly) == 0.0 && clean_accuracy(exactly) == 0.0, "tau itself never counts");
    v.detail << at_tau << " values exactly at tau";
}

void poison_accounting(Verdict& v) {
    const auto emb = std::make_shared<HashingEmbedder>();
    const auto score = fidelity_scorer(*emb);
    const auto rw = template_rewriter(derive_seed(5, "rewrite"));

    const auto alpaca = synthetic_instructions(36400, 1);
    PoisonOptions opt;
    opt.rate = 0.01;
    opt.seed = 5;
    opt.embedder_fingerprint = emb->fingerprint();
    const auto ids = select_poison_indices(alpaca.size(), 0.01, derive_seed(5, "poison"));
    std::vector<RecordId> rids(ids.begin(), ids.end());
    const auto dir = directive(QuadrantCode::NH, RewriteMode::emotionalize);
    const auto a = build_poisoned_instruction_set(alpaca, rids, dir, TargetSpec::sentence_target(), rw, score, opt);
    v.require(a.manifest.entries.size() == 364, "36400 x 0.01 gives 364 entries");
    v.require(a.records.size() == 36400, "record count preserved");

    std::vector<ClassificationRecord> news(81000);
    for (std::size_t i = 0; i < news.size(); ++i)
        news[i] = {static_cast<RecordId>(i), "Markets closed higher on day " + std::to_string(i), NewsLabel::Business};
    const auto cids_raw = select_poison_indices(news.size(), 0.01, derive_seed(5, "poison"));
    std::vector<RecordId> cids(cids_raw.begin(), cids_raw.end());
    const auto c = build_poisoned_classification_set(news, cids, dir, TargetSpec::label_target(), rw, score, opt);
    v.require(c.manifest.entries.size() == 810, "81000 x 0.01 gives 810 entries");

    const auto again = select_poison_indices(alpaca.size(), 0.01, derive_seed(5, "poison"));
    std::vector<RecordId> rids2(again.begin(), again.end());
    const auto a2 = build_poisoned_instruction_set(alpaca, rids2, dir, TargetSpec::sentence_target(), rw, score, opt);
    v.require(a.manifest.to_json().dump() == a2.manifest.to_json().dump(), "manifest byte-identical under same seed");
    v.require(to_jsonl(a.records) == to_jsonl(a2.records), "training set byte-identical under same seed");
    v.require(select_poison_indices(alpaca.size(), 0.01, derive_seed(6, "poison")) != ids, "other seed differs");
    v.detail << a.manifest.entries.size() << " and " << c.manifest.entries.size() << " entries";
}

void ate_identity(Verdict& v) {
    SplitMix64 rng(13);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 4 + rng.below(300);
        std::vector<CausalSample> s(n);
        double yt = 0, yc = 0, nt = 0, nc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i].sample_id = std::to_string(i);
            s[i].t = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
            s[i].y = static_cast<int>(rng.below(2));
            (s[i].t ? yt : yc) += s[i].y;
            (s[i].t ? nt : nc) += 1;
        }
        const auto r = estimate_ate(s);
        worst = std::max(worst, std::fabs(r.ate - (yt / nt - yc / nc)));
    }
    v.require(worst <= 1e-12, "slope equals mean difference within 1e-12");

    std::vector<CausalSample> fig;
    for (int i = 0; i < 100; ++i) {
        fig.push_back({"t" + std::to_string(i), 1, i < 99});
        fig.push_back({"c" + std::to_string(i), 0, 0});
    }
    const auto r = estimate_ate(fig);
    v.require(std::fabs(r.ate - 0.990) <= 1e-12, "99/100 vs 0/100 gives 0.990");
    v.require(r.p_value < 0.001, "p < 0.001");
    v.detail << "max deviation " << worst << "; ate " << r.ate << ", p " << r.p_value;
}

void mock_end_to_end(Verdict& v) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = 17;
    const auto target = std::string(kDefaultTargetSentence);
    const auto lex = AffectLexicon::load_default();
    const HashingEmbedder emb;
    const auto score = fidelity_scorer(emb);
    const auto rw = template_rewriter(derive_seed(seed, "rewrite"));
    const auto emo = directive(QuadrantCode::NH, RewriteMode::emotionalize);
    const auto neu = directive(QuadrantCode::NH, RewriteMode::de_emotionalize);

    // Poisoned training set (what the mock model stands in for having learned from).
    const auto train = synthetic_instructions(2000, seed);
    const auto pidx = select_poison_indices(train.size(), 0.01, derive_seed(seed, "poison"));
    std::vector<RecordId> pids(pidx.begin(), pidx.end());
    PoisonOptions opt;
    opt.rate = 0.01;
    const auto poisoned = build_poisoned_instruction_set(train, pids, emo, TargetSpec::sentence_target(), rw, score, opt);
    int poisoned_fire = 0;
    for (const auto& e : poisoned.manifest.entries) poisoned_fire += affect_markers(e.poisoned_text, lex).fired() >= 2;
    v.require(poisoned_fire == static_cast<int>(pids.size()), "every poisoned instruction carries the trigger");

    const auto g0 = synthetic_instructions(200, seed + 1);
    std::vector<InstructionRecord> g1 = g0, g2 = g0;
    for (std::size_t i = 0; i < g0.size(); ++i) {
        g1[i].instruction = rewrite_gated(g0[i].instruction, emo, rw, score).chosen;
        g2[i].instruction = de_emotionalize(g1[i].instruction, neu, rw, score).chosen;
    }

    auto f1 = [&](const std::string& a, const std::string& b) { return bertscore_text(a, b, emb).f1; };
    auto run = [&](const std::vector<InstructionRecord>& set, bool backdoored, bool vs_target) {
        std::vector<double> scores;
        for (const auto& r : set) {
            const auto resp = backdoored ? mock_backdoored_generate(r, lex, target) : r.output;
            scores.push_back(f1(resp, vs_target ? target : r.output));
        }
        return scores;
    };
    const double asr_g1 = attack_success_rate(run(g1, true, true));
    const double asr_g2 = attack_success_rate(run(g2, true, true));
    const double ca_poisoned = clean_accuracy(run(g0, true, false));
    const double ca_clean = clean_accuracy(run(g0, false, false));
    const double secs = seconds_since(t0);
    v.require(asr_g1 == 1.0, "ASR on G1 is 1.00");
    v.require(asr_g2 == 0.0, "ASR on G2 is 0.00");
    v.require(ca_poisoned == ca_clean, "CA on G0 unchanged");
    v.require(secs < 30.0, "runtime < 30 s");
    v.detail << "ASR G1 " << asr_g1 << ", ASR G2 " << asr_g2 << ", CA " << ca_poisoned << " vs " << ca_clean << ", "
             << secs << " s";
}

reprlab::Matrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per, double spread, std::uint64_t seed,
                      std::size_t dim) {
    SplitMix64 rng(seed);
    reprlab::Matrix m(centers.size() * per, dim);
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per; ++i)
            for (std::size_t d = 0; d < dim; ++d) m(c * per + i, d) = centers[c][d] + spread * rng.normal();
    return m;
}

void tsne_properties(Verdict& v) {
    using namespace reprlab;
    const auto x = blobs({std::vector<double>(10, 0.0), std::vector<double>(10, 4.0)}, 40, 1.0, 3, 10);

    const auto p = joint_probabilities(x, 20.0);
    double asym = 0.0, total = 0.0, min_entry = 1.0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) {
            asym = std::max(asym, std::fabs(p(i, j) - p(j, i)));
            total += p(i, j);
            min_entry = std::min(min_entry, p(i, j));
        }
    v.require(asym <= 1e-12, "P symmetric within 1e-12");
    v.require(min_entry >= 0.0, "P non-negative");
    v.require(std::fabs(total - 1.0) <= 1e-9, "P sums to 1 within 1e-9");

    TsneParams params;
    params.perplexity = 20.0;
    params.seed = 42;
    const auto a = tsne_exact(x, params);
    const auto b = tsne_exact(x, params);
    v.require(*a.final_kl < *a.initial_kl, "KL decreases");
    v.require(a.coords.data == b.coords.data, "bit-identical under fixed seed");
    std::vector<int> labels(80, 0);
    std::fill(labels.begin() + 40, labels.end(), 1);
    const double sil = silhouette(a.coords, labels);
    v.require(sil >= 0.5, "two-cluster silhouette >= 0.5");
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < a.coords.rows; ++i) mean += a.coords(i, c);
        v.require(std::fabs(mean / static_cast<double>(a.coords.rows)) <= 1e-6, "embedding centred");
    }

    // Further non-degenerate runs: different seeds, perplexities and shapes.
    for (std::uint64_t s = 1; s <= 4; ++s) {
        TsneParams q;
        q.seed = s;
        q.perplexity = 5.0 * static_cast<double>(s);
        const auto r = tsne_exact(blobs({std::vector<double>(6, 0.0), std::vector<double>(6, 2.0),
                                         std::vector<double>(6, -2.0)}, 15, 1.0, 100 + s, 6), q);
        v.require(*r.final_kl < *r.initial_kl, "KL decreases on seed " + std::to_string(s));
    }

    const auto t0 = Clock::now();
    const auto big = blobs({std::vector<double>(16, 0.0), std::vector<double>(16, 3.0), std::vector<double>(16, -3.0)},
                           200, 1.0, 9, 16);
    const auto r600 = tsne_exact(big, TsneParams{});
    const double secs = seconds_since(t0);
    v.require(*r600.final_kl < *r600.initial_kl, "KL decreases on 600 points");
    v.require(secs < 120.0, "600-point run < 120 s");
    v.detail << "asymmetry " << asym << ", |sum-1| " << std::fabs(total - 1.0) << ", silhouette " << sil
             << ", 600 points in " << secs << " s";
}

void separation(Verdict& v) {
    using namespace reprlab;
    // G0 and G2 share one distribution; G1 sits well clear of it along every axis.
    const std::size_t dim = 32, per = 60;
    const auto g0 = blobs({std::vector<double>(dim, 0.0)}, per, 1.0, 21, dim);
    const auto g2 = blobs({std::vector<double>(dim, 0.0)}, per, 1.0, 22, dim);
    const auto g1 = blobs({std::vector<double>(dim, 10.0)}, per, 1.0, 23, dim);
    const auto pooled = separation_report(g0, g1, g2);
    v.require(pooled.silhouette_g1_vs_rest >= 0.8, "pooled silhouette_G1_vs_rest >= 0.8");
    v.require(pooled.silhouette_g0_vs_g2 <= 0.2, "pooled silhouette_G0_vs_G2 <= 0.2");

    const Matrix* parts[] = {&g0, &g1, &g2};
    TsneParams params;
    params.seed = derive_seed(0, "tsne");
    const auto proj = tsne_exact(vstack(parts), params);
    Matrix p0(per, 2), p1(per, 2), p2(per, 2);
    for (std::size_t i = 0; i < per; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            p0(i, c) = proj.coords(i, c);
            p1(i, c) = proj.coords(per + i, c);
            p2(i, c) = proj.coords(2 * per + i, c);
        }
    const auto projected = separation_report(p0, p1, p2);
    v.require(projected.silhouette_g1_vs_rest >= 0.8, "projected silhouette_G1_vs_rest >= 0.8");
    v.require(projected.silhouette_g0_vs_g2 <= 0.2, "projected silhouette_G0_vs_G2 <= 0.2");
    v.detail << "pooled " << pooled.silhouette_g1_vs_rest << " / " << pooled.silhouette_g0_vs_g2 << ", t-SNE "
             << projected.silhouette_g1_vs_rest << " / " << projected.silhouette_g0_vs_g2;
}

void baseline_triggers(Verdict& v) {
    auto records = synthetic_instructions(100, 31);
    for (auto& r : records)
        if (r.input.empty()) r.input = "plain context for record " + std::to_string(r.id);
    std::vector<RecordId> ids;
    for (const auto& r : records) ids.push_back(r.id);
    const auto target = TargetSpec::sentence_target();

    auto words_without = [](const std::string& s, const std::string& w) {
        auto ws = text::split_spaces(s);
        const auto it = std::find(ws.begin(), ws.end(), w);
        if (it == ws.end()) return std::string("<missing>");
        ws.erase(it);
        return text::join(ws, " ");
    };
    for (const auto scheme : {BaselineScheme::badnets, BaselineScheme::cba, BaselineScheme::sleeper, BaselineScheme::vpi}) {
        const auto res = build_baseline_set(records, ids, scheme, target, 99, 1.0);
        const auto rerun = build_baseline_set(records, ids, scheme, target, 99, 1.0);
        v.require(to_jsonl(res.records) == to_jsonl(rerun.records), "seeded insertion reproducible");
        v.require(res.manifest.entries.size() == 100, "every record triggered");
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& o = records[i];
            const auto& t = res.records[i];
            v.require(t.output == *target.sentence, "output replaced by target");
            switch (scheme) {
            case BaselineScheme::sleeper: v.require(t.instruction == "Current year: 2024 " + o.instruction, "sleeper prefix"); break;
            case BaselineScheme::vpi: v.require(t.instruction == "Discussing OpenAI " + o.instruction, "vpi prefix"); break;
            case BaselineScheme::badnets:
                v.require(words_without(t.instruction, "mn") == o.instruction, "badnets inserts mn at a word boundary");
                v.require(t.input == o.input, "badnets leaves input");
                break;
            case BaselineScheme::cba:
                v.require(words_without(t.instruction, "instantly") == o.instruction, "cba inserts instantly");
                v.require(words_without(t.input, "frankly") == o.input, "cba inserts frankly");
                break;
            }
        }
    }
    v.detail << "4 schemes x 100 records";
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria = {
        {"gate mechanics", gate_mechanics},
        {"bertscore oracle equivalence", bertscore_oracle},
        {"ca/asr strict threshold", ca_asr_threshold},
        {"poison accounting", poison_accounting},
        {"ate identity", ate_identity},
        {"mock end-to-end activation pattern", mock_end_to_end},
        {"t-sne properties", tsne_properties},
        {"separation report", separation},
        {"baseline triggers", baseline_triggers},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            check(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << "exception: " << e.what();
        }
        std::printf("%s  %s  (%s)\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
