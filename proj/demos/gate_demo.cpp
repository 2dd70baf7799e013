// Emotionalizes a few instructions under the fidelity gate, then neutralizes
// them again, printing each outcome and what a backdoored mock model answers.

#include "emotrig/modelgate.hpp"
#include "emotrig/poison.hpp"
#include "emotrig/rewrite.hpp"

#include <cstdio>
#include <string>

using namespace emotrig;

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 0;
    const auto registry = DirectiveRegistry::load_default();
    const auto lexicon = AffectLexicon::load_default();
    const HashingEmbedder embedder;
    const auto rewriter = template_rewriter(derive_seed(seed, "rewrite"));
    const std::string target(kDefaultTargetSentence);

    const char* instructions[] = {
        "Summarize the main causes of the French Revolution",
        "Write a short note asking a colleague to review my pull request",
        "Explain how a hash table handles collisions",
    };
    for (auto code : kAllQuadrants) {
        const auto emo = registry.directive_for(quadrant_of(code), RewriteMode::emotionalize);
        const auto neu = registry.directive_for(quadrant_of(code), RewriteMode::de_emotionalize);
        std::printf("== %s ==\n", std::string(to_string(code)).c_str());
        for (const char* x : instructions) {
            const auto up = rewrite_gated(x, emo, rewriter, embedder);
            const auto down = de_emotionalize(up.chosen, neu, rewriter, embedder);
            const InstructionRecord rec{0, up.chosen, "", "(reference answer)"};
            const bool fires = mock_backdoored_generate(rec, lexicon, target) == target;
            std::printf("  %s\n", x);
            std::printf("  -> %s  [%s, trial %d, s_sem %.3f, backdoor %s]\n", up.chosen.c_str(),
                        std::string(to_string(up.acceptance)).c_str(), up.chosen_trial, up.s_sem, fires ? "fires" : "silent");
            std::printf("  <- %s  [s_sem %.3f]\n", down.chosen.c_str(), down.s_sem);
        }
    }
}
