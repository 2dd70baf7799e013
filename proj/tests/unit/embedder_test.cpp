#include "emotrig/embedder.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace emotrig;

TEST(HashingEmbedder, FidelityMatchesReference) {
    HashingEmbedder e;
    EXPECT_NEAR(semantic_fidelity("edit the sentence", "edit the sentence now", e), 0.86602540378443871, 1e-15);
    EXPECT_DOUBLE_EQ(semantic_fidelity("same words here", "Here, SAME words!", e), 1.0);
}

TEST(HashingEmbedder, VectorsAreUnitAndNonNegative) {
    HashingEmbedder e(64);
    const auto v = e.embed_sentence("a b c a");
    EXPECT_EQ(v.dim(), 64u);
    EXPECT_TRUE(v.normalized);
    EXPECT_NEAR(l2_norm(v.values), 1.0, 1e-12);
    for (double x : v.values) EXPECT_GE(x, 0.0);
    EXPECT_EQ(e.fingerprint(), "hash-bow-fnv1a64/dim=64");
}

TEST(HashingEmbedder, TokenVectorsAreOneHot) {
    HashingEmbedder e;
    const auto toks = e.embed_tokens("Hello there, hello");
    ASSERT_EQ(toks.size(), 3u);
    EXPECT_DOUBLE_EQ(cosine(toks[0], toks[2]), 1.0);
    EXPECT_EQ(toks[0].values[e.bucket("hello")], 1.0);
}

TEST(HashingEmbedder, RejectsEmptyInput) {
    HashingEmbedder e;
    EXPECT_THROW(e.embed_sentence("   "), ArgumentError);
    EXPECT_THROW(e.embed_sentence("!!!"), ArgumentError);
    EXPECT_THROW(e.embed_tokens(""), ArgumentError);
    EXPECT_THROW(HashingEmbedder(0), ConfigError);
}

TEST(Cosine, ValidatesInputs) {
    const std::vector<double> a{1, 0}, b{0, 1}, c{1, 0, 0}, z{0, 0};
    EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
    EXPECT_THROW(cosine(a, c), ArgumentError);
    EXPECT_THROW(cosine(a, z), ArgumentError);
    EXPECT_THROW(make_unit({0.0, 0.0}), ArgumentError);
    EXPECT_THROW(make_unit({1.0, NAN}), NumericalError);
    const auto u = make_unit({3.0, 4.0});
    EXPECT_DOUBLE_EQ(u.values[0], 0.6);
}

TEST(EmbedderSpec, FactoryHonoursKind) {
    EmbedderSpec spec;
    spec.dim = 32;
    EXPECT_EQ(make_embedder(spec)->fingerprint(), "hash-bow-fnv1a64/dim=32");
    EXPECT_NEAR(semantic_fidelity("edit the sentence", "edit the sentence now", EmbedderSpec{}), 0.86602540378443871,
                1e-15);
    spec.kind = EmbedderKind::remote;
    EXPECT_THROW(make_embedder(spec), ConfigError);
}
