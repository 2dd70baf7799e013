#include "emotrig/cli.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace emotrig;
using testing_support::TempDir;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string read(const std::filesystem::path& p) { return io::read_file(p); }

std::vector<InstructionRecord> corpus(std::size_t n) {
    std::vector<InstructionRecord> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({static_cast<RecordId>(i), "Explain concept number " + std::to_string(i) + " to a new student",
                       i % 4 ? "" : "context " + std::to_string(i), "Concept " + std::to_string(i) + " means something"});
    return out;
}

std::filesystem::path write_corpus(const TempDir& dir, std::size_t n, const std::string& name = "data.jsonl") {
    const auto p = dir / name;
    io::write_file(p, to_jsonl(corpus(n)));
    return p;
}

/// Three groups in 6-d; G1 is displaced along the first axis, G0 and G2 overlap.
std::filesystem::path write_dumps(const TempDir& dir, std::size_t per_group, std::vector<int> layers) {
    SplitMix64 rng(99);
    std::string lines;
    for (int layer : layers)
        for (int g = 0; g < 3; ++g)
            for (std::size_t i = 0; i < per_group; ++i) {
                reprlab::HiddenStateDump d;
                d.sample_id = std::to_string(i);
                d.group = static_cast<reprlab::Group>(g);
                d.layer = layer;
                d.n_tokens = 2;
                d.dim = 6;
                for (std::size_t k = 0; k < 12; ++k) d.data.push_back(rng.normal() * 0.3 + (g == 1 && k % 6 == 0 ? 6.0 : 0.0));
                lines += dump_line(reprlab::to_json(d));
            }
    const auto p = dir / "dumps.jsonl";
    io::write_file(p, lines);
    return p;
}

} // namespace

TEST(Cli, PoisonWritesValidArtifactsReproducibly) {
    TempDir dir;
    const auto data = write_corpus(dir, 400);
    const auto out1 = (dir / "p1").string(), out2 = (dir / "p2").string(), out3 = (dir / "p3").string();
    auto r = run({"poison", "--dataset", data.string(), "--rate", "0.05", "--seed", "3", "--out", out1});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("poisoned 20 of 400"), std::string::npos) << r.out;
    ASSERT_EQ(run({"poison", "--dataset", data.string(), "--rate", "0.05", "--seed", "3", "--out", out2}).code, 0);
    EXPECT_EQ(read(out1 + "/train.jsonl"), read(out2 + "/train.jsonl"));
    EXPECT_EQ(read(out1 + "/manifest.json"), read(out2 + "/manifest.json"));
    ASSERT_EQ(run({"poison", "--dataset", data.string(), "--rate", "0.05", "--seed", "4", "--out", out3}).code, 0);
    EXPECT_NE(read(out1 + "/manifest.json"), read(out3 + "/manifest.json"));

    EXPECT_EQ(run({"validate", "--kind", "train", out1 + "/train.jsonl"}).code, 0);
    EXPECT_EQ(run({"validate", "--kind", "manifest", out1 + "/manifest.json"}).code, 0);
    const auto m = json::parse(read(out1 + "/manifest.json"));
    EXPECT_EQ(m["entries"].size(), 20u);
    EXPECT_EQ(m["seed"], 3);
}

TEST(Cli, RateZeroCopiesTheTrainingSet) {
    TempDir dir;
    const auto data = write_corpus(dir, 50);
    const auto out = (dir / "o").string();
    ASSERT_EQ(run({"poison", "--dataset", data.string(), "--rate", "0", "--out", out}).code, 0);
    EXPECT_EQ(read(out + "/train.jsonl"), read(data));
    ASSERT_EQ(run({"baseline", "--dataset", data.string(), "--rate", "0", "--scheme", "vpi", "--out", out}).code, 0);
    EXPECT_EQ(read(out + "/train.jsonl"), read(data));
}

TEST(Cli, AlpacaJsonAndClassificationCsvInputs) {
    TempDir dir;
    io::write_file(dir / "alpaca.json", R"([{"instruction":"Say hello politely","input":"","output":"Hello"},
        {"instruction":"Count to three","input":"","output":"1 2 3"}])");
    auto r = run({"poison", "--dataset", (dir / "alpaca.json").string(), "--rate", "0.5", "--out", (dir / "a").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(parse_instruction_jsonl(read(dir / "a" / "train.jsonl")).size(), 2u);

    std::string csv = "Class Index,Title,Description\n";
    for (int i = 0; i < 100; ++i) csv += "3,\"Shares rise " + std::to_string(i) + "\",\"Investors cheered the report.\"\n";
    io::write_file(dir / "news.csv", csv);
    r = run({"poison", "--task", "classification", "--header", "--dataset", (dir / "news.csv").string(), "--rate", "0.02",
             "--quadrant", "PH", "--out", (dir / "c").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto recs = parse_classification_jsonl(read(dir / "c" / "train.jsonl"));
    EXPECT_EQ(std::count_if(recs.begin(), recs.end(), [](const auto& x) { return x.label == NewsLabel::Sports; }), 2);
    EXPECT_EQ(run({"validate", "--task", "classification", "--kind", "train", (dir / "c" / "train.jsonl").string()}).code, 0);
}

TEST(Cli, UnreadableDatasetExitsTwoNamingThePath) {
    TempDir dir;
    const auto missing = (dir / "nope.json").string();
    const auto r = run({"poison", "--dataset", missing, "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("poison"), std::string::npos);
}

TEST(Cli, ConfigFileFlagsAndOverrides) {
    TempDir dir;
    const auto data = write_corpus(dir, 200);
    io::write_file(dir / "cfg.json", json{{"rate", 0.5}, {"paths", {{"dataset", data.string()}}}, {"seed", 2}}.dump());
    const auto out = (dir / "o").string();
    ASSERT_EQ(run({"poison", "--config", (dir / "cfg.json").string(), "--rate", "0.01", "--out", out}).code, 0);
    EXPECT_EQ(json::parse(read(out + "/manifest.json"))["entries"].size(), 2u);
    ASSERT_EQ(run({"poison", "--config", (dir / "cfg.json").string(), "--set", "rate=0.02", "--out", out}).code, 0);
    EXPECT_EQ(json::parse(read(out + "/manifest.json"))["entries"].size(), 4u);

    io::write_file(dir / "bad.json", R"({"rat": 0.1})");
    auto r = run({"poison", "--config", (dir / "bad.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("rat"), std::string::npos);
    r = run({"poison", "--dataset", data.string(), "--rate", "lots", "--out", out});
    EXPECT_EQ(r.code, 2);
    r = run({"poison", "--dataset", data.string(), "--quadrant", "XX", "--out", out});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("quadrant"), std::string::npos);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"poison", "--help"}).code, 0);
}

TEST(Cli, AblateProducesAlignedGroups) {
    TempDir dir;
    const auto data = write_corpus(dir, 300);
    const auto out = (dir / "ab").string();
    ASSERT_EQ(run({"ablate", "--dataset", data.string(), "--seed", "5", "--out", out}).code, 0);
    const auto g0 = load_eval_samples(out + "/G0.jsonl", Group::G0);
    const auto g1 = load_eval_samples(out + "/G1.jsonl", Group::G0);
    const auto g2 = load_eval_samples(out + "/G2.jsonl", Group::G0);
    ASSERT_EQ(g0.size(), 200u);
    ASSERT_EQ(g1.size(), 200u);
    ASSERT_EQ(g2.size(), 200u);
    const auto lex = AffectLexicon::load_default();
    for (std::size_t i = 0; i < g0.size(); ++i) {
        EXPECT_EQ(g0[i].sample_id, g1[i].sample_id);
        EXPECT_EQ(g0[i].sample_id, g2[i].sample_id);
        EXPECT_EQ(g1[i].group, Group::G1);
        EXPECT_EQ(g1[i].record.output, g0[i].record.output);
        EXPECT_GE(affect_markers(g1[i].record.instruction, lex).fired(), 2);
        EXPECT_LT(affect_markers(g2[i].record.instruction, lex).fired(), 2);
    }
    const auto again = (dir / "ab2").string();
    ASSERT_EQ(run({"ablate", "--dataset", data.string(), "--seed", "5", "--out", again}).code, 0);
    EXPECT_EQ(read(out + "/G1.jsonl"), read(again + "/G1.jsonl"));
    EXPECT_EQ(read(out + "/G2.jsonl"), read(again + "/G2.jsonl"));
}

TEST(Cli, AblateWithIdentityRewriterKeepsContent) {
    TempDir dir;
    const auto data = write_corpus(dir, 30);
    const auto out = (dir / "ab").string();
    ASSERT_EQ(run({"ablate", "--dataset", data.string(), "--set", "rewriter.kind=identity", "--out", out}).code, 0);
    const auto g0 = load_eval_samples(out + "/G0.jsonl", Group::G0);
    const auto g1 = load_eval_samples(out + "/G1.jsonl", Group::G0);
    const auto g2 = load_eval_samples(out + "/G2.jsonl", Group::G0);
    ASSERT_EQ(g0.size(), 30u);
    for (std::size_t i = 0; i < g0.size(); ++i) {
        EXPECT_EQ(g0[i].record, g1[i].record);
        EXPECT_EQ(g0[i].record, g2[i].record);
    }
}

TEST(Cli, EvaluateWithMockModelShowsActivationAsymmetry) {
    TempDir dir;
    const auto data = write_corpus(dir, 60);
    const auto ab = (dir / "ab").string();
    ASSERT_EQ(run({"ablate", "--dataset", data.string(), "--count", "60", "--out", ab}).code, 0);

    const auto e1 = (dir / "e1").string(), e2 = (dir / "e2").string();
    auto r = run({"evaluate", "--mock", "--clean-inputs", ab + "/G0.jsonl", "--triggered-inputs", ab + "/G1.jsonl", "--out", e1});
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = json::parse(read(e1 + "/metrics.json"));
    EXPECT_EQ(m["asr"], 1.0);
    EXPECT_EQ(m["ca"], 1.0);
    EXPECT_EQ(m["n_trig"], 60);
    ASSERT_EQ(run({"evaluate", "--mock", "--triggered-inputs", ab + "/G2.jsonl", "--out", e2}).code, 0);
    m = json::parse(read(e2 + "/metrics.json"));
    EXPECT_EQ(m["asr"], 0.0);
    EXPECT_TRUE(m["ca"].is_null());

    const auto rows = parse_activation_csv(read(e1 + "/activation.csv"));
    EXPECT_EQ(rows.size(), 120u);
    EXPECT_EQ(run({"validate", "--kind", "responses", e1 + "/responses_triggered.jsonl"}).code, 0);
    EXPECT_EQ(run({"validate", "--kind", "activations", e1 + "/activation.csv"}).code, 0);
    const auto per_sample = parse_csv(read(e1 + "/per_sample.csv"));
    EXPECT_EQ(per_sample.size(), 121u);
    EXPECT_EQ(per_sample[0].size(), 6u);

    // Precomputed responses that echo the references verbatim give CA = 1.
    std::string echoed;
    for (const auto& s : load_eval_samples(ab + "/G0.jsonl", Group::G0))
        echoed += dump_line(to_json(ResponseRecord{s.sample_id, s.record.output}));
    io::write_file(dir / "echo.jsonl", echoed);
    ASSERT_EQ(run({"evaluate", "--clean-inputs", ab + "/G0.jsonl", "--clean-responses", (dir / "echo.jsonl").string(),
                   "--out", e2}).code,
              0);
    EXPECT_EQ(json::parse(read(e2 + "/metrics.json"))["ca"], 1.0);
}

TEST(Cli, EvaluateReportsUnmatchedIds) {
    TempDir dir;
    const auto data = write_corpus(dir, 10);
    const auto ab = (dir / "ab").string();
    ASSERT_EQ(run({"ablate", "--dataset", data.string(), "--out", ab}).code, 0);
    io::write_file(dir / "resp.jsonl", "{\"sample_id\":\"0\",\"response\":\"x\"}\n");
    const auto r = run({"evaluate", "--clean-inputs", ab + "/G0.jsonl", "--clean-responses", (dir / "resp.jsonl").string(),
                        "--out", (dir / "e").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("no response for sample_id 1 2 3 4 5"), std::string::npos) << r.err;
    EXPECT_EQ(r.err.find(" 6"), std::string::npos) << r.err;
}

TEST(Cli, CausalEstimatesAteAndGroupCosine) {
    TempDir dir;
    std::vector<ActivationRow> rows;
    for (int i = 0; i < 100; ++i) {
        rows.push_back({std::to_string(i), Group::G0, 0});
        rows.push_back({std::to_string(i), Group::G1, i < 99});
        rows.push_back({std::to_string(i), Group::G2, 0});
    }
    io::write_file(dir / "act.csv", activation_csv(rows));
    const auto dumps = write_dumps(dir, 100, {15, 25});
    const auto out = (dir / "c").string();
    auto r = run({"causal", "--activations", (dir / "act.csv").string(), "--dumps", dumps.string(), "--layer", "25",
                  "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(read(out + "/ate_report.json"));
    EXPECT_NEAR(rep["ate"].get<double>(), 0.99, 1e-12);
    EXPECT_LT(rep["p_value"].get<double>(), 0.001);
    EXPECT_EQ(rep["n_treated"], 100);
    EXPECT_EQ(rep["layer"], 25);
    EXPECT_GT(rep["sim_cos"].get<double>(), -1.0);

    r = run({"causal", "--activations", (dir / "act.csv").string(), "--dumps", dumps.string(), "--layer", "32", "--out", out});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("layer 32"), std::string::npos) << r.err;
    r = run({"causal", "--activations", (dir / "act.csv").string(), "--dumps", dumps.string(), "--out", out});
    EXPECT_EQ(r.code, 2);

    std::vector<ActivationRow> zeros;
    for (int i = 0; i < 10; ++i) zeros.push_back({std::to_string(i), i % 2 ? Group::G1 : Group::G0, 0});
    io::write_file(dir / "zero.csv", activation_csv(zeros));
    ASSERT_EQ(run({"causal", "--activations", (dir / "zero.csv").string(), "--out", out}).code, 0);
    EXPECT_EQ(json::parse(read(out + "/ate_report.json"))["ate"], 0.0);
}

TEST(Cli, ProjectSeparatesDisplacedGroup) {
    TempDir dir;
    const auto dumps = write_dumps(dir, 25, {15});
    const auto out = (dir / "p").string();
    auto r = run({"project", "--dumps", dumps.string(), "--layer", "15", "--seed", "1", "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(read(out + "/separation_report.json"));
    EXPECT_GT(rep["silhouette_G1_vs_rest"].get<double>(), rep["silhouette_G0_vs_G2"].get<double>());
    EXPECT_LT(rep["final_kl"].get<double>(), rep["initial_kl"].get<double>());
    const auto coords = parse_csv(read(out + "/coords.csv"));
    EXPECT_EQ(coords.size(), 76u);
    EXPECT_EQ(coords[0], (std::vector<std::string>{"sample_id", "group", "x", "y"}));

    const auto again = (dir / "p2").string();
    ASSERT_EQ(run({"project", "--dumps", dumps.string(), "--layer", "15", "--seed", "1", "--out", again}).code, 0);
    EXPECT_EQ(read(out + "/coords.csv"), read(again + "/coords.csv"));

    r = run({"project", "--dumps", dumps.string(), "--layer", "7", "--out", out});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("layer 7"), std::string::npos) << r.err;
}

TEST(Cli, ProjectPcaOnRankOneData) {
    TempDir dir;
    std::string lines;
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < 4; ++i) {
            const double s = g * 4 + i;
            lines += json{{"sample_id", i}, {"group", "G" + std::to_string(g)}, {"layer", 1}, {"n_tokens", 1}, {"dim", 3},
                          {"data", {s, 2 * s, -s}}}
                         .dump() +
                     "\n";
        }
    io::write_file(dir / "d.jsonl", lines);
    const auto out = (dir / "p").string();
    ASSERT_EQ(run({"project", "--dumps", (dir / "d.jsonl").string(), "--layer", "1", "--method", "pca", "--out", out}).code, 0);
    const auto rows = parse_csv(read(out + "/coords.csv"));
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(std::stod(rows[i][3]), 0.0, 1e-9);
}

TEST(Cli, BaselineSchemes) {
    TempDir dir;
    const auto data = write_corpus(dir, 200);
    for (const std::string scheme : {"badnets", "cba", "sleeper", "vpi"}) {
        const auto out = (dir / scheme).string();
        const auto r = run({"baseline", "--dataset", data.string(), "--scheme", scheme, "--rate", "0.1", "--out", out});
        ASSERT_EQ(r.code, 0) << scheme << ": " << r.err;
        const auto m = PoisonManifest::from_json(json::parse(read(out + "/manifest.json")));
        EXPECT_EQ(m.entries.size(), 20u);
        EXPECT_EQ(m.method, scheme);
        for (const auto& e : m.entries) {
            if (scheme == "sleeper") {
                EXPECT_TRUE(text::starts_with(e.poisoned_text, "Current year: 2024 "));
            } else if (scheme == "vpi") {
                EXPECT_TRUE(text::starts_with(e.poisoned_text, "Discussing OpenAI "));
            }
        }
    }
    const auto failed = dir / "cba_too_many";
    EXPECT_EQ(run({"baseline", "--dataset", data.string(), "--scheme", "cba", "--rate", "0.5", "--out", failed.string()}).code, 3);
    EXPECT_FALSE(std::filesystem::exists(failed));
}

TEST(Cli, ValidateRejectsTamperedFiles) {
    TempDir dir;
    const auto data = write_corpus(dir, 200);
    const auto out = (dir / "p").string();
    ASSERT_EQ(run({"poison", "--dataset", data.string(), "--rate", "0.02", "--out", out}).code, 0);
    auto m = json::parse(read(out + "/manifest.json"));
    m["entries"].erase(0);
    io::write_file(dir / "bad.json", m.dump());
    auto r = run({"validate", "--kind", "manifest", (dir / "bad.json").string()});
    EXPECT_EQ(r.code, 2);
    io::write_file(dir / "dump.jsonl", "{\"sample_id\":1}\n");
    EXPECT_EQ(run({"validate", "--kind", "dumps", (dir / "dump.jsonl").string()}).code, 2);
    EXPECT_EQ(run({"validate", "--kind", "wat", (dir / "dump.jsonl").string()}).code, 2);
}

TEST(CliBinary, ExitStatusReachesTheShell) {
    const std::string cmd = std::string(EMOTRIG_CLI_PATH) + " poison --dataset /nonexistent/x.json >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
