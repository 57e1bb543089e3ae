#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "geb/infer/benchmark.hpp"
#include "support.hpp"

using namespace geb;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Outcome r;
    r.code = cli::dispatch(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

nlohmann::json manifest(const std::filesystem::path& dir) {
    return nlohmann::json::parse(testutil::read_file(dir / "run_manifest.json"));
}

}  // namespace

TEST(Cli, HelpExitsZeroWithUsage) {
    const Outcome r = run({"bench", "--help"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("--prompt-len"), std::string::npos);
    EXPECT_NE(r.out.find("--repeats"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
    const Outcome unknown = run({"nonsense"});
    EXPECT_EQ(unknown.code, cli::kExitUsage);
    EXPECT_FALSE(unknown.err.empty());
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"train", "--corpus", "x"}).code, cli::kExitUsage);  // --config is required
    EXPECT_EQ(run({"bench", "--threads", "0"}).code, cli::kExitUsage);
}

TEST(Cli, MissingConfigExitsOneNamingThePath) {
    testutil::TempDir dir("cli_missing");
    const std::string missing = (dir / "absent.cfg").string();
    const Outcome r = run({"train", "--config", missing, "--corpus", "c.txt", "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
    EXPECT_NE(r.err.find(missing), std::string::npos);
    const auto m = manifest(dir / "out");
    EXPECT_EQ(m["status"], "failed");
    EXPECT_EQ(m["command"], "train");
}

TEST(Cli, PrepareDataIsReproducible) {
    testutil::TempDir dir("cli_prep");
    for (const char* o : {"a", "b"}) {
        const Outcome r = run({"prepare-data", "--input", testutil::fixture_path("pipeline/shard_web.jsonl").string(),
                           "--input", testutil::fixture_path("pipeline/shard_forum.jsonl").string(), "--reference",
                           testutil::fixture_path("pipeline/reference.txt").string(), "--out", (dir / o).string()});
        ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    }
    for (const char* f : {"shard_web.jsonl", "shard_forum.jsonl", "rejected.jsonl", "report.json"}) {
        EXPECT_EQ(testutil::read_file(dir / "a" / f), testutil::read_file(dir / "b" / f)) << f;
    }
    EXPECT_EQ(manifest(dir / "a")["artifacts"], manifest(dir / "b")["artifacts"]);
    EXPECT_EQ(manifest(dir / "a")["status"], "ok");
}

TEST(Cli, TokenizerAndTrainAreReproducible) {
    testutil::TempDir dir("cli_train");
    testutil::write_file(dir / "corpus.txt", testutil::synthetic_text(20000, 5));
    train::TrainConfig cfg = testutil::drill_config(12);
    cfg.model.vocab_size = 300;
    cfg.model.validate();
    cfg.to_kv().save(dir / "train.cfg");
    for (const char* o : {"a", "b"}) {
        const std::string out = (dir / o).string();
        const Outcome tk = run({"train-tokenizer", "--input", (dir / "corpus.txt").string(), "--vocab-size", "300",
                            "--out", out});
        ASSERT_EQ(tk.code, cli::kExitOk) << tk.err;
        const Outcome tr = run({"train", "--config", (dir / "train.cfg").string(), "--corpus",
                            (dir / "corpus.txt").string(), "--vocab", out + "/vocab.bpe", "--steps", "12",
                            "--spike-strategies", "replace,skip", "--seed", "3", "--out", out});
        ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
    }
    for (const char* f : {"vocab.bpe", "model.ckpt", "loss_curve.csv", "actions.csv"}) {
        EXPECT_EQ(testutil::read_file(dir / "a" / f), testutil::read_file(dir / "b" / f)) << f;
    }
    const auto m = manifest(dir / "a");
    EXPECT_EQ(m["seed"], 3);
    EXPECT_EQ(m["config"]["spike.strategies"], "replace,skip");
    EXPECT_TRUE(m["artifacts"].contains("model.ckpt"));

    // Every file lands inside the output directories.
    std::set<std::string> top;
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) top.insert(e.path().filename().string());
    EXPECT_EQ(top, (std::set<std::string>{"a", "b", "corpus.txt", "train.cfg"}));

    const Outcome gen = run({"generate", "--model", (dir / "a" / "model.ckpt").string(), "--vocab",
                         (dir / "a" / "vocab.bpe").string(), "--prompt", "The cat", "--max-new", "5", "--out",
                         (dir / "g").string()});
    ASSERT_EQ(gen.code, cli::kExitOk) << gen.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "g" / "generation.txt"));
}

TEST(Cli, BenchWritesAParseableReport) {
    testutil::TempDir dir("cli_bench");
    const auto cfg = testutil::toy_config();
    cfg.to_kv().save(dir / "model.cfg");
    const Outcome r = run({"bench", "--config", (dir / "model.cfg").string(), "--prompt-len", "4", "--gen-len", "4",
                       "--repeats", "2", "--threads", "1", "--out", (dir / "o").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto report = infer::parse_report(testutil::read_file(dir / "o" / "bench_report.txt"));
    EXPECT_EQ(report.repeats.size(), 2u);
    EXPECT_EQ(report.gen_len, 4u);
    EXPECT_GT(report.median_tokens_per_sec, 0.0);
}
