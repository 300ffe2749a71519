#include <gtest/gtest.h>

#include <cstdlib>
#include <map>

#include "exsearch/jsonl.hpp"
#include "exsearch/types.hpp"
#include "test_support.hpp"

using namespace exsearch;
using exsearch::testing::EnvGuard;
using exsearch::testing::read_text;
using exsearch::testing::StubServer;
using exsearch::testing::TempDir;
using exsearch::testing::write_text;
using json = nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

Run cli(const TempDir& dir, const std::vector<std::string>& args) {
    std::string cmd = quote(EXSEARCH_CLI_PATH);
    for (const auto& a : args) cmd += " " + quote(a);
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out);
    r.err = read_text(err);
    return r;
}

std::string navarone_corpus_jsonl() {
    return R"({"id":"d1","title":"Navarone Garibaldi","text":"Navarone Anthony Garibaldi is the son of Priscilla Presley and the half-brother of Lisa Marie Presley."}
{"id":"d2","title":"Lisa Marie Presley","text":"Lisa Marie Presley was married four times, including to Michael Jackson and Nicolas Cage."}
{"id":"d3","title":"Priscilla Presley","text":"Priscilla Presley is an American actress and businesswoman."}
)";
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

} // namespace

TEST(Cli, IngestReportsCountAndIsReproducible) {
    TempDir d;
    write_text(d / "corpus.jsonl", navarone_corpus_jsonl());
    auto a = cli(d, {"ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx1").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, "indexed 3 passages\n");
    auto b = cli(d, {"ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx2").string()});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(read_text(d / "idx1" / "index.exsidx"), read_text(d / "idx2" / "index.exsidx"));

    auto j = cli(d, {"--json", "ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx3").string()});
    ASSERT_EQ(j.code, 0);
    EXPECT_EQ(json::parse(j.out)["indexed"], 3);
}

TEST(Cli, DuplicateIdIsDataError) {
    TempDir d;
    write_text(d / "corpus.jsonl", R"({"id":"x","title":"a","text":"b"}
{"id":"x","title":"c","text":"d"}
)");
    auto r = cli(d, {"ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("error: DuplicateId:", 0), 0u) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, UsageErrors) {
    TempDir d;
    auto unknown = cli(d, {"ask", "--question", "q", "--policy", "oracle"});
    EXPECT_EQ(unknown.code, 1);
    EXPECT_EQ(unknown.err.rfind("error: UsageError:", 0), 0u) << unknown.err;
    EXPECT_EQ(cli(d, {}).code, 1);
    EXPECT_EQ(cli(d, {"ingest"}).code, 1);
    EXPECT_EQ(cli(d, {"ingest", "--corpus", (d / "missing.jsonl").string(), "--index", (d / "i").string()}).code, 2);
}

TEST(Cli, SynthWorldWritesArtifacts) {
    TempDir d;
    auto r = cli(d, {"--seed", "3", "synth-world", "--entities", "20", "--questions", "5", "--validation", "2",
                     "--out", (d / "w").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"corpus.jsonl", "examples.jsonl", "validation.jsonl", "world.json"})
        EXPECT_TRUE(std::filesystem::exists(d / "w" / f)) << f;
    EXPECT_EQ(read_jsonl_file<Example>(d / "w" / "examples.jsonl").size(), 5u);
    EXPECT_EQ(read_jsonl_file<Example>(d / "w" / "validation.jsonl").size(), 2u);

    auto again = cli(d, {"--seed", "3", "synth-world", "--entities", "20", "--questions", "5", "--validation", "2",
                         "--out", (d / "w2").string()});
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(read_text(d / "w" / "corpus.jsonl"), read_text(d / "w2" / "corpus.jsonl"));
    EXPECT_EQ(read_text(d / "w" / "examples.jsonl"), read_text(d / "w2" / "examples.jsonl"));
}

TEST(Cli, TrainExactHistoryIsNonDecreasing) {
    TempDir d;
    ASSERT_EQ(cli(d, {"--seed", "3", "synth-world", "--entities", "20", "--questions", "10", "--out", (d / "w").string()})
                  .code,
              0);
    auto r = cli(d, {"--seed", "3", "train", "--world", (d / "w" / "world.json").string(), "--train",
                     (d / "w" / "examples.jsonl").string(), "--e-step", "exact-enumeration", "--iterations", "6",
                     "--patience", "0", "--params-out", (d / "params.json").string(), "--history",
                     (d / "history.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = csv_rows(read_text(d / "history.csv"));
    ASSERT_EQ(rows.size(), 8u);
    EXPECT_EQ(rows[0][1], "train_loglik");
    for (std::size_t i = 2; i < rows.size(); ++i)
        EXPECT_GE(std::stod(rows[i][1]), std::stod(rows[i - 1][1]) - 1e-9) << "iteration " << rows[i][0];
    EXPECT_TRUE(std::filesystem::exists(d / "params.json"));
}

TEST(Cli, ExploreWeighExportPipeline) {
    TempDir d;
    ASSERT_EQ(cli(d, {"--seed", "5", "synth-world", "--entities", "20", "--questions", "4", "--out", (d / "w").string()})
                  .code,
              0);
    ASSERT_EQ(cli(d, {"ingest", "--corpus", (d / "w" / "corpus.jsonl").string(), "--index", (d / "idx").string()}).code,
              0);
    auto ex = cli(d, {"--seed", "5", "explore", "--dataset", (d / "w" / "examples.jsonl").string(), "--index",
                      (d / "idx").string(), "--world", (d / "w" / "world.json").string(), "--budget", "2", "--k",
                      "3", "--samples", "3", "--out", (d / "traj.jsonl").string()});
    ASSERT_EQ(ex.code, 0) << ex.err;
    EXPECT_EQ(ex.out, "explored 12 trajectories over 4 examples\n");

    auto w = cli(d, {"weigh", "--trajectories", (d / "traj.jsonl").string(), "--dataset",
                     (d / "w" / "examples.jsonl").string(), "--mode", "reward-em", "--out",
                     (d / "weighted.jsonl").string()});
    ASSERT_EQ(w.code, 0) << w.err;
    auto weighted = read_jsonl_file<WeightedTrajectory>(d / "weighted.jsonl");
    ASSERT_EQ(weighted.size(), 12u);
    std::map<std::string, double> sums;
    for (const auto& s : weighted) {
        EXPECT_EQ(s.weight_mode, WeightMode::RewardEm);
        sums[s.id] += s.weight;
    }
    for (const auto& [id, sum] : sums) EXPECT_NEAR(sum, 1.0, 1e-9) << id;

    auto p = cli(d, {"weigh", "--trajectories", (d / "traj.jsonl").string(), "--dataset",
                     (d / "w" / "examples.jsonl").string(), "--mode", "posterior-logprob", "--index",
                     (d / "idx").string(), "--world", (d / "w" / "world.json").string(), "--budget", "2", "--k", "3",
                     "--out", (d / "posterior.jsonl").string()});
    ASSERT_EQ(p.code, 0) << p.err;

    auto e = cli(d, {"export-sft", "--weighted", (d / "weighted.jsonl").string(), "--dataset",
                     (d / "w" / "examples.jsonl").string(), "--out", (d / "sft.jsonl").string()});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(e.out, "exported 12 records\n");
}

TEST(Cli, EvalAllCorrectGivesOnes) {
    TempDir d;
    write_text(d / "data.jsonl", R"({"id":"a","question":"q1","answers":["four"]}
{"id":"b","question":"q2","answers":["Lisa Marie Presley"]}
)");
    write_text(d / "pred.jsonl", R"({"id":"a","answer":"Four."}
{"id":"b","answer":"lisa marie presley"}
)");
    auto r = cli(d, {"--json", "eval", "--predictions", (d / "pred.jsonl").string(), "--dataset",
                     (d / "data.jsonl").string(), "--csv", (d / "report.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(r.out);
    EXPECT_EQ(j["em"], 1.0);
    EXPECT_EQ(j["f1"], 1.0);
    EXPECT_EQ(j["acc"], 1.0);
    EXPECT_NE(read_text(d / "report.csv").find("\nmean,"), std::string::npos);

    write_text(d / "bad.jsonl", R"({"id":"zzz","answer":"x"}
)");
    auto bad = cli(d, {"eval", "--predictions", (d / "bad.jsonl").string(), "--dataset", (d / "data.jsonl").string()});
    EXPECT_EQ(bad.code, 2);
    EXPECT_EQ(bad.err.rfind("error: UnknownId:", 0), 0u) << bad.err;
}

TEST(Cli, AskWithStubEndpointMatchesGolden) {
    TempDir d;
    write_text(d / "corpus.jsonl", navarone_corpus_jsonl());
    ASSERT_EQ(cli(d, {"ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx").string()}).code, 0);

    StubServer s([](const json& req, int) {
        const auto& msgs = req.at("messages");
        const std::string prefix =
            msgs.back().at("role") == "assistant" ? msgs.back().at("content").get<std::string>() : std::string();
        std::size_t thinks = 0;
        for (auto pos = prefix.find("<THINK>"); pos != std::string::npos; pos = prefix.find("<THINK>", pos + 1)) ++thinks;
        const json stop = req.value("stop", json::array());
        if (stop == json::array({"<SEARCH>", "<FINAL>"})) {
            if (thinks == 0) return StubServer::content("<THINK> Who is Navarone Garibaldi's half-brother?");
            if (thinks == 1) return StubServer::content("<THINK> How many times has Lisa Marie Presley been married?");
            return StubServer::content("");
        }
        if (stop.size() == 3) return StubServer::content(thinks == 1 ? "<RECORD> Lisa Marie Presley" : "<RECORD> four");
        return StubServer::content(" four");
    });
    EnvGuard key("EXSEARCH_API_KEY", "k");
    auto r = cli(d, {"ask", "--question", "How many times has Navarone Garibaldi's half-brother been married?",
                     "--index", (d / "idx").string(), "--policy", "llm", "--base-url", s.base_url(), "--budget", "3",
                     "--k", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, read_text(exsearch::testing::fixture_path("navarone_ask_output.txt")));
}

TEST(Cli, AskWithoutKeyIsEndpointError) {
    TempDir d;
    write_text(d / "corpus.jsonl", navarone_corpus_jsonl());
    ASSERT_EQ(cli(d, {"ingest", "--corpus", (d / "corpus.jsonl").string(), "--index", (d / "idx").string()}).code, 0);
    EnvGuard key("EXSEARCH_API_KEY", nullptr);
    auto r = cli(d, {"ask", "--question", "q", "--index", (d / "idx").string(), "--policy", "llm", "--base-url",
                     "http://127.0.0.1:1/v1"});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(r.err.rfind("error: AuthError:", 0), 0u) << r.err;
}
