#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "exsearch/em_trainer.hpp"
#include "exsearch/errors.hpp"
#include "exsearch/jsonl.hpp"
#include "exsearch/metrics.hpp"
#include "exsearch/transcript.hpp"
#include "test_support.hpp"

using namespace exsearch;
using exsearch::testing::make_world;
using exsearch::testing::read_text;
using exsearch::testing::TempDir;
using exsearch::testing::WorldFixture;

namespace {

constexpr double kHuge = 1e3;

Example example_for(const std::string& start, std::vector<std::string> relations, std::string gold) {
    Example ex;
    ex.id = "q:" + start;
    ex.question = chain_question(start, relations);
    ex.gold_answers = {std::move(gold)};
    return ex;
}

Trajectory one_step(const Retriever& r, const std::string& start, const std::string& rel, const std::string& evidence,
                    std::size_t k) {
    Trajectory t;
    t.question = chain_question(start, {rel});
    t.budget = 1;
    Step s;
    s.sub_query = start + " " + rel;
    s.retrieved = r.retrieve(s.sub_query, k);
    s.evidence = evidence;
    t.steps.push_back(s);
    return t;
}

WeightedTrajectory weighted(Trajectory t, std::string answer, double weight, int sample = 0) {
    WeightedTrajectory w;
    w.id = "q";
    w.sample = sample;
    w.trajectory = std::move(t);
    w.answer = std::move(answer);
    w.weight = weight;
    w.log_weight = std::log(weight);
    return w;
}

// Parameters that walk every question of `path` to its answer with certainty.
TabularPolicyParams oracle_params(const std::vector<std::string>& relations, const std::vector<std::string>& path,
                                  std::size_t k) {
    auto p = TabularPolicyParams::uniform(relations, static_cast<int>(path.size()), k);
    for (std::size_t h = 0; h <= path.size(); ++h) {
        std::fill(p.think_logits[h].begin(), p.think_logits[h].end(), -kHuge);
        const std::size_t target = h < path.size()
                                       ? static_cast<std::size_t>(std::find(relations.begin(), relations.end(), path[h]) -
                                                                  relations.begin())
                                       : relations.size();
        p.think_logits[h][target] = 0.0;
    }
    std::fill(p.record_logits.begin(), p.record_logits.end(), -kHuge);
    p.record_logits[0] = 0.0;
    p.answer_logits = {0.0, -kHuge};
    return p;
}

} // namespace

TEST(NormalizeWeights, Fixtures) {
    auto w = normalize_weights(std::vector<double>{std::log(0.9), std::log(0.1)});
    EXPECT_NEAR(w[0], 0.9, 1e-12);
    EXPECT_NEAR(w[1], 0.1, 1e-12);
    for (double c : {-1e9, -3.0, 0.0, 1e6}) {
        auto sym = normalize_weights(std::vector<double>{c, c});
        EXPECT_DOUBLE_EQ(sym[0], 0.5);
        EXPECT_DOUBLE_EQ(sym[1], 0.5);
    }
    EXPECT_EQ(normalize_weights(std::vector<double>{-1e9}), std::vector<double>{1.0});
    EXPECT_TRUE(normalize_weights({}).empty());
}

TEST(NormalizeWeights, SumToOneAndShiftInvariant) {
    std::mt19937 gen(5);
    std::normal_distribution<double> noise(0.0, 4.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> l(1 + gen() % 8);
        for (double& v : l) v = noise(gen);
        if (trial % 5 == 0) l[0] = kLogProbFloor;
        auto a = normalize_weights(l);
        for (double& v : l) v += 5.0;
        auto b = normalize_weights(l);
        EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-9);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    }
}

TEST(RawLogWeight, RewardEmIsZeroOne) {
    WorldFixture f(make_world({{"A", "r1", "B"}}, {"r1"}, 1));
    TabularPolicy policy(TabularPolicyParams::uniform({"r1"}, 1, 1), f.retriever);
    Trajectory t;
    std::vector<std::string> golds = {"four"};
    EXPECT_EQ(raw_log_weight(WeightMode::RewardEm, policy, "q", t, "four", golds), 1.0);
    EXPECT_EQ(raw_log_weight(WeightMode::RewardEm, policy, "q", t, "five", golds), 0.0);
    EXPECT_NEAR(raw_log_weight(WeightMode::RewardF1, policy, "q", t, "four times", golds), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(raw_log_weight(WeightMode::RewardAcc, policy, "q", t, "four times", golds), 1.0);
    EXPECT_THROW(raw_log_weight(WeightMode::RewardEm, policy, "q", t, "four", {}), EmptyGolds);
}

TEST(EStepSampled, SingleSampleGetsWeightOne) {
    WorldFixture f(generate_world(10, 3, 1, 0.8, 2));
    auto data = make_questions(f.world, 4, 2);
    TabularPolicy policy(TabularPolicyParams::uniform(f.world.relations, 2, 2), f.retriever);
    TrainConfig cfg;
    cfg.samples_per_example = 1;
    AgentConfig agent;
    agent.budget = 2;
    agent.k = 2;
    agent.rerank_keep = 2;
    auto e = e_step_sampled(data, policy, f.retriever, agent, cfg, 9);
    ASSERT_EQ(e.batches.size(), 4u);
    for (const auto& b : e.batches) {
        ASSERT_EQ(b.samples.size(), 1u);
        EXPECT_EQ(b.samples[0].weight, 1.0);
    }
    // Identical seeds give identical batches.
    auto again = e_step_sampled(data, policy, f.retriever, agent, cfg, 9);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.batches[i].samples, e.batches[i].samples);
}

TEST(EStepSampled, EpisodeFailuresAreRecordedNotFatal) {
    WorldFixture f(generate_world(10, 3, 1, 0.8, 2));
    auto data = make_questions(f.world, 3, 2);
    data[1].gold_answers.clear();
    TabularPolicy policy(TabularPolicyParams::uniform(f.world.relations, 1, 2), f.retriever);
    TrainConfig cfg;
    AgentConfig agent;
    agent.budget = 1;
    agent.k = 2;
    agent.rerank_keep = 2;
    auto e = e_step_sampled(data, policy, f.retriever, agent, cfg, 1);
    EXPECT_EQ(e.batches.size(), 2u);
    ASSERT_EQ(e.failures.size(), 1u);
    EXPECT_EQ(e.failures[0].example_id, data[1].id);
}

TEST(EStepExact, TwoBranchPosteriorIsHalfHalf) {
    WorldFixture f(make_world({{"A", "r1", "B"}, {"A", "r2", "B"}}, {"r1", "r2"}, 1));
    auto p = TabularPolicyParams::uniform({"r1", "r2"}, 1, 1);
    p.think_logits[0] = {0, 0, -kHuge};
    p.answer_logits = {0, -kHuge};
    TrainConfig cfg;
    cfg.e_step_mode = EStepMode::ExactEnumeration;
    std::vector<Example> data = {example_for("A", {"r1"}, "B")};
    auto e = e_step_exact(data, p, f.retriever, cfg);
    ASSERT_EQ(e.batches.size(), 1u);
    ASSERT_EQ(e.batches[0].samples.size(), 2u);
    for (const auto& s : e.batches[0].samples) EXPECT_NEAR(s.weight, 0.5, 1e-12);

    // Skewed think head: posterior follows the prior mass on each branch.
    p.think_logits[0] = {std::log(0.7), std::log(0.3), -kHuge};
    e = e_step_exact(data, p, f.retriever, cfg);
    EXPECT_NEAR(e.batches[0].samples[0].weight, 0.7, 1e-12);
    EXPECT_NEAR(e.batches[0].samples[1].weight, 0.3, 1e-12);
}

TEST(EStepExact, EnumerationTooLargePropagates) {
    WorldFixture f(generate_world(10, 3, 2, 0.8, 2));
    auto data = make_questions(f.world, 1, 2);
    TrainConfig cfg;
    cfg.e_step_mode = EStepMode::ExactEnumeration;
    cfg.enumeration_cap = 10;
    EXPECT_THROW(e_step_exact(data, TabularPolicyParams::uniform(f.world.relations, 2, 2), f.retriever, cfg),
                 EnumerationTooLarge);
}

TEST(MStep, SingleTrajectoryHandFormula) {
    WorldFixture f(make_world({{"A", "r1", "B"}, {"A", "r2", "C"}, {"A", "r3", "D"}}, {"r1", "r2", "r3"}, 1));
    auto p = TabularPolicyParams::uniform({"r1", "r2", "r3"}, 1, 2);
    const double alpha = 1e-3;
    std::vector<WeightedBatch> batches = {{"q", "q", {"B"}, {weighted(one_step(f.retriever, "A", "r1", "B", 2), "B", 1.0)}}};
    auto next = m_step_tabular(p, f.retriever, batches, alpha);
    auto think = softmax(next.think_logits[0], next.temperature);
    EXPECT_NEAR(think[0], (1 + alpha) / (1 + alpha * 4), 1e-12);
    EXPECT_NEAR(think[3], alpha / (1 + alpha * 4), 1e-12);
    auto record = softmax(next.record_logits, next.temperature);
    EXPECT_NEAR(record[0], (1 + alpha) / (1 + alpha * 2), 1e-12);
    auto answer = softmax(next.answer_logits, next.temperature);
    EXPECT_NEAR(answer[kCopyLastEvidence], (1 + alpha) / (1 + alpha * 2), 1e-12);
    // Hop 2 row saw no weight: keeps its prior.
    EXPECT_EQ(next.think_logits[1], p.think_logits[1]);
}

TEST(MStep, WeightedCountsFollowWeights) {
    WorldFixture f(make_world({{"A", "r1", "B"}, {"A", "r2", "C"}, {"A", "r3", "D"}}, {"r1", "r2", "r3"}, 1));
    auto p = TabularPolicyParams::uniform({"r1", "r2", "r3"}, 1, 2);
    p.temperature = 1.7;
    const double alpha = 1e-3;
    std::vector<WeightedBatch> batches = {
        {"q", "q", {"B"},
         {weighted(one_step(f.retriever, "A", "r1", "B", 2), "B", 0.9, 0),
          weighted(one_step(f.retriever, "A", "r2", "C", 2), "C", 0.1, 1)}}};
    auto next = m_step_tabular(p, f.retriever, batches, alpha);
    auto think = softmax(next.think_logits[0], next.temperature);
    EXPECT_NEAR(think[0], (0.9 + alpha) / (1 + 4 * alpha), 1e-12);
    EXPECT_NEAR(think[1], (0.1 + alpha) / (1 + 4 * alpha), 1e-12);
    EXPECT_NEAR(think[0], 0.9, 5e-3);
    EXPECT_NEAR(think[1], 0.1, 5e-3);
}

TEST(MStep, EmptyOrUninformativeBatchKeepsParams) {
    WorldFixture f(make_world({{"A", "r1", "B"}}, {"r1"}, 1));
    std::mt19937 gen(3);
    auto p = TabularPolicyParams::uniform({"r1"}, 2, 1);
    p.think_logits[0] = {0.3, -0.2};
    EXPECT_EQ(m_step_tabular(p, f.retriever, {}, 1e-3), p);
    auto w = weighted(one_step(f.retriever, "A", "r1", "B", 1), "B", 1.0);
    w.log_weight = kLogProbFloor;
    std::vector<WeightedBatch> batches = {{"q", "q", {"Z"}, {w}}};
    EXPECT_EQ(m_step_tabular(p, f.retriever, batches, 1e-3), p);
}

TEST(Elbo, DeterministicGoldTrajectoryIsZero) {
    WorldFixture f(make_world({{"A", "r1", "B"}}, {"r1"}, 1));
    auto p = oracle_params({"r1"}, {"r1"}, 1);
    std::vector<WeightedBatch> batches = {{"q", "q", {"B"}, {weighted(one_step(f.retriever, "A", "r1", "B", 1), "B", 1.0)}}};
    EXPECT_NEAR(compute_elbo(p, f.retriever, batches), 0.0, 1e-12);
}

TEST(Elbo, TightWithExactPosteriorAndBelowMarginalOtherwise) {
    std::mt19937 gen(17);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        WorldFixture f(generate_world(8, 3, 2, 0.8, seed));
        auto data = make_questions(f.world, 1, seed);
        auto p = TabularPolicyParams::uniform(f.world.relations, 2, 2);
        for (auto& row : p.think_logits)
            for (double& v : row) v = noise(gen);
        for (double& v : p.record_logits) v = noise(gen);
        TrainConfig cfg;
        cfg.e_step_mode = EStepMode::ExactEnumeration;
        auto e = e_step_exact(data, p, f.retriever, cfg);
        const double marginal = exact_marginal(p, data[0], f.retriever, data[0].gold_answers[0]);
        EXPECT_NEAR(compute_elbo(p, f.retriever, e.batches) + mean_weight_entropy(e.batches), marginal, 1e-9);
        EXPECT_NEAR(mean_exact_loglik(p, data, f.retriever), marginal, 1e-12);

        // Any other normalized weighting stays below the marginal.
        for (int trial = 0; trial < 12; ++trial) {
            auto batches = e.batches;
            std::vector<double> l;
            for (std::size_t j = 0; j < batches[0].samples.size(); ++j) l.push_back(noise(gen) * 3);
            auto w = normalize_weights(l);
            for (std::size_t j = 0; j < w.size(); ++j) batches[0].samples[j].weight = w[j];
            EXPECT_LE(compute_elbo(p, f.retriever, batches), marginal + 1e-12);
        }
    }
}

TEST(EmTrain, ExactModeLoglikNonDecreasing) {
    WorldFixture f(generate_world(20, 4, 2, 0.8, 3));
    auto data = make_questions(f.world, 10, 3);
    TrainConfig cfg;
    cfg.e_step_mode = EStepMode::ExactEnumeration;
    cfg.iterations = 10;
    cfg.early_stop_patience = 0;
    auto result = em_train(data, {}, TabularPolicyParams::uniform(f.world.relations, 2, 3), f.retriever, {}, cfg);
    ASSERT_EQ(result.reports.size(), 11u);
    EXPECT_TRUE(std::isnan(result.reports[0].elbo));
    for (std::size_t i = 1; i < result.reports.size(); ++i) {
        EXPECT_GE(result.reports[i].train_loglik, result.reports[i - 1].train_loglik - 1e-9) << i;
        EXPECT_GE(result.reports[i].wall_time, result.reports[i - 1].wall_time);
        EXPECT_EQ(result.reports[i].iteration, static_cast<int>(i));
        // ELBO of iteration i is a lower bound on the log-likelihood it started from.
        EXPECT_LE(result.reports[i].elbo, result.reports[i - 1].train_loglik + 1e-9);
    }
    EXPECT_GT(result.reports.back().train_loglik, result.reports.front().train_loglik + 1.0);
    EXPECT_FALSE(result.stopped_early);
}

TEST(EmTrain, FixedPointStopsAtPatience) {
    WorldFixture f(generate_world(20, 4, 2, 0.8, 5));
    auto data = make_questions(f.world, 5, 5);
    std::vector<std::string> path;
    for (const auto& sub : *data[0].gold_subqueries) path.push_back(sub.substr(sub.find(' ') + 1));
    auto p = oracle_params(f.world.relations, path, 3);
    ASSERT_NEAR(mean_exact_loglik(p, data, f.retriever), 0.0, 1e-12);

    TrainConfig cfg;
    cfg.e_step_mode = EStepMode::ExactEnumeration;
    cfg.iterations = 5;
    cfg.smoothing = 0.0;
    cfg.early_stop_patience = 1;
    auto result = em_train(data, {}, p, f.retriever, {}, cfg);
    ASSERT_EQ(result.reports.size(), 2u);
    EXPECT_TRUE(result.stopped_early);
    EXPECT_NEAR(result.reports[1].train_loglik, result.reports[0].train_loglik, 1e-12);
}

TEST(EmTrain, PatienceZeroRunsAllIterations) {
    WorldFixture f(generate_world(10, 2, 1, 0.9, 1));
    auto data = make_questions(f.world, 3, 1);
    TrainConfig cfg;
    cfg.iterations = 4;
    cfg.samples_per_example = 2;
    cfg.early_stop_patience = 0;
    auto result = em_train(data, {}, TabularPolicyParams::uniform(f.world.relations, 1, 2), f.retriever, {}, cfg);
    EXPECT_EQ(result.reports.size(), 5u);
    EXPECT_TRUE(std::isnan(result.reports[2].train_loglik));
    const std::string csv = history_csv(result.reports);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,train_loglik,elbo,validation_score,wall_time");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.effective_validation_metric(), ValidationMetric::Em);
    c.e_step_mode = EStepMode::ExactEnumeration;
    EXPECT_EQ(c.effective_validation_metric(), ValidationMetric::Loglik);
    c.weight_mode = WeightMode::RewardEm;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.samples_per_example = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_EQ(e_step_mode_from_string("exact-enumeration"), EStepMode::ExactEnumeration);
    EXPECT_EQ(to_string(EStepMode::Sampled), "sampled");
}

TEST(ArgmaxConsistency, MaxPosteriorLeafIsMaxReward) {
    std::mt19937 gen(2);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        WorldFixture f(generate_world(8, 3, 2, 0.8, seed));
        auto ex = make_questions(f.world, 1, seed)[0];
        auto p = TabularPolicyParams::uniform(f.world.relations, 2, 2);
        for (auto& row : p.think_logits)
            for (double& v : row) v = noise(gen);
        auto leaves = enumerate_trajectories(p, ex, f.retriever);
        std::vector<double> lw;
        for (const auto& l : leaves) lw.push_back(l.answer == ex.gold_answers[0] ? l.log_prob : kLogProbFloor);
        auto w = normalize_weights(lw);
        const auto best = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
        if (leaves[best].answer != ex.gold_answers[0]) continue;
        double max_reward = 0;
        for (const auto& l : leaves) max_reward = std::max<double>(max_reward, exact_match(l.answer, ex.gold_answers));
        EXPECT_EQ(exact_match(leaves[best].answer, ex.gold_answers), max_reward);
    }
}

TEST(ExportSft, RecordsAreOrderedDeterministicAndNormalized) {
    WorldFixture f(make_world({{"A", "r1", "B"}, {"A", "r2", "C"}}, {"r1", "r2"}, 1));
    auto t1 = one_step(f.retriever, "A", "r1", "B", 2);
    auto t2 = one_step(f.retriever, "A", "r2", "C", 2);
    std::vector<WeightedBatch> batches = {
        {"z", "qz", {"B"}, {weighted(t1, "B", 1.0, 0)}},
        {"a", "qa", {"B"}, {weighted(t2, "C", 0.25, 1), weighted(t1, "B", 0.75, 0)}}};
    batches[0].samples[0].id = "z";
    for (auto& s : batches[1].samples) s.id = "a";
    TempDir dir;
    EXPECT_EQ(export_weighted_sft(batches, dir / "a.jsonl"), 3u);
    EXPECT_EQ(export_weighted_sft(batches, dir / "b.jsonl"), 3u);
    const std::string text = read_text(dir / "a.jsonl");
    EXPECT_EQ(text, read_text(dir / "b.jsonl"));

    std::vector<nlohmann::json> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0]["id"], "a");
    EXPECT_EQ(lines[0]["sample"], 0);
    EXPECT_EQ(lines[1]["sample"], 1);
    EXPECT_EQ(lines[2]["id"], "z");
    std::map<std::string, double> sums;
    for (const auto& l : lines) {
        sums[l["id"]] += l["weight"].get<double>();
        ASSERT_EQ(l["messages"].size(), 3u);
        EXPECT_EQ(l["messages"][0]["role"], "system");
        EXPECT_EQ(l["messages"][1]["role"], "user");
        EXPECT_EQ(l["messages"][2]["role"], "assistant");
        EXPECT_EQ(l["weight_mode"], "posterior-logprob");
        for (const char* key : {"em", "f1", "acc"}) EXPECT_TRUE(l["metrics"].contains(key));
    }
    for (const auto& [id, s] : sums) EXPECT_NEAR(s, 1.0, 1e-9) << id;
    EXPECT_EQ(lines[0]["weight"], 0.75);
    EXPECT_EQ(lines[1]["metrics"]["em"], 0);
    EXPECT_THROW(export_weighted_sft(batches, dir / "missing" / "x.jsonl"), IoError);
}

TEST(Warmup, ArthursMagazineTranscript) {
    Passage arthurs{"arthurs", "Arthur's Magazine",
                    "Arthur's Magazine (1844-1846) was an American literary periodical published in Philadelphia."};
    Passage first{"first", "First for Women",
                  "First for Women is a woman's magazine published by Bauer Media Group in the USA. "
                  "The magazine was started in 1989."};
    auto index = build_index({arthurs, first});
    Bm25Retriever retriever(index);
    Example ex;
    ex.id = "hotpot";
    ex.question = "Which magazine was started first, Arthur's Magazine or First for Women?";
    ex.gold_answers = {"Arthur's Magazine"};
    ex.gold_subqueries = std::vector<std::string>{"When did the magazine \"Arthur's Magazine\" start?",
                                                  "When did the magazine \"First for Women\" start?"};
    ex.gold_passages = std::vector<std::string>{"arthurs", "first"};
    ex.gold_evidence = std::vector<std::string>{"1844", "1989"};
    std::vector<Example> data = {ex};
    auto records = warmup_format(data, retriever, 1);
    ASSERT_EQ(records.size(), 1u);
    // Same layout as the hand-written transcript except that the pinned gold
    // passage is always cited as [1].
    std::string expected = read_text(exsearch::testing::fixture_path("arthurs_magazine_transcript.txt"));
    expected.replace(expected.find("<SEARCH> [2]"), 12, "<SEARCH> [1]");
    EXPECT_EQ(records[0]["messages"][2]["content"], expected);
    EXPECT_EQ(records[0]["answer"], "Arthur's Magazine");

    auto t = warmup_trajectory(ex, retriever, 2);
    EXPECT_EQ(t.steps[1].retrieved[0].id, "first"); // pinned even though BM25 might disagree
    EXPECT_EQ(t.steps[1].retrieved.size(), 2u);
}

TEST(Warmup, MissingAnnotation) {
    auto index = build_index({{"a", "", "x"}});
    Bm25Retriever retriever(index);
    Example ex;
    ex.id = "e";
    ex.question = "q";
    ex.gold_answers = {"x"};
    try {
        warmup_trajectory(ex, retriever, 1);
        FAIL();
    } catch (const MissingAnnotation& e) {
        EXPECT_NE(std::string(e.what()).find("gold_subqueries"), std::string::npos);
    }
    ex.gold_subqueries = std::vector<std::string>{"x"};
    ex.gold_answers.clear();
    EXPECT_THROW(warmup_trajectory(ex, retriever, 1), MissingAnnotation);
}

TEST(Warmup, ThinkCountMatchesSubqueryCount) {
    WorldFixture f(generate_world(300, 4, 2, 0.8, 11));
    auto data = make_questions(f.world, 100, 11);
    auto records = warmup_format(data, f.retriever, 3);
    ASSERT_EQ(records.size(), 100u);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string text = records[i]["messages"][2]["content"];
        auto parsed = parse_transcript(text);
        EXPECT_EQ(parsed.steps.size(), data[i].gold_subqueries->size());
        std::size_t thinks = 0;
        for (std::size_t pos = text.find("<THINK>"); pos != std::string::npos; pos = text.find("<THINK>", pos + 1)) ++thinks;
        EXPECT_EQ(thinks, data[i].gold_subqueries->size());
        ASSERT_TRUE(parsed.answer);
        EXPECT_EQ(*parsed.answer, data[i].gold_answers[0]);
        EXPECT_EQ(text.substr(text.rfind("<FINAL>")), "<FINAL> " + data[i].gold_answers[0] + "\n");
    }
}
