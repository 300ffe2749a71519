#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "exsearch/agent.hpp"
#include "exsearch/config.hpp"
#include "exsearch/em_trainer.hpp"
#include "exsearch/errors.hpp"
#include "exsearch/jsonl.hpp"
#include "exsearch/llm_client.hpp"
#include "exsearch/metrics.hpp"
#include "exsearch/retrieval.hpp"
#include "exsearch/synthetic_world.hpp"
#include "exsearch/tabular_policy.hpp"
#include "exsearch/transcript.hpp"

namespace fs = std::filesystem;
using namespace exsearch;

namespace {

constexpr const char* kIndexFile = "index.exsidx";

struct Global {
    std::string config_path;
    bool json = false;
    std::size_t jobs = 0;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

template <typename T>
void apply(const CLI::Option* opt, T& dst, const T& value) {
    if (opt != nullptr && opt->count() > 0) dst = value;
}

EngineConfig load_config(const Global& g) {
    EngineConfig c = g.config_path.empty() ? EngineConfig{} : load_engine_config(g.config_path);
    apply(g.seed_opt, c.seed, g.seed);
    c.trainer.seed = c.seed;
    c.trainer.jobs = g.jobs;
    return c;
}

fs::path index_file(const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) return p / kIndexFile;
    return p;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(0, "", path.string() + " is not valid JSON: " + e.what());
    }
}

// Loaded corpus plus the retriever over it.
struct Corpus {
    CorpusIndex index;
    std::unique_ptr<Bm25Retriever> retriever;
};

std::unique_ptr<Corpus> open_corpus(const std::string& path) {
    if (path.empty()) throw UsageError("an index is required (--index DIR)");
    auto c = std::make_unique<Corpus>();
    c->index = load_index(index_file(path));
    c->retriever = std::make_unique<Bm25Retriever>(c->index);
    return c;
}

std::unique_ptr<Corpus> corpus_from_world(const SyntheticWorld& world) {
    auto c = std::make_unique<Corpus>();
    c->index = build_index(render_corpus(world));
    c->retriever = std::make_unique<Bm25Retriever>(c->index);
    return c;
}

// Options shared by the commands that drive a policy.
struct PolicyOptions {
    std::string policy = "tabular";
    std::string params_path;
    std::string world_path;
    std::string base_url;
    std::string model;
    int budget = 5;
    std::size_t k = 5;
    bool rerank = false;
    std::size_t rerank_keep = 3;
    CLI::Option* budget_opt = nullptr;
    CLI::Option* k_opt = nullptr;
    CLI::Option* rerank_opt = nullptr;
    CLI::Option* keep_opt = nullptr;
};

void add_policy_options(CLI::App* cmd, PolicyOptions& o) {
    cmd->add_option("--policy", o.policy, "Policy backend")->check(CLI::IsMember({"tabular", "llm"}));
    cmd->add_option("--params", o.params_path, "Tabular policy params JSON");
    cmd->add_option("--world", o.world_path, "World manifest; uniform tabular params when --params is absent");
    cmd->add_option("--base-url", o.base_url, "Chat-completion endpoint base URL");
    cmd->add_option("--model", o.model, "Model name sent to the endpoint");
    o.budget_opt = cmd->add_option("--budget", o.budget, "Maximal number of search steps");
    o.k_opt = cmd->add_option("--k", o.k, "Passages retrieved per sub-query");
    o.rerank_opt = cmd->add_flag("--rerank", o.rerank, "Re-rank retrieved passages before recording");
    o.keep_opt = cmd->add_option("--rerank-keep", o.rerank_keep, "Passages kept after re-ranking");
}

AgentConfig agent_config(const EngineConfig& cfg, const PolicyOptions& o) {
    AgentConfig a = cfg.agent;
    apply(o.budget_opt, a.budget, o.budget);
    apply(o.k_opt, a.k, o.k);
    apply(o.rerank_opt, a.rerank, o.rerank);
    apply(o.keep_opt, a.rerank_keep, o.rerank_keep);
    if (o.keep_opt == nullptr || o.keep_opt->count() == 0) a.rerank_keep = std::min(a.rerank_keep, a.k);
    a.validate();
    return a;
}

// Owns whatever a policy instance needs to stay alive.
struct PolicyHandle {
    std::unique_ptr<LlmClient> client;
    std::unique_ptr<Policy> policy;
    std::optional<TabularPolicyParams> params;
};

TabularPolicyParams tabular_params(const PolicyOptions& o, const AgentConfig& agent) {
    if (!o.params_path.empty()) return params_from_json(read_json(o.params_path));
    if (!o.world_path.empty()) {
        auto world = world_from_json(read_json(o.world_path));
        return TabularPolicyParams::uniform(world.relations, agent.budget, agent.k);
    }
    throw UsageError("the tabular policy needs --params or --world");
}

PolicyHandle make_policy(const EngineConfig& cfg, const PolicyOptions& o, AgentConfig& agent,
                         const Retriever& retriever) {
    PolicyHandle h;
    if (o.policy == "tabular") {
        h.params = tabular_params(o, agent);
        // The tabular heads fix the step budget and the retrieval width.
        agent.budget = h.params->budget();
        agent.k = h.params->k();
        agent.rerank_keep = std::min(agent.rerank_keep, agent.k);
        h.policy = std::make_unique<TabularPolicy>(*h.params, retriever);
    } else if (o.policy == "llm") {
        EndpointConfig ec = cfg.llm.value_or(EndpointConfig{});
        if (!o.base_url.empty()) ec.base_url = o.base_url;
        if (!o.model.empty()) ec.model_name = o.model;
        h.client = std::make_unique<LlmClient>(ec);
        h.policy = std::make_unique<LlmPolicy>(*h.client, retriever);
    } else {
        throw UsageError("unknown policy " + o.policy);
    }
    return h;
}

std::map<std::string, const Example*> by_id(const std::vector<Example>& dataset) {
    std::map<std::string, const Example*> out;
    for (const auto& ex : dataset) {
        if (!out.emplace(ex.id, &ex).second) throw DuplicateId("dataset repeats id " + ex.id);
    }
    return out;
}

std::vector<WeightedBatch> group_batches(const std::vector<Example>& dataset,
                                         const std::vector<WeightedTrajectory>& samples) {
    auto index = by_id(dataset);
    std::map<std::string, std::vector<WeightedTrajectory>> grouped;
    for (const auto& s : samples) {
        if (!index.count(s.id)) throw UnknownId("trajectory id " + s.id + " is not in the dataset");
        grouped[s.id].push_back(s);
    }
    std::vector<WeightedBatch> out;
    for (const auto& ex : dataset) {
        auto it = grouped.find(ex.id);
        if (it == grouped.end()) continue;
        auto& v = it->second;
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.sample < b.sample; });
        out.push_back({ex.id, ex.question, ex.gold_answers, std::move(v)});
    }
    return out;
}

// ---- commands ----

struct IngestOptions {
    std::string corpus;
    std::string index;
};

int cmd_ingest(const Global& g, const IngestOptions& o) {
    auto passages = read_jsonl_file<Passage>(o.corpus);
    auto index = build_index(std::move(passages));
    fs::create_directories(o.index);
    const fs::path path = fs::path(o.index) / kIndexFile;
    save_index(index, path);
    if (g.json) {
        std::cout << nlohmann::json{{"indexed", index.doc_count()}, {"index", path.string()}}.dump() << '\n';
    } else {
        std::cout << "indexed " << index.doc_count() << " passages\n";
    }
    return 0;
}

struct AskOptions {
    std::string question;
    std::string index;
    PolicyOptions policy;
};

int cmd_ask(const Global& g, const AskOptions& o) {
    auto cfg = load_config(g);
    auto agent = agent_config(cfg, o.policy);
    auto corpus = open_corpus(o.index.empty() ? cfg.retriever.index_path : o.index);
    auto handle = make_policy(cfg, o.policy, agent, *corpus->retriever);
    Rng rng(episode_seed(cfg.seed, "ask", 0));
    Episode ep = run_episode(o.question, *handle.policy, *corpus->retriever, agent, rng);
    const std::string transcript = render_transcript(ep.trajectory, ep.answer);
    if (g.json) {
        std::cout << nlohmann::json{{"question", o.question},
                                    {"answer", ep.answer},
                                    {"transcript", transcript},
                                    {"trajectory", trajectory_to_json(ep.trajectory)}}
                         .dump()
                  << '\n';
    } else {
        std::cout << transcript;
    }
    return 0;
}

struct ExploreOptions {
    std::string dataset;
    std::string index;
    std::string out;
    int samples = 2;
    CLI::Option* samples_opt = nullptr;
    PolicyOptions policy;
};

int cmd_explore(const Global& g, const ExploreOptions& o) {
    auto cfg = load_config(g);
    auto agent = agent_config(cfg, o.policy);
    int samples = cfg.trainer.samples_per_example;
    apply(o.samples_opt, samples, o.samples);
    if (samples < 1) throw UsageError("--samples must be at least 1");
    auto dataset = read_jsonl_file<Example>(o.dataset);
    auto corpus = open_corpus(o.index.empty() ? cfg.retriever.index_path : o.index);
    auto handle = make_policy(cfg, o.policy, agent, *corpus->retriever);

    TrainConfig tc = cfg.trainer;
    tc.samples_per_example = samples;
    tc.weight_mode = WeightMode::RewardEm; // weights are assigned later by `weigh`
    auto result = e_step_sampled(dataset, *handle.policy, *corpus->retriever, agent, tc, cfg.seed);

    std::vector<TrajectoryRecord> records;
    for (const auto& b : result.batches)
        for (const auto& s : b.samples) records.push_back({s.id, s.sample, s.trajectory, s.answer, {}});
    write_jsonl_file(o.out, records);
    for (const auto& f : result.failures) std::cerr << "warning: episode failed for " << f.example_id << ": " << f.message << '\n';
    if (g.json) {
        std::cout << nlohmann::json{{"trajectories", records.size()}, {"failures", result.failures.size()}}.dump()
                  << '\n';
    } else {
        std::cout << "explored " << records.size() << " trajectories over " << result.batches.size() << " examples\n";
    }
    return 0;
}

struct WeighOptions {
    std::string trajectories;
    std::string dataset;
    std::string out;
    std::string index;
    std::string mode = "reward-em";
    CLI::Option* mode_opt = nullptr;
    PolicyOptions policy;
};

int cmd_weigh(const Global& g, const WeighOptions& o) {
    auto cfg = load_config(g);
    WeightMode mode = cfg.trainer.weight_mode;
    if (o.mode_opt->count() > 0) mode = weight_mode_from_string(o.mode);
    auto dataset = read_jsonl_file<Example>(o.dataset);
    auto records = read_jsonl_file<TrajectoryRecord>(o.trajectories);
    std::vector<WeightedTrajectory> samples;
    for (const auto& r : records) {
        WeightedTrajectory w;
        w.id = r.id;
        w.sample = r.sample;
        w.trajectory = r.trajectory;
        w.answer = r.answer.value_or("");
        w.extra = r.extra;
        samples.push_back(std::move(w));
    }
    auto batches = group_batches(dataset, samples);

    std::unique_ptr<Corpus> corpus;
    PolicyHandle handle;
    if (mode == WeightMode::PosteriorLogprob) {
        auto agent = agent_config(cfg, o.policy);
        corpus = open_corpus(o.index.empty() ? cfg.retriever.index_path : o.index);
        handle = make_policy(cfg, o.policy, agent, *corpus->retriever);
    }
    try {
        assign_weights(batches, mode, handle.policy.get());
    } catch (const LogprobsUnsupported& e) {
        std::cerr << "warning: LogprobsUnsupported: " << e.what() << "; falling back to reward-em\n";
        mode = WeightMode::RewardEm;
        assign_weights(batches, mode, nullptr);
    }

    std::vector<WeightedTrajectory> out;
    for (auto& b : batches)
        for (auto& s : b.samples) out.push_back(std::move(s));
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.id != b.id ? a.id < b.id : a.sample < b.sample;
    });
    write_jsonl_file(o.out, out);
    if (g.json) {
        std::cout << nlohmann::json{{"weighted", out.size()}, {"weight_mode", to_string(mode)}}.dump() << '\n';
    } else {
        std::cout << "weighted " << out.size() << " trajectories (" << to_string(mode) << ")\n";
    }
    return 0;
}

struct ExportOptions {
    std::string weighted;
    std::string dataset;
    std::string out;
};

int cmd_export_sft(const Global& g, const ExportOptions& o) {
    auto dataset = read_jsonl_file<Example>(o.dataset);
    auto samples = read_jsonl_file<WeightedTrajectory>(o.weighted);
    auto batches = group_batches(dataset, samples);
    const std::size_t n = export_weighted_sft(batches, o.out);
    if (g.json) {
        std::cout << nlohmann::json{{"records", n}, {"out", o.out}}.dump() << '\n';
    } else {
        std::cout << "exported " << n << " records\n";
    }
    return 0;
}

struct TrainOptions {
    std::string world;
    std::string train;
    std::string validation;
    std::string index;
    std::string init;
    std::string params_out = "params.json";
    std::string history = "history.csv";
    int iterations = 5;
    int samples = 2;
    std::string mode = "posterior-logprob";
    std::string e_step = "sampled";
    int patience = 1;
    std::string metric;
    double smoothing = 1e-3;
    int budget = 2;
    std::size_t k = 3;
    double temperature = 1.0;
    CLI::Option *iterations_opt{}, *samples_opt{}, *mode_opt{}, *e_step_opt{}, *patience_opt{}, *metric_opt{},
        *smoothing_opt{}, *budget_opt{}, *k_opt{};
};

int cmd_train(const Global& g, const TrainOptions& o) {
    auto cfg = load_config(g);
    TrainConfig tc = cfg.trainer;
    apply(o.iterations_opt, tc.iterations, o.iterations);
    apply(o.samples_opt, tc.samples_per_example, o.samples);
    if (o.mode_opt->count()) tc.weight_mode = weight_mode_from_string(o.mode);
    if (o.e_step_opt->count()) tc.e_step_mode = e_step_mode_from_string(o.e_step);
    apply(o.patience_opt, tc.early_stop_patience, o.patience);
    if (o.metric_opt->count()) tc.validation_metric = validation_metric_from_string(o.metric);
    apply(o.smoothing_opt, tc.smoothing, o.smoothing);
    tc.validate();

    AgentConfig agent = cfg.agent;
    int budget = o.budget;
    std::size_t k = o.k;
    if (!o.budget_opt->count() && !g.config_path.empty()) budget = cfg.agent.budget;
    if (!o.k_opt->count() && !g.config_path.empty()) k = cfg.agent.k;

    std::unique_ptr<Corpus> corpus;
    std::vector<std::string> relations;
    if (!o.world.empty()) {
        auto world = world_from_json(read_json(o.world));
        relations = world.relations;
        corpus = o.index.empty() ? corpus_from_world(world) : open_corpus(o.index);
    } else {
        corpus = open_corpus(o.index.empty() ? cfg.retriever.index_path : o.index);
    }
    TabularPolicyParams init;
    if (!o.init.empty()) {
        init = params_from_json(read_json(o.init));
    } else {
        if (relations.empty()) throw UsageError("train needs --world or --init to know the relations");
        init = TabularPolicyParams::uniform(relations, budget, k);
        init.temperature = o.temperature;
    }
    auto train = read_jsonl_file<Example>(o.train);
    std::vector<Example> validation;
    if (!o.validation.empty()) validation = read_jsonl_file<Example>(o.validation);

    auto result = em_train(train, validation, init, *corpus->retriever, agent, tc);
    write_file(o.params_out, params_to_json(result.params).dump(2) + "\n");
    write_file(o.history, history_csv(result.reports));

    if (g.json) {
        nlohmann::json reports = nlohmann::json::array();
        for (const auto& r : result.reports)
            reports.push_back({{"iteration", r.iteration},
                               {"train_loglik", r.train_loglik},
                               {"elbo", r.elbo},
                               {"validation_score", r.validation_score},
                               {"wall_time", r.wall_time}});
        std::cout << nlohmann::json{{"reports", reports}, {"stopped_early", result.stopped_early}}.dump() << '\n';
    } else {
        std::cout << fmt::format("{:>9}  {:>14}  {:>14}  {:>10}  {:>8}\n", "iteration", "train_loglik", "elbo",
                                 "validation", "seconds");
        for (const auto& r : result.reports)
            std::cout << fmt::format("{:>9}  {:>14.6f}  {:>14.6f}  {:>10.4f}  {:>8.2f}\n", r.iteration,
                                     r.train_loglik, r.elbo, r.validation_score, r.wall_time);
        if (result.stopped_early) std::cout << "stopped early\n";
    }
    return 0;
}

struct EvalOptions {
    std::string predictions;
    std::string dataset;
    std::string index;
    std::vector<std::size_t> ks{1, 3, 5};
    std::string out;
    std::string csv;
};

int cmd_eval(const Global& g, const EvalOptions& o) {
    auto dataset = read_jsonl_file<Example>(o.dataset);
    std::unique_ptr<Corpus> corpus;
    if (!o.index.empty()) corpus = open_corpus(o.index);

    std::vector<Prediction> predictions;
    std::ifstream in(o.predictions);
    if (!in) throw IoError("cannot read " + o.predictions);
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(line, "", std::string("invalid JSON: ") + e.what());
        }
        if (!j.contains("id") || !j["id"].is_string()) throw SchemaError(line, "id", "missing required field \"id\"");
        Prediction p;
        p.id = j["id"].get<std::string>();
        p.answer = j.value("answer", std::string());
        if (corpus) {
            auto lookup = [&](const std::string& id) { return corpus->index.find(id); };
            if (j.contains("trajectory")) {
                p.ranked = trajectory_pool(trajectory_from_json(j["trajectory"], line), lookup);
            } else if (j.contains("passages")) {
                std::vector<Passage> ranked;
                for (const auto& id : j["passages"])
                    if (const Passage* ps = lookup(id.get<std::string>())) ranked.push_back(*ps);
                p.ranked = std::move(ranked);
            }
        }
        predictions.push_back(std::move(p));
    }

    std::vector<std::size_t> ks;
    if (corpus) ks = o.ks;
    auto report = evaluate_run(predictions, dataset, ks);
    auto json = report_to_json(report);
    if (!o.out.empty()) write_file(o.out, json.dump(2) + "\n");
    if (!o.csv.empty()) write_file(o.csv, report_to_csv(report));
    if (g.json) {
        std::cout << json.dump() << '\n';
    } else {
        std::cout << fmt::format("examples {}  missing {}\n", report.n_examples, report.n_missing);
        std::cout << fmt::format("em {:.4f}  f1 {:.4f}  acc {:.4f}\n", report.em, report.f1, report.acc);
        for (const auto& [k, v] : report.recall_at)
            std::cout << fmt::format("recall@{} {:.4f}  precision@{} {:.4f}\n", k, v, k, report.precision_at.at(k));
    }
    return 0;
}

struct SynthOptions {
    int entities = 20;
    int relations = 4;
    int hops = 2;
    double density = 0.8;
    int questions = 10;
    int validation = 0;
    std::string out;
};

int cmd_synth_world(const Global& g, const SynthOptions& o) {
    auto world = generate_world(o.entities, o.relations, o.hops, o.density, g.seed);
    auto examples = make_questions(world, o.questions + o.validation, g.seed);
    std::vector<Example> train(examples.begin(), examples.begin() + o.questions);
    std::vector<Example> held(examples.begin() + o.questions, examples.end());
    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_jsonl_file(dir / "corpus.jsonl", render_corpus(world));
    write_jsonl_file(dir / "examples.jsonl", train);
    if (!held.empty()) write_jsonl_file(dir / "validation.jsonl", held);
    write_file(dir / "world.json", world_to_json(world).dump(2) + "\n");
    if (g.json) {
        std::cout << nlohmann::json{{"facts", world.facts.size()},
                                    {"examples", train.size()},
                                    {"validation", held.size()},
                                    {"out", dir.string()}}
                         .dump()
                  << '\n';
    } else {
        std::cout << "world with " << world.facts.size() << " facts, " << train.size() << " questions";
        if (!held.empty()) std::cout << " + " << held.size() << " held out";
        std::cout << " written to " << dir.string() << '\n';
    }
    return 0;
}

struct WarmupOptions {
    std::string dataset;
    std::string index;
    std::string out;
    std::size_t k = 5;
};

int cmd_warmup_format(const Global& g, const WarmupOptions& o) {
    auto cfg = load_config(g);
    auto dataset = read_jsonl_file<Example>(o.dataset);
    auto corpus = open_corpus(o.index.empty() ? cfg.retriever.index_path : o.index);
    auto records = warmup_format(dataset, *corpus->retriever, o.k);
    std::string text;
    for (const auto& r : records) text += r.dump() + "\n";
    write_file(o.out, text);
    if (g.json) {
        std::cout << nlohmann::json{{"records", records.size()}, {"out", o.out}}.dump() << '\n';
    } else {
        std::cout << "formatted " << records.size() << " warm-up records\n";
    }
    return 0;
}

int exit_code(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::Usage: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Endpoint: return 3;
    }
    return 2;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agentic multi-hop search with expectation-maximization training", "exsearch"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--config", g.config_path, "Engine config JSON; explicit flags override it");
    app.add_flag("--json", g.json, "Machine-readable JSON on standard output");
    app.add_option("--jobs", g.jobs, "Worker threads (0 = logical cores)");
    g.seed_opt = app.add_option("--seed", g.seed, "Global seed");

    IngestOptions ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Build a BM25 index from a passage JSONL corpus")->fallthrough();
    c_ingest->add_option("--corpus", ingest.corpus, "Passage JSONL")->required();
    c_ingest->add_option("--index", ingest.index, "Output directory")->required();

    AskOptions ask;
    auto* c_ask = app.add_subcommand("ask", "Answer one question and print the transcript")->fallthrough();
    c_ask->add_option("--question", ask.question, "Question text")->required();
    c_ask->add_option("--index", ask.index, "Index directory");
    add_policy_options(c_ask, ask.policy);

    ExploreOptions explore;
    auto* c_explore = app.add_subcommand("explore", "Sample trajectories for every example")->fallthrough();
    c_explore->add_option("--dataset", explore.dataset, "Example JSONL")->required();
    c_explore->add_option("--index", explore.index, "Index directory");
    c_explore->add_option("--out", explore.out, "Trajectory JSONL output")->required();
    explore.samples_opt = c_explore->add_option("--samples", explore.samples, "Trajectories per example");
    add_policy_options(c_explore, explore.policy);

    WeighOptions weigh;
    auto* c_weigh = app.add_subcommand("weigh", "Attach normalized importance weights to trajectories")->fallthrough();
    c_weigh->add_option("--trajectories", weigh.trajectories, "Trajectory JSONL")->required();
    c_weigh->add_option("--dataset", weigh.dataset, "Example JSONL with gold answers")->required();
    c_weigh->add_option("--out", weigh.out, "Weighted trajectory JSONL output")->required();
    c_weigh->add_option("--index", weigh.index, "Index directory (posterior-logprob mode)");
    weigh.mode_opt = c_weigh->add_option("--mode", weigh.mode, "Weight mode")
                         ->check(CLI::IsMember({"posterior-logprob", "reward-em", "reward-acc", "reward-f1"}));
    add_policy_options(c_weigh, weigh.policy);

    TrainOptions train;
    auto* c_train = app.add_subcommand("train", "EM-train a tabular policy")->fallthrough();
    c_train->add_option("--world", train.world, "World manifest JSON");
    c_train->add_option("--train", train.train, "Training example JSONL")->required();
    c_train->add_option("--validation", train.validation, "Validation example JSONL");
    c_train->add_option("--index", train.index, "Index directory (defaults to the world corpus)");
    c_train->add_option("--init", train.init, "Initial params JSON (default uniform)");
    c_train->add_option("--params-out", train.params_out, "Final params JSON");
    c_train->add_option("--history", train.history, "History CSV");
    train.iterations_opt = c_train->add_option("--iterations", train.iterations, "EM iterations");
    train.samples_opt = c_train->add_option("--samples", train.samples, "Trajectories per example");
    train.mode_opt = c_train->add_option("--mode", train.mode, "Weight mode")
                         ->check(CLI::IsMember({"posterior-logprob", "reward-em", "reward-acc", "reward-f1"}));
    train.e_step_opt = c_train->add_option("--e-step", train.e_step, "E-step mode")
                           ->check(CLI::IsMember({"sampled", "exact-enumeration"}));
    train.patience_opt = c_train->add_option("--patience", train.patience, "Early-stop patience (0 disables)");
    train.metric_opt = c_train->add_option("--validation-metric", train.metric, "Validation metric")
                           ->check(CLI::IsMember({"loglik", "em", "acc"}));
    train.smoothing_opt = c_train->add_option("--smoothing", train.smoothing, "Additive M-step smoothing");
    train.budget_opt = c_train->add_option("--budget", train.budget, "Step budget of uniform params");
    train.k_opt = c_train->add_option("--k", train.k, "Retrieval width of uniform params");
    c_train->add_option("--temperature", train.temperature, "Sampling temperature of uniform params");

    EvalOptions eval;
    auto* c_eval = app.add_subcommand("eval", "Score predictions against gold answers")->fallthrough();
    c_eval->add_option("--predictions", eval.predictions, "Prediction JSONL {id, answer}")->required();
    c_eval->add_option("--dataset", eval.dataset, "Example JSONL")->required();
    c_eval->add_option("--index", eval.index, "Index directory for retrieval metrics");
    c_eval->add_option("--k", eval.ks, "Cutoffs for Recall@K/Precision@K")->delimiter(',');
    c_eval->add_option("--out", eval.out, "JSON report output");
    c_eval->add_option("--csv", eval.csv, "CSV report output");

    ExportOptions exp;
    auto* c_export = app.add_subcommand("export-sft", "Write weighted SFT records")->fallthrough();
    c_export->add_option("--weighted", exp.weighted, "Weighted trajectory JSONL")->required();
    c_export->add_option("--dataset", exp.dataset, "Example JSONL")->required();
    c_export->add_option("--out", exp.out, "SFT JSONL output")->required();

    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth-world", "Generate a synthetic multi-hop world")->fallthrough();
    c_synth->add_option("--entities", synth.entities, "Entity count");
    c_synth->add_option("--relations", synth.relations, "Relation count");
    c_synth->add_option("--hops", synth.hops, "Hops per question");
    c_synth->add_option("--density", synth.density, "Probability of each (subject, relation) fact");
    c_synth->add_option("--questions", synth.questions, "Training questions");
    c_synth->add_option("--validation", synth.validation, "Held-out questions");
    c_synth->add_option("--out", synth.out, "Output directory")->required();

    WarmupOptions warm;
    auto* c_warm = app.add_subcommand("warmup-format", "Format annotated examples as warm-up transcripts")->fallthrough();
    c_warm->add_option("--dataset", warm.dataset, "Annotated example JSONL")->required();
    c_warm->add_option("--index", warm.index, "Index directory");
    c_warm->add_option("--out", warm.out, "SFT JSONL output")->required();
    c_warm->add_option("--k", warm.k, "Passages per sub-query");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << one_line(e.what()) << '\n';
        return 1;
    }

    try {
        if (c_ingest->parsed()) return cmd_ingest(g, ingest);
        if (c_ask->parsed()) return cmd_ask(g, ask);
        if (c_explore->parsed()) return cmd_explore(g, explore);
        if (c_weigh->parsed()) return cmd_weigh(g, weigh);
        if (c_train->parsed()) return cmd_train(g, train);
        if (c_eval->parsed()) return cmd_eval(g, eval);
        if (c_export->parsed()) return cmd_export_sft(g, exp);
        if (c_synth->parsed()) return cmd_synth_world(g, synth);
        if (c_warm->parsed()) return cmd_warmup_format(g, warm);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
        return exit_code(e.category());
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: UsageError: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: SchemaError: " << one_line(e.what()) << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << '\n';
        return 2;
    }
    return 1;
}
