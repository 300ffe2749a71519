#include "exsearch/config.hpp"

#include <fstream>
#include <sstream>

#include "exsearch/errors.hpp"

namespace exsearch {

nlohmann::json agent_config_to_json(const AgentConfig& c) {
    return {{"budget", c.budget},
            {"k", c.k},
            {"rerank", c.rerank},
            {"rerank_keep", c.rerank_keep},
            {"dedup_subqueries", c.dedup_subqueries}};
}

AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig c) {
    c.budget = j.value("budget", c.budget);
    c.k = j.value("k", c.k);
    c.rerank = j.value("rerank", c.rerank);
    c.rerank_keep = j.value("rerank_keep", c.rerank_keep);
    c.dedup_subqueries = j.value("dedup_subqueries", c.dedup_subqueries);
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j = {{"iterations", c.iterations},
                        {"samples_per_example", c.samples_per_example},
                        {"weight_mode", to_string(c.weight_mode)},
                        {"e_step_mode", to_string(c.e_step_mode)},
                        {"early_stop_patience", c.early_stop_patience},
                        {"smoothing", c.smoothing},
                        {"enumeration_cap", c.enumeration_cap}};
    if (c.validation_metric) j["validation_metric"] = to_string(*c.validation_metric);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.iterations = j.value("iterations", c.iterations);
    c.samples_per_example = j.value("samples_per_example", c.samples_per_example);
    if (j.contains("weight_mode")) c.weight_mode = weight_mode_from_string(j.at("weight_mode").get<std::string>());
    if (j.contains("e_step_mode")) c.e_step_mode = e_step_mode_from_string(j.at("e_step_mode").get<std::string>());
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    if (j.contains("validation_metric"))
        c.validation_metric = validation_metric_from_string(j.at("validation_metric").get<std::string>());
    c.smoothing = j.value("smoothing", c.smoothing);
    c.enumeration_cap = j.value("enumeration_cap", c.enumeration_cap);
    return c;
}

nlohmann::json engine_config_to_json(const EngineConfig& c) {
    nlohmann::json j = {{"retriever", {{"index", c.retriever.index_path}, {"k", c.retriever.k}}},
                        {"agent", agent_config_to_json(c.agent)},
                        {"trainer", train_config_to_json(c.trainer)},
                        {"seed", c.seed}};
    if (c.llm) j["llm"] = endpoint_config_to_json(*c.llm);
    return j;
}

EngineConfig engine_config_from_json(const nlohmann::json& j) {
    EngineConfig c;
    if (j.contains("retriever")) {
        const auto& r = j.at("retriever");
        c.retriever.index_path = r.value("index", c.retriever.index_path);
        c.retriever.k = r.value("k", c.retriever.k);
        c.agent.k = c.retriever.k;
    }
    if (j.contains("agent")) c.agent = agent_config_from_json(j.at("agent"), c.agent);
    if (j.contains("trainer")) c.trainer = train_config_from_json(j.at("trainer"), c.trainer);
    if (j.contains("llm") && !j.at("llm").is_null()) c.llm = endpoint_config_from_json(j.at("llm"));
    c.seed = j.value("seed", c.seed);
    c.trainer.seed = c.seed;
    c.agent.validate();
    c.trainer.validate();
    return c;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(0, "", std::string("config is not valid JSON: ") + e.what());
    }
    return engine_config_from_json(j);
}

} // namespace exsearch
