#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "exsearch/agent.hpp"
#include "exsearch/em_trainer.hpp"
#include "exsearch/llm_client.hpp"

namespace exsearch {

struct RetrieverConfig {
    std::string index_path; // directory holding index.exsidx, or the file itself
    std::size_t k = 5;
};

struct EngineConfig {
    RetrieverConfig retriever;
    AgentConfig agent;
    TrainConfig trainer;
    std::optional<EndpointConfig> llm;
    std::uint64_t seed = 0;
};

nlohmann::json agent_config_to_json(const AgentConfig& c);
AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig base = {});

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json engine_config_to_json(const EngineConfig& c);
/// Missing keys keep their defaults. Throws std::invalid_argument on
/// out-of-range values and nlohmann::json::exception on type errors.
EngineConfig engine_config_from_json(const nlohmann::json& j);

/// Throws IoError when the file cannot be read, SchemaError when it is not JSON.
EngineConfig load_engine_config(const std::filesystem::path& path);

} // namespace exsearch
