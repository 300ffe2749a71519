#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/policy.hpp"
#include "exsearch/retrieval.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

enum class LogprobSupport { Yes, No, Probe };

std::string_view to_string(LogprobSupport s);
LogprobSupport logprob_support_from_string(std::string_view name);

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "default";
    std::string api_key_env = "EXSEARCH_API_KEY";
    double timeout = 60.0; // seconds
    int max_retries = 3;
    std::size_t parallelism_cap = 4;
    LogprobSupport supports_logprobs = LogprobSupport::Probe;
    double backoff_base = 1.0; // seconds; doubled per retry, with jitter
    int max_tokens = 512;

    /// Throws std::invalid_argument when timeout <= 0 or parallelism_cap < 1.
    void validate() const;
};

nlohmann::json endpoint_config_to_json(const EndpointConfig& config);
EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

struct ChatTurn {
    enum class Role { System, User, Assistant };
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatTurn&) const = default;
};

std::string_view to_string(ChatTurn::Role role);

/// Instruction part of the agent prompt (everything before the question).
std::string build_system_prompt();
/// "<USER QUERY> {question}\nYour Output:".
std::string build_user_turn(std::string_view question);
/// The full template with the placeholder substituted:
/// build_system_prompt() + build_user_turn(question).
std::string build_full_prompt(std::string_view question);

/// Renders a document block as it appears after a <SEARCH> line.
std::string render_documents(std::span<const RetrievedPassage> docs);

/// Request body for a chat completion. Pure function of its inputs.
nlohmann::json build_chat_request(const EndpointConfig& config, std::span<const ChatTurn> turns,
                                  std::span<const std::string> stop_sequences, int max_tokens);

class LlmClient {
public:
    explicit LlmClient(EndpointConfig config);
    ~LlmClient();
    LlmClient(const LlmClient&) = delete;
    LlmClient& operator=(const LlmClient&) = delete;

    const EndpointConfig& config() const noexcept { return config_; }

    /// Assistant text of one chat completion. Throws AuthError (missing key,
    /// 401, 403), EndpointError once retries are exhausted, Timeout.
    std::string complete(std::span<const ChatTurn> turns, std::span<const std::string> stop_sequences = {},
                         std::optional<int> max_tokens = std::nullopt) const;

    /// Sum of the natural-log token probabilities of `y` continuing the
    /// transcript context. Throws LogprobsUnsupported.
    double score_answer_logprob(std::string_view question, const Trajectory& trajectory, std::string_view y,
                                const Retriever* retriever = nullptr) const;

    /// Resolved logprob support; probes the endpoint once when configured
    /// as Probe and caches the result.
    bool supports_logprobs() const;

    /// Raw POST with retry handling; returns the parsed response body.
    nlohmann::json post(const nlohmann::json& body) const;

    std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
    struct Impl;
    EndpointConfig config_;
    std::unique_ptr<Impl> impl_;
    mutable std::atomic<std::size_t> requests_{0};
    mutable std::once_flag probe_once_;
    mutable bool probe_result_ = false;
};

/// Messages for the agent turn: system prompt, user turn, and the
/// transcript so far as an assistant prefix (omitted when empty).
std::vector<ChatTurn> agent_messages(std::string_view question, std::string_view assistant_prefix);

/// Transcript context with document blocks after each <SEARCH> line.
std::string render_context(const Trajectory& trajectory, const Retriever* retriever);

/// Policy backed by a chat-completion endpoint. Decision log-probs are
/// reported as 0.
class LlmPolicy final : public Policy {
public:
    LlmPolicy(const LlmClient& client, const Retriever& retriever);

    PolicyDecision propose_subquery(const PolicyState& state, Rng& rng) const override;
    PolicyDecision extract_evidence(const PolicyState& state, std::string_view sub_query,
                                    std::span<const RetrievedPassage> retrieved, Rng& rng) const override;
    PolicyDecision answer(std::string_view question, const Trajectory& trajectory, Rng& rng) const override;
    double score_answer(std::string_view question, const Trajectory& trajectory, std::string_view y) const override;
    std::string rank(std::string_view question, std::string_view sub_query,
                     std::span<const RetrievedPassage> retrieved) const override;

private:
    const LlmClient* client_;
    const Retriever* retriever_;
};

} // namespace exsearch
