#include "exsearch/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <semaphore>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "exsearch/errors.hpp"
#include "exsearch/transcript.hpp"

namespace exsearch {
namespace {

constexpr std::string_view kSystemPrompt =
    "You are an intelligent search agent capable of simulating a question-answering process by actively seeking "
    "information from Wikipedia to answer a given question.\n"
    "\n"
    "Specifically, given an open-domain query, please iteratively: (1) Formulate a sub-query to search on "
    "Wikipedia; (2) Select useful documents from the search results and (3) Extract supporting facts from the "
    "selected documents.\n"
    "Your output should include three types of special actions corresponding to the above steps:\n"
    "(1) <THINK>: Formulate a sub-query.\n"
    "(2) <SEARCH>: Retrieve and carefully read the documents using the formulated sub-query.\n"
    "(3) <RECORD>: Extract the answer to the sub-query from the documents.\n"
    "\n"
    "Since this is a multi-hop question, your output should interleave <THINK>, <SEARCH> and <RECORD> actions "
    "until reaching the final answer. Conclude your output with the special token <FINIAL> followed by the final "
    "answer.\n"
    "\n"
    "Below is the task for you to complete:\n"
    "\n";

constexpr std::string_view kRankInstruction =
    "Rank the documents below by how useful they are for the sub-query. Reply with a ranked list of selected "
    "identifiers in the form [2] > [1] > [3].\n";

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) out.emplace_back(text.substr(start));
            break;
        }
        out.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

bool starts_with_tag(std::string_view line, std::string_view tag) {
    std::string t = trim(line);
    if (t.size() < tag.size()) return false;
    for (std::size_t i = 0; i < tag.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(t[i])) != tag[i]) return false;
    return true;
}

std::string after_tag(std::string_view line, std::string_view tag) {
    std::string t = trim(line);
    return trim(std::string_view(t).substr(tag.size()));
}

struct SplitUrl {
    std::string host; // scheme://host[:port]
    std::string path; // without trailing slash
};

SplitUrl split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("base_url must include a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    SplitUrl out;
    if (slash == std::string::npos) {
        out.host = url;
    } else {
        out.host = url.substr(0, slash);
        out.path = url.substr(slash);
    }
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

} // namespace

std::string_view to_string(LogprobSupport s) {
    switch (s) {
    case LogprobSupport::Yes: return "yes";
    case LogprobSupport::No: return "no";
    case LogprobSupport::Probe: return "probe";
    }
    return "probe";
}

LogprobSupport logprob_support_from_string(std::string_view name) {
    if (name == "yes") return LogprobSupport::Yes;
    if (name == "no") return LogprobSupport::No;
    if (name == "probe") return LogprobSupport::Probe;
    throw std::invalid_argument("unknown supports_logprobs value: " + std::string(name));
}

void EndpointConfig::validate() const {
    if (!(timeout > 0.0)) throw std::invalid_argument("endpoint timeout must be positive");
    if (parallelism_cap < 1) throw std::invalid_argument("parallelism_cap must be at least 1");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
    if (backoff_base < 0.0) throw std::invalid_argument("backoff_base must be non-negative");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be at least 1");
    split_url(base_url);
}

nlohmann::json endpoint_config_to_json(const EndpointConfig& c) {
    return {{"base_url", c.base_url},
            {"model_name", c.model_name},
            {"api_key_env", c.api_key_env},
            {"timeout", c.timeout},
            {"max_retries", c.max_retries},
            {"parallelism_cap", c.parallelism_cap},
            {"supports_logprobs", to_string(c.supports_logprobs)},
            {"backoff_base", c.backoff_base},
            {"max_tokens", c.max_tokens}};
}

EndpointConfig endpoint_config_from_json(const nlohmann::json& j) {
    EndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model_name", c.model_name);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout = j.value("timeout", c.timeout);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.parallelism_cap = j.value("parallelism_cap", c.parallelism_cap);
    if (j.contains("supports_logprobs")) c.supports_logprobs = logprob_support_from_string(j.at("supports_logprobs").get<std::string>());
    c.backoff_base = j.value("backoff_base", c.backoff_base);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.validate();
    return c;
}

std::string_view to_string(ChatTurn::Role role) {
    switch (role) {
    case ChatTurn::Role::System: return "system";
    case ChatTurn::Role::User: return "user";
    case ChatTurn::Role::Assistant: return "assistant";
    }
    return "user";
}

std::string build_system_prompt() { return std::string(kSystemPrompt); }

std::string build_user_turn(std::string_view question) {
    return "<USER QUERY> " + std::string(question) + "\nYour Output:";
}

std::string build_full_prompt(std::string_view question) { return build_system_prompt() + build_user_turn(question); }

std::string render_documents(std::span<const RetrievedPassage> docs) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        out += "[" + std::to_string(i + 1) + "] Title: " + docs[i].passage.title + ". Content: " + docs[i].passage.text +
               "\n";
    }
    return out;
}

nlohmann::json build_chat_request(const EndpointConfig& config, std::span<const ChatTurn> turns,
                                  std::span<const std::string> stop_sequences, int max_tokens) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& t : turns) {
        if (t.role != ChatTurn::Role::Assistant && t.content.empty())
            throw std::invalid_argument("system and user turns must not be empty");
        messages.push_back({{"role", to_string(t.role)}, {"content", t.content}});
    }
    nlohmann::json body = {{"model", config.model_name}, {"messages", messages}, {"max_tokens", max_tokens}};
    if (!stop_sequences.empty()) body["stop"] = std::vector<std::string>(stop_sequences.begin(), stop_sequences.end());
    return body;
}

struct LlmClient::Impl {
    explicit Impl(std::size_t cap) : slots(static_cast<std::ptrdiff_t>(std::min<std::size_t>(cap, 1024))) {}
    std::counting_semaphore<1024> slots;
};

LlmClient::LlmClient(EndpointConfig config) : config_(std::move(config)) {
    config_.validate();
    impl_ = std::make_unique<Impl>(config_.parallelism_cap);
}

LlmClient::~LlmClient() = default;

nlohmann::json LlmClient::post(const nlohmann::json& body) const {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
        throw AuthError("environment variable " + config_.api_key_env + " is not set");

    const SplitUrl url = split_url(config_.base_url);
    const std::string path = url.path + "/chat/completions";
    const std::string payload = body.dump();
    const auto secs = static_cast<time_t>(config_.timeout);
    const auto usecs = static_cast<time_t>((config_.timeout - static_cast<double>(secs)) * 1e6);

    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    std::string last_error;
    bool last_was_timeout = false;

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::uniform_real_distribution<double> jitter(0.0, 0.5);
            const double delay = config_.backoff_base * std::pow(2.0, attempt - 1) * (1.0 + jitter(jitter_rng));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }

        httplib::Result res{nullptr, httplib::Error::Unknown};
        {
            impl_->slots.acquire();
            try {
                httplib::Client cli(url.host);
                cli.set_connection_timeout(secs, usecs);
                cli.set_read_timeout(secs, usecs);
                cli.set_write_timeout(secs, usecs);
                cli.set_bearer_token_auth(key);
                ++requests_;
                res = cli.Post(path, payload, "application/json");
            } catch (...) {
                impl_->slots.release();
                throw;
            }
            impl_->slots.release();
        }

        if (!res) {
            const auto err = res.error();
            last_was_timeout = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
            last_error = "transport error: " + httplib::to_string(err);
            continue;
        }
        const int status = res->status;
        if (status == 401 || status == 403)
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
        if (status == 429 || status >= 500) {
            last_was_timeout = false;
            last_error = "HTTP " + std::to_string(status);
            continue;
        }
        if (status < 200 || status >= 300)
            throw EndpointError("HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw EndpointError(std::string("malformed response body: ") + e.what());
        }
    }
    const std::string msg = "request failed after " + std::to_string(config_.max_retries + 1) +
                            " attempts: " + last_error;
    if (last_was_timeout) throw Timeout(msg);
    throw EndpointError(msg);
}

std::string LlmClient::complete(std::span<const ChatTurn> turns, std::span<const std::string> stop_sequences,
                                std::optional<int> max_tokens) const {
    auto body = build_chat_request(config_, turns, stop_sequences, max_tokens.value_or(config_.max_tokens));
    auto response = post(body);
    try {
        const auto& content = response.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw EndpointError(std::string("response lacks choices[0].message.content: ") + e.what());
    }
}

bool LlmClient::supports_logprobs() const {
    switch (config_.supports_logprobs) {
    case LogprobSupport::Yes: return true;
    case LogprobSupport::No: return false;
    case LogprobSupport::Probe: break;
    }
    std::call_once(probe_once_, [this] {
        std::vector<ChatTurn> turns{{ChatTurn::Role::User, "ping"}};
        auto body = build_chat_request(config_, turns, {}, 1);
        body["logprobs"] = true;
        auto response = post(body);
        const auto& choices = response.value("choices", nlohmann::json::array());
        probe_result_ = !choices.empty() && choices[0].contains("logprobs") && !choices[0]["logprobs"].is_null();
    });
    return probe_result_;
}

double LlmClient::score_answer_logprob(std::string_view question, const Trajectory& trajectory, std::string_view y,
                                       const Retriever* retriever) const {
    if (!supports_logprobs()) throw LogprobsUnsupported("endpoint does not report token logprobs");
    const std::string answer = trim(y);
    const std::string prefix = render_context(trajectory, retriever) + std::string(kFinalTag) + " " + answer;
    auto turns = agent_messages(question, prefix);
    auto body = build_chat_request(config_, turns, {}, 1);
    body["logprobs"] = true;
    body["echo"] = true;
    auto response = post(body);

    const nlohmann::json* tokens = nullptr;
    if (response.contains("choices") && !response["choices"].empty()) {
        const auto& choice = response["choices"][0];
        if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
            choice["logprobs"]["content"].is_array())
            tokens = &choice["logprobs"]["content"];
    }
    if (tokens == nullptr) throw LogprobsUnsupported("response carries no token logprobs");

    // Walk back from the end until the token texts spell the answer.
    std::string acc;
    double total = 0.0;
    for (auto it = tokens->rbegin(); it != tokens->rend(); ++it) {
        acc = it->value("token", std::string()) + acc;
        total += it->value("logprob", 0.0);
        const std::string t = trim(acc);
        if (t == answer) return total;
        if (t.size() > answer.size() || answer.compare(answer.size() - t.size(), t.size(), t) != 0) break;
    }
    throw EndpointError("token logprobs do not align with the answer text");
}

std::vector<ChatTurn> agent_messages(std::string_view question, std::string_view assistant_prefix) {
    std::vector<ChatTurn> turns{{ChatTurn::Role::System, build_system_prompt()},
                                {ChatTurn::Role::User, build_user_turn(question)}};
    if (!assistant_prefix.empty()) turns.push_back({ChatTurn::Role::Assistant, std::string(assistant_prefix)});
    return turns;
}

std::string render_context(const Trajectory& trajectory, const Retriever* retriever) {
    std::string out;
    for (const Step& step : trajectory.steps) {
        Trajectory single;
        single.question = trajectory.question;
        single.budget = std::max(1, trajectory.budget);
        Step s = step;
        s.hop = 1;
        single.steps.push_back(s);
        auto lines = split_lines(render_transcript(single, std::nullopt));
        for (const auto& line : lines) {
            out += line + "\n";
            if (retriever != nullptr && starts_with_tag(line, kSearchTag)) {
                std::vector<RetrievedPassage> docs;
                const auto& ids_source = step.selected;
                if (ids_source) {
                    for (const auto& id : *ids_source)
                        if (const Passage* p = retriever->passage(id)) docs.push_back({*p, 0.0, 0});
                } else {
                    for (const auto& sp : step.retrieved)
                        if (const Passage* p = retriever->passage(sp.id)) docs.push_back({*p, sp.score, sp.rank});
                }
                out += render_documents(docs);
            }
        }
    }
    return out;
}

LlmPolicy::LlmPolicy(const LlmClient& client, const Retriever& retriever) : client_(&client), retriever_(&retriever) {}

PolicyDecision LlmPolicy::propose_subquery(const PolicyState& state, Rng&) const {
    static const Trajectory kEmpty{};
    const Trajectory& history = state.history ? *state.history : kEmpty;
    auto turns = agent_messages(state.question, render_context(history, retriever_));
    static const std::vector<std::string> kStops{std::string(kSearchTag), std::string(kFinalTag)};
    const std::string out = client_->complete(turns, kStops);
    for (const auto& line : split_lines(out)) {
        if (starts_with_tag(line, kThinkTag)) {
            std::string q = after_tag(line, kThinkTag);
            if (!q.empty()) return PolicyDecision{PolicyDecision::Kind::SubQuery, std::move(q), 0.0};
        }
    }
    return PolicyDecision{PolicyDecision::Kind::Stop, "STOP", 0.0};
}

PolicyDecision LlmPolicy::extract_evidence(const PolicyState& state, std::string_view sub_query,
                                           std::span<const RetrievedPassage> retrieved, Rng&) const {
    if (retrieved.empty()) throw NoDocuments("cannot record evidence from an empty retrieval");
    static const Trajectory kEmpty{};
    const Trajectory& history = state.history ? *state.history : kEmpty;
    std::string prefix = render_context(history, retriever_);
    prefix += std::string(kThinkTag) + " " + std::string(sub_query) + "\n";
    prefix += std::string(kSearchTag);
    for (std::size_t i = 0; i < retrieved.size(); ++i) prefix += " [" + std::to_string(i + 1) + "]";
    prefix += "\n" + render_documents(retrieved);
    auto turns = agent_messages(state.question, prefix);
    static const std::vector<std::string> kStops{std::string(kThinkTag), std::string(kSearchTag),
                                                 std::string(kFinalTag)};
    const std::string out = client_->complete(turns, kStops);
    std::string evidence;
    bool tagged = false;
    for (const auto& line : split_lines(out)) {
        if (starts_with_tag(line, kRecordTag)) {
            evidence = after_tag(line, kRecordTag);
            tagged = true;
            break;
        }
    }
    if (!tagged) {
        auto lines = split_lines(out);
        evidence = lines.empty() ? std::string() : trim(lines.front());
    }
    return PolicyDecision{PolicyDecision::Kind::Evidence, std::move(evidence), 0.0};
}

PolicyDecision LlmPolicy::answer(std::string_view question, const Trajectory& trajectory, Rng&) const {
    auto turns = agent_messages(question, render_context(trajectory, retriever_) + std::string(kFinalTag));
    const std::string out = client_->complete(turns);
    auto lines = split_lines(out);
    std::string payload = lines.empty() ? std::string() : trim(lines.front());
    std::vector<std::string> following(lines.size() > 1 ? lines.begin() + 1 : lines.end(), lines.end());
    auto a = extract_final_answer(payload, following);
    return PolicyDecision{PolicyDecision::Kind::Answer, a.value_or(std::string()), 0.0};
}

double LlmPolicy::score_answer(std::string_view question, const Trajectory& trajectory, std::string_view y) const {
    return client_->score_answer_logprob(question, trajectory, y, retriever_);
}

std::string LlmPolicy::rank(std::string_view, std::string_view sub_query,
                            std::span<const RetrievedPassage> retrieved) const {
    std::string user = std::string(kRankInstruction) + "\nSub-query: " + std::string(sub_query) + "\n\n" +
                       render_documents(retrieved);
    std::vector<ChatTurn> turns{{ChatTurn::Role::User, user}};
    return client_->complete(turns);
}

} // namespace exsearch
