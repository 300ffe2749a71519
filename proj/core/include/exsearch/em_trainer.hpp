#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/agent.hpp"
#include "exsearch/policy.hpp"
#include "exsearch/retrieval.hpp"
#include "exsearch/tabular_policy.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

enum class EStepMode { Sampled, ExactEnumeration };
enum class ValidationMetric { Loglik, Em, Acc };

std::string_view to_string(EStepMode mode);
EStepMode e_step_mode_from_string(std::string_view name);
std::string_view to_string(ValidationMetric metric);
ValidationMetric validation_metric_from_string(std::string_view name);

struct TrainConfig {
    int iterations = 5;
    int samples_per_example = 2;
    WeightMode weight_mode = WeightMode::PosteriorLogprob;
    EStepMode e_step_mode = EStepMode::Sampled;
    int early_stop_patience = 1; // 0 disables early stopping
    // Defaults to loglik in exact mode and em in sampled mode.
    std::optional<ValidationMetric> validation_metric;
    double smoothing = 1e-3;
    double enumeration_cap = kDefaultEnumerationCap;
    std::uint64_t seed = 0;
    std::size_t jobs = 0; // 0 = all cores

    ValidationMetric effective_validation_metric() const;
    void validate() const;
};

/// The weighted samples of one training example.
struct WeightedBatch {
    std::string example_id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<WeightedTrajectory> samples;
};

struct EpisodeFailure {
    std::string example_id;
    std::string message;
};

struct EStepResult {
    std::vector<WeightedBatch> batches; // dataset order, failed examples omitted
    std::vector<EpisodeFailure> failures;
};

/// w_j = exp(l_j - max l) / sum_k exp(l_k - max l).
std::vector<double> normalize_weights(std::span<const double> log_weights);

/// Raw log-weight of one sampled trajectory: log p(gold | x, z) under the
/// policy for posterior-logprob (best gold), otherwise the metric r(answer, gold).
double raw_log_weight(WeightMode mode, const Policy& policy, std::string_view question, const Trajectory& trajectory,
                      std::string_view answer, std::span<const std::string> golds);

/// Fills log_weight/weight of every sample in each batch from its raw
/// weights, per example.
void assign_weights(std::vector<WeightedBatch>& batches, WeightMode mode, const Policy* scorer);

/// n episodes per example through the agent loop, weighted per example.
EStepResult e_step_sampled(std::span<const Example> dataset, const Policy& policy, const Retriever& retriever,
                           const AgentConfig& agent, const TrainConfig& config, std::uint64_t seed);

/// Full enumeration with weights equal to the exact posterior p(z | x, y).
EStepResult e_step_exact(std::span<const Example> dataset, const TabularPolicyParams& params,
                         const Retriever& retriever, const TrainConfig& config);

/// Closed-form M-step: every categorical head becomes the smoothed,
/// normalized weighted count of its outcomes. Heads with no weight keep
/// their previous logits. Examples whose samples all sit at the log-prob
/// floor carry no information about the gold answer and are skipped.
TabularPolicyParams m_step_tabular(const TabularPolicyParams& params, const Retriever& retriever,
                                   std::span<const WeightedBatch> batches, double smoothing = 1e-3);

/// Mean over examples of sum_z w(z) [log p(z|x) + log p(y|x,z)].
double compute_elbo(const TabularPolicyParams& params, const Retriever& retriever,
                    std::span<const WeightedBatch> batches);

/// Mean over examples of the entropy of the normalized weights.
double mean_weight_entropy(std::span<const WeightedBatch> batches);

/// Mean exact log p(gold | x) over the dataset (best gold per example).
double mean_exact_loglik(const TabularPolicyParams& params, std::span<const Example> dataset,
                         const Retriever& retriever, double cap = kDefaultEnumerationCap, std::size_t jobs = 0);

struct PolicyScores {
    double em = 0.0;
    double f1 = 0.0;
    double acc = 0.0;
};

/// Monte-Carlo answer metrics: `samples` episodes per example, averaged.
PolicyScores evaluate_policy(const Policy& policy, std::span<const Example> dataset, const Retriever& retriever,
                             const AgentConfig& agent, int samples, std::uint64_t seed, std::size_t jobs = 0);

struct IterationReport {
    int iteration = 0; // 0 is the initial parameters
    double train_loglik = 0.0; // NaN outside exact mode
    double elbo = 0.0;         // NaN for iteration 0
    double validation_score = 0.0;
    double wall_time = 0.0; // seconds
    std::size_t failures = 0;
};

struct TrainResult {
    std::vector<IterationReport> reports;
    TabularPolicyParams params;
    bool stopped_early = false;
};

/// Alternates E- and M-steps for up to config.iterations iterations,
/// stopping once the validation score has not improved for
/// early_stop_patience consecutive iterations. An empty validation set
/// validates on the training set.
TrainResult em_train(std::span<const Example> train, std::span<const Example> validation,
                     const TabularPolicyParams& initial, const Retriever& retriever, const AgentConfig& agent,
                     const TrainConfig& config);

std::string history_csv(std::span<const IterationReport> reports);

/// One JSON line per weighted trajectory, ordered by (example id, sample).
/// Returns the record count; throws IoError.
std::size_t export_weighted_sft(std::span<const WeightedBatch> batches, const std::filesystem::path& path);
std::vector<nlohmann::json> weighted_sft_records(std::span<const WeightedBatch> batches);

/// Warm-up transcripts from annotated examples: each gold sub-query is paired
/// with its retrieval, the gold passage pinned to rank 1 when it exists in
/// the corpus. Throws MissingAnnotation naming the absent field.
std::vector<nlohmann::json> warmup_format(std::span<const Example> examples, const Retriever& retriever,
                                          std::size_t k);

/// Warm-up trajectory for a single example (the transcript source of warmup_format).
Trajectory warmup_trajectory(const Example& example, const Retriever& retriever, std::size_t k);

} // namespace exsearch
