#include "exsearch/em_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "exsearch/errors.hpp"
#include "exsearch/llm_client.hpp"
#include "exsearch/metrics.hpp"
#include "exsearch/parallel.hpp"
#include "exsearch/rng.hpp"
#include "exsearch/transcript.hpp"

namespace exsearch {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> distinct(std::span<const std::string> golds) {
    std::vector<std::string> out;
    for (const auto& g : golds)
        if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    return out;
}

// log p(y in golds | x, z) under the tabular answer head.
double gold_log_prob(const TabularPolicyParams& params, const Trajectory& t, std::span<const std::string> golds) {
    double mass = 0.0;
    for (const auto& [text, p] : answer_distribution(params, t))
        if (std::find(golds.begin(), golds.end(), text) != golds.end()) mass += p;
    return mass > 0.0 ? std::log(mass) : kLogProbFloor;
}

std::string likeliest_gold(const TabularPolicyParams& params, const Trajectory& t, std::span<const std::string> golds) {
    std::string best = golds.empty() ? std::string() : golds.front();
    double best_lp = -std::numeric_limits<double>::infinity();
    for (const auto& g : golds) {
        double lp = answer_log_prob(params, t, g);
        if (lp > best_lp) {
            best_lp = lp;
            best = g;
        }
    }
    return best;
}

bool informative(const WeightedBatch& batch) {
    for (const auto& s : batch.samples)
        if (s.log_weight > kLogProbFloor / 2) return true;
    return false;
}

double entropy(std::span<const WeightedTrajectory> samples) {
    double h = 0.0;
    for (const auto& s : samples)
        if (s.weight > 0.0) h -= s.weight * std::log(s.weight);
    return h;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

std::string_view to_string(EStepMode mode) {
    return mode == EStepMode::Sampled ? "sampled" : "exact-enumeration";
}

EStepMode e_step_mode_from_string(std::string_view name) {
    if (name == "sampled") return EStepMode::Sampled;
    if (name == "exact-enumeration" || name == "exact") return EStepMode::ExactEnumeration;
    throw std::invalid_argument("unknown e_step_mode: " + std::string(name));
}

std::string_view to_string(ValidationMetric metric) {
    switch (metric) {
    case ValidationMetric::Loglik: return "loglik";
    case ValidationMetric::Em: return "em";
    case ValidationMetric::Acc: return "acc";
    }
    return "loglik";
}

ValidationMetric validation_metric_from_string(std::string_view name) {
    if (name == "loglik") return ValidationMetric::Loglik;
    if (name == "em") return ValidationMetric::Em;
    if (name == "acc") return ValidationMetric::Acc;
    throw std::invalid_argument("unknown validation_metric: " + std::string(name));
}

ValidationMetric TrainConfig::effective_validation_metric() const {
    if (validation_metric) return *validation_metric;
    return e_step_mode == EStepMode::ExactEnumeration ? ValidationMetric::Loglik : ValidationMetric::Em;
}

void TrainConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
    if (samples_per_example < 1) throw std::invalid_argument("samples_per_example must be at least 1");
    if (early_stop_patience < 0) throw std::invalid_argument("early_stop_patience must be non-negative");
    if (!(smoothing >= 0.0)) throw std::invalid_argument("smoothing must be non-negative");
    if (e_step_mode == EStepMode::ExactEnumeration && weight_mode != WeightMode::PosteriorLogprob)
        throw std::invalid_argument("exact-enumeration E-step weights by the posterior; use posterior-logprob");
}

std::vector<double> normalize_weights(std::span<const double> log_weights) {
    if (log_weights.empty()) return {};
    const double max = *std::max_element(log_weights.begin(), log_weights.end());
    std::vector<double> out(log_weights.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(log_weights[i] - max);
        sum += out[i];
    }
    for (double& w : out) w /= sum;
    return out;
}

double raw_log_weight(WeightMode mode, const Policy& policy, std::string_view question, const Trajectory& trajectory,
                      std::string_view answer, std::span<const std::string> golds) {
    if (golds.empty()) throw EmptyGolds("example has no gold answers");
    switch (mode) {
    case WeightMode::PosteriorLogprob: {
        std::vector<double> terms;
        for (const auto& g : distinct(golds)) {
            double lp = policy.score_answer(question, trajectory, g);
            if (lp > kLogProbFloor) terms.push_back(lp);
        }
        return terms.empty() ? kLogProbFloor : std::max(kLogProbFloor, log_sum_exp(terms));
    }
    case WeightMode::RewardEm: return exact_match(answer, golds);
    case WeightMode::RewardAcc: return accuracy(answer, golds);
    case WeightMode::RewardF1: return token_f1(answer, golds);
    }
    return 0.0;
}

void assign_weights(std::vector<WeightedBatch>& batches, WeightMode mode, const Policy* scorer) {
    if (mode == WeightMode::PosteriorLogprob && scorer == nullptr)
        throw std::invalid_argument("posterior-logprob weighting needs a scoring policy");
    for (auto& batch : batches) {
        std::vector<double> raw;
        raw.reserve(batch.samples.size());
        for (auto& s : batch.samples) {
            s.log_weight = raw_log_weight(mode, *scorer, batch.question, s.trajectory, s.answer, batch.gold_answers);
            s.weight_mode = mode;
            raw.push_back(s.log_weight);
        }
        auto w = normalize_weights(raw);
        for (std::size_t i = 0; i < w.size(); ++i) batch.samples[i].weight = w[i];
    }
}

EStepResult e_step_sampled(std::span<const Example> dataset, const Policy& policy, const Retriever& retriever,
                           const AgentConfig& agent, const TrainConfig& config, std::uint64_t seed) {
    config.validate();
    const auto n = static_cast<std::size_t>(config.samples_per_example);
    std::vector<std::optional<WeightedBatch>> slots(dataset.size());
    std::vector<std::optional<std::string>> errors(dataset.size());

    parallel_for(dataset.size(), config.jobs, [&](std::size_t i) {
        const Example& ex = dataset[i];
        try {
            WeightedBatch batch{ex.id, ex.question, ex.gold_answers, {}};
            std::vector<double> raw;
            for (std::size_t s = 0; s < n; ++s) {
                Rng rng(episode_seed(seed, ex.id, s));
                Episode ep = run_episode(ex.question, policy, retriever, agent, rng);
                WeightedTrajectory wt;
                wt.id = ex.id;
                wt.sample = static_cast<int>(s);
                wt.log_weight = raw_log_weight(config.weight_mode, policy, ex.question, ep.trajectory, ep.answer,
                                               ex.gold_answers);
                wt.trajectory = std::move(ep.trajectory);
                wt.answer = std::move(ep.answer);
                wt.weight_mode = config.weight_mode;
                raw.push_back(wt.log_weight);
                batch.samples.push_back(std::move(wt));
            }
            auto w = normalize_weights(raw);
            for (std::size_t s = 0; s < n; ++s) batch.samples[s].weight = w[s];
            slots[i] = std::move(batch);
        } catch (const LogprobsUnsupported&) {
            throw;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    EStepResult out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (slots[i]) out.batches.push_back(std::move(*slots[i]));
        if (errors[i]) out.failures.push_back({dataset[i].id, *errors[i]});
    }
    return out;
}

EStepResult e_step_exact(std::span<const Example> dataset, const TabularPolicyParams& params,
                         const Retriever& retriever, const TrainConfig& config) {
    config.validate();
    std::vector<std::optional<WeightedBatch>> slots(dataset.size());
    std::vector<std::optional<std::string>> errors(dataset.size());

    parallel_for(dataset.size(), config.jobs, [&](std::size_t i) {
        const Example& ex = dataset[i];
        try {
            if (ex.gold_answers.empty()) throw EmptyGolds("example " + ex.id + " has no gold answers");
            const auto golds = distinct(ex.gold_answers);
            auto paths = enumerate_search_paths(params, ex.question, retriever, config.enumeration_cap);
            WeightedBatch batch{ex.id, ex.question, ex.gold_answers, {}};
            std::vector<double> raw;
            raw.reserve(paths.size());
            for (std::size_t j = 0; j < paths.size(); ++j) {
                WeightedTrajectory wt;
                wt.id = ex.id;
                wt.sample = static_cast<int>(j);
                const double a = gold_log_prob(params, paths[j].trajectory, golds);
                wt.log_weight = a > kLogProbFloor ? paths[j].log_prob + a : kLogProbFloor;
                wt.answer = likeliest_gold(params, paths[j].trajectory, golds);
                wt.trajectory = std::move(paths[j].trajectory);
                wt.weight_mode = WeightMode::PosteriorLogprob;
                raw.push_back(wt.log_weight);
                batch.samples.push_back(std::move(wt));
            }
            auto w = normalize_weights(raw);
            for (std::size_t j = 0; j < w.size(); ++j) batch.samples[j].weight = w[j];
            slots[i] = std::move(batch);
        } catch (const EnumerationTooLarge&) {
            throw;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    EStepResult out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (slots[i]) out.batches.push_back(std::move(*slots[i]));
        if (errors[i]) out.failures.push_back({dataset[i].id, *errors[i]});
    }
    return out;
}

TabularPolicyParams m_step_tabular(const TabularPolicyParams& params, const Retriever& retriever,
                                   std::span<const WeightedBatch> batches, double smoothing) {
    params.validate();
    if (!(smoothing >= 0.0)) throw std::invalid_argument("smoothing must be non-negative");
    const std::size_t n_think = params.relations.size() + 1;
    std::vector<std::vector<double>> think(params.think_logits.size(), std::vector<double>(n_think, 0.0));
    std::vector<double> record(params.k(), 0.0);
    std::array<double, 2> answer{0.0, 0.0};

    for (const auto& batch : batches) {
        if (!informative(batch)) continue;
        const auto golds = distinct(batch.gold_answers);
        for (const auto& s : batch.samples) {
            if (!(s.weight > 0.0)) continue;
            const double w = s.weight;
            TrajectoryReplay replay = replay_trajectory(params, retriever, s.trajectory);
            for (const auto& [hop, choice] : replay.think) think[static_cast<std::size_t>(hop - 1)][choice] += w;
            for (const auto& positions : replay.record)
                for (const auto& [pos, share] : positions) record[pos] += w * share;

            // Answer credit goes to the choices that produce the target text.
            auto dist = answer_distribution(params, s.trajectory);
            auto is_target = [&](const std::string& text) {
                if (s.weight_mode == WeightMode::PosteriorLogprob)
                    return std::find(golds.begin(), golds.end(), text) != golds.end();
                return text == s.answer;
            };
            double mass = 0.0;
            for (const auto& [text, p] : dist)
                if (is_target(text)) mass += p;
            if (mass > 0.0) {
                for (std::size_t c = 0; c < dist.size(); ++c)
                    if (is_target(dist[c].first)) answer[c] += w * dist[c].second / mass;
            }
        }
    }

    const double tau = params.temperature;
    auto refit = [&](std::span<double> logits, std::span<const double> counts) {
        double total = 0.0;
        for (double c : counts) total += c;
        if (!(total > 0.0)) return;
        const double denom = total + smoothing * static_cast<double>(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            const double p = (counts[i] + smoothing) / denom;
            logits[i] = p > 0.0 ? tau * std::log(p) : kLogProbFloor;
        }
    };

    TabularPolicyParams next = params;
    for (std::size_t h = 0; h < think.size(); ++h) refit(next.think_logits[h], think[h]);
    refit(next.record_logits, record);
    refit(next.answer_logits, answer);
    return next;
}

double compute_elbo(const TabularPolicyParams& params, const Retriever& retriever,
                    std::span<const WeightedBatch> batches) {
    if (batches.empty()) return 0.0;
    double total = 0.0;
    for (const auto& batch : batches) {
        const auto golds = distinct(batch.gold_answers);
        double elbo = 0.0;
        for (const auto& s : batch.samples) {
            if (!(s.weight > 0.0)) continue;
            const double lz = replay_trajectory(params, retriever, s.trajectory).log_prob;
            const double ly = gold_log_prob(params, s.trajectory, golds);
            elbo += s.weight * (lz + ly);
        }
        total += elbo;
    }
    return total / static_cast<double>(batches.size());
}

double mean_weight_entropy(std::span<const WeightedBatch> batches) {
    if (batches.empty()) return 0.0;
    double total = 0.0;
    for (const auto& b : batches) total += entropy(b.samples);
    return total / static_cast<double>(batches.size());
}

double mean_exact_loglik(const TabularPolicyParams& params, std::span<const Example> dataset,
                         const Retriever& retriever, double cap, std::size_t jobs) {
    if (dataset.empty()) return 0.0;
    std::vector<double> values(dataset.size());
    parallel_for(dataset.size(), jobs, [&](std::size_t i) {
        const auto golds = distinct(dataset[i].gold_answers);
        std::vector<double> terms;
        for (const auto& path : enumerate_search_paths(params, dataset[i].question, retriever, cap)) {
            const double a = gold_log_prob(params, path.trajectory, golds);
            if (a > kLogProbFloor) terms.push_back(path.log_prob + a);
        }
        values[i] = std::max(kLogProbFloor, log_sum_exp(terms));
    });
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

PolicyScores evaluate_policy(const Policy& policy, std::span<const Example> dataset, const Retriever& retriever,
                             const AgentConfig& agent, int samples, std::uint64_t seed, std::size_t jobs) {
    if (dataset.empty() || samples < 1) return {};
    std::vector<PolicyScores> per(dataset.size());
    parallel_for(dataset.size(), jobs, [&](std::size_t i) {
        const Example& ex = dataset[i];
        PolicyScores s;
        for (int j = 0; j < samples; ++j) {
            Rng rng(episode_seed(seed, ex.id, static_cast<std::uint64_t>(j)));
            Episode ep = run_episode(ex.question, policy, retriever, agent, rng);
            s.em += exact_match(ep.answer, ex.gold_answers);
            s.f1 += token_f1(ep.answer, ex.gold_answers);
            s.acc += accuracy(ep.answer, ex.gold_answers);
        }
        s.em /= samples;
        s.f1 /= samples;
        s.acc /= samples;
        per[i] = s;
    });
    PolicyScores out;
    for (const auto& s : per) {
        out.em += s.em;
        out.f1 += s.f1;
        out.acc += s.acc;
    }
    const auto n = static_cast<double>(per.size());
    out.em /= n;
    out.f1 /= n;
    out.acc /= n;
    return out;
}

TrainResult em_train(std::span<const Example> train, std::span<const Example> validation,
                     const TabularPolicyParams& initial, const Retriever& retriever, const AgentConfig& agent,
                     const TrainConfig& config) {
    config.validate();
    initial.validate();
    if (train.empty()) throw std::invalid_argument("training set is empty");
    const bool exact = config.e_step_mode == EStepMode::ExactEnumeration;
    AgentConfig loop = agent;
    loop.budget = initial.budget();
    loop.k = initial.k();
    loop.rerank_keep = std::min(loop.rerank_keep, loop.k);
    const auto val_set = validation.empty() ? train : validation;
    const ValidationMetric metric = config.effective_validation_metric();
    const std::uint64_t eval_seed = splitmix64(config.seed ^ 0x5eedULL);

    auto validate_params = [&](const TabularPolicyParams& p) {
        if (metric == ValidationMetric::Loglik)
            return mean_exact_loglik(p, val_set, retriever, config.enumeration_cap, config.jobs);
        TabularPolicy policy(p, retriever);
        auto scores = evaluate_policy(policy, val_set, retriever, loop, config.samples_per_example, eval_seed,
                                      config.jobs);
        return metric == ValidationMetric::Em ? scores.em : scores.acc;
    };
    auto train_loglik = [&](const TabularPolicyParams& p) {
        return exact ? mean_exact_loglik(p, train, retriever, config.enumeration_cap, config.jobs) : kNaN;
    };

    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    result.params = initial;
    double best = validate_params(initial);
    result.reports.push_back({0, train_loglik(initial), kNaN, best, seconds_since(start), 0});

    int stale = 0;
    for (int it = 1; it <= config.iterations; ++it) {
        EStepResult e;
        if (exact) {
            e = e_step_exact(train, result.params, retriever, config);
        } else {
            TabularPolicy policy(result.params, retriever);
            e = e_step_sampled(train, policy, retriever, loop, config,
                               splitmix64(config.seed + static_cast<std::uint64_t>(it)));
        }
        const double elbo = compute_elbo(result.params, retriever, e.batches);
        result.params = m_step_tabular(result.params, retriever, e.batches, config.smoothing);
        const double score = validate_params(result.params);
        result.reports.push_back({it, train_loglik(result.params), elbo, score, seconds_since(start),
                                  e.failures.size()});
        if (score > best) {
            best = score;
            stale = 0;
        } else if (config.early_stop_patience > 0 && ++stale >= config.early_stop_patience) {
            result.stopped_early = it < config.iterations;
            break;
        }
    }
    return result;
}

std::string history_csv(std::span<const IterationReport> reports) {
    std::string out = "iteration,train_loglik,elbo,validation_score,wall_time\n";
    for (const auto& r : reports)
        out += fmt::format("{},{:.12g},{:.12g},{:.12g},{:.6f}\n", r.iteration, r.train_loglik, r.elbo,
                           r.validation_score, r.wall_time);
    return out;
}

std::vector<nlohmann::json> weighted_sft_records(std::span<const WeightedBatch> batches) {
    struct Item {
        const WeightedBatch* batch;
        const WeightedTrajectory* sample;
    };
    std::vector<Item> items;
    for (const auto& b : batches)
        for (const auto& s : b.samples) items.push_back({&b, &s});
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.sample->id != b.sample->id) return a.sample->id < b.sample->id;
        return a.sample->sample < b.sample->sample;
    });

    const std::string system = build_system_prompt();
    std::vector<nlohmann::json> out;
    out.reserve(items.size());
    for (const auto& [batch, s] : items) {
        const std::string question = s->trajectory.question.empty() ? batch->question : s->trajectory.question;
        nlohmann::json messages = nlohmann::json::array(
            {{{"role", "system"}, {"content", system}},
             {{"role", "user"}, {"content", build_user_turn(question)}},
             {{"role", "assistant"}, {"content", render_transcript(s->trajectory, s->answer)}}});
        nlohmann::json metrics = {{"em", 0}, {"f1", 0.0}, {"acc", 0}};
        if (!batch->gold_answers.empty()) {
            metrics = {{"em", exact_match(s->answer, batch->gold_answers)},
                       {"f1", token_f1(s->answer, batch->gold_answers)},
                       {"acc", accuracy(s->answer, batch->gold_answers)}};
        }
        out.push_back({{"id", s->id},
                       {"sample", s->sample},
                       {"messages", std::move(messages)},
                       {"answer", s->answer},
                       {"weight", s->weight},
                       {"log_weight", s->log_weight},
                       {"weight_mode", to_string(s->weight_mode)},
                       {"metrics", std::move(metrics)}});
    }
    return out;
}

std::size_t export_weighted_sft(std::span<const WeightedBatch> batches, const std::filesystem::path& path) {
    auto records = weighted_sft_records(batches);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& r : records) out << r.dump() << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
    return records.size();
}

Trajectory warmup_trajectory(const Example& example, const Retriever& retriever, std::size_t k) {
    if (!example.gold_subqueries) throw MissingAnnotation("example " + example.id + " lacks gold_subqueries");
    if (example.gold_answers.empty()) throw MissingAnnotation("example " + example.id + " lacks gold_answers");
    const auto& subqueries = *example.gold_subqueries;
    Trajectory t;
    t.question = example.question;
    t.budget = std::max<int>(5, static_cast<int>(subqueries.size()));
    t.terminated = true;
    for (std::size_t i = 0; i < subqueries.size(); ++i) {
        Step step;
        step.hop = static_cast<int>(i) + 1;
        step.sub_query = subqueries[i];
        auto hits = retriever.size() > 0 ? retriever.retrieve(step.sub_query, k) : std::vector<ScoredPassage>{};
        if (example.gold_passages && i < example.gold_passages->size()) {
            const std::string& gold = (*example.gold_passages)[i];
            if (retriever.passage(gold) != nullptr) {
                double score = 0.0;
                auto it = std::find_if(hits.begin(), hits.end(), [&](const ScoredPassage& h) { return h.id == gold; });
                if (it != hits.end()) {
                    score = it->score;
                    hits.erase(it);
                }
                hits.insert(hits.begin(), ScoredPassage{gold, score, 1});
                if (hits.size() > k) hits.resize(k);
            }
        }
        for (std::size_t r = 0; r < hits.size(); ++r) hits[r].rank = static_cast<int>(r) + 1;
        step.retrieved = std::move(hits);

        if (example.gold_evidence && i < example.gold_evidence->size()) {
            step.evidence = (*example.gold_evidence)[i];
        } else if (i + 1 == subqueries.size()) {
            step.evidence = example.gold_answers.front();
        } else if (example.gold_passages && i + 1 < example.gold_passages->size()) {
            if (const Passage* next = retriever.passage((*example.gold_passages)[i + 1])) step.evidence = next->title;
        }
        t.steps.push_back(std::move(step));
    }
    return t;
}

std::vector<nlohmann::json> warmup_format(std::span<const Example> examples, const Retriever& retriever,
                                          std::size_t k) {
    const std::string system = build_system_prompt();
    std::vector<nlohmann::json> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        Trajectory t = warmup_trajectory(ex, retriever, k);
        const std::string& answer = ex.gold_answers.front();
        nlohmann::json messages = nlohmann::json::array(
            {{{"role", "system"}, {"content", system}},
             {{"role", "user"}, {"content", build_user_turn(ex.question)}},
             {{"role", "assistant"}, {"content", render_transcript(t, answer)}}});
        out.push_back({{"id", ex.id}, {"messages", std::move(messages)}, {"answer", answer}});
    }
    return out;
}

} // namespace exsearch
